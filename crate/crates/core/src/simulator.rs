//! Synthetic multi-year, multi-vehicle portfolios generated from known
//! frequency/severity parameters and experience-rating dynamics.
//!
//! Every policy is an independent random stream: vehicles enter and lapse,
//! claim counts are Poisson with mean `d · exp(Xβ + γ₀ ℓ)` and each claim cost
//! is gamma with mean `exp(Xβ_Z + γ₀^Z ℓ^Z)`. Levels follow the windowed BMS
//! recursion driven by the policy's realized yearly claim totals.

use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::{bms_level, BmsStructure, ClaimRecord, ContractRecord, Portfolio, ScopeSummary};

/// How one covariate is drawn for a new vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSpec {
    /// Uniform on `[low, high)`, then increased by `yearly_increment` every year.
    Uniform {
        name: String,
        low: f64,
        high: f64,
        yearly_increment: f64,
    },
    Bernoulli { name: String, p: f64 },
}

impl CovariateSpec {
    pub fn name(&self) -> &str {
        match self {
            Self::Uniform { name, .. } | Self::Bernoulli { name, .. } => name,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Uniform { low, high, .. } => {
                // one decimal keeps the CSV files compact
                (rng.random_range(*low..*high) * 10.0).round() / 10.0
            }
            Self::Bernoulli { p, .. } => f64::from(u8::from(rng.random_bool(*p))),
        }
    }

    fn increment(&self) -> f64 {
        match self {
            Self::Uniform { yearly_increment, .. } => *yearly_increment,
            Self::Bernoulli { .. } => 0.0,
        }
    }
}

/// Effect of the policy's past claims on a mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    None,
    /// `exp(γ₀ ℓ)` with `ℓ` the BMS level.
    Bms { structure: BmsStructure, gamma0: f64 },
    /// `exp(−γ₀ κ•• + γ₁ n••)`.
    KappaN { gamma0: f64, gamma1: f64 },
}

impl Dynamics {
    /// Log-scale effect and the level recorded in the truth file.
    fn effect(&self, scope: &ScopeSummary) -> (f64, f64) {
        match self {
            Self::None => (0.0, 100.0),
            Self::Bms { structure, gamma0 } => {
                let l = bms_level(scope, structure) as f64;
                (gamma0 * l, l)
            }
            Self::KappaN { gamma0, gamma1 } => {
                let k = scope.kappa_dotdot as f64;
                let n = scope.n_dotdot as f64;
                let psi = if *gamma0 != 0.0 { gamma1 / gamma0 } else { 0.0 };
                (-gamma0 * k + gamma1 * n, 100.0 - k + psi * n)
            }
        }
    }
}

const PILOT_POLICIES: usize = 5_000;
/// Expected claims of one contract beyond which a simulation is abandoned.
const MAX_CONTRACT_FREQUENCY: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSpec {
    pub n_policies: usize,
    pub years: u32,
    pub start_year: i32,
    /// Leading years that only build claims history.
    pub burn_in_years: u32,
    pub window_years: u32,
    /// Probabilities of 1, 2 and 3 vehicles at policy entry.
    pub vehicle_count_distribution: [f64; 3],
    pub covariates: Vec<CovariateSpec>,
    /// Intercept followed by one coefficient per covariate.
    pub true_beta_freq: Vec<f64>,
    pub true_beta_sev: Vec<f64>,
    pub freq_dynamics: Dynamics,
    pub sev_dynamics: Dynamics,
    pub gamma_shape: f64,
    /// Claims per exposure year over the modelling years.
    pub base_frequency: f64,
    /// Mean cost per claim over the modelling years.
    pub base_severity: f64,
    /// Re-centre both intercepts so the modelling years hit the two targets above.
    pub calibrate_intercepts: bool,
    /// Per vehicle-year probability that the vehicle leaves.
    pub lapse_rate: f64,
    /// Per policy-year probability that a vehicle is added.
    pub addition_rate: f64,
    /// Share of policies entering after the first year (uniform over later years).
    pub entry_share: f64,
    /// Probability that a contract covers only part of the year.
    pub short_term_rate: f64,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        let unif = |name: &str, low, high, inc| CovariateSpec::Uniform {
            name: name.into(),
            low,
            high,
            yearly_increment: inc,
        };
        let bern = |name: &str, p| CovariateSpec::Bernoulli { name: name.into(), p };
        Self {
            n_policies: 50_000,
            years: 13,
            start_year: 2010,
            burn_in_years: 6,
            window_years: 6,
            vehicle_count_distribution: [0.45, 0.40, 0.15],
            covariates: vec![
                unif("driver_age", 18.0, 75.0, 1.0),
                bern("male", 0.5),
                bern("urban", 0.4),
                unif("vehicle_age", 0.0, 10.0, 1.0),
            ],
            // intercepts sit on the level scale: exp(γ₀ ℓ) is about exp(9.1) near ℓ = 97
            true_beta_freq: vec![-12.5, -0.012, 0.10, 0.30, -0.02],
            true_beta_sev: vec![6.4, 0.003, 0.05, 0.12, -0.03],
            freq_dynamics: Dynamics::Bms {
                structure: BmsStructure {
                    psi: 3,
                    l_min: Some(95),
                    l_max: Some(106),
                    l_start: 100,
                },
                gamma0: 0.094,
            },
            sev_dynamics: Dynamics::Bms {
                structure: BmsStructure {
                    psi: 2,
                    l_min: Some(94),
                    l_max: Some(100),
                    l_start: 100,
                },
                gamma0: 0.026,
            },
            gamma_shape: 1.5,
            base_frequency: 0.02,
            base_severity: 7500.0,
            calibrate_intercepts: true,
            lapse_rate: 0.10,
            addition_rate: 0.08,
            entry_share: 0.4,
            short_term_rate: 0.08,
            seed: 1,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.n_policies == 0 || self.years == 0 {
            return bad("n_policies and years must be positive".into());
        }
        if self.burn_in_years >= self.years {
            return bad(format!("burn-in of {} years leaves no modelling year out of {}", self.burn_in_years, self.years));
        }
        if self.window_years == 0 {
            return bad("window_years must be positive".into());
        }
        let probs = self.vehicle_count_distribution;
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("vehicle_count_distribution {probs:?} is not a distribution"));
        }
        let k = self.covariates.len() + 1;
        if self.true_beta_freq.len() != k || self.true_beta_sev.len() != k {
            return bad(format!("coefficient vectors need {k} entries (intercept + covariates)"));
        }
        for c in &self.covariates {
            match c {
                CovariateSpec::Uniform { low, high, .. } if !(low < high) => {
                    return bad(format!("covariate {}: empty range", c.name()))
                }
                CovariateSpec::Bernoulli { p, .. } if !(0.0..=1.0).contains(p) => {
                    return bad(format!("covariate {}: probability {p}", c.name()))
                }
                _ => {}
            }
        }
        for d in [&self.freq_dynamics, &self.sev_dynamics] {
            if let Dynamics::Bms { structure, .. } = d {
                structure.validate()?;
            }
        }
        for (name, v) in [
            ("lapse_rate", self.lapse_rate),
            ("addition_rate", self.addition_rate),
            ("entry_share", self.entry_share),
            ("short_term_rate", self.short_term_rate),
        ] {
            if !(0.0..=1.0).contains(&v) || (name == "lapse_rate" && v >= 1.0) {
                return bad(format!("{name} = {v} outside its range"));
            }
        }
        if !(self.gamma_shape > 0.0 && self.base_frequency > 0.0 && self.base_severity > 0.0) {
            return bad("gamma_shape, base_frequency and base_severity must be positive".into());
        }
        Ok(())
    }

    pub fn first_modelling_year(&self) -> i32 {
        self.start_year + self.burn_in_years as i32
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.iter().map(|c| c.name().to_string()).collect()
    }
}

/// Latent quantities of one simulated contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub policy_id: String,
    pub vehicle_id: String,
    pub contract_index: u32,
    pub true_level_freq: f64,
    pub true_level_sev: f64,
    /// Expected claim count including exposure.
    pub true_mean_freq: f64,
    pub true_mean_sev: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub portfolio: Portfolio,
    /// Aligned with `portfolio.contracts()`.
    pub truth: Vec<TruthRecord>,
    /// Coefficients actually used, after intercept calibration.
    pub beta_freq: Vec<f64>,
    pub beta_sev: Vec<f64>,
}

impl SimOutput {
    pub fn write_truth(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for t in &self.truth {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct PolicyDraw {
    contracts: Vec<ContractRecord>,
    claims: Vec<ClaimRecord>,
    truth: Vec<TruthRecord>,
    exploded: bool,
}

struct Vehicle {
    id: u32,
    covariates: Vec<f64>,
}

fn dot(beta: &[f64], x: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

fn simulate_policy(spec: &SimSpec, index: usize, beta_freq: &[f64], beta_sev: &[f64]) -> PolicyDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let policy_id = (index + 1).to_string();
    let entry = if rng.random_bool(spec.entry_share) && spec.years > 1 {
        rng.random_range(1..spec.years)
    } else {
        0
    };
    let day_of_year = rng.random_range(0..365u32);
    let draw_count = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.random();
        let p = spec.vehicle_count_distribution;
        if u < p[0] {
            1
        } else if u < p[0] + p[1] {
            2
        } else {
            3
        }
    };
    let new_vehicle = |rng: &mut ChaCha8Rng, id: u32| Vehicle {
        id,
        covariates: spec.covariates.iter().map(|c| c.draw(rng)).collect(),
    };
    let mut next_id = 1;
    let mut vehicles: Vec<Vehicle> = (0..draw_count(&mut rng))
        .map(|_| {
            next_id += 1;
            new_vehicle(&mut rng, next_id - 1)
        })
        .collect();

    let mut out = PolicyDraw {
        contracts: Vec::new(),
        claims: Vec::new(),
        truth: Vec::new(),
        exploded: false,
    };
    let mut history: Vec<u32> = Vec::new();
    let w = spec.window_years as usize;
    for year_offset in entry..spec.years {
        if year_offset > entry {
            vehicles.retain(|_| !rng.random_bool(spec.lapse_rate));
            if rng.random_bool(spec.addition_rate) {
                next_id += 1;
                vehicles.push(new_vehicle(&mut rng, next_id - 1));
            }
            if vehicles.is_empty() {
                break;
            }
            let incs: Vec<f64> = spec.covariates.iter().map(CovariateSpec::increment).collect();
            for v in &mut vehicles {
                for (x, inc) in v.covariates.iter_mut().zip(&incs) {
                    *x += inc;
                }
            }
        }
        let year = spec.start_year + year_offset as i32;
        let t = year_offset - entry + 1;
        let start = history.len().saturating_sub(w);
        let scope = ScopeSummary::from_history(&history[start..]);
        let (freq_effect, level_freq) = spec.freq_dynamics.effect(&scope);
        let (sev_effect, level_sev) = spec.sev_dynamics.effect(&scope);
        let date = NaiveDate::from_yo_opt(year, day_of_year + 1).expect("valid ordinal day");
        let mut total = 0;
        for v in &vehicles {
            let exposure = if rng.random_bool(spec.short_term_rate) {
                (rng.random_range(0.1..1.0f64) * 1000.0).round() / 1000.0
            } else {
                1.0
            };
            let mean_freq = exposure * (dot(beta_freq, &v.covariates) + freq_effect).exp();
            let mean_sev = (dot(beta_sev, &v.covariates) + sev_effect).exp();
            if mean_freq > MAX_CONTRACT_FREQUENCY {
                out.exploded = true;
                return out;
            }
            let n = Poisson::new(mean_freq).map_or(0.0, |p| p.sample(&mut rng)) as u32;
            let sev = Gamma::new(spec.gamma_shape, mean_sev / spec.gamma_shape).expect("positive parameters");
            for k in 1..=n {
                let cost = (sev.sample(&mut rng) * 100.0).round().max(1.0) / 100.0;
                out.claims.push(ClaimRecord {
                    policy_id: policy_id.clone(),
                    vehicle_id: v.id.to_string(),
                    contract_index: t,
                    claim_ordinal: k,
                    cost,
                });
            }
            total += n;
            out.contracts.push(ContractRecord {
                policy_id: policy_id.clone(),
                vehicle_id: v.id.to_string(),
                contract_index: t,
                effective_date: date,
                exposure,
                covariates: v.covariates.clone(),
                claim_count: n,
                calendar_year: year,
            });
            out.truth.push(TruthRecord {
                policy_id: policy_id.clone(),
                vehicle_id: v.id.to_string(),
                contract_index: t,
                true_level_freq: level_freq,
                true_level_sev: level_sev,
                true_mean_freq: mean_freq,
                true_mean_sev: mean_sev,
            });
        }
        history.push(total);
    }
    out
}

fn run(spec: &SimSpec, beta_freq: &[f64], beta_sev: &[f64]) -> Result<Vec<PolicyDraw>> {
    let draws: Vec<PolicyDraw> = (0..spec.n_policies)
        .into_par_iter()
        .map(|i| simulate_policy(spec, i, beta_freq, beta_sev))
        .collect();
    if let Some(i) = draws.iter().position(|d| d.exploded) {
        return Err(Error::Divergence(format!(
            "expected claims of policy {} exceed {MAX_CONTRACT_FREQUENCY} per contract: \
             the experience dynamics feed back without bound at this frequency",
            i + 1
        )));
    }
    Ok(draws)
}

/// Realized claim frequency and mean severity over the modelling years.
fn modelling_averages(spec: &SimSpec, draws: &[PolicyDraw]) -> (f64, f64) {
    let first = spec.first_modelling_year();
    let (mut n, mut d, mut cost, mut claims) = (0u64, 0.0, 0.0, 0u64);
    for p in draws {
        let mut j = 0;
        for c in &p.contracts {
            let these = &p.claims[j..j + c.claim_count as usize];
            j += c.claim_count as usize;
            if c.calendar_year >= first {
                n += c.claim_count as u64;
                d += c.exposure;
                cost += these.iter().map(|k| k.cost).sum::<f64>();
                claims += c.claim_count as u64;
            }
        }
    }
    (n as f64 / d, if claims > 0 { cost / claims as f64 } else { f64::NAN })
}

/// Expected modelling-year frequency and severity, from the latent means.
fn expected_averages(spec: &SimSpec, draws: &[PolicyDraw]) -> (f64, f64) {
    let first = spec.first_modelling_year();
    let (mut m, mut d, mut s) = (0.0, 0.0, 0.0);
    for p in draws {
        for (c, t) in p.contracts.iter().zip(&p.truth) {
            if c.calendar_year >= first {
                m += t.true_mean_freq;
                d += c.exposure;
                s += t.true_mean_freq * t.true_mean_sev;
            }
        }
    }
    (m / d, s / m)
}

pub fn simulate_portfolio(spec: &SimSpec) -> Result<SimOutput> {
    spec.validate()?;
    let mut beta_freq = spec.true_beta_freq.clone();
    let mut beta_sev = spec.true_beta_sev.clone();
    if spec.calibrate_intercepts {
        // the latent means respond smoothly to the intercepts, so a few
        // multiplicative corrections on a pilot subsample settle quickly
        let pilot = SimSpec {
            n_policies: spec.n_policies.min(PILOT_POLICIES),
            ..spec.clone()
        };
        for _ in 0..4 {
            let draws = run(&pilot, &beta_freq, &beta_sev)?;
            let (f, s) = expected_averages(spec, &draws);
            if !(f > 0.0 && s > 0.0) {
                return Err(Error::Argument("no modelling-year contracts were generated".into()));
            }
            beta_freq[0] += (spec.base_frequency / f).ln();
            beta_sev[0] += (spec.base_severity / s).ln();
        }
    }
    let draws = run(spec, &beta_freq, &beta_sev)?;
    let (f, s) = modelling_averages(spec, &draws);
    log::info!("simulated modelling-year frequency {f:.5}, severity {s:.1}");

    let mut contracts = Vec::new();
    let mut claims = Vec::new();
    let mut truth = Vec::new();
    for p in draws {
        contracts.extend(p.contracts);
        claims.extend(p.claims);
        truth.extend(p.truth);
    }
    let portfolio = Portfolio::new(contracts, claims, spec.covariate_names())?;
    // Portfolio::new sorts; realign the truth rows the same way
    let mut truth_sorted = Vec::with_capacity(truth.len());
    let mut by_key: std::collections::HashMap<(String, String, u32), TruthRecord> = truth
        .into_iter()
        .map(|t| ((t.policy_id.clone(), t.vehicle_id.clone(), t.contract_index), t))
        .collect();
    for c in portfolio.contracts() {
        let t = by_key
            .remove(&(c.policy_id.clone(), c.vehicle_id.clone(), c.contract_index))
            .expect("one truth row per contract");
        truth_sorted.push(t);
    }
    Ok(SimOutput {
        portfolio,
        truth: truth_sorted,
        beta_freq,
        beta_sev,
    })
}
