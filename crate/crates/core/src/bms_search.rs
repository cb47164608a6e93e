//! Experience-rated models of frequency, severity and loss cost: the standard
//! model (covariates only), the Kappa-N model (κ•• and n•• as two covariates)
//! and the BMS model (one level column), whose structure `(Ψ, ℓ_min, ℓ_max)`
//! is estimated by profile likelihood over a grid.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, INTERCEPT};
use crate::elasticnet::{cv_select, CvConfig, EnetConfig, PenalizedData, PenalizedFamily};
use crate::error::{Error, Result};
use crate::glm::{fit_gamma_from, fit_poisson_from, gamma_loglik, poisson_loglik, GlmFit};
use crate::irls::IrlsConfig;
use crate::portfolio::{bms_level, compute_scope, BmsStructure, ContractKey, Portfolio, ScopeSummary};
use crate::tweedie::{
    cpg_to_tweedie, default_power_grid, fit_dglm, joint_log_density, power_from_shape, select_p, DglmFit,
    TweedieObservation, WeightRule,
};

pub const KAPPA: &str = "kappa";
pub const N_CLAIMS: &str = "n";
pub const LEVEL: &str = "level";
pub const LEVEL_FREQ: &str = "level_freq";
pub const LEVEL_SEV: &str = "level_sev";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Claim counts, Poisson.
    Frequency,
    /// Individual claim costs, gamma.
    Severity,
    /// Annual amounts, Tweedie double GLM.
    LossCost,
}

impl Target {
    pub fn family_name(self) -> &'static str {
        match self {
            Target::Frequency => "poisson",
            Target::Severity => "gamma",
            Target::LossCost => "tweedie",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Standard,
    KappaN,
    Bms,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Standard => "standard",
            ModelKind::KappaN => "kappa_n",
            ModelKind::Bms => "bms",
        }
    }
}

/// Columns describing past claims appended after the covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experience {
    None,
    /// `kappa` and `n` columns.
    KappaN,
    /// One `level` column.
    Level { structure: BmsStructure },
    /// `level_freq` and `level_sev` columns of a compound Poisson-gamma pair.
    TwoLevels { freq: BmsStructure, sev: BmsStructure },
}

impl Experience {
    fn labels(&self) -> Vec<&'static str> {
        match self {
            Experience::None => vec![],
            Experience::KappaN => vec![KAPPA, N_CLAIMS],
            Experience::Level { .. } => vec![LEVEL],
            Experience::TwoLevels { .. } => vec![LEVEL_FREQ, LEVEL_SEV],
        }
    }

    fn push_values(&self, scope: &ScopeSummary, out: &mut Vec<f64>) {
        match self {
            Experience::None => {}
            Experience::KappaN => {
                out.push(scope.kappa_dotdot as f64);
                out.push(scope.n_dotdot as f64);
            }
            Experience::Level { structure } => out.push(bms_level(scope, structure) as f64),
            Experience::TwoLevels { freq, sev } => {
                out.push(bms_level(scope, freq) as f64);
                out.push(bms_level(scope, sev) as f64);
            }
        }
    }
}

/// Model-ready view of a portfolio: covariates, responses and scope summaries
/// of the contracts retained for fitting, plus their claims.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub covariate_names: Vec<String>,
    /// Row-major, one row of covariates per retained contract.
    covariates: Vec<f64>,
    pub keys: Vec<ContractKey>,
    pub calendar_years: Vec<i32>,
    pub exposure: Vec<f64>,
    pub counts: Vec<u32>,
    pub losses: Vec<f64>,
    pub scopes: Vec<ScopeSummary>,
    /// Dense policy number per contract row.
    pub groups: Vec<usize>,
    /// Contract row of every claim.
    pub claim_rows: Vec<usize>,
    pub claim_costs: Vec<f64>,
    pub window_years: u32,
}

impl ModelData {
    /// Scope variables use the whole history; only contracts with
    /// `calendar_year ≥ min_year` are retained as observations.
    pub fn new(portfolio: &Portfolio, window_years: u32, min_year: Option<i32>) -> Result<Self> {
        let scopes = compute_scope(portfolio, window_years)?;
        let groups_all = portfolio.policy_groups();
        let k = portfolio.covariate_names().len();
        let mut data = ModelData {
            covariate_names: portfolio.covariate_names().to_vec(),
            covariates: Vec::new(),
            keys: Vec::new(),
            calendar_years: Vec::new(),
            exposure: Vec::new(),
            counts: Vec::new(),
            losses: Vec::new(),
            scopes: Vec::new(),
            groups: Vec::new(),
            claim_rows: Vec::new(),
            claim_costs: Vec::new(),
            window_years,
        };
        let mut last_group = usize::MAX;
        let mut dense = 0usize;
        for (i, (c, scope)) in portfolio.contracts().iter().zip(scopes).enumerate() {
            if min_year.is_some_and(|y| c.calendar_year < y) {
                continue;
            }
            if groups_all[i] != last_group {
                if last_group != usize::MAX {
                    dense += 1;
                }
                last_group = groups_all[i];
            }
            let row = data.exposure.len();
            debug_assert_eq!(c.covariates.len(), k);
            data.covariates.extend_from_slice(&c.covariates);
            data.keys.push(c.key());
            data.calendar_years.push(c.calendar_year);
            data.exposure.push(c.exposure);
            data.counts.push(c.claim_count);
            data.losses.push(portfolio.loss_of(i));
            data.scopes.push(scope);
            data.groups.push(dense);
            for claim in portfolio.claims_of(i) {
                data.claim_rows.push(row);
                data.claim_costs.push(claim.cost);
            }
        }
        if data.exposure.is_empty() {
            return Err(Error::argument("no contracts left to model"));
        }
        Ok(data)
    }

    pub fn n_contracts(&self) -> usize {
        self.exposure.len()
    }

    pub fn n_claims(&self) -> usize {
        self.claim_costs.len()
    }

    fn covariate_row(&self, i: usize) -> &[f64] {
        let k = self.covariate_names.len();
        &self.covariates[i * k..(i + 1) * k]
    }

    fn covariate_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.covariate_names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::Schema(format!("unknown covariate {n}")))
            })
            .collect()
    }

    /// Design over contract rows, or over claim rows when `per_claim`.
    pub fn design(&self, covariates: &[String], experience: &Experience, per_claim: bool) -> Result<DesignMatrix<f64>> {
        let idx = self.covariate_indices(covariates)?;
        let mut labels = vec![INTERCEPT.to_string()];
        labels.extend(covariates.iter().cloned());
        labels.extend(experience.labels().iter().map(|s| s.to_string()));
        let rows: Box<dyn Iterator<Item = usize>> = if per_claim {
            Box::new(self.claim_rows.iter().copied())
        } else {
            Box::new(0..self.n_contracts())
        };
        let mut values = Vec::with_capacity(labels.len() * if per_claim { self.n_claims() } else { self.n_contracts() });
        for i in rows {
            values.push(1.0);
            let x = self.covariate_row(i);
            values.extend(idx.iter().map(|&j| x[j]));
            experience.push_values(&self.scopes[i], &mut values);
        }
        DesignMatrix::new(labels, values).map_err(|e| match e {
            // an all-zero experience column (say, no claims anywhere) is a data problem
            Error::Argument(m) => Error::Argument(format!("cannot build the design: {m}")),
            other => other,
        })
    }

    /// Tweedie observations at variance power `p` with weights `d^{p−1}`.
    pub fn tweedie_observations(&self, p: f64) -> Result<Vec<TweedieObservation<f64>>> {
        self.losses
            .iter()
            .zip(&self.counts)
            .zip(&self.exposure)
            .map(|((&y, &n), &d)| TweedieObservation::with_default_weight(y, n, d, p))
            .collect()
    }

    /// Past policy-years per contract (for insured-type classification).
    pub fn past_contracts(&self) -> Vec<u32> {
        self.scopes.iter().map(|s| s.experience_years).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnerFit {
    Glm(GlmFit<f64>),
    Dglm(DglmFit<f64>),
}

impl InnerFit {
    pub fn loglik(&self) -> f64 {
        match self {
            InnerFit::Glm(f) => f.loglik,
            InnerFit::Dglm(f) => f.loglik,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            InnerFit::Glm(f) => f.n_params,
            InnerFit::Dglm(f) => f.n_params,
        }
    }

    /// Mean-model coefficient by label.
    pub fn coefficient(&self, label: &str) -> Option<f64> {
        match self {
            InnerFit::Glm(f) => f.coefficient(label),
            InnerFit::Dglm(f) => f.mean_coefficient(label),
        }
    }

    fn dropped(&self) -> &[String] {
        match self {
            InnerFit::Glm(f) => &f.dropped,
            InnerFit::Dglm(f) => &f.dropped,
        }
    }
}

/// One structure candidate of the profile search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub psi: u32,
    pub l_min: i64,
    pub l_max: i64,
    pub loglik: f64,
    pub n_params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub target: Target,
    pub kind: ModelKind,
    pub covariates: Vec<String>,
    pub experience: Experience,
    pub fit: InnerFit,
    /// Inner parameters plus three structural ones for a searched scale.
    pub n_params: usize,
    pub loglik: f64,
    pub n_obs: usize,
    pub window_years: u32,
    pub profile: Vec<ProfileRow>,
    pub warnings: Vec<String>,
}

impl FittedModel {
    pub fn structure(&self) -> Option<BmsStructure> {
        match self.experience {
            Experience::Level { structure } => Some(structure),
            _ => None,
        }
    }

    /// `γ₀`: the level coefficient, or minus the κ coefficient for Kappa-N.
    pub fn gamma0(&self) -> Option<f64> {
        match self.experience {
            Experience::KappaN => self.fit.coefficient(KAPPA).map(|c| -c),
            Experience::Level { .. } => self.fit.coefficient(LEVEL),
            _ => None,
        }
    }

    /// `γ₁`, the Kappa-N coefficient of `n••`.
    pub fn gamma1(&self) -> Option<f64> {
        match self.experience {
            Experience::KappaN => self.fit.coefficient(N_CLAIMS),
            _ => None,
        }
    }

    /// Jump parameter: `γ₁/γ₀` for Kappa-N, the structural `Ψ` for BMS.
    pub fn psi(&self) -> Option<f64> {
        match self.experience {
            Experience::KappaN => Some(kappa_n_psi(self.gamma0()?, self.gamma1()?)),
            Experience::Level { structure } => Some(structure.psi as f64),
            _ => None,
        }
    }

    fn designs(&self, data: &ModelData) -> Result<DesignMatrix<f64>> {
        data.design(&self.covariates, &self.experience, self.target == Target::Severity)
    }

    /// Log-likelihood of `data` at the fitted parameters (training structure, data's own histories).
    pub fn loglik_on(&self, data: &ModelData) -> Result<f64> {
        let design = self.designs(data)?;
        match &self.fit {
            InnerFit::Glm(f) => {
                check_labels(&f.labels, design.labels())?;
                let eta = design.linear_predictor(&f.beta);
                Ok(match self.target {
                    Target::Frequency => {
                        let mu: Vec<f64> = eta.iter().zip(&data.exposure).map(|(e, d)| d * e.exp()).collect();
                        poisson_loglik(&data.counts, &mu)
                    }
                    _ => {
                        let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
                        gamma_loglik(&data.claim_costs, &mu, f.shape.expect("gamma fit has a shape"))
                    }
                })
            }
            InnerFit::Dglm(f) => {
                let obs = data.tweedie_observations(f.p)?;
                f.loglik_on(&design, &design, &obs)
            }
        }
    }

    /// Expected value per contract row: claim count, mean claim cost, or annual amount.
    pub fn predict_contracts(&self, data: &ModelData) -> Result<Vec<f64>> {
        let design = data.design(&self.covariates, &self.experience, false)?;
        let (labels, beta) = match &self.fit {
            InnerFit::Glm(f) => (&f.labels, &f.beta),
            InnerFit::Dglm(f) => (&f.mean_labels, &f.beta_mean),
        };
        check_labels(labels, design.labels())?;
        let eta = design.linear_predictor(beta);
        Ok(match self.target {
            Target::Severity => eta.iter().map(|e| e.exp()).collect(),
            _ => eta.iter().zip(&data.exposure).map(|(e, d)| d * e.exp()).collect(),
        })
    }
}

fn check_labels(fitted: &[String], design: &[String]) -> Result<()> {
    if fitted != design {
        return Err(Error::Schema(format!("fitted columns {fitted:?} differ from data columns {design:?}")));
    }
    Ok(())
}

/// Reporting identity `Ψ = γ₁/γ₀`.
pub fn kappa_n_psi(gamma0: f64, gamma1: f64) -> f64 {
    gamma1 / gamma0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub irls: IrlsConfig,
    /// Tweedie variance power; profiled over `power_grid` when absent.
    pub power: Option<f64>,
    pub power_grid: Vec<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            irls: IrlsConfig::default(),
            power: None,
            power_grid: default_power_grid(),
        }
    }
}

/// Fits one model with a fixed experience specification.
pub fn fit_with_experience(
    data: &ModelData,
    target: Target,
    covariates: &[String],
    experience: Experience,
    options: &FitOptions,
) -> Result<FittedModel> {
    fit_from(data, target, covariates, experience, options, None)
}

fn fit_from(
    data: &ModelData,
    target: Target,
    covariates: &[String],
    experience: Experience,
    options: &FitOptions,
    start: Option<&[f64]>,
) -> Result<FittedModel> {
    let design = data.design(covariates, &experience, target == Target::Severity)?;
    let (fit, n_obs) = match target {
        Target::Frequency => (
            InnerFit::Glm(fit_poisson_from(&design, &data.counts, &data.exposure, &options.irls, start)?),
            data.n_contracts(),
        ),
        Target::Severity => {
            if data.n_claims() == 0 {
                return Err(Error::argument("no claims to fit a severity model"));
            }
            (InnerFit::Glm(fit_gamma_from(&design, &data.claim_costs, &options.irls, start)?), data.n_claims())
        }
        Target::LossCost => {
            let fit = match options.power {
                Some(p) => fit_dglm(&design, &design, &data.tweedie_observations(p)?, p, &options.irls)?,
                None => {
                    let obs = data.tweedie_observations(1.5)?;
                    select_p(&design, &design, &obs, &options.power_grid, WeightRule::ExposurePower, &options.irls)?.1
                }
            };
            (InnerFit::Dglm(fit), data.n_contracts())
        }
    };
    let kind = match experience {
        Experience::None => ModelKind::Standard,
        Experience::KappaN => ModelKind::KappaN,
        _ => ModelKind::Bms,
    };
    let mut warnings = Vec::new();
    for d in fit.dropped() {
        let w = format!("column {d} is collinear with the others and was held at zero");
        log::warn!("{w}");
        warnings.push(w);
    }
    let loglik = fit.loglik();
    let n_params = fit.n_params();
    let mut model = FittedModel {
        target,
        kind,
        covariates: covariates.to_vec(),
        experience,
        fit,
        n_params,
        loglik,
        n_obs,
        window_years: data.window_years,
        profile: Vec::new(),
        warnings,
    };
    if kind == ModelKind::KappaN {
        if let Some(g0) = model.gamma0() {
            if g0 <= 0.0 {
                let w = format!("gamma0 = {g0:.5} ≤ 0: claim-free years do not lower the premium");
                log::warn!("{w}");
                model.warnings.push(w);
            }
        }
    }
    Ok(model)
}

pub fn fit_standard(data: &ModelData, target: Target, covariates: &[String], options: &FitOptions) -> Result<FittedModel> {
    fit_with_experience(data, target, covariates, Experience::None, options)
}

/// Kappa-N model: `κ••` and `n••` enter as two free covariates.
pub fn fit_kappa_n(data: &ModelData, target: Target, covariates: &[String], options: &FitOptions) -> Result<FittedModel> {
    fit_with_experience(data, target, covariates, Experience::KappaN, options)
}

/// Candidate structures of the profile search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmsGrid {
    pub psi: Vec<u32>,
    pub l_min: Vec<i64>,
    pub l_max: Vec<i64>,
}

impl Default for BmsGrid {
    fn default() -> Self {
        Self {
            psi: (1..=6).collect(),
            l_min: (90..=100).collect(),
            l_max: (100..=110).collect(),
        }
    }
}

impl BmsGrid {
    pub fn candidates(&self) -> Result<Vec<BmsStructure>> {
        if self.psi.is_empty() || self.l_min.is_empty() || self.l_max.is_empty() {
            return Err(Error::argument("every structural grid needs at least one value"));
        }
        let mut out = Vec::new();
        for &psi in &self.psi {
            for &lo in &self.l_min {
                for &hi in &self.l_max {
                    if psi >= 1 && lo <= 100 && hi >= 100 {
                        out.push(BmsStructure::new(psi, lo, hi)?);
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::argument("no grid point satisfies psi ≥ 1 and l_min ≤ 100 ≤ l_max"));
        }
        Ok(out)
    }
}

fn level_signature(data: &ModelData, structure: &BmsStructure) -> u64 {
    let mut h = DefaultHasher::new();
    for s in &data.scopes {
        bms_level(s, structure).hash(&mut h);
    }
    h.finish()
}

/// `true` when `a` should be preferred over `b` at equal likelihood:
/// smaller Ψ, then the wider range, then the lower floor.
fn preferred(a: &BmsStructure, b: &BmsStructure) -> bool {
    let width = |s: &BmsStructure| s.l_max.unwrap_or(i64::MAX) - s.l_min.unwrap_or(i64::MIN);
    (a.psi, std::cmp::Reverse(width(a)), a.l_min).cmp(&(b.psi, std::cmp::Reverse(width(b)), b.l_min)) == std::cmp::Ordering::Less
}

/// Profile-likelihood search of `(Ψ, ℓ_min, ℓ_max)`. Candidates producing the
/// same level for every observation are fitted once.
pub fn fit_bms(
    data: &ModelData,
    target: Target,
    covariates: &[String],
    grid: &BmsGrid,
    options: &FitOptions,
) -> Result<FittedModel> {
    let candidates = grid.candidates()?;
    let mut options = options.clone();
    if target == Target::LossCost && options.power.is_none() {
        // the variance power is profiled once, at the Kappa-N stage
        let kn = fit_kappa_n(data, target, covariates, &options)?;
        if let InnerFit::Dglm(f) = &kn.fit {
            options.power = Some(f.p);
        }
    }
    let signatures: Vec<u64> = candidates.par_iter().map(|s| level_signature(data, s)).collect();
    let mut first_of: HashMap<u64, usize> = HashMap::new();
    let mut unique = Vec::new();
    for (i, sig) in signatures.iter().enumerate() {
        first_of.entry(*sig).or_insert_with(|| {
            unique.push(i);
            i
        });
    }
    log::info!(
        "profile search over {} structures ({} distinct level assignments)",
        candidates.len(),
        unique.len()
    );
    // candidates sharing Ψ are fitted in turn, each warm-started from the last
    let mut by_psi: Vec<Vec<usize>> = Vec::new();
    for &i in &unique {
        match by_psi.iter_mut().find(|g| candidates[g[0]].psi == candidates[i].psi) {
            Some(g) => g.push(i),
            None => by_psi.push(vec![i]),
        }
    }
    let fits: Vec<(usize, Result<FittedModel>)> = by_psi
        .par_iter()
        .flat_map_iter(|group| {
            let mut start: Option<Vec<f64>> = None;
            let mut out = Vec::with_capacity(group.len());
            for &i in group {
                let experience = Experience::Level { structure: candidates[i] };
                let fit = fit_from(data, target, covariates, experience, &options, start.as_deref());
                if let Ok(FittedModel { fit: InnerFit::Glm(g), .. }) = &fit {
                    start = Some(g.beta.clone());
                }
                out.push((i, fit));
            }
            out
        })
        .collect();
    let mut by_candidate: HashMap<usize, Result<FittedModel>> = fits.into_iter().collect();

    let mut profile = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64)> = None;
    let mut failures = Vec::new();
    for (i, s) in candidates.iter().enumerate() {
        let rep = first_of[&signatures[i]];
        let (loglik, n_params) = match by_candidate.get(&rep) {
            Some(Ok(m)) => (m.loglik, m.n_params + 3),
            Some(Err(e)) => {
                failures.push(format!("Ψ={} [{:?}, {:?}]: {e}", s.psi, s.l_min, s.l_max));
                (f64::NEG_INFINITY, 0)
            }
            None => unreachable!("every signature has a fitted representative"),
        };
        profile.push(ProfileRow {
            psi: s.psi,
            l_min: s.l_min.expect("grid structures are bounded"),
            l_max: s.l_max.expect("grid structures are bounded"),
            loglik,
            n_params,
        });
        if loglik.is_finite() {
            let better = match best {
                None => true,
                Some((b, bl)) => {
                    let tie = (loglik - bl).abs() <= 1e-9 * (1.0 + bl.abs());
                    (!tie && loglik > bl) || (tie && preferred(s, &candidates[b]))
                }
            };
            if better {
                best = Some((i, loglik));
            }
        }
    }
    let Some((b, _)) = best else {
        return Err(Error::AllFailed(failures));
    };
    let rep = first_of[&signatures[b]];
    let mut model = match by_candidate.remove(&rep) {
        Some(Ok(m)) => m,
        _ => unreachable!("the best candidate was fitted"),
    };
    // the representative may be a different but equivalent structure
    model.experience = Experience::Level { structure: candidates[b] };
    model.kind = ModelKind::Bms;
    model.n_params += 3;
    model.profile = profile;
    if model.fit.dropped().iter().any(|d| d.ends_with(LEVEL)) {
        let w = "levels are constant over the data: gamma0 is not identified and is absorbed into the intercept".to_string();
        log::warn!("{w}");
        model.warnings.push(w);
    }
    Ok(model)
}

pub fn write_profile_csv(profile: &[ProfileRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in profile {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Compound Poisson-gamma loss-cost model: a frequency and a severity model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpgModel {
    pub frequency: FittedModel,
    pub severity: FittedModel,
}

impl CpgModel {
    pub fn new(frequency: FittedModel, severity: FittedModel) -> Result<Self> {
        if frequency.target != Target::Frequency || severity.target != Target::Severity {
            return Err(Error::argument("a CPG model pairs a frequency and a severity model"));
        }
        Ok(Self { frequency, severity })
    }

    pub fn n_params(&self) -> usize {
        self.frequency.n_params + self.severity.n_params
    }

    /// Variance power of the equivalent Tweedie, `p = (γ + 2)/(γ + 1)`.
    pub fn power(&self) -> Result<f64> {
        match &self.severity.fit {
            InnerFit::Glm(f) => Ok(power_from_shape(f.shape.ok_or_else(|| Error::argument("severity fit has no shape"))?)),
            InnerFit::Dglm(_) => Err(Error::argument("severity model must be a gamma GLM")),
        }
    }

    /// Joint `(N, Y)` log-likelihood per contract, computed in the mapped Tweedie coordinates.
    pub fn contract_logliks(&self, data: &ModelData) -> Result<Vec<f64>> {
        let (InnerFit::Glm(ff), InnerFit::Glm(sf)) = (&self.frequency.fit, &self.severity.fit) else {
            return Err(Error::argument("CPG components must be GLMs"));
        };
        let fd = data.design(&self.frequency.covariates, &self.frequency.experience, false)?;
        let sd = data.design(&self.severity.covariates, &self.severity.experience, false)?;
        let p = self.power()?;
        let mapped = cpg_to_tweedie(ff, sf, &fd, &sd, &data.exposure, p)?;
        mapped
            .iter()
            .zip(data.losses.iter().zip(&data.counts))
            .map(|(m, (&y, &n))| joint_log_density(y, n, m.mu, m.phi, p, m.weight))
            .collect()
    }

    pub fn loglik_on(&self, data: &ModelData) -> Result<f64> {
        Ok(self.contract_logliks(data)?.iter().sum())
    }

    /// Expected annual amount per contract.
    pub fn predict_contracts(&self, data: &ModelData) -> Result<Vec<f64>> {
        let f = self.frequency.predict_contracts(data)?;
        let s = self.severity.predict_contracts(data)?;
        Ok(f.iter().zip(&s).map(|(a, b)| a * b).collect())
    }
}

/// Tweedie model whose mean and dispersion use the two CPG levels
/// (`level_freq`, `level_sev`) built from the given structures.
pub fn fit_tweedie_cp(
    data: &ModelData,
    covariates: &[String],
    freq: BmsStructure,
    sev: BmsStructure,
    options: &FitOptions,
) -> Result<FittedModel> {
    let mut m = fit_with_experience(data, Target::LossCost, covariates, Experience::TwoLevels { freq, sev }, options)?;
    // both structures were estimated by the frequency and severity searches
    m.n_params += 6;
    Ok(m)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub cv: CvConfig,
    pub enet: EnetConfig,
    /// Take the one-standard-error point instead of the deviance minimum.
    pub one_se: bool,
}

/// Elastic-net selection of covariates for one target: cross-validation with
/// the experience columns left unpenalized, then the covariates whose
/// coefficients are nonzero at the chosen `(α, λ)`. `power` is the Tweedie
/// variance power and is ignored for the other targets.
pub fn select_covariates(
    data: &ModelData,
    target: Target,
    candidates: &[String],
    experience: &Experience,
    power: f64,
    selection: &SelectionConfig,
) -> Result<Vec<String>> {
    let SelectionConfig { cv, enet, one_se } = selection;
    let design = data.design(candidates, experience, target == Target::Severity)?;
    let exempt: Vec<String> = experience.labels().iter().map(|s| s.to_string()).collect();
    let cv = CvConfig {
        exempt: exempt.clone(),
        ..cv.clone()
    };
    let counts_f: Vec<f64>;
    let weights: Vec<f64>;
    let groups: Vec<usize>;
    let (penalized, family) = match target {
        Target::Frequency => {
            counts_f = data.counts.iter().map(|&n| n as f64).collect();
            groups = data.groups.clone();
            (
                PenalizedData {
                    design: &design,
                    y: &counts_f,
                    exposure: Some(&data.exposure),
                    weights: None,
                },
                PenalizedFamily::Poisson,
            )
        }
        Target::Severity => {
            groups = data.claim_rows.iter().map(|&r| data.groups[r]).collect();
            (
                PenalizedData {
                    design: &design,
                    y: &data.claim_costs,
                    exposure: None,
                    weights: None,
                },
                PenalizedFamily::Gamma,
            )
        }
        Target::LossCost => {
            weights = data.exposure.iter().map(|d| d.powf(power - 1.0)).collect();
            groups = data.groups.clone();
            (
                PenalizedData {
                    design: &design,
                    y: &data.losses,
                    exposure: Some(&data.exposure),
                    weights: Some(&weights),
                },
                PenalizedFamily::TweedieMean { p: power },
            )
        }
    };
    let result = cv_select(&penalized, family, &groups, &cv, enet)?;
    let spec = if *one_se { &result.one_se } else { &result.best };
    let fit = crate::elasticnet::fit_penalized(&penalized, family, spec, enet)?;
    Ok(candidates
        .iter()
        .enumerate()
        .filter(|(j, _)| fit.beta[j + 1] != 0.0)
        .map(|(_, n)| n.clone())
        .collect())
}
