//! Fit statistics, logarithmic scores, relativities, insured-type ratios and
//! the off-balance correction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bms_search::{CpgModel, FittedModel, ModelData, Target};
use crate::error::{Error, Result};
use crate::portfolio::{classify_insured_type, BmsStructure, InsuredType};

pub fn aic(loglik: f64, n_params: usize) -> f64 {
    -2.0 * loglik + 2.0 * n_params as f64
}

pub fn bic(loglik: f64, n_params: usize, n_obs: usize) -> f64 {
    -2.0 * loglik + n_params as f64 * (n_obs as f64).ln()
}

/// A fitted single-target model or a frequency-severity pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Single(FittedModel),
    Cpg(CpgModel),
}

impl Model {
    pub fn n_params(&self) -> usize {
        match self {
            Model::Single(m) => m.n_params,
            Model::Cpg(m) => m.n_params(),
        }
    }

    /// Training log-likelihood. For a CPG pair this is the joint `(N, Y)`
    /// likelihood, which differs from the sum of the component fits by a
    /// constant in the parameters.
    pub fn loglik_on(&self, data: &ModelData) -> Result<f64> {
        match self {
            Model::Single(m) => m.loglik_on(data),
            Model::Cpg(m) => m.loglik_on(data),
        }
    }

    pub fn n_obs(&self, data: &ModelData) -> usize {
        match self {
            Model::Single(m) if m.target == Target::Severity => data.n_claims(),
            _ => data.n_contracts(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Model::Single(m) => m.target.family_name(),
            Model::Cpg(_) => "cpg",
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Single(m) => m.kind.name(),
            Model::Cpg(m) => m.frequency.kind.name(),
        }
    }
}

/// Negative test-set log-likelihood at the training estimates. Levels of the
/// test contracts come from their own histories under the training structure.
pub fn logarithmic_score(model: &Model, test: &ModelData) -> Result<f64> {
    Ok(-model.loglik_on(test)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRelativity {
    pub level: i64,
    pub relativity: f64,
}

/// Premium relativities against level 100. The discount is reported as a
/// positive fraction: `1 − exp(−γ₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativityTable {
    pub gamma0: f64,
    pub psi: u32,
    pub l_min: i64,
    pub l_max: i64,
    pub levels: Vec<LevelRelativity>,
    pub surcharge_per_claim: f64,
    pub claims_free_discount: f64,
    pub min_relativity: f64,
    pub max_relativity: f64,
}

pub fn relativity_table(gamma0: f64, structure: &BmsStructure) -> Result<RelativityTable> {
    structure.validate()?;
    let (Some(l_min), Some(l_max)) = (structure.l_min, structure.l_max) else {
        return Err(Error::argument("relativity tables need a bounded level scale"));
    };
    if !gamma0.is_finite() {
        return Err(Error::argument("gamma0 must be finite"));
    }
    let rel = |l: i64| (gamma0 * (l - structure.l_start) as f64).exp();
    let levels = (l_min..=l_max)
        .map(|level| LevelRelativity {
            level,
            relativity: rel(level),
        })
        .collect();
    Ok(RelativityTable {
        gamma0,
        psi: structure.psi,
        l_min,
        l_max,
        levels,
        surcharge_per_claim: (structure.psi as f64 * gamma0).exp() - 1.0,
        claims_free_discount: 1.0 - (-gamma0).exp(),
        min_relativity: rel(l_min).min(rel(l_max)),
        max_relativity: rel(l_min).max(rel(l_max)),
    })
}

/// Total-premium relativity of a frequency-severity pair.
pub fn combined_cpg_relativity(freq_rel: f64, sev_rel: f64) -> Result<f64> {
    if !(freq_rel > 0.0 && sev_rel > 0.0) {
        return Err(Error::argument("relativities must be positive"));
    }
    Ok(freq_rel * sev_rel)
}

/// Headline figures of a combined frequency-severity scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedRelativity {
    pub surcharge_per_claim: f64,
    pub claims_free_discount: f64,
    pub min_relativity: f64,
    pub max_relativity: f64,
}

pub fn combine_tables(freq: &RelativityTable, sev: &RelativityTable) -> Result<CombinedRelativity> {
    let up = combined_cpg_relativity(1.0 + freq.surcharge_per_claim, 1.0 + sev.surcharge_per_claim)?;
    let down = combined_cpg_relativity(1.0 - freq.claims_free_discount, 1.0 - sev.claims_free_discount)?;
    Ok(CombinedRelativity {
        surcharge_per_claim: up - 1.0,
        claims_free_discount: 1.0 - down,
        min_relativity: combined_cpg_relativity(freq.min_relativity, sev.min_relativity)?,
        max_relativity: combined_cpg_relativity(freq.max_relativity, sev.max_relativity)?,
    })
}

pub fn write_relativity_csv(table: &RelativityTable, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &table.levels {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-contract predictions: expected claims, mean claim cost, expected amount.
/// A model fills in what it predicts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub frequency: Option<Vec<f64>>,
    pub severity: Option<Vec<f64>>,
    pub loss_cost: Option<Vec<f64>>,
}

impl Predictions {
    pub fn of(model: &Model, data: &ModelData) -> Result<Self> {
        Ok(match model {
            Model::Single(m) => {
                let v = Some(m.predict_contracts(data)?);
                match m.target {
                    Target::Frequency => Self { frequency: v, ..Self::default() },
                    Target::Severity => Self { severity: v, ..Self::default() },
                    Target::LossCost => Self { loss_cost: v, ..Self::default() },
                }
            }
            Model::Cpg(m) => {
                let f = m.frequency.predict_contracts(data)?;
                let s = m.severity.predict_contracts(data)?;
                let l = f.iter().zip(&s).map(|(a, b)| a * b).collect();
                Self {
                    frequency: Some(f),
                    severity: Some(s),
                    loss_cost: Some(l),
                }
            }
        })
    }
}

/// Observed and predicted averages of one insured type, each relative to the whole data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRatio {
    pub insured_type: InsuredType,
    pub contracts: usize,
    pub exposure: f64,
    pub frequency_ratio: f64,
    pub severity_ratio: f64,
    pub loss_cost_ratio: f64,
    pub predicted_frequency_ratio: Option<f64>,
    pub predicted_severity_ratio: Option<f64>,
    pub predicted_loss_cost_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    contracts: usize,
    exposure: f64,
    claims: f64,
    losses: f64,
    pred_claims: f64,
    /// Claim weights (predicted, else observed) and their predicted cost.
    sev_weight: f64,
    pred_cost: f64,
    pred_losses: f64,
}

pub fn insured_types(data: &ModelData) -> Vec<InsuredType> {
    data.scopes
        .iter()
        .map(|s| classify_insured_type(s, s.experience_years))
        .collect()
}

/// Ratios of each type's average frequency, severity and loss cost to the
/// overall ones, in a single pass. Predicted severities are averaged over
/// predicted claims when a frequency is predicted, else over observed claims.
/// Types without contracts are omitted.
pub fn group_ratio_report(data: &ModelData, predictions: &Predictions) -> Result<Vec<GroupRatio>> {
    let n = data.n_contracts();
    for v in [&predictions.frequency, &predictions.severity, &predictions.loss_cost]
        .into_iter()
        .flatten()
    {
        if v.len() != n {
            return Err(Error::argument("predictions must have one entry per contract"));
        }
    }
    let at = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map_or(0.0, |v| v[i]);
    let mut groups = [Sums::default(); 6];
    let mut all = Sums::default();
    for (i, t) in insured_types(data).into_iter().enumerate() {
        let claims = data.counts[i] as f64;
        let sev_weight = predictions.frequency.as_ref().map_or(claims, |f| f[i]);
        for s in [&mut groups[t as usize], &mut all] {
            s.contracts += 1;
            s.exposure += data.exposure[i];
            s.claims += claims;
            s.losses += data.losses[i];
            s.pred_claims += at(&predictions.frequency, i);
            s.sev_weight += sev_weight;
            s.pred_cost += sev_weight * at(&predictions.severity, i);
            s.pred_losses += at(&predictions.loss_cost, i);
        }
    }
    let freq = |s: &Sums| s.claims / s.exposure;
    let sev = |s: &Sums| s.losses / s.claims;
    let lc = |s: &Sums| s.losses / s.exposure;
    let p_freq = |s: &Sums| s.pred_claims / s.exposure;
    let p_sev = |s: &Sums| s.pred_cost / s.sev_weight;
    let p_lc = |s: &Sums| s.pred_losses / s.exposure;
    Ok(InsuredType::ALL
        .iter()
        .zip(&groups)
        .filter(|(_, s)| s.contracts > 0)
        .map(|(&t, s)| GroupRatio {
            insured_type: t,
            contracts: s.contracts,
            exposure: s.exposure,
            frequency_ratio: freq(s) / freq(&all),
            severity_ratio: sev(s) / sev(&all),
            loss_cost_ratio: lc(s) / lc(&all),
            predicted_frequency_ratio: predictions.frequency.as_ref().map(|_| p_freq(s) / p_freq(&all)),
            predicted_severity_ratio: predictions.severity.as_ref().map(|_| p_sev(s) / p_sev(&all)),
            predicted_loss_cost_ratio: predictions.loss_cost.as_ref().map(|_| p_lc(s) / p_lc(&all)),
        })
        .collect())
}

pub fn write_group_csv(rows: &[GroupRatio], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `Σ observed / Σ predicted`.
pub fn off_balance_factor(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() {
        return Err(Error::argument("predicted and observed must have equal lengths"));
    }
    let p: f64 = predicted.iter().sum();
    if !(p > 0.0) {
        return Err(Error::argument("total prediction must be positive"));
    }
    Ok(observed.iter().sum::<f64>() / p)
}

pub fn apply_off_balance(predicted: &[f64], factor: f64) -> Vec<f64> {
    predicted.iter().map(|p| p * factor).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub family: String,
    pub n_params: usize,
    pub n_obs: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub sl_score: Option<f64>,
    pub structure: Option<BmsStructure>,
    pub gamma0: Option<f64>,
    pub gamma1: Option<f64>,
    pub psi: Option<f64>,
    pub relativities: Option<RelativityTable>,
    pub combined_relativity: Option<CombinedRelativity>,
    pub group_ratios: Vec<GroupRatio>,
    pub off_balance_factor: f64,
    pub warnings: Vec<String>,
}

impl ModelReport {
    /// Statistics of `model` on its training data, scored on `test` when given.
    pub fn build(model: &Model, train: &ModelData, test: Option<&ModelData>) -> Result<Self> {
        let loglik = model.loglik_on(train)?;
        let n_params = model.n_params();
        let n_obs = model.n_obs(train);
        let sl_score = test.map(|t| logarithmic_score(model, t)).transpose()?;
        let table = |f: &FittedModel| match (f.structure(), f.gamma0()) {
            (Some(s), Some(g)) if s.is_clamped() => relativity_table(g, &s).map(Some),
            _ => Ok(None),
        };
        let (single, relativities, combined, warnings) = match model {
            Model::Single(m) => (Some(m), table(m)?, None, m.warnings.clone()),
            Model::Cpg(m) => {
                let combined = match (table(&m.frequency)?, table(&m.severity)?) {
                    (Some(a), Some(b)) => Some(combine_tables(&a, &b)?),
                    _ => None,
                };
                let mut warnings = m.frequency.warnings.clone();
                warnings.extend(m.severity.warnings.iter().cloned());
                (None, None, combined, warnings)
            }
        };
        let predictions = Predictions::of(model, train)?;
        let group_ratios = group_ratio_report(train, &predictions)?;
        let off_balance = if let Some(l) = &predictions.loss_cost {
            off_balance_factor(l, &train.losses)?
        } else if let Some(f) = &predictions.frequency {
            let observed: Vec<f64> = train.counts.iter().map(|&n| n as f64).collect();
            off_balance_factor(f, &observed)?
        } else {
            let s = predictions.severity.as_ref().expect("every model predicts something");
            let per_claim: Vec<f64> = train.claim_rows.iter().map(|&r| s[r]).collect();
            off_balance_factor(&per_claim, &train.claim_costs)?
        };
        Ok(Self {
            model: model.kind_name().to_string(),
            family: model.family().to_string(),
            n_params,
            n_obs,
            loglik,
            aic: aic(loglik, n_params),
            bic: bic(loglik, n_params, n_obs),
            sl_score,
            structure: single.and_then(|m| m.structure()),
            gamma0: single.and_then(|m| m.gamma0()),
            gamma1: single.and_then(|m| m.gamma1()),
            psi: single.and_then(|m| m.psi()),
            relativities,
            combined_relativity: combined,
            group_ratios,
            off_balance_factor: off_balance,
            warnings,
        })
    }
}
