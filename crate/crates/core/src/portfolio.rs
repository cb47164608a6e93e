//! Contract/claim panel data: ingestion, policy-level scope variables, BMS
//! levels and train/test splitting.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_YEARS: u32 = 6;
pub const DEFAULT_L_START: i64 = 100;

const CONTRACT_FIXED: [&str; 7] = [
    "policy_id",
    "vehicle_id",
    "contract_index",
    "effective_date",
    "exposure",
    "claim_count",
    "calendar_year",
];
const CLAIM_HEADER: [&str; 5] = ["policy_id", "vehicle_id", "contract_index", "claim_ordinal", "cost"];

/// One annual (or shorter) contract of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractRecord {
    pub policy_id: String,
    pub vehicle_id: String,
    pub contract_index: u32,
    pub effective_date: NaiveDate,
    pub exposure: f64,
    /// Covariate values in `Portfolio::covariate_names` order; the intercept is implicit.
    pub covariates: Vec<f64>,
    pub claim_count: u32,
    pub calendar_year: i32,
}

impl ContractRecord {
    pub fn key(&self) -> ContractKey {
        ContractKey {
            policy_id: self.policy_id.clone(),
            vehicle_id: self.vehicle_id.clone(),
            contract_index: self.contract_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub policy_id: String,
    pub vehicle_id: String,
    pub contract_index: u32,
    pub claim_ordinal: u32,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContractKey {
    pub policy_id: String,
    pub vehicle_id: String,
    pub contract_index: u32,
}

impl ContractKey {
    pub fn new(policy_id: impl Into<String>, vehicle_id: impl Into<String>, contract_index: u32) -> Self {
        Self {
            policy_id: policy_id.into(),
            vehicle_id: vehicle_id.into(),
            contract_index,
        }
    }
}

impl std::fmt::Display for ContractKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.policy_id, self.vehicle_id, self.contract_index)
    }
}

/// Identifiers that are both integers compare numerically, otherwise as text.
pub fn id_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

fn row_cmp(a: (&str, &str, u32), b: (&str, &str, u32)) -> Ordering {
    id_cmp(a.0, b.0).then_with(|| id_cmp(a.1, b.1)).then(a.2.cmp(&b.2))
}

#[derive(Debug, Clone)]
pub struct Portfolio {
    contracts: Vec<ContractRecord>,
    claims: Vec<ClaimRecord>,
    covariate_names: Vec<String>,
    /// `claims[claim_ranges[i].0..claim_ranges[i].1]` belong to contract `i`.
    claim_ranges: Vec<(usize, usize)>,
}

impl Portfolio {
    /// Sorts rows by (policy, vehicle, contract) and checks every invariant.
    pub fn new(
        mut contracts: Vec<ContractRecord>,
        mut claims: Vec<ClaimRecord>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        contracts.sort_by(|a, b| {
            row_cmp(
                (&a.policy_id, &a.vehicle_id, a.contract_index),
                (&b.policy_id, &b.vehicle_id, b.contract_index),
            )
        });
        claims.sort_by(|a, b| {
            row_cmp(
                (&a.policy_id, &a.vehicle_id, a.contract_index),
                (&b.policy_id, &b.vehicle_id, b.contract_index),
            )
            .then(a.claim_ordinal.cmp(&b.claim_ordinal))
        });
        validate_contracts(&contracts, covariate_names.len())?;

        let mut claim_ranges = Vec::with_capacity(contracts.len());
        let mut orphans = Vec::new();
        let mut mismatched = Vec::new();
        let mut j = 0;
        for c in &contracts {
            let here = (c.policy_id.as_str(), c.vehicle_id.as_str(), c.contract_index);
            while j < claims.len() {
                let k = &claims[j];
                if row_cmp((&k.policy_id, &k.vehicle_id, k.contract_index), here) == Ordering::Less {
                    orphans.push(format!("{}", claim_key(k)));
                    j += 1;
                } else {
                    break;
                }
            }
            let start = j;
            while j < claims.len() {
                let k = &claims[j];
                if row_cmp((&k.policy_id, &k.vehicle_id, k.contract_index), here) == Ordering::Equal {
                    j += 1;
                } else {
                    break;
                }
            }
            if (j - start) as u32 != c.claim_count {
                mismatched.push(format!("{} has claim_count {} but {} claim rows", c.key(), c.claim_count, j - start));
            }
            claim_ranges.push((start, j));
        }
        orphans.extend(claims[j..].iter().map(|k| format!("{}", claim_key(k))));
        if !orphans.is_empty() {
            return Err(Error::Consistency {
                message: "claims without a matching contract".into(),
                keys: orphans,
            });
        }
        if !mismatched.is_empty() {
            return Err(Error::Consistency {
                message: "claim_count disagrees with the claims file".into(),
                keys: mismatched,
            });
        }
        let mut bad = Vec::new();
        for k in &claims {
            if !(k.cost > 0.0 && k.cost.is_finite()) {
                bad.push(format!("{} claim {}", claim_key(k), k.claim_ordinal));
            }
        }
        for w in claims.windows(2) {
            if claim_key(&w[0]) == claim_key(&w[1]) && w[0].claim_ordinal == w[1].claim_ordinal {
                bad.push(format!("{} duplicate claim {}", claim_key(&w[0]), w[0].claim_ordinal));
            }
        }
        if !bad.is_empty() {
            return Err(Error::Consistency {
                message: "claim costs must be positive and ordinals unique".into(),
                keys: bad,
            });
        }
        Ok(Self {
            contracts,
            claims,
            covariate_names,
            claim_ranges,
        })
    }

    pub fn contracts(&self) -> &[ContractRecord] {
        &self.contracts
    }

    pub fn claims(&self) -> &[ClaimRecord] {
        &self.claims
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn len(&self) -> usize {
        self.contracts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contracts.is_empty()
    }

    /// Claims of contract `i` (position in `contracts()`).
    pub fn claims_of(&self, i: usize) -> &[ClaimRecord] {
        let (a, b) = self.claim_ranges[i];
        &self.claims[a..b]
    }

    /// Annual claims amount of contract `i`.
    pub fn loss_of(&self, i: usize) -> f64 {
        self.claims_of(i).iter().map(|c| c.cost).sum()
    }

    pub fn position(&self, key: &ContractKey) -> Option<usize> {
        self.contracts
            .binary_search_by(|c| {
                row_cmp(
                    (&c.policy_id, &c.vehicle_id, c.contract_index),
                    (&key.policy_id, &key.vehicle_id, key.contract_index),
                )
            })
            .ok()
    }

    /// Distinct policies in sorted order.
    pub fn policy_ids(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.contracts {
            if out.last() != Some(&c.policy_id.as_str()) {
                out.push(&c.policy_id);
            }
        }
        out
    }

    /// Dense policy number of every contract (contracts are grouped by policy).
    pub fn policy_groups(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.contracts.len());
        let mut g = 0;
        for (i, c) in self.contracts.iter().enumerate() {
            if i > 0 && c.policy_id != self.contracts[i - 1].policy_id {
                g += 1;
            }
            out.push(g);
        }
        out
    }

    /// Sub-portfolio made of the given policies.
    pub fn filter_policies(&self, keep: &HashSet<&str>) -> Portfolio {
        let mut contracts = Vec::new();
        let mut claims = Vec::new();
        let mut claim_ranges = Vec::new();
        for (i, c) in self.contracts.iter().enumerate() {
            if keep.contains(c.policy_id.as_str()) {
                let start = claims.len();
                claims.extend_from_slice(self.claims_of(i));
                claim_ranges.push((start, claims.len()));
                contracts.push(c.clone());
            }
        }
        Portfolio {
            contracts,
            claims,
            covariate_names: self.covariate_names.clone(),
            claim_ranges,
        }
    }

    /// Claims per exposure year and average cost per claim.
    pub fn frequency_and_severity(&self) -> (f64, f64) {
        let exposure: f64 = self.contracts.iter().map(|c| c.exposure).sum();
        let n: u64 = self.contracts.iter().map(|c| c.claim_count as u64).sum();
        let cost: f64 = self.claims.iter().map(|c| c.cost).sum();
        let freq = if exposure > 0.0 { n as f64 / exposure } else { 0.0 };
        let sev = if n > 0 { cost / n as f64 } else { 0.0 };
        (freq, sev)
    }
}

fn claim_key(k: &ClaimRecord) -> ContractKey {
    ContractKey::new(k.policy_id.clone(), k.vehicle_id.clone(), k.contract_index)
}

fn validate_contracts(contracts: &[ContractRecord], n_cov: usize) -> Result<()> {
    let mut bad = Vec::new();
    for c in contracts {
        if !(c.exposure > 0.0 && c.exposure.is_finite()) {
            bad.push(format!("{} exposure {}", c.key(), c.exposure));
        }
        if c.contract_index == 0 {
            bad.push(format!("{} contract_index must be positive", c.key()));
        }
        if c.covariates.len() != n_cov {
            bad.push(format!("{} has {} covariates, expected {n_cov}", c.key(), c.covariates.len()));
        }
        if c.covariates.iter().any(|v| !v.is_finite()) {
            bad.push(format!("{} non-finite covariate", c.key()));
        }
    }
    for w in contracts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.policy_id == b.policy_id && a.vehicle_id == b.vehicle_id {
            if a.contract_index == b.contract_index {
                bad.push(format!("{} duplicated", a.key()));
            } else if a.effective_date >= b.effective_date {
                bad.push(format!("{} and {}: contract_index not increasing with effective_date", a.key(), b.key()));
            }
        }
    }
    // within a policy, one effective year maps to one contract index and vice versa
    let mut year_index: HashMap<(&str, i32), u32> = HashMap::new();
    let mut index_year: HashMap<(&str, u32), i32> = HashMap::new();
    for c in contracts {
        let year = c.effective_date.year();
        if let Some(&t) = year_index.get(&(c.policy_id.as_str(), year)) {
            if t != c.contract_index {
                bad.push(format!("{}: effective year {year} already numbered {t}", c.key()));
            }
        } else {
            year_index.insert((c.policy_id.as_str(), year), c.contract_index);
        }
        if let Some(&y) = index_year.get(&(c.policy_id.as_str(), c.contract_index)) {
            if y != year {
                bad.push(format!("{}: contract index already used for year {y}", c.key()));
            }
        } else {
            index_year.insert((c.policy_id.as_str(), c.contract_index), year);
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Consistency {
            message: "contract rows violate the panel invariants".into(),
            keys: bad,
        })
    }
}

fn parse_field<F: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<F>
where
    F::Err: std::fmt::Display,
{
    let raw = rec.get(i).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("missing field {name}"),
    })?;
    raw.trim().parse::<F>().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("{name} = {raw:?}: {e}"),
    })
}

fn check_header(path: &Path, header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    for (i, name) in expected.iter().enumerate() {
        if header.get(i).map(str::trim) != Some(*name) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected column {} to be {name}, found {:?}", i + 1, header.get(i)),
            });
        }
    }
    Ok(())
}

fn read_contracts(path: &Path) -> Result<(Vec<ContractRecord>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    check_header(path, &header, &CONTRACT_FIXED)?;
    let covariate_names: Vec<String> = header.iter().skip(CONTRACT_FIXED.len()).map(|s| s.trim().to_string()).collect();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("{} fields, header has {}", rec.len(), header.len()),
            });
        }
        let date: String = parse_field(path, line, &rec, 3, "effective_date")?;
        let effective_date = NaiveDate::parse_from_str(&date, "%Y-%m-%d").map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("effective_date = {date:?}: {e}"),
        })?;
        let exposure: f64 = parse_field(path, line, &rec, 4, "exposure")?;
        if !(exposure > 0.0 && exposure.is_finite()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("exposure must be positive, got {exposure}"),
            });
        }
        let mut covariates = Vec::with_capacity(covariate_names.len());
        for (k, name) in covariate_names.iter().enumerate() {
            covariates.push(parse_field::<f64>(path, line, &rec, CONTRACT_FIXED.len() + k, name)?);
        }
        out.push(ContractRecord {
            policy_id: parse_field(path, line, &rec, 0, "policy_id")?,
            vehicle_id: parse_field(path, line, &rec, 1, "vehicle_id")?,
            contract_index: parse_field(path, line, &rec, 2, "contract_index")?,
            effective_date,
            exposure,
            covariates,
            claim_count: parse_field(path, line, &rec, 5, "claim_count")?,
            calendar_year: parse_field(path, line, &rec, 6, "calendar_year")?,
        });
    }
    Ok((out, covariate_names))
}

fn read_claims(path: &Path) -> Result<Vec<ClaimRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    check_header(path, &header, &CLAIM_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let cost: f64 = parse_field(path, line, &rec, 4, "cost")?;
        if !(cost > 0.0 && cost.is_finite()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("cost must be positive, got {cost}"),
            });
        }
        out.push(ClaimRecord {
            policy_id: parse_field(path, line, &rec, 0, "policy_id")?,
            vehicle_id: parse_field(path, line, &rec, 1, "vehicle_id")?,
            contract_index: parse_field(path, line, &rec, 2, "contract_index")?,
            claim_ordinal: parse_field(path, line, &rec, 3, "claim_ordinal")?,
            cost,
        });
    }
    Ok(out)
}

pub fn load_portfolio(contracts_path: impl AsRef<Path>, claims_path: impl AsRef<Path>) -> Result<Portfolio> {
    let (contracts, names) = read_contracts(contracts_path.as_ref())?;
    let claims = read_claims(claims_path.as_ref())?;
    Portfolio::new(contracts, claims, names)
}

/// Writes both files in the normalized layout read by [`load_portfolio`].
pub fn write_portfolio(portfolio: &Portfolio, contracts_path: impl AsRef<Path>, claims_path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(File::create(contracts_path)?));
    let mut header: Vec<&str> = CONTRACT_FIXED.to_vec();
    header.extend(portfolio.covariate_names.iter().map(String::as_str));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for c in &portfolio.contracts {
        row.clear();
        row.push(c.policy_id.clone());
        row.push(c.vehicle_id.clone());
        row.push(c.contract_index.to_string());
        row.push(c.effective_date.format("%Y-%m-%d").to_string());
        row.push(c.exposure.to_string());
        row.push(c.claim_count.to_string());
        row.push(c.calendar_year.to_string());
        row.extend(c.covariates.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(File::create(claims_path)?));
    w.write_record(CLAIM_HEADER)?;
    for k in &portfolio.claims {
        w.write_record([
            k.policy_id.clone(),
            k.vehicle_id.clone(),
            k.contract_index.to_string(),
            k.claim_ordinal.to_string(),
            k.cost.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Past policy-level claims experience of one contract.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScopeSummary {
    /// Observed window years without a claim (κ••).
    pub kappa_dotdot: u32,
    /// Claims over the window (n••).
    pub n_dotdot: u32,
    pub years_observed: u32,
    /// Policy claim totals of the observed window years, oldest first.
    pub history: Vec<u32>,
    /// Prior policy-years with an active contract, without the window cut-off.
    pub experience_years: u32,
}

impl ScopeSummary {
    /// Summary of a window made of the given (all observed) policy-year totals.
    pub fn from_history(history: &[u32]) -> Self {
        Self {
            kappa_dotdot: history.iter().filter(|&&n| n == 0).count() as u32,
            n_dotdot: history.iter().sum(),
            years_observed: history.len() as u32,
            history: history.to_vec(),
            experience_years: history.len() as u32,
        }
    }
}

/// Claim totals per policy and calendar year, counting only years with an active contract.
pub fn policy_year_totals(portfolio: &Portfolio) -> HashMap<&str, BTreeMap<i32, u32>> {
    let mut out: HashMap<&str, BTreeMap<i32, u32>> = HashMap::new();
    for c in portfolio.contracts() {
        *out.entry(c.policy_id.as_str())
            .or_default()
            .entry(c.calendar_year)
            .or_insert(0) += c.claim_count;
    }
    out
}

/// Scope summaries aligned with `portfolio.contracts()`. The window for a
/// contract of calendar year `Y` is `[Y − window_years, Y − 1]`.
pub fn compute_scope(portfolio: &Portfolio, window_years: u32) -> Result<Vec<ScopeSummary>> {
    if window_years == 0 {
        return Err(Error::argument("window_years must be at least 1"));
    }
    let totals = policy_year_totals(portfolio);
    let w = window_years as i32;
    Ok(portfolio
        .contracts()
        .iter()
        .map(|c| {
            let years = &totals[c.policy_id.as_str()];
            let history: Vec<u32> = years.range(c.calendar_year - w..c.calendar_year).map(|(_, &n)| n).collect();
            let mut s = ScopeSummary::from_history(&history);
            s.experience_years = years.range(..c.calendar_year).count() as u32;
            s
        })
        .collect())
}

/// Claim counts of the same vehicle and of its policy in calendar years
/// `Y − 1, …, Y − lags`; `None` where no contract was active.
pub fn lagged_counts(portfolio: &Portfolio, key: &ContractKey, lags: u32) -> Option<(Vec<Option<u32>>, Vec<Option<u32>>)> {
    let i = portfolio.position(key)?;
    let year = portfolio.contracts()[i].calendar_year;
    let totals = policy_year_totals(portfolio);
    let years = &totals[key.policy_id.as_str()];
    let mut vehicle = Vec::new();
    let mut policy = Vec::new();
    for k in 1..=lags as i32 {
        let y = year - k;
        vehicle.push(
            portfolio
                .contracts()
                .iter()
                .find(|c| c.policy_id == key.policy_id && c.vehicle_id == key.vehicle_id && c.calendar_year == y)
                .map(|c| c.claim_count),
        );
        policy.push(years.get(&y).copied());
    }
    Some((vehicle, policy))
}

/// Structural parameters of a bonus-malus scale. Absent bounds leave that side unclamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BmsStructure {
    pub psi: u32,
    pub l_min: Option<i64>,
    pub l_max: Option<i64>,
    pub l_start: i64,
}

impl BmsStructure {
    pub fn new(psi: u32, l_min: i64, l_max: i64) -> Result<Self> {
        let s = Self {
            psi,
            l_min: Some(l_min),
            l_max: Some(l_max),
            l_start: DEFAULT_L_START,
        };
        s.validate()?;
        Ok(s)
    }

    /// No bounds: the level is the Kappa-N claims score.
    pub fn unclamped(psi: u32) -> Self {
        Self {
            psi,
            l_min: None,
            l_max: None,
            l_start: DEFAULT_L_START,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.psi == 0 {
            return Err(Error::argument("psi must be at least 1"));
        }
        if self.l_min.is_some_and(|lo| lo > self.l_start) || self.l_max.is_some_and(|hi| hi < self.l_start) {
            return Err(Error::argument(format!(
                "bounds [{:?}, {:?}] must contain the starting level {}",
                self.l_min, self.l_max, self.l_start
            )));
        }
        Ok(())
    }

    pub fn is_clamped(&self) -> bool {
        self.l_min.is_some() || self.l_max.is_some()
    }

    fn clamp(&self, l: i64) -> i64 {
        let l = self.l_min.map_or(l, |lo| l.max(lo));
        self.l_max.map_or(l, |hi| l.min(hi))
    }

    /// One step of the recursion for a policy-year with `n` claims.
    pub fn step(&self, level: i64, n: u32) -> i64 {
        let next = if n == 0 { level - 1 } else { level + self.psi as i64 * n as i64 };
        self.clamp(next)
    }
}

/// Level of a contract: the per-year clamped recursion over the window when
/// bounds are set, `l_start − κ + Ψ n` otherwise.
pub fn bms_level(scope: &ScopeSummary, structure: &BmsStructure) -> i64 {
    if !structure.is_clamped() {
        return structure.l_start - scope.kappa_dotdot as i64 + structure.psi as i64 * scope.n_dotdot as i64;
    }
    scope
        .history
        .iter()
        .fold(structure.l_start, |l, &n| structure.step(l, n))
}

/// Levels in years `window + 1 ..= history.len()` of a policy observed every year.
pub fn level_trajectory(history: &[u32], structure: &BmsStructure, window_years: u32) -> Vec<i64> {
    let w = window_years as usize;
    (w..history.len())
        .map(|t| bms_level(&ScopeSummary::from_history(&history[t - w..t]), structure))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDiagnostics {
    pub train_policies: usize,
    pub test_policies: usize,
    pub train_frequency: f64,
    pub test_frequency: f64,
    pub train_severity: f64,
    pub test_severity: f64,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Portfolio,
    pub test: Portfolio,
    pub diagnostics: SplitDiagnostics,
}

/// Random partition by policy: `round(train_fraction · policies)` go to training.
pub fn split_train_test(portfolio: &Portfolio, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::argument(format!("train_fraction {train_fraction} outside (0, 1)")));
    }
    if portfolio.is_empty() {
        return Err(Error::argument("empty portfolio"));
    }
    let mut ids = portfolio.policy_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = ((ids.len() as f64 * train_fraction).round() as usize).clamp(0, ids.len());
    let train_ids: HashSet<&str> = ids[..n_train].iter().copied().collect();
    let test_ids: HashSet<&str> = ids[n_train..].iter().copied().collect();
    let train = portfolio.filter_policies(&train_ids);
    let test = portfolio.filter_policies(&test_ids);
    let (train_frequency, train_severity) = train.frequency_and_severity();
    let (test_frequency, test_severity) = test.frequency_and_severity();
    let diagnostics = SplitDiagnostics {
        train_policies: train_ids.len(),
        test_policies: test_ids.len(),
        train_frequency,
        test_frequency,
        train_severity,
        test_severity,
    };
    log::info!(
        "split: {} / {} policies, frequency {:.5} / {:.5}, severity {:.1} / {:.1}",
        diagnostics.train_policies,
        diagnostics.test_policies,
        train_frequency,
        test_frequency,
        train_severity,
        test_severity
    );
    Ok(Split { train, test, diagnostics })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InsuredType {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl InsuredType {
    pub const ALL: [InsuredType; 6] = [Self::A, Self::B, Self::C, Self::D, Self::E, Self::F];

    pub fn label(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::D => "D",
            Self::E => "E",
            Self::F => "F",
        }
    }
}

/// New insureds by length of experience (A–C), experienced ones by windowed claims (D–F).
pub fn classify_insured_type(scope: &ScopeSummary, past_contract_count: u32) -> InsuredType {
    match past_contract_count {
        0 | 1 => InsuredType::A,
        2 | 3 => InsuredType::B,
        4 | 5 => InsuredType::C,
        _ => match scope.n_dotdot {
            0 => InsuredType::D,
            1 => InsuredType::E,
            _ => InsuredType::F,
        },
    }
}
