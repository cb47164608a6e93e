use std::collections::HashMap;
use std::path::{Path, PathBuf};

use bonmal::bms_search::{
    fit_bms, fit_kappa_n, fit_standard, fit_with_experience, select_covariates, write_profile_csv, CpgModel, Experience,
    FitOptions, FittedModel, InnerFit, ModelData, ModelKind, Target,
};
use bonmal::evaluate::{
    aic, bic, logarithmic_score, relativity_table, write_group_csv, write_relativity_csv, Model, ModelReport,
};
use bonmal::portfolio::{bms_level, load_portfolio, split_train_test, write_portfolio, BmsStructure, Portfolio, ScopeSummary};
use bonmal::simulator::{simulate_portfolio, SimSpec};
use serde::{Deserialize, Serialize};

use crate::config::{parse_int_list, RunConfig, TargetArg};
use crate::manifest::{write_json, Manifest};
use crate::{CliError, CompareArgs, FitArgs, ReportArgs, ScoreArgs, SimulateArgs};

/// Everything `fit` writes about a model, enough to score or report it later.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitFile {
    pub config: RunConfig,
    pub min_year: i32,
    pub offered_covariates: Vec<String>,
    pub model: Model,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut spec = match &a.spec {
        Some(p) => read_json::<SimSpec>(p)?,
        None => SimSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.policies {
        spec.n_policies = n;
    }
    if let Some(y) = a.years {
        spec.years = y;
    }
    if let Some(f) = a.base_frequency {
        spec.base_frequency = f;
    }
    let out = simulate_portfolio(&spec)?;
    create_dir(&a.out)?;
    write_portfolio(&out.portfolio, a.out.join("contracts.csv"), a.out.join("claims.csv"))?;
    out.write_truth(a.out.join("truth.csv"))?;
    write_json(&a.out.join("spec.json"), &spec)?;
    let inputs: Vec<&Path> = a.spec.iter().map(PathBuf::as_path).collect();
    let mut manifest = Manifest::new("simulate", &spec, Some(spec.seed), &inputs)?;
    manifest.outputs = ["contracts.csv", "claims.csv", "truth.csv", "spec.json"].map(String::from).to_vec();
    manifest.write(&a.out)?;
    println!(
        "simulated {} contracts and {} claims into {}",
        out.portfolio.len(),
        out.portfolio.claims().len(),
        a.out.display()
    );
    Ok(())
}

fn resolve_config(a: &FitArgs) -> Result<RunConfig, CliError> {
    let mut c = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if a.contracts.is_some() {
        c.contracts = a.contracts.clone();
    }
    if a.claims.is_some() {
        c.claims = a.claims.clone();
    }
    if let Some(m) = a.model {
        c.model = m;
    }
    if let Some(t) = a.target {
        c.target = t;
    }
    if let Some(w) = a.window_years {
        c.window_years = w;
    }
    if a.min_year.is_some() {
        c.min_year = a.min_year;
    }
    if a.covariates.is_some() {
        c.covariates = a.covariates.clone();
    }
    if a.train_fraction.is_some() {
        c.train_fraction = a.train_fraction;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    let ints = |s: &str| parse_int_list(s).map_err(CliError::Config);
    if let Some(s) = &a.psi {
        c.grid.psi = ints(s)?
            .into_iter()
            .map(|v| u32::try_from(v).map_err(|_| CliError::Config(format!("psi {v} is not a natural number"))))
            .collect::<Result<_, _>>()?;
    }
    if let Some(s) = &a.l_min {
        c.grid.l_min = ints(s)?;
    }
    if let Some(s) = &a.l_max {
        c.grid.l_max = ints(s)?;
    }
    if a.power.is_some() {
        c.power = a.power;
    }
    if a.select {
        c.selection.enabled = true;
    }
    if let Some(o) = &a.out {
        c.output_dir = o.clone();
    }
    // the single seed drives the split and the folds
    c.selection.settings.cv.seed = c.seed;
    c.validate()?;
    Ok(c)
}

/// Earliest calendar year plus the window: the first year with a full history.
fn default_min_year(portfolio: &Portfolio, window_years: u32) -> i32 {
    portfolio.contracts().iter().map(|c| c.calendar_year).min().unwrap_or(0) + window_years as i32
}

struct Prepared {
    train: ModelData,
    test: Option<ModelData>,
    min_year: i32,
}

fn prepare(config: &RunConfig, portfolio: &Portfolio) -> Result<Prepared, CliError> {
    let min_year = config
        .min_year
        .unwrap_or_else(|| default_min_year(portfolio, config.window_years));
    let w = config.window_years;
    Ok(match config.train_fraction {
        Some(f) => {
            let split = split_train_test(portfolio, f, config.seed)?;
            Prepared {
                train: ModelData::new(&split.train, w, Some(min_year))?,
                test: Some(ModelData::new(&split.test, w, Some(min_year))?),
                min_year,
            }
        }
        None => Prepared {
            train: ModelData::new(portfolio, w, Some(min_year))?,
            test: None,
            min_year,
        },
    })
}

fn fit_component(config: &RunConfig, data: &ModelData, target: Target, offered: &[String]) -> Result<FittedModel, CliError> {
    let kind: ModelKind = config.model.into();
    let mut options = FitOptions {
        irls: config.irls,
        power: config.power,
        power_grid: config.power_grid.clone(),
    };
    let stage = if kind == ModelKind::Standard {
        Experience::None
    } else {
        Experience::KappaN
    };
    if target == Target::LossCost && options.power.is_none() {
        // the variance power is profiled once and then held fixed
        let m = fit_with_experience(data, target, offered, stage, &options)?;
        if let InnerFit::Dglm(f) = &m.fit {
            log::info!("variance power {}", f.p);
            options.power = Some(f.p);
        }
    }
    let covariates = if config.selection.enabled {
        let chosen = select_covariates(
            data,
            target,
            offered,
            &stage,
            options.power.unwrap_or(1.5),
            &config.selection.settings,
        )?;
        log::info!("{target:?}: selected covariates {chosen:?}");
        chosen
    } else {
        offered.to_vec()
    };
    Ok(match kind {
        ModelKind::Standard => fit_standard(data, target, &covariates, &options)?,
        ModelKind::KappaN => fit_kappa_n(data, target, &covariates, &options)?,
        ModelKind::Bms => fit_bms(data, target, &covariates, &config.grid, &options)?,
    })
}

fn target_label(t: Target) -> &'static str {
    match t {
        Target::Frequency => "frequency",
        Target::Severity => "severity",
        Target::LossCost => "loss_cost",
    }
}

/// Profile and relativity tables of one component, suffixed by target for CPG pairs.
fn write_component_tables(m: &FittedModel, dir: &Path, suffix: &str, outputs: &mut Vec<String>) -> Result<(), CliError> {
    if !m.profile.is_empty() {
        let name = format!("profile{suffix}.csv");
        write_profile_csv(&m.profile, dir.join(&name))?;
        outputs.push(name);
    }
    if let (Some(s), Some(g)) = (m.structure(), m.gamma0()) {
        if s.is_clamped() {
            let name = format!("relativities{suffix}.csv");
            write_relativity_csv(&relativity_table(g, &s)?, dir.join(&name))?;
            outputs.push(name);
        }
    }
    Ok(())
}

fn write_model_tables(model: &Model, dir: &Path, outputs: &mut Vec<String>) -> Result<(), CliError> {
    match model {
        Model::Single(m) => write_component_tables(m, dir, "", outputs),
        Model::Cpg(m) => {
            write_component_tables(&m.frequency, dir, "_frequency", outputs)?;
            write_component_tables(&m.severity, dir, "_severity", outputs)
        }
    }
}

pub fn fit(a: &FitArgs) -> Result<(), CliError> {
    let config = resolve_config(a)?;
    let contracts = config.contracts.clone().expect("validated");
    let claims = config.claims.clone().expect("validated");
    let portfolio = load_portfolio(&contracts, &claims)?;
    let prepared = prepare(&config, &portfolio)?;
    let offered = config
        .covariates
        .clone()
        .unwrap_or_else(|| portfolio.covariate_names().to_vec());
    let mut fits = Vec::new();
    for target in config.target.components() {
        fits.push(fit_component(&config, &prepared.train, target, &offered)?);
    }
    let model = if config.target == TargetArg::LossCostCpg {
        let sev = fits.pop().expect("two components");
        let freq = fits.pop().expect("two components");
        Model::Cpg(CpgModel::new(freq, sev)?)
    } else {
        Model::Single(fits.pop().expect("one component"))
    };
    let report = ModelReport::build(&model, &prepared.train, prepared.test.as_ref())?;

    let dir = config.output_dir.clone();
    create_dir(&dir)?;
    let mut outputs = vec!["fit.json".to_string(), "report.json".to_string(), "groups.csv".to_string()];
    write_json(
        &dir.join("fit.json"),
        &FitFile {
            config: config.clone(),
            min_year: prepared.min_year,
            offered_covariates: offered,
            model: model.clone(),
        },
    )?;
    write_json(&dir.join("report.json"), &report)?;
    write_group_csv(&report.group_ratios, dir.join("groups.csv"))?;
    write_model_tables(&model, &dir, &mut outputs)?;
    let mut manifest = Manifest::new("fit", &config, Some(config.seed), &[&contracts, &claims])?;
    manifest.outputs = outputs;
    manifest.write(&dir)?;

    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print!(
        "{} {}: {} parameters, loglik {:.3}, AIC {:.3}, BIC {:.3}",
        report.model, report.family, report.n_params, report.loglik, report.aic, report.bic
    );
    match report.sl_score {
        Some(sl) => println!(", SL {sl:.3}"),
        None => println!(),
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ComparisonRow {
    model: String,
    family: String,
    n_params: usize,
    loglik: f64,
    aic: f64,
    bic: f64,
    sl: Option<f64>,
}

fn kind_rank(kind: &str) -> usize {
    ["standard", "kappa_n", "bms"].iter().position(|k| *k == kind).unwrap_or(usize::MAX)
}

fn family_rank(family: &str) -> usize {
    ["poisson", "gamma", "cpg", "tweedie"]
        .iter()
        .position(|f| *f == family)
        .unwrap_or(usize::MAX)
}

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let portfolio = load_portfolio(&a.contracts, &a.claims)?;
    let mut cache: HashMap<String, Prepared> = HashMap::new();
    let mut rows = Vec::new();
    for path in &a.fits {
        let f: FitFile = read_json(path)?;
        let key = format!(
            "{:?}|{}|{}|{}",
            f.config.train_fraction, f.config.seed, f.config.window_years, f.min_year
        );
        if !cache.contains_key(&key) {
            let config = RunConfig {
                min_year: Some(f.min_year),
                ..f.config.clone()
            };
            cache.insert(key.clone(), prepare(&config, &portfolio)?);
        }
        let prepared = &cache[&key];
        let loglik = f.model.loglik_on(&prepared.train)?;
        let k = f.model.n_params();
        let n = f.model.n_obs(&prepared.train);
        rows.push(ComparisonRow {
            model: f.model.kind_name().to_string(),
            family: f.model.family().to_string(),
            n_params: k,
            loglik,
            aic: aic(loglik, k),
            bic: bic(loglik, k, n),
            sl: prepared
                .test
                .as_ref()
                .map(|t| logarithmic_score(&f.model, t))
                .transpose()?,
        });
    }
    rows.sort_by_key(|r| (kind_rank(&r.model), family_rank(&r.family)));
    let mut w = csv::Writer::from_path(&a.out).map_err(bonmal::Error::from)?;
    for r in &rows {
        w.serialize(r).map_err(bonmal::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(&a.out, e))?;
    println!("compared {} fits into {}", rows.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct ScoreOutput {
    sl: f64,
    n_obs: usize,
}

pub fn score(a: &ScoreArgs) -> Result<(), CliError> {
    let f: FitFile = read_json(&a.fit)?;
    let test = load_portfolio(&a.contracts, &a.claims)?;
    let data = ModelData::new(&test, f.config.window_years, Some(f.min_year))?;
    let sl = logarithmic_score(&f.model, &data)?;
    let out = ScoreOutput {
        sl,
        n_obs: f.model.n_obs(&data),
    };
    if let Some(p) = &a.out {
        write_json(p, &out)?;
    }
    println!("SL {sl:.6} over {} observations", out.n_obs);
    Ok(())
}

/// Levels of every year of every history, each from at most `window` preceding years.
fn trajectory_rows(
    histories: &[(String, Vec<u32>)],
    scales: &[(String, BmsStructure)],
    window: usize,
) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (scale, s) in scales {
        for (insured, h) in histories {
            let mut row = vec![scale.clone(), insured.clone()];
            row.extend((0..h.len()).map(|t| {
                let scope = ScopeSummary::from_history(&h[t.saturating_sub(window)..t]);
                bms_level(&scope, s).to_string()
            }));
            rows.push(row);
        }
    }
    rows
}

fn read_histories(path: &Path) -> Result<(Vec<String>, Vec<(String, Vec<u32>)>), CliError> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(bonmal::Error::from)?;
    let header: Vec<String> = r.headers().map_err(bonmal::Error::from)?.iter().skip(1).map(String::from).collect();
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(bonmal::Error::from)?;
        let line = i as u64 + 2;
        let bad = |message: String| {
            CliError::Core(bonmal::Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            })
        };
        let id = rec.get(0).ok_or_else(|| bad("missing insured".into()))?.to_string();
        let counts = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<u32>().map_err(|_| bad(format!("claim count {v:?} is not a non-negative integer"))))
            .collect::<Result<Vec<_>, _>>()?;
        out.push((id, counts));
    }
    Ok((header, out))
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    if a.fit.is_none() && a.trajectories.is_none() {
        return Err(CliError::Config("report needs --fit, --trajectories, or both".into()));
    }
    create_dir(&a.out)?;
    let fit: Option<FitFile> = a.fit.as_deref().map(read_json).transpose()?;
    let mut outputs = Vec::new();
    let mut inputs: Vec<&Path> = Vec::new();
    inputs.extend(a.fit.as_deref());
    if let Some(f) = &fit {
        write_model_tables(&f.model, &a.out, &mut outputs)?;
        if let (Some(c), Some(k)) = (&a.contracts, &a.claims) {
            let portfolio = load_portfolio(c, k)?;
            let data = ModelData::new(&portfolio, f.config.window_years, Some(f.min_year))?;
            let report = ModelReport::build(&f.model, &data, None)?;
            write_json(&a.out.join("report.json"), &report)?;
            write_group_csv(&report.group_ratios, a.out.join("groups.csv"))?;
            outputs.extend(["report.json".to_string(), "groups.csv".to_string()]);
            inputs.extend([c.as_path(), k.as_path()]);
        }
    }
    if let Some(path) = &a.trajectories {
        let scales: Vec<(String, BmsStructure)> = match (&fit, a.psi, a.l_min, a.l_max) {
            (_, Some(psi), Some(lo), Some(hi)) => vec![("given".into(), BmsStructure::new(psi, lo, hi)?)],
            (Some(f), None, None, None) => {
                let comps: Vec<&FittedModel> = match &f.model {
                    Model::Single(m) => vec![m],
                    Model::Cpg(m) => vec![&m.frequency, &m.severity],
                };
                comps
                    .into_iter()
                    .filter_map(|m| m.structure().map(|s| (target_label(m.target).to_string(), s)))
                    .collect()
            }
            _ => {
                return Err(CliError::Config(
                    "trajectories need --psi, --l-min and --l-max together, or a BMS fit".into(),
                ))
            }
        };
        if scales.is_empty() {
            return Err(CliError::Config("the fit has no bonus-malus scale".into()));
        }
        let window = fit.as_ref().map_or(a.window_years, |f| f.config.window_years) as usize;
        let (years, histories) = read_histories(path)?;
        let out = a.out.join("trajectories.csv");
        let mut w = csv::Writer::from_path(&out).map_err(bonmal::Error::from)?;
        let mut header = vec!["scale".to_string(), "insured".to_string()];
        header.extend(years);
        w.write_record(&header).map_err(bonmal::Error::from)?;
        for row in trajectory_rows(&histories, &scales, window) {
            w.write_record(&row).map_err(bonmal::Error::from)?;
        }
        w.flush().map_err(|e| CliError::io(&out, e))?;
        outputs.push("trajectories.csv".into());
        inputs.push(path);
    }
    let settings = serde_json::json!({
        "psi": a.psi,
        "l_min": a.l_min,
        "l_max": a.l_max,
        "window_years": a.window_years,
    });
    let mut manifest = Manifest::new("report", &settings, fit.as_ref().map(|f| f.config.seed), &inputs)?;
    manifest.outputs = outputs;
    manifest.write(&a.out)?;
    println!("report written to {}", a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectories_use_partial_windows_early() {
        let s = BmsStructure::new(3, 95, 106).unwrap();
        let rows = trajectory_rows(&[("1".into(), vec![0; 8])], &[("n".into(), s)], 6);
        assert_eq!(rows[0][2..], ["100", "99", "98", "97", "96", "95", "95", "95"]);
    }

    #[test]
    fn table_order() {
        assert!(kind_rank("standard") < kind_rank("kappa_n") && kind_rank("kappa_n") < kind_rank("bms"));
        assert!(family_rank("gamma") < family_rank("cpg"));
    }
}
