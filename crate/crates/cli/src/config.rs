use std::path::{Path, PathBuf};

use bonmal::bms_search::{BmsGrid, ModelKind, SelectionConfig, Target};
use bonmal::irls::IrlsConfig;
use bonmal::tweedie::default_power_grid;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TargetArg {
    Frequency,
    Severity,
    LossCostCpg,
    LossCostTweedie,
}

impl TargetArg {
    /// Targets fitted, in order; a CPG loss cost fits two.
    pub fn components(self) -> Vec<Target> {
        match self {
            TargetArg::Frequency => vec![Target::Frequency],
            TargetArg::Severity => vec![Target::Severity],
            TargetArg::LossCostCpg => vec![Target::Frequency, Target::Severity],
            TargetArg::LossCostTweedie => vec![Target::LossCost],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum KindArg {
    Standard,
    KappaN,
    Bms,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Standard => ModelKind::Standard,
            KindArg::KappaN => ModelKind::KappaN,
            KindArg::Bms => ModelKind::Bms,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Selection {
    pub enabled: bool,
    #[serde(flatten)]
    pub settings: SelectionConfig,
}

/// Declarative description of a `fit` run. Every field can be overridden by a flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub contracts: Option<PathBuf>,
    pub claims: Option<PathBuf>,
    pub model: KindArg,
    pub target: TargetArg,
    pub window_years: u32,
    /// First calendar year fitted; defaults to the earliest year plus the window.
    pub min_year: Option<i32>,
    /// Covariates offered to the model; all portfolio covariates when absent.
    pub covariates: Option<Vec<String>>,
    /// Share of policies kept for training; the rest is scored. No split when absent.
    pub train_fraction: Option<f64>,
    pub seed: u64,
    pub grid: BmsGrid,
    /// Tweedie variance power; profiled when absent.
    pub power: Option<f64>,
    pub power_grid: Vec<f64>,
    pub irls: IrlsConfig,
    pub selection: Selection,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            contracts: None,
            claims: None,
            model: KindArg::Bms,
            target: TargetArg::Frequency,
            window_years: bonmal::portfolio::DEFAULT_WINDOW_YEARS,
            min_year: None,
            covariates: None,
            train_fraction: None,
            seed: 1,
            grid: BmsGrid::default(),
            power: None,
            power_grid: default_power_grid(),
            irls: IrlsConfig::default(),
            selection: Selection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (what, p) in [("contracts", &self.contracts), ("claims", &self.claims)] {
            match p {
                None => return Err(CliError::Config(format!("no {what} file given"))),
                Some(p) if !p.exists() => {
                    return Err(CliError::Config(format!("{what} file {} does not exist", p.display())))
                }
                _ => {}
            }
        }
        if self.window_years == 0 {
            return Err(CliError::Config("window_years must be positive".into()));
        }
        if let Some(f) = self.train_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(CliError::Config(format!("train_fraction {f} outside (0, 1)")));
            }
        }
        if self.model == KindArg::Bms {
            self.grid.candidates().map_err(CliError::Core)?;
        }
        if self.selection.enabled && self.selection.settings.cv.folds < 2 {
            return Err(CliError::Config("cross-validation needs at least 2 folds".into()));
        }
        Ok(())
    }
}

/// Parses `3`, `1,2,5` or the inclusive range `90..100`.
pub fn parse_int_list(s: &str) -> Result<Vec<i64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: i64 = a.trim().parse().map_err(|_| format!("bad range start in {part}"))?;
            let b: i64 = b.trim().parse().map_err(|_| format!("bad range end in {part}"))?;
            if a > b {
                return Err(format!("empty range {part}"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("not an integer: {part}"))?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}
