//! The run configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mixmodel::dataset::{DepVarType, Frequency, HolidayTable, MmmDataset, VariableRoles, Window};
use mixmodel::decomposition::{Component, DecompositionConfig};
use mixmodel::evaluation::{LiftStudy, Weights};
use mixmodel::hyper::HyperparameterSpace;
use mixmodel::regression::SplitPlan;
use mixmodel::search::{CsvScope, SearchConfig};
use mixmodel::transforms::AdstockFamily;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Field names follow the input-collection arguments of the reference
/// workflow (`dt_input`, `dep_var`, `paid_media_spends`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dt_input: PathBuf,
    #[serde(default)]
    pub dt_holidays: Option<PathBuf>,
    #[serde(default)]
    pub date_var: Option<String>,
    pub dep_var: String,
    #[serde(default = "revenue")]
    pub dep_var_type: DepVarType,
    #[serde(default)]
    pub prophet_vars: Vec<Component>,
    #[serde(default)]
    pub prophet_country: Option<String>,
    #[serde(default)]
    pub context_vars: Vec<String>,
    pub paid_media_spends: Vec<String>,
    /// Defaults to the spend columns.
    #[serde(default)]
    pub paid_media_vars: Vec<String>,
    #[serde(default)]
    pub organic_vars: Vec<String>,
    #[serde(default)]
    pub factor_vars: Vec<String>,
    pub window_start: String,
    pub window_end: String,
    #[serde(default = "geometric")]
    pub adstock: AdstockFamily,
    #[serde(default)]
    pub frequency: Option<Frequency>,
    /// Bound overrides such as `facebook_S_thetas: [0, 0.3]`.
    #[serde(default)]
    pub hyperparameters: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    pub calibration_input: Option<PathBuf>,
    #[serde(default)]
    pub decomposition: Option<DecompositionConfig>,
    #[serde(default = "defaults::iterations")]
    pub iterations: usize,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default = "defaults::yes")]
    pub ts_validation: bool,
    #[serde(default = "defaults::train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub optimize_weights: Weights,
    #[serde(default = "defaults::min_candidates")]
    pub min_candidates: usize,
    #[serde(default = "defaults::calibration_constraint")]
    pub calibration_constraint: f64,
    #[serde(default = "defaults::csv_out")]
    pub csv_out: Option<CsvScope>,
    #[serde(default = "defaults::yes")]
    pub clusters: bool,
    #[serde(default = "defaults::yes")]
    pub plot_pareto: bool,
    #[serde(default)]
    pub cores: Option<usize>,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
}

fn revenue() -> DepVarType {
    DepVarType::Revenue
}

fn geometric() -> AdstockFamily {
    AdstockFamily::Geometric
}

mod defaults {
    use mixmodel::search::{CsvScope, SearchConfig};

    pub fn iterations() -> usize {
        SearchConfig::default().iterations
    }
    pub fn trials() -> usize {
        SearchConfig::default().trials
    }
    pub fn yes() -> bool {
        true
    }
    pub fn train_fraction() -> f64 {
        mixmodel::regression::SplitPlan::default().train_fraction
    }
    pub fn min_candidates() -> usize {
        SearchConfig::default().min_candidates
    }
    pub fn calibration_constraint() -> f64 {
        SearchConfig::default().calibration_constraint
    }
    pub fn csv_out() -> Option<CsvScope> {
        Some(CsvScope::Pareto)
    }
    pub fn seed() -> u64 {
        SearchConfig::default().seed
    }
}

/// Everything loaded from disk for a run.
pub struct Inputs {
    pub dataset: MmmDataset,
    pub data_path: PathBuf,
    pub holidays: HolidayTable,
    pub studies: Vec<LiftStudy>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dt_input = base.join(&cfg.dt_input);
        cfg.dt_holidays = cfg.dt_holidays.map(|p| base.join(p));
        cfg.calibration_input = cfg.calibration_input.map(|p| base.join(p));
        Ok(cfg)
    }

    pub fn roles(&self) -> VariableRoles {
        VariableRoles {
            dep_var: self.dep_var.clone(),
            dep_var_type: self.dep_var_type,
            paid_media_spends: self.paid_media_spends.clone(),
            paid_media_vars: if self.paid_media_vars.is_empty() {
                self.paid_media_spends.clone()
            } else {
                self.paid_media_vars.clone()
            },
            organic_vars: self.organic_vars.clone(),
            context_vars: self.context_vars.clone(),
            factor_vars: self.factor_vars.clone(),
            prophet_vars: self.prophet_vars.clone(),
            prophet_country: self.prophet_country.clone(),
        }
    }

    pub fn window(&self) -> Result<Window, Failure> {
        Ok(Window::parse(&self.window_start, &self.window_end)?)
    }

    pub fn inputs(&self) -> Result<Inputs, Failure> {
        let data_path = std::fs::canonicalize(&self.dt_input)
            .map_err(|e| Failure::input(format!("{}: {e}", self.dt_input.display())))?;
        let dataset = MmmDataset::load(&data_path, self.roles(), self.window()?, self.frequency)?;
        if let Some(d) = &self.date_var {
            if dataset.date_column() != d {
                return Err(Failure::input(format!(
                    "date_var is '{d}' but the date column of {} is '{}'",
                    data_path.display(),
                    dataset.date_column()
                )));
            }
        }
        let holidays = match &self.dt_holidays {
            Some(p) => HolidayTable::load(p)?,
            None => HolidayTable::default(),
        };
        let studies = match &self.calibration_input {
            Some(p) => LiftStudy::load_csv(p)?,
            None => Vec::new(),
        };
        Ok(Inputs {
            dataset,
            data_path,
            holidays,
            studies,
        })
    }

    pub fn decomposition(&self) -> DecompositionConfig {
        DecompositionConfig {
            components: self.prophet_vars.clone(),
            country: self.prophet_country.clone(),
            ..self.decomposition.clone().unwrap_or_default()
        }
    }

    pub fn split(&self) -> SplitPlan {
        SplitPlan {
            train_fraction: self.train_fraction,
            ts_validation: self.ts_validation,
        }
    }

    pub fn space(&self, ds: &MmmDataset) -> Result<HyperparameterSpace, Failure> {
        Ok(HyperparameterSpace::default_for(ds, self.adstock).with_overrides(&self.hyperparameters)?)
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            iterations: self.iterations,
            trials: self.trials,
            seed: self.seed,
            weights: self.optimize_weights,
            ts_validation: self.ts_validation,
            calibration_constraint: self.calibration_constraint,
            min_candidates: self.min_candidates,
            clusters: self.clusters,
            workers: self.cores,
        }
    }
}
