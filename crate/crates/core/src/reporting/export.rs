//! Model documents: a selected candidate with everything needed to rebuild
//! and re-score it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{DepVarType, Frequency, HolidayTable, MmmDataset, VariableRoles, Window};
use crate::decomposition::{decompose, DecompositionConfig};
use crate::error::{bail, Error, Result};
use crate::evaluation::{LiftStudy, ObjectiveScores};
use crate::hyper::{HyperparameterSpace, HyperparameterVector};
use crate::model::{ChannelSummary, ModelContext, ModelFit};
use crate::regression::{ColumnRole, FitMetrics, LambdaBounds, SplitPlan};
use crate::search::{CandidateModel, SearchConfig};
use crate::transforms::AdstockFamily;

pub const SCHEMA_VERSION: u32 = 1;
const RESCORE_TOLERANCE: f64 = 1e-9;

/// Run-level settings a model document carries along.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSetup {
    pub decomposition: DecompositionConfig,
    pub holidays: HolidayTable,
    pub family: AdstockFamily,
    pub space: HyperparameterSpace,
    pub search: SearchConfig,
    /// Where the data was read from, if known.
    pub data_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedCoefficient {
    pub name: String,
    pub role: ColumnRole,
    pub standardized: f64,
    pub data: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedChannel {
    #[serde(flatten)]
    pub summary: ChannelSummary,
    pub lag_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedModel {
    pub schema_version: u32,
    pub id: String,
    pub dataset_fingerprint: String,
    pub data_path: Option<String>,
    pub roles: VariableRoles,
    pub window: Window,
    pub frequency: Frequency,
    pub adstock: AdstockFamily,
    pub decomposition: DecompositionConfig,
    /// Holidays of the configured country.
    pub holidays: HolidayTable,
    pub split: SplitPlan,
    pub space: HyperparameterSpace,
    pub search: SearchConfig,
    pub calibration: Vec<LiftStudy>,
    /// Effect shares Decomp.RSSD was measured against, for refresh models.
    pub rssd_reference: Option<Vec<f64>>,
    pub hyperparameters: HyperparameterVector,
    pub lambda: f64,
    pub lambda_bounds: LambdaBounds,
    pub intercept: f64,
    pub coefficients: Vec<ExportedCoefficient>,
    pub channels: Vec<ExportedChannel>,
    pub effect_shares: Vec<f64>,
    pub spend_shares: Vec<f64>,
    pub metrics: FitMetrics,
    pub scores: ObjectiveScores,
    pub pareto_front: Option<usize>,
    pub cluster: Option<usize>,
}

impl ExportedModel {
    pub fn file_name(&self) -> String {
        model_file_name(&self.id)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let probe: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Parse(format!("corrupt model file: {e}")))?;
        match probe.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => bail!(Parse, "unsupported model schema version {v} (expected {SCHEMA_VERSION})"),
            None => bail!(Parse, "corrupt model file: no schema_version"),
        }
        serde_json::from_value(probe).map_err(|e| Error::Parse(format!("corrupt model file: {e}")))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }

    pub fn dep_var_type(&self) -> DepVarType {
        self.roles.dep_var_type
    }
}

pub fn model_file_name(id: &str) -> String {
    format!("RobynModel-{id}.json")
}

/// A candidate that has been explicitly selected: the document plus the
/// rebuilt fit on its dataset.
#[derive(Debug, Clone)]
pub struct SelectedModel {
    pub document: ExportedModel,
    pub context: ModelContext,
    pub fit: ModelFit,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= RESCORE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

fn scores_match(a: &ObjectiveScores, b: &ObjectiveScores) -> bool {
    same(a.nrmse, b.nrmse)
        && same(a.decomp_rssd, b.decomp_rssd)
        && match (a.mape_lift, b.mape_lift) {
            (Some(x), Some(y)) => same(x, y),
            (None, None) => true,
            _ => false,
        }
}

impl SelectedModel {
    /// Re-evaluates `candidate` in `ctx` and packages it.
    pub fn from_candidate(ctx: &ModelContext, setup: &RunSetup, candidate: &CandidateModel) -> Result<Self> {
        if candidate.failed() {
            bail!(Model, "candidate {} failed to evaluate and cannot be selected", candidate.id);
        }
        let fit = ctx.evaluate(&candidate.hyperparameters)?;
        if !scores_match(&fit.scores, &candidate.scores) {
            bail!(Model, "candidate {} does not reproduce its archived scores", candidate.id);
        }
        let ds = ctx.dataset();
        let holidays = match &setup.decomposition.country {
            Some(c) => setup.holidays.for_country(c),
            None => HolidayTable::default(),
        };
        let document = ExportedModel {
            schema_version: SCHEMA_VERSION,
            id: candidate.id.clone(),
            dataset_fingerprint: ds.fingerprint(),
            data_path: setup.data_path.clone(),
            roles: ds.roles().clone(),
            window: ds.window(),
            frequency: ds.frequency(),
            adstock: setup.family,
            decomposition: setup.decomposition.clone(),
            holidays,
            split: ctx.split_plan(),
            space: setup.space.clone(),
            search: setup.search.clone(),
            calibration: ctx.studies().to_vec(),
            rssd_reference: ctx.rssd_reference().map(<[f64]>::to_vec),
            hyperparameters: fit.hyperparameters.clone(),
            lambda: fit.ridge.lambda,
            lambda_bounds: fit.lambda_bounds,
            intercept: fit.ridge.intercept_data,
            coefficients: fit
                .design
                .names
                .iter()
                .enumerate()
                .map(|(j, name)| ExportedCoefficient {
                    name: name.clone(),
                    role: fit.design.roles[j],
                    standardized: fit.ridge.coefficients[j],
                    data: fit.ridge.coefficients_data[j],
                    mean: fit.design.standardization[j].mean,
                    sd: fit.design.standardization[j].sd,
                })
                .collect(),
            channels: fit
                .channels
                .iter()
                .zip(&fit.transforms)
                .map(|(c, t)| ExportedChannel {
                    summary: c.clone(),
                    lag_weights: t.lag_weights.clone(),
                })
                .collect(),
            effect_shares: fit.effect_shares.clone(),
            spend_shares: fit.spend_shares.clone(),
            metrics: fit.metrics,
            scores: fit.scores,
            pareto_front: candidate.pareto_front,
            cluster: candidate.cluster,
        };
        Ok(SelectedModel {
            document,
            context: ctx.clone(),
            fit,
        })
    }

    /// Rebuilds a model from its document on `ds` and checks that it
    /// reproduces the stored scores.
    pub fn from_document(document: ExportedModel, ds: MmmDataset, allow_fingerprint_mismatch: bool) -> Result<Self> {
        let fp = ds.fingerprint();
        if fp != document.dataset_fingerprint && !allow_fingerprint_mismatch {
            bail!(
                InvalidData,
                "dataset fingerprint {} does not match the model's {}",
                &fp[..12],
                &document.dataset_fingerprint[..document.dataset_fingerprint.len().min(12)]
            );
        }
        if ds.roles() != &document.roles || ds.window() != document.window {
            bail!(InvalidData, "dataset roles or window differ from the model document");
        }
        let dec = decompose(&ds, &document.holidays, &document.decomposition)?;
        let mut ctx = ModelContext::new(ds, dec, document.split, document.calibration.clone())?;
        if let Some(r) = &document.rssd_reference {
            ctx = ctx.with_rssd_reference(r.clone())?;
        }
        let fit = ctx.evaluate(&document.hyperparameters)?;
        if !scores_match(&fit.scores, &document.scores) && !allow_fingerprint_mismatch {
            bail!(
                Model,
                "re-scored model {} differs from its document (NRMSE {} vs {})",
                document.id,
                fit.scores.nrmse,
                document.scores.nrmse
            );
        }
        Ok(SelectedModel {
            document,
            context: ctx,
            fit,
        })
    }

    pub fn import(path: impl AsRef<Path>, ds: MmmDataset, allow_fingerprint_mismatch: bool) -> Result<Self> {
        Self::from_document(ExportedModel::read(path)?, ds, allow_fingerprint_mismatch)
    }

    /// Loads the dataset the document points to (or `data_path`) and imports.
    pub fn open(path: impl AsRef<Path>, data_path: Option<&Path>, allow_fingerprint_mismatch: bool) -> Result<Self> {
        let doc = ExportedModel::read(&path)?;
        let data: PathBuf = match (data_path, &doc.data_path) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => PathBuf::from(p),
            (None, None) => bail!(InvalidParameter, "model document has no data path; pass the dataset explicitly"),
        };
        let ds = MmmDataset::load(&data, doc.roles.clone(), doc.window, Some(doc.frequency))?;
        Self::from_document(doc, ds, allow_fingerprint_mismatch)
    }

    pub fn id(&self) -> &str {
        &self.document.id
    }

    /// Writes `RobynModel-<id>.json` into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(self.document.file_name());
        std::fs::write(&path, self.document.to_json()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
