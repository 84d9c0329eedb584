//! Run directories: manifest, archive, Pareto CSV, one-pagers and models.

use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use mixmodel::dataset::{Frequency, MmmDataset, VariableRoles, Window};
use mixmodel::decomposition::decompose;
use mixmodel::evaluation::{LiftStudy, Weights};
use mixmodel::model::ModelContext;
use mixmodel::regression::SplitPlan;
use mixmodel::reporting::{build_onepager, ClusterPeers, RunSetup, SelectedModel};
use mixmodel::search::{CandidateModel, CsvScope, SearchResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::Failure;

pub const MANIFEST: &str = "manifest.json";
pub const ARCHIVE: &str = "archive.json";
pub const PARETO_CSV: &str = "pareto.csv";
pub const ALL_CSV: &str = "all_candidates.csv";
pub const SELECTED: &str = "selected.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Initial,
    Refresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub run_id: String,
    pub kind: RunKind,
    pub seed: u64,
    pub workers: Option<usize>,
    pub weights: Weights,
    /// The effective run configuration, for initial runs.
    pub config: Option<RunConfig>,
    /// Model the refresh started from.
    pub refreshed_from: Option<String>,
    pub data_path: String,
    pub dataset_fingerprint: String,
    pub roles: VariableRoles,
    pub window: Window,
    pub frequency: Frequency,
    pub split: SplitPlan,
    pub studies: Vec<LiftStudy>,
    pub rssd_reference: Option<Vec<f64>>,
    pub setup: RunSetup,
    pub archive_size: usize,
    pub failed: usize,
    pub pareto_size: usize,
    pub top_model: Option<String>,
    pub clusters: Option<usize>,
    pub onepagers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub model_id: String,
    pub model_file: String,
}

/// Deterministic run name from whatever defines the run.
pub fn run_id(prefix: &str, parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    format!("{prefix}-{}", &hex::encode(h.finalize())[..12])
}

pub fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, body).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| Failure::input(format!("cannot create {}: {e}", path.display())))
}

fn pretty<T: Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure::internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub struct RunOutput<'a> {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub context: &'a ModelContext,
    pub result: &'a SearchResult,
    pub csv_out: Option<CsvScope>,
    pub plot_pareto: bool,
}

impl RunOutput<'_> {
    /// Writes every artifact and returns the manifest as written.
    pub fn write(mut self) -> Result<Manifest, Failure> {
        create_dir(&self.dir)?;
        let r = self.result;
        r.write_csv_file(self.dir.join(PARETO_CSV), CsvScope::Pareto)?;
        if self.csv_out == Some(CsvScope::All) {
            r.write_csv_file(self.dir.join(ALL_CSV), CsvScope::All)?;
        }
        let archive = self.dir.join(ARCHIVE);
        let file = std::fs::File::create(&archive)
            .map_err(|e| Failure::input(format!("cannot write {}: {e}", archive.display())))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, r).map_err(|e| Failure::internal(e.to_string()))?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Failure::input(e.to_string()))?;

        if self.plot_pareto {
            self.manifest.onepagers = render_onepagers(self.context, r, &self.dir.join("onepagers"))?;
        }
        self.manifest.archive_size = r.archive.len();
        self.manifest.failed = r.archive.iter().filter(|c| c.failed()).count();
        self.manifest.pareto_size = r.pareto.len();
        self.manifest.top_model = r.top().map(|c| c.id.clone());
        self.manifest.clusters = r.clustering.as_ref().map(|c| c.k);
        write(&self.dir.join(MANIFEST), pretty(&self.manifest)?)?;
        Ok(self.manifest)
    }
}

fn peers(result: &SearchResult, id: &str) -> Option<ClusterPeers> {
    let members = result.cluster_members(id)?;
    Some(ClusterPeers {
        cluster: result.get(id)?.cluster?,
        efficiencies: members.iter().map(|m| m.efficiencies.clone()).collect(),
    })
}

/// One one-pager directory per Pareto candidate, rendered in parallel.
fn render_onepagers(ctx: &ModelContext, result: &SearchResult, dir: &Path) -> Result<usize, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(result.config.worker_count())
        .build()
        .map_err(|e| Failure::internal(e.to_string()))?;
    let candidates: Vec<&CandidateModel> = result.ranked().collect();
    pool.install(|| {
        candidates
            .par_iter()
            .map(|c| {
                let fit = ctx.evaluate(&c.hyperparameters)?;
                let page = build_onepager(&fit, &c.id, peers(result, &c.id).as_ref(), result.config.seed);
                page.render(dir.join(&c.id))?;
                Ok(())
            })
            .collect::<Result<Vec<()>, Failure>>()
    })?;
    Ok(candidates.len())
}

pub fn read_manifest(run: &Path) -> Result<Manifest, Failure> {
    let path = run.join(MANIFEST);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::input(format!("{} is not a run directory: {e}", run.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Rebuilds the run's model context from the manifest.
pub fn context(m: &Manifest) -> Result<ModelContext, Failure> {
    let ds = MmmDataset::load(&m.data_path, m.roles.clone(), m.window, Some(m.frequency))?;
    if ds.fingerprint() != m.dataset_fingerprint {
        return Err(Failure::input(format!("{} changed since the run was made", m.data_path)));
    }
    let dec = decompose(&ds, &m.setup.holidays, &m.setup.decomposition)?;
    let mut ctx = ModelContext::new(ds, dec, m.split, m.studies.clone())?;
    if let Some(r) = &m.rssd_reference {
        ctx = ctx.with_rssd_reference(r.clone())?;
    }
    Ok(ctx)
}

/// Finds one candidate in the archive without deserializing the others,
/// whose failed scores are not representable in JSON.
pub fn find_candidate(run: &Path, id: &str) -> Result<CandidateModel, Failure> {
    let path = run.join(ARCHIVE);
    let file = std::fs::File::open(&path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let archive = value
        .get("archive")
        .and_then(|a| a.as_array())
        .ok_or_else(|| Failure::input(format!("{} has no archive", path.display())))?;
    let Some(entry) = archive.iter().find(|c| c.get("id").and_then(|v| v.as_str()) == Some(id)) else {
        return Err(Failure::input(format!("model '{id}' is not in the archive of {}", run.display())));
    };
    if let Some(err) = entry.get("error").and_then(|e| e.as_str()) {
        return Err(Failure::input(format!("model '{id}' failed to evaluate ({err}) and cannot be selected")));
    }
    serde_json::from_value(entry.clone()).map_err(|e| Failure::internal(format!("archive entry {id}: {e}")))
}

/// Exports `id` into `<run>/models` and records it as the run's selection.
pub fn select(run: &Path, id: &str) -> Result<PathBuf, Failure> {
    let manifest = read_manifest(run)?;
    let candidate = find_candidate(run, id)?;
    let ctx = context(&manifest)?;
    let model = SelectedModel::from_candidate(&ctx, &manifest.setup, &candidate)?;
    let path = model.export(run.join("models"))?;
    let selection = Selection {
        model_id: id.to_string(),
        model_file: path.to_string_lossy().into_owned(),
    };
    write(&run.join(SELECTED), pretty(&selection)?)?;
    Ok(path)
}

/// A model file, or the selection recorded in a run directory.
pub fn resolve_model(path: &Path) -> Result<PathBuf, Failure> {
    if !path.is_dir() {
        return Ok(path.to_path_buf());
    }
    let sel = path.join(SELECTED);
    if !sel.exists() {
        return Err(Failure::input(format!(
            "no selected model in {}: pick a candidate with `mixmodel select <model-id> --run {}` first",
            path.display(),
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&sel).map_err(|e| Failure::input(format!("{}: {e}", sel.display())))?;
    let s: Selection = serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", sel.display())))?;
    Ok(PathBuf::from(s.model_file))
}
