//! Re-estimation of a selected model on a window advanced over new data.

use serde::{Deserialize, Serialize};

use crate::dataset::{MmmDataset, Window};
use crate::decomposition::decompose;
use crate::error::{bail, Result};
use crate::evaluation::LiftStudy;
use crate::model::ModelContext;
use crate::reporting::{ExportedModel, RunSetup};
use crate::search::{run_search, SearchConfig, SearchResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshConfig {
    /// Periods the window advances by.
    pub steps: usize,
    pub iterations: usize,
    pub trials: usize,
    /// Defaults to the previous run's seed.
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl RefreshConfig {
    pub fn new(steps: usize) -> Self {
        RefreshConfig {
            steps,
            iterations: 1000,
            trials: 3,
            seed: None,
            workers: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefreshRun {
    pub previous_id: String,
    pub window: Window,
    pub context: ModelContext,
    pub setup: RunSetup,
    pub result: SearchResult,
}

/// The previous window shifted by `steps` periods.
pub fn advanced_window(doc: &ExportedModel, steps: usize) -> Window {
    let shift = chrono::Duration::days(doc.frequency.days() * steps as i64);
    Window::new(doc.window.start + shift, doc.window.end + shift)
}

/// Builds the refresh context: new window, narrowed space, studies inside
/// the new window and Decomp.RSSD measured against the previous effect
/// shares.
pub fn refresh_context(
    doc: &ExportedModel,
    data: &MmmDataset,
    cfg: &RefreshConfig,
    studies: Option<Vec<LiftStudy>>,
) -> Result<(ModelContext, RunSetup)> {
    if cfg.steps == 0 {
        bail!(InvalidParameter, "refresh steps must be at least 1");
    }
    if data.roles() != &doc.roles {
        bail!(InvalidData, "variable roles of the new data differ from the model's");
    }
    if data.frequency() != doc.frequency {
        bail!(
            InvalidData,
            "new data is {} but the model was fitted on {} data",
            data.frequency(),
            doc.frequency
        );
    }
    let window = advanced_window(doc, cfg.steps);
    let last = *data.dates().last().expect("dataset has rows");
    if last < window.end {
        let have = (last - doc.window.end).num_days().max(0) / doc.frequency.days();
        bail!(
            InvalidData,
            "refresh needs {} new periods after {} but the data has {have}",
            cfg.steps,
            doc.window.end
        );
    }
    let ds = data.with_window(window)?;
    let dec = decompose(&ds, &doc.holidays, &doc.decomposition)?;
    let studies: Vec<LiftStudy> = studies
        .unwrap_or_else(|| doc.calibration.clone())
        .into_iter()
        .filter(|s| s.lift_start >= window.start && s.lift_end <= window.end)
        .collect();
    let ctx = ModelContext::new(ds, dec, doc.split, studies)?.with_rssd_reference(doc.effect_shares.clone())?;
    let space = doc.space.narrowed_around(&doc.hyperparameters)?;
    let search = SearchConfig {
        iterations: cfg.iterations,
        trials: cfg.trials,
        seed: cfg.seed.unwrap_or(doc.search.seed),
        workers: cfg.workers.or(doc.search.workers),
        ..doc.search.clone()
    };
    let setup = RunSetup {
        decomposition: doc.decomposition.clone(),
        holidays: doc.holidays.clone(),
        family: doc.adstock,
        space,
        search,
        data_path: None,
    };
    Ok((ctx, setup))
}

/// Runs the refresh search.
pub fn refresh_model(
    doc: &ExportedModel,
    data: &MmmDataset,
    cfg: &RefreshConfig,
    studies: Option<Vec<LiftStudy>>,
) -> Result<RefreshRun> {
    let (context, setup) = refresh_context(doc, data, cfg, studies)?;
    let result = run_search(&context, &setup.space, &setup.search)?;
    Ok(RefreshRun {
        previous_id: doc.id.clone(),
        window: context.dataset().window(),
        context,
        setup,
        result,
    })
}
