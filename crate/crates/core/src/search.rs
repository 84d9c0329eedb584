//! Differential-evolution search over the hyperparameter hypercube, the
//! candidate archive, Pareto ranking and candidate clustering.

use std::io::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_candidates, Clustering};
use crate::error::{bail, Error, Result};
use crate::evaluation::{scalarize, ArchiveRanges, Objective, ObjectiveScores, Weights};
use crate::hyper::{HyperparameterSpace, HyperparameterVector};
use crate::model::{ModelContext, ModelFit};
use crate::pareto::{nondominated_sort, quantile};
use crate::regression::FitMetrics;
use crate::transforms::AdstockParams;

pub const POPULATION: usize = 32;
pub const MUTATION: f64 = 0.8;
pub const CROSSOVER: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Evaluations per trial.
    pub iterations: usize,
    pub trials: usize,
    pub seed: u64,
    pub weights: Weights,
    pub ts_validation: bool,
    /// Quantile of archive MAPE.LIFT kept for Pareto output.
    pub calibration_constraint: f64,
    pub min_candidates: usize,
    pub clusters: bool,
    /// Evaluation threads; `None` uses all but one core.
    pub workers: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            iterations: 2000,
            trials: 5,
            seed: 123,
            weights: Weights::default(),
            ts_validation: true,
            calibration_constraint: 0.1,
            min_candidates: 100,
            clusters: true,
            workers: None,
        }
    }
}

impl SearchConfig {
    pub fn check(&self) -> Result<()> {
        if self.iterations < POPULATION {
            bail!(InvalidParameter, "iterations ({}) must be at least the population size {POPULATION}", self.iterations);
        }
        if self.trials == 0 {
            bail!(InvalidParameter, "trials must be at least 1");
        }
        if !(0.01..=0.1).contains(&self.calibration_constraint) {
            bail!(InvalidParameter, "calibration_constraint must lie in [0.01, 0.1]");
        }
        if self.min_candidates == 0 {
            bail!(InvalidParameter, "min_candidates must be at least 1");
        }
        if self.workers == Some(0) {
            bail!(InvalidParameter, "workers must be at least 1");
        }
        self.weights.check()
    }

    pub fn worker_count(&self) -> usize {
        self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get().saturating_sub(1).max(1))
                .unwrap_or(1)
        })
    }
}

/// One archived evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub id: String,
    pub trial: usize,
    pub iteration: usize,
    pub index: usize,
    pub unit: Vec<f64>,
    pub hyperparameters: HyperparameterVector,
    pub scores: ObjectiveScores,
    pub metrics: Option<FitMetrics>,
    /// Ridge penalty in the fit's own scale.
    pub lambda: f64,
    /// Per paid channel ROI (revenue) or CPA (conversion).
    pub efficiencies: Vec<f64>,
    pub effect_shares: Vec<f64>,
    /// Why the evaluation failed, if it did.
    pub error: Option<String>,
    /// Scalarized score under the final archive ranges.
    pub scalar: f64,
    /// 1-based front number for candidates in the Pareto output.
    pub pareto_front: Option<usize>,
    pub cluster: Option<usize>,
}

impl CandidateModel {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    fn from_fit(id: (usize, usize, usize), unit: Vec<f64>, fit: &ModelFit) -> Self {
        CandidateModel {
            id: format!("{}_{}_{}", id.0, id.1, id.2),
            trial: id.0,
            iteration: id.1,
            index: id.2,
            unit,
            hyperparameters: fit.hyperparameters.clone(),
            scores: fit.scores,
            metrics: Some(fit.metrics),
            lambda: fit.ridge.lambda,
            efficiencies: fit.efficiencies(),
            effect_shares: fit.effect_shares.clone(),
            error: None,
            scalar: f64::INFINITY,
            pareto_front: None,
            cluster: None,
        }
    }

    fn from_error(id: (usize, usize, usize), unit: Vec<f64>, hp: HyperparameterVector, e: &Error) -> Self {
        CandidateModel {
            id: format!("{}_{}_{}", id.0, id.1, id.2),
            trial: id.0,
            iteration: id.1,
            index: id.2,
            unit,
            hyperparameters: hp,
            scores: ObjectiveScores {
                nrmse: f64::INFINITY,
                decomp_rssd: f64::INFINITY,
                mape_lift: None,
            },
            metrics: None,
            lambda: f64::NAN,
            efficiencies: Vec::new(),
            effect_shares: Vec::new(),
            error: Some(e.to_string()),
            scalar: f64::INFINITY,
            pareto_front: None,
            cluster: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub config: SearchConfig,
    pub space: HyperparameterSpace,
    pub calibrated: bool,
    pub active: Vec<Objective>,
    pub ranges: ArchiveRanges,
    pub archive: Vec<CandidateModel>,
    /// Archive indices of the Pareto output, best first.
    pub pareto: Vec<usize>,
    pub clustering: Option<Clustering>,
    pub paid_channels: Vec<String>,
}

impl SearchResult {
    pub fn get(&self, id: &str) -> Option<&CandidateModel> {
        self.archive.iter().find(|c| c.id == id)
    }

    /// Pareto candidates ordered by front, then scalarized score.
    pub fn ranked(&self) -> impl Iterator<Item = &CandidateModel> {
        self.pareto.iter().map(|&i| &self.archive[i])
    }

    /// Front-1 candidate with the lowest scalarized score.
    pub fn top(&self) -> Option<&CandidateModel> {
        self.ranked().next()
    }

    /// Archive candidate with the lowest selection NRMSE.
    pub fn best_nrmse(&self) -> Option<&CandidateModel> {
        self.archive
            .iter()
            .filter(|c| !c.failed())
            .min_by(|a, b| a.scores.nrmse.total_cmp(&b.scores.nrmse))
    }

    /// Efficiencies of the other members of `id`'s cluster, itself included.
    pub fn cluster_members(&self, id: &str) -> Option<Vec<&CandidateModel>> {
        let k = self.get(id)?.cluster?;
        Some(self.ranked().filter(|c| c.cluster == Some(k)).collect())
    }

    pub fn write_csv(&self, out: impl std::io::Write, scope: CsvScope) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let channels: Vec<&str> = self.space.channels.iter().map(|c| c.channel.as_str()).collect();
        let mut header: Vec<String> = [
            "solID",
            "trial",
            "iteration",
            "index",
            "nrmse",
            "decomp.rssd",
            "mape",
            "nrmse_train",
            "nrmse_val",
            "nrmse_test",
            "rsq_train",
            "rsq_val",
            "rsq_test",
            "lambda_hp",
            "lambda",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for c in &channels {
            match self.space.family() {
                crate::transforms::AdstockFamily::Geometric => header.push(format!("{c}_thetas")),
                _ => {
                    header.push(format!("{c}_shapes"));
                    header.push(format!("{c}_scales"));
                }
            }
            header.push(format!("{c}_alphas"));
            header.push(format!("{c}_gammas"));
        }
        for c in &self.paid_channels {
            header.push(format!("{c}_efficiency"));
        }
        header.extend(["scalar", "pareto_front", "cluster", "error"].map(String::from));
        w.write_record(&header)?;

        let rows: Box<dyn Iterator<Item = &CandidateModel>> = match scope {
            CsvScope::Pareto => Box::new(self.ranked()),
            CsvScope::All => Box::new(self.archive.iter()),
        };
        let num = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        for c in rows {
            let m = c.metrics;
            let mut rec = vec![
                c.id.clone(),
                c.trial.to_string(),
                c.iteration.to_string(),
                c.index.to_string(),
                num(c.scores.nrmse),
                num(c.scores.decomp_rssd),
                opt(c.scores.mape_lift),
                opt(m.map(|m| m.train.nrmse)),
                opt(m.and_then(|m| m.val).map(|s| s.nrmse)),
                opt(m.and_then(|m| m.test).map(|s| s.nrmse)),
                opt(m.map(|m| m.train.rsq)),
                opt(m.and_then(|m| m.val).map(|s| s.rsq)),
                opt(m.and_then(|m| m.test).map(|s| s.rsq)),
                num(c.hyperparameters.lambda),
                num(c.lambda),
            ];
            for (_, p) in &c.hyperparameters.channels {
                match p.adstock {
                    AdstockParams::Geometric { theta } => rec.push(num(theta)),
                    AdstockParams::WeibullCdf { shape, scale, .. } | AdstockParams::WeibullPdf { shape, scale, .. } => {
                        rec.push(num(shape));
                        rec.push(num(scale));
                    }
                }
                rec.push(num(p.saturation.alpha));
                rec.push(num(p.saturation.gamma));
            }
            for i in 0..self.paid_channels.len() {
                rec.push(c.efficiencies.get(i).map(|v| num(*v)).unwrap_or_default());
            }
            rec.push(num(c.scalar));
            rec.push(c.pareto_front.map(|f| f.to_string()).unwrap_or_default());
            rec.push(c.cluster.map(|k| (k + 1).to_string()).unwrap_or_default());
            rec.push(c.error.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<std::path::Path>, scope: CsvScope) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_csv(&mut f, scope)?;
        f.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsvScope {
    Pareto,
    All,
}

fn score(c: &CandidateModel, weights: &Weights, ranges: &ArchiveRanges) -> f64 {
    if c.failed() {
        return f64::INFINITY;
    }
    scalarize(&c.scores, weights, ranges).unwrap_or(f64::INFINITY)
}

fn evaluate(ctx: &ModelContext, space: &HyperparameterSpace, id: (usize, usize, usize), unit: Vec<f64>) -> CandidateModel {
    let hp = space.decode(&unit);
    match ctx.evaluate(&hp) {
        Ok(fit) if fit.scores.nrmse.is_finite() && fit.scores.decomp_rssd.is_finite() => {
            CandidateModel::from_fit(id, unit, &fit)
        }
        Ok(_) => CandidateModel::from_error(id, unit, hp, &Error::Numerical("non-finite objective".into())),
        Err(e) => CandidateModel::from_error(id, unit, hp, &e),
    }
}

/// Bounce a mutant coordinate that left the cube back between the target and
/// the violated face.
fn repair(v: f64, target: f64) -> f64 {
    if v < 0.0 {
        target / 2.0
    } else if v > 1.0 {
        (target + 1.0) / 2.0
    } else {
        v
    }
}

fn run_trial(
    ctx: &ModelContext,
    space: &HyperparameterSpace,
    cfg: &SearchConfig,
    trial: usize,
    pool: &rayon::ThreadPool,
) -> Vec<CandidateModel> {
    let dims = space.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial as u64);
    let weights = effective_weights(cfg.weights, ctx.calibrated());
    let mut archive = Vec::with_capacity(cfg.iterations);
    let mut ranges = ArchiveRanges::default();

    let eval_batch = |gen: usize, points: Vec<Vec<f64>>| -> Vec<CandidateModel> {
        pool.install(|| {
            points
                .into_par_iter()
                .enumerate()
                .map(|(i, u)| evaluate(ctx, space, (trial, gen, i + 1), u))
                .collect()
        })
    };

    let init: Vec<Vec<f64>> = (0..POPULATION)
        .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut population = eval_batch(1, init);
    for c in &population {
        ranges.update(&c.scores);
    }
    archive.extend(population.iter().cloned());

    let mut gen = 1;
    while archive.len() < cfg.iterations {
        gen += 1;
        let batch = POPULATION.min(cfg.iterations - archive.len());
        let mut mutants = Vec::with_capacity(batch);
        for i in 0..batch {
            let mut pick = [0usize; 3];
            for k in 0..3 {
                pick[k] = loop {
                    let r = rng.random_range(0..POPULATION);
                    if r != i && !pick[..k].contains(&r) {
                        break r;
                    }
                };
            }
            let (a, b, c) = (&population[pick[0]].unit, &population[pick[1]].unit, &population[pick[2]].unit);
            let target = &population[i].unit;
            let forced = rng.random_range(0..dims);
            let u: Vec<f64> = (0..dims)
                .map(|j| {
                    if j == forced || rng.random::<f64>() < CROSSOVER {
                        repair(a[j] + MUTATION * (b[j] - c[j]), target[j])
                    } else {
                        target[j]
                    }
                })
                .collect();
            mutants.push(u);
        }
        let offspring = eval_batch(gen, mutants);
        for c in &offspring {
            ranges.update(&c.scores);
        }
        for (i, child) in offspring.iter().enumerate() {
            if score(child, &weights, &ranges) <= score(&population[i], &weights, &ranges) {
                population[i] = child.clone();
            }
        }
        archive.extend(offspring);
        let best = population
            .iter()
            .map(|c| score(c, &weights, &ranges))
            .fold(f64::INFINITY, f64::min);
        log::info!(
            "trial {trial} generation {gen}: {} evaluations, best scalar {best:.4}, best NRMSE {:.4}",
            archive.len(),
            ranges.min[0]
        );
    }
    archive
}

/// Drops the MAPE.LIFT weight when there is nothing to calibrate against.
pub fn effective_weights(w: Weights, calibrated: bool) -> Weights {
    let mut w = w;
    if !calibrated {
        w.0[Objective::MapeLift.index()] = 0.0;
    }
    if w.0.iter().all(|v| *v == 0.0) {
        w.0[Objective::Nrmse.index()] = 1.0;
    }
    w
}

/// Runs every trial, then ranks and clusters the archive.
pub fn run_search(ctx: &ModelContext, space: &HyperparameterSpace, cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.check()?;
    space.check()?;
    if cfg.ts_validation != ctx.split_plan().ts_validation {
        bail!(InvalidParameter, "ts_validation differs between the search config and the model context");
    }
    let names = ctx.channel_names();
    if space.channels.len() != names.len() || space.channels.iter().zip(&names).any(|(c, n)| &c.channel != n) {
        bail!(InvalidParameter, "hyperparameter space does not match the media channels {names:?}");
    }
    if cfg.weights.get(Objective::MapeLift) > 0.0 && !ctx.calibrated() {
        log::warn!("MAPE.LIFT weight ignored: no calibration studies");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count())
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;

    let mut archive = Vec::with_capacity(cfg.iterations * cfg.trials);
    for trial in 1..=cfg.trials {
        archive.extend(run_trial(ctx, space, cfg, trial, &pool));
    }
    let failures = archive.iter().filter(|c| c.failed()).count();
    if failures == archive.len() {
        bail!(Numerical, "every candidate evaluation failed; first error: {}", archive[0].error.as_deref().unwrap_or(""));
    }
    if failures > 0 {
        log::warn!("{failures} of {} evaluations failed and were scored worst", archive.len());
    }
    Ok(finalize(archive, ctx.calibrated(), ctx.paid_channel_names().to_vec(), space.clone(), cfg.clone()))
}

/// Final ranges, scalar scores, Pareto ranking and clusters.
pub fn finalize(
    mut archive: Vec<CandidateModel>,
    calibrated: bool,
    paid_channels: Vec<String>,
    space: HyperparameterSpace,
    config: SearchConfig,
) -> SearchResult {
    let weights = effective_weights(config.weights, calibrated);
    let mut ranges = ArchiveRanges::default();
    for c in archive.iter().filter(|c| !c.failed()) {
        ranges.update(&c.scores);
    }
    for c in &mut archive {
        c.scalar = score(c, &weights, &ranges);
        c.pareto_front = None;
        c.cluster = None;
    }
    let active = weights.active(calibrated);
    let pareto = pareto_fronts(&mut archive, &active, &weights, calibrated, &config);

    let clustering = if config.clusters && pareto.len() >= 2 {
        let points: Vec<Vec<f64>> = pareto.iter().map(|&i| archive[i].efficiencies.clone()).collect();
        let cl = cluster_candidates(&points, config.seed);
        for (&i, &k) in pareto.iter().zip(&cl.assignments) {
            archive[i].cluster = Some(k);
        }
        Some(cl)
    } else {
        None
    };
    SearchResult {
        config,
        space,
        calibrated,
        active,
        ranges,
        archive,
        pareto,
        clustering,
        paid_channels,
    }
}

/// Assigns front numbers and returns the Pareto output, best first: fronts
/// are added until at least `min_candidates` candidates are collected.
pub fn pareto_fronts(
    archive: &mut [CandidateModel],
    active: &[Objective],
    weights: &Weights,
    calibrated: bool,
    cfg: &SearchConfig,
) -> Vec<usize> {
    let mut eligible: Vec<usize> = (0..archive.len()).filter(|&i| !archive[i].failed()).collect();
    if calibrated && weights.get(Objective::MapeLift) > 0.0 {
        let mapes: Vec<f64> = eligible.iter().filter_map(|&i| archive[i].scores.mape_lift).collect();
        let cut = quantile(&mapes, cfg.calibration_constraint);
        eligible.retain(|&i| archive[i].scores.mape_lift.is_some_and(|m| m <= cut));
    }
    if eligible.is_empty() {
        return Vec::new();
    }
    let points: Vec<Vec<f64>> = eligible
        .iter()
        .map(|&i| active.iter().map(|k| archive[i].scores.get(*k).unwrap_or(f64::INFINITY)).collect())
        .collect();
    let rank = nondominated_sort(&points);
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    order.sort_by(|&a, &b| {
        rank[a]
            .cmp(&rank[b])
            .then(archive[eligible[a]].scalar.total_cmp(&archive[eligible[b]].scalar))
            .then(eligible[a].cmp(&eligible[b]))
    });
    let mut out = Vec::new();
    let mut front_done = usize::MAX;
    for &o in &order {
        if out.len() >= cfg.min_candidates && rank[o] != front_done {
            break;
        }
        front_done = rank[o];
        let i = eligible[o];
        archive[i].pareto_front = Some(rank[o] + 1);
        out.push(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: usize, nrmse: f64, rssd: f64) -> CandidateModel {
        CandidateModel {
            id: format!("1_1_{id}"),
            trial: 1,
            iteration: 1,
            index: id,
            unit: vec![],
            hyperparameters: HyperparameterVector {
                channels: vec![],
                lambda: 0.0,
            },
            scores: ObjectiveScores {
                nrmse,
                decomp_rssd: rssd,
                mape_lift: None,
            },
            metrics: None,
            lambda: 0.0,
            efficiencies: vec![1.0],
            effect_shares: vec![1.0],
            error: None,
            scalar: 0.0,
            pareto_front: None,
            cluster: None,
        }
    }

    fn space() -> HyperparameterSpace {
        HyperparameterSpace {
            channels: vec![],
            lambda: crate::hyper::Bounds(0.0, 1.0),
            max_lag: 1,
        }
    }

    #[test]
    fn fronts_fill_min_candidates() {
        // 5 fronts of 3 points each along anti-diagonals.
        let mut archive = Vec::new();
        for f in 0..5 {
            for j in 0..3 {
                archive.push(cand(archive.len() + 1, (f + j) as f64, (f + 2 - j) as f64));
            }
        }
        let cfg = SearchConfig {
            min_candidates: 7,
            clusters: false,
            ..SearchConfig::default()
        };
        let res = finalize(archive, false, vec!["a".into()], space(), cfg);
        assert_eq!(res.pareto.len(), 9);
        let fronts: Vec<usize> = res.ranked().map(|c| c.pareto_front.unwrap()).collect();
        assert_eq!(fronts, [1, 1, 1, 2, 2, 2, 3, 3, 3]);
    }

    #[test]
    fn zero_weight_objective_ignored() {
        let archive = vec![cand(1, 1.0, 5.0), cand(2, 2.0, 1.0), cand(3, 1.0, 4.0)];
        let cfg = SearchConfig {
            weights: Weights([1.0, 0.0, 0.0]),
            min_candidates: 1,
            clusters: false,
            ..SearchConfig::default()
        };
        let res = finalize(archive, false, vec!["a".into()], space(), cfg);
        let ids: Vec<&str> = res.ranked().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["1_1_1", "1_1_3"]);
    }

    #[test]
    fn failed_candidates_excluded() {
        let mut bad = cand(2, 0.0, 0.0);
        bad.error = Some("boom".into());
        let res = finalize(vec![cand(1, 1.0, 1.0), bad], false, vec!["a".into()], space(), SearchConfig::default());
        assert_eq!(res.pareto, [0]);
        assert!(res.archive[1].scalar.is_infinite());
    }

    #[test]
    fn calibration_filter() {
        let mut archive: Vec<CandidateModel> = (0..20).map(|i| cand(i + 1, i as f64, 20.0 - i as f64)).collect();
        for (i, c) in archive.iter_mut().enumerate() {
            c.scores.mape_lift = Some(i as f64 / 10.0);
        }
        let cfg = SearchConfig {
            min_candidates: 100,
            clusters: false,
            ..SearchConfig::default()
        };
        let res = finalize(archive.clone(), true, vec!["a".into()], space(), cfg.clone());
        // 10% quantile of 0.0..1.9 is 0.19: two candidates survive.
        assert_eq!(res.pareto.len(), 2);
        // Without a MAPE weight the filter is off.
        let cfg = SearchConfig {
            weights: Weights([1.0, 1.0, 0.0]),
            ..cfg
        };
        let res = finalize(archive, true, vec!["a".into()], space(), cfg);
        assert_eq!(res.pareto.len(), 20);
    }

    #[test]
    fn config_checks() {
        assert!(SearchConfig::default().check().is_ok());
        let bad = SearchConfig {
            iterations: 10,
            ..SearchConfig::default()
        };
        assert!(bad.check().is_err());
        let bad = SearchConfig {
            calibration_constraint: 0.5,
            ..SearchConfig::default()
        };
        assert!(bad.check().is_err());
    }

    #[test]
    fn repair_stays_inside() {
        assert_eq!(repair(-0.3, 0.4), 0.2);
        assert_eq!(repair(1.7, 0.4), 0.7);
        assert_eq!(repair(0.5, 0.4), 0.5);
    }
}
