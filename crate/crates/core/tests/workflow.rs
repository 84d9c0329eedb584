use std::sync::OnceLock;

use mixmodel::allocator::{allocate, channel_response, marginal_response, AllocationProblem, Multipliers};
use mixmodel::dataset::{MmmDataset, Window};
use mixmodel::decomposition::{decompose, DecompositionConfig};
use mixmodel::hyper::HyperparameterSpace;
use mixmodel::model::ModelContext;
use mixmodel::refresh::{advanced_window, refresh_model, RefreshConfig};
use mixmodel::regression::SplitPlan;
use mixmodel::reporting::{build_onepager, ClusterPeers, ExportedModel, RunSetup, SelectedModel, PANEL_TITLES};
use mixmodel::search::{run_search, SearchConfig, SearchResult};
use mixmodel::simulator::{holidays_for, simulate, SimulationSpec, SimulationTruth};
use mixmodel::transforms::AdstockFamily;

const MODEL_WEEKS: usize = 208;
const NEW_WEEKS: usize = 13;

struct Fixture {
    full: MmmDataset,
    truth: SimulationTruth,
    ctx: ModelContext,
    setup: RunSetup,
    result: SearchResult,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let spec = SimulationSpec {
            n_periods: MODEL_WEEKS + NEW_WEEKS,
            seed: 4,
            ..Default::default()
        };
        let (full, truth) = simulate(&spec).unwrap();
        let dates = full.dates().to_vec();
        let ds = full.with_window(Window::new(dates[0], dates[MODEL_WEEKS - 1])).unwrap();
        let holidays = holidays_for(dates[0], *dates.last().unwrap());
        let decomposition = DecompositionConfig::for_roles(&ds);
        let dec = decompose(&ds, &holidays, &decomposition).unwrap();
        let studies = truth.default_studies(&ds, 2, 6).unwrap();
        let ctx = ModelContext::new(ds.clone(), dec, SplitPlan::default(), studies).unwrap();
        let space = HyperparameterSpace::default_for(&ds, AdstockFamily::Geometric);
        let search = SearchConfig {
            iterations: 160,
            trials: 2,
            seed: 9,
            min_candidates: 20,
            ..Default::default()
        };
        let result = run_search(&ctx, &space, &search).unwrap();
        let setup = RunSetup {
            decomposition,
            holidays,
            family: AdstockFamily::Geometric,
            space,
            search,
            data_path: None,
        };
        Fixture {
            full,
            truth,
            ctx,
            setup,
            result,
        }
    })
}

fn selected() -> SelectedModel {
    let f = fixture();
    SelectedModel::from_candidate(&f.ctx, &f.setup, f.result.top().unwrap()).unwrap()
}

#[test]
fn export_import_round_trip() {
    let f = fixture();
    let model = selected();
    let dir = tempfile::tempdir().unwrap();
    let path = model.export(dir.path()).unwrap();
    assert_eq!(path.file_name().unwrap().to_str().unwrap(), format!("RobynModel-{}.json", model.id()));
    let first = std::fs::read(&path).unwrap();

    let imported = SelectedModel::import(&path, f.ctx.dataset().clone(), false).unwrap();
    let (a, b) = (model.fit.scores, imported.fit.scores);
    assert!((a.nrmse - b.nrmse).abs() <= 1e-9);
    assert!((a.decomp_rssd - b.decomp_rssd).abs() <= 1e-9);
    assert!((a.mape_lift.unwrap() - b.mape_lift.unwrap()).abs() <= 1e-9);

    let dir2 = tempfile::tempdir().unwrap();
    let again = std::fs::read(imported.export(dir2.path()).unwrap()).unwrap();
    assert_eq!(first, again);
}

#[test]
fn import_guards() {
    let f = fixture();
    let model = selected();
    let dir = tempfile::tempdir().unwrap();
    let path = model.export(dir.path()).unwrap();

    let (other, _) = simulate(&SimulationSpec {
        n_periods: MODEL_WEEKS + NEW_WEEKS,
        seed: 99,
        ..Default::default()
    })
    .unwrap();
    let other = other.with_window(f.ctx.dataset().window()).unwrap();
    let err = SelectedModel::import(&path, other.clone(), false).unwrap_err();
    assert!(err.to_string().contains("fingerprint"), "{err}");
    assert!(SelectedModel::import(&path, other, true).is_ok());

    let text = std::fs::read_to_string(&path).unwrap();
    let bumped = text.replacen("\"schema_version\": 1", "\"schema_version\": 7", 1);
    assert!(ExportedModel::from_json(bumped.as_bytes()).unwrap_err().to_string().contains("schema version"));
    assert!(ExportedModel::from_json(&text.as_bytes()[..text.len() / 2]).is_err());
}

#[test]
fn unselectable_failed_candidate() {
    let f = fixture();
    let mut c = f.result.top().unwrap().clone();
    c.error = Some("boom".into());
    assert!(SelectedModel::from_candidate(&f.ctx, &f.setup, &c).is_err());
}

fn onepager_for(model: &SelectedModel) -> mixmodel::reporting::OnePager {
    let f = fixture();
    let peers = f.result.cluster_members(model.id()).map(|members| ClusterPeers {
        cluster: f.result.get(model.id()).unwrap().cluster.unwrap(),
        efficiencies: members.iter().map(|m| m.efficiencies.clone()).collect(),
    });
    build_onepager(&model.fit, model.id(), peers.as_ref(), 1)
}

#[test]
fn onepager_invariants() {
    let model = selected();
    let op = onepager_for(&model);
    assert_eq!(op.panel_count(), 8);
    let titles: Vec<&str> = op.panels().iter().map(|(t, _)| *t).collect();
    assert_eq!(titles, PANEL_TITLES);

    let share_sum: f64 = op.waterfall.iter().map(|b| b.share).sum();
    assert!((share_sum - 1.0).abs() <= 1e-9);
    assert!(op.waterfall.windows(2).all(|w| w[0].contribution >= w[1].contribution));
    let contrib: f64 = op.waterfall.iter().map(|b| b.contribution).sum();
    assert!((contrib + op.residual_total - op.actual_total).abs() <= 1e-6 * op.actual_total.abs());

    for c in &op.carryover {
        assert!((c.immediate_pct + c.carryover_pct - 100.0).abs() < 1e-12);
    }
    if let Some(b) = &op.bootstrap {
        for r in b {
            assert!(r.lower <= r.mean && r.mean <= r.upper);
        }
    }
    let candidate = fixture().result.get(model.id()).unwrap();
    let roi: Vec<f64> = op.spend_effect.iter().map(|s| s.efficiency).collect();
    assert_eq!(roi, candidate.efficiencies);
    assert_eq!(op.predicted, model.fit.ridge.predict(&model.fit.design));

    for curve in &op.response_curves {
        for (m, r) in curve.spends.iter().zip(&curve.responses) {
            let direct = channel_response(&model, &curve.channel, *m).unwrap();
            assert!((direct - r).abs() <= 1e-9 * r.abs().max(1.0));
        }
    }
}

#[test]
fn onepager_render_is_deterministic() {
    let model = selected();
    let op = onepager_for(&model);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let files_a = op.render(a.path()).unwrap();
    let files_b = op.render(b.path()).unwrap();
    assert_eq!(files_a.len(), 10);
    for (x, y) in files_a.iter().zip(&files_b) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let page = std::fs::read_to_string(a.path().join("onepager.svg")).unwrap();
    assert!(page.contains("NRMSE: train = "));
    for title in PANEL_TITLES {
        assert!(page.contains(&mixmodel::reporting::svg::esc(title)), "{title}");
    }
}

#[test]
fn onepager_without_cluster_omits_bootstrap() {
    let model = selected();
    let op = build_onepager(&model.fit, model.id(), None, 1);
    assert!(op.bootstrap.is_none());
    assert_eq!(op.panel_count(), 7);
}

#[test]
fn allocation_honors_multipliers() {
    let model = selected();
    let up = Multipliers::PerChannel(vec![1.2, 1.5, 1.5]);
    let plan = allocate(&model, &AllocationProblem::max_response(Multipliers::Uniform(0.7), up)).unwrap();
    let ups = [1.2, 1.5, 1.5];
    for (c, u) in plan.channels.iter().zip(ups) {
        assert!(c.spend >= 0.7 * c.historical_spend && c.spend <= u * c.historical_spend);
        assert_eq!(c.lower, 0.7 * c.historical_spend);
        assert_eq!(c.upper, u * c.historical_spend);
    }
    let per_period = plan.total_budget / plan.periods as f64;
    assert!((plan.total_spend - per_period).abs() <= 1e-9 * per_period);
    assert!(plan.total_response >= plan.historical_total_response * (1.0 - 1e-9));
    assert!(plan.to_json().contains("\"kkt_residual\""));

    let bad = AllocationProblem::max_response(Multipliers::Uniform(1.5), Multipliers::Uniform(1.2));
    assert!(allocate(&model, &bad).is_err());
}

#[test]
fn target_efficiency_on_model() {
    let model = selected();
    let hist = allocate(&model, &AllocationProblem::max_response(Multipliers::Uniform(0.1), Multipliers::Uniform(5.0))).unwrap();
    let target = 0.8 * hist.efficiency;
    let plan = allocate(
        &model,
        &AllocationProblem::target_efficiency(target, Multipliers::Uniform(0.1), Multipliers::Uniform(5.0)),
    )
    .unwrap();
    let hit = (plan.efficiency - target).abs() <= 0.005 * target;
    assert!(hit || !plan.flags.is_empty(), "efficiency {} target {target}", plan.efficiency);
}

#[test]
fn marginal_response_matches_difference() {
    let model = selected();
    let channel = &model.fit.channels[0].channel;
    let m = model.fit.channels[0].mean_spend;
    let h = 1e-4 * m;
    let fd = (channel_response(&model, channel, m + h).unwrap() - channel_response(&model, channel, m - h).unwrap()) / (2.0 * h);
    let d = marginal_response(&model, channel, m).unwrap();
    assert!((d - fd).abs() <= 1e-6 * d.abs().max(1e-12));
    assert!(channel_response(&model, "radio", 1.0).is_err());
    assert!(channel_response(&model, channel, -1.0).is_err());
}

#[test]
fn refresh_advances_window_and_narrows_bounds() {
    let f = fixture();
    let model = selected();
    let doc = &model.document;
    let cfg = RefreshConfig {
        iterations: 64,
        trials: 1,
        ..RefreshConfig::new(NEW_WEEKS)
    };
    let run = refresh_model(doc, &f.full, &cfg, None).unwrap();
    assert_eq!(run.window, advanced_window(doc, NEW_WEEKS));
    assert_eq!((run.window.end - doc.window.end).num_weeks(), NEW_WEEKS as i64);
    assert_eq!(run.context.rssd_reference(), Some(doc.effect_shares.as_slice()));
    assert_eq!(run.result.archive.len(), 64);
    for (new, old) in run.setup.space.channels.iter().zip(&doc.space.channels) {
        assert!(new.alpha.lo() >= old.alpha.lo() && new.alpha.hi() <= old.alpha.hi());
        assert!(new.gamma.lo() >= old.gamma.lo() && new.gamma.hi() <= old.gamma.hi());
    }
    let truth_window = f.truth.window();
    assert_eq!(run.window.end, truth_window.end);

    let csv = String::from_utf8(f.full.to_csv_bytes()).unwrap();
    let kept: Vec<&str> = csv.lines().take(1 + MODEL_WEEKS + 5).collect();
    let short = MmmDataset::from_csv_bytes(
        (kept.join("\n") + "\n").as_bytes(),
        doc.roles.clone(),
        doc.window,
        Some(doc.frequency),
    )
    .unwrap();
    let err = refresh_model(doc, &short, &cfg, None).unwrap_err();
    assert!(err.to_string().contains("new periods"), "{err}");
    assert!(refresh_model(doc, &f.full, &RefreshConfig::new(0), None).is_err());
}
