use std::path::{Path, PathBuf};

use mixmodel::allocator::{allocate, AllocationProblem, Multipliers, ResponseCurve, Scenario};
use mixmodel::dataset::{format_date, parse_date, validate_dataset, MmmDataset, Window};
use mixmodel::decomposition::{decompose, Component};
use mixmodel::evaluation::{LiftStudy, Weights};
use mixmodel::model::ModelContext;
use mixmodel::refresh::{refresh_model, RefreshConfig};
use mixmodel::reporting::{allocation_svg, response_svg, ExportedModel, RunSetup, SelectedModel};
use mixmodel::search::run_search;
use mixmodel::simulator::{holidays_for, simulate, SimulationSpec};
use serde::Serialize;

use crate::config::RunConfig;
use crate::rundir::{self, Manifest, RunKind, RunOutput};
use crate::{Failure, Global};

const TOOL: &str = concat!("mixmodel ", env!("CARGO_PKG_VERSION"));

pub fn validate(config: &Path) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let inputs = cfg.inputs()?;
    let ds = &inputs.dataset;
    println!(
        "{}: {} rows, {} in window {} .. {} ({})",
        inputs.data_path.display(),
        ds.n_rows(),
        ds.window_len(),
        ds.window().start,
        ds.window().end,
        ds.frequency()
    );
    println!("fingerprint {}", ds.fingerprint());
    if !inputs.studies.is_empty() {
        println!("{} calibration studies", inputs.studies.len());
    }
    let report = validate_dataset(ds, ds.design_width());
    print!("{report}");
    if report.is_ok() {
        Ok(())
    } else {
        Err(Failure::input(format!("{} validation error(s)", report.errors.len())))
    }
}

pub struct RunArgs {
    pub config: PathBuf,
    pub weights: Option<Weights>,
    pub iterations: Option<usize>,
    pub trials: Option<usize>,
    pub run_id: Option<String>,
}

pub fn run(g: &Global, a: RunArgs) -> Result<PathBuf, Failure> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(w) = g.workers {
        cfg.cores = Some(w);
    }
    if let Some(w) = a.weights {
        cfg.optimize_weights = w;
    }
    if let Some(i) = a.iterations {
        cfg.iterations = i;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    let inputs = cfg.inputs()?;
    let ds = inputs.dataset;
    let report = validate_dataset(&ds, ds.design_width());
    for w in &report.warnings {
        log::warn!("{}", w.message);
    }
    if !report.is_ok() {
        print!("{report}");
        return Err(Failure::input("dataset failed validation".into()));
    }
    let decomposition = cfg.decomposition();
    let dec = decompose(&ds, &inputs.holidays, &decomposition)?;
    let ctx = ModelContext::new(ds.clone(), dec, cfg.split(), inputs.studies)?;
    let space = cfg.space(&ds)?;
    let search = cfg.search();
    let data_path = inputs.data_path.to_string_lossy().into_owned();
    let cfg_json = serde_json::to_string(&RunConfig { cores: None, ..cfg.clone() })
        .map_err(|e| Failure::internal(e.to_string()))?;
    let id = a.run_id.unwrap_or_else(|| rundir::run_id("run", &[&cfg_json, &ds.fingerprint()]));
    log::info!("run {id}: {} x {} evaluations", search.iterations, search.trials);

    let result = run_search(&ctx, &space, &search)?;
    let setup = RunSetup {
        decomposition,
        holidays: inputs.holidays,
        family: cfg.adstock,
        space,
        search: search.clone(),
        data_path: Some(data_path.clone()),
    };
    let manifest = Manifest {
        tool: TOOL.into(),
        run_id: id.clone(),
        kind: RunKind::Initial,
        seed: search.seed,
        workers: search.workers,
        weights: search.weights,
        config: Some(cfg.clone()),
        refreshed_from: None,
        data_path,
        dataset_fingerprint: ds.fingerprint(),
        roles: ds.roles().clone(),
        window: ds.window(),
        frequency: ds.frequency(),
        split: ctx.split_plan(),
        studies: ctx.studies().to_vec(),
        rssd_reference: None,
        setup,
        archive_size: 0,
        failed: 0,
        pareto_size: 0,
        top_model: None,
        clusters: None,
        onepagers: 0,
    };
    let dir = g.out.join(&id);
    let m = RunOutput {
        dir: dir.clone(),
        manifest,
        context: &ctx,
        result: &result,
        csv_out: cfg.csv_out,
        plot_pareto: cfg.plot_pareto,
    }
    .write()?;
    print_run_summary(&m, &result, &dir);
    Ok(dir)
}

fn print_run_summary(m: &Manifest, result: &mixmodel::search::SearchResult, dir: &Path) {
    println!("run {} ({} candidates, {} failed)", m.run_id, m.archive_size, m.failed);
    println!("{} Pareto candidates, {} one-pagers", m.pareto_size, m.onepagers);
    for c in result.ranked().take(5) {
        let mape = c.scores.mape_lift.map(|v| format!("{v:.4}")).unwrap_or_else(|| "NA".into());
        println!(
            "  {:<10} front {} NRMSE {:.4} DECOMP.RSSD {:.4} MAPE {mape}",
            c.id,
            c.pareto_front.unwrap_or(0),
            c.scores.nrmse,
            c.scores.decomp_rssd
        );
    }
    println!("{}", dir.display());
}

pub fn select(run: &Path, id: &str) -> Result<PathBuf, Failure> {
    let path = rundir::select(run, id)?;
    println!("{}", path.display());
    Ok(path)
}

fn open_model(model: &Path, data: Option<&Path>, allow_mismatch: bool) -> Result<SelectedModel, Failure> {
    let file = rundir::resolve_model(model)?;
    Ok(SelectedModel::open(&file, data, allow_mismatch)?)
}

pub struct AllocateArgs {
    pub model: PathBuf,
    pub data: Option<PathBuf>,
    pub scenario: String,
    pub low: String,
    pub up: String,
    pub budget: Option<f64>,
    pub target: Option<f64>,
    pub date_start: Option<String>,
    pub date_end: Option<String>,
    pub restarts: Option<usize>,
    pub allow_fingerprint_mismatch: bool,
}

pub fn allocate_cmd(g: &Global, a: AllocateArgs) -> Result<PathBuf, Failure> {
    let model = open_model(&a.model, a.data.as_deref(), a.allow_fingerprint_mismatch)?;
    let scenario = Scenario::parse(&a.scenario)?;
    let low = Multipliers::parse(&a.low)?;
    let up = Multipliers::parse(&a.up)?;
    let mut problem = match scenario {
        Scenario::MaxResponse => AllocationProblem::max_response(low, up),
        Scenario::TargetEfficiency => {
            let Some(t) = a.target else {
                return Err(Failure::input("--target is required for target_efficiency".into()));
            };
            AllocationProblem::target_efficiency(t, low, up)
        }
    };
    if scenario == Scenario::MaxResponse && a.target.is_some() {
        return Err(Failure::input("--target applies to target_efficiency only".into()));
    }
    problem.total_budget = a.budget;
    problem.date_range = match (&a.date_start, &a.date_end) {
        (None, None) => None,
        (s, e) => {
            let w = model.document.window;
            let start = s.as_deref().map(parse_date).transpose()?.unwrap_or(w.start);
            let end = e.as_deref().map(parse_date).transpose()?.unwrap_or(w.end);
            Some(Window::new(start, end))
        }
    };
    if let Some(r) = a.restarts {
        problem.restarts = r;
    }
    if let Some(s) = g.seed {
        problem.seed = s;
    }
    let plan = allocate(&model, &problem)?;
    let dir = g.out.join("allocations");
    rundir::create_dir(&dir)?;
    let stem = format!("{}_{}", model.id(), a.scenario);
    let json = dir.join(format!("{stem}.json"));
    rundir::write(&json, plan.to_json())?;
    rundir::write(&dir.join(format!("{stem}.svg")), allocation_svg(&plan))?;

    println!("model {} scenario {} over {} periods", plan.model_id, a.scenario, plan.periods);
    println!("{:<14} {:>12} {:>12} {:>12} {:>12}", "channel", "hist spend", "spend", "hist resp", "response");
    for c in &plan.channels {
        println!(
            "{:<14} {:>12.2} {:>12.2} {:>12.2} {:>12.2}",
            c.channel, c.historical_spend, c.spend, c.historical_response, c.response
        );
    }
    println!(
        "total spend {:.2} -> {:.2}, response {:.2} -> {:.2}, efficiency {:.4} -> {:.4}",
        plan.historical_total_spend,
        plan.total_spend,
        plan.historical_total_response,
        plan.total_response,
        plan.historical_efficiency,
        plan.efficiency
    );
    for f in &plan.flags {
        println!("flag: {f}");
    }
    println!("{}", json.display());
    Ok(json)
}

#[derive(Serialize)]
struct ResponseReport<'a> {
    model_id: &'a str,
    channel: &'a str,
    spend: f64,
    mean_spend: f64,
    response: f64,
    marginal_response: f64,
}

pub fn response(
    g: &Global,
    model: &Path,
    data: Option<&Path>,
    channel: &str,
    spend: Option<f64>,
    allow_mismatch: bool,
) -> Result<(), Failure> {
    let model = open_model(model, data, allow_mismatch)?;
    let curve = ResponseCurve::for_channel(&model.fit, channel)?;
    let mean = model
        .fit
        .channels
        .iter()
        .find(|c| c.channel == channel)
        .map(|c| c.mean_spend)
        .unwrap_or_default();
    let spend = spend.unwrap_or(mean);
    let report = ResponseReport {
        model_id: model.id(),
        channel,
        spend,
        mean_spend: mean,
        response: mixmodel::allocator::channel_response(&model, channel, spend)?,
        marginal_response: mixmodel::allocator::marginal_response(&model, channel, spend)?,
    };
    let dir = g.out.join("responses");
    rundir::create_dir(&dir)?;
    let svg = response_svg(&curve, spend, (2.5 * mean).max(1.2 * spend).max(1.0), 60);
    rundir::write(&dir.join(format!("{}_{channel}.svg", model.id())), svg)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::internal(e.to_string()))?);
    Ok(())
}

pub struct RefreshArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub steps: usize,
    pub iterations: usize,
    pub trials: usize,
    pub calibration: Option<PathBuf>,
    pub run_id: Option<String>,
}

pub fn refresh(g: &Global, a: RefreshArgs) -> Result<PathBuf, Failure> {
    let file = rundir::resolve_model(&a.model)?;
    let doc = ExportedModel::read(&file)?;
    let data_path = std::fs::canonicalize(&a.data).map_err(|e| Failure::input(format!("{}: {e}", a.data.display())))?;
    let data = MmmDataset::load(&data_path, doc.roles.clone(), doc.window, Some(doc.frequency))?;
    let studies = a.calibration.as_deref().map(LiftStudy::load_csv).transpose()?;
    let cfg = RefreshConfig {
        steps: a.steps,
        iterations: a.iterations,
        trials: a.trials,
        seed: g.seed,
        workers: g.workers,
    };
    let mut run = refresh_model(&doc, &data, &cfg, studies)?;
    let data_path = data_path.to_string_lossy().into_owned();
    run.setup.data_path = Some(data_path.clone());
    let ds = run.context.dataset();
    let id = a.run_id.unwrap_or_else(|| {
        let cfg_json = serde_json::to_string(&RefreshConfig { workers: None, ..cfg.clone() }).unwrap_or_default();
        rundir::run_id("refresh", &[&doc.id, &doc.dataset_fingerprint, &cfg_json, &ds.fingerprint()])
    });
    let manifest = Manifest {
        tool: TOOL.into(),
        run_id: id.clone(),
        kind: RunKind::Refresh,
        seed: run.setup.search.seed,
        workers: run.setup.search.workers,
        weights: run.setup.search.weights,
        config: None,
        refreshed_from: Some(doc.id.clone()),
        data_path,
        dataset_fingerprint: ds.fingerprint(),
        roles: ds.roles().clone(),
        window: ds.window(),
        frequency: ds.frequency(),
        split: run.context.split_plan(),
        studies: run.context.studies().to_vec(),
        rssd_reference: run.context.rssd_reference().map(<[f64]>::to_vec),
        setup: run.setup.clone(),
        archive_size: 0,
        failed: 0,
        pareto_size: 0,
        top_model: None,
        clusters: None,
        onepagers: 0,
    };
    let dir = g.out.join(&id);
    let m = RunOutput {
        dir: dir.clone(),
        manifest,
        context: &run.context,
        result: &run.result,
        csv_out: Some(mixmodel::search::CsvScope::Pareto),
        plot_pareto: true,
    }
    .write()?;
    println!(
        "refresh of {} over {} .. {} ({} new periods)",
        doc.id,
        format_date(run.window.start),
        format_date(run.window.end),
        a.steps
    );
    if let Some(top) = &m.top_model {
        let path = rundir::select(&dir, top)?;
        println!("refreshed model {}", path.display());
    }
    print_run_summary(&m, &run.result, &dir);
    Ok(dir)
}

pub struct SimulateArgs {
    pub periods: usize,
    pub channels: usize,
    pub noise: f64,
    pub organic: bool,
    pub context: bool,
    pub studies: usize,
    pub study_length: usize,
    pub holdout: usize,
    pub start: Option<String>,
}

pub fn simulate_cmd(g: &Global, a: SimulateArgs) -> Result<PathBuf, Failure> {
    let mut spec = SimulationSpec {
        n_periods: a.periods,
        channels: a.channels,
        noise: a.noise,
        organic: a.organic,
        context: a.context,
        seed: g.seed.unwrap_or(SimulationSpec::default().seed),
        ..Default::default()
    };
    if let Some(s) = &a.start {
        spec.start = parse_date(s)?;
    }
    if a.holdout >= a.periods {
        return Err(Failure::input("--holdout must leave some periods to model".into()));
    }
    let (ds, truth) = simulate(&spec)?;
    let dates = ds.dates();
    let window = Window::new(dates[0], dates[dates.len() - 1 - a.holdout]);
    let dir = &g.out;
    rundir::create_dir(dir)?;
    ds.write_csv(dir.join("data.csv"))?;
    let truth_json = serde_json::to_string_pretty(&truth).map_err(|e| Failure::internal(e.to_string()))?;
    rundir::write(&dir.join("truth.json"), truth_json + "\n")?;
    let holidays = holidays_for(dates[0], *dates.last().expect("rows"));
    rundir::write(&dir.join("holidays.csv"), holidays.to_csv_bytes())?;

    let calibration = if a.studies > 0 {
        let modeled = ds.with_window(window)?;
        let studies = truth.default_studies(&modeled, a.studies, a.study_length)?;
        rundir::write(&dir.join("lift_studies.csv"), LiftStudy::to_csv_bytes(&studies))?;
        Some(PathBuf::from("lift_studies.csv"))
    } else {
        None
    };
    let roles = truth.roles();
    let mut prophet_vars = roles.prophet_vars.clone();
    prophet_vars.push(Component::Holiday);
    let cfg = RunConfig {
        dt_input: "data.csv".into(),
        dt_holidays: Some("holidays.csv".into()),
        date_var: Some(ds.date_column().to_string()),
        dep_var: roles.dep_var.clone(),
        dep_var_type: roles.dep_var_type,
        prophet_vars,
        prophet_country: Some("DE".into()),
        context_vars: roles.context_vars.clone(),
        paid_media_spends: roles.paid_media_spends.clone(),
        paid_media_vars: roles.paid_media_vars.clone(),
        organic_vars: roles.organic_vars.clone(),
        factor_vars: Vec::new(),
        window_start: format_date(window.start),
        window_end: format_date(window.end),
        adstock: mixmodel::transforms::AdstockFamily::Geometric,
        frequency: Some(spec.frequency),
        hyperparameters: Default::default(),
        calibration_input: calibration,
        decomposition: None,
        iterations: 2000,
        trials: 5,
        ts_validation: true,
        train_fraction: 0.7,
        optimize_weights: Weights::default(),
        min_candidates: 100,
        calibration_constraint: 0.1,
        csv_out: Some(mixmodel::search::CsvScope::Pareto),
        clusters: true,
        plot_pareto: true,
        cores: None,
        seed: spec.seed,
    };
    let cfg_json = serde_json::to_string_pretty(&cfg).map_err(|e| Failure::internal(e.to_string()))?;
    rundir::write(&dir.join("config.json"), cfg_json + "\n")?;

    println!("simulated {} {} periods, seed {}", spec.n_periods, spec.frequency, spec.seed);
    for c in &truth.channels {
        println!(
            "  {:<12} theta {:.3} alpha {:.3} gamma {:.3} true ROAS {:.4}",
            c.channel, c.theta, c.alpha, c.gamma, c.roas
        );
    }
    println!("{}", dir.display());
    Ok(dir.clone())
}
