//! Acceptance checks, one line per criterion.
//!
//! Runs as a plain binary so the report is printed on every run.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use chrono::NaiveDate;
use mixmodel::allocator::{kkt_residual, maximize_response, solve_target_efficiency, ResponseCurve, SolverOptions};
use mixmodel::dataset::{DepVarType, MmmDataset};
use mixmodel::decomposition::{decompose, DecompositionConfig};
use mixmodel::evaluation::{Objective, Weights};
use mixmodel::hyper::HyperparameterSpace;
use mixmodel::model::ModelContext;
use mixmodel::pareto::dominates;
use mixmodel::regression::{fit_ridge, ColumnRole, DesignColumn, DesignMatrix, SplitPlan};
use mixmodel::reporting::{RunSetup, SelectedModel};
use mixmodel::search::{run_search, SearchConfig, SearchResult};
use mixmodel::simulator::{holidays_for, simulate, SimulationSpec, SimulationTruth};
use mixmodel::transforms::{adstock_geometric, hill, inflection_point, weibull_weights, AdstockFamily};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn transforms() -> Check {
    let out = adstock_geometric(&[100.0, 0.0, 0.0, 0.0], 0.5).map_err(fail)?;
    ensure(out == [100.0, 50.0, 25.0, 12.5], || format!("geometric impulse gave {out:?}"))?;

    let mut worst_mass: f64 = 0.0;
    for theta in [0.1, 0.3, 0.5, 0.7, 0.8] {
        let mut x = vec![0.0; 200];
        x[0] = 37.0;
        let mass: f64 = adstock_geometric(&x, theta).map_err(fail)?.iter().sum();
        worst_mass = worst_mass.max((mass - 37.0 / (1.0 - theta)).abs());
    }
    ensure(worst_mass <= 1e-9, || format!("impulse mass off by {worst_mass:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_hill: f64 = 0.0;
    for _ in 0..200 {
        let series: Vec<f64> = (0..52).map(|_| rng.random::<f64>() * 1e4).collect();
        let gamma = 0.3 + 0.7 * rng.random::<f64>();
        let alpha = 0.5 + 2.5 * rng.random::<f64>();
        let c = inflection_point(&series, gamma).map_err(fail)?;
        worst_hill = worst_hill.max((hill(c, alpha, c) - 0.5).abs());
    }
    ensure(worst_hill <= 1e-12, || format!("Hill at inflection off by {worst_hill:e}"))?;

    for (shape, scale) in [(0.5, 0.1), (1.0, 0.3), (2.0, 0.05), (5.0, 0.9)] {
        let w = weibull_weights(AdstockFamily::WeibullCdf, shape, scale, 52).map_err(fail)?;
        ensure(w[0] == 1.0, || format!("Weibull CDF w0 = {} at shape {shape}", w[0]))?;
    }
    Ok(format!("impulse exact, mass err {worst_mass:.1e}, Hill err {worst_hill:.1e}, Weibull w0 = 1"))
}

fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize, lower: f64) -> (DesignMatrix, Vec<f64>) {
    let columns: Vec<DesignColumn> = (0..p)
        .map(|j| DesignColumn {
            name: format!("x{j}"),
            role: ColumnRole::Context,
            values: (0..n).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect(),
        })
        .collect();
    let beta: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 3.0 + (0..p).map(|j| beta[j] * columns[j].values[i]).sum::<f64>() + rng.random::<f64>() - 0.5)
        .collect();
    (DesignMatrix::new(columns, y, 0..n).unwrap(), vec![lower; p])
}

/// Standardized training design and response of a full-train design.
fn standardized(d: &DesignMatrix) -> (DMatrix<f64>, DVector<f64>, f64) {
    let n = d.response.len();
    let p = d.width();
    let z = DMatrix::from_fn(n, p, |i, j| d.z[j][i]);
    let mean = d.response.iter().sum::<f64>() / n as f64;
    let sd = (d.response.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let y = DVector::from_iterator(n, d.response.iter().map(|v| (v - mean) / sd));
    (z, y, sd)
}

fn ridge() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_coef: f64 = 0.0;
    for _ in 0..100 {
        let (d, lb) = random_design(&mut rng, 20, 5, f64::NEG_INFINITY);
        let lambda = 10f64.powf(rng.random::<f64>() * 3.0 - 2.0);
        let fit = fit_ridge(&d, lambda, &lb).map_err(fail)?;
        let (z, y, sd) = standardized(&d);
        let a = z.transpose() * &z + DMatrix::identity(5, 5) * lambda;
        let b = a.lu().solve(&(z.transpose() * y)).ok_or("singular normal equations")?;
        for j in 0..5 {
            worst_coef = worst_coef.max((fit.coefficients[j] - b[j] * sd).abs());
        }
    }
    ensure(worst_coef <= 1e-6, || format!("unconstrained coefficient error {worst_coef:e}"))?;

    let mut worst_kkt: f64 = 0.0;
    let mut active = 0;
    for _ in 0..100 {
        let (d, lb) = random_design(&mut rng, 20, 5, 0.0);
        let lambda = 10f64.powf(rng.random::<f64>() * 3.0 - 2.0);
        let fit = fit_ridge(&d, lambda, &lb).map_err(fail)?;
        let (z, y, sd) = standardized(&d);
        let beta = DVector::from_iterator(5, fit.coefficients.iter().map(|b| b / sd));
        // Half gradient of ||y - Z b||^2 + lambda ||b||^2.
        let grad = -(z.transpose() * (y - &z * &beta)) + &beta * lambda;
        for j in 0..5 {
            ensure(beta[j] >= 0.0, || format!("coefficient {j} below its bound"))?;
            let v = if beta[j] == 0.0 {
                active += 1;
                (-grad[j]).max(0.0)
            } else {
                grad[j].abs()
            };
            worst_kkt = worst_kkt.max(v);
        }
    }
    ensure(active > 0, || "no constrained case had an active bound".into())?;
    ensure(worst_kkt <= 1e-6, || format!("constrained KKT residual {worst_kkt:e}"))?;
    Ok(format!(
        "max coefficient error {worst_coef:.1e}; KKT residual {worst_kkt:.1e} with {active} active bounds"
    ))
}

struct SeedRuns {
    truth: SimulationTruth,
    base: SearchResult,
    calibrated: SearchResult,
    rssd: SearchResult,
}

fn seed_runs(seed: u64) -> Result<SeedRuns, String> {
    let (ds, truth) = simulate(&SimulationSpec { seed, ..Default::default() }).map_err(fail)?;
    let holidays = holidays_for(ds.dates()[0], *ds.dates().last().unwrap());
    let dec = decompose(&ds, &holidays, &DecompositionConfig::for_roles(&ds)).map_err(fail)?;
    let studies = truth.default_studies(&ds, 3, 8).map_err(fail)?;
    let ctx = ModelContext::new(ds.clone(), dec, SplitPlan::default(), studies).map_err(fail)?;
    let space = HyperparameterSpace::default_for(&ds, AdstockFamily::Geometric);
    let run = |w: [f64; 3]| {
        let cfg = SearchConfig {
            seed,
            weights: Weights(w),
            ..Default::default()
        };
        run_search(&ctx, &space, &cfg).map_err(fail)
    };
    Ok(SeedRuns {
        truth,
        base: run([1.0, 0.0, 0.0])?,
        calibrated: run([1.0, 0.0, 1.0])?,
        rssd: run([1.0, 1.0, 0.0])?,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn roas_recovery(runs: &[SeedRuns]) -> Check {
    // Per channel position, relative errors across seeds.
    let mut errors: Vec<Vec<f64>> = Vec::new();
    for r in runs {
        let best = r.base.best_nrmse().ok_or("no successful candidate")?;
        let paid: Vec<_> = r.truth.channels.iter().filter(|c| c.paid).collect();
        let total: f64 = paid.iter().map(|c| c.total_spend).sum();
        errors.resize(paid.len(), Vec::new());
        for (i, c) in paid.iter().enumerate() {
            if c.total_spend / total < 0.10 {
                continue;
            }
            let k = r.base.paid_channels.iter().position(|n| *n == c.channel).ok_or("channel missing")?;
            errors[i].push((best.efficiencies[k] - c.roas).abs() / c.roas);
        }
    }
    let medians: Vec<f64> = errors.into_iter().filter(|e| !e.is_empty()).map(median).collect();
    let shown: Vec<String> = medians.iter().map(|m| format!("{:.1}%", 100.0 * m)).collect();
    ensure(medians.iter().all(|m| *m <= 0.30), || {
        format!("median relative ROAS errors {} exceed 30%", shown.join(", "))
    })?;
    Ok(format!("median relative ROAS error per channel {}", shown.join(", ")))
}

fn calibration_benefit(runs: &[SeedRuns]) -> Check {
    let mut wins = 0;
    let mut pairs = Vec::new();
    for r in runs {
        let base = r.base.best_nrmse().and_then(|c| c.scores.mape_lift).ok_or("no MAPE for the baseline")?;
        let cal = r.calibrated.top().and_then(|c| c.scores.mape_lift).ok_or("no MAPE for the calibrated run")?;
        if cal < base {
            wins += 1;
        }
        pairs.push(format!("{base:.3}->{cal:.3}"));
    }
    ensure(wins >= 4, || format!("calibrated MAPE lower in {wins}/5 seeds ({})", pairs.join(" ")))?;
    Ok(format!("calibrated MAPE lower in {wins}/5 seeds ({})", pairs.join(" ")))
}

fn rssd_direction(runs: &[SeedRuns]) -> Check {
    let mut pairs = Vec::new();
    let mut ok = true;
    for r in runs {
        let base = r.base.top().ok_or("empty baseline")?.scores.decomp_rssd;
        let rs = r.rssd.top().ok_or("empty RSSD run")?.scores.decomp_rssd;
        ok &= rs <= base;
        pairs.push(format!("{base:.3}->{rs:.3}"));
    }
    ensure(ok, || format!("RSSD not reduced on every seed ({})", pairs.join(" ")))?;
    Ok(format!("DECOMP.RSSD never higher on any seed ({})", pairs.join(" ")))
}

fn brute_force_fronts(points: &[Vec<f64>]) -> Vec<usize> {
    let mut front = vec![0; points.len()];
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut k = 0;
    while !left.is_empty() {
        k += 1;
        let layer: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dominates(&points[j], &points[i])))
            .collect();
        for &i in &layer {
            front[i] = k;
        }
        left.retain(|i| !layer.contains(i));
    }
    front
}

fn pareto_audit() -> Check {
    let (ds, _) = simulate(&SimulationSpec { seed: 13, ..Default::default() }).map_err(fail)?;
    let holidays = holidays_for(ds.dates()[0], *ds.dates().last().unwrap());
    let dec = decompose(&ds, &holidays, &DecompositionConfig::for_roles(&ds)).map_err(fail)?;
    let ctx = ModelContext::new(ds.clone(), dec, SplitPlan::default(), Vec::new()).map_err(fail)?;
    let space = HyperparameterSpace::default_for(&ds, AdstockFamily::Geometric);
    let cfg = SearchConfig {
        iterations: 250,
        trials: 2,
        seed: 13,
        weights: Weights([1.0, 1.0, 0.0]),
        min_candidates: 40,
        ..Default::default()
    };
    let r = run_search(&ctx, &space, &cfg).map_err(fail)?;
    ensure(r.archive.len() == 500, || format!("archive holds {}", r.archive.len()))?;

    let valid: Vec<usize> = (0..r.archive.len()).filter(|&i| !r.archive[i].failed()).collect();
    let points: Vec<Vec<f64>> = valid
        .iter()
        .map(|&i| {
            let s = &r.archive[i].scores;
            r.active.iter().map(|k| s.get(*k).unwrap()).collect()
        })
        .collect();
    let fronts = brute_force_fronts(&points);
    let mut violations = 0;
    let last = r.ranked().filter_map(|c| c.pareto_front).max().unwrap_or(0);
    for (slot, &i) in valid.iter().enumerate() {
        let c = &r.archive[i];
        let included = r.pareto.contains(&i);
        if included && c.pareto_front != Some(fronts[slot]) {
            violations += 1;
        }
        // Fronts are kept whole.
        if fronts[slot] <= last && !included {
            violations += 1;
        }
    }
    for a in 0..valid.len() {
        for b in 0..valid.len() {
            if dominates(&points[a], &points[b]) && fronts[a] >= fronts[b] {
                violations += 1;
            }
        }
    }
    ensure(!r.active.contains(&Objective::MapeLift), || "unexpected MAPE objective".into())?;
    ensure(violations == 0, || format!("{violations} dominance violations"))?;
    Ok(format!(
        "{} candidates, {} on {last} fronts, zero violations",
        valid.len(),
        r.pareto.len()
    ))
}

fn allocator() -> Check {
    let curves = vec![
        ResponseCurve::new("tv", 5_000.0, 1.4, 0.8, 2_000.0),
        ResponseCurve::new("search", 3_000.0, 1.1, 1.0, 900.0),
    ];
    let (lower, upper, budget) = ([100.0, 100.0], [5_000.0, 5_000.0], 3_000.0);
    let sol = maximize_response(&curves, &lower, &upper, budget, &[1_500.0, 1_500.0], SolverOptions::default())
        .map_err(fail)?;
    let total: f64 = sol.spends.iter().sum();
    let budget_err = (total - budget).abs() / budget;
    ensure(budget_err <= 1e-9, || format!("budget residual {budget_err:e}"))?;
    let (d0, d1) = (curves[0].marginal(sol.spends[0]), curves[1].marginal(sol.spends[1]));
    let spread = (d0 - d1).abs() / d0.abs().max(d1.abs());
    ensure(spread <= 1e-4, || format!("marginals differ by {spread:e}"))?;
    let kkt = kkt_residual(&curves, &lower, &upper, &sol.spends);

    let lo = lower[0].max(budget - upper[1]);
    let hi = upper[0].min(budget - lower[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut oracle = f64::NEG_INFINITY;
    for _ in 0..1_000_000 {
        let m0 = lo + rng.random::<f64>() * (hi - lo);
        oracle = oracle.max(curves[0].response(m0) + curves[1].response(budget - m0));
    }
    let gap = (oracle - sol.objective) / oracle;
    ensure(gap <= 1e-6, || format!("solver {} below oracle {oracle}", sol.objective))?;

    let (beta, a, c, target) = (8_000.0, 1.3, 1_200.0, 2.0);
    let single = vec![ResponseCurve::new("tv", beta, a, 1.0, c)];
    let t = solve_target_efficiency(&single, &[1.0], &[20_000.0], &[1_000.0], DepVarType::Revenue, target, SolverOptions::default())
        .map_err(fail)?;
    let reached = (t.efficiency - target).abs() / target;
    ensure(t.flag.is_some() || reached <= 0.005, || format!("target missed by {:.2}%", 100.0 * reached))?;
    let hard = solve_target_efficiency(&single, &[1.0], &[20_000.0], &[1_000.0], DepVarType::Revenue, 1e4, SolverOptions::default())
        .map_err(fail)?;
    ensure(hard.flag.is_some(), || "unreachable target not flagged".into())?;
    Ok(format!(
        "marginal spread {spread:.1e}, KKT {kkt:.1e}, oracle gap {gap:.1e}, target within {:.3}%",
        100.0 * reached
    ))
}

fn round_trips() -> Check {
    let (ds, truth) = simulate(&SimulationSpec { seed: 8, ..Default::default() }).map_err(fail)?;
    let dir = tempfile::tempdir().map_err(fail)?;
    let csv = dir.path().join("data.csv");
    ds.write_csv(&csv).map_err(fail)?;
    let loaded = MmmDataset::load(&csv, ds.roles().clone(), ds.window(), None).map_err(fail)?;
    ensure(loaded.to_csv_bytes() == ds.to_csv_bytes(), || "saved dataset differs after loading".into())?;
    ensure(loaded.fingerprint() == ds.fingerprint(), || "fingerprint changed".into())?;

    let holidays = holidays_for(ds.dates()[0], *ds.dates().last().unwrap());
    let decomposition = DecompositionConfig::for_roles(&ds);
    let dec = decompose(&ds, &holidays, &decomposition).map_err(fail)?;
    let studies = truth.default_studies(&ds, 2, 6).map_err(fail)?;
    let ctx = ModelContext::new(ds.clone(), dec, SplitPlan::default(), studies).map_err(fail)?;
    let space = HyperparameterSpace::default_for(&ds, AdstockFamily::Geometric);
    let search = SearchConfig {
        iterations: 200,
        trials: 2,
        seed: 8,
        min_candidates: 20,
        ..Default::default()
    };
    let a = run_search(&ctx, &space, &search).map_err(fail)?;
    let b = run_search(&ctx, &space, &search).map_err(fail)?;
    let mut score_diff: f64 = 0.0;
    for (x, y) in a.archive.iter().zip(&b.archive) {
        ensure(x.id == y.id, || format!("candidate order differs at {}", x.id))?;
        let pairs = [
            (x.scores.nrmse, y.scores.nrmse),
            (x.scores.decomp_rssd, y.scores.decomp_rssd),
            (x.scores.mape_lift.unwrap_or(0.0), y.scores.mape_lift.unwrap_or(0.0)),
        ];
        for (p, q) in pairs {
            if p != q {
                score_diff = score_diff.max((p - q).abs());
            }
        }
    }
    ensure(a.archive.len() == b.archive.len() && score_diff <= 1e-12, || {
        format!("same-seed scores differ by {score_diff:e}")
    })?;

    let setup = RunSetup {
        decomposition,
        holidays,
        family: AdstockFamily::Geometric,
        space,
        search,
        data_path: None,
    };
    let model = SelectedModel::from_candidate(&ctx, &setup, a.top().ok_or("empty Pareto set")?).map_err(fail)?;
    let path = model.export(dir.path()).map_err(fail)?;
    let imported = SelectedModel::import(&path, ds, false).map_err(fail)?;
    let (s, t) = (model.fit.scores, imported.fit.scores);
    let rescore = [
        (s.nrmse - t.nrmse).abs(),
        (s.decomp_rssd - t.decomp_rssd).abs(),
        (s.mape_lift.unwrap_or(0.0) - t.mape_lift.unwrap_or(0.0)).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    ensure(rescore <= 1e-9, || format!("re-scored model differs by {rescore:e}"))?;
    Ok(format!(
        "dataset identical, re-score diff {rescore:.1e}, same-seed diff {score_diff:.1e} over {} candidates",
        a.archive.len()
    ))
}

fn cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mixmodel"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(fail)?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    if !out.status.success() {
        return Err(format!(
            "`mixmodel {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(stdout)
}

fn last_line(s: &str) -> PathBuf {
    PathBuf::from(s.lines().last().unwrap_or_default().trim())
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(fail)
}

fn workflow() -> Check {
    let tmp = tempfile::tempdir().map_err(fail)?;
    let root = tmp.path();
    cli(root, &["simulate", "--seed", "3", "--periods", "221", "--holdout", "13", "--studies", "3", "--out", "sim"])?;
    cli(root, &["validate", "--config", "sim/config.json"])?;

    let run = root.join(last_line(&cli(root, &["run", "--config", "sim/config.json", "--out", "runs"])?));
    ensure(run.join("pareto.csv").is_file(), || "no pareto.csv".into())?;
    let manifest = read_json(&run.join("manifest.json"))?;
    let pareto = manifest["pareto_size"].as_u64().unwrap_or(0);
    ensure(pareto >= 100, || format!("only {pareto} Pareto candidates"))?;
    let pages: Vec<_> = std::fs::read_dir(run.join("onepagers")).map_err(fail)?.flatten().collect();
    ensure(pages.len() as u64 == pareto, || format!("{} one-pagers for {pareto} candidates", pages.len()))?;
    for page in &pages {
        let panels = std::fs::read_dir(page.path())
            .map_err(fail)?
            .flatten()
            .filter(|e| e.file_name().to_string_lossy().starts_with(|c: char| c.is_ascii_digit()))
            .count();
        ensure(panels == 8, || format!("{} has {panels} panels", page.path().display()))?;
    }

    let top = manifest["top_model"].as_str().ok_or("no top model")?.to_string();
    let run_arg = run.to_string_lossy().into_owned();
    let model = last_line(&cli(root, &["select", &top, "--run", &run_arg])?);
    ensure(model.file_name().map(|f| f.to_string_lossy().into_owned()) == Some(format!("RobynModel-{top}.json")), || {
        format!("unexpected model file {}", model.display())
    })?;

    let up = [1.2, 1.5, 1.5, 1.5, 1.5];
    let plan_path = last_line(&cli(
        root,
        &["allocate", "--model", &run_arg, "--low", "0.7", "--up", "1.2,1.5,1.5,1.5,1.5", "--out", "work"],
    )?);
    let plan = read_json(&root.join(plan_path))?;
    let channels = plan["channels"].as_array().ok_or("plan has no channels")?;
    ensure(channels.len() == up.len(), || format!("plan covers {} channels", channels.len()))?;
    let mut budget = 0.0;
    for (c, u) in channels.iter().zip(up) {
        let (h, m) = (c["historical_spend"].as_f64().unwrap(), c["spend"].as_f64().unwrap());
        budget += h;
        ensure(m >= 0.7 * h * (1.0 - 1e-9) && m <= u * h * (1.0 + 1e-9), || {
            format!("{} spend {m} outside [{}, {}]", c["channel"], 0.7 * h, u * h)
        })?;
    }
    let total = plan["total_spend"].as_f64().unwrap();
    ensure((total - budget).abs() <= 1e-9 * budget, || format!("plan spends {total} of {budget}"))?;

    let resp: serde_json::Value =
        serde_json::from_str(&cli(root, &["response", "--model", &run_arg, "--channel", "facebook_S", "--out", "work"])?)
            .map_err(fail)?;
    ensure(resp["response"].as_f64().is_some_and(|r| r > 0.0), || "no positive response".into())?;

    let model_arg = model.to_string_lossy().into_owned();
    let refreshed = root.join(last_line(&cli(
        root,
        &["refresh", "--model", &model_arg, "--data", "sim/data.csv", "--steps", "13", "--out", "runs"],
    )?));
    let rm = read_json(&refreshed.join("manifest.json"))?;
    let (old_end, new_end) = (manifest["window"]["end"].as_str(), rm["window"]["end"].as_str());
    let parse = |s: Option<&str>| s.and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok());
    let advanced = parse(new_end).zip(parse(old_end)).map(|(a, b)| (a - b).num_days());
    ensure(advanced == Some(13 * 7), || format!("refresh window end moved {advanced:?} days"))?;
    ensure(refreshed.join("selected.json").is_file(), || "refresh selected no model".into())?;
    Ok(format!(
        "{pareto} Pareto candidates with 8 panels each, {top} exported, constrained plan, refresh to {}",
        new_end.unwrap_or("?")
    ))
}

fn report(n: usize, name: &str, started: Instant, r: Check) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match r {
        Ok(detail) => {
            println!("criterion {n}: PASS  {name}: {detail} [{secs:.1}s]");
            true
        }
        Err(detail) => {
            println!("criterion {n}: FAIL  {name}: {detail} [{secs:.1}s]");
            false
        }
    }
}

fn main() -> ExitCode {
    let mut ok = true;
    let t = Instant::now();
    ok &= report(1, "transform oracles", t, transforms());
    let t = Instant::now();
    ok &= report(2, "ridge oracle", t, ridge());

    let t = Instant::now();
    let runs: Result<Vec<SeedRuns>, String> = (1..=5).map(seed_runs).collect();
    match runs {
        Ok(runs) => {
            ok &= report(3, "ROAS recovery", t, roas_recovery(&runs));
            ok &= report(4, "calibration benefit", t, calibration_benefit(&runs));
            ok &= report(5, "DECOMP.RSSD direction", t, rssd_direction(&runs));
        }
        Err(e) => {
            for (n, name) in [(3, "ROAS recovery"), (4, "calibration benefit"), (5, "DECOMP.RSSD direction")] {
                ok &= report(n, name, t, Err(e.clone()));
            }
        }
    }
    let t = Instant::now();
    ok &= report(6, "Pareto audit", t, pareto_audit());
    let t = Instant::now();
    ok &= report(7, "allocator KKT", t, allocator());
    let t = Instant::now();
    ok &= report(8, "round trips", t, round_trips());
    let t = Instant::now();
    ok &= report(9, "CLI workflow", t, workflow());
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
