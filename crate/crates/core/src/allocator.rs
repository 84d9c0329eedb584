//! Budget allocation over fitted response curves.
//!
//! Each paid channel's response to a mean per-period spend `m` is
//! `beta * Hill(a * m; alpha, c)`, where `a` maps mean spend to the mean
//! adstocked level seen in the modeling window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DepVarType, Window};
use crate::error::{bail, Result};
use crate::model::{ChannelSummary, ModelFit};
use crate::regression::ColumnRole;
use crate::reporting::SelectedModel;
use crate::transforms::{hill, hill_derivative};

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_SEED: u64 = 20_240_601;

const FEASIBILITY_TOL: f64 = 1e-10;
const GRADIENT_TOL: f64 = 1e-8;
const MAX_OUTER: usize = 40;
const MAX_INNER: usize = 5_000;
const MAX_POLISH: usize = 20_000;
const ARMIJO: f64 = 1e-4;

/// Response curve of one channel in mean per-period spend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub channel: String,
    /// Coefficient on the saturated series, data units.
    pub coefficient: f64,
    /// Mean adstocked level per unit of mean spend.
    pub adstock_ratio: f64,
    pub alpha: f64,
    pub inflection: f64,
}

impl ResponseCurve {
    pub fn new(channel: impl Into<String>, coefficient: f64, adstock_ratio: f64, alpha: f64, inflection: f64) -> Self {
        ResponseCurve {
            channel: channel.into(),
            coefficient,
            adstock_ratio,
            alpha,
            inflection,
        }
    }

    fn from_summary(c: &ChannelSummary, alpha: f64) -> Result<Self> {
        if c.adstock_ratio <= 0.0 || !c.adstock_ratio.is_finite() {
            bail!(InvalidParameter, "channel '{}' has no historical spend; its response curve is undefined", c.channel);
        }
        Ok(ResponseCurve::new(&c.channel, c.coefficient, c.adstock_ratio, alpha, c.inflection))
    }

    /// Curve of a fitted channel.
    pub fn for_channel(fit: &ModelFit, channel: &str) -> Result<Self> {
        let Some(c) = fit.channels.iter().find(|c| c.channel == channel) else {
            bail!(InvalidParameter, "unknown channel '{channel}'");
        };
        let Some(p) = fit.hyperparameters.params(&c.channel) else {
            bail!(Model, "no hyperparameters for channel '{channel}'");
        };
        Self::from_summary(c, p.saturation.alpha)
    }

    pub fn response(&self, spend: f64) -> f64 {
        self.coefficient * hill(self.adstock_ratio * spend, self.alpha, self.inflection)
    }

    pub fn marginal(&self, spend: f64) -> f64 {
        self.coefficient * self.adstock_ratio * hill_derivative(self.adstock_ratio * spend, self.alpha, self.inflection)
    }
}

pub fn channel_response(model: &SelectedModel, channel: &str, spend: f64) -> Result<f64> {
    check_spend(spend)?;
    Ok(ResponseCurve::for_channel(&model.fit, channel)?.response(spend))
}

pub fn marginal_response(model: &SelectedModel, channel: &str, spend: f64) -> Result<f64> {
    check_spend(spend)?;
    Ok(ResponseCurve::for_channel(&model.fit, channel)?.marginal(spend))
}

fn check_spend(spend: f64) -> Result<()> {
    if !(spend >= 0.0 && spend.is_finite()) {
        bail!(InvalidParameter, "spend must be a finite non-negative number, got {spend}");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    MaxResponse,
    TargetEfficiency,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "max_response" => Ok(Scenario::MaxResponse),
            "target_efficiency" => Ok(Scenario::TargetEfficiency),
            _ => bail!(InvalidParameter, "unknown scenario '{s}' (expected max_response or target_efficiency)"),
        }
    }
}

/// Bound multipliers of historical mean spend: one for all channels or one
/// per paid channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Multipliers {
    Uniform(f64),
    PerChannel(Vec<f64>),
}

impl Multipliers {
    pub fn parse(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| crate::error::Error::InvalidParameter(format!("cannot parse multipliers '{s}'")))?;
        Ok(if vals.len() == 1 { Multipliers::Uniform(vals[0]) } else { Multipliers::PerChannel(vals) })
    }

    fn expand(&self, n: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            Multipliers::Uniform(v) => Ok(vec![*v; n]),
            Multipliers::PerChannel(v) if v.len() == n => Ok(v.clone()),
            Multipliers::PerChannel(v) => bail!(InvalidParameter, "{what} has {} values for {n} paid channels", v.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub scenario: Scenario,
    /// Defaults to the modeling window.
    pub date_range: Option<Window>,
    /// Total spend over `date_range`; defaults to the historical total.
    pub total_budget: Option<f64>,
    /// ROAS floor (revenue) or CPA ceiling (conversion).
    pub target_value: Option<f64>,
    pub channel_constr_low: Multipliers,
    pub channel_constr_up: Multipliers,
    pub restarts: usize,
    pub seed: u64,
}

impl AllocationProblem {
    pub fn max_response(low: Multipliers, up: Multipliers) -> Self {
        AllocationProblem {
            scenario: Scenario::MaxResponse,
            date_range: None,
            total_budget: None,
            target_value: None,
            channel_constr_low: low,
            channel_constr_up: up,
            restarts: DEFAULT_RESTARTS,
            seed: DEFAULT_SEED,
        }
    }

    pub fn target_efficiency(target: f64, low: Multipliers, up: Multipliers) -> Self {
        AllocationProblem {
            scenario: Scenario::TargetEfficiency,
            target_value: Some(target),
            ..Self::max_response(low, up)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAllocation {
    pub channel: String,
    /// Historical mean per-period spend over the date range.
    pub historical_spend: f64,
    pub lower: f64,
    pub upper: f64,
    /// Recommended mean per-period spend.
    pub spend: f64,
    pub response: f64,
    pub historical_response: f64,
    pub marginal: f64,
    pub at_lower: bool,
    pub at_upper: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    /// Relative spread of marginal responses over free channels plus any
    /// sign violation at active bounds.
    pub kkt_residual: f64,
    /// `|sum(spend) - budget| / budget`.
    pub budget_residual: f64,
    pub restarts: usize,
    pub best_restart: usize,
    pub restart_objectives: Vec<f64>,
    pub outer_rounds: usize,
    pub converged: bool,
    /// Budgets tried by the efficiency bisection.
    pub budget_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub model_id: String,
    pub scenario: Scenario,
    pub dep_var_type: DepVarType,
    pub date_range: Window,
    pub periods: usize,
    /// Total budget over the date range.
    pub total_budget: f64,
    pub target_value: Option<f64>,
    /// Per-period totals.
    pub total_spend: f64,
    pub total_response: f64,
    pub historical_total_spend: f64,
    pub historical_total_response: f64,
    /// ROAS for revenue, CPA for conversion.
    pub efficiency: f64,
    pub historical_efficiency: f64,
    pub flags: Vec<String>,
    pub channels: Vec<ChannelAllocation>,
    pub diagnostics: SolverDiagnostics,
}

impl AllocationPlan {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }
}

pub const FLAG_NOT_CONVERGED: &str = "solver did not converge";
pub const FLAG_TARGET_EXCEEDED: &str = "target exceeded everywhere";
pub const FLAG_TARGET_UNATTAINABLE: &str = "target unattainable";

/// Solver options for [`maximize_response`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            restarts: DEFAULT_RESTARTS,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub spends: Vec<f64>,
    pub objective: f64,
    pub diagnostics: SolverDiagnostics,
}

/// Box-and-budget feasible set, in variables scaled by `scale`.
struct Problem<'a> {
    curves: &'a [ResponseCurve],
    lower: &'a [f64],
    upper: &'a [f64],
    scale: Vec<f64>,
    budget: f64,
    /// Objective normalization.
    norm: f64,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.curves.len()
    }

    fn spend(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }

    fn value(&self, u: &[f64]) -> f64 {
        self.curves
            .iter()
            .zip(u)
            .zip(&self.scale)
            .map(|((c, v), s)| c.response(v * s))
            .sum::<f64>()
            / self.norm
    }

    /// Gradient of `value`, finite near zero spend.
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        self.curves
            .iter()
            .zip(u)
            .zip(&self.scale)
            .map(|((c, v), s)| {
                let m = (v * s).max(1e-12 * s);
                c.marginal(m) * s / self.norm
            })
            .collect()
    }

    fn box_lo(&self, i: usize) -> f64 {
        self.lower[i] / self.scale[i]
    }

    fn box_hi(&self, i: usize) -> f64 {
        self.upper[i] / self.scale[i]
    }

    fn clip(&self, u: &mut [f64]) {
        for (i, v) in u.iter_mut().enumerate() {
            *v = v.clamp(self.box_lo(i), self.box_hi(i));
        }
    }

    fn violation(&self, u: &[f64]) -> f64 {
        (self.spend(u).iter().sum::<f64>() - self.budget) / self.budget
    }

    /// Euclidean projection onto the box intersected with the budget plane,
    /// finished so that the budget holds to rounding in spend units.
    fn project(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n();
        let at = |tau: f64| -> Vec<f64> {
            (0..n)
                .map(|i| (y[i] - tau * self.scale[i]).clamp(self.box_lo(i), self.box_hi(i)))
                .collect()
        };
        let total = |u: &[f64]| -> f64 { self.spend(u).iter().sum() };
        let (mut lo, mut hi) = (-1.0, 1.0);
        while total(&at(lo)) < self.budget && lo > -1e300 {
            lo *= 2.0;
        }
        while total(&at(hi)) > self.budget && hi < 1e300 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if total(&at(mid)) > self.budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut u = at(0.5 * (lo + hi));
        self.fix_budget(&mut u);
        u
    }

    /// Moves the remaining budget gap onto channels with room.
    fn fix_budget(&self, u: &mut [f64]) {
        for _ in 0..3 {
            let gap = self.budget - self.spend(u).iter().sum::<f64>();
            if gap == 0.0 {
                return;
            }
            let mut left = gap;
            for i in 0..self.n() {
                let m = u[i] * self.scale[i];
                let room = if left > 0.0 { self.upper[i] - m } else { self.lower[i] - m };
                let step = if left > 0.0 { left.min(room) } else { left.max(room) };
                if step != 0.0 {
                    u[i] = ((m + step) / self.scale[i]).clamp(self.box_lo(i), self.box_hi(i));
                    left -= step;
                }
                if left == 0.0 {
                    break;
                }
            }
        }
    }

    /// Projected gradient norm on the full feasible set.
    fn stationarity(&self, u: &[f64]) -> f64 {
        let g = self.gradient(u);
        let y: Vec<f64> = u.iter().zip(&g).map(|(v, d)| v + d).collect();
        let p = self.project(&y);
        p.iter().zip(u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }
}

struct Restart {
    u: Vec<f64>,
    value: f64,
    rounds: usize,
    converged: bool,
}

/// Augmented Lagrangian on the budget with box-projected gradient inner
/// solves, then projected-gradient polishing on the exact feasible set.
fn solve_from(p: &Problem, start: Vec<f64>) -> Restart {
    let n = p.n();
    let mut u = start;
    let mut lambda = 0.0;
    let mut rho = 10.0;
    let mut rounds = 0;
    let lagrangian = |u: &[f64], lambda: f64, rho: f64| -> f64 {
        let h = p.violation(u);
        -p.value(u) + lambda * h + 0.5 * rho * h * h
    };
    let l_grad = |u: &[f64], lambda: f64, rho: f64| -> Vec<f64> {
        let h = p.violation(u);
        let g = p.gradient(u);
        (0..n)
            .map(|i| -g[i] + (lambda + rho * h) * p.scale[i] / p.budget)
            .collect()
    };

    for _ in 0..MAX_OUTER {
        rounds += 1;
        let mut step: f64 = 1.0;
        for _ in 0..MAX_INNER {
            let g = l_grad(&u, lambda, rho);
            let f0 = lagrangian(&u, lambda, rho);
            let mut pg = u.clone();
            for (i, v) in pg.iter_mut().enumerate() {
                *v -= g[i];
            }
            p.clip(&mut pg);
            let pg_norm = pg.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if pg_norm < GRADIENT_TOL {
                break;
            }
            step = (step * 2.0).min(1e6);
            let mut moved = false;
            for _ in 0..60 {
                let mut cand: Vec<f64> = u.iter().zip(&g).map(|(v, d)| v - step * d).collect();
                p.clip(&mut cand);
                let decrease: f64 = g.iter().zip(cand.iter().zip(&u)).map(|(d, (c, v))| d * (c - v)).sum();
                if lagrangian(&cand, lambda, rho) <= f0 + ARMIJO * decrease {
                    moved = cand != u;
                    u = cand;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let h = p.violation(&u);
        lambda += rho * h;
        if h.abs() < FEASIBILITY_TOL {
            break;
        }
        rho = (rho * 10.0).min(1e12);
    }

    u = p.project(&u);
    let mut step: f64 = 1.0;
    for _ in 0..MAX_POLISH {
        let g = p.gradient(&u);
        let f0 = p.value(&u);
        let s0 = p.stationarity(&u);
        let flat = 8.0 * f64::EPSILON * f0.abs();
        step = (step * 2.0).min(1e6);
        let mut moved = false;
        for _ in 0..60 {
            let y: Vec<f64> = u.iter().zip(&g).map(|(v, d)| v + step * d).collect();
            let cand = p.project(&y);
            let gain: f64 = g.iter().zip(cand.iter().zip(&u)).map(|(d, (c, v))| d * (c - v)).sum();
            let f1 = p.value(&cand);
            if f1 > f0 && f1 >= f0 + ARMIJO * gain && gain >= 0.0 {
                moved = true;
                u = cand;
                break;
            }
            if f1 >= f0 - flat && cand != u && p.stationarity(&cand) < s0 {
                moved = true;
                u = cand;
                break;
            }
            step *= 0.5;
        }
        if !moved || p.stationarity(&u) < GRADIENT_TOL {
            break;
        }
    }
    let converged = p.violation(&u).abs() < FEASIBILITY_TOL && p.stationarity(&u) < GRADIENT_TOL;
    Restart {
        value: p.value(&u),
        u,
        rounds,
        converged,
    }
}

fn starting_points(p: &Problem, anchor: &[f64], restarts: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = p.n();
    let mut starts = vec![anchor.iter().zip(&p.scale).map(|(m, s)| m / s).collect::<Vec<_>>()];
    for i in 0..n {
        if starts.len() >= restarts {
            break;
        }
        starts.push((0..n).map(|j| if j == i { p.box_hi(j) } else { p.box_lo(j) }).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while starts.len() < restarts {
        starts.push((0..n).map(|j| p.box_lo(j) + rng.random::<f64>() * (p.box_hi(j) - p.box_lo(j))).collect());
    }
    starts.into_iter().map(|s| p.project(&s)).collect()
}

/// KKT residual at `m`: spread of marginals over free channels relative to
/// their mean, plus violations of the bound signs.
pub fn kkt_residual(curves: &[ResponseCurve], lower: &[f64], upper: &[f64], m: &[f64]) -> f64 {
    let tol = |b: f64| 1e-9 * b.abs().max(1.0);
    let mut free = Vec::new();
    let mut at_lo = Vec::new();
    let mut at_hi = Vec::new();
    for i in 0..curves.len() {
        let d = curves[i].marginal(m[i].max(1e-12));
        if upper[i] - lower[i] <= tol(upper[i]) {
            continue;
        } else if m[i] - lower[i] <= tol(lower[i]) {
            at_lo.push(d);
        } else if upper[i] - m[i] <= tol(upper[i]) {
            at_hi.push(d);
        } else {
            free.push(d);
        }
    }
    let max_lo = at_lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_hi = at_hi.iter().copied().fold(f64::INFINITY, f64::min);
    if free.is_empty() {
        if max_lo.is_finite() && min_hi.is_finite() && max_lo > min_hi {
            return (max_lo - min_hi) / max_lo.abs().max(min_hi.abs());
        }
        return 0.0;
    }
    let mu = free.iter().sum::<f64>() / free.len() as f64;
    let scale = mu.abs().max(f64::MIN_POSITIVE);
    let spread = free.iter().copied().fold(f64::NEG_INFINITY, f64::max) - free.iter().copied().fold(f64::INFINITY, f64::min);
    let lo_violation = (max_lo - mu).max(0.0);
    let hi_violation = (mu - min_hi).max(0.0);
    (spread + lo_violation + hi_violation) / scale
}

/// Maximizes `sum r_c(m_c)` subject to `sum m_c = budget` and
/// `lower <= m <= upper`. `anchor` is the first starting point (projected).
pub fn maximize_response(
    curves: &[ResponseCurve],
    lower: &[f64],
    upper: &[f64],
    budget: f64,
    anchor: &[f64],
    opts: SolverOptions,
) -> Result<Solution> {
    let n = curves.len();
    if n == 0 {
        bail!(InvalidParameter, "no channels to allocate");
    }
    if lower.len() != n || upper.len() != n || anchor.len() != n {
        bail!(InvalidParameter, "bounds and starting point must have one entry per channel");
    }
    for i in 0..n {
        if !(lower[i] >= 0.0 && lower[i] <= upper[i] && upper[i].is_finite()) {
            bail!(InvalidParameter, "invalid bounds [{}, {}] for channel '{}'", lower[i], upper[i], curves[i].channel);
        }
    }
    let (lo_sum, hi_sum): (f64, f64) = (lower.iter().sum(), upper.iter().sum());
    let slack = 1e-12 * hi_sum.max(1.0);
    if !(budget > 0.0) || budget < lo_sum - slack || budget > hi_sum + slack {
        bail!(
            Infeasible,
            "budget {budget} outside the feasible range [{lo_sum}, {hi_sum}] implied by the channel bounds"
        );
    }
    let restarts = opts.restarts.max(1);
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let s = upper[i].max(anchor[i]);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let norm = curves
        .iter()
        .zip(upper)
        .map(|(c, u)| c.response(*u).abs())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let p = Problem {
        curves,
        lower,
        upper,
        scale,
        budget,
        norm,
    };
    let starts = starting_points(&p, anchor, restarts, opts.seed);
    let results: Vec<Restart> = starts.into_par_iter().map(|s| solve_from(&p, s)).collect();
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.value > results[best].value {
            best = i;
        }
    }
    let r = &results[best];
    let spends: Vec<f64> = p
        .spend(&r.u)
        .into_iter()
        .enumerate()
        .map(|(i, m)| m.clamp(lower[i], upper[i]))
        .collect();
    let total: f64 = spends.iter().sum();
    let diagnostics = SolverDiagnostics {
        kkt_residual: kkt_residual(curves, lower, upper, &spends),
        budget_residual: (total - budget).abs() / budget,
        restarts,
        best_restart: best,
        restart_objectives: results.iter().map(|r| r.value * norm).collect(),
        outer_rounds: r.rounds,
        converged: r.converged,
        budget_evaluations: 1,
    };
    Ok(Solution {
        objective: curves.iter().zip(&spends).map(|(c, m)| c.response(*m)).sum(),
        spends,
        diagnostics,
    })
}

/// Inputs the allocator derives from a selected model.
struct Setup {
    curves: Vec<ResponseCurve>,
    hist: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    periods: usize,
    range: Window,
}

fn setup(model: &SelectedModel, problem: &AllocationProblem) -> Result<Setup> {
    let ds = model.context.dataset();
    let window = ds.window();
    let range = problem.date_range.unwrap_or(window);
    if range.start < window.start || range.end > window.end || range.start > range.end {
        bail!(
            InvalidParameter,
            "date range {}..{} must lie within the modeling window {}..{}",
            range.start,
            range.end,
            window.start,
            window.end
        );
    }
    let rows: Vec<usize> = ds
        .window_dates()
        .iter()
        .enumerate()
        .filter(|(_, d)| range.contains(**d))
        .map(|(i, _)| i)
        .collect();
    if rows.is_empty() {
        bail!(InvalidParameter, "date range {}..{} contains no observations", range.start, range.end);
    }
    let paid: Vec<&ChannelSummary> = model.fit.channels.iter().filter(|c| c.role == ColumnRole::PaidMedia).collect();
    let n = paid.len();
    let low = problem.channel_constr_low.expand(n, "channel_constr_low")?;
    let up = problem.channel_constr_up.expand(n, "channel_constr_up")?;
    let mut curves = Vec::with_capacity(n);
    let mut hist = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for (k, c) in paid.iter().enumerate() {
        if !(low[k] > 0.0 && low[k] <= up[k] && up[k].is_finite()) {
            bail!(
                InvalidParameter,
                "channel '{}' needs 0 < low <= up, got low = {} and up = {}",
                c.channel,
                low[k],
                up[k]
            );
        }
        let values = ds.window_values(&c.channel).expect("paid channel present");
        let mean = rows.iter().map(|&i| values[i]).sum::<f64>() / rows.len() as f64;
        let alpha = model
            .fit
            .hyperparameters
            .params(&c.channel)
            .map(|p| p.saturation.alpha)
            .unwrap_or(1.0);
        curves.push(if c.adstock_ratio > 0.0 {
            ResponseCurve::from_summary(c, alpha)?
        } else {
            ResponseCurve::new(&c.channel, 0.0, 1.0, alpha, 1.0)
        });
        hist.push(mean);
        lower.push(low[k] * mean);
        upper.push(up[k] * mean);
    }
    Ok(Setup {
        curves,
        hist,
        lower,
        upper,
        periods: rows.len(),
        range,
    })
}

fn efficiency(dep: DepVarType, spend: f64, response: f64) -> f64 {
    match dep {
        DepVarType::Revenue => {
            if spend > 0.0 {
                response / spend
            } else {
                0.0
            }
        }
        DepVarType::Conversion => {
            if response > 0.0 {
                spend / response
            } else {
                f64::INFINITY
            }
        }
    }
}

fn meets(dep: DepVarType, achieved: f64, target: f64) -> bool {
    match dep {
        DepVarType::Revenue => achieved >= target,
        DepVarType::Conversion => achieved <= target,
    }
}

fn plan(model: &SelectedModel, problem: &AllocationProblem, s: &Setup, budget_total: f64, sol: Solution, flags: Vec<String>) -> AllocationPlan {
    let dep = model.fit.dep_var_type;
    let tol = |b: f64| 1e-9 * b.abs().max(1.0);
    let channels: Vec<ChannelAllocation> = s
        .curves
        .iter()
        .enumerate()
        .map(|(i, c)| ChannelAllocation {
            channel: c.channel.clone(),
            historical_spend: s.hist[i],
            lower: s.lower[i],
            upper: s.upper[i],
            spend: sol.spends[i],
            response: c.response(sol.spends[i]),
            historical_response: c.response(s.hist[i]),
            marginal: c.marginal(sol.spends[i]),
            at_lower: sol.spends[i] - s.lower[i] <= tol(s.lower[i]),
            at_upper: s.upper[i] - sol.spends[i] <= tol(s.upper[i]),
        })
        .collect();
    let total_spend: f64 = sol.spends.iter().sum();
    let total_response: f64 = channels.iter().map(|c| c.response).sum();
    let historical_total_spend: f64 = s.hist.iter().sum();
    let historical_total_response: f64 = channels.iter().map(|c| c.historical_response).sum();
    let mut flags = flags;
    if !sol.diagnostics.converged {
        flags.push(FLAG_NOT_CONVERGED.to_string());
    }
    AllocationPlan {
        model_id: model.id().to_string(),
        scenario: problem.scenario,
        dep_var_type: dep,
        date_range: s.range,
        periods: s.periods,
        total_budget: budget_total,
        target_value: problem.target_value,
        total_spend,
        total_response,
        historical_total_spend,
        historical_total_response,
        efficiency: efficiency(dep, total_spend, total_response),
        historical_efficiency: efficiency(dep, historical_total_spend, historical_total_response),
        flags,
        channels,
        diagnostics: sol.diagnostics,
    }
}

/// Solves an allocation problem on a selected model.
pub fn allocate(model: &SelectedModel, problem: &AllocationProblem) -> Result<AllocationPlan> {
    let s = setup(model, problem)?;
    let opts = SolverOptions {
        restarts: problem.restarts,
        seed: problem.seed,
    };
    let periods = s.periods as f64;
    let solve = |per_period: f64| maximize_response(&s.curves, &s.lower, &s.upper, per_period, &s.hist, opts);
    match problem.scenario {
        Scenario::MaxResponse => {
            if problem.target_value.is_some() {
                bail!(InvalidParameter, "target_value applies to the target_efficiency scenario only");
            }
            let total = match problem.total_budget {
                Some(b) if b > 0.0 && b.is_finite() => b,
                Some(b) => bail!(InvalidParameter, "total_budget must be positive, got {b}"),
                None => s.hist.iter().sum::<f64>() * periods,
            };
            let sol = solve(total / periods)?;
            Ok(plan(model, problem, &s, total, sol, Vec::new()))
        }
        Scenario::TargetEfficiency => {
            let target = match problem.target_value {
                Some(t) if t > 0.0 && t.is_finite() => t,
                Some(t) => bail!(InvalidParameter, "target_value must be positive, got {t}"),
                None => bail!(InvalidParameter, "target_efficiency requires target_value"),
            };
            if problem.total_budget.is_some() {
                bail!(InvalidParameter, "total_budget applies to the max_response scenario only");
            }
            let out = solve_target_efficiency(&s.curves, &s.lower, &s.upper, &s.hist, model.fit.dep_var_type, target, opts)?;
            let flags = out.flag.map(|f| vec![f.to_string()]).unwrap_or_default();
            Ok(plan(model, problem, &s, out.budget * periods, out.solution, flags))
        }
    }
}

/// Result of the efficiency bisection, with a per-period budget.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetOutcome {
    pub solution: Solution,
    pub budget: f64,
    pub efficiency: f64,
    pub flag: Option<&'static str>,
}

/// Largest per-period budget whose optimal allocation still meets `target`
/// (ROAS at least, or CPA at most), by bisection over
/// `[sum(lower), min(10 * sum(anchor), sum(upper))]`.
pub fn solve_target_efficiency(
    curves: &[ResponseCurve],
    lower: &[f64],
    upper: &[f64],
    anchor: &[f64],
    dep: DepVarType,
    target: f64,
    opts: SolverOptions,
) -> Result<TargetOutcome> {
    if !(target > 0.0 && target.is_finite()) {
        bail!(InvalidParameter, "target_value must be positive, got {target}");
    }
    let hist_sum: f64 = anchor.iter().sum();
    let lo_b: f64 = lower.iter().sum();
    let hi_b = (10.0 * hist_sum).min(upper.iter().sum());
    let mut evaluations = 0;
    let mut eval = |b: f64| -> Result<(Solution, f64)> {
        evaluations += 1;
        let sol = maximize_response(curves, lower, upper, b, anchor, opts)?;
        let e = efficiency(dep, sol.spends.iter().sum(), sol.objective);
        Ok((sol, e))
    };
    let done = |sol: Solution, budget: f64, e: f64, flag: Option<&'static str>, evals: usize| {
        let mut solution = sol;
        solution.diagnostics.budget_evaluations = evals;
        TargetOutcome {
            solution,
            budget,
            efficiency: e,
            flag,
        }
    };
    let (top, top_eff) = eval(hi_b)?;
    if meets(dep, top_eff, target) {
        return Ok(done(top, hi_b, top_eff, Some(FLAG_TARGET_EXCEEDED), evaluations));
    }
    let (bottom, bottom_eff) = eval(lo_b)?;
    if !meets(dep, bottom_eff, target) {
        return Ok(done(bottom, lo_b, bottom_eff, Some(FLAG_TARGET_UNATTAINABLE), evaluations));
    }
    let (mut lo, mut hi) = (lo_b, hi_b);
    let mut best = (bottom, lo_b, bottom_eff);
    while hi - lo > 1e-6 * hist_sum {
        let mid = 0.5 * (lo + hi);
        let (sol, e) = eval(mid)?;
        let close = ((e - target) / target).abs() <= 0.005;
        if meets(dep, e, target) {
            lo = mid;
            best = (sol, mid, e);
        } else {
            hi = mid;
            if close {
                best = (sol, mid, e);
            }
        }
        if close {
            break;
        }
    }
    let (sol, b, e) = best;
    Ok(done(sol, b, e, None, evaluations))
}
