//! Ridge regression with per-coefficient lower bounds, fit by cyclic
//! coordinate descent on z-scored columns, plus chronological train /
//! validation / test scoring.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub const LAMBDA_ALPHA: f64 = 0.001;
pub const LAMBDA_MIN_RATIO: f64 = 0.0001;
pub const CD_TOLERANCE: f64 = 1e-9;
pub const CD_MAX_SWEEPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    PaidMedia,
    Organic,
    Context,
    Decomposition,
}

impl ColumnRole {
    /// Media effects are nonnegative; baseline regressors are free.
    pub fn lower_bound(self) -> f64 {
        match self {
            ColumnRole::PaidMedia | ColumnRole::Organic => 0.0,
            ColumnRole::Context | ColumnRole::Decomposition => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignColumn {
    pub name: String,
    pub role: ColumnRole,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub fn apply(&self, v: f64) -> f64 {
        if self.sd > 0.0 {
            (v - self.mean) / self.sd
        } else {
            0.0
        }
    }
}

/// Chronological split of `n` rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_fraction: f64,
    pub ts_validation: bool,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            train_fraction: 0.7,
            ts_validation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitPlan {
    pub fn splits(&self, n: usize) -> Result<Splits> {
        if !self.ts_validation {
            if n == 0 {
                bail!(InvalidData, "no observations to fit");
            }
            return Ok(Splits {
                train: 0..n,
                val: n..n,
                test: n..n,
            });
        }
        if !(0.5..=0.9).contains(&self.train_fraction) {
            bail!(InvalidParameter, "train_fraction must lie in [0.5, 0.9], got {}", self.train_fraction);
        }
        let n_train = (n as f64 * self.train_fraction).floor() as usize;
        let n_val = (n - n_train) / 2;
        let n_test = n - n_train - n_val;
        if n_train == 0 || n_val == 0 || n_test == 0 {
            bail!(InvalidData, "{n} observations are too few for a three-way split");
        }
        Ok(Splits {
            train: 0..n_train,
            val: n_train..n_train + n_val,
            test: n_train + n_val..n,
        })
    }
}

/// Regressors z-scored with training-split constants.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub roles: Vec<ColumnRole>,
    /// Raw columns, all rows.
    pub raw: Vec<Vec<f64>>,
    /// Standardized columns, all rows.
    pub z: Vec<Vec<f64>>,
    pub standardization: Vec<Standardization>,
    pub response: Vec<f64>,
    pub train: Range<usize>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl DesignMatrix {
    pub fn new(columns: Vec<DesignColumn>, response: Vec<f64>, train: Range<usize>) -> Result<Self> {
        let n = response.len();
        if train.is_empty() || train.end > n {
            bail!(InvalidParameter, "training rows {train:?} do not fit {n} observations");
        }
        if response.iter().any(|v| !v.is_finite()) {
            bail!(InvalidData, "response contains non-finite values");
        }
        let mut names = Vec::new();
        let mut roles = Vec::new();
        let mut raw = Vec::new();
        let mut z = Vec::new();
        let mut standardization = Vec::new();
        for col in columns {
            if col.values.len() != n {
                bail!(InvalidData, "column '{}' has {} rows, response has {n}", col.name, col.values.len());
            }
            if col.values.iter().any(|v| !v.is_finite()) {
                bail!(Numerical, "column '{}' contains non-finite values", col.name);
            }
            let (mean, sd) = mean_sd(&col.values[train.clone()]);
            // A column constant over the training rows carries no information
            // and is pinned at zero by the fit.
            let st = Standardization { mean, sd };
            z.push(col.values.iter().map(|v| st.apply(*v)).collect());
            standardization.push(st);
            names.push(col.name);
            roles.push(col.role);
            raw.push(col.values);
        }
        Ok(DesignMatrix {
            names,
            roles,
            raw,
            z,
            standardization,
            response,
            train,
        })
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.roles.iter().map(|r| r.lower_bound()).collect()
    }

    fn train_response(&self) -> (f64, f64) {
        mean_sd(&self.response[self.train.clone()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaBounds {
    pub min: f64,
    pub max: f64,
    /// Zero response variation: every penalty gives the intercept-only fit.
    pub degenerate: bool,
}

impl LambdaBounds {
    /// Affine map of a unit hyperparameter onto `[min, max]`.
    pub fn at(&self, h: f64) -> f64 {
        self.min + h * (self.max - self.min)
    }
}

/// Penalty range: `max_j |z_j . y| / (n * 0.001)` with the response scaled
/// to unit standard deviation, and `1e-4` of that as the minimum.
pub fn lambda_bounds(design: &DesignMatrix) -> Result<LambdaBounds> {
    if design.width() == 0 {
        bail!(InvalidParameter, "design has no columns");
    }
    let (_, sd) = design.train_response();
    let n = design.n_train() as f64;
    let max = if sd > 0.0 {
        design
            .z
            .iter()
            .map(|z| {
                design
                    .train
                    .clone()
                    .map(|i| z[i] * design.response[i] / sd)
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
            / (n * LAMBDA_ALPHA)
    } else {
        0.0
    };
    Ok(LambdaBounds {
        min: LAMBDA_MIN_RATIO * max,
        max,
        degenerate: max == 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub names: Vec<String>,
    /// Coefficients on the standardized columns, in response units.
    pub coefficients: Vec<f64>,
    /// Intercept on the standardized scale (training mean of the response).
    pub intercept: f64,
    pub lambda: f64,
    pub coefficients_data: Vec<f64>,
    pub intercept_data: f64,
    pub converged: bool,
    pub sweeps: usize,
}

impl RidgeFit {
    /// Predictions from the data-unit coefficients.
    pub fn predict(&self, design: &DesignMatrix) -> Vec<f64> {
        let n = design.response.len();
        let mut out = vec![self.intercept_data; n];
        for (b, col) in self.coefficients_data.iter().zip(&design.raw) {
            for (o, v) in out.iter_mut().zip(col) {
                *o += b * v;
            }
        }
        out
    }

    /// Predictions from the standardized representation.
    pub fn predict_standardized(&self, design: &DesignMatrix) -> Vec<f64> {
        let n = design.response.len();
        let mut out = vec![self.intercept; n];
        for (b, col) in self.coefficients.iter().zip(&design.z) {
            for (o, v) in out.iter_mut().zip(col) {
                *o += b * v;
            }
        }
        out
    }
}

/// Minimizes `sum_train (y - b0 - sum_j b_j z_j)^2 + lambda sum_j b_j^2`
/// subject to `b_j >= lower_bounds[j]`, with an unpenalized intercept.
pub fn fit_ridge(design: &DesignMatrix, lambda: f64, lower_bounds: &[f64]) -> Result<RidgeFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        bail!(InvalidParameter, "lambda must be finite and nonnegative, got {lambda}");
    }
    let p = design.width();
    if lower_bounds.len() != p {
        bail!(InvalidParameter, "{} bounds for {p} columns", lower_bounds.len());
    }
    let train = design.train.clone();
    let (y_mean, y_sd) = design.train_response();
    let scale = if y_sd > 0.0 { y_sd } else { 1.0 };

    let zs: Vec<&[f64]> = design.z.iter().map(|z| &z[train.clone()]).collect();
    let zz: Vec<f64> = zs.iter().map(|z| z.iter().map(|v| v * v).sum()).collect();
    let mut resid: Vec<f64> = design.response[train.clone()]
        .iter()
        .map(|y| (y - y_mean) / scale)
        .collect();
    let mut beta = vec![0.0; p];
    let mut converged = y_sd == 0.0;
    let mut sweeps = 0;
    while !converged && sweeps < CD_MAX_SWEEPS {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let denom = zz[j] + lambda;
            if zz[j] == 0.0 || denom <= 0.0 {
                continue;
            }
            let z = zs[j];
            let rho: f64 = z.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() + zz[j] * beta[j];
            let new = (rho / denom).max(lower_bounds[j]);
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(z) {
                    *r -= a * delta;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        converged = max_change < CD_TOLERANCE;
    }
    if beta.iter().any(|b| !b.is_finite()) {
        bail!(Numerical, "coordinate descent diverged");
    }

    let coefficients: Vec<f64> = beta.iter().map(|b| b * scale).collect();
    let coefficients_data: Vec<f64> = coefficients
        .iter()
        .zip(&design.standardization)
        .map(|(b, st)| if st.sd > 0.0 { b / st.sd } else { 0.0 })
        .collect();
    let intercept_data = y_mean
        - coefficients_data
            .iter()
            .zip(&design.standardization)
            .map(|(b, st)| b * st.mean)
            .sum::<f64>();
    Ok(RidgeFit {
        names: design.names.clone(),
        coefficients,
        intercept: y_mean,
        lambda,
        coefficients_data,
        intercept_data,
        converged,
        sweeps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub nrmse: f64,
    pub rsq: f64,
    pub rsq_adj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub train: SplitMetrics,
    pub val: Option<SplitMetrics>,
    pub test: Option<SplitMetrics>,
}

impl FitMetrics {
    /// NRMSE used for selection: validation when available, else training.
    pub fn selection_nrmse(&self) -> f64 {
        self.val.map(|v| v.nrmse).unwrap_or(self.train.nrmse)
    }
}

/// `RMSE / (max(y) - min(y))`.
pub fn nrmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        bail!(InvalidData, "response is constant within a split; NRMSE undefined");
    }
    let mse = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt() / (hi - lo))
}

fn split_metrics(y: &[f64], yhat: &[f64], p: usize) -> Result<SplitMetrics> {
    let nrmse = nrmse(y, yhat)?;
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    let rsq = 1.0 - sse / sst;
    let df = (n - p as f64 - 1.0).max(1.0);
    let rsq_adj = 1.0 - (1.0 - rsq) * (n - 1.0) / df;
    Ok(SplitMetrics { nrmse, rsq, rsq_adj })
}

/// Per-split metrics from a fit estimated on the training rows.
pub fn score_fit(fit: &RidgeFit, design: &DesignMatrix, split: &Splits) -> Result<FitMetrics> {
    score_predictions(&design.response, &fit.predict(design), design.width(), split)
}

pub fn score_predictions(y: &[f64], yhat: &[f64], p: usize, split: &Splits) -> Result<FitMetrics> {
    let part = |r: &Range<usize>| -> Result<Option<SplitMetrics>> {
        if r.is_empty() {
            return Ok(None);
        }
        split_metrics(&y[r.clone()], &yhat[r.clone()], p).map(Some)
    };
    Ok(FitMetrics {
        train: part(&split.train)?.expect("training split is nonempty"),
        val: part(&split.val)?,
        test: part(&split.test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn col(name: &str, role: ColumnRole, values: Vec<f64>) -> DesignColumn {
        DesignColumn {
            name: name.into(),
            role,
            values,
        }
    }

    /// Two mean-zero, unit-variance, mutually orthogonal columns of length 8.
    fn orthonormal_pair() -> (Vec<f64>, Vec<f64>) {
        let a = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        (a, b)
    }

    #[test]
    fn lambda_bounds_orthonormal() {
        let (a, _) = orthonormal_pair();
        let n = a.len() as f64;
        let d = DesignMatrix::new(vec![col("a", ColumnRole::Context, a.clone())], a.clone(), 0..8).unwrap();
        let dot: f64 = d.z[0].iter().zip(&a).map(|(z, y)| z * y).sum();
        assert_relative_eq!(dot, n);
        let lb = lambda_bounds(&d).unwrap();
        assert_relative_eq!(lb.max, 1000.0, epsilon = 1e-9);
        assert_relative_eq!(lb.min, 0.1, epsilon = 1e-12);
        assert_relative_eq!(lb.at(0.5), 0.1 + 0.5 * (1000.0 - 0.1), epsilon = 1e-9);
    }

    #[test]
    fn zero_response_is_degenerate() {
        let (a, _) = orthonormal_pair();
        let d = DesignMatrix::new(vec![col("a", ColumnRole::PaidMedia, a)], vec![0.0; 8], 0..8).unwrap();
        let lb = lambda_bounds(&d).unwrap();
        assert!(lb.degenerate);
        let fit = fit_ridge(&d, lb.at(0.3), &d.lower_bounds()).unwrap();
        assert_eq!(fit.coefficients, [0.0]);
        assert_eq!(fit.intercept_data, 0.0);
    }

    #[test]
    fn orthonormal_ols_and_ridge() {
        let (a, b) = orthonormal_pair();
        let y: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 5.0 + 1.0 * u + 2.0 * v).collect();
        let d = DesignMatrix::new(
            vec![col("a", ColumnRole::Context, a), col("b", ColumnRole::Context, b)],
            y,
            0..8,
        )
        .unwrap();
        let free = [f64::NEG_INFINITY; 2];
        let ols = fit_ridge(&d, 0.0, &free).unwrap();
        assert_relative_eq!(ols.coefficients[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(ols.coefficients[1], 2.0, epsilon = 1e-9);
        assert_relative_eq!(ols.intercept_data, 5.0, epsilon = 1e-9);
        let ridge = fit_ridge(&d, 8.0, &free).unwrap();
        assert_relative_eq!(ridge.coefficients[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(ridge.coefficients[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn anticorrelated_media_hits_bound() {
        let (a, b) = orthonormal_pair();
        let y: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 10.0 - 3.0 * u + v).collect();
        let d = DesignMatrix::new(
            vec![col("m", ColumnRole::PaidMedia, a), col("c", ColumnRole::Context, b)],
            y,
            0..8,
        )
        .unwrap();
        let fit = fit_ridge(&d, 0.0, &d.lower_bounds()).unwrap();
        assert_eq!(fit.coefficients[0], 0.0);
        assert_relative_eq!(fit.coefficients[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_training_column_pinned_at_zero() {
        let (a, _) = orthonormal_pair();
        let mut flag = vec![0.0; 8];
        flag[7] = 1.0;
        let d = DesignMatrix::new(
            vec![col("a", ColumnRole::Context, a.clone()), col("flag", ColumnRole::Context, flag)],
            a,
            0..6,
        )
        .unwrap();
        let fit = fit_ridge(&d, 0.0, &d.lower_bounds()).unwrap();
        assert_eq!(fit.coefficients_data[1], 0.0);
    }

    #[test]
    fn nrmse_example() {
        let v = nrmse(&[0.0, 1.0, 2.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(v, (5.0f64 / 3.0).sqrt() / 2.0, epsilon = 1e-15);
        assert_relative_eq!(v, 0.64550, epsilon = 1e-5);
        assert!(nrmse(&[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn perfect_predictions() {
        let y: Vec<f64> = (0..20).map(|i| (i as f64).sin() * 3.0 + i as f64).collect();
        let split = SplitPlan::default().splits(20).unwrap();
        let m = score_predictions(&y, &y, 3, &split).unwrap();
        assert_eq!(m.train.nrmse, 0.0);
        assert_eq!(m.train.rsq, 1.0);
        assert_eq!(m.val.unwrap().rsq_adj, 1.0);
        assert_eq!(m.test.unwrap().nrmse, 0.0);
    }

    #[test]
    fn split_sizes() {
        let s = SplitPlan::default().splits(157).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (109, 24, 24));
        assert!(SplitPlan { train_fraction: 0.95, ts_validation: true }.splits(100).is_err());
        assert!(SplitPlan::default().splits(2).is_err());
        let all = SplitPlan { train_fraction: 0.7, ts_validation: false }.splits(10).unwrap();
        assert_eq!(all.train, 0..10);
        assert!(all.val.is_empty());
    }
}
