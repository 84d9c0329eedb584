//! Trend, seasonality, weekday and holiday regressors extracted from the
//! dependent series by a penalized least-squares fit.
//!
//! The fit is additive and joint over all requested basis groups:
//!
//! * trend: intercept, slope and `n_changepoints` hinge functions placed
//!   evenly over the first `changepoint_span` of the window; hinge
//!   coefficients carry a squared penalty,
//! * season: yearly Fourier terms on days since window start,
//! * weekday: weekly Fourier terms (daily data only),
//! * holiday: one indicator per holiday name for the chosen country.
//!
//! Each component is read off its basis group. Season and weekday are
//! centered over the window and their means moved into the trend so the
//! components still add up to the fitted values.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{format_date, Frequency, HolidayTable, MmmDataset};
use crate::error::{bail, Error, Result};

const YEAR_DAYS: f64 = 365.25;
const WEEK_DAYS: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Trend,
    Season,
    Weekday,
    Holiday,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::Trend, Component::Season, Component::Weekday, Component::Holiday];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Trend => "trend",
            Component::Season => "season",
            Component::Weekday => "weekday",
            Component::Holiday => "holiday",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown decomposition component '{s}'")))
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecompositionConfig {
    pub components: Vec<Component>,
    pub country: Option<String>,
    pub n_changepoints: usize,
    pub changepoint_span: f64,
    pub yearly_fourier_order: usize,
    pub weekly_fourier_order: usize,
    pub trend_penalty: f64,
    /// Fit media, organic and context series alongside the components so
    /// that their variation is not read as trend or season.
    pub with_regressors: bool,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        DecompositionConfig {
            components: vec![Component::Trend, Component::Season, Component::Holiday],
            country: None,
            n_changepoints: 10,
            changepoint_span: 0.8,
            yearly_fourier_order: 10,
            weekly_fourier_order: 3,
            trend_penalty: 1.0,
            with_regressors: true,
        }
    }
}

impl DecompositionConfig {
    pub fn for_roles(ds: &MmmDataset) -> Self {
        DecompositionConfig {
            components: ds.roles().prophet_vars.clone(),
            country: ds.roles().prophet_country.clone(),
            ..Default::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.yearly_fourier_order == 0 || self.weekly_fourier_order == 0 {
            bail!(InvalidParameter, "Fourier orders must be at least 1");
        }
        if !(self.changepoint_span > 0.0 && self.changepoint_span <= 1.0) {
            bail!(InvalidParameter, "changepoint_span must lie in (0, 1], got {}", self.changepoint_span);
        }
        if !(self.trend_penalty >= 0.0) {
            bail!(InvalidParameter, "trend_penalty must be nonnegative, got {}", self.trend_penalty);
        }
        Ok(())
    }

    fn wants(&self, c: Component) -> bool {
        self.components.contains(&c)
    }
}

/// Fitted component series over the modeling window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub dates: Vec<String>,
    pub trend: Option<Vec<f64>>,
    pub season: Option<Vec<f64>>,
    pub weekday: Option<Vec<f64>>,
    pub holiday: Option<Vec<f64>>,
    /// Sum of the components.
    pub fitted: Vec<f64>,
    /// Part of the fit explained by media and context covariates.
    pub covariates: Option<Vec<f64>>,
    pub residual: Vec<f64>,
}

impl DecompositionResult {
    pub fn empty(ds: &MmmDataset) -> Self {
        let n = ds.window_len();
        DecompositionResult {
            dates: ds.window_dates().iter().map(|d| format_date(*d)).collect(),
            trend: None,
            season: None,
            weekday: None,
            holiday: None,
            fitted: vec![0.0; n],
            covariates: None,
            residual: ds.dependent().to_vec(),
        }
    }

    /// Requested components in canonical order, as regressors.
    pub fn regressors(&self) -> Vec<(Component, &[f64])> {
        let mut out = Vec::new();
        for (c, s) in [
            (Component::Trend, &self.trend),
            (Component::Season, &self.season),
            (Component::Weekday, &self.weekday),
            (Component::Holiday, &self.holiday),
        ] {
            if let Some(s) = s {
                out.push((c, s.as_slice()));
            }
        }
        out
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let regs = self.regressors();
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["ds".to_string()];
        header.extend(regs.iter().map(|(c, _)| c.to_string()));
        wtr.write_record(&header).expect("in-memory write");
        for (i, d) in self.dates.iter().enumerate() {
            let mut rec = vec![d.clone()];
            rec.extend(regs.iter().map(|(_, s)| s[i].to_string()));
            wtr.write_record(&rec).expect("in-memory write");
        }
        wtr.into_inner().expect("in-memory flush")
    }
}

struct Basis {
    columns: Vec<Vec<f64>>,
    /// `None` marks a covariate column.
    group: Vec<Option<Component>>,
    penalty: Vec<f64>,
}

impl Basis {
    fn push(&mut self, col: Vec<f64>, group: Component, penalty: f64) {
        self.columns.push(col);
        self.group.push(Some(group));
        self.penalty.push(penalty);
    }

    fn push_covariate(&mut self, col: &[f64]) {
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            self.columns.push(col.iter().map(|v| (v - mean) / sd).collect());
            self.group.push(None);
            self.penalty.push(0.0);
        }
    }
}

fn fourier(days: &[f64], period: f64, order: usize, group: Component, basis: &mut Basis) {
    for k in 1..=order {
        let w = 2.0 * PI * k as f64 / period;
        basis.push(days.iter().map(|d| (w * d).sin()).collect(), group, 0.0);
        basis.push(days.iter().map(|d| (w * d).cos()).collect(), group, 0.0);
    }
}

pub fn decompose(ds: &MmmDataset, holidays: &HolidayTable, cfg: &DecompositionConfig) -> Result<DecompositionResult> {
    cfg.check()?;
    if cfg.components.is_empty() {
        return Ok(DecompositionResult::empty(ds));
    }
    if cfg.wants(Component::Weekday) && ds.frequency() != Frequency::Daily {
        bail!(Unavailable, "weekday component requires daily data, dataset is {}", ds.frequency());
    }
    let country = if cfg.wants(Component::Holiday) {
        match &cfg.country {
            Some(c) if holidays.has_country(c) => Some(c.as_str()),
            Some(c) => bail!(Unavailable, "country '{c}' not present in the holiday table"),
            None => bail!(Unavailable, "holiday component requested without a country code"),
        }
    } else {
        None
    };

    let dates = ds.window_dates();
    let n = dates.len();
    let y = ds.dependent();
    let origin = dates[0];
    let days: Vec<f64> = dates.iter().map(|d| (*d - origin).num_days() as f64).collect();
    let span_days = days[n - 1].max(1.0);

    let scale = {
        let mean = y.iter().sum::<f64>() / n as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd > 0.0 { sd } else { 1.0 }
    };

    let mut basis = Basis {
        columns: Vec::new(),
        group: Vec::new(),
        penalty: Vec::new(),
    };
    basis.push(vec![1.0; n], Component::Trend, 0.0);
    if cfg.wants(Component::Trend) {
        let t: Vec<f64> = days.iter().map(|d| d / span_days).collect();
        basis.push(t.clone(), Component::Trend, 0.0);
        for k in 1..=cfg.n_changepoints {
            let s = cfg.changepoint_span * k as f64 / cfg.n_changepoints as f64;
            basis.push(t.iter().map(|v| (v - s).max(0.0)).collect(), Component::Trend, cfg.trend_penalty);
        }
    }
    if cfg.wants(Component::Season) {
        fourier(&days, YEAR_DAYS, cfg.yearly_fourier_order, Component::Season, &mut basis);
    }
    if cfg.wants(Component::Weekday) {
        fourier(&days, WEEK_DAYS, cfg.weekly_fourier_order, Component::Weekday, &mut basis);
    }
    if let Some(country) = country {
        let period = ds.frequency().days();
        let mut by_name: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for h in holidays.entries.iter().filter(|h| h.country == country) {
            // Each observation covers [date, date + period).
            if let Some(i) = dates
                .iter()
                .position(|d| *d <= h.ds && (h.ds - *d).num_days() < period)
            {
                by_name.entry(h.holiday.as_str()).or_insert_with(|| vec![0.0; n])[i] = 1.0;
            }
        }
        for (_, col) in by_name {
            basis.push(col, Component::Holiday, 0.0);
        }
    }

    if cfg.with_regressors {
        for name in ds.media_channels() {
            basis.push_covariate(ds.window_values(&name).expect("validated"));
        }
        for (_, values) in ds.context_regressors() {
            basis.push_covariate(&values);
        }
    }

    let p = basis.columns.len();
    let penalized: Vec<usize> = (0..p).filter(|&j| basis.penalty[j] > 0.0).collect();
    let rows = n + penalized.len();
    let mut a = DMatrix::<f64>::zeros(rows, p);
    let mut b = DVector::<f64>::zeros(rows);
    for i in 0..n {
        for j in 0..p {
            a[(i, j)] = basis.columns[j][i];
        }
        b[i] = y[i] / scale;
    }
    for (r, &j) in penalized.iter().enumerate() {
        a[(n + r, j)] = basis.penalty[j].sqrt();
    }
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let beta = svd
        .solve(&b, max_sv * 1e-12)
        .map_err(|e| Error::Numerical(format!("decomposition solve failed: {e}")))?;

    let mut series: BTreeMap<Option<Component>, Vec<f64>> = BTreeMap::new();
    for j in 0..p {
        let s = series.entry(basis.group[j]).or_insert_with(|| vec![0.0; n]);
        for i in 0..n {
            s[i] += beta[j] * scale * basis.columns[j][i];
        }
    }
    let mut trend = series.remove(&Some(Component::Trend)).unwrap_or_else(|| vec![0.0; n]);
    let mut center = |c: Component| -> Option<Vec<f64>> {
        let mut s = series.remove(&Some(c))?;
        let mean = s.iter().sum::<f64>() / n as f64;
        for (v, t) in s.iter_mut().zip(trend.iter_mut()) {
            *v -= mean;
            *t += mean;
        }
        Some(s)
    };
    let season = center(Component::Season);
    let weekday = center(Component::Weekday);
    let holiday = series.remove(&Some(Component::Holiday)).map(Some).unwrap_or_else(|| country.map(|_| vec![0.0; n]));

    let mut fitted = trend.clone();
    for s in [&season, &weekday, &holiday].into_iter().flatten() {
        for (f, v) in fitted.iter_mut().zip(s) {
            *f += v;
        }
    }
    if fitted.iter().any(|v| !v.is_finite()) {
        bail!(Numerical, "decomposition produced non-finite values");
    }
    let covariates = series.remove(&None);
    let residual = y
        .iter()
        .zip(&fitted)
        .enumerate()
        .map(|(i, (a, b))| a - b - covariates.as_ref().map_or(0.0, |c| c[i]))
        .collect();
    Ok(DecompositionResult {
        dates: dates.iter().map(|d| format_date(*d)).collect(),
        trend: cfg.wants(Component::Trend).then_some(trend),
        season,
        weekday,
        holiday,
        fitted,
        covariates,
        residual,
    })
}
