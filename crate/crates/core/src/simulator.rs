//! Synthetic datasets with a known generating process and an exact
//! per-period contribution ledger.

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{format_date, iso_date, Column, Frequency, Holiday, HolidayTable, MmmDataset, VariableRoles, Window};
use crate::decomposition::Component;
use crate::error::{bail, Result};
use crate::evaluation::{LiftScope, LiftStudy};
use crate::transforms::{adstock_geometric, hill, inflection_point};

const CHANNEL_NAMES: [&str; 5] = ["tv_S", "facebook_S", "search_S", "ooh_S", "print_S"];
const BASE_ROAS: [f64; 5] = [1.0, 2.0, 3.0, 1.5, 2.5];
const SPEND_LEVELS: [f64; 5] = [30_000.0, 18_000.0, 12_000.0, 9_000.0, 6_000.0];
pub const DEP_VAR: &str = "revenue";
pub const ORGANIC_VAR: &str = "newsletter";
pub const CONTEXT_VAR: &str = "competitor_sales_B";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n_periods: usize,
    pub frequency: Frequency,
    pub channels: usize,
    pub seed: u64,
    /// Noise sd as a fraction of the noiseless response sd.
    pub noise: f64,
    #[serde(with = "iso_date")]
    pub start: NaiveDate,
    /// Adds an organic channel with its own contribution.
    pub organic: bool,
    /// Adds a context regressor with a linear effect.
    pub context: bool,
    /// Per-channel parameters replacing the random draws, by position.
    #[serde(default)]
    pub fixed: Vec<FixedChannel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedChannel {
    pub theta: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub roas: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            n_periods: 208,
            frequency: Frequency::Weekly,
            channels: 3,
            seed: 1,
            noise: 0.05,
            start: NaiveDate::from_ymd_opt(2015, 11, 23).expect("valid date"),
            organic: false,
            context: false,
            fixed: Vec::new(),
        }
    }
}

impl SimulationSpec {
    pub fn check(&self) -> Result<()> {
        let min = self.frequency.minimum_observations();
        if self.n_periods < min {
            bail!(InvalidParameter, "simulation needs at least {min} {} periods", self.frequency);
        }
        if self.channels == 0 {
            bail!(InvalidParameter, "simulation needs at least one channel");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            bail!(InvalidParameter, "noise must be finite and nonnegative");
        }
        if self.fixed.len() > self.channels + usize::from(self.organic) {
            bail!(InvalidParameter, "more fixed channel parameters than channels");
        }
        for f in &self.fixed {
            if !(0.0..=0.8).contains(&f.theta) || !(0.5..=3.0).contains(&f.alpha) || !(0.3..=1.0).contains(&f.gamma) {
                bail!(
                    InvalidParameter,
                    "fixed channel parameters {f:?} lie outside theta [0, 0.8], alpha [0.5, 3], gamma [0.3, 1]"
                );
            }
            if !(f.roas > 0.0 && f.roas.is_finite()) {
                bail!(InvalidParameter, "fixed roas must be positive");
            }
        }
        Ok(())
    }
}

/// Generating parameters of one media channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTruth {
    pub channel: String,
    pub theta: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub coefficient: f64,
    pub inflection: f64,
    /// Contribution over spend across all periods.
    pub roas: f64,
    pub total_spend: f64,
    pub total_contribution: f64,
    pub paid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub spec: SimulationSpec,
    pub channels: Vec<ChannelTruth>,
    pub intercept: f64,
    /// Rise of the linear trend over the full series.
    pub trend_amplitude: f64,
    /// Amplitude of the yearly sinusoid.
    pub season_amplitude: f64,
    pub context_coefficient: f64,
    /// Absolute noise sd.
    pub noise_sd: f64,
    pub dates: Vec<String>,
    /// Per channel, per period total contribution.
    pub ledger: Vec<Vec<f64>>,
    /// Per channel, per period lag-0 contribution.
    pub immediate_ledger: Vec<Vec<f64>>,
}

impl SimulationTruth {
    fn channel_index(&self, channel: &str) -> Result<usize> {
        match self.channels.iter().position(|c| c.channel == channel) {
            Some(i) => Ok(i),
            None => bail!(InvalidParameter, "unknown simulated channel '{channel}'"),
        }
    }

    fn rows_in(&self, start: NaiveDate, end: NaiveDate) -> Vec<usize> {
        self.dates
            .iter()
            .enumerate()
            .filter(|(_, d)| {
                let d = NaiveDate::parse_from_str(d, "%Y-%m-%d").expect("stored dates are ISO");
                d >= start && d <= end
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Exact contribution of `channel` over the closed date range.
    pub fn true_lift(&self, channel: &str, start: NaiveDate, end: NaiveDate, scope: LiftScope) -> Result<f64> {
        let c = self.channel_index(channel)?;
        let ledger = match scope {
            LiftScope::Total => &self.ledger[c],
            LiftScope::Immediate => &self.immediate_ledger[c],
        };
        Ok(self.rows_in(start, end).iter().map(|&i| ledger[i]).sum())
    }

    /// A lift study whose liftAbs is the exact ledger sum.
    pub fn lift_study(
        &self,
        ds: &MmmDataset,
        channel: &str,
        start: NaiveDate,
        end: NaiveDate,
        confidence: f64,
        scope: LiftScope,
    ) -> Result<LiftStudy> {
        let lift = self.true_lift(channel, start, end, scope)?;
        let spend_col = ds.numeric(channel).unwrap_or(&[]);
        let spend = self.rows_in(start, end).iter().filter_map(|&i| spend_col.get(i)).sum();
        let study = LiftStudy {
            channels: vec![channel.to_string()],
            lift_start: start,
            lift_end: end,
            lift_abs: lift,
            spend,
            confidence,
            metric: DEP_VAR.to_string(),
            scope,
        };
        study.check()?;
        Ok(study)
    }

    /// One study per paid channel (up to `count`), each over a
    /// non-overlapping block of `len` periods at the end of the window.
    pub fn default_studies(&self, ds: &MmmDataset, count: usize, len: usize) -> Result<Vec<LiftStudy>> {
        let dates = ds.window_dates();
        let n = dates.len();
        let paid: Vec<&ChannelTruth> = self.channels.iter().filter(|c| c.paid).collect();
        if len == 0 || paid.len().min(count) * (len + 2) > n {
            bail!(InvalidParameter, "{count} studies of {len} periods do not fit the {n}-period window");
        }
        let mut out = Vec::new();
        for (k, ch) in paid.iter().take(count).enumerate() {
            let end = n - 1 - k * (len + 2);
            let start = end + 1 - len;
            out.push(self.lift_study(ds, &ch.channel, dates[start], dates[end], 0.9, LiftScope::Total)?);
        }
        Ok(out)
    }

    pub fn roles(&self) -> VariableRoles {
        let paid: Vec<&str> = self.channels.iter().filter(|c| c.paid).map(|c| c.channel.as_str()).collect();
        let mut roles = VariableRoles::spend_only(DEP_VAR, &paid);
        roles.prophet_vars = vec![Component::Trend, Component::Season];
        if self.spec.organic {
            roles.organic_vars.push(ORGANIC_VAR.to_string());
        }
        if self.spec.context {
            roles.context_vars.push(CONTEXT_VAR.to_string());
        }
        roles
    }

    pub fn window(&self) -> Window {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").expect("ISO");
        Window::new(d(&self.dates[0]), d(self.dates.last().expect("nonempty")))
    }
}

fn channel_name(i: usize) -> String {
    CHANNEL_NAMES
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("channel{}_S", i + 1))
}

fn dates(spec: &SimulationSpec) -> Vec<NaiveDate> {
    (0..spec.n_periods)
        .map(|i| spec.start + Duration::days(i as i64 * spec.frequency.days()))
        .collect()
}

fn year_phase(d: NaiveDate) -> f64 {
    let days = (d - NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid")).num_days() as f64;
    2.0 * std::f64::consts::PI * days / 365.25
}

fn spend_series(rng: &mut ChaCha8Rng, dates: &[NaiveDate], level: f64) -> Vec<f64> {
    let noise = LogNormal::new(0.0, 0.4).expect("valid sd");
    let phase = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    let depth = 0.2 + 0.3 * rng.random::<f64>();
    // Flighting: the channel goes dark for short runs of periods.
    let mut on = true;
    dates
        .iter()
        .map(|d| {
            on = if on { rng.random::<f64>() >= 0.1 } else { rng.random::<f64>() < 0.4 };
            let season = 1.0 + depth * (year_phase(*d) + phase).sin();
            let pulse = if rng.random::<f64>() < 0.08 { 2.0 + rng.random::<f64>() } else { 1.0 };
            let draw = level * season * pulse * noise.sample(rng);
            if on {
                draw
            } else {
                0.0
            }
        })
        .collect()
}

/// Draws a dataset and its ground truth from `spec.seed`.
pub fn simulate(spec: &SimulationSpec) -> Result<(MmmDataset, SimulationTruth)> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dates = dates(spec);
    let n = dates.len();

    let mut media: Vec<(String, Vec<f64>, bool)> = (0..spec.channels)
        .map(|i| {
            let level = SPEND_LEVELS[i % SPEND_LEVELS.len()];
            (channel_name(i), spend_series(&mut rng, &dates, level), true)
        })
        .collect();
    if spec.organic {
        media.push((ORGANIC_VAR.to_string(), spend_series(&mut rng, &dates, 5_000.0), false));
    }

    let mut channels = Vec::new();
    let mut ledger = Vec::new();
    let mut immediate_ledger = Vec::new();
    for (i, (name, x, paid)) in media.iter().enumerate() {
        let theta = 0.1 + 0.5 * rng.random::<f64>();
        let alpha = 0.8 + 1.7 * rng.random::<f64>();
        let gamma = 0.35 + 0.55 * rng.random::<f64>();
        let roas_target = BASE_ROAS[i % BASE_ROAS.len()] * (0.85 + 0.3 * rng.random::<f64>());
        let (theta, alpha, gamma, roas_target) = match spec.fixed.get(i) {
            Some(f) => (f.theta, f.alpha, f.gamma, f.roas),
            None => (theta, alpha, gamma, roas_target),
        };
        let ad = adstock_geometric(x, theta)?;
        let inflection = inflection_point(&ad, gamma)?;
        let sat: Vec<f64> = ad.iter().map(|v| hill(*v, alpha, inflection)).collect();
        let imm: Vec<f64> = x.iter().map(|v| hill(*v, alpha, inflection)).collect();
        let total_spend: f64 = x.iter().sum();
        let coefficient = roas_target * total_spend / sat.iter().sum::<f64>();
        let contrib: Vec<f64> = sat.iter().map(|s| coefficient * s).collect();
        let total_contribution: f64 = contrib.iter().sum();
        channels.push(ChannelTruth {
            channel: name.clone(),
            theta,
            alpha,
            gamma,
            coefficient,
            inflection,
            roas: total_contribution / total_spend,
            total_spend,
            total_contribution,
            paid: *paid,
        });
        immediate_ledger.push(imm.iter().map(|s| coefficient * s).collect());
        ledger.push(contrib);
    }

    let media_mean: f64 = ledger.iter().flatten().sum::<f64>() / n as f64;
    let intercept = 1.5 * media_mean;
    let trend_amplitude = 0.3 * media_mean;
    let season_amplitude = 0.2 * media_mean;
    let context: Vec<f64> = if spec.context {
        let step = Normal::new(0.0, 1.0).expect("valid sd");
        let mut level: f64 = 50.0;
        (0..n)
            .map(|_| {
                level = (level + step.sample(&mut rng)).max(10.0);
                level * 1_000.0
            })
            .collect()
    } else {
        Vec::new()
    };
    let context_coefficient = if spec.context { 0.1 * media_mean / 50_000.0 } else { 0.0 };

    let clean: Vec<f64> = (0..n)
        .map(|t| {
            let trend = trend_amplitude * t as f64 / (n - 1) as f64;
            let season = season_amplitude * year_phase(dates[t]).sin();
            let media: f64 = ledger.iter().map(|c| c[t]).sum();
            let ctx = context.get(t).map_or(0.0, |v| context_coefficient * v);
            intercept + trend + season + media + ctx
        })
        .collect();
    let mean = clean.iter().sum::<f64>() / n as f64;
    let sd = (clean.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let noise_sd = spec.noise * sd;
    let y: Vec<f64> = if noise_sd > 0.0 {
        let eps = Normal::new(0.0, noise_sd).expect("valid sd");
        clean.iter().map(|v| v + eps.sample(&mut rng)).collect()
    } else {
        clean
    };

    let mut columns = vec![(DEP_VAR.to_string(), Column::Numeric(y))];
    for (name, x, _) in &media {
        columns.push((name.clone(), Column::Numeric(x.clone())));
    }
    if spec.context {
        columns.push((CONTEXT_VAR.to_string(), Column::Numeric(context)));
    }
    let truth = SimulationTruth {
        spec: spec.clone(),
        channels,
        intercept,
        trend_amplitude,
        season_amplitude,
        context_coefficient,
        noise_sd,
        dates: dates.iter().map(|d| format_date(*d)).collect(),
        ledger,
        immediate_ledger,
    };
    let ds = MmmDataset::from_columns(
        "DATE".to_string(),
        dates,
        columns,
        truth.roles(),
        truth.window(),
        Some(spec.frequency),
    )?;
    Ok((ds, truth))
}

/// Fixed-date holidays for DE and US across the years of `dates`.
pub fn holidays_for(first: NaiveDate, last: NaiveDate) -> HolidayTable {
    const FIXED: [(&str, u32, u32, &str); 8] = [
        ("New Year's Day", 1, 1, "DE"),
        ("Labour Day", 5, 1, "DE"),
        ("German Unity Day", 10, 3, "DE"),
        ("Christmas Day", 12, 25, "DE"),
        ("Second Day of Christmas", 12, 26, "DE"),
        ("New Year's Day", 1, 1, "US"),
        ("Independence Day", 7, 4, "US"),
        ("Christmas Day", 12, 25, "US"),
    ];
    let mut entries = Vec::new();
    for year in first.year() - 1..=last.year() + 1 {
        for (name, m, d, country) in FIXED {
            entries.push(Holiday {
                ds: NaiveDate::from_ymd_opt(year, m, d).expect("fixed dates are valid"),
                holiday: name.to_string(),
                country: country.to_string(),
            });
        }
    }
    HolidayTable { entries }
}
