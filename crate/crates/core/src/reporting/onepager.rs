//! Per-candidate diagnostics: metrics and the eight chart panels.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::svg::{self, Canvas, Series};
use crate::allocator::ResponseCurve;
use crate::dataset::{format_date, DepVarType};
use crate::error::{Error, Result};
use crate::model::ModelFit;
use crate::pareto::quantile;

pub const BOOTSTRAP_RESAMPLES: usize = 2000;
pub const MIN_BOOTSTRAP_CLUSTER: usize = 5;
pub const CURVE_POINTS: usize = 60;
/// Response curves run from zero to this multiple of mean spend.
pub const CURVE_SPAN: f64 = 2.5;

pub const PANEL_TITLES: [&str; 8] = [
    "Response Decomposition Waterfall by Predictor",
    "Actual vs. Predicted Response",
    "Share of Spend VS Share of Effect with total ROI",
    "In-cluster bootstrapped ROI with 95% CI & mean",
    "Geometric Adstock: Fixed Rate Over Time",
    "Immediate vs. Carryover Response Percentage",
    "Response Curves and Mean Spends by Channel",
    "Fitted vs. Residual",
];

const PANEL_FILES: [&str; 8] = [
    "1_waterfall.svg",
    "2_actual_vs_predicted.svg",
    "3_spend_vs_effect.svg",
    "4_bootstrap_roi.svg",
    "5_adstock.svg",
    "6_immediate_vs_carryover.svg",
    "7_response_curves.svg",
    "8_fitted_vs_residual.svg",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderMetrics {
    pub nrmse_train: f64,
    pub nrmse_val: Option<f64>,
    pub nrmse_test: Option<f64>,
    pub rsq_adj_train: f64,
    pub rsq_adj_val: Option<f64>,
    pub rsq_adj_test: Option<f64>,
    pub decomp_rssd: f64,
    pub mape: Option<f64>,
}

impl HeaderMetrics {
    /// The two-line header printed above the panels.
    pub fn render(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
        format!(
            "NRMSE: train = {} | val = {} | test = {}; Adj. R2: train = {} | val = {} | test = {};\nDECOMP.RSSD = {}; MAPE = {}",
            f(Some(self.nrmse_train)),
            f(self.nrmse_val),
            f(self.nrmse_test),
            f(Some(self.rsq_adj_train)),
            f(self.rsq_adj_val),
            f(self.rsq_adj_test),
            f(Some(self.decomp_rssd)),
            f(self.mape)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallBar {
    pub predictor: String,
    pub contribution: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendEffect {
    pub channel: String,
    pub spend_share: f64,
    pub effect_share: f64,
    /// ROI (revenue) or CPA (conversion).
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub channel: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub cluster_size: usize,
    /// Cluster too small to resample; bounds are the cluster min and max.
    pub min_max: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdstockCurve {
    pub channel: String,
    pub lag_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarryoverSplit {
    pub channel: String,
    pub immediate_pct: f64,
    pub carryover_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurvePoints {
    pub channel: String,
    pub spends: Vec<f64>,
    pub responses: Vec<f64>,
    pub mean_spend: f64,
    pub mean_response: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnePager {
    pub model_id: String,
    pub dep_var_type: DepVarType,
    pub header: HeaderMetrics,
    /// Sorted by descending contribution; shares sum to one.
    pub waterfall: Vec<WaterfallBar>,
    pub residual_total: f64,
    pub actual_total: f64,
    pub spend_effect: Vec<SpendEffect>,
    pub total_efficiency: f64,
    /// Absent when the model has no cluster.
    pub bootstrap: Option<Vec<BootstrapInterval>>,
    pub cluster: Option<usize>,
    pub adstock: Vec<AdstockCurve>,
    pub carryover: Vec<CarryoverSplit>,
    pub response_curves: Vec<ResponseCurvePoints>,
    pub dates: Vec<String>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Efficiency vectors of the model's cluster peers (including itself).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPeers {
    pub cluster: usize,
    /// One efficiency vector per member, paid channels in model order.
    pub efficiencies: Vec<Vec<f64>>,
}

fn bootstrap(values: &[f64], rng: &mut ChaCha8Rng) -> (f64, f64, f64, bool) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < MIN_BOOTSTRAP_CLUSTER {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return (mean, lo, hi, true);
    }
    let means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let lo = quantile(&means, 0.025).min(mean);
    let hi = quantile(&means, 0.975).max(mean);
    (mean, lo, hi, false)
}

/// Builds the one-pager of a fitted model.
pub fn build_onepager(fit: &ModelFit, model_id: &str, peers: Option<&ClusterPeers>, seed: u64) -> OnePager {
    let m = &fit.metrics;
    let header = HeaderMetrics {
        nrmse_train: m.train.nrmse,
        nrmse_val: m.val.map(|s| s.nrmse),
        nrmse_test: m.test.map(|s| s.nrmse),
        rsq_adj_train: m.train.rsq_adj,
        rsq_adj_val: m.val.map(|s| s.rsq_adj),
        rsq_adj_test: m.test.map(|s| s.rsq_adj),
        decomp_rssd: fit.scores.decomp_rssd,
        mape: fit.scores.mape_lift,
    };

    let n = fit.predictions.len();
    let mut bars = vec![WaterfallBar {
        predictor: "(Intercept)".to_string(),
        contribution: fit.ridge.intercept_data * n as f64,
        share: 0.0,
    }];
    for (name, c) in fit.design.names.iter().zip(&fit.contributions) {
        bars.push(WaterfallBar {
            predictor: name.clone(),
            contribution: c.iter().sum(),
            share: 0.0,
        });
    }
    let predicted_total: f64 = fit.predictions.iter().sum();
    for b in &mut bars {
        b.share = if predicted_total != 0.0 { b.contribution / predicted_total } else { 0.0 };
    }
    bars.sort_by(|a, b| b.contribution.total_cmp(&a.contribution).then_with(|| a.predictor.cmp(&b.predictor)));
    let actual_total: f64 = fit.response().iter().sum();

    let dep = fit.dep_var_type;
    let efficiencies = fit.efficiencies();
    let spend_effect: Vec<SpendEffect> = fit
        .paid_channels()
        .enumerate()
        .map(|(k, c)| SpendEffect {
            channel: c.channel.clone(),
            spend_share: fit.spend_shares[k],
            effect_share: fit.effect_shares[k],
            efficiency: efficiencies[k],
        })
        .collect();
    let (spend, contribution) = fit
        .paid_channels()
        .fold((0.0, 0.0), |(s, c), ch| (s + ch.spend, c + ch.total_contribution));
    let total_efficiency = match dep {
        DepVarType::Revenue if spend > 0.0 => contribution / spend,
        DepVarType::Conversion if contribution > 0.0 => spend / contribution,
        DepVarType::Revenue => 0.0,
        DepVarType::Conversion => f64::INFINITY,
    };

    let bootstrap_rows = peers.map(|p| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        spend_effect
            .iter()
            .enumerate()
            .map(|(k, se)| {
                let values: Vec<f64> = p
                    .efficiencies
                    .iter()
                    .filter_map(|e| e.get(k).copied())
                    .filter(|v| v.is_finite())
                    .collect();
                let (mean, lower, upper, min_max) = if values.is_empty() {
                    (f64::NAN, f64::NAN, f64::NAN, true)
                } else {
                    bootstrap(&values, &mut rng)
                };
                BootstrapInterval {
                    channel: se.channel.clone(),
                    mean,
                    lower,
                    upper,
                    cluster_size: values.len(),
                    min_max,
                }
            })
            .collect()
    });

    let adstock = fit
        .channels
        .iter()
        .zip(&fit.transforms)
        .map(|(c, t)| AdstockCurve {
            channel: c.channel.clone(),
            lag_weights: t.lag_weights.clone(),
        })
        .collect();

    let carryover = fit
        .channels
        .iter()
        .zip(&fit.transforms)
        .map(|(c, t)| {
            let total: f64 = t.saturated.iter().sum();
            let immediate: f64 = t.immediate.iter().sum();
            let pct = if total > 0.0 { (100.0 * immediate / total).clamp(0.0, 100.0) } else { 100.0 };
            CarryoverSplit {
                channel: c.channel.clone(),
                immediate_pct: pct,
                carryover_pct: 100.0 - pct,
            }
        })
        .collect();

    let response_curves = fit
        .paid_channels()
        .filter(|c| c.mean_spend > 0.0)
        .filter_map(|c| ResponseCurve::for_channel(fit, &c.channel).ok().map(|curve| (c, curve)))
        .map(|(c, curve)| {
            let top = CURVE_SPAN * c.mean_spend;
            let spends: Vec<f64> = (0..CURVE_POINTS).map(|i| top * i as f64 / (CURVE_POINTS - 1) as f64).collect();
            ResponseCurvePoints {
                channel: c.channel.clone(),
                responses: spends.iter().map(|m| curve.response(*m)).collect(),
                spends,
                mean_spend: c.mean_spend,
                mean_response: curve.response(c.mean_spend),
            }
        })
        .collect();

    let residuals = fit.residuals();
    OnePager {
        model_id: model_id.to_string(),
        dep_var_type: dep,
        header,
        residual_total: residuals.iter().sum(),
        actual_total,
        waterfall: bars,
        spend_effect,
        total_efficiency,
        bootstrap: bootstrap_rows,
        cluster: peers.map(|p| p.cluster),
        adstock,
        carryover,
        response_curves,
        dates: fit.dates.iter().map(|d| format_date(*d)).collect(),
        actual: fit.response().to_vec(),
        predicted: fit.predictions.clone(),
        residuals,
    }
}

fn efficiency_name(dep: DepVarType) -> &'static str {
    match dep {
        DepVarType::Revenue => "ROI",
        DepVarType::Conversion => "CPA",
    }
}

impl OnePager {
    pub fn panel_count(&self) -> usize {
        self.panels().len()
    }

    /// Rendered panels with their titles, in the fixed order. The bootstrap
    /// panel is missing when the model has no cluster.
    pub fn panels(&self) -> Vec<(&'static str, Canvas)> {
        let mut out = Vec::new();
        let eff = efficiency_name(self.dep_var_type);

        let mut cum = 0.0;
        let rows: Vec<(String, f64, f64, String)> = self
            .waterfall
            .iter()
            .map(|b| {
                let start = cum;
                cum += b.share;
                (b.predictor.clone(), start, cum, format!("{:.1}%", 100.0 * b.share))
            })
            .collect();
        out.push((
            PANEL_TITLES[0],
            svg::horizontal_bars(PANEL_TITLES[0], &rows, &|i| {
                svg::PALETTE[if self.waterfall[i].share >= 0.0 { 0 } else { 3 }].to_string()
            }),
        ));

        let x_of = |i: usize| i as f64;
        let dates = self.dates.clone();
        let date_fmt = move |x: f64| {
            let i = (x.round().max(0.0) as usize).min(dates.len().saturating_sub(1));
            dates.get(i).cloned().unwrap_or_default()
        };
        out.push((
            PANEL_TITLES[1],
            svg::lines(
                PANEL_TITLES[1],
                &[
                    Series {
                        name: "actual",
                        points: self.actual.iter().enumerate().map(|(i, v)| (x_of(i), *v)).collect(),
                    },
                    Series {
                        name: "predicted",
                        points: self.predicted.iter().enumerate().map(|(i, v)| (x_of(i), *v)).collect(),
                    },
                ],
                &[],
                &date_fmt,
                true,
            ),
        ));

        let mut rows: Vec<(String, f64, f64, String)> = self
            .spend_effect
            .iter()
            .map(|s| {
                (
                    s.channel.clone(),
                    100.0 * s.spend_share,
                    100.0 * s.effect_share,
                    format!("{eff} {}", svg::label(s.efficiency)),
                )
            })
            .collect();
        rows.push((
            "Total".to_string(),
            100.0,
            100.0,
            format!("{eff} {}", svg::label(self.total_efficiency)),
        ));
        out.push((
            PANEL_TITLES[2],
            svg::paired_bars(PANEL_TITLES[2], &rows, ("spend share %", "effect share %")),
        ));

        if let Some(b) = &self.bootstrap {
            let rows: Vec<(String, f64, f64, f64, bool)> = b
                .iter()
                .map(|r| (r.channel.clone(), r.mean, r.lower, r.upper, r.min_max))
                .collect();
            let note = if b.iter().any(|r| r.min_max) {
                format!("dashed: cluster below {MIN_BOOTSTRAP_CLUSTER} models, range shows min/max")
            } else {
                format!("cluster {} | {BOOTSTRAP_RESAMPLES} resamples", self.cluster.map_or(0, |c| c + 1))
            };
            out.push((PANEL_TITLES[3], svg::intervals(PANEL_TITLES[3], &rows, &note)));
        }

        let series: Vec<Series> = self
            .adstock
            .iter()
            .map(|a| Series {
                name: &a.channel,
                points: a.lag_weights.iter().enumerate().map(|(l, w)| (l as f64, *w)).collect(),
            })
            .collect();
        out.push((
            PANEL_TITLES[4],
            svg::lines(PANEL_TITLES[4], &series, &[], &|x| format!("{x:.0}"), true),
        ));

        let rows: Vec<(String, f64)> = self.carryover.iter().map(|c| (c.channel.clone(), c.immediate_pct)).collect();
        out.push((
            PANEL_TITLES[5],
            svg::stacked_percent(PANEL_TITLES[5], &rows, ("immediate", "carryover")),
        ));

        let series: Vec<Series> = self
            .response_curves
            .iter()
            .map(|r| Series {
                name: &r.channel,
                points: r.spends.iter().copied().zip(r.responses.iter().copied()).collect(),
            })
            .collect();
        let markers: Vec<(f64, f64, usize)> = self
            .response_curves
            .iter()
            .enumerate()
            .map(|(i, r)| (r.mean_spend, r.mean_response, i))
            .collect();
        out.push((
            PANEL_TITLES[6],
            svg::lines(PANEL_TITLES[6], &series, &markers, &svg::label, true),
        ));

        let pts: Vec<(f64, f64)> = self.predicted.iter().copied().zip(self.residuals.iter().copied()).collect();
        out.push((PANEL_TITLES[7], svg::scatter(PANEL_TITLES[7], &pts)));
        out
    }

    /// The combined page.
    pub fn page_svg(&self) -> String {
        let panels = self.panels();
        let mut header = vec![format!("Model {}", self.model_id)];
        header.extend(self.header.render().lines().map(str::to_string));
        let refs: Vec<&Canvas> = panels.iter().map(|(_, c)| c).collect();
        svg::page(&header, &refs, 2)
    }

    pub fn metrics_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("one-pager serializes");
        s.push('\n');
        s
    }

    /// Writes every panel, the combined page and the metrics into `dir`.
    pub fn render(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut write = |name: &str, body: &str| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        for (title, canvas) in self.panels() {
            let k = PANEL_TITLES.iter().position(|t| *t == title).expect("known panel");
            write(PANEL_FILES[k], &canvas.document())?;
        }
        write("onepager.svg", &self.page_svg())?;
        write("metrics.json", &self.metrics_json())?;
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = HeaderMetrics {
            nrmse_train: 0.05,
            nrmse_val: Some(0.07),
            nrmse_test: None,
            rsq_adj_train: 0.9,
            rsq_adj_val: Some(0.8),
            rsq_adj_test: None,
            decomp_rssd: 0.12,
            mape: None,
        };
        let s = h.render();
        assert!(s.starts_with("NRMSE: train = 0.0500 | val = 0.0700 | test = NA;"));
        assert!(s.ends_with("DECOMP.RSSD = 0.1200; MAPE = NA"));
    }

    #[test]
    fn small_cluster_uses_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mean, lo, hi, flagged) = bootstrap(&[1.0, 2.0, 4.0], &mut rng);
        assert!(flagged);
        assert_eq!((lo, hi), (1.0, 4.0));
        assert!((mean - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_interval_brackets_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let values: Vec<f64> = (0..30).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let (mean, lo, hi, flagged) = bootstrap(&values, &mut rng);
        assert!(!flagged);
        assert!(lo <= mean && mean <= hi && lo < hi);
    }
}
