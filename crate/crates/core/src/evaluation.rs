//! The three model objectives and their weighted combination.
//!
//! * NRMSE: statistical error of the fit,
//! * Decomp.RSSD: distance between effect shares and spend shares,
//! * MAPE.LIFT: error against experimentally measured lift.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::{format_date, parse_date};
use crate::error::{bail, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiftScope {
    /// Same-period response only.
    Immediate,
    /// Same-period plus carryover response.
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftStudy {
    pub channels: Vec<String>,
    #[serde(with = "crate::dataset::iso_date")]
    pub lift_start: NaiveDate,
    #[serde(with = "crate::dataset::iso_date")]
    pub lift_end: NaiveDate,
    pub lift_abs: f64,
    pub spend: f64,
    pub confidence: f64,
    pub metric: String,
    pub scope: LiftScope,
}

pub const LIFT_CSV_HEADER: [&str; 8] = [
    "channel",
    "liftStartDate",
    "liftEndDate",
    "liftAbs",
    "spend",
    "confidence",
    "metric",
    "calibration_scope",
];

impl LiftStudy {
    pub fn check(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.iter().any(|c| c.is_empty()) {
            bail!(InvalidData, "lift study without channel");
        }
        if self.lift_end < self.lift_start {
            bail!(
                InvalidData,
                "lift study for {} ends ({}) before it starts ({})",
                self.channel_label(),
                format_date(self.lift_end),
                format_date(self.lift_start)
            );
        }
        if self.lift_abs == 0.0 || !self.lift_abs.is_finite() {
            bail!(InvalidData, "lift study for {} needs a nonzero liftAbs", self.channel_label());
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            bail!(InvalidData, "confidence must lie in (0, 1], got {}", self.confidence);
        }
        if !(self.spend >= 0.0) {
            bail!(InvalidData, "lift study spend must be nonnegative");
        }
        Ok(())
    }

    pub fn channel_label(&self) -> String {
        self.channels.join("+")
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<LiftStudy>> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_bytes(&bytes)
    }

    pub fn from_csv_bytes(bytes: &[u8]) -> Result<Vec<LiftStudy>> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let mut idx = [0usize; 8];
        for (k, name) in LIFT_CSV_HEADER.iter().enumerate() {
            idx[k] = headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::Parse(format!("calibration input lacks column '{name}'")))?;
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("{what} '{s}' is not a number")))
        };
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let scope = match &rec[idx[7]] {
                "immediate" => LiftScope::Immediate,
                "total" => LiftScope::Total,
                other => bail!(Parse, "calibration_scope '{other}' must be 'immediate' or 'total'"),
            };
            let study = LiftStudy {
                channels: rec[idx[0]].split('+').map(|s| s.trim().to_string()).collect(),
                lift_start: parse_date(&rec[idx[1]])?,
                lift_end: parse_date(&rec[idx[2]])?,
                lift_abs: num(&rec[idx[3]], "liftAbs")?,
                spend: num(&rec[idx[4]], "spend")?,
                confidence: num(&rec[idx[5]], "confidence")?,
                metric: rec[idx[6]].to_string(),
                scope,
            };
            study.check()?;
            out.push(study);
        }
        Ok(out)
    }

    pub fn to_csv_bytes(studies: &[LiftStudy]) -> Vec<u8> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(LIFT_CSV_HEADER).expect("in-memory write");
        for s in studies {
            wtr.write_record([
                s.channel_label(),
                format_date(s.lift_start),
                format_date(s.lift_end),
                s.lift_abs.to_string(),
                s.spend.to_string(),
                s.confidence.to_string(),
                s.metric.clone(),
                match s.scope {
                    LiftScope::Immediate => "immediate".to_string(),
                    LiftScope::Total => "total".to_string(),
                },
            ])
            .expect("in-memory write");
        }
        wtr.into_inner().expect("in-memory flush")
    }
}

/// Per-channel modeled contributions over dated rows.
pub trait ContributionSource {
    fn contribution_dates(&self) -> &[NaiveDate];
    fn channel_contribution(&self, channel: &str, scope: LiftScope) -> Option<Vec<f64>>;
}

/// Modeled lift for one study: summed contribution of its channels over the
/// study's dates.
pub fn predicted_lift(source: &dyn ContributionSource, study: &LiftStudy) -> Result<f64> {
    let dates = source.contribution_dates();
    let rows: Vec<usize> = dates
        .iter()
        .enumerate()
        .filter(|(_, d)| **d >= study.lift_start && **d <= study.lift_end)
        .map(|(i, _)| i)
        .collect();
    if rows.is_empty() {
        bail!(
            InvalidData,
            "lift study {} ({}..{}) does not overlap the modeled dates",
            study.channel_label(),
            format_date(study.lift_start),
            format_date(study.lift_end)
        );
    }
    let mut total = 0.0;
    for ch in &study.channels {
        let contrib = source
            .channel_contribution(ch, study.scope)
            .ok_or_else(|| Error::InvalidData(format!("lift study channel '{ch}' is not a modeled channel")))?;
        total += rows.iter().map(|&i| contrib[i]).sum::<f64>();
    }
    Ok(total)
}

/// Confidence-weighted mean absolute percentage error against lift studies.
pub fn mape_lift(source: &dyn ContributionSource, studies: &[LiftStudy]) -> Result<f64> {
    if studies.is_empty() {
        bail!(InvalidParameter, "no lift studies given");
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for s in studies {
        let pred = predicted_lift(source, s)?;
        let ape = (pred - s.lift_abs).abs() / s.lift_abs.abs();
        num += s.confidence * ape;
        den += s.confidence;
    }
    Ok(num / den)
}

/// Root sum of squared differences between effect and spend shares.
pub fn decomp_rssd(effect_shares: &[f64], spend_shares: &[f64]) -> Result<f64> {
    if effect_shares.len() != spend_shares.len() {
        bail!(
            InvalidParameter,
            "{} effect shares vs {} spend shares",
            effect_shares.len(),
            spend_shares.len()
        );
    }
    Ok(effect_shares
        .iter()
        .zip(spend_shares)
        .map(|(e, s)| (e - s).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Fractions of the total; all zero when the total is zero.
pub fn shares(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    if total > 0.0 {
        values.iter().map(|v| v.abs() / total).collect()
    } else {
        vec![0.0; values.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveScores {
    pub nrmse: f64,
    pub decomp_rssd: f64,
    pub mape_lift: Option<f64>,
}

impl ObjectiveScores {
    pub fn get(&self, k: Objective) -> Option<f64> {
        match k {
            Objective::Nrmse => Some(self.nrmse),
            Objective::DecompRssd => Some(self.decomp_rssd),
            Objective::MapeLift => self.mape_lift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    Nrmse,
    DecompRssd,
    MapeLift,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Nrmse, Objective::DecompRssd, Objective::MapeLift];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Objective weights in NRMSE, Decomp.RSSD, MAPE.LIFT order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights(pub [f64; 3]);

impl Default for Weights {
    fn default() -> Self {
        Weights([1.0, 1.0, 1.0])
    }
}

impl Weights {
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("weights '{s}' must be three comma-separated numbers")))?;
        let w: [f64; 3] = parts
            .try_into()
            .map_err(|_| Error::Parse(format!("weights '{s}' must have exactly three entries")))?;
        let w = Weights(w);
        w.check()?;
        Ok(w)
    }

    pub fn check(&self) -> Result<()> {
        if self.0.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            bail!(InvalidParameter, "objective weights must be finite and nonnegative");
        }
        if self.0.iter().all(|w| *w == 0.0) {
            bail!(InvalidParameter, "at least one objective weight must be positive");
        }
        Ok(())
    }

    pub fn get(&self, k: Objective) -> f64 {
        self.0[k.index()]
    }

    /// Objectives taking part in selection and dominance.
    pub fn active(&self, calibrated: bool) -> Vec<Objective> {
        Objective::ALL
            .into_iter()
            .filter(|k| self.get(*k) > 0.0 && (calibrated || *k != Objective::MapeLift))
            .collect()
    }
}

/// Running per-objective minimum and maximum over an archive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRanges {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for ArchiveRanges {
    fn default() -> Self {
        ArchiveRanges {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }
}

impl ArchiveRanges {
    pub fn update(&mut self, s: &ObjectiveScores) {
        for k in Objective::ALL {
            if let Some(v) = s.get(k).filter(|v| v.is_finite()) {
                let i = k.index();
                self.min[i] = self.min[i].min(v);
                self.max[i] = self.max[i].max(v);
            }
        }
    }

    /// Min-max normalized value in `[0, 1]`; 0 when the range is degenerate.
    pub fn normalize(&self, k: Objective, v: f64) -> f64 {
        let i = k.index();
        let width = self.max[i] - self.min[i];
        if !(width > 0.0) || !width.is_finite() {
            return 0.0;
        }
        ((v - self.min[i]) / width).clamp(0.0, 1.0)
    }
}

/// Weighted mean of range-normalized objectives.
pub fn scalarize(scores: &ObjectiveScores, weights: &Weights, ranges: &ArchiveRanges) -> Result<f64> {
    weights.check()?;
    let mut num = 0.0;
    for k in Objective::ALL {
        let w = weights.get(k);
        if w == 0.0 {
            continue;
        }
        let v = match scores.get(k) {
            Some(v) => v,
            None => bail!(InvalidParameter, "MAPE.LIFT weight is positive but no calibration input was given"),
        };
        num += w * ranges.normalize(k, v);
    }
    Ok(num / weights.0.iter().sum::<f64>())
}
