//! Hyperparameter space and the affine map from the unit hypercube.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Frequency, MmmDataset};
use crate::error::{bail, Result};
use crate::transforms::{AdstockFamily, AdstockParams, ChannelParams, SaturationParams};

/// Smallest Weibull shape / scale a decoded point may take; both must be
/// strictly positive.
const WEIBULL_SHAPE_FLOOR: f64 = 1e-4;
const WEIBULL_SCALE_FLOOR: f64 = 1e-6;

pub const DAILY_MAX_LAG: usize = 60;
/// Half-width of refreshed bounds, as a fraction of the original width.
pub const REFRESH_BAND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds(pub f64, pub f64);

impl Bounds {
    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn width(&self) -> f64 {
        self.1 - self.0
    }

    pub fn at(&self, u: f64) -> f64 {
        self.0 + u.clamp(0.0, 1.0) * self.width()
    }

    fn check(&self, what: &str) -> Result<()> {
        if !(self.0 < self.1) || !self.0.is_finite() || !self.1.is_finite() {
            bail!(InvalidParameter, "{what} bounds must satisfy lower < upper, got ({}, {})", self.0, self.1);
        }
        Ok(())
    }

    fn within(&self, outer: &Bounds) -> bool {
        self.0 >= outer.0 && self.1 <= outer.1
    }

    /// `center +/- band * original width`, clipped to the original bounds.
    pub fn narrowed(&self, center: f64, band: f64) -> Bounds {
        let half = band * self.width();
        Bounds((center - half).max(self.0), (center + half).min(self.1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AdstockBounds {
    Geometric { theta: Bounds },
    WeibullCdf { shape: Bounds, scale: Bounds },
    WeibullPdf { shape: Bounds, scale: Bounds },
}

impl AdstockBounds {
    pub fn default_for(family: AdstockFamily) -> Self {
        match family {
            AdstockFamily::Geometric => AdstockBounds::Geometric { theta: Bounds(0.0, 0.8) },
            AdstockFamily::WeibullCdf => AdstockBounds::WeibullCdf {
                shape: Bounds(0.0, 2.0),
                scale: Bounds(0.0, 0.1),
            },
            AdstockFamily::WeibullPdf => AdstockBounds::WeibullPdf {
                shape: Bounds(0.0001, 10.0),
                scale: Bounds(0.0, 0.1),
            },
        }
    }

    pub fn family(&self) -> AdstockFamily {
        match self {
            AdstockBounds::Geometric { .. } => AdstockFamily::Geometric,
            AdstockBounds::WeibullCdf { .. } => AdstockFamily::WeibullCdf,
            AdstockBounds::WeibullPdf { .. } => AdstockFamily::WeibullPdf,
        }
    }

    fn dims(&self) -> usize {
        match self {
            AdstockBounds::Geometric { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpace {
    pub channel: String,
    pub adstock: AdstockBounds,
    pub alpha: Bounds,
    pub gamma: Bounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterSpace {
    pub channels: Vec<ChannelSpace>,
    pub lambda: Bounds,
    /// Convolution length for Weibull adstock.
    pub max_lag: usize,
}

/// A decoded point of the space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterVector {
    pub channels: Vec<(String, ChannelParams)>,
    /// Unit-interval position of the ridge penalty between its bounds.
    pub lambda: f64,
}

impl HyperparameterVector {
    pub fn params(&self, channel: &str) -> Option<&ChannelParams> {
        self.channels.iter().find(|(c, _)| c == channel).map(|(_, p)| p)
    }
}

impl HyperparameterSpace {
    /// Default bounds for every media channel of `ds`.
    pub fn default_for(ds: &MmmDataset, family: AdstockFamily) -> Self {
        let channels = ds
            .media_channels()
            .into_iter()
            .map(|channel| ChannelSpace {
                channel,
                adstock: AdstockBounds::default_for(family),
                alpha: Bounds(0.5, 3.0),
                gamma: Bounds(0.3, 1.0),
            })
            .collect();
        let max_lag = match ds.frequency() {
            Frequency::Weekly => ds.window_len(),
            Frequency::Daily => DAILY_MAX_LAG,
        };
        HyperparameterSpace {
            channels,
            lambda: Bounds(0.0, 1.0),
            max_lag,
        }
    }

    /// Applies overrides keyed like `facebook_S_thetas`, `tv_S_alphas` or
    /// `lambda`.
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, [f64; 2]>) -> Result<Self> {
        for (key, &[lo, hi]) in overrides {
            let b = Bounds(lo, hi);
            if key == "lambda" {
                self.lambda = b;
                continue;
            }
            let (channel, param) = match key.rsplit_once('_') {
                Some(x) => x,
                None => bail!(InvalidParameter, "hyperparameter key '{key}' is not '<channel>_<param>'"),
            };
            let cs = match self.channels.iter_mut().find(|c| c.channel == channel) {
                Some(c) => c,
                None => bail!(InvalidParameter, "hyperparameter '{key}' names unknown channel '{channel}'"),
            };
            match (param, &mut cs.adstock) {
                ("alphas", _) => cs.alpha = b,
                ("gammas", _) => cs.gamma = b,
                ("thetas", AdstockBounds::Geometric { theta }) => *theta = b,
                ("shapes", AdstockBounds::WeibullCdf { shape, .. } | AdstockBounds::WeibullPdf { shape, .. }) => *shape = b,
                ("scales", AdstockBounds::WeibullCdf { scale, .. } | AdstockBounds::WeibullPdf { scale, .. }) => *scale = b,
                _ => bail!(
                    InvalidParameter,
                    "hyperparameter '{key}' does not apply to {} adstock",
                    cs.adstock.family().as_str()
                ),
            }
        }
        self.check()?;
        Ok(self)
    }

    pub fn check(&self) -> Result<()> {
        if self.channels.is_empty() {
            bail!(InvalidParameter, "hyperparameter space has no channels");
        }
        let family = self.channels[0].adstock.family();
        for c in &self.channels {
            if c.adstock.family() != family {
                bail!(InvalidParameter, "adstock family must be the same across channels");
            }
            match c.adstock {
                AdstockBounds::Geometric { theta } => {
                    theta.check(&format!("{}_thetas", c.channel))?;
                    if theta.lo() < 0.0 || theta.hi() >= 1.0 {
                        bail!(InvalidParameter, "{}_thetas must lie within [0, 1)", c.channel);
                    }
                }
                AdstockBounds::WeibullCdf { shape, scale } | AdstockBounds::WeibullPdf { shape, scale } => {
                    shape.check(&format!("{}_shapes", c.channel))?;
                    scale.check(&format!("{}_scales", c.channel))?;
                    if shape.lo() < 0.0 || scale.lo() < 0.0 || scale.hi() >= 1.0 {
                        bail!(InvalidParameter, "{} Weibull bounds out of range", c.channel);
                    }
                }
            }
            c.alpha.check(&format!("{}_alphas", c.channel))?;
            c.gamma.check(&format!("{}_gammas", c.channel))?;
            if c.alpha.lo() <= 0.0 {
                bail!(InvalidParameter, "{}_alphas must be positive", c.channel);
            }
            if c.gamma.lo() < 0.0 || c.gamma.hi() > 1.0 {
                bail!(InvalidParameter, "{}_gammas must lie within [0, 1]", c.channel);
            }
        }
        self.lambda.check("lambda")?;
        if self.lambda.lo() < 0.0 || self.lambda.hi() > 1.0 {
            bail!(InvalidParameter, "lambda bounds must lie within [0, 1]");
        }
        if self.max_lag == 0 {
            bail!(InvalidParameter, "max_lag must be at least 1");
        }
        Ok(())
    }

    pub fn family(&self) -> AdstockFamily {
        self.channels[0].adstock.family()
    }

    /// Dimension of the search hypercube.
    pub fn dims(&self) -> usize {
        self.channels.iter().map(|c| c.adstock.dims() + 2).sum::<usize>() + 1
    }

    /// Affine map from `[0, 1]^dims` onto the bounds.
    pub fn decode(&self, unit: &[f64]) -> HyperparameterVector {
        assert_eq!(unit.len(), self.dims(), "unit point has wrong dimension");
        let mut it = unit.iter().copied();
        let mut next = || it.next().expect("dimension checked");
        let channels = self
            .channels
            .iter()
            .map(|c| {
                let adstock = match c.adstock {
                    AdstockBounds::Geometric { theta } => AdstockParams::Geometric { theta: theta.at(next()) },
                    AdstockBounds::WeibullCdf { shape, scale } => AdstockParams::WeibullCdf {
                        shape: shape.at(next()).max(WEIBULL_SHAPE_FLOOR),
                        scale: scale.at(next()).max(WEIBULL_SCALE_FLOOR),
                        max_lag: self.max_lag,
                    },
                    AdstockBounds::WeibullPdf { shape, scale } => AdstockParams::WeibullPdf {
                        shape: shape.at(next()).max(WEIBULL_SHAPE_FLOOR),
                        scale: scale.at(next()).max(WEIBULL_SCALE_FLOOR),
                        max_lag: self.max_lag,
                    },
                };
                let saturation = SaturationParams {
                    alpha: c.alpha.at(next()),
                    gamma: c.gamma.at(next()),
                };
                (c.channel.clone(), ChannelParams { adstock, saturation })
            })
            .collect();
        let lambda = self.lambda.at(next());
        HyperparameterVector { channels, lambda }
    }

    /// Bounds narrowed around a selected point, for refresh runs.
    pub fn narrowed_around(&self, selected: &HyperparameterVector) -> Result<Self> {
        let mut out = self.clone();
        for cs in &mut out.channels {
            let p = match selected.params(&cs.channel) {
                Some(p) => p,
                None => bail!(Model, "selected model lacks hyperparameters for '{}'", cs.channel),
            };
            cs.adstock = match (cs.adstock, p.adstock) {
                (AdstockBounds::Geometric { theta }, AdstockParams::Geometric { theta: t }) => AdstockBounds::Geometric {
                    theta: theta.narrowed(t, REFRESH_BAND),
                },
                (AdstockBounds::WeibullCdf { shape, scale }, AdstockParams::WeibullCdf { shape: k, scale: s, .. }) => {
                    AdstockBounds::WeibullCdf {
                        shape: shape.narrowed(k, REFRESH_BAND),
                        scale: scale.narrowed(s, REFRESH_BAND),
                    }
                }
                (AdstockBounds::WeibullPdf { shape, scale }, AdstockParams::WeibullPdf { shape: k, scale: s, .. }) => {
                    AdstockBounds::WeibullPdf {
                        shape: shape.narrowed(k, REFRESH_BAND),
                        scale: scale.narrowed(s, REFRESH_BAND),
                    }
                }
                _ => bail!(Model, "adstock family of '{}' changed between runs", cs.channel),
            };
            cs.alpha = cs.alpha.narrowed(p.saturation.alpha, REFRESH_BAND);
            cs.gamma = cs.gamma.narrowed(p.saturation.gamma, REFRESH_BAND);
        }
        out.lambda = self.lambda.narrowed(selected.lambda, REFRESH_BAND);
        Ok(out)
    }

    /// True when every bound of `self` lies within the matching bound of
    /// `outer`.
    pub fn is_within(&self, outer: &HyperparameterSpace) -> bool {
        self.channels.len() == outer.channels.len()
            && self.lambda.within(&outer.lambda)
            && self.channels.iter().zip(&outer.channels).all(|(a, b)| {
                a.channel == b.channel
                    && a.alpha.within(&b.alpha)
                    && a.gamma.within(&b.gamma)
                    && match (a.adstock, b.adstock) {
                        (AdstockBounds::Geometric { theta: x }, AdstockBounds::Geometric { theta: y }) => x.within(&y),
                        (
                            AdstockBounds::WeibullCdf { shape: s1, scale: c1 },
                            AdstockBounds::WeibullCdf { shape: s2, scale: c2 },
                        )
                        | (
                            AdstockBounds::WeibullPdf { shape: s1, scale: c1 },
                            AdstockBounds::WeibullPdf { shape: s2, scale: c2 },
                        ) => s1.within(&s2) && c1.within(&c2),
                        _ => false,
                    }
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn space(family: AdstockFamily) -> HyperparameterSpace {
        HyperparameterSpace {
            channels: ["tv_S", "facebook_S"]
                .iter()
                .map(|c| ChannelSpace {
                    channel: c.to_string(),
                    adstock: AdstockBounds::default_for(family),
                    alpha: Bounds(0.5, 3.0),
                    gamma: Bounds(0.3, 1.0),
                })
                .collect(),
            lambda: Bounds(0.0, 1.0),
            max_lag: 100,
        }
    }

    #[test]
    fn decode_corners() {
        let s = space(AdstockFamily::Geometric);
        assert_eq!(s.dims(), 7);
        let lo = s.decode(&[0.0; 7]);
        let hi = s.decode(&[1.0; 7]);
        assert_eq!(lo.params("tv_S").unwrap().adstock, AdstockParams::Geometric { theta: 0.0 });
        assert_eq!(hi.params("facebook_S").unwrap().saturation, SaturationParams { alpha: 3.0, gamma: 1.0 });
        assert_eq!(hi.lambda, 1.0);
        let w = space(AdstockFamily::WeibullCdf);
        assert_eq!(w.dims(), 9);
        match w.decode(&[0.0; 9]).channels[0].1.adstock {
            AdstockParams::WeibullCdf { shape, scale, max_lag } => {
                assert!(shape > 0.0 && scale > 0.0);
                assert_eq!(max_lag, 100);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn refresh_narrowing() {
        let s = space(AdstockFamily::Geometric);
        let mut sel = s.decode(&[0.5; 7]);
        sel.channels[0].1.adstock = AdstockParams::Geometric { theta: 0.30 };
        let r = s.narrowed_around(&sel).unwrap();
        match r.channels[0].adstock {
            AdstockBounds::Geometric { theta } => {
                assert_relative_eq!(theta.lo(), 0.22, epsilon = 1e-12);
                assert_relative_eq!(theta.hi(), 0.38, epsilon = 1e-12);
            }
            _ => unreachable!(),
        }
        assert!(r.is_within(&s));
        // clipped at the edge
        sel.channels[1].1.saturation.gamma = 1.0;
        let r = s.narrowed_around(&sel).unwrap();
        assert_eq!(r.channels[1].gamma.hi(), 1.0);
        assert!(r.is_within(&s));
    }

    #[test]
    fn overrides() {
        let mut o = BTreeMap::new();
        o.insert("facebook_S_thetas".to_string(), [0.0, 0.3]);
        let s = space(AdstockFamily::Geometric).with_overrides(&o).unwrap();
        assert_eq!(s.channels[1].adstock, AdstockBounds::Geometric { theta: Bounds(0.0, 0.3) });
        o.insert("facebook_S_shapes".to_string(), [0.0, 0.3]);
        assert!(space(AdstockFamily::Geometric).with_overrides(&o).is_err());
        let mut bad = BTreeMap::new();
        bad.insert("tv_S_alphas".to_string(), [2.0, 1.0]);
        assert!(space(AdstockFamily::Geometric).with_overrides(&bad).is_err());
    }
}
