//! Media transforms: carryover (adstock) followed by diminishing returns
//! (Hill saturation).

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdstockFamily {
    Geometric,
    WeibullCdf,
    WeibullPdf,
}

impl AdstockFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(AdstockFamily::Geometric),
            "weibull_cdf" => Ok(AdstockFamily::WeibullCdf),
            "weibull_pdf" => Ok(AdstockFamily::WeibullPdf),
            other => bail!(InvalidParameter, "unknown adstock '{other}' (geometric, weibull_cdf or weibull_pdf)"),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AdstockFamily::Geometric => "geometric",
            AdstockFamily::WeibullCdf => "weibull_cdf",
            AdstockFamily::WeibullPdf => "weibull_pdf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AdstockParams {
    Geometric { theta: f64 },
    WeibullCdf { shape: f64, scale: f64, max_lag: usize },
    WeibullPdf { shape: f64, scale: f64, max_lag: usize },
}

impl AdstockParams {
    pub fn family(&self) -> AdstockFamily {
        match self {
            AdstockParams::Geometric { .. } => AdstockFamily::Geometric,
            AdstockParams::WeibullCdf { .. } => AdstockFamily::WeibullCdf,
            AdstockParams::WeibullPdf { .. } => AdstockFamily::WeibullPdf,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match *self {
            AdstockParams::Geometric { theta } => adstock_geometric(x, theta),
            AdstockParams::WeibullCdf { shape, scale, max_lag } => {
                adstock_weibull(x, AdstockFamily::WeibullCdf, shape, scale, max_lag)
            }
            AdstockParams::WeibullPdf { shape, scale, max_lag } => {
                adstock_weibull(x, AdstockFamily::WeibullPdf, shape, scale, max_lag)
            }
        }
    }

    /// Lag weights `w_0, w_1, ...`; for geometric decay the first `horizon`
    /// powers of theta.
    pub fn lag_weights(&self, horizon: usize) -> Result<Vec<f64>> {
        match *self {
            AdstockParams::Geometric { theta } => {
                check_theta(theta)?;
                Ok((0..horizon).map(|l| theta.powi(l as i32)).collect())
            }
            AdstockParams::WeibullCdf { shape, scale, max_lag } => {
                weibull_weights(AdstockFamily::WeibullCdf, shape, scale, max_lag)
            }
            AdstockParams::WeibullPdf { shape, scale, max_lag } => {
                weibull_weights(AdstockFamily::WeibullPdf, shape, scale, max_lag)
            }
        }
    }

    /// Weight of the same-period term.
    pub fn immediate_weight(&self) -> Result<f64> {
        Ok(self.lag_weights(1)?[0])
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&theta) {
        bail!(InvalidParameter, "theta must lie in [0, 1), got {theta}");
    }
    Ok(())
}

/// `x'_t = x_t + theta * x'_{t-1}`.
pub fn adstock_geometric(x: &[f64], theta: f64) -> Result<Vec<f64>> {
    check_theta(theta)?;
    let mut out = Vec::with_capacity(x.len());
    let mut carry = 0.0;
    for &v in x {
        carry = v + theta * carry;
        out.push(carry);
    }
    Ok(out)
}

/// Effective Weibull scale in lag units.
pub fn weibull_lambda(scale: f64, max_lag: usize) -> f64 {
    (scale * max_lag as f64).ceil().max(1.0)
}

/// Unnormalized Weibull lag weights for lags `0..max_lag`.
pub fn weibull_weights(family: AdstockFamily, shape: f64, scale: f64, max_lag: usize) -> Result<Vec<f64>> {
    if !(shape > 0.0 && shape.is_finite()) {
        bail!(InvalidParameter, "weibull shape must be positive, got {shape}");
    }
    if !(scale > 0.0 && scale < 1.0) {
        bail!(InvalidParameter, "weibull scale must lie in (0, 1), got {scale}");
    }
    if max_lag == 0 {
        bail!(InvalidParameter, "max_lag must be at least 1");
    }
    let lambda = weibull_lambda(scale, max_lag);
    match family {
        AdstockFamily::WeibullCdf => Ok((0..max_lag)
            .map(|l| if l == 0 { 1.0 } else { (-(l as f64 / lambda).powf(shape)).exp() })
            .collect()),
        AdstockFamily::WeibullPdf => {
            let dens: Vec<f64> = (0..max_lag)
                .map(|l| weibull_density(l as f64 + 0.5, shape, lambda))
                .collect();
            let peak = dens.iter().cloned().fold(0.0, f64::max);
            if !(peak > 0.0 && peak.is_finite()) {
                bail!(Numerical, "weibull density underflowed for shape {shape}, lambda {lambda}");
            }
            Ok(dens.into_iter().map(|d| d / peak).collect())
        }
        AdstockFamily::Geometric => bail!(InvalidParameter, "geometric adstock has no Weibull weights"),
    }
}

fn weibull_density(x: f64, shape: f64, lambda: f64) -> f64 {
    let z = x / lambda;
    // Evaluated in log space so tiny shapes do not overflow z^(k-1).
    let log = shape.ln() - lambda.ln() + (shape - 1.0) * z.ln() - z.powf(shape);
    log.exp()
}

pub fn adstock_weibull(x: &[f64], family: AdstockFamily, shape: f64, scale: f64, max_lag: usize) -> Result<Vec<f64>> {
    let w = weibull_weights(family, shape, scale, max_lag)?;
    Ok(convolve(x, &w))
}

/// Causal convolution `out_t = sum_l w_l x_{t-l}`.
pub fn convolve(x: &[f64], w: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            w.iter()
                .take(t + 1)
                .enumerate()
                .map(|(l, wl)| wl * x[t - l])
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationParams {
    pub alpha: f64,
    pub gamma: f64,
}

/// Hill value `v^a / (v^a + c^a)`.
#[inline]
pub fn hill(v: f64, alpha: f64, inflection: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    // Ratio form avoids overflow of v^alpha for large spends.
    let r = (inflection / v).powf(alpha);
    1.0 / (1.0 + r)
}

/// Derivative of [`hill`] with respect to `v`.
#[inline]
pub fn hill_derivative(v: f64, alpha: f64, inflection: f64) -> f64 {
    if v <= 0.0 {
        return if alpha < 1.0 {
            f64::INFINITY
        } else if alpha == 1.0 {
            1.0 / inflection
        } else {
            0.0
        };
    }
    let r = (inflection / v).powf(alpha);
    alpha * r / (v * (1.0 + r).powi(2))
}

/// Inflection point for a series: `min + gamma (max - min)`.
pub fn inflection_point(series: &[f64], gamma: f64) -> Result<f64> {
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        bail!(InvalidData, "cannot place a saturation inflection on a constant series");
    }
    Ok(lo + gamma * (hi - lo))
}

fn check_saturation(alpha: f64, gamma: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        bail!(InvalidParameter, "alpha must be positive, got {alpha}");
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        bail!(InvalidParameter, "gamma must lie in (0, 1], got {gamma}");
    }
    Ok(())
}

/// Saturates an adstocked series; the inflection is placed over the series
/// itself. Returns the transformed series and the inflection.
pub fn saturate_hill(x_adstocked: &[f64], alpha: f64, gamma: f64) -> Result<(Vec<f64>, f64)> {
    check_saturation(alpha, gamma)?;
    let c = inflection_point(x_adstocked, gamma)?;
    Ok((x_adstocked.iter().map(|&v| hill(v, alpha, c)).collect(), c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub adstock: AdstockParams,
    pub saturation: SaturationParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedChannel {
    /// Adstocked values over the modeled rows.
    pub adstocked: Vec<f64>,
    pub saturated: Vec<f64>,
    /// Same-period-only response using the full transform's inflection.
    pub immediate: Vec<f64>,
    pub inflection: f64,
    pub lag_weights: Vec<f64>,
}

/// Adstocks the full history `x` and saturates the trailing `window_len`
/// values; the inflection is placed over that trailing window.
pub fn transform_channel(x: &[f64], params: &ChannelParams, window_len: usize) -> Result<TransformedChannel> {
    if window_len == 0 || window_len > x.len() {
        bail!(InvalidParameter, "window of {window_len} rows does not fit a history of {}", x.len());
    }
    let SaturationParams { alpha, gamma } = params.saturation;
    check_saturation(alpha, gamma)?;
    let full = params.adstock.apply(x)?;
    let skip = x.len() - window_len;
    let adstocked = full[skip..].to_vec();
    let (saturated, inflection) = saturate_hill(&adstocked, alpha, gamma)?;
    let w0 = params.adstock.immediate_weight()?;
    let immediate = x[skip..].iter().map(|&v| hill(w0 * v, alpha, inflection)).collect();
    let horizon = match params.adstock {
        AdstockParams::Geometric { .. } => window_len.min(52),
        _ => 0,
    };
    Ok(TransformedChannel {
        adstocked,
        saturated,
        immediate,
        inflection,
        lag_weights: params.adstock.lag_weights(horizon)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn geometric_examples() {
        assert_eq!(adstock_geometric(&[100.0, 0.0, 0.0], 0.3).unwrap(), [100.0, 30.0, 9.0]);
        assert_eq!(
            adstock_geometric(&[100.0, 0.0, 0.0, 0.0], 0.5).unwrap(),
            [100.0, 50.0, 25.0, 12.5]
        );
        let x = [3.0, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(adstock_geometric(&x, 0.0).unwrap(), x);
        assert!(adstock_geometric(&x, 1.0).is_err());
        assert!(adstock_geometric(&x, -0.1).is_err());
    }

    #[test]
    fn geometric_impulse_mass() {
        for theta in [0.1, 0.3, 0.5, 0.8] {
            let mut x = vec![0.0; 200];
            x[0] = 7.0;
            let total: f64 = adstock_geometric(&x, theta).unwrap().iter().sum();
            assert!((total - 7.0 / (1.0 - theta)).abs() < 1e-9, "theta {theta}: {total}");
        }
    }

    #[test]
    fn weibull_cdf_weights() {
        let w = weibull_weights(AdstockFamily::WeibullCdf, 2.0, 0.5, 20).unwrap();
        assert_eq!(weibull_lambda(0.5, 20), 10.0);
        assert_eq!(w[0], 1.0);
        assert_relative_eq!(w[5], 0.778800783, epsilon = 1e-9);
        for shape in [0.1, 1.0, 1.9] {
            let w = weibull_weights(AdstockFamily::WeibullCdf, shape, 0.05, 100).unwrap();
            assert_eq!(w[0], 1.0);
            let y = adstock_weibull(&[42.0, 0.0], AdstockFamily::WeibullCdf, shape, 0.05, 100).unwrap();
            assert_eq!(y[0], 42.0);
        }
    }

    #[test]
    fn weibull_pdf_peak_lag() {
        // Brute force: density at every cell center, argmax.
        let (k, lambda): (f64, f64) = (2.0, 10.0);
        let dens = |x: f64| (k / lambda) * (x / lambda).powf(k - 1.0) * (-(x / lambda).powf(k)).exp();
        let argmax = (0..40)
            .max_by(|a, b| dens(*a as f64 + 0.5).partial_cmp(&dens(*b as f64 + 0.5)).unwrap())
            .unwrap();
        assert_eq!(argmax, 7);
        let w = weibull_weights(AdstockFamily::WeibullPdf, 2.0, 0.25, 40).unwrap();
        assert_eq!(weibull_lambda(0.25, 40), 10.0);
        assert_eq!(w[7], 1.0);
        assert!(w.iter().all(|v| *v <= 1.0));
        assert_relative_eq!(w[3], dens(3.5) / dens(7.5), epsilon = 1e-12);
    }

    #[test]
    fn weibull_bounds() {
        assert!(weibull_weights(AdstockFamily::WeibullCdf, 0.0, 0.05, 10).is_err());
        assert!(weibull_weights(AdstockFamily::WeibullCdf, 1.0, 0.0, 10).is_err());
        assert!(weibull_weights(AdstockFamily::WeibullCdf, 1.0, 1.0, 10).is_err());
        assert!(weibull_weights(AdstockFamily::WeibullPdf, 1.0, 0.05, 0).is_err());
        // tiny shape stays finite
        let w = weibull_weights(AdstockFamily::WeibullPdf, 0.0001, 0.05, 100).unwrap();
        assert!(w.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn hill_examples() {
        for alpha in [0.5, 1.0, 2.0, 3.0] {
            assert!((hill(37.0, alpha, 37.0) - 0.5).abs() < 1e-12);
            assert_eq!(hill(0.0, alpha, 37.0), 0.0);
        }
        assert_relative_eq!(hill(100.0, 1.0, 50.0), 100.0 / 150.0, epsilon = 1e-15);
        let (s, c) = saturate_hill(&[0.0, 50.0, 100.0], 1.0, 0.5).unwrap();
        assert_eq!(c, 50.0);
        assert_relative_eq!(s[2], 2.0 / 3.0, epsilon = 1e-15);
        assert!(saturate_hill(&[3.0, 3.0], 1.0, 0.5).is_err());
        assert!(saturate_hill(&[0.0, 3.0], 0.0, 0.5).is_err());
        assert!(saturate_hill(&[0.0, 3.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn hill_derivative_at_inflection() {
        for (alpha, c) in [(0.5, 3.0), (1.0, 50.0), (2.2, 1200.0), (3.0, 0.7)] {
            let h = c * 1e-5;
            let fd = (hill(c + h, alpha, c) - hill(c - h, alpha, c)) / (2.0 * h);
            let exact = alpha / (4.0 * c);
            assert_relative_eq!(hill_derivative(c, alpha, c), exact, max_relative = 1e-12);
            assert_relative_eq!(fd, exact, max_relative = 1e-6);
        }
    }

    #[test]
    fn composition_reduces_to_hill() {
        let x = [10.0, 0.0, 30.0, 20.0];
        let p = ChannelParams {
            adstock: AdstockParams::Geometric { theta: 0.0 },
            saturation: SaturationParams { alpha: 1.0, gamma: 1.0 },
        };
        let t = transform_channel(&x, &p, 4).unwrap();
        assert_eq!(t.inflection, 30.0);
        for (s, v) in t.saturated.iter().zip(x) {
            assert_relative_eq!(*s, v / (v + 30.0), epsilon = 1e-15);
        }
        assert_eq!(t.immediate, t.saturated);
    }

    #[test]
    fn composition_impulse() {
        let p = ChannelParams {
            adstock: AdstockParams::Geometric { theta: 0.5 },
            saturation: SaturationParams { alpha: 2.0, gamma: 0.4 },
        };
        let t = transform_channel(&[100.0, 0.0, 0.0], &p, 3).unwrap();
        assert_eq!(t.adstocked, [100.0, 50.0, 25.0]);
        let c = 25.0 + 0.4 * 75.0;
        assert_eq!(t.inflection, c);
        for (s, a) in t.saturated.iter().zip([100.0f64, 50.0, 25.0]) {
            assert_relative_eq!(*s, a * a / (a * a + c * c), epsilon = 1e-14);
        }
        // immediate sees only the same-period spend
        assert_eq!(t.immediate[1], 0.0);
    }

    #[test]
    fn window_uses_history_for_carryover() {
        let p = ChannelParams {
            adstock: AdstockParams::Geometric { theta: 0.5 },
            saturation: SaturationParams { alpha: 1.0, gamma: 0.5 },
        };
        let t = transform_channel(&[100.0, 0.0, 0.0, 10.0], &p, 3).unwrap();
        assert_eq!(t.adstocked, [50.0, 25.0, 22.5]);
    }

    #[test]
    fn hill_is_not_scale_invariant_but_recomputes_inflection() {
        let x = [1.0, 4.0, 2.0, 8.0];
        let (_, c1) = saturate_hill(&x, 2.0, 0.5).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * 10.0).collect();
        let (_, c10) = saturate_hill(&scaled, 2.0, 0.5).unwrap();
        assert_relative_eq!(c10, 10.0 * c1, epsilon = 1e-12);
        assert!(hill(8.0, 2.0, c1) != hill(8.0, 2.0, c10));
    }

    proptest! {
        #[test]
        fn geometric_scale_covariant(x in prop::collection::vec(0.0f64..1e4, 1..60), theta in 0.0f64..0.95, k in 0.01f64..100.0) {
            let a = adstock_geometric(&x, theta).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v * k).collect();
            let b = adstock_geometric(&xs, theta).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u * k - v).abs() <= 1e-9 * v.abs().max(1.0));
            }
        }

        #[test]
        fn adstock_monotone_in_inputs(x in prop::collection::vec(0.0f64..1e3, 2..40), idx in 0usize..40, bump in 0.0f64..100.0, theta in 0.0f64..0.9, shape in 0.1f64..5.0) {
            let i = idx % x.len();
            let mut y = x.clone();
            y[i] += bump;
            let a = adstock_geometric(&x, theta).unwrap();
            let b = adstock_geometric(&y, theta).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(u, v)| v >= u));
            let a = adstock_weibull(&x, AdstockFamily::WeibullPdf, shape, 0.1, 30).unwrap();
            let b = adstock_weibull(&y, AdstockFamily::WeibullPdf, shape, 0.1, 30).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(u, v)| *v >= *u - 1e-12));
        }

        #[test]
        fn hill_increasing_and_bounded(v in 0.0f64..1e6, dv in 1e-3f64..1e3, alpha in 0.5f64..3.0, c in 1e-2f64..1e5) {
            let a = hill(v, alpha, c);
            let b = hill(v + dv, alpha, c);
            prop_assert!((0.0..1.0).contains(&a));
            prop_assert!(b >= a);
        }
    }
}
