//! `f_{π0}(x)` for an ℓ2 ball under spherical smoothing, by 1-D quadrature
//! over the radius.
//!
//! With `z = ρu`, `v = x − center` and `a = ‖v‖`, the point `x + z` is in
//! the ball iff `u₁ ≤ τ(ρ) = (R² − ρ² − a²)/(2ρa)`, where `u₁` is one
//! coordinate of a uniform direction, `(1 + u₁)/2 ~ Beta((d−1)/2, (d−1)/2)`.

use super::SyntheticClassifier;
use crate::error::{Error, Result};
use crate::family::{SmoothingFamily, Variant};
use crate::numeric::{integrate_adaptive, log_gamma, reg_incomplete_beta, reg_lower_gamma, Probability};
use crate::threat::Norm;

/// Exact smoothed value of a centered-ball classifier at `x0 + shift`.
pub fn exact_smoothed_value(
    classifier: &SyntheticClassifier,
    x0: &[f64],
    family: &SmoothingFamily,
    shift: &[f64],
) -> Result<Probability> {
    let (center, radius) = match classifier {
        SyntheticClassifier::BallIndicator {
            norm: Norm::L2,
            center,
            radius,
        } => (center, *radius),
        _ => {
            return Err(Error::Unsupported(
                "exact smoothed values are available for ℓ2 ball indicators only".into(),
            ))
        }
    };
    classifier.validate()?;
    let sigma = match family.variant() {
        Variant::Gaussian { sigma } | Variant::L2PowerTail { sigma, .. } => sigma,
        v => {
            return Err(Error::Unsupported(format!(
                "exact smoothed values need a spherical ℓ2 family, got {}",
                v.tag()
            )))
        }
    };
    let d = family.dim();
    if x0.len() != d || shift.len() != d || center.len() != d {
        return Err(Error::Domain(format!(
            "dimension mismatch: family {d}, x0 {}, shift {}, center {}",
            x0.len(),
            shift.len(),
            center.len()
        )));
    }
    let a = x0
        .iter()
        .zip(shift)
        .zip(center)
        .map(|((x, s), c)| (x + s - c) * (x + s - c))
        .sum::<f64>()
        .sqrt();
    let m = (d as f64 - family.variant().k()) / 2.0;
    let s2 = 2.0 * sigma * sigma;
    // P(ρ ≤ t) with ρ²/(2σ²) ~ Gamma(m)
    let cdf = |t: f64| -> Result<f64> {
        if t <= 0.0 {
            Ok(0.0)
        } else {
            reg_lower_gamma(m, t * t / s2)
        }
    };
    if radius == 0.0 {
        return Ok(Probability::saturating(0.0));
    }
    if a == 0.0 {
        return Ok(Probability::saturating(cdf(radius)?));
    }
    if d == 1 {
        // u₁ = ±1 with equal probability
        let v = 0.5 * (cdf(radius - a)? + cdf(radius + a)? - cdf(a - radius)?);
        return Ok(Probability::saturating(v));
    }
    let inner = cdf(radius - a)?;
    let g_lo = (radius - a).abs().powi(2) / s2;
    let g_hi = (radius + a).powi(2) / s2;
    let half = (d as f64 - 1.0) / 2.0;
    let ln_norm = log_gamma(m)?;
    let u1_cdf = move |g: f64| -> f64 {
        let rho = (g * s2).sqrt();
        let tau = (radius * radius - rho * rho - a * a) / (2.0 * rho * a);
        if tau >= 1.0 {
            1.0
        } else if tau <= -1.0 {
            0.0
        } else {
            reg_incomplete_beta(half, half, 0.5 * (1.0 + tau)).unwrap_or(f64::NAN)
        }
    };
    let shell = if m < 1.0 {
        // s = g^m removes the g^{m−1} endpoint singularity
        let f = |s: f64| {
            if s <= 0.0 {
                return (-ln_norm).exp() / m * u1_cdf(f64::MIN_POSITIVE);
            }
            let g = s.powf(1.0 / m);
            (-g - ln_norm).exp() / m * u1_cdf(g)
        };
        integrate_adaptive(f, g_lo.powf(m), g_hi.powf(m), 1e-11)
    } else {
        let f = |g: f64| {
            if g <= 0.0 {
                return 0.0;
            }
            ((m - 1.0) * g.ln() - g - ln_norm).exp() * u1_cdf(g)
        };
        integrate_adaptive(f, g_lo, g_hi, 1e-11)
    };
    if !shell.is_finite() {
        return Err(Error::Domain("radial quadrature produced a non-finite value".into()));
    }
    Ok(Probability::saturating(inner + shell))
}
