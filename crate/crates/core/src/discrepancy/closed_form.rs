use crate::error::{domain, Result};
use crate::numeric::{std_normal_cdf, std_normal_quantile};

/// Exact discrepancy for `N(0, σ²I)` smoothing at a shift of ℓ2 norm `shift_norm`:
/// `λ·Φ(s/2σ + σ ln λ / s) − Φ(−s/2σ + σ ln λ / s)`.
pub fn discrepancy_gaussian_closed_form(sigma: f64, shift_norm: f64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if shift_norm == 0.0 {
        return (lambda - 1.0).max(0.0);
    }
    let half = shift_norm / (2.0 * sigma);
    let t = sigma * lambda.ln() / shift_norm;
    (lambda * std_normal_cdf(half + t) - std_normal_cdf(-half + t)).max(0.0)
}

/// Exact discrepancy for Laplace(b) smoothing at the shift `[r, 0, …, 0]`.
///
/// Only the first coordinate contributes. With `ℓ = b ln λ`, the positive part
/// vanishes for `ℓ ≤ −r`, equals `λ − 1` for `ℓ ≥ r`, and in between the
/// crossing point `a = −(ℓ + r)/2` splits the line into two exponential tails.
pub fn discrepancy_laplace_closed_form(b: f64, r: f64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if r == 0.0 {
        return (lambda - 1.0).max(0.0);
    }
    let ell = b * lambda.ln();
    if ell >= r {
        lambda - 1.0
    } else if ell <= -r {
        0.0
    } else {
        let base = lambda * (1.0 - 0.5 * (-(ell + r) / (2.0 * b)).exp());
        let shifted = 0.5 * ((ell - r) / (2.0 * b)).exp();
        (base - shifted).max(0.0)
    }
}

/// The maximizer of `λ·p0 − D(λ)` for Gaussian smoothing:
/// `exp((2σ s Φ⁻¹(p0) − s²) / 2σ²)`.
pub fn gaussian_optimal_lambda(p0: f64, sigma: f64, shift_norm: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return domain(format!("sigma must be > 0, got {sigma}"));
    }
    let q = std_normal_quantile(p0)?;
    Ok(((2.0 * sigma * shift_norm * q - shift_norm * shift_norm) / (2.0 * sigma * sigma)).exp())
}
