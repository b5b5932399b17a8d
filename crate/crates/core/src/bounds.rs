//! Closed-form certificates and binomial confidence bounds.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numeric::{inv_reg_incomplete_beta, std_normal_cdf, std_normal_quantile, Probability};

/// Radii that would be infinite (p0 → 1) are reported as this value with the
/// saturation flag set.
pub const RADIUS_CAP: f64 = 1e6;

/// Observed successes out of a number of classifier evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinomialEvidence {
    pub successes: u64,
    pub trials: u64,
}

impl BinomialEvidence {
    pub fn new(successes: u64, trials: u64) -> Result<Self> {
        if trials == 0 || successes > trials {
            return domain(format!("invalid binomial evidence: {successes} successes out of {trials} trials"));
        }
        Ok(Self { successes, trials })
    }
}

/// How the overall failure probability is split between estimating `p0` and
/// estimating the discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceBudget {
    pub alpha_total: f64,
    pub alpha_p0: f64,
    pub alpha_mc: f64,
}

impl ConfidenceBudget {
    /// `alpha_p0 = alpha_mc = alpha_total / 2`.
    pub fn split_evenly(alpha_total: f64) -> Result<Self> {
        let b = Self {
            alpha_total,
            alpha_p0: alpha_total / 2.0,
            alpha_mc: alpha_total / 2.0,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn new(alpha_total: f64, alpha_p0: f64, alpha_mc: f64) -> Result<Self> {
        let b = Self {
            alpha_total,
            alpha_p0,
            alpha_mc,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, a) in [
            ("alpha_total", self.alpha_total),
            ("alpha_p0", self.alpha_p0),
            ("alpha_mc", self.alpha_mc),
        ] {
            if !(a > 0.0 && a < 1.0) {
                return domain(format!("{name} must lie in (0, 1), got {a}"));
            }
        }
        if self.alpha_p0 + self.alpha_mc > self.alpha_total * (1.0 + 1e-12) {
            return domain(format!(
                "alpha_p0 + alpha_mc = {} exceeds alpha_total = {}",
                self.alpha_p0 + self.alpha_mc,
                self.alpha_total
            ));
        }
        Ok(())
    }
}

/// One-sided Clopper–Pearson lower confidence bound on a binomial proportion:
/// the `alpha` quantile of `Beta(s, N − s + 1)`.
pub fn clopper_pearson_lower(evidence: BinomialEvidence, alpha: f64) -> Result<Probability> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let BinomialEvidence { successes, trials } = BinomialEvidence::new(evidence.successes, evidence.trials)?;
    if successes == 0 {
        return Ok(Probability::saturating(0.0));
    }
    let p = inv_reg_incomplete_beta(successes as f64, (trials - successes) as f64 + 1.0, alpha)?;
    Ok(Probability::saturating(p))
}

/// A closed-form value that may have hit a limit (`p0 ∈ {0, 1}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub value: f64,
    pub saturated: bool,
}

/// A certified radius; `certifiable` is false when no positive radius exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusOutcome {
    pub radius: f64,
    pub certifiable: bool,
    pub saturated: bool,
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("probability must lie in [0, 1], got {p}"));
    }
    Ok(())
}

fn check_scale(name: &str, s: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return domain(format!("{name} must be finite and > 0, got {s}"));
    }
    Ok(())
}

fn check_radius(r: f64) -> Result<()> {
    if !(r >= 0.0) {
        return domain(format!("radius must be >= 0, got {r}"));
    }
    Ok(())
}

/// Gaussian ℓ2 certificate `Φ(Φ⁻¹(p0) − r/σ)`.
pub fn cohen_bound(p0: f64, sigma: f64, r: f64) -> Result<ClosedForm> {
    check_p(p0)?;
    check_scale("sigma", sigma)?;
    check_radius(r)?;
    if p0 == 0.0 || p0 == 1.0 {
        return Ok(ClosedForm {
            value: p0,
            saturated: true,
        });
    }
    Ok(ClosedForm {
        value: std_normal_cdf(std_normal_quantile(p0)? - r / sigma),
        saturated: false,
    })
}

/// `σ·Φ⁻¹(p0)`; negative values mean no radius can be certified.
pub fn cohen_radius(p0: f64, sigma: f64) -> Result<RadiusOutcome> {
    check_p(p0)?;
    check_scale("sigma", sigma)?;
    if p0 == 1.0 {
        return Ok(RadiusOutcome {
            radius: RADIUS_CAP,
            certifiable: true,
            saturated: true,
        });
    }
    if p0 == 0.0 {
        return Ok(RadiusOutcome {
            radius: -RADIUS_CAP,
            certifiable: false,
            saturated: true,
        });
    }
    let raw = sigma * std_normal_quantile(p0)?;
    Ok(RadiusOutcome {
        radius: raw.clamp(-RADIUS_CAP, RADIUS_CAP),
        certifiable: raw > 0.0,
        saturated: raw.abs() > RADIUS_CAP,
    })
}

/// Laplace ℓ1 certificate, the exact maximum of the dual over `λ` at
/// `δ = [r, 0, …, 0]`:
///
/// * `p0 ≥ 1 − e^{−r/b}/2`: `1 − e^{r/b}(1 − p0)`
/// * `1/2 ≤ p0 < 1 − e^{−r/b}/2`: `½·e^{−r/b − ln[2(1 − p0)]}`
/// * `p0 < 1/2`: `p0·e^{−r/b}` (the interior stationary point falls below
///   `λ = e^{−r/b}`, so the maximum sits on that boundary)
pub fn teng_bound(p0: f64, b: f64, r: f64) -> Result<ClosedForm> {
    check_p(p0)?;
    check_scale("b", b)?;
    check_radius(r)?;
    if p0 == 1.0 {
        return Ok(ClosedForm {
            value: 1.0,
            saturated: true,
        });
    }
    let value = if p0 >= 1.0 - 0.5 * (-r / b).exp() {
        1.0 - (r / b).exp() * (1.0 - p0)
    } else if p0 >= 0.5 {
        0.5 * (-r / b - (2.0 * (1.0 - p0)).ln()).exp()
    } else {
        p0 * (-r / b).exp()
    };
    Ok(ClosedForm {
        value,
        saturated: p0 == 0.0,
    })
}

/// `−b·ln[2(1 − p0)]`, certifiable only for `p0 > 1/2`.
pub fn teng_radius(p0: f64, b: f64) -> Result<RadiusOutcome> {
    check_p(p0)?;
    check_scale("b", b)?;
    if p0 <= 0.5 {
        return Ok(RadiusOutcome {
            radius: 0.0,
            certifiable: false,
            saturated: false,
        });
    }
    let raw = -b * (2.0 * (1.0 - p0)).ln();
    Ok(RadiusOutcome {
        radius: raw.min(RADIUS_CAP),
        certifiable: true,
        saturated: !(raw <= RADIUS_CAP),
    })
}

/// Multi-class Gaussian radius `σ/2·(Φ⁻¹(pA) − Φ⁻¹(pB))`.
pub fn gaussian_bilateral_radius(p_a: f64, p_b: f64, sigma: f64) -> Result<RadiusOutcome> {
    if !(p_a > 0.0 && p_a < 1.0 && p_b > 0.0 && p_b < 1.0) {
        return domain(format!("bilateral radius needs pA, pB in (0, 1), got pA={p_a}, pB={p_b}"));
    }
    check_scale("sigma", sigma)?;
    if p_a <= p_b {
        return Ok(RadiusOutcome {
            radius: 0.0,
            certifiable: false,
            saturated: false,
        });
    }
    Ok(RadiusOutcome {
        radius: 0.5 * sigma * (std_normal_quantile(p_a)? - std_normal_quantile(p_b)?),
        certifiable: true,
        saturated: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::log_gamma;

    /// P(Binomial(n, p) ≥ k) by direct summation of log-pmf terms.
    fn binom_upper_tail(n: u64, k: u64, p: f64) -> f64 {
        let ln_choose = |j: u64| {
            log_gamma(n as f64 + 1.0).unwrap() - log_gamma(j as f64 + 1.0).unwrap() - log_gamma((n - j) as f64 + 1.0).unwrap()
        };
        (k..=n)
            .map(|j| (ln_choose(j) + j as f64 * p.ln() + (n - j) as f64 * (1.0 - p).ln()).exp())
            .sum()
    }

    /// Lower bound found by bisecting the binomial tail directly.
    fn cp_by_bisection(n: u64, k: u64, alpha: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if binom_upper_tail(n, k, mid) < alpha {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn clopper_pearson_examples() {
        let all = clopper_pearson_lower(BinomialEvidence::new(100, 100).unwrap(), 0.001).unwrap();
        assert!((all.value() - 0.001f64.powf(0.01)).abs() < 1e-12);
        assert!((all.value() - 0.933_254).abs() < 1e-6);
        let none = clopper_pearson_lower(BinomialEvidence::new(0, 100).unwrap(), 0.05).unwrap();
        assert_eq!(none.value(), 0.0);
        let half = clopper_pearson_lower(BinomialEvidence::new(50, 100).unwrap(), 0.05).unwrap();
        let oracle = cp_by_bisection(100, 50, 0.05);
        assert!((half.value() - oracle).abs() < 1e-6, "{} vs {oracle}", half.value());
        assert!((binom_upper_tail(100, 50, half.value()) - 0.05).abs() < 1e-8);
    }

    #[test]
    fn clopper_pearson_matches_bisection_oracle() {
        for &(n, k, a) in &[(1000, 990, 0.001), (1000, 612, 0.0005), (37, 20, 0.1), (5000, 4999, 0.01)] {
            let got = clopper_pearson_lower(BinomialEvidence::new(k, n).unwrap(), a).unwrap().value();
            let want = cp_by_bisection(n, k, a);
            assert!((got - want).abs() < 1e-6, "n={n} k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn evidence_validation() {
        assert!(BinomialEvidence::new(5, 4).is_err());
        assert!(BinomialEvidence::new(0, 0).is_err());
        assert!(ConfidenceBudget::new(0.01, 0.006, 0.006).is_err());
        let b = ConfidenceBudget::split_evenly(0.002).unwrap();
        assert_eq!(b.alpha_p0, 0.001);
    }

    #[test]
    fn cohen_examples() {
        let v = cohen_bound(0.5, 1.0, 0.3).unwrap().value;
        assert!((v - std_normal_cdf(-0.3)).abs() < 1e-15 && v < 0.5);
        assert!((cohen_bound(0.841_344_7, 1.0, 1.0).unwrap().value - 0.5).abs() < 1e-7);
        assert!((cohen_bound(0.77, 2.0, 0.0).unwrap().value - 0.77).abs() < 1e-12);
        assert!(cohen_bound(1.0, 1.0, 1.0).unwrap().saturated);
        assert_eq!(cohen_radius(0.5, 1.0).unwrap().radius, 0.0);
        assert!(!cohen_radius(0.5, 1.0).unwrap().certifiable);
        assert!((cohen_radius(0.841_344_7, 2.0).unwrap().radius - 2.0).abs() < 1e-6);
        assert!(cohen_radius(0.3, 1.0).unwrap().radius < 0.0);
    }

    #[test]
    fn teng_examples() {
        let v = teng_bound(0.99, 1.0, 0.5).unwrap().value;
        assert!((v - (1.0 - 0.5f64.exp() * 0.01)).abs() < 1e-15);
        assert!((v - 0.983_513_0).abs() < 1e-6);
        let v = teng_bound(0.6, 1.0, 1.0).unwrap().value;
        assert!((v - 0.229_924_7).abs() < 1e-7);
        // both branches meet 1/2 at r = −b ln[2(1 − p0)]
        for &p0 in &[0.6f64, 0.8, 0.95] {
            let r = -(2.0 * (1.0 - p0)).ln();
            let b1 = 1.0 - r.exp() * (1.0 - p0);
            let b2 = 0.5 * (-r - (2.0 * (1.0 - p0)).ln()).exp();
            assert!((b1 - 0.5).abs() < 1e-12 && (b2 - 0.5).abs() < 1e-12);
        }
        assert!((teng_radius(0.75, 1.0).unwrap().radius - 2f64.ln()).abs() < 1e-15);
        assert!(!teng_radius(0.5, 1.0).unwrap().certifiable);
        let capped = teng_radius(1.0, 1.0).unwrap();
        assert!(capped.saturated && capped.radius == RADIUS_CAP);
        let r1 = teng_radius(0.9, 1.0).unwrap().radius;
        let r2 = teng_radius(0.9, 2.0).unwrap().radius;
        assert!((r2 - 2.0 * r1).abs() < 1e-15);
    }

    #[test]
    fn bilateral_examples() {
        let r = gaussian_bilateral_radius(0.8, 0.2, 1.5).unwrap().radius;
        assert!((r - cohen_radius(0.8, 1.5).unwrap().radius).abs() < 1e-12);
        let r = gaussian_bilateral_radius(0.841_344_7, 0.158_655_3, 1.0).unwrap().radius;
        assert!((r - 1.0).abs() < 1e-6);
        assert!(!gaussian_bilateral_radius(0.4, 0.4, 1.0).unwrap().certifiable);
    }

    #[test]
    fn monotonicity() {
        let ps: Vec<f64> = (1..200).map(|i| i as f64 / 200.0).collect();
        let rs: Vec<f64> = (0..60).map(|i| i as f64 * 0.05).collect();
        for &r in &rs {
            let mut prev_c = -1.0;
            let mut prev_t = -1.0;
            for &p in &ps {
                let c = cohen_bound(p, 1.0, r).unwrap().value;
                let t = teng_bound(p, 1.0, r).unwrap().value;
                assert!(c >= prev_c - 1e-15 && t >= prev_t - 1e-15, "p={p} r={r}");
                prev_c = c;
                prev_t = t;
            }
        }
        for &p in &ps {
            let mut prev_c = 2.0;
            let mut prev_t = 2.0;
            for &r in &rs {
                let c = cohen_bound(p, 1.0, r).unwrap().value;
                let t = teng_bound(p, 1.0, r).unwrap().value;
                assert!(c <= prev_c + 1e-15 && t <= prev_t + 1e-15);
                prev_c = c;
                prev_t = t;
            }
        }
    }
}
