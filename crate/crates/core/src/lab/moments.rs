//! Radius moments and thin-shell concentration.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::family::SmoothingFamily;
use crate::stream::RandomStream;
use crate::threat::Norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub parameter: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Radius mean and variance along two one-parameter paths: `σ` varied at
/// `k = 0`, and `k` varied at `σ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanVarianceCurve {
    pub dim: usize,
    pub sigma_curve: Vec<MomentRow>,
    pub k_curve: Vec<MomentRow>,
}

pub fn mean_variance_curve(d: usize, sigma_grid: &[f64], k_grid: &[f64]) -> Result<MeanVarianceCurve> {
    if sigma_grid.is_empty() || k_grid.is_empty() {
        return domain("mean_variance_curve needs non-empty grids");
    }
    let sigma_curve = sigma_grid
        .iter()
        .map(|&s| {
            let st = SmoothingFamily::l2_power_tail(d, 0.0, s)?.radius_stats()?;
            Ok(MomentRow {
                parameter: s,
                mean: st.mean,
                variance: st.variance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k_curve = k_grid
        .iter()
        .map(|&k| {
            let st = SmoothingFamily::l2_power_tail(d, k, 1.0)?.radius_stats()?;
            Ok(MomentRow {
                parameter: k,
                mean: st.mean,
                variance: st.variance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanVarianceCurve {
        dim: d,
        sigma_curve,
        k_curve,
    })
}

impl MeanVarianceCurve {
    /// Least-squares slope of `ln variance` against `ln mean`.
    pub fn loglog_slope(rows: &[MomentRow]) -> f64 {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.mean > 0.0 && r.variance > 0.0)
            .map(|r| (r.mean.ln(), r.variance.ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    }

    /// `variance(at mean = factor·mean₀) / variance₀` along a curve, with
    /// `mean₀` the curve's largest mean and linear interpolation in between.
    pub fn variance_ratio_at_mean_fraction(rows: &[MomentRow], factor: f64) -> Option<f64> {
        let top = rows.iter().max_by(|a, b| a.mean.total_cmp(&b.mean))?;
        let target = factor * top.mean;
        let mut sorted: Vec<&MomentRow> = rows.iter().collect();
        sorted.sort_by(|a, b| a.mean.total_cmp(&b.mean));
        for w in sorted.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.mean <= target && target <= b.mean {
                let t = if b.mean > a.mean { (target - a.mean) / (b.mean - a.mean) } else { 0.0 };
                return Some((a.variance + t * (b.variance - a.variance)) / top.variance);
            }
        }
        None
    }

    /// Long format: `dim,curve,parameter,mean,variance`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dim,curve,parameter,mean,variance")?;
        for (name, rows) in [("sigma", &self.sigma_curve), ("k", &self.k_curve)] {
            for r in rows.iter() {
                writeln!(w, "{},{name},{},{},{}", self.dim, r.parameter, r.mean, r.variance)?;
            }
        }
        Ok(())
    }
}

/// Concentration fractions at one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThinShellRow {
    pub dim: usize,
    pub n: usize,
    /// Gaussian σ = 1: fraction with `‖z‖₂ ∈ √d ± 4`.
    pub gaussian_abs: f64,
    /// Gaussian σ = 1: fraction with `‖z‖₂/√d ∈ 1 ± 0.1`.
    pub gaussian_rel: f64,
    /// Laplacian b = 1: fraction with `‖z‖₁/d ∈ 1 ± 1/√(dδ)`.
    pub laplace_chebyshev: f64,
    /// Laplacian b = 1: fraction with `‖z‖₁/d ∈ 1 ± 0.1`.
    pub laplace_rel: f64,
    pub chebyshev_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinShellReport {
    pub rows: Vec<ThinShellRow>,
    pub gaussian_abs_halfwidth: f64,
    pub relative_halfwidth: f64,
    pub chebyshev_delta: f64,
    pub seed: u64,
    pub stream_id: u64,
}

const ABS_HALFWIDTH: f64 = 4.0;
const REL_HALFWIDTH: f64 = 0.1;

pub fn thin_shell_report(d_list: &[usize], n: usize, chebyshev_delta: f64, stream: &RandomStream) -> Result<ThinShellReport> {
    if n < 10_000 {
        return domain(format!("thin_shell_report needs n >= 1e4, got {n}"));
    }
    if !(chebyshev_delta > 0.0 && chebyshev_delta < 1.0) {
        return domain("chebyshev_delta must lie in (0, 1)");
    }
    let mut rows = Vec::with_capacity(d_list.len());
    for (i, &d) in d_list.iter().enumerate() {
        let df = d as f64;
        let sub = stream.substream(i as u64);
        let g = SmoothingFamily::gaussian(d, 1.0)?;
        let (counts, _) = g.map_chunks(n, &sub.substream(0), |rows, _| {
            let mut c = [0usize; 2];
            for z in rows.chunks_exact(d) {
                let r = Norm::L2.of(z);
                c[0] += usize::from((r - df.sqrt()).abs() <= ABS_HALFWIDTH);
                c[1] += usize::from((r / df.sqrt() - 1.0).abs() <= REL_HALFWIDTH);
            }
            Ok(c)
        })?;
        let (ga, gr) = counts.iter().fold((0, 0), |a, c| (a.0 + c[0], a.1 + c[1]));
        let lap = SmoothingFamily::laplacian(d, 1.0)?;
        let t = 1.0 / (df * chebyshev_delta).sqrt();
        let (counts, _) = lap.map_chunks(n, &sub.substream(1), |rows, _| {
            let mut c = [0usize; 2];
            for z in rows.chunks_exact(d) {
                let r = Norm::L1.of(z) / df;
                c[0] += usize::from((r - 1.0).abs() <= t);
                c[1] += usize::from((r - 1.0).abs() <= REL_HALFWIDTH);
            }
            Ok(c)
        })?;
        let (lc, lr) = counts.iter().fold((0, 0), |a, c| (a.0 + c[0], a.1 + c[1]));
        let nf = n as f64;
        rows.push(ThinShellRow {
            dim: d,
            n,
            gaussian_abs: ga as f64 / nf,
            gaussian_rel: gr as f64 / nf,
            laplace_chebyshev: lc as f64 / nf,
            laplace_rel: lr as f64 / nf,
            chebyshev_delta,
        });
    }
    Ok(ThinShellReport {
        rows,
        gaussian_abs_halfwidth: ABS_HALFWIDTH,
        relative_halfwidth: REL_HALFWIDTH,
        chebyshev_delta,
        seed: stream.seed,
        stream_id: stream.stream_id,
    })
}

impl ThinShellReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dim,n,chebyshev_delta,gaussian_abs,gaussian_rel,laplace_chebyshev,laplace_rel")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.dim, r.n, r.chebyshev_delta, r.gaussian_abs, r.gaussian_rel, r.laplace_chebyshev, r.laplace_rel
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_halving() {
        let c = mean_variance_curve(100, &[1.0, 0.5], &[0.0]).unwrap();
        let (a, b) = (c.sigma_curve[0], c.sigma_curve[1]);
        assert!((b.mean - a.mean / 2.0).abs() < 1e-12);
        assert!((b.variance - a.variance / 4.0).abs() < 1e-12);
        assert!((a.mean - 9.975_031_639_551_05).abs() < 1e-9);
        assert!((MeanVarianceCurve::loglog_slope(&c.sigma_curve) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn k_curve_keeps_variance() {
        let ks: Vec<f64> = (0..=97).map(f64::from).collect();
        let sig: Vec<f64> = (1..=40).map(|i| i as f64 / 40.0).collect();
        let c = mean_variance_curve(100, &sig, &ks).unwrap();
        for w in c.k_curve.windows(2) {
            assert!(w[1].mean < w[0].mean);
        }
        let rk = MeanVarianceCurve::variance_ratio_at_mean_fraction(&c.k_curve, 0.5).unwrap();
        let rs = MeanVarianceCurve::variance_ratio_at_mean_fraction(&c.sigma_curve, 0.5).unwrap();
        assert!((rs - 0.25).abs() < 1e-3, "{rs}");
        assert!(rk > rs, "{rk} vs {rs}");
    }

    #[test]
    fn moments_match_sampler() {
        let fam = SmoothingFamily::l2_power_tail(100, 50.0, 1.0).unwrap();
        let st = fam.radius_stats().unwrap();
        let n = 1_000_000;
        let (sums, _) = fam
            .map_chunks(n, &RandomStream::new(8, 8), |rows, _| {
                let mut s = [0.0; 2];
                for z in rows.chunks_exact(100) {
                    let r = Norm::L2.of(z);
                    s[0] += r;
                    s[1] += r * r;
                }
                Ok(s)
            })
            .unwrap();
        let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, s| (a.0 + s[0], a.1 + s[1]));
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let se = (st.variance / n as f64).sqrt();
        assert!((mean - st.mean).abs() < 3.0 * se, "{mean} vs {}", st.mean);
        // the variance of r² is ≈ 4·mean²·var for a concentrated radius
        let se_var = (2.0 * st.variance * st.variance / n as f64).sqrt() * 2.0;
        assert!((var - st.variance).abs() < 3.0 * se_var, "{var} vs {}", st.variance);
    }

    #[test]
    fn thin_shell() {
        let r = thin_shell_report(&[1, 1000], 20_000, 0.05, &RandomStream::new(4, 0)).unwrap();
        let hi = r.rows[1];
        assert!(hi.gaussian_abs >= 0.99 && hi.laplace_chebyshev >= 0.95 && hi.gaussian_rel > 0.99);
        let lo = r.rows[0];
        assert!(lo.gaussian_rel < 0.2 && lo.laplace_rel < 0.2);
        assert!(thin_shell_report(&[3], 100, 0.05, &RandomStream::new(4, 0)).is_err());
    }
}
