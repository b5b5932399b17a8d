//! Accuracy/robustness trade-off across smoothing configurations.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{success_counts, SyntheticClassifier};
use crate::discrepancy::{worst_delta, RatioSample};
use crate::error::{domain, Result};
use crate::family::{SmoothingFamily, Variant};
use crate::stream::RandomStream;
use crate::threat::ThreatModel;

/// The `λ` at which robustness is measured (the total-variation slice).
pub const ROBUSTNESS_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub family: &'static str,
    pub k: f64,
    pub scale: f64,
    /// Monte Carlo `E f♯(x0 + z)`.
    pub accuracy: f64,
    pub accuracy_se: f64,
    /// Monte Carlo `D(π0 ‖ π_δ*)`.
    pub robustness: f64,
    pub robustness_se: f64,
    /// Not dominated by another point of the same family.
    pub frontier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoReport {
    pub dim: usize,
    pub threat: ThreatModel,
    pub truth: SyntheticClassifier,
    pub x0: Vec<f64>,
    pub n: usize,
    pub robustness_lambda: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub points: Vec<ParetoPoint>,
}

/// Every valid family of kind `tag` over the `k × scale` grid. Kinds without
/// a `k` parameter ignore `ks`; invalid combinations are skipped.
pub fn family_grid(tag: &str, d: usize, ks: &[f64], scales: &[f64]) -> Result<Vec<SmoothingFamily>> {
    let ks = if matches!(tag, "gaussian" | "laplacian") { &[0.0][..] } else { ks };
    let mut out = Vec::new();
    for &k in ks {
        for &s in scales {
            let v = match tag {
                "gaussian" => Variant::Gaussian { sigma: s },
                "laplacian" => Variant::Laplacian { b: s },
                "l2_power_tail" => Variant::L2PowerTail { k, sigma: s },
                "l1_power_tail" => Variant::L1PowerTail { k, b: s },
                "linf_pure" => Variant::LinfPure { k, sigma: s },
                "mixed_norm" => Variant::MixedNorm { k, sigma: s },
                other => return domain(format!("unknown family kind {other:?}")),
            };
            if let Ok(f) = SmoothingFamily::new(d, v) {
                out.push(f);
            }
        }
    }
    Ok(out)
}

/// `count` log-spaced values on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

pub fn pareto_sweep(
    truth: &SyntheticClassifier,
    x0: &[f64],
    threat: &ThreatModel,
    families: &[SmoothingFamily],
    n: usize,
    stream: &RandomStream,
) -> Result<ParetoReport> {
    let d = x0.len();
    if families.is_empty() {
        return domain("pareto_sweep needs at least one configuration");
    }
    if let Some(f) = families.iter().find(|f| f.dim() != d) {
        return domain(format!("family dimension {} does not match x0 dimension {d}", f.dim()));
    }
    threat.validate()?;
    truth.validate()?;
    let points = families
        .par_iter()
        .enumerate()
        .map(|(i, fam)| {
            let sub = stream.substream(i as u64);
            let mut f = truth.clone();
            let ev = success_counts(&mut f, x0, fam, n, &sub.substream(0))?;
            let acc = ev.successes as f64 / n as f64;
            let wd = worst_delta(threat, fam)?;
            let sample = RatioSample::draw(fam, &wd.vector, n, &sub.substream(1))?;
            let (rob, rob_se) = sample.mean_and_std_err(ROBUSTNESS_LAMBDA);
            let v = fam.variant();
            Ok(ParetoPoint {
                family: v.tag(),
                k: v.k(),
                scale: v.scale(),
                accuracy: acc,
                accuracy_se: (acc * (1.0 - acc) / n as f64).sqrt(),
                robustness: rob,
                robustness_se: rob_se,
                frontier: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ParetoReport {
        dim: d,
        threat: *threat,
        truth: truth.clone(),
        x0: x0.to_vec(),
        n,
        robustness_lambda: ROBUSTNESS_LAMBDA,
        seed: stream.seed,
        stream_id: stream.stream_id,
        points,
    };
    report.mark_frontiers();
    Ok(report)
}

fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.accuracy >= b.accuracy && a.robustness <= b.robustness && (a.accuracy > b.accuracy || a.robustness < b.robustness)
}

/// Outcome of comparing two family frontiers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceCheck {
    pub dominant: String,
    pub other: String,
    /// Robustness interval covered by both frontiers.
    pub shared_range: (f64, f64),
    pub min_accuracy: f64,
    pub checked: usize,
    /// Largest guard-adjusted accuracy shortfall; `≤ 0` means dominance holds.
    pub worst_shortfall: f64,
    pub holds: bool,
}

impl ParetoReport {
    pub fn mark_frontiers(&mut self) {
        let snapshot = self.points.clone();
        for p in self.points.iter_mut() {
            p.frontier = !snapshot.iter().any(|q| q.family == p.family && dominates(q, p));
        }
    }

    pub fn frontier(&self, tag: &str) -> Vec<ParetoPoint> {
        let mut f: Vec<ParetoPoint> = self.points.iter().filter(|p| p.family == tag && p.frontier).copied().collect();
        f.sort_by(|a, b| a.robustness.total_cmp(&b.robustness));
        f
    }

    /// Weak dominance of family `a`'s frontier over family `b`'s on the
    /// robustness range both cover. `a`'s frontier is read as the
    /// piecewise-linear curve through its points; every frontier point of `b`
    /// must sit no higher than that curve, up to `guard_se` combined standard
    /// errors. The shortfall is `b`'s accuracy minus the curve at the same
    /// robustness. Points of `b` with accuracy below `min_accuracy` are skipped.
    pub fn frontier_dominance(&self, a: &str, b: &str, guard_se: f64, min_accuracy: f64) -> DominanceCheck {
        let fa = self.frontier(a);
        let fb: Vec<ParetoPoint> = self.frontier(b).into_iter().filter(|q| q.accuracy >= min_accuracy).collect();
        let range = |f: &[ParetoPoint]| (f.first().map_or(f64::NAN, |p| p.robustness), f.last().map_or(f64::NAN, |p| p.robustness));
        let (alo, ahi) = range(&fa);
        let (blo, bhi) = range(&fb);
        let (lo, hi) = (alo.max(blo), ahi.min(bhi));
        let mut checked = 0;
        let mut worst = f64::NEG_INFINITY;
        for q in fb.iter().filter(|q| q.robustness >= lo && q.robustness <= hi) {
            checked += 1;
            let j = fa.partition_point(|p| p.robustness < q.robustness).min(fa.len() - 1);
            let right = fa[j];
            let left = fa[j.saturating_sub(1)];
            let (acc, se) = if right.robustness <= left.robustness {
                (right.accuracy, right.accuracy_se)
            } else {
                let t = ((q.robustness - left.robustness) / (right.robustness - left.robustness)).clamp(0.0, 1.0);
                (left.accuracy + t * (right.accuracy - left.accuracy), left.accuracy_se.max(right.accuracy_se))
            };
            let shortfall = q.accuracy - acc - guard_se * (se.powi(2) + q.accuracy_se.powi(2)).sqrt();
            worst = worst.max(shortfall);
        }
        DominanceCheck {
            dominant: a.to_string(),
            other: b.to_string(),
            shared_range: (lo, hi),
            min_accuracy,
            checked,
            worst_shortfall: worst,
            holds: checked > 0 && worst <= 0.0,
        }
    }

    /// Long format with the configuration repeated on every row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "dim,threat_norm,threat_radius,robustness_lambda,n,family,k,scale,accuracy,accuracy_se,robustness,robustness_se,frontier"
        )?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.dim,
                self.threat.norm,
                self.threat.radius,
                self.robustness_lambda,
                self.n,
                p.family,
                p.k,
                p.scale,
                p.accuracy,
                p.accuracy_se,
                p.robustness,
                p.robustness_se,
                p.frontier
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threat::Norm;

    fn ball(d: usize) -> SyntheticClassifier {
        SyntheticClassifier::BallIndicator {
            norm: Norm::L2,
            center: vec![0.0; d],
            radius: 0.65,
        }
    }

    #[test]
    fn limits() {
        let d = 5;
        let threat = ThreatModel::new(Norm::L2, 0.2).unwrap();
        let fams = vec![
            SmoothingFamily::gaussian(d, 1e-3).unwrap(),
            SmoothingFamily::gaussian(d, 100.0).unwrap(),
        ];
        let r = pareto_sweep(&ball(d), &[0.0; 5], &threat, &fams, 20_000, &RandomStream::new(1, 0)).unwrap();
        let (tiny, huge) = (r.points[0], r.points[1]);
        assert!(tiny.accuracy == 1.0 && tiny.robustness > 0.999);
        assert!(huge.accuracy < 1e-3 && huge.robustness < 0.01);
        assert!(tiny.frontier && huge.frontier);
    }

    #[test]
    fn frontier_flags_are_consistent() {
        let d = 3;
        let threat = ThreatModel::new(Norm::L2, 0.2).unwrap();
        let fams = family_grid("l2_power_tail", d, &[0.0, 0.5, 1.0, 1.5], &log_grid(0.1, 2.0, 6)).unwrap();
        assert_eq!(fams.len(), 24);
        let r = pareto_sweep(&ball(d), &[0.0; 3], &threat, &fams, 5_000, &RandomStream::new(2, 0)).unwrap();
        for p in r.points.iter().filter(|p| p.frontier) {
            assert!(!r.points.iter().any(|q| q.family == p.family && dominates(q, p)));
        }
        assert!(r.points.iter().any(|p| !p.frontier));
        // a frontier trivially dominates itself
        assert!(r.frontier_dominance("l2_power_tail", "l2_power_tail", 2.0, 0.0).holds);
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 25);
    }

    #[test]
    fn grids() {
        assert_eq!(family_grid("gaussian", 2, &[0.0, 1.0], &[0.5, 1.0]).unwrap().len(), 2);
        // k = 4 is invalid at d = 5 and skipped
        assert_eq!(family_grid("linf_pure", 5, &[0.0, 4.0], &[1.0]).unwrap().len(), 1);
        assert!(family_grid("nope", 2, &[0.0], &[1.0]).is_err());
        let g = log_grid(0.05, 2.0, 5);
        assert!((g[0] - 0.05).abs() < 1e-15 && (g[4] - 2.0).abs() < 1e-12);
    }
}
