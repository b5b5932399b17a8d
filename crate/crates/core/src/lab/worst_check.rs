//! Brute-force check of the worst-case shift on a grid over the threat ball.

use std::io::Write;

use serde::Serialize;

use crate::discrepancy::{discrepancy_quadrature_many, worst_delta, QuadratureSpec};
use crate::error::{domain, Result};
use crate::family::SmoothingFamily;
use crate::threat::{Norm, ThreatModel};

/// Quadrature agreement required between the grid maximum and the predicted
/// shift.
pub const GRID_CHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct WorstDeltaCheckRow {
    pub lambda: f64,
    pub predicted: Vec<f64>,
    pub predicted_value: f64,
    pub grid_max_value: f64,
    pub grid_max_location: Vec<f64>,
    /// `grid max − predicted value`; it should be `≤ 0`.
    pub max_excess: f64,
    /// `predicted value − max over strictly interior points`.
    pub interior_margin: f64,
    /// ℓ2 threats: spread of the values on the boundary circle.
    pub boundary_spread: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstDeltaCheckReport {
    pub family: SmoothingFamily,
    pub threat: ThreatModel,
    pub resolution: usize,
    pub tolerance: f64,
    pub points_evaluated: usize,
    pub rows: Vec<WorstDeltaCheckRow>,
    pub passed: bool,
}

fn candidate_shifts(threat: &ThreatModel, res: usize) -> Vec<([f64; 2], bool)> {
    let r = threat.radius;
    let mut out = Vec::new();
    let ri = res as i64;
    for i in -ri..=ri {
        for j in -ri..=ri {
            let v = [r * i as f64 / res as f64, r * j as f64 / res as f64];
            let n = threat.norm.of(&v);
            if n <= r * (1.0 + 1e-12) {
                let boundary = n >= r * (1.0 - 1e-12);
                out.push((v, boundary));
            }
        }
    }
    if threat.norm == Norm::L2 {
        let m = 8 * res;
        for t in 0..m {
            let a = 2.0 * std::f64::consts::PI * t as f64 / m as f64;
            out.push(([r * a.cos(), r * a.sin()], true));
        }
    }
    out
}

/// Evaluates `D(λπ0 ‖ π_δ)` by quadrature on a `(2·res + 1)²` lattice over
/// the threat ball (plus boundary points for ℓ2) and compares the maximum
/// with the shift predicted by [`worst_delta`].
pub fn worst_delta_grid_check(
    family: &SmoothingFamily,
    threat: &ThreatModel,
    lambdas: &[f64],
    resolution: usize,
) -> Result<WorstDeltaCheckReport> {
    if family.dim() != 2 {
        return domain(format!("worst_delta_grid_check runs at d = 2, got d = {}", family.dim()));
    }
    if resolution == 0 || lambdas.is_empty() {
        return domain("worst_delta_grid_check needs a positive resolution and at least one λ");
    }
    threat.validate()?;
    let wd = worst_delta(threat, family)?;
    let mut spec = QuadratureSpec::for_dim(2);
    // one fixed domain so every shift is integrated on the same nodes
    let probe = discrepancy_domain(family, threat);
    spec.half_width = Some(probe);

    let predicted_vals = discrepancy_quadrature_many(family, &wd.vector, lambdas, &spec)?;
    let shifts = candidate_shifts(threat, resolution);
    let vals = shifts
        .iter()
        .map(|(v, _)| discrepancy_quadrature_many(family, v, lambdas, &spec))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(lambdas.len());
    for (li, &lambda) in lambdas.iter().enumerate() {
        let pv = predicted_vals[li];
        let (mut best, mut best_at) = (f64::NEG_INFINITY, [0.0; 2]);
        let mut interior = f64::NEG_INFINITY;
        let (mut bmin, mut bmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for ((v, on_boundary), vs) in shifts.iter().zip(&vals) {
            let x = vs[li];
            if x > best {
                best = x;
                best_at = *v;
            }
            if *on_boundary {
                bmin = bmin.min(x);
                bmax = bmax.max(x);
            } else {
                interior = interior.max(x);
            }
        }
        let boundary_spread = (threat.norm == Norm::L2).then_some(bmax - bmin);
        let max_excess = best - pv;
        let interior_margin = pv - interior;
        let passed = max_excess <= GRID_CHECK_TOLERANCE
            && interior_margin >= -GRID_CHECK_TOLERANCE
            && boundary_spread.is_none_or(|s| s <= GRID_CHECK_TOLERANCE);
        rows.push(WorstDeltaCheckRow {
            lambda,
            predicted: wd.vector.clone(),
            predicted_value: pv,
            grid_max_value: best,
            grid_max_location: best_at.to_vec(),
            max_excess,
            interior_margin,
            boundary_spread,
            passed,
        });
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(WorstDeltaCheckReport {
        family: *family,
        threat: *threat,
        resolution,
        tolerance: GRID_CHECK_TOLERANCE,
        points_evaluated: shifts.len() + 1,
        rows,
        passed,
    })
}

fn discrepancy_domain(family: &SmoothingFamily, threat: &ThreatModel) -> f64 {
    use crate::family::Variant;
    let tail = match family.variant() {
        Variant::Laplacian { b } | Variant::L1PowerTail { b, .. } => 45.0 * b,
        v => 9.5 * v.scale(),
    };
    let k = family.variant().k();
    // the radial rule measures its outer radius in ℓ2
    let reach = if k > 0.0 { tail * 2f64.sqrt() } else { tail };
    reach + threat.radius * 2f64.sqrt()
}

impl WorstDeltaCheckReport {
    /// `family,k,scale,threat_norm,threat_radius,resolution,lambda,predicted_value,grid_max_value,grid_max_x,grid_max_y,max_excess,interior_margin,boundary_spread,passed`
    pub fn write_csv<W: Write>(&self, mut w: W, header: bool) -> Result<()> {
        if header {
            writeln!(
                w,
                "family,k,scale,threat_norm,threat_radius,resolution,lambda,predicted_value,grid_max_value,grid_max_x,grid_max_y,max_excess,interior_margin,boundary_spread,passed"
            )?;
        }
        let v = self.family.variant();
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                v.tag(),
                v.k(),
                v.scale(),
                self.threat.norm,
                self.threat.radius,
                self.resolution,
                r.lambda,
                r.predicted_value,
                r.grid_max_value,
                r.grid_max_location[0],
                r.grid_max_location[1],
                r.max_excess,
                r.interior_margin,
                r.boundary_spread.map_or(String::new(), |s| s.to_string()),
                r.passed
            )?;
        }
        Ok(())
    }
}
