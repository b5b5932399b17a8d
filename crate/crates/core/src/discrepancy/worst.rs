use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{SmoothingFamily, Variant};
use crate::threat::{Norm, ThreatModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorstDeltaRationale {
    /// Spherical family, ℓ2 threat: any boundary point; the first axis is used.
    L2Boundary,
    /// ℓ1 family, ℓ1 threat: a vertex `[r, 0, …, 0]` of the cross-polytope.
    L1Boundary,
    /// ℓ∞-type family, ℓ∞ threat: the cube vertex `[r, …, r]`.
    LinfVertex,
    /// Spherical family, ℓ∞ threat: equivalent to an ℓ2 threat of radius `√d·r`.
    LinfViaL2Equivalence,
}

/// The perturbation attaining `max_{δ ∈ B} D(λπ0 ‖ π_δ)` for every `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstDelta {
    pub vector: Vec<f64>,
    pub rationale: WorstDeltaRationale,
}

fn axis(d: usize, r: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[0] = r;
    v
}

pub fn worst_delta(threat: &ThreatModel, family: &SmoothingFamily) -> Result<WorstDelta> {
    let d = family.dim();
    let r = threat.radius;
    let v = family.variant();
    let (vector, rationale) = match (threat.norm, v) {
        (Norm::L1, Variant::Laplacian { .. } | Variant::L1PowerTail { .. }) => (axis(d, r), WorstDeltaRationale::L1Boundary),
        (Norm::L2, Variant::Gaussian { .. } | Variant::L2PowerTail { .. }) => (axis(d, r), WorstDeltaRationale::L2Boundary),
        (Norm::Linf, Variant::MixedNorm { .. } | Variant::LinfPure { .. }) => (vec![r; d], WorstDeltaRationale::LinfVertex),
        (Norm::Linf, Variant::Gaussian { .. } | Variant::L2PowerTail { .. }) => {
            (axis(d, (d as f64).sqrt() * r), WorstDeltaRationale::LinfViaL2Equivalence)
        }
        (norm, _) => {
            return Err(Error::Unsupported(format!(
                "no worst-case perturbation result for a {norm} threat with the {} family; \
                 supported pairs are l1 with laplacian/l1_power_tail, l2 with gaussian/l2_power_tail, \
                 linf with mixed_norm/linf_pure/gaussian/l2_power_tail",
                v.tag()
            )))
        }
    };
    Ok(WorstDelta { vector, rationale })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proven_cases() {
        let g3 = SmoothingFamily::gaussian(3, 1.0).unwrap();
        let w = worst_delta(&ThreatModel::new(Norm::L2, 0.5).unwrap(), &g3).unwrap();
        assert_eq!(w.vector, vec![0.5, 0.0, 0.0]);
        assert_eq!(w.rationale, WorstDeltaRationale::L2Boundary);

        let m4 = SmoothingFamily::mixed_norm(4, 1.0, 1.0).unwrap();
        let w = worst_delta(&ThreatModel::new(Norm::Linf, 0.1).unwrap(), &m4).unwrap();
        assert_eq!(w.vector, vec![0.1; 4]);

        let g4 = SmoothingFamily::gaussian(4, 1.0).unwrap();
        let w = worst_delta(&ThreatModel::new(Norm::Linf, 0.1).unwrap(), &g4).unwrap();
        assert_eq!(w.rationale, WorstDeltaRationale::LinfViaL2Equivalence);
        assert!((w.vector[0] - 0.2).abs() < 1e-15);
        assert!((Norm::L2.of(&w.vector) - 0.2).abs() < 1e-15);

        let l = SmoothingFamily::l1_power_tail(3, 1.0, 1.0).unwrap();
        let w = worst_delta(&ThreatModel::new(Norm::L1, 0.3).unwrap(), &l).unwrap();
        assert_eq!(w.vector, vec![0.3, 0.0, 0.0]);
    }

    #[test]
    fn unsupported_pairs() {
        let m = SmoothingFamily::mixed_norm(4, 1.0, 1.0).unwrap();
        let err = worst_delta(&ThreatModel::new(Norm::L1, 0.1).unwrap(), &m).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        let l = SmoothingFamily::laplacian(4, 1.0).unwrap();
        assert!(worst_delta(&ThreatModel::new(Norm::L2, 0.1).unwrap(), &l).is_err());
    }
}
