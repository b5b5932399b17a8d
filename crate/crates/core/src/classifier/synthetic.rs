use serde::{Deserialize, Serialize};

use super::{check_points, Classifier};
use crate::error::{domain, Result};
use crate::threat::Norm;

/// Deterministic in-process classifiers with known ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticClassifier {
    /// `f♯ ≡ label`.
    Constant { label: u8 },
    /// `I(‖x − center‖ ≤ radius)`.
    BallIndicator { norm: Norm, center: Vec<f64>, radius: f64 },
    /// `I(w·x ≥ c)`.
    Halfspace { w: Vec<f64>, c: f64 },
}

impl SyntheticClassifier {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { label } if *label > 1 => domain(format!("constant label must be 0 or 1, got {label}")),
            Self::BallIndicator { center, radius, .. } => {
                if center.is_empty() {
                    return domain("ball center must be non-empty");
                }
                if !(*radius >= 0.0) {
                    return domain(format!("ball radius must be >= 0, got {radius}"));
                }
                Ok(())
            }
            Self::Halfspace { w, c } => {
                if w.is_empty() || !c.is_finite() {
                    return domain("halfspace needs a non-empty normal and finite offset");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self, x: &[f64]) -> u8 {
        match self {
            Self::Constant { label } => *label,
            Self::BallIndicator { norm, center, radius } => {
                let dist = match norm {
                    Norm::L1 => x.iter().zip(center).map(|(a, b)| (a - b).abs()).sum(),
                    Norm::L2 => x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
                    Norm::Linf => x.iter().zip(center).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs())),
                };
                u8::from(dist <= *radius)
            }
            Self::Halfspace { w, c } => u8::from(w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() >= *c),
        }
    }
}

impl Classifier for SyntheticClassifier {
    fn input_dim(&self) -> Option<usize> {
        match self {
            Self::Constant { .. } => None,
            Self::BallIndicator { center, .. } => Some(center.len()),
            Self::Halfspace { w, .. } => Some(w.len()),
        }
    }

    fn evaluate(&mut self, points: &[f64], dim: usize) -> Result<Vec<u8>> {
        self.validate()?;
        check_points(points, dim, self.input_dim())?;
        Ok(points.chunks_exact(dim).map(|x| self.label(x)).collect())
    }
}
