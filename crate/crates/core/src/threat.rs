use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Vector norms used by threat models and smoothing kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The perturbation set `{δ : ‖δ‖ ≤ radius}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreatModel {
    pub norm: Norm,
    pub radius: f64,
}

impl ThreatModel {
    pub fn new(norm: Norm, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return domain(format!("threat radius must be finite and >= 0, got {radius}"));
        }
        Ok(Self { norm, radius })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.norm, self.radius).map(|_| ())
    }
}
