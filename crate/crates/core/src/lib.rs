//! Certified robustness bounds for randomized smoothing via a functional dual.
//!
//! The engine lower-bounds the worst-case value of a smoothed binary classifier
//! over a norm ball of perturbations by maximizing
//! `λ·p0 − max_δ D(λπ0 ‖ π_δ)` over `λ ≥ 0`, where the discrepancy
//! `D(λπ0 ‖ π_δ) = ∫ (λπ0(z) − π_δ(z))₊ dz` is estimated by Monte Carlo with a
//! rigorous one-sided error. It works for any black-box classifier and any of
//! the supported smoothing families, including the power-tail and mixed-norm
//! families that have no closed-form certificate.

pub mod bounds;
pub mod classifier;
pub mod discrepancy;
pub mod error;
pub mod family;
pub mod lab;
pub mod numeric;
pub mod pipeline;
pub mod stream;
pub mod threat;

pub use bounds::{BinomialEvidence, ConfidenceBudget};
pub use classifier::{Classifier, ExternalClassifier, SyntheticClassifier};
pub use discrepancy::{DiscrepancyEstimate, DualBoundResult, LambdaGrid, WorstDelta};
pub use error::{Error, Result};
pub use family::{RadiusStats, SampleBatch, SmoothingFamily, Variant};
pub use numeric::Probability;
pub use pipeline::{Certificate, CertificateStatus};
pub use stream::RandomStream;
pub use threat::{Norm, ThreatModel};

/// Engine version embedded in every serialized artifact.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
