//! Black-box hard-label classifiers.

mod exact;
mod external;
mod synthetic;

use rayon::prelude::*;

pub use exact::exact_smoothed_value;
pub use external::{ExternalClassifier, ExternalSpec, DEFAULT_BATCH_SIZE, DEFAULT_TIMEOUT_MS};
pub use synthetic::SyntheticClassifier;

use crate::bounds::BinomialEvidence;
use crate::error::{domain, Result};
use crate::family::{SampleBatch, SmoothingFamily, CHUNK_ROWS};
use crate::stream::RandomStream;

/// A binary classifier `f♯: R^d → {0, 1}`.
pub trait Classifier {
    /// Input dimension, if the classifier fixes one.
    fn input_dim(&self) -> Option<usize>;

    /// Labels for `points.len() / dim` row-major points.
    fn evaluate(&mut self, points: &[f64], dim: usize) -> Result<Vec<u8>>;

    fn evaluate_batch(&mut self, batch: &SampleBatch) -> Result<Vec<u8>> {
        self.evaluate(&batch.points, batch.dim)
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn input_dim(&self) -> Option<usize> {
        (**self).input_dim()
    }

    fn evaluate(&mut self, points: &[f64], dim: usize) -> Result<Vec<u8>> {
        (**self).evaluate(points, dim)
    }
}

pub(crate) fn check_points(points: &[f64], dim: usize, expected: Option<usize>) -> Result<usize> {
    if dim == 0 || points.len() % dim != 0 {
        return domain(format!("point buffer of length {} is not a whole number of {dim}-vectors", points.len()));
    }
    if let Some(e) = expected {
        if e != dim {
            return domain(format!("dimension mismatch: classifier expects {e}, points have {dim}"));
        }
    }
    Ok(points.len() / dim)
}

/// Chunks generated in parallel before being handed to the classifier.
const CHUNKS_PER_ROUND: usize = 16;

/// Counts `f♯(x0 + z_i) = 1` over `n` draws `z_i ~ π0`.
///
/// Dimensions are checked before any sample is drawn.
pub fn success_counts<C: Classifier + ?Sized>(
    classifier: &mut C,
    x0: &[f64],
    family: &SmoothingFamily,
    n: usize,
    stream: &RandomStream,
) -> Result<BinomialEvidence> {
    let d = family.dim();
    if x0.len() != d {
        return domain(format!("dimension mismatch: x0 has {} entries, family has dimension {d}", x0.len()));
    }
    if let Some(e) = classifier.input_dim() {
        if e != d {
            return domain(format!("dimension mismatch: classifier expects {e}, family has dimension {d}"));
        }
    }
    if n == 0 {
        return domain("success_counts needs at least one sample");
    }
    let n_chunks = n.div_ceil(CHUNK_ROWS);
    let mut successes = 0u64;
    for first in (0..n_chunks).step_by(CHUNKS_PER_ROUND) {
        let last = (first + CHUNKS_PER_ROUND).min(n_chunks);
        let bufs: Vec<Result<Vec<f64>>> = (first..last)
            .into_par_iter()
            .map(|c| {
                let (mut buf, _) = family.sample_chunk(c, n, stream)?;
                for row in buf.chunks_exact_mut(d) {
                    row.iter_mut().zip(x0).for_each(|(z, x)| *z += x);
                }
                Ok(buf)
            })
            .collect();
        for buf in bufs {
            let buf = buf?;
            let labels = classifier.evaluate(&buf, d)?;
            if labels.len() != buf.len() / d {
                return Err(crate::Error::Transport(format!(
                    "classifier returned {} labels for {} points",
                    labels.len(),
                    buf.len() / d
                )));
            }
            successes += labels.iter().map(|&l| u64::from(l == 1)).sum::<u64>();
        }
    }
    BinomialEvidence::new(successes, n as u64)
}
