//! Smoothing distributions.
//!
//! Six families are supported, all of the form
//! `π0(z) ∝ ‖z‖_a^{−k} · exp(−g(z))`:
//!
//! | variant        | power norm | exponent `g(z)`          |
//! |----------------|------------|--------------------------|
//! | `Gaussian`     | –          | `‖z‖₂² / 2σ²`            |
//! | `Laplacian`    | –          | `‖z‖₁ / b`               |
//! | `L2PowerTail`  | `‖z‖₂`     | `‖z‖₂² / 2σ²`            |
//! | `L1PowerTail`  | `‖z‖₁`     | `‖z‖₁ / b`               |
//! | `LinfPure`     | `‖z‖∞`     | `‖z‖∞² / 2σ²`            |
//! | `MixedNorm`    | `‖z‖∞`     | `‖z‖₂² / 2σ²`            |
//!
//! Only unnormalized log-densities are exposed; consumers work with density
//! ratios, where normalization cancels.

use std::io::Write;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numeric::{gamma_sample, log_gamma};
use crate::stream::RandomStream;
use crate::threat::Norm;

/// Rows generated per independently seeded chunk. Fixed so that results do not
/// depend on the number of worker threads.
pub const CHUNK_ROWS: usize = 4096;

/// Mixed-norm rejection aborts once this many proposals have been made with an
/// acceptance rate below [`MIN_ACCEPTANCE_RATE`].
pub const ABORT_MIN_PROPOSALS: u64 = 100_000;
pub const MIN_ACCEPTANCE_RATE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    Gaussian { sigma: f64 },
    Laplacian { b: f64 },
    L2PowerTail { k: f64, sigma: f64 },
    L1PowerTail { k: f64, b: f64 },
    LinfPure { k: f64, sigma: f64 },
    MixedNorm { k: f64, sigma: f64 },
}

impl Variant {
    pub fn tag(&self) -> &'static str {
        match self {
            Variant::Gaussian { .. } => "gaussian",
            Variant::Laplacian { .. } => "laplacian",
            Variant::L2PowerTail { .. } => "l2_power_tail",
            Variant::L1PowerTail { .. } => "l1_power_tail",
            Variant::LinfPure { .. } => "linf_pure",
            Variant::MixedNorm { .. } => "mixed_norm",
        }
    }

    /// Tail exponent `k` (zero for Gaussian and Laplacian).
    pub fn k(&self) -> f64 {
        match *self {
            Variant::Gaussian { .. } | Variant::Laplacian { .. } => 0.0,
            Variant::L2PowerTail { k, .. }
            | Variant::L1PowerTail { k, .. }
            | Variant::LinfPure { k, .. }
            | Variant::MixedNorm { k, .. } => k,
        }
    }

    /// The scale parameter, `σ` or `b`.
    pub fn scale(&self) -> f64 {
        match *self {
            Variant::Gaussian { sigma }
            | Variant::L2PowerTail { sigma, .. }
            | Variant::LinfPure { sigma, .. }
            | Variant::MixedNorm { sigma, .. } => sigma,
            Variant::Laplacian { b } | Variant::L1PowerTail { b, .. } => b,
        }
    }
}

/// Which norm the exponential factor uses, and whether it is squared.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Exponent {
    SquaredL2,
    SquaredLinf,
    L1,
}

#[derive(Debug, Clone, Copy)]
struct Kernel {
    power_norm: Norm,
    k: f64,
    exponent: Exponent,
    // g(z) = exponent(z) / denom
    denom: f64,
}

/// A smoothing distribution `π0` on `R^d`. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilySpec", into = "FamilySpec")]
pub struct SmoothingFamily {
    dim: usize,
    variant: Variant,
}

/// Serialized form: `{"kind": "...", "dimension": d, ...parameters}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FamilySpec {
    Gaussian { dimension: usize, sigma: f64 },
    Laplacian { dimension: usize, b: f64 },
    L2PowerTail { dimension: usize, k: f64, sigma: f64 },
    L1PowerTail { dimension: usize, k: f64, b: f64 },
    LinfPure { dimension: usize, k: f64, sigma: f64 },
    MixedNorm { dimension: usize, k: f64, sigma: f64 },
}

impl TryFrom<FamilySpec> for SmoothingFamily {
    type Error = String;
    fn try_from(spec: FamilySpec) -> Result<Self, String> {
        let (dim, variant) = match spec {
            FamilySpec::Gaussian { dimension, sigma } => (dimension, Variant::Gaussian { sigma }),
            FamilySpec::Laplacian { dimension, b } => (dimension, Variant::Laplacian { b }),
            FamilySpec::L2PowerTail { dimension, k, sigma } => (dimension, Variant::L2PowerTail { k, sigma }),
            FamilySpec::L1PowerTail { dimension, k, b } => (dimension, Variant::L1PowerTail { k, b }),
            FamilySpec::LinfPure { dimension, k, sigma } => (dimension, Variant::LinfPure { k, sigma }),
            FamilySpec::MixedNorm { dimension, k, sigma } => (dimension, Variant::MixedNorm { k, sigma }),
        };
        SmoothingFamily::new(dim, variant).map_err(|e| match e {
            Error::Domain(m) => m,
            e => e.to_string(),
        })
    }
}

impl From<SmoothingFamily> for FamilySpec {
    fn from(f: SmoothingFamily) -> Self {
        let dimension = f.dim;
        match f.variant {
            Variant::Gaussian { sigma } => FamilySpec::Gaussian { dimension, sigma },
            Variant::Laplacian { b } => FamilySpec::Laplacian { dimension, b },
            Variant::L2PowerTail { k, sigma } => FamilySpec::L2PowerTail { dimension, k, sigma },
            Variant::L1PowerTail { k, b } => FamilySpec::L1PowerTail { dimension, k, b },
            Variant::LinfPure { k, sigma } => FamilySpec::LinfPure { dimension, k, sigma },
            Variant::MixedNorm { k, sigma } => FamilySpec::MixedNorm { dimension, k, sigma },
        }
    }
}

/// Summary statistics of the radius `‖z‖` (in the family's own radial norm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusStats {
    pub mode: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Counters from the mixed-norm direction rejection sampler.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerTelemetry {
    pub proposals: u64,
    pub accepted: u64,
}

impl SamplerTelemetry {
    pub fn merge(&mut self, other: SamplerTelemetry) {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

impl SmoothingFamily {
    /// Validates parameters: scales finite and positive, `k ≥ 0`, and for
    /// `k > 0` the tail exponent must satisfy `k < d − 1` (`k < d` for the
    /// mixed-norm family, whose density only needs `‖z‖∞^{−k}` integrable).
    pub fn new(dim: usize, variant: Variant) -> Result<Self> {
        if dim == 0 {
            return domain("dimension must be at least 1");
        }
        let scale = variant.scale();
        if !(scale > 0.0) || !scale.is_finite() {
            return domain(format!("{}: scale parameter must be finite and > 0, got {scale}", variant.tag()));
        }
        let k = variant.k();
        if !(k >= 0.0) || !k.is_finite() {
            return domain(format!("{}: k must be finite and >= 0, got {k}", variant.tag()));
        }
        if k > 0.0 {
            let d = dim as f64;
            let (limit, what) = match variant {
                Variant::MixedNorm { .. } => (d, "k < d"),
                _ => (d - 1.0, "k < d - 1"),
            };
            if k >= limit {
                return domain(format!(
                    "{}: tail exponent must satisfy {what} (got k = {k}, d = {dim})",
                    variant.tag()
                ));
            }
        }
        Ok(Self { dim, variant })
    }

    pub fn gaussian(dim: usize, sigma: f64) -> Result<Self> {
        Self::new(dim, Variant::Gaussian { sigma })
    }

    pub fn laplacian(dim: usize, b: f64) -> Result<Self> {
        Self::new(dim, Variant::Laplacian { b })
    }

    pub fn l2_power_tail(dim: usize, k: f64, sigma: f64) -> Result<Self> {
        Self::new(dim, Variant::L2PowerTail { k, sigma })
    }

    pub fn l1_power_tail(dim: usize, k: f64, b: f64) -> Result<Self> {
        Self::new(dim, Variant::L1PowerTail { k, b })
    }

    pub fn linf_pure(dim: usize, k: f64, sigma: f64) -> Result<Self> {
        Self::new(dim, Variant::LinfPure { k, sigma })
    }

    pub fn mixed_norm(dim: usize, k: f64, sigma: f64) -> Result<Self> {
        Self::new(dim, Variant::MixedNorm { k, sigma })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// True for families whose density depends on `z` only through `‖z‖₂`.
    pub fn is_l2_spherical(&self) -> bool {
        matches!(self.variant, Variant::Gaussian { .. } | Variant::L2PowerTail { .. })
    }

    fn kernel(&self) -> Kernel {
        match self.variant {
            Variant::Gaussian { sigma } => Kernel {
                power_norm: Norm::L2,
                k: 0.0,
                exponent: Exponent::SquaredL2,
                denom: 2.0 * sigma * sigma,
            },
            Variant::L2PowerTail { k, sigma } => Kernel {
                power_norm: Norm::L2,
                k,
                exponent: Exponent::SquaredL2,
                denom: 2.0 * sigma * sigma,
            },
            Variant::Laplacian { b } => Kernel {
                power_norm: Norm::L1,
                k: 0.0,
                exponent: Exponent::L1,
                denom: b,
            },
            Variant::L1PowerTail { k, b } => Kernel {
                power_norm: Norm::L1,
                k,
                exponent: Exponent::L1,
                denom: b,
            },
            Variant::LinfPure { k, sigma } => Kernel {
                power_norm: Norm::Linf,
                k,
                exponent: Exponent::SquaredLinf,
                denom: 2.0 * sigma * sigma,
            },
            Variant::MixedNorm { k, sigma } => Kernel {
                power_norm: Norm::Linf,
                k,
                exponent: Exponent::SquaredL2,
                denom: 2.0 * sigma * sigma,
            },
        }
    }

    fn check_dim(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.dim {
            return domain(format!("{what} has length {}, family dimension is {}", v.len(), self.dim));
        }
        Ok(())
    }

    /// `log φ(z)` where `π0 ∝ φ`.
    pub fn log_unnormalized_density(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z, "z")?;
        let kern = self.kernel();
        let (p, e) = norm_pair(&kern, z.iter().copied());
        log_kernel(&kern, p, e)
    }

    /// `log π_δ(z) − log π0(z) = log φ(z − δ) − log φ(z)`.
    pub fn log_density_ratio_shift(&self, z: &[f64], delta: &[f64]) -> Result<f64> {
        self.check_dim(z, "z")?;
        self.check_dim(delta, "delta")?;
        Ok(self.ratio_evaluator(delta).log_ratio(z)?)
    }

    pub(crate) fn ratio_evaluator<'a>(&self, delta: &'a [f64]) -> RatioEvaluator<'a> {
        RatioEvaluator {
            kern: self.kernel(),
            delta,
        }
    }

    /// Draws `n` i.i.d. samples.
    pub fn sample(&self, n: usize, stream: &RandomStream) -> Result<SampleBatch> {
        if n == 0 {
            return domain("sample count must be at least 1");
        }
        let (chunks, telemetry) = self.map_chunks(n, stream, |rows, _| Ok(rows.to_vec()))?;
        let points = chunks.concat();
        Ok(SampleBatch {
            family: *self,
            dim: self.dim,
            points,
            seed: stream.seed,
            stream_id: stream.stream_id,
            telemetry,
        })
    }

    /// Generates `n` samples in fixed-size chunks (in parallel) and applies `f`
    /// to each chunk's row-major buffer. Results come back in chunk order.
    pub(crate) fn map_chunks<T, F>(&self, n: usize, stream: &RandomStream, f: F) -> Result<(Vec<T>, SamplerTelemetry)>
    where
        T: Send,
        F: Fn(&[f64], usize) -> Result<T> + Sync,
    {
        let n_chunks = n.div_ceil(CHUNK_ROWS);
        let results: Vec<Result<(T, SamplerTelemetry)>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let (buf, tel) = self.sample_chunk(c, n, stream)?;
                Ok((f(&buf, buf.len() / self.dim)?, tel))
            })
            .collect();
        let mut out = Vec::with_capacity(n_chunks);
        let mut telemetry = SamplerTelemetry::default();
        for r in results {
            let (v, t) = r?;
            telemetry.merge(t);
            out.push(v);
        }
        Ok((out, telemetry))
    }

    /// Chunk `c` of an `n`-sample draw: rows `c·CHUNK_ROWS ..`, generated from
    /// its own substream so any chunk can be produced independently.
    pub fn sample_chunk(&self, c: usize, n: usize, stream: &RandomStream) -> Result<(Vec<f64>, SamplerTelemetry)> {
        let start = c * CHUNK_ROWS;
        if start >= n {
            return domain(format!("chunk {c} is out of range for {n} samples"));
        }
        let rows = CHUNK_ROWS.min(n - start);
        let mut rng = stream.substream(c as u64).rng();
        let mut buf = vec![0.0; rows * self.dim];
        let mut tel = SamplerTelemetry::default();
        for row in buf.chunks_exact_mut(self.dim) {
            self.sample_into(&mut rng, row, &mut tel)?;
        }
        Ok((buf, tel))
    }

    /// Writes one exact draw into `out`. Rows at the exact origin are redrawn.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], tel: &mut SamplerTelemetry) -> Result<()> {
        debug_assert_eq!(out.len(), self.dim);
        let d = self.dim as f64;
        loop {
            match self.variant {
                Variant::Gaussian { sigma } => {
                    for x in out.iter_mut() {
                        let g: f64 = rng.sample(StandardNormal);
                        *x = sigma * g;
                    }
                }
                Variant::Laplacian { b } => {
                    for x in out.iter_mut() {
                        let e: f64 = rng.sample(Exp1);
                        *x = if rng.random::<bool>() { b * e } else { -b * e };
                    }
                }
                Variant::L2PowerTail { k, sigma } => {
                    let r = sigma * (2.0 * gamma_sample((d - k) / 2.0, 1.0, rng)).sqrt();
                    uniform_l2_direction(rng, out);
                    out.iter_mut().for_each(|x| *x *= r);
                }
                Variant::L1PowerTail { k, b } => {
                    let r = gamma_sample(d - k, b, rng);
                    let mut total = 0.0;
                    for x in out.iter_mut() {
                        let e: f64 = rng.sample(Exp1);
                        total += e;
                        *x = if rng.random::<bool>() { e } else { -e };
                    }
                    if total > 0.0 {
                        out.iter_mut().for_each(|x| *x *= r / total);
                    } else {
                        out.iter_mut().for_each(|x| *x = 0.0);
                    }
                }
                Variant::LinfPure { k, sigma } => {
                    let a = sigma * (2.0 * gamma_sample((d - k) / 2.0, 1.0, rng)).sqrt();
                    let mut m = 0.0_f64;
                    for x in out.iter_mut() {
                        *x = rng.random_range(-1.0..1.0);
                        m = m.max(x.abs());
                    }
                    if m > 0.0 {
                        out.iter_mut().for_each(|x| *x *= a / m);
                    }
                }
                Variant::MixedNorm { k, sigma } => {
                    let r = sigma * (2.0 * gamma_sample((d - k) / 2.0, 1.0, rng)).sqrt();
                    let sqrt_d = d.sqrt();
                    let mut local = SamplerTelemetry::default();
                    loop {
                        uniform_l2_direction(rng, out);
                        local.proposals += 1;
                        let inf = Norm::Linf.of(out);
                        // (√d ‖u‖∞)^{−k} ≤ 1 because ‖u‖∞ ≥ 1/√d on the unit sphere.
                        let accept = if k == 0.0 { 1.0 } else { (sqrt_d * inf).powf(-k).min(1.0) };
                        if accept >= 1.0 || rng.random::<f64>() < accept {
                            local.accepted += 1;
                            break;
                        }
                        if local.proposals >= ABORT_MIN_PROPOSALS
                            && (local.accepted as f64) < MIN_ACCEPTANCE_RATE * local.proposals as f64
                        {
                            tel.merge(local);
                            return Err(Error::SamplerAbort {
                                k,
                                dim: self.dim,
                                proposals: tel.proposals,
                                rate: tel.acceptance_rate(),
                            });
                        }
                    }
                    tel.merge(local);
                    if tel.proposals >= ABORT_MIN_PROPOSALS && tel.acceptance_rate() < MIN_ACCEPTANCE_RATE {
                        return Err(Error::SamplerAbort {
                            k,
                            dim: self.dim,
                            proposals: tel.proposals,
                            rate: tel.acceptance_rate(),
                        });
                    }
                    out.iter_mut().for_each(|x| *x *= r);
                }
            }
            if out.iter().any(|&x| x != 0.0) {
                return Ok(());
            }
        }
    }

    /// Closed-form moments of the radial variable. For the ℓ2 families this is
    /// `‖z‖₂`, for the ℓ1 families `‖z‖₁`, for `LinfPure` it is `‖z‖∞`.
    pub fn radius_stats(&self) -> Result<RadiusStats> {
        let d = self.dim as f64;
        match self.variant {
            Variant::Gaussian { sigma } | Variant::L2PowerTail { sigma, .. } | Variant::LinfPure { sigma, .. } => {
                let m = d - 1.0 - self.variant.k();
                let mean = sigma
                    * std::f64::consts::SQRT_2
                    * (log_gamma((m + 2.0) / 2.0)? - log_gamma((m + 1.0) / 2.0)?).exp();
                Ok(RadiusStats {
                    mode: sigma * m.max(0.0).sqrt(),
                    mean,
                    variance: (sigma * sigma * (m + 1.0) - mean * mean).max(0.0),
                })
            }
            Variant::Laplacian { b } | Variant::L1PowerTail { b, .. } => {
                let shape = d - self.variant.k();
                Ok(RadiusStats {
                    mode: b * (shape - 1.0).max(0.0),
                    mean: b * shape,
                    variance: b * b * shape,
                })
            }
            Variant::MixedNorm { .. } => Err(Error::Unsupported(
                "radius statistics are not available for the mixed-norm family".into(),
            )),
        }
    }
}

fn uniform_l2_direction<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut ss = 0.0;
        for x in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *x = g;
            ss += g * g;
        }
        if ss > 0.0 {
            let inv = 1.0 / ss.sqrt();
            out.iter_mut().for_each(|x| *x *= inv);
            return;
        }
    }
}

/// Returns (power-norm value, exponent value) for a vector given as an iterator.
fn norm_pair(kern: &Kernel, v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut l1, mut ss, mut inf) = (0.0_f64, 0.0_f64, 0.0_f64);
    for x in v {
        l1 += x.abs();
        ss += x * x;
        inf = inf.max(x.abs());
    }
    let p = match kern.power_norm {
        Norm::L1 => l1,
        Norm::L2 => ss.sqrt(),
        Norm::Linf => inf,
    };
    let e = match kern.exponent {
        Exponent::SquaredL2 => ss,
        Exponent::SquaredLinf => inf * inf,
        Exponent::L1 => l1,
    };
    (p, e)
}

fn log_kernel(kern: &Kernel, p: f64, e: f64) -> Result<f64> {
    let g = -e / kern.denom;
    if kern.k == 0.0 {
        return Ok(g);
    }
    if p == 0.0 {
        return Err(Error::Singularity("density with k > 0 diverges at the origin".into()));
    }
    Ok(-kern.k * p.ln() + g)
}

/// Evaluates `log φ(z − δ) − log φ(z)` for a fixed shift.
pub(crate) struct RatioEvaluator<'a> {
    kern: Kernel,
    delta: &'a [f64],
}

impl RatioEvaluator<'_> {
    pub(crate) fn log_ratio(&self, z: &[f64]) -> Result<f64> {
        let (p0, e0) = norm_pair(&self.kern, z.iter().copied());
        let (p1, e1) = norm_pair(&self.kern, z.iter().zip(self.delta).map(|(a, b)| a - b));
        let exp_part = (e0 - e1) / self.kern.denom;
        if self.kern.k == 0.0 {
            return Ok(exp_part);
        }
        if p0 == 0.0 || p1 == 0.0 {
            return Err(Error::Singularity(
                "density ratio with k > 0 evaluated at a singular point (z = 0 or z = delta)".into(),
            ));
        }
        Ok(self.kern.k * (p0.ln() - p1.ln()) + exp_part)
    }
}

/// `√((d − 1)/(d − 1 − k)) · σ0`: the σ that matches a power-tail family's
/// typical radius to that of `N(0, σ0² I)`.
pub fn matched_sigma(d: usize, k: f64, sigma0: f64) -> Result<f64> {
    let dm1 = d as f64 - 1.0;
    if !(k >= 0.0) || k >= dm1 {
        return domain(format!("matched_sigma requires 0 <= k < d - 1 (got k = {k}, d = {d})"));
    }
    if !(sigma0 > 0.0) {
        return domain(format!("matched_sigma requires sigma0 > 0, got {sigma0}"));
    }
    Ok((dm1 / (dm1 - k)).sqrt() * sigma0)
}

/// A block of i.i.d. draws stored row-major.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub family: SmoothingFamily,
    pub dim: usize,
    pub points: Vec<f64>,
    pub seed: u64,
    pub stream_id: u64,
    pub telemetry: SamplerTelemetry,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }

    /// CSV with header `z0,z1,...`, one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim).map(|i| format!("z{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}
