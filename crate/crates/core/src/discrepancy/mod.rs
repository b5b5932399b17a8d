//! The discrepancy `D(λπ0 ‖ π_δ) = ∫ (λπ0(z) − π_δ(z))₊ dz` and the dual
//! lower bound built on it.
//!
//! Monte Carlo is the production path: with `z ~ π0`,
//! `D = E[(λ − π_δ(z)/π0(z))₊]`, and each summand lies in `[0, λ]`, so a
//! one-sided Hoeffding term turns the sample mean into an upper confidence
//! limit. The closed forms and the quadrature rule are independent oracles.

mod closed_form;
mod quadrature;
mod worst;

pub use closed_form::{discrepancy_gaussian_closed_form, discrepancy_laplace_closed_form, gaussian_optimal_lambda};
pub use quadrature::{discrepancy_quadrature, discrepancy_quadrature_many, QuadratureRule, QuadratureSpec};
pub use worst::{worst_delta, WorstDelta, WorstDeltaRationale};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::family::{SamplerTelemetry, SmoothingFamily};
use crate::numeric::{CompensatedSum, Probability};
use crate::stream::RandomStream;
use crate::threat::ThreatModel;

/// Monte Carlo estimate of the discrepancy with its one-sided error term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyEstimate {
    pub mean: f64,
    /// Hoeffding half-width: the true value is below `mean + epsilon` with
    /// probability at least `1 − alpha`.
    pub epsilon: f64,
    /// Standard error of `mean` from the sample variance (diagnostic only).
    pub std_err: f64,
    pub n: usize,
    pub lambda: f64,
    pub alpha: f64,
}

impl DiscrepancyEstimate {
    pub fn upper(&self) -> f64 {
        self.mean + self.epsilon
    }
}

/// `λ · √(ln(1/α) / (2n))`.
pub fn hoeffding_epsilon(n: usize, lambda: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if n == 0 {
        return domain("hoeffding_epsilon requires n >= 1");
    }
    if !(lambda >= 0.0) {
        return domain(format!("lambda must be >= 0, got {lambda}"));
    }
    Ok(lambda * ((1.0 / alpha).ln() / (2.0 * n as f64)).sqrt())
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("confidence level alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

/// Density ratios `π_δ(z_i)/π0(z_i)` for one sample batch, sorted, with
/// compensated prefix sums so the empirical discrepancy can be read off at any
/// `λ` in `O(log n)`.
#[derive(Debug, Clone)]
pub struct RatioSample {
    sorted: Vec<f64>,
    prefix: Vec<f64>,
    prefix_sq: Vec<f64>,
    pub telemetry: SamplerTelemetry,
}

impl RatioSample {
    /// Draws `n` points from `family` on `stream` and records their ratios
    /// under the shift `delta`.
    pub fn draw(family: &SmoothingFamily, delta: &[f64], n: usize, stream: &RandomStream) -> Result<Self> {
        if delta.len() != family.dim() {
            return domain(format!(
                "delta has length {}, family dimension is {}",
                delta.len(),
                family.dim()
            ));
        }
        if n == 0 {
            return domain("sample count must be at least 1");
        }
        let eval = family.ratio_evaluator(delta);
        let d = family.dim();
        let (chunks, telemetry) = family.map_chunks(n, stream, |rows, _| {
            rows.chunks_exact(d).map(|z| eval.log_ratio(z).map(f64::exp)).collect::<Result<Vec<f64>>>()
        })?;
        Ok(Self::from_ratios(chunks.concat(), telemetry))
    }

    pub fn from_ratios(mut ratios: Vec<f64>, telemetry: SamplerTelemetry) -> Self {
        ratios.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(ratios.len() + 1);
        let mut prefix_sq = Vec::with_capacity(ratios.len() + 1);
        let (mut s1, mut s2) = (CompensatedSum::default(), CompensatedSum::default());
        prefix.push(0.0);
        prefix_sq.push(0.0);
        for &x in &ratios {
            s1.add(x);
            s2.add(x * x);
            prefix.push(s1.value());
            prefix_sq.push(s2.value());
        }
        Self {
            sorted: ratios,
            prefix,
            prefix_sq,
            telemetry,
        }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Empirical mean and standard error of `(λ − ratio)₊`.
    pub fn mean_and_std_err(&self, lambda: f64) -> (f64, f64) {
        let n = self.sorted.len() as f64;
        if lambda <= 0.0 {
            return (0.0, 0.0);
        }
        let c = self.sorted.partition_point(|&x| x < lambda);
        let cf = c as f64;
        let s1 = self.prefix[c];
        let s2 = self.prefix_sq[c];
        let total = lambda * cf - s1;
        let mean = (total / n).clamp(0.0, lambda);
        let sum_sq = lambda * lambda * cf - 2.0 * lambda * s1 + s2;
        let var = if n > 1.0 {
            ((sum_sq / n - mean * mean).max(0.0)) * n / (n - 1.0)
        } else {
            0.0
        };
        (mean, (var / n).sqrt())
    }

    pub fn estimate(&self, lambda: f64, alpha: f64) -> Result<DiscrepancyEstimate> {
        let (mean, std_err) = self.mean_and_std_err(lambda);
        Ok(DiscrepancyEstimate {
            mean,
            epsilon: hoeffding_epsilon(self.len(), lambda, alpha)?,
            std_err,
            n: self.len(),
            lambda,
            alpha,
        })
    }
}

/// Monte Carlo discrepancy at a given shift.
pub fn discrepancy_mc(
    family: &SmoothingFamily,
    delta: &[f64],
    lambda: f64,
    n: usize,
    alpha: f64,
    stream: &RandomStream,
) -> Result<DiscrepancyEstimate> {
    check_alpha(alpha)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return domain(format!("lambda must be finite and >= 0, got {lambda}"));
    }
    RatioSample::draw(family, delta, n, stream)?.estimate(lambda, alpha)
}

/// Candidate `λ` values for the dual maximization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    values: Vec<f64>,
    /// Extra golden-section evaluations around the grid argmax.
    pub refine_steps: usize,
}

impl Default for LambdaGrid {
    /// 200 log-spaced points on `[1e-2, 1e4]`, no refinement.
    fn default() -> Self {
        Self::log_spaced(1e-2, 1e4, 200).expect("default grid is valid")
    }
}

impl LambdaGrid {
    pub fn log_spaced(start: f64, end: f64, count: usize) -> Result<Self> {
        if !(start > 0.0 && end >= start && end.is_finite()) || count == 0 {
            return domain(format!(
                "lambda grid needs 0 < start <= end and count >= 1 (got start={start}, end={end}, count={count})"
            ));
        }
        if count == 1 {
            return Self::from_values(vec![start]);
        }
        let (a, b) = (start.ln(), end.ln());
        let values = (0..count)
            .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
            .collect();
        Self::from_values(values)
    }

    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return domain("lambda grid must be nonempty");
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return domain("lambda grid values must be finite and >= 0");
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self {
            values,
            refine_steps: 0,
        })
    }

    pub fn with_refinement(mut self, steps: usize) -> Self {
        self.refine_steps = steps;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of `λ` values the union bound must cover.
    pub fn evaluations(&self) -> usize {
        self.values.len() + self.refine_steps
    }
}

/// One row of the per-`λ` trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub lambda: f64,
    pub d_mean: f64,
    pub epsilon: f64,
    pub std_err: f64,
    pub bound: f64,
}

/// Outcome of maximizing `λ·p0 − (D̂(λ) + ε(λ))` over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualBoundResult {
    pub bound: f64,
    pub lambda_star: f64,
    pub d_mean: f64,
    pub epsilon: f64,
    pub std_err: f64,
    pub p0_lower: f64,
    pub worst_delta: WorstDelta,
    pub n: usize,
    pub alpha_mc: f64,
    pub alpha_per_lambda: f64,
    pub telemetry: SamplerTelemetry,
    pub trace: Vec<TracePoint>,
}

impl DualBoundResult {
    /// CSV with columns `lambda,d_mean,epsilon,bound`.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "lambda,d_mean,epsilon,bound")?;
        for t in &self.trace {
            writeln!(w, "{},{},{},{}", t.lambda, t.d_mean, t.epsilon, t.bound)?;
        }
        Ok(())
    }
}

fn trace_point(sample: &RatioSample, p0: f64, lambda: f64, alpha: f64) -> Result<TracePoint> {
    let est = sample.estimate(lambda, alpha)?;
    Ok(TracePoint {
        lambda,
        d_mean: est.mean,
        epsilon: est.epsilon,
        std_err: est.std_err,
        bound: lambda * p0 - est.mean - est.epsilon,
    })
}

/// Maximizes the bound over `grid` using one shared ratio sample. Each grid
/// point is charged `alpha_mc / grid.evaluations()` so the union over all
/// evaluated `λ` holds at `alpha_mc`.
pub fn maximize_over_grid(
    p0_lower: f64,
    sample: &RatioSample,
    grid: &LambdaGrid,
    alpha_mc: f64,
) -> Result<(TracePoint, Vec<TracePoint>, f64)> {
    check_alpha(alpha_mc)?;
    let alpha_each = alpha_mc / grid.evaluations() as f64;
    let mut trace = Vec::with_capacity(grid.evaluations());
    let mut best: Option<(usize, TracePoint)> = None;
    for (i, &lambda) in grid.values().iter().enumerate() {
        let t = trace_point(sample, p0_lower, lambda, alpha_each)?;
        // strict comparison keeps the smallest λ on ties
        if best.is_none_or(|(_, b)| t.bound > b.bound) {
            best = Some((i, t));
        }
        trace.push(t);
    }
    let (best_idx, mut best_point) = best.expect("grid is nonempty");

    if grid.refine_steps > 0 && grid.values().len() > 1 {
        let vals = grid.values();
        let lo = vals[best_idx.saturating_sub(1)];
        let hi = vals[(best_idx + 1).min(vals.len() - 1)];
        // golden-section search in log λ; the bound is concave in λ
        let eval = |log_lambda: f64, trace: &mut Vec<TracePoint>| -> Result<TracePoint> {
            let t = trace_point(sample, p0_lower, log_lambda.exp(), alpha_each)?;
            trace.push(t);
            Ok(t)
        };
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo.max(1e-300).ln(), hi.ln());
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = eval(c, &mut trace)?;
        let mut steps = 1;
        if steps < grid.refine_steps {
            let mut fd = eval(d, &mut trace)?;
            steps += 1;
            while steps < grid.refine_steps {
                if fc.bound >= fd.bound {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - inv_phi * (b - a);
                    fc = eval(c, &mut trace)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + inv_phi * (b - a);
                    fd = eval(d, &mut trace)?;
                }
                steps += 1;
            }
        }
        for t in &trace[grid.values().len()..] {
            if t.bound > best_point.bound || (t.bound == best_point.bound && t.lambda < best_point.lambda) {
                best_point = *t;
            }
        }
    }
    Ok((best_point, trace, alpha_each))
}

/// Lower bound on the worst-case smoothed value over the threat set, valid
/// with probability `1 − alpha_mc` given a valid `p0_lower`.
pub fn dual_lower_bound(
    p0_lower: Probability,
    family: &SmoothingFamily,
    threat: &ThreatModel,
    grid: &LambdaGrid,
    n: usize,
    alpha_mc: f64,
    stream: &RandomStream,
) -> Result<DualBoundResult> {
    check_alpha(alpha_mc)?;
    threat.validate()?;
    let wd = worst_delta(threat, family)?;
    let sample = RatioSample::draw(family, &wd.vector, n, stream)?;
    dual_bound_from_sample(p0_lower, wd, &sample, grid, alpha_mc)
}

pub(crate) fn dual_bound_from_sample(
    p0_lower: Probability,
    wd: WorstDelta,
    sample: &RatioSample,
    grid: &LambdaGrid,
    alpha_mc: f64,
) -> Result<DualBoundResult> {
    let p0 = p0_lower.value();
    let (best, trace, alpha_each) = maximize_over_grid(p0, sample, grid, alpha_mc)?;
    Ok(DualBoundResult {
        bound: best.bound,
        lambda_star: best.lambda,
        d_mean: best.d_mean,
        epsilon: best.epsilon,
        std_err: best.std_err,
        p0_lower: p0,
        worst_delta: wd,
        n: sample.len(),
        alpha_mc,
        alpha_per_lambda: alpha_each,
        telemetry: sample.telemetry,
        trace,
    })
}
