//! End-to-end certification: estimate `p0` from classifier evaluations, then
//! lower-bound the worst-case smoothed value with the dual bound.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::{clopper_pearson_lower, ConfidenceBudget};
use crate::classifier::{success_counts, Classifier};
use crate::discrepancy::{
    dual_bound_from_sample, maximize_over_grid, worst_delta, LambdaGrid, RatioSample, TracePoint, WorstDelta,
};
use crate::error::{domain, Result};
use crate::family::SmoothingFamily;
use crate::numeric::Probability;
use crate::stream::RandomStream;
use crate::threat::ThreatModel;

// Substream tags. Counting and discrepancy draws never share variates.
const TAG_COUNTS: u64 = 1;
const TAG_MC: u64 = 2;
const TAG_PILOT_COUNTS: u64 = 3;
const TAG_PILOT_MC: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    Certified,
    NotCertified,
    /// `p0_lower ≤ 1/2`: no radius can be certified.
    Abstain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub n1: usize,
    pub n2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotSummary {
    pub counts: SampleCounts,
    pub p0_lower: f64,
    pub lambda_hat: f64,
    pub bound: f64,
}

/// A certification verdict for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub input_id: String,
    pub successes: u64,
    pub p0_lower: Probability,
    pub bound: f64,
    pub certified: bool,
    pub status: CertificateStatus,
    pub lambda_star: f64,
    pub d_mean: f64,
    pub epsilon: f64,
    pub threat: ThreatModel,
    pub family: SmoothingFamily,
    pub budget: ConfidenceBudget,
    pub sample_counts: SampleCounts,
    pub worst_delta: WorstDelta,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot: Option<PilotSummary>,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

impl Certificate {
    /// `input_id,p0_lower,radius,bound,certified`
    pub fn write_summary_csv<'a, W: Write>(certs: impl IntoIterator<Item = &'a Certificate>, mut w: W) -> Result<()> {
        writeln!(w, "input_id,p0_lower,radius,bound,certified")?;
        for c in certs {
            writeln!(
                w,
                "{},{},{},{},{}",
                csv_field(&c.input_id),
                c.p0_lower.value(),
                c.threat.radius,
                c.bound,
                c.certified
            )?;
        }
        Ok(())
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn verdict(p0_lower: f64, bound: f64) -> (bool, CertificateStatus) {
    if p0_lower <= 0.5 {
        (false, CertificateStatus::Abstain)
    } else if bound > 0.5 {
        (true, CertificateStatus::Certified)
    } else {
        (false, CertificateStatus::NotCertified)
    }
}

fn check_inputs(x0: &[f64], family: &SmoothingFamily, threat: &ThreatModel, budget: &ConfidenceBudget) -> Result<()> {
    if x0.len() != family.dim() {
        return domain(format!(
            "dimension mismatch: input has {} entries, family has dimension {}",
            x0.len(),
            family.dim()
        ));
    }
    threat.validate()?;
    budget.validate()
}

/// Grid certification: `N1` classifier evaluations give a Clopper–Pearson
/// `p0_lower` at `alpha_p0`; `N2` draws give the dual bound over the whole
/// grid at `alpha_mc`. The verdict holds with probability at least
/// `1 − alpha_p0 − alpha_mc`.
#[allow(clippy::too_many_arguments)]
pub fn certify<C: Classifier + ?Sized>(
    input_id: &str,
    classifier: &mut C,
    x0: &[f64],
    family: &SmoothingFamily,
    threat: &ThreatModel,
    grid: &LambdaGrid,
    counts: SampleCounts,
    budget: &ConfidenceBudget,
    stream: &RandomStream,
) -> Result<Certificate> {
    check_inputs(x0, family, threat, budget)?;
    let wd = worst_delta(threat, family)?;
    let evidence = success_counts(classifier, x0, family, counts.n1, &stream.substream(TAG_COUNTS))?;
    let p0 = clopper_pearson_lower(evidence, budget.alpha_p0)?;
    let sample = RatioSample::draw(family, &wd.vector, counts.n2, &stream.substream(TAG_MC))?;
    let res = dual_bound_from_sample(p0, wd, &sample, grid, budget.alpha_mc)?;
    let (certified, status) = verdict(p0.value(), res.bound);
    Ok(Certificate {
        input_id: input_id.to_string(),
        successes: evidence.successes,
        p0_lower: p0,
        bound: res.bound,
        certified,
        status,
        lambda_star: res.lambda_star,
        d_mean: res.d_mean,
        epsilon: res.epsilon,
        threat: *threat,
        family: *family,
        budget: *budget,
        sample_counts: counts,
        worst_delta: res.worst_delta,
        pilot: None,
        trace: res.trace,
    })
}

/// Two-stage certification. A cheap pilot over the grid picks `λ̂`; fresh
/// samples then evaluate the bound at `λ̂` alone, so the final stage pays no
/// union-bound penalty. The pilot is a heuristic and consumes no confidence
/// budget.
#[allow(clippy::too_many_arguments)]
pub fn certify_practical<C: Classifier + ?Sized>(
    input_id: &str,
    classifier: &mut C,
    x0: &[f64],
    family: &SmoothingFamily,
    threat: &ThreatModel,
    grid: &LambdaGrid,
    pilot: SampleCounts,
    counts: SampleCounts,
    budget: &ConfidenceBudget,
    stream: &RandomStream,
) -> Result<Certificate> {
    check_inputs(x0, family, threat, budget)?;
    let wd = worst_delta(threat, family)?;

    let pilot_ev = success_counts(classifier, x0, family, pilot.n1, &stream.substream(TAG_PILOT_COUNTS))?;
    let pilot_p0 = clopper_pearson_lower(pilot_ev, budget.alpha_p0)?;
    let pilot_sample = RatioSample::draw(family, &wd.vector, pilot.n2, &stream.substream(TAG_PILOT_MC))?;
    let (best, _, _) = maximize_over_grid(pilot_p0.value(), &pilot_sample, grid, budget.alpha_mc)?;
    let lambda_hat = best.lambda;

    let evidence = success_counts(classifier, x0, family, counts.n1, &stream.substream(TAG_COUNTS))?;
    let p0 = clopper_pearson_lower(evidence, budget.alpha_p0)?;
    let sample = RatioSample::draw(family, &wd.vector, counts.n2, &stream.substream(TAG_MC))?;
    let single = LambdaGrid::from_values(vec![lambda_hat])?;
    let res = dual_bound_from_sample(p0, wd, &sample, &single, budget.alpha_mc)?;
    let (certified, status) = verdict(p0.value(), res.bound);
    Ok(Certificate {
        input_id: input_id.to_string(),
        successes: evidence.successes,
        p0_lower: p0,
        bound: res.bound,
        certified,
        status,
        lambda_star: res.lambda_star,
        d_mean: res.d_mean,
        epsilon: res.epsilon,
        threat: *threat,
        family: *family,
        budget: *budget,
        sample_counts: counts,
        worst_delta: res.worst_delta,
        pilot: Some(PilotSummary {
            counts: pilot,
            p0_lower: pilot_p0.value(),
            lambda_hat,
            bound: best.bound,
        }),
        trace: res.trace,
    })
}

/// One radius tried during the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusProbe {
    pub radius: f64,
    pub bound: f64,
    pub lambda_star: f64,
    pub certified: bool,
}

/// Largest certified radius found by bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub input_id: String,
    pub successes: u64,
    pub p0_lower: Probability,
    pub radius: f64,
    pub bound: f64,
    pub certified: bool,
    pub status: CertificateStatus,
    /// True when the upper end of the search range itself certified.
    pub saturated: bool,
    pub alpha_per_probe: f64,
    pub probes: Vec<RadiusProbe>,
}

impl RadiusReport {
    pub fn write_summary_csv<'a, W: Write>(reports: impl IntoIterator<Item = &'a RadiusReport>, mut w: W) -> Result<()> {
        writeln!(w, "input_id,p0_lower,radius,bound,certified")?;
        for r in reports {
            writeln!(
                w,
                "{},{},{},{},{}",
                csv_field(&r.input_id),
                r.p0_lower.value(),
                r.radius,
                r.bound,
                r.certified
            )?;
        }
        Ok(())
    }
}

/// Bisects the radius in `[0, threat.radius]` for `iterations` probes. Every
/// probe re-derives its ratios from the same `N2` draws, and `alpha_mc` is
/// split evenly over the probes so all of them hold simultaneously.
#[allow(clippy::too_many_arguments)]
pub fn certify_radius<C: Classifier + ?Sized>(
    input_id: &str,
    classifier: &mut C,
    x0: &[f64],
    family: &SmoothingFamily,
    max_threat: &ThreatModel,
    grid: &LambdaGrid,
    counts: SampleCounts,
    budget: &ConfidenceBudget,
    iterations: usize,
    stream: &RandomStream,
) -> Result<RadiusReport> {
    check_inputs(x0, family, max_threat, budget)?;
    if iterations == 0 {
        return domain("radius search needs at least one iteration");
    }
    if max_threat.radius <= 0.0 {
        return domain("radius search needs a positive upper radius");
    }
    // fail early on unsupported pairs
    worst_delta(max_threat, family)?;
    let evidence = success_counts(classifier, x0, family, counts.n1, &stream.substream(TAG_COUNTS))?;
    let p0 = clopper_pearson_lower(evidence, budget.alpha_p0)?;
    let alpha_probe = budget.alpha_mc / iterations as f64;
    let mut probes = Vec::with_capacity(iterations);
    let mut report = RadiusReport {
        input_id: input_id.to_string(),
        successes: evidence.successes,
        p0_lower: p0,
        radius: 0.0,
        bound: f64::NAN,
        certified: false,
        status: CertificateStatus::Abstain,
        saturated: false,
        alpha_per_probe: alpha_probe,
        probes: Vec::new(),
    };
    if p0.value() <= 0.5 {
        return Ok(report);
    }
    report.status = CertificateStatus::NotCertified;
    let mc = stream.substream(TAG_MC);
    let probe = |r: f64| -> Result<RadiusProbe> {
        let threat = ThreatModel::new(max_threat.norm, r)?;
        let wd = worst_delta(&threat, family)?;
        let sample = RatioSample::draw(family, &wd.vector, counts.n2, &mc)?;
        let res = dual_bound_from_sample(p0, wd, &sample, grid, alpha_probe)?;
        Ok(RadiusProbe {
            radius: r,
            bound: res.bound,
            lambda_star: res.lambda_star,
            certified: res.bound > 0.5,
        })
    };
    let top = probe(max_threat.radius)?;
    probes.push(top);
    let mut best: Option<RadiusProbe> = None;
    if top.certified {
        best = Some(top);
        report.saturated = true;
    } else {
        let (mut lo, mut hi) = (0.0, max_threat.radius);
        for _ in 1..iterations {
            let mid = 0.5 * (lo + hi);
            let p = probe(mid)?;
            probes.push(p);
            if p.certified {
                lo = mid;
                best = Some(p);
            } else {
                hi = mid;
            }
        }
    }
    if let Some(b) = best {
        report.radius = b.radius;
        report.bound = b.bound;
        report.certified = true;
        report.status = CertificateStatus::Certified;
    }
    report.probes = probes;
    Ok(report)
}
