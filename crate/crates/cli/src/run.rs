//! Command execution and artifact writing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use dualcert::bounds::{cohen_radius, gaussian_bilateral_radius, teng_radius, RadiusOutcome};
use dualcert::classifier::success_counts;
use dualcert::discrepancy::{worst_delta, RatioSample};
use dualcert::family::SamplerTelemetry;
use dualcert::lab::{
    clopper_pearson_coverage, closed_form_recovery, family_grid, hoeffding_coverage, mean_variance_curve,
    oracle_chain, pareto_sweep, thin_shell_report, worst_delta_grid_check, write_oracle_chain_csv,
    write_recovery_csv, CoverageResult, DominanceCheck, MeanVarianceCurve, RecoveryKind, DEFAULT_TRIPLES,
};
use dualcert::pipeline::{certify, certify_practical, certify_radius, SampleCounts};
use dualcert::{
    Certificate, Classifier, Error, ExternalClassifier, Norm, RandomStream, Result, SmoothingFamily,
    SyntheticClassifier, ThreatModel, ENGINE_VERSION,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ClassifierSpec, ClosedFormKind, CommandKind, Experiment, RunConfig};

/// Process exit status for an error: 2 config, 3 transport, 4 sampler abort,
/// 1 anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Unsupported(_) => 2,
        Error::Transport(_) => 3,
        Error::SamplerAbort { .. } => 4,
        _ => 1,
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// One human-readable line for the terminal.
    pub headline: String,
}

struct Artifacts<'a> {
    dir: &'a Path,
    banner: String,
    files: Vec<PathBuf>,
}

impl<'a> Artifacts<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out)?;
        let banner = format!(
            "# dualcert {ENGINE_VERSION} command={} config={}",
            cfg.command.map_or("?", |c| c.name()),
            serde_json::to_string(cfg)?
        );
        Ok(Self {
            dir: &cfg.out,
            banner,
            files: Vec::new(),
        })
    }

    /// CSV whose first line is a `#` comment carrying the engine version and
    /// the resolved config.
    fn csv(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "{}", self.banner)?;
        body(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn result(&mut self, cfg: &RunConfig, result: impl Serialize) -> Result<()> {
        let doc = json!({
            "engine": "dualcert",
            "engine_version": ENGINE_VERSION,
            "command": cfg.command.map(|c| c.name()),
            "config": cfg,
            "result": result,
        });
        let path = self.dir.join("result.json");
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }
}

/// Runs a resolved config on the current rayon pool.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let command = cfg.command.ok_or_else(|| Error::Config("no command given".into()))?;
    let mut art = Artifacts::new(cfg)?;
    let headline = match command {
        CommandKind::Certify => run_certify(cfg, &mut art)?,
        CommandKind::Radius => run_radius(cfg, &mut art)?,
        CommandKind::Sample => run_sample(cfg, &mut art)?,
        CommandKind::Pareto => run_pareto(cfg, &mut art)?,
        CommandKind::Verify => run_verify(cfg, &mut art)?,
        CommandKind::Bench => run_bench(cfg, &mut art)?,
    };
    Ok(RunOutcome {
        files: art.files,
        headline,
    })
}

/// Runs on a dedicated pool of `workers` threads.
pub fn run_with_workers(cfg: &RunConfig) -> Result<RunOutcome> {
    let workers = cfg.workers.unwrap_or(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a pool of {workers} workers: {e}")))?;
    pool.install(|| run(cfg))
}

fn build_classifier(cfg: &RunConfig) -> Result<Box<dyn Classifier>> {
    match &cfg.classifier {
        Some(ClassifierSpec::Synthetic(s)) => Ok(Box::new(s.clone())),
        Some(ClassifierSpec::External(e)) => Ok(Box::new(ExternalClassifier::new(e.clone())?)),
        None => Err(Error::Config("this command needs a `classifier`".into())),
    }
}

fn counts(cfg: &RunConfig) -> SampleCounts {
    SampleCounts { n1: cfg.n1, n2: cfg.n2 }
}

fn run_certify(cfg: &RunConfig, art: &mut Artifacts) -> Result<String> {
    let family = cfg.require_family()?;
    let threat = cfg.require_threat()?;
    let grid = cfg.grid()?;
    let budget = cfg.budget()?;
    let inputs = cfg.resolved_inputs(family.dim())?;
    let mut clf = build_classifier(cfg)?;
    let mut certs = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        let stream = RandomStream::new(cfg.seed(), i as u64);
        let c = match (cfg.pilot_n1, cfg.pilot_n2) {
            (Some(n1), Some(n2)) => certify_practical(
                &input.id,
                &mut clf,
                &input.x,
                &family,
                &threat,
                &grid,
                SampleCounts { n1, n2 },
                counts(cfg),
                &budget,
                &stream,
            )?,
            _ => certify(&input.id, &mut clf, &input.x, &family, &threat, &grid, counts(cfg), &budget, &stream)?,
        };
        certs.push(c);
    }
    art.result(cfg, json!({ "certificates": &certs }))?;
    art.csv("summary.csv", |w| Certificate::write_summary_csv(&certs, w))?;
    art.csv("trace.csv", |w| {
        writeln!(w, "input_id,lambda,d_mean,epsilon,std_err,bound")?;
        for c in &certs {
            for t in &c.trace {
                writeln!(w, "{},{},{},{},{},{}", c.input_id, t.lambda, t.d_mean, t.epsilon, t.std_err, t.bound)?;
            }
        }
        Ok(())
    })?;
    let n_cert = certs.iter().filter(|c| c.certified).count();
    Ok(format!("certified {n_cert} of {} inputs", certs.len()))
}

#[derive(Serialize)]
struct ClosedFormRadius {
    closed_form: ClosedFormKind,
    p0: f64,
    p_b: Option<f64>,
    scale: f64,
    radius: f64,
    raw_radius: f64,
    certified: bool,
    saturated: bool,
}

fn run_radius(cfg: &RunConfig, art: &mut Artifacts) -> Result<String> {
    if let Some(kind) = cfg.closed_form {
        let p0 = cfg.p0.ok_or_else(|| Error::Config("closed-form radius needs `p0`".into()))?;
        let scale = cfg.scale.or(cfg.family.map(|f| f.variant().scale())).unwrap_or(1.0);
        let out: RadiusOutcome = match kind {
            ClosedFormKind::Cohen => cohen_radius(p0, scale)?,
            ClosedFormKind::Teng => teng_radius(p0, scale)?,
            ClosedFormKind::Bilateral => {
                let pb = cfg.p_b.ok_or_else(|| Error::Config("bilateral radius needs `p_b`".into()))?;
                gaussian_bilateral_radius(p0, pb, scale)?
            }
        };
        let r = ClosedFormRadius {
            closed_form: kind,
            p0,
            p_b: cfg.p_b,
            scale,
            radius: if out.certifiable { out.radius } else { 0.0 },
            raw_radius: out.radius,
            certified: out.certifiable,
            saturated: out.saturated,
        };
        art.result(cfg, &r)?;
        art.csv("summary.csv", |w| {
            writeln!(w, "input_id,p0_lower,radius,bound,certified")?;
            writeln!(w, "closed_form,{},{},{},{}", p0, r.radius, 0.5, r.certified)?;
            Ok(())
        })?;
        return Ok(format!("closed-form radius {} (certified: {})", r.radius, r.certified));
    }
    let family = cfg.require_family()?;
    let threat = cfg.require_threat()?;
    let grid = cfg.grid()?;
    let budget = cfg.budget()?;
    let inputs = cfg.resolved_inputs(family.dim())?;
    let mut clf = build_classifier(cfg)?;
    let mut reports = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        let stream = RandomStream::new(cfg.seed(), i as u64);
        reports.push(certify_radius(
            &input.id,
            &mut clf,
            &input.x,
            &family,
            &threat,
            &grid,
            counts(cfg),
            &budget,
            cfg.radius_iterations,
            &stream,
        )?);
    }
    art.result(cfg, json!({ "reports": &reports }))?;
    art.csv("summary.csv", |w| dualcert::pipeline::RadiusReport::write_summary_csv(&reports, w))?;
    art.csv("probes.csv", |w| {
        writeln!(w, "input_id,radius,bound,lambda_star,certified")?;
        for r in &reports {
            for p in &r.probes {
                writeln!(w, "{},{},{},{},{}", r.input_id, p.radius, p.bound, p.lambda_star, p.certified)?;
            }
        }
        Ok(())
    })?;
    let best = reports.iter().map(|r| r.radius).fold(0.0, f64::max);
    Ok(format!("largest certified radius {best} over {} inputs", reports.len()))
}

fn run_sample(cfg: &RunConfig, art: &mut Artifacts) -> Result<String> {
    let family = cfg.require_family()?;
    let stream = RandomStream::new(cfg.seed(), 0);
    let batch = family.sample(cfg.sample_n, &stream)?;
    let mean = |norm: Norm| batch.rows().map(|z| norm.of(z)).sum::<f64>() / batch.len() as f64;
    let tel = batch.telemetry;
    art.result(
        cfg,
        json!({
            "family": family,
            "n": batch.len(),
            "dim": batch.dim,
            "seed": batch.seed,
            "stream_id": batch.stream_id,
            "telemetry": tel,
            "acceptance_rate": tel.acceptance_rate(),
            "mean_norm": { "l1": mean(Norm::L1), "l2": mean(Norm::L2), "linf": mean(Norm::Linf) },
        }),
    )?;
    art.csv("summary.csv", |w| {
        writeln!(w, "family,dim,n,proposals,accepted,acceptance_rate")?;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            family.variant().tag(),
            batch.dim,
            batch.len(),
            tel.proposals,
            tel.accepted,
            tel.acceptance_rate()
        )?;
        Ok(())
    })?;
    art.csv("samples.csv", |w| batch.write_csv(w))?;
    Ok(format!("drew {} samples", batch.len()))
}

fn run_pareto(cfg: &RunConfig, art: &mut Artifacts) -> Result<String> {
    let p = &cfg.pareto;
    let threat = cfg.pareto_threat();
    let truth = SyntheticClassifier::BallIndicator {
        norm: Norm::L2,
        center: vec![0.0; p.dim],
        radius: p.truth_radius,
    };
    let mut families = Vec::new();
    for tag in &p.families {
        families.extend(family_grid(tag, p.dim, &p.ks, &p.scales).map_err(|e| Error::Config(e.to_string()))?);
    }
    let report = pareto_sweep(&truth, &vec![0.0; p.dim], &threat, &families, p.n, &RandomStream::new(cfg.seed(), 0))?;
    let lead = &p.families[0];
    let checks: Vec<DominanceCheck> = p.families[1..]
        .iter()
        .flat_map(|other| p.accuracy_floors.iter().map(|&floor| report.frontier_dominance(lead, other, p.guard_se, floor)))
        .collect();
    art.result(cfg, json!({ "report": &report, "dominance": &checks }))?;
    art.csv("summary.csv", |w| {
        writeln!(w, "dominant,other,min_accuracy,shared_lo,shared_hi,checked,worst_shortfall,holds")?;
        for c in &checks {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                c.dominant, c.other, c.min_accuracy, c.shared_range.0, c.shared_range.1, c.checked, c.worst_shortfall, c.holds
            )?;
        }
        Ok(())
    })?;
    art.csv("pareto.csv", |w| report.write_csv(w))?;
    let held = checks.iter().filter(|c| c.holds).count();
    Ok(format!("{} configurations; {held} of {} dominance checks hold", report.points.len(), checks.len()))
}

#[derive(Serialize)]
struct ExperimentOutcome {
    name: &'static str,
    passed: bool,
    detail: String,
    rows: Value,
}

fn run_verify(cfg: &RunConfig, art: &mut Artifacts) -> Result<String> {
    let v = &cfg.verify;
    let budget = cfg.budget()?;
    let grid = cfg.grid()?;
    let mut outcomes = Vec::new();
    for (ei, &exp) in v.experiments.iter().enumerate() {
        let stream = RandomStream::new(cfg.seed(), ei as u64);
        let outcome = match exp {
            Experiment::OracleChain => {
                let rows = oracle_chain(&DEFAULT_TRIPLES, v.n_mc, &stream)?;
                art.csv("oracle_chain.csv", |w| write_oracle_chain_csv(&rows, w))?;
                let failed = rows.iter().filter(|r| !r.passed).count();
                ExperimentOutcome {
                    name: exp.name(),
                    passed: failed == 0,
                    detail: format!("{failed} of {} triples outside tolerance", rows.len()),
                    rows: serde_json::to_value(&rows)?,
                }
            }
            Experiment::GaussianRecovery | Experiment::LaplaceRecovery => {
                let kind = if exp == Experiment::GaussianRecovery {
                    RecoveryKind::Gaussian
                } else {
                    RecoveryKind::Laplace
                };
                let rows = closed_form_recovery(
                    kind,
                    2,
                    1.0,
                    &[0.6, 0.75, 0.9, 0.99],
                    &[0.1, 0.5, 1.0],
                    &grid,
                    v.n_mc,
                    budget.alpha_mc,
                    &stream,
                )?;
                art.csv(&format!("{}.csv", exp.name()), |w| write_recovery_csv(kind, &rows, w, true))?;
                let failed = rows.iter().filter(|r| !r.passed).count();
                let worst = rows.iter().map(|r| r.gap / r.tolerance).fold(0.0, f64::max);
                ExperimentOutcome {
                    name: exp.name(),
                    passed: failed == 0,
                    detail: format!("{failed} of {} outside tolerance; worst gap/tolerance {worst:.3}", rows.len()),
                    rows: serde_json::to_value(&rows)?,
                }
            }
            Experiment::WorstDelta => {
                let cases = worst_delta_cases()?;
                let mut reports = Vec::new();
                for (f, t) in &cases {
                    reports.push(worst_delta_grid_check(f, t, &[0.5, 1.0, 2.0], v.grid_resolution)?);
                }
                art.csv("worst_delta.csv", |w| {
                    for (i, r) in reports.iter().enumerate() {
                        r.write_csv(&mut *w, i == 0)?;
                    }
                    Ok(())
                })?;
                let failed = reports.iter().filter(|r| !r.passed).count();
                ExperimentOutcome {
                    name: exp.name(),
                    passed: failed == 0,
                    detail: format!("{failed} of {} (family, threat) pairs failed", reports.len()),
                    rows: serde_json::to_value(&reports)?,
                }
            }
            Experiment::Coverage => {
                let mut rows: Vec<(String, CoverageResult, f64)> = Vec::new();
                for (i, p) in [0.55, 0.8, 0.95].into_iter().enumerate() {
                    let r = clopper_pearson_coverage(p, v.cp_trials, budget.alpha_p0, v.cp_replicates, &stream.substream(i as u64))?;
                    rows.push(("clopper_pearson".into(), r, 1.0 - budget.alpha_p0 - 0.01));
                }
                for (i, (s, r, l)) in [(1.0, 1.0, 1.0), (1.0, 0.5, 2.0)].into_iter().enumerate() {
                    let c = hoeffding_coverage(s, r, l, v.hoeffding_n, budget.alpha_mc, v.hoeffding_replicates, &stream.substream(10 + i as u64))?;
                    rows.push(("hoeffding".into(), c, 1.0 - budget.alpha_mc));
                }
                art.csv("coverage.csv", |w| {
                    writeln!(w, "bound,parameter,trials,alpha,replicates,covered,coverage,required")?;
                    for (name, c, req) in &rows {
                        writeln!(
                            w,
                            "{name},{},{},{},{},{},{},{req}",
                            c.parameter, c.trials, c.alpha, c.replicates, c.covered, c.coverage
                        )?;
                    }
                    Ok(())
                })?;
                let failed = rows.iter().filter(|(_, c, req)| c.coverage < *req).count();
                ExperimentOutcome {
                    name: exp.name(),
                    passed: failed == 0,
                    detail: format!("{failed} of {} coverage runs below the required level", rows.len()),
                    rows: serde_json::to_value(rows.iter().map(|r| &r.1).collect::<Vec<_>>())?,
                }
            }
            Experiment::Moments => {
                let sig: Vec<f64> = (1..=40).map(|i| i as f64 / 40.0).collect();
                let ks: Vec<f64> = (0..=97).map(f64::from).collect();
                let curve = mean_variance_curve(100, &sig, &ks)?;
                art.csv("moments.csv", |w| curve.write_csv(w))?;
                let slope = MeanVarianceCurve::loglog_slope(&curve.sigma_curve);
                let rs = MeanVarianceCurve::variance_ratio_at_mean_fraction(&curve.sigma_curve, 0.5).unwrap_or(f64::NAN);
                let rk = MeanVarianceCurve::variance_ratio_at_mean_fraction(&curve.k_curve, 0.5).unwrap_or(f64::NAN);
                ExperimentOutcome {
                    name: exp.name(),
                    passed: (slope - 2.0).abs() <= 0.05 && rk > rs,
                    detail: format!("sigma slope {slope:.4}; variance ratio at half mean: k {rk:.4}, sigma {rs:.4}"),
                    rows: serde_json::to_value(&curve)?,
                }
            }
            Experiment::ThinShell => {
                let rep = thin_shell_report(&v.thin_shell_dims, v.thin_shell_n, 0.05, &stream)?;
                art.csv("thin_shell.csv", |w| rep.write_csv(w))?;
                let ok = rep
                    .rows
                    .iter()
                    .filter(|r| r.dim >= 1000)
                    .all(|r| r.gaussian_abs >= 0.99 && r.laplace_chebyshev >= 0.95);
                ExperimentOutcome {
                    name: exp.name(),
                    passed: ok,
                    detail: "fractions inside the concentration intervals at d >= 1000".into(),
                    rows: serde_json::to_value(&rep)?,
                }
            }
        };
        outcomes.push(outcome);
    }
    art.result(cfg, json!({ "experiments": &outcomes }))?;
    art.csv("summary.csv", |w| {
        writeln!(w, "experiment,passed,detail")?;
        for o in &outcomes {
            writeln!(w, "{},{},\"{}\"", o.name, o.passed, o.detail.replace('"', "\"\""))?;
        }
        Ok(())
    })?;
    let passed = outcomes.iter().filter(|o| o.passed).count();
    Ok(format!("{passed} of {} experiments passed", outcomes.len()))
}

/// The (family, threat) pairs with a proven worst-case shift.
pub fn worst_delta_cases() -> Result<Vec<(SmoothingFamily, ThreatModel)>> {
    Ok(vec![
        (SmoothingFamily::l2_power_tail(2, 0.5, 1.0)?, ThreatModel::new(Norm::L2, 0.5)?),
        (SmoothingFamily::laplacian(2, 1.0)?, ThreatModel::new(Norm::L1, 0.5)?),
        (SmoothingFamily::l1_power_tail(2, 0.5, 1.0)?, ThreatModel::new(Norm::L1, 0.5)?),
        (SmoothingFamily::mixed_norm(2, 1.0, 1.0)?, ThreatModel::new(Norm::Linf, 0.5)?),
    ])
}

#[derive(Serialize)]
struct BenchItem {
    name: &'static str,
    n: usize,
    /// Deterministic fingerprint of the work done.
    checksum: f64,
}

fn run_bench(cfg: &RunConfig, art: &mut Artifacts) -> Result<String> {
    let family = match cfg.family {
        Some(f) => f,
        None => SmoothingFamily::gaussian(10, 1.0)?,
    };
    let d = family.dim();
    let threat = match cfg.threat {
        Some(t) => t,
        None => ThreatModel::new(
            match family.variant().tag() {
                "laplacian" | "l1_power_tail" => Norm::L1,
                "linf_pure" | "mixed_norm" => Norm::Linf,
                _ => Norm::L2,
            },
            0.25,
        )?,
    };
    let n = cfg.bench.n;
    let wd = worst_delta(&threat, &family)?;
    let truth = SyntheticClassifier::BallIndicator {
        norm: Norm::L2,
        center: vec![0.0; d],
        radius: (d as f64).sqrt() * family.variant().scale(),
    };
    let grid = cfg.grid()?;
    let budget = cfg.budget()?;
    let x0 = vec![0.0; d];
    type Job<'a> = Box<dyn Fn(&RandomStream) -> Result<(f64, SamplerTelemetry)> + 'a>;
    let jobs: Vec<(&'static str, Job)> = vec![
        (
            "sample",
            Box::new(|s: &RandomStream| {
                let b = family.sample(n, s)?;
                Ok((b.points.iter().sum::<f64>(), b.telemetry))
            }),
        ),
        (
            "ratio_sample",
            Box::new(|s: &RandomStream| {
                let r = RatioSample::draw(&family, &wd.vector, n, s)?;
                Ok((r.mean_and_std_err(1.0).0, r.telemetry))
            }),
        ),
        (
            "success_counts",
            Box::new(|s: &RandomStream| {
                let ev = success_counts(&mut truth.clone(), &x0, &family, n, s)?;
                Ok((ev.successes as f64, SamplerTelemetry::default()))
            }),
        ),
        (
            "certify",
            Box::new(|s: &RandomStream| {
                let c = certify("bench", &mut truth.clone(), &x0, &family, &threat, &grid, SampleCounts { n1: n, n2: n }, &budget, s)?;
                Ok((c.bound, SamplerTelemetry::default()))
            }),
        ),
    ];
    let mut items = Vec::new();
    let mut timings = Vec::new();
    for (ji, (name, job)) in jobs.iter().enumerate() {
        let stream = RandomStream::new(cfg.seed(), ji as u64);
        let mut checksum = f64::NAN;
        for rep in 0..cfg.bench.repeats {
            let t = Instant::now();
            let (c, _) = job(&stream)?;
            timings.push((*name, rep, t.elapsed().as_secs_f64()));
            checksum = c;
        }
        items.push(BenchItem { name, n, checksum });
    }
    // timings stay out of result.json so reruns compare byte for byte
    art.result(cfg, json!({ "family": family, "threat": threat, "benchmarks": &items }))?;
    art.csv("bench.csv", |w| {
        writeln!(w, "name,n,repeat,seconds,rows_per_second")?;
        for (name, rep, secs) in &timings {
            writeln!(w, "{name},{n},{rep},{secs},{}", n as f64 / secs)?;
        }
        Ok(())
    })?;
    art.csv("summary.csv", |w| {
        writeln!(w, "name,n,median_seconds,rows_per_second")?;
        for it in &items {
            let mut t: Vec<f64> = timings.iter().filter(|x| x.0 == it.name).map(|x| x.2).collect();
            t.sort_by(f64::total_cmp);
            let med = t[t.len() / 2];
            writeln!(w, "{},{},{med},{}", it.name, n, n as f64 / med)?;
        }
        Ok(())
    })?;
    Ok(format!("{} benchmarks x {} repeats at n = {n}", items.len(), cfg.bench.repeats))
}
