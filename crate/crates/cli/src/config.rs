//! Run configuration: one strict JSON document, optionally overridden by
//! flags on top-level scalar fields.

use std::io::Read;
use std::path::{Path, PathBuf};

use dualcert::classifier::ExternalSpec;
use dualcert::discrepancy::LambdaGrid;
use dualcert::lab::log_grid;
use dualcert::{ConfidenceBudget, Error, Norm, Result, SmoothingFamily, SyntheticClassifier, ThreatModel};
use serde::{Deserialize, Serialize};

/// Environment variable consulted for the seed when neither the config nor a
/// flag sets one.
pub const SEED_ENV: &str = "DUALCERT_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Certify,
    Radius,
    Sample,
    Pareto,
    Verify,
    Bench,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Certify => "certify",
            CommandKind::Radius => "radius",
            CommandKind::Sample => "sample",
            CommandKind::Pareto => "pareto",
            CommandKind::Verify => "verify",
            CommandKind::Bench => "bench",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierSpec {
    Synthetic(SyntheticClassifier),
    External(ExternalSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputVector {
    pub id: String,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ClosedFormKind {
    /// Gaussian ℓ2, `σ·Φ⁻¹(p0)`.
    Cohen,
    /// Laplacian ℓ1, `−b·ln 2(1 − p0)`.
    Teng,
    /// Gaussian multi-class, `σ/2·(Φ⁻¹(pA) − Φ⁻¹(pB))`.
    Bilateral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    OracleChain,
    GaussianRecovery,
    LaplaceRecovery,
    WorstDelta,
    Coverage,
    Moments,
    ThinShell,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::OracleChain,
        Experiment::GaussianRecovery,
        Experiment::LaplaceRecovery,
        Experiment::WorstDelta,
        Experiment::Coverage,
        Experiment::Moments,
        Experiment::ThinShell,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::OracleChain => "oracle_chain",
            Experiment::GaussianRecovery => "gaussian_recovery",
            Experiment::LaplaceRecovery => "laplace_recovery",
            Experiment::WorstDelta => "worst_delta",
            Experiment::Coverage => "coverage",
            Experiment::Moments => "moments",
            Experiment::ThinShell => "thin_shell",
        }
    }
}

fn default_ks() -> Vec<f64> {
    let mut ks = vec![0.0];
    ks.extend(log_grid(0.25, 3.9, 7));
    ks
}

fn default_scales() -> Vec<f64> {
    log_grid(0.05, 2.0, 24)
}

fn default_pareto_families() -> Vec<String> {
    ["mixed_norm", "l2_power_tail", "linf_pure"].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParetoSpec {
    pub dim: usize,
    /// Radius of the ℓ2 ball truth `I(‖x‖₂ ≤ r)` centered at `x0 = 0`.
    pub truth_radius: f64,
    pub families: Vec<String>,
    pub ks: Vec<f64>,
    pub scales: Vec<f64>,
    pub n: usize,
    /// Guard band, in combined standard errors, for the dominance checks.
    pub guard_se: f64,
    /// Each dominance check is run once per floor, skipping frontier points
    /// of the other family below that accuracy.
    pub accuracy_floors: Vec<f64>,
}

impl Default for ParetoSpec {
    fn default() -> Self {
        Self {
            dim: 5,
            truth_radius: 0.65,
            families: default_pareto_families(),
            ks: default_ks(),
            scales: default_scales(),
            n: 100_000,
            guard_se: 2.0,
            accuracy_floors: vec![0.0, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub experiments: Vec<Experiment>,
    /// Monte Carlo draws for the oracle chain and the recovery runs.
    pub n_mc: usize,
    pub cp_trials: usize,
    pub cp_replicates: usize,
    pub hoeffding_n: usize,
    pub hoeffding_replicates: usize,
    pub grid_resolution: usize,
    pub thin_shell_dims: Vec<usize>,
    pub thin_shell_n: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            experiments: Experiment::ALL.to_vec(),
            n_mc: 1_000_000,
            cp_trials: 1000,
            cp_replicates: 10_000,
            hoeffding_n: 10_000,
            hoeffding_replicates: 1000,
            grid_resolution: 6,
            thin_shell_dims: vec![1, 10, 100, 1000],
            thin_shell_n: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub n: usize,
    pub repeats: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self { n: 100_000, repeats: 3 }
    }
}

/// Everything a run needs. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<CommandKind>,
    pub family: Option<SmoothingFamily>,
    pub threat: Option<ThreatModel>,
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub lambda_count: usize,
    /// Golden-section steps around the best grid point.
    pub lambda_refine: usize,
    pub n1: usize,
    pub n2: usize,
    /// Pilot sizes; setting both switches `certify` to the two-stage mode.
    pub pilot_n1: Option<usize>,
    pub pilot_n2: Option<usize>,
    pub alpha: f64,
    pub alpha_p0: Option<f64>,
    pub alpha_mc: Option<f64>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputVector>,
    pub inputs_file: Option<PathBuf>,
    pub classifier: Option<ClassifierSpec>,
    pub radius_iterations: usize,
    pub closed_form: Option<ClosedFormKind>,
    pub p0: Option<f64>,
    pub p_b: Option<f64>,
    /// Scale for closed forms when no family is given.
    pub scale: Option<f64>,
    pub sample_n: usize,
    pub pareto: ParetoSpec,
    pub verify: VerifySpec,
    pub bench: BenchSpec,
    pub out: PathBuf,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            family: None,
            threat: None,
            lambda_start: 1e-2,
            lambda_end: 1e4,
            lambda_count: 200,
            lambda_refine: 0,
            n1: 100_000,
            n2: 100_000,
            pilot_n1: None,
            pilot_n2: None,
            alpha: 0.001,
            alpha_p0: None,
            alpha_mc: None,
            seed: None,
            inputs: Vec::new(),
            inputs_file: None,
            classifier: None,
            radius_iterations: 20,
            closed_form: None,
            p0: None,
            p_b: None,
            scale: None,
            sample_n: 1000,
            pareto: ParetoSpec::default(),
            verify: VerifySpec::default(),
            bench: BenchSpec::default(),
            out: PathBuf::from("out"),
            workers: None,
        }
    }
}

/// Flag values; `None` leaves the config untouched.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub alpha: Option<f64>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub lambda_start: Option<f64>,
    pub lambda_end: Option<f64>,
    pub lambda_count: Option<usize>,
    pub lambda_refine: Option<usize>,
    pub radius_iterations: Option<usize>,
    pub closed_form: Option<ClosedFormKind>,
    pub p0: Option<f64>,
    pub p_b: Option<f64>,
    pub scale: Option<f64>,
    pub sample_n: Option<usize>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err(format!("invalid config: {e}")))
    }

    /// Reads a config file, or stdin when `path` is `-`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = if path == Path::new("-") {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| config_err(format!("reading config from stdin: {e}")))?;
            s
        } else {
            std::fs::read_to_string(path).map_err(|e| config_err(format!("reading {}: {e}", path.display())))?
        };
        Self::from_json(&text)
    }

    /// Applies the subcommand, flag overrides and the seed fallback chain
    /// (flag, then config, then `DUALCERT_SEED`, then 0), then validates.
    pub fn resolve(mut self, command: CommandKind, o: Overrides) -> Result<Self> {
        if let Some(c) = self.command {
            if c != command {
                return Err(config_err(format!(
                    "config is for `{}` but the `{}` command was invoked",
                    c.name(),
                    command.name()
                )));
            }
        }
        self.command = Some(command);
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { self.$f = v; } )* };
        }
        set!(alpha, n1, n2, lambda_start, lambda_end, lambda_count, lambda_refine, radius_iterations, sample_n, out);
        macro_rules! set_opt {
            ($($f:ident),*) => { $( if o.$f.is_some() { self.$f = o.$f; } )* };
        }
        set_opt!(seed, workers, closed_form, p0, p_b, scale);
        if self.seed.is_none() {
            self.seed = Some(match std::env::var(SEED_ENV) {
                Ok(s) => s
                    .trim()
                    .parse()
                    .map_err(|_| config_err(format!("{SEED_ENV} must be an unsigned 64-bit integer, got {s:?}")))?,
                Err(_) => 0,
            });
        }
        if self.workers.is_none() {
            self.workers = Some(std::thread::available_parallelism().map_or(1, |n| n.get()));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        if let Some(t) = &self.threat {
            t.validate().map_err(cfg)?;
        }
        self.grid().map_err(cfg)?;
        self.budget().map_err(cfg)?;
        if self.n1 == 0 || self.n2 == 0 {
            return Err(config_err("n1 and n2 must be positive"));
        }
        match (self.pilot_n1, self.pilot_n2) {
            (Some(a), Some(b)) if a == 0 || b == 0 => return Err(config_err("pilot sizes must be positive")),
            (Some(_), None) | (None, Some(_)) => return Err(config_err("set both pilot_n1 and pilot_n2, or neither")),
            _ => {}
        }
        if self.workers == Some(0) {
            return Err(config_err("workers must be at least 1"));
        }
        if self.radius_iterations == 0 {
            return Err(config_err("radius_iterations must be at least 1"));
        }
        if self.sample_n == 0 {
            return Err(config_err("sample_n must be positive"));
        }
        if let Some(s) = self.scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(config_err(format!("scale must be finite and > 0, got {s}")));
            }
        }
        for p in [self.p0, self.p_b].into_iter().flatten() {
            if !(0.0..=1.0).contains(&p) {
                return Err(config_err(format!("probabilities must lie in [0, 1], got {p}")));
            }
        }
        match &self.classifier {
            Some(ClassifierSpec::Synthetic(s)) => s.validate().map_err(cfg)?,
            Some(ClassifierSpec::External(e)) => e.validate().map_err(cfg)?,
            None => {}
        }
        if self.inputs.iter().any(|i| i.x.is_empty()) {
            return Err(config_err("input vectors must be non-empty"));
        }
        let p = &self.pareto;
        if p.dim == 0 || p.n == 0 || p.families.is_empty() || p.ks.is_empty() || p.scales.is_empty() {
            return Err(config_err("pareto needs dim, n and non-empty families, ks and scales"));
        }
        let v = &self.verify;
        if v.n_mc == 0 || v.cp_trials == 0 || v.cp_replicates == 0 || v.hoeffding_n == 0 || v.hoeffding_replicates == 0 {
            return Err(config_err("verify sample counts must be positive"));
        }
        if self.bench.n == 0 || self.bench.repeats == 0 {
            return Err(config_err("bench n and repeats must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<LambdaGrid> {
        Ok(LambdaGrid::log_spaced(self.lambda_start, self.lambda_end, self.lambda_count)?.with_refinement(self.lambda_refine))
    }

    /// `alpha` split evenly unless both parts are given.
    pub fn budget(&self) -> Result<ConfidenceBudget> {
        match (self.alpha_p0, self.alpha_mc) {
            (None, None) => ConfidenceBudget::split_evenly(self.alpha),
            (Some(a), Some(b)) => ConfidenceBudget::new(self.alpha, a, b),
            _ => Err(config_err("set both alpha_p0 and alpha_mc, or neither")),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn require_family(&self) -> Result<SmoothingFamily> {
        self.family.ok_or_else(|| config_err("this command needs a `family`"))
    }

    pub fn require_threat(&self) -> Result<ThreatModel> {
        self.threat.ok_or_else(|| config_err("this command needs a `threat`"))
    }

    /// Inline inputs, then the inputs file; a single all-zero input named
    /// `x0` when neither is given.
    pub fn resolved_inputs(&self, dim: usize) -> Result<Vec<InputVector>> {
        let mut out = self.inputs.clone();
        if let Some(path) = &self.inputs_file {
            out.extend(read_inputs_file(path)?);
        }
        if out.is_empty() {
            out.push(InputVector {
                id: "x0".into(),
                x: vec![0.0; dim],
            });
        }
        Ok(out)
    }

    /// The Pareto threat: the configured one, else `ℓ∞` at 0.1.
    pub fn pareto_threat(&self) -> ThreatModel {
        self.threat.unwrap_or(ThreatModel {
            norm: Norm::Linf,
            radius: 0.1,
        })
    }
}

/// `.json`: an array of `{"id", "x"}`. Anything else: one vector per line,
/// comma- or whitespace-separated, ids `row0`, `row1`, ...; blank lines and
/// `#` comments are skipped.
pub fn read_inputs_file(path: &Path) -> Result<Vec<InputVector>> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("reading {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        return serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())));
    }
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let x = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| config_err(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(InputVector {
            id: format!("row{}", out.len()),
            x,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_strictness() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!((c.n1, c.n2, c.alpha, c.lambda_count), (100_000, 100_000, 0.001, 200));
        assert!(RunConfig::from_json(r#"{"n3": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"pareto": {"dims": 5}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"threat": {"norm": "l2", "radius": 1, "x": 0}}"#).is_err());
        let e = RunConfig::from_json(r#"{"family": {"kind": "l2_power_tail", "dimension": 3, "k": 2.5, "sigma": 1}}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("k < d - 1"), "{e}");
    }

    #[test]
    fn overrides_and_seed_chain() {
        let c = RunConfig::from_json(r#"{"seed": 5, "alpha": 0.01}"#).unwrap();
        let o = Overrides {
            alpha: Some(0.002),
            lambda_count: Some(10),
            ..Default::default()
        };
        let r = c.clone().resolve(CommandKind::Certify, o).unwrap();
        assert_eq!((r.seed, r.alpha, r.lambda_count), (Some(5), 0.002, 10));
        let o = Overrides {
            seed: Some(9),
            ..Default::default()
        };
        assert_eq!(c.resolve(CommandKind::Certify, o).unwrap().seed, Some(9));
        let c = RunConfig::from_json(r#"{"command": "pareto"}"#).unwrap();
        assert!(c.resolve(CommandKind::Certify, Overrides::default()).is_err());
    }

    #[test]
    fn validation_messages() {
        let bad = |s: &str| RunConfig::from_json(s).and_then(|c| c.resolve(CommandKind::Certify, Overrides::default()));
        assert!(bad(r#"{"alpha": 1.5}"#).is_err());
        assert!(bad(r#"{"pilot_n1": 10}"#).is_err());
        assert!(bad(r#"{"threat": {"norm": "l2", "radius": -1}}"#).is_err());
        assert!(bad(r#"{"lambda_start": 5, "lambda_end": 1}"#).is_err());
        assert!(bad(r#"{"classifier": {"synthetic": {"kind": "constant", "label": 3}}}"#).is_err());
        assert!(bad(r#"{"classifier": {"external": {"command": []}}}"#).is_err());
        assert!(bad(r#"{"classifier": {"synthetic": {"kind": "constant", "label": 1}}}"#).is_ok());
    }

    #[test]
    fn inputs_file_formats() {
        let dir = std::env::temp_dir().join(format!("dualcert-inputs-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let txt = dir.join("x.txt");
        std::fs::write(&txt, "# two rows\n1, 2\n\n3 4\n").unwrap();
        let rows = read_inputs_file(&txt).unwrap();
        assert_eq!(rows[1], InputVector { id: "row1".into(), x: vec![3.0, 4.0] });
        let js = dir.join("x.json");
        std::fs::write(&js, r#"[{"id": "a", "x": [0.5]}]"#).unwrap();
        assert_eq!(read_inputs_file(&js).unwrap()[0].id, "a");
        std::fs::write(&txt, "1, nope\n").unwrap();
        assert!(read_inputs_file(&txt).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
