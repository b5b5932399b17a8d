use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualcert_cli::config::ClosedFormKind;
use dualcert_cli::{exit_code, run_with_workers, CommandKind, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "dualcert", version, about = "Dual-bound certification for randomized smoothing")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Certify each input against the configured threat.
    Certify(Common),
    /// Largest certified radius by bisection, or a closed form.
    Radius {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, value_enum)]
        closed_form: Option<ClosedFormKind>,
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long)]
        p_b: Option<f64>,
        /// σ or b for closed forms.
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Draw samples from a smoothing family.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long = "n")]
        n: Option<usize>,
    },
    /// Accuracy/robustness sweep over smoothing configurations.
    Pareto(Common),
    /// Reconcile the engine with closed forms, quadrature and simulations.
    Verify(Common),
    /// Time the sampling, estimation and certification paths.
    Bench(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config file, or `-` for stdin.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    lambda_start: Option<f64>,
    #[arg(long)]
    lambda_end: Option<f64>,
    #[arg(long)]
    lambda_count: Option<usize>,
    #[arg(long)]
    lambda_refine: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            workers: self.workers,
            alpha: self.alpha,
            n1: self.n1,
            n2: self.n2,
            lambda_start: self.lambda_start,
            lambda_end: self.lambda_end,
            lambda_count: self.lambda_count,
            lambda_refine: self.lambda_refine,
            ..Default::default()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common, extra) = match cli.command {
        Cmd::Certify(c) => (CommandKind::Certify, c, Overrides::default()),
        Cmd::Radius {
            common,
            iterations,
            closed_form,
            p0,
            p_b,
            scale,
        } => (
            CommandKind::Radius,
            common,
            Overrides {
                radius_iterations: iterations,
                closed_form,
                p0,
                p_b,
                scale,
                ..Default::default()
            },
        ),
        Cmd::Sample { common, n } => (
            CommandKind::Sample,
            common,
            Overrides {
                sample_n: n,
                ..Default::default()
            },
        ),
        Cmd::Pareto(c) => (CommandKind::Pareto, c, Overrides::default()),
        Cmd::Verify(c) => (CommandKind::Verify, c, Overrides::default()),
        Cmd::Bench(c) => (CommandKind::Bench, c, Overrides::default()),
    };
    let o = Overrides {
        radius_iterations: extra.radius_iterations,
        closed_form: extra.closed_form,
        p0: extra.p0,
        p_b: extra.p_b,
        scale: extra.scale,
        sample_n: extra.sample_n,
        ..common.overrides()
    };
    let result = match &common.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
    .and_then(|c| c.resolve(kind, o))
    .and_then(|c| run_with_workers(&c));
    match result {
        Ok(outcome) => {
            println!("{}", outcome.headline);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
