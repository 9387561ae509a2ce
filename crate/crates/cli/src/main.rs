//! `kbound`: generalization-bound audits for dense networks.

mod inspect;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use koopman_bound::bounds::{derive_constants, full_report_with, ReportOptions, Variant};
use koopman_bound::io::load_network;
use koopman_bound::verify::{run_suite, Suite, VerifyOptions};
use koopman_bound::Error;

/// Exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_VERIFY_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "kbound", version, about = "Koopman-operator generalization bounds for dense networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    /// One row per layer and variant.
    Csv,
    /// One row per variant.
    Totals,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Synthetic,
    Digits,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer spectra, condition numbers, and Koopman factors.
    Inspect {
        weights: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Every bound variant with its per-layer breakdown.
    Bound {
        weights: PathBuf,
        /// Sample count.
        #[arg(long)]
        n: usize,
        /// Kernel trace constant; derived from s_0 when omitted.
        #[arg(long = "B")]
        b: Option<f64>,
        /// RKHS norm of the head; derived for gaussian heads when omitted.
        #[arg(long)]
        g_norm: Option<f64>,
        /// Comma-separated per-layer activation operator norms.
        #[arg(long, value_delimiter = ',')]
        sigma_norms: Option<Vec<f64>>,
        /// Comma-separated per-layer G_j factors.
        #[arg(long, value_delimiter = ',')]
        g_factors: Option<Vec<f64>>,
        /// Comma-separated subset of variants.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        /// Fixed cutoff for restricted determinants.
        #[arg(long)]
        weighted_tol: Option<f64>,
        #[arg(long, value_enum, default_value = "json")]
        out: OutFormat,
        /// Write to this file instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train on a desk-scale task and write metrics, spectra, and weights.
    Train {
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
        /// JSON training configuration; task presets are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated seeds for a sweep; overrides --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Digits: train with and without the bound regularizer for each seed.
        #[arg(long)]
        paired: bool,
        /// Digits preset without the regularizer.
        #[arg(long)]
        unregularized: bool,
        /// Variant plotted and correlated against the generalization error.
        #[arg(long, default_value = "injective")]
        bound_variant: String,
        /// Also write an SVG scatter of bound against generalization error.
        #[arg(long)]
        svg: bool,
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
    },
    /// Run self-verification suites and print a JSON verdict.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        candidates: Option<usize>,
        /// Override a named tolerance, `name=value`; repeatable.
        #[arg(long = "tolerance")]
        tolerances: Vec<String>,
        /// Write the verdict to this file instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Command failure with its exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) => 1,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

pub fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

pub fn write_output(path: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure {
            code: 1,
            message: format!("{}: {e}", p.display()),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_bound(
    weights: &PathBuf,
    n: usize,
    b: Option<f64>,
    g_norm: Option<f64>,
    sigma_norms: Option<Vec<f64>>,
    g_factors: Option<Vec<f64>>,
    variants: Option<Vec<String>>,
    weighted_tol: Option<f64>,
    out: OutFormat,
    output: Option<&PathBuf>,
) -> Result<(), Failure> {
    let variants = variants
        .map(|vs| vs.iter().map(|v| v.parse::<Variant>()).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    let net = load_network(weights)?;
    if n == 0 {
        return Err(usage("--n must be positive"));
    }
    let depth = net.depth();
    // a softmax head has no derivable norm and needs --g-norm
    let derived = derive_constants(&net, n, g_norm)?;
    let (mut constants, flags) = (derived.constants, derived.flags);
    if let Some(b) = b {
        constants.b = b;
    }
    if let Some(s) = sigma_norms {
        constants.sigma_norms = s;
    }
    if let Some(g) = g_factors {
        constants.g_factors = g;
    }
    constants.validate(depth)?;
    let opts = ReportOptions {
        variants,
        weighted_tol,
        flags,
        ..Default::default()
    };
    let report = full_report_with(&net, &constants, &opts)?;
    let text = match out {
        OutFormat::Json => report.to_json()? + "\n",
        OutFormat::Csv => report.to_csv()?,
        OutFormat::Totals => report.to_totals_csv()?,
    };
    write_output(output, &text)
}

fn cmd_verify(
    suite: &str,
    draws: Option<usize>,
    candidates: Option<usize>,
    tolerances: &[String],
    output: Option<&PathBuf>,
) -> Result<(), Failure> {
    let suite: Suite = suite.parse()?;
    let mut opts = VerifyOptions::default();
    if let Some(d) = draws {
        opts.draws = d;
    }
    if let Some(c) = candidates {
        opts.candidates = c;
    }
    if opts.draws == 0 || opts.candidates == 0 {
        return Err(usage("--draws and --candidates must be positive"));
    }
    for t in tolerances {
        opts.set_tolerance(t)?;
    }
    let verdict = run_suite(suite, &opts);
    for c in &verdict.checks {
        eprintln!(
            "{} {:<22} {:>8.2}s  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.seconds,
            c.detail
        );
    }
    write_output(output, &(verdict.to_json()? + "\n"))?;
    if verdict.passed {
        Ok(())
    } else {
        let names: Vec<&str> = verdict.failures().map(|c| c.name.as_str()).collect();
        Err(Failure {
            code: EXIT_VERIFY_FAILED,
            message: format!("verification failed: {}", names.join(", ")),
        })
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Inspect { weights, csv } => inspect::cmd_inspect(&weights, csv.as_ref()),
        Command::Bound {
            weights,
            n,
            b,
            g_norm,
            sigma_norms,
            g_factors,
            variants,
            weighted_tol,
            out,
            output,
        } => cmd_bound(&weights, n, b, g_norm, sigma_norms, g_factors, variants, weighted_tol, out, output.as_ref()),
        Command::Train {
            task,
            config,
            seed,
            seeds,
            epochs,
            paired,
            unregularized,
            bound_variant,
            svg,
            out_dir,
        } => train::cmd_train(train::TrainArgs {
            task,
            config,
            seed,
            seeds,
            epochs,
            paired,
            unregularized,
            bound_variant,
            svg,
            out_dir,
        }),
        Command::Verify {
            suite,
            draws,
            candidates,
            tolerances,
            output,
        } => cmd_verify(&suite, draws, candidates, &tolerances, output.as_ref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(f) => {
            eprintln!("kbound: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
