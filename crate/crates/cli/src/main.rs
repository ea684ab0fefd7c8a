mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some shapes or checks failed; outputs for the rest were written.
    Partial,
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_PARTIAL: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "primfit", version, about = "Generate synthetic primitive scenes, fit them and evaluate the fits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a batch of synthetic scenes.
    Generate(GenerateArgs),
    /// Fit every scene of a directory.
    Fit(FitArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Check estimator Jacobians against finite differences.
    Gradcheck(GradcheckArgs),
    /// Paired comparison of two evaluation reports.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Scene spec JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Points per scene.
    #[arg(long)]
    pub n: Option<usize>,
    /// Samples per ground-truth surface.
    #[arg(long)]
    pub m: Option<usize>,
    /// Uniform noise amplitude along the normal.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Primitive count range `lo..hi` (inclusive) or a single count.
    #[arg(long)]
    pub k: Option<String>,
    /// Type mix `plane,sphere,cylinder,cone`.
    #[arg(long)]
    pub mix: Option<String>,
    /// Fraction of points replaced by outliers.
    #[arg(long)]
    pub outliers: Option<f64>,
    /// Smallest allowed area fraction of a primitive.
    #[arg(long)]
    pub min_area: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    /// Seed of the first scene; scene `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// oracle, ransac or ransac+em.
    #[arg(long)]
    pub method: String,
    /// Directory of scene files.
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON with optional "ransac", "em" and "discard" sections; flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ground truth to inject: any of w (membership), n (normals), t (types).
    #[arg(long, default_value = "")]
    pub inject: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub distance_epsilon: Option<f64>,
    #[arg(long)]
    pub normal_epsilon_deg: Option<f64>,
    #[arg(long)]
    pub min_inliers: Option<usize>,
    #[arg(long)]
    pub candidates: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub em_iterations: Option<usize>,
    /// Soft (softmax) membership in EM instead of hard assignment.
    #[arg(long)]
    pub em_soft: bool,
    #[arg(long)]
    pub em_temperature: Option<f64>,
    /// Unassignment distance in EM; 0 disables it.
    #[arg(long)]
    pub em_cap: Option<f64>,
    /// Discard threshold on a column's mean membership.
    #[arg(long)]
    pub discard: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of fit files named like the scenes.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth scene files.
    #[arg(long)]
    pub gt: PathBuf,
    /// Coverage thresholds.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.02])]
    pub eps: Vec<f64>,
    /// Area-fraction bin edges for scale-binned coverage.
    #[arg(long, value_delimiter = ',')]
    pub scale_edges: Option<Vec<f64>>,
    /// Method label; defaults to the method recorded in the fits.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// plane, sphere, cylinder, cone or all.
    #[arg(long, default_value = "all")]
    pub estimator: String,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Points per random segment.
    #[arg(long, default_value_t = 40)]
    pub points: usize,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    pub report_a: PathBuf,
    pub report_b: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = commands::configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_USAGE);
    }
    match commands::run(cli.command) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(EXIT_PARTIAL),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
