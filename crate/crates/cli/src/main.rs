//! `camber` — audits, solves, and dissects weighted fourth-order impulsive
//! boundary value problems described by small plain-text files.

mod bundled;
mod commands;
mod out;
mod probfile;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "camber",
    version,
    about = "Variational multiplicity search and data audits for impulsive fourth-order problems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Audit the structural conditions on the problem data, raw and cutoff-modified
    Check(CheckArgs),
    /// Find several small critical points by deflated descent and export them
    Solve(SolveArgs),
    /// Scan the fibering map along one interpolated bump direction
    Fiber(FiberArgs),
    /// Sample the embedding inequalities on random mesh fields
    Norms(NormsArgs),
    /// Write the bundled reference problem file
    Example4(Example4Args),
}

/// Where the problem comes from: exactly one of a file or the bundled
/// reference data.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Problem description file
    #[arg(long, value_name = "FILE")]
    problem: Option<PathBuf>,
    /// Use the bundled reference problem instead of a file
    #[arg(long)]
    example4: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    source: Source,
    /// Sample count for each sampling audit
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Seed for the audit sample draws
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Override the perturbation scale from the problem file
    #[arg(long, value_name = "EPS", allow_hyphen_values = true)]
    epsilon: Option<f64>,
    /// Quadrature tolerance for data antiderivatives
    #[arg(long, default_value_t = 1e-10)]
    tol_quadrature: f64,
    /// Write report.json / report.txt / manifest.json into this directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Replace an existing output directory
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    /// How many accepted nontrivial critical points to look for
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Override the perturbation scale from the problem file
    #[arg(long, value_name = "EPS", allow_hyphen_values = true)]
    epsilon: Option<f64>,
    /// Mesh resolution between consecutive partition points
    #[arg(long, default_value_t = 8)]
    elements_per_segment: usize,
    /// Output directory (created atomically)
    #[arg(long, default_value = "camber-out")]
    out: PathBuf,
    /// Worker threads for the per-solution exports
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Replace an existing output directory
    #[arg(long)]
    force: bool,
    /// Dual-norm gradient tolerance, relative to 1 + |energy|
    #[arg(long, default_value_t = 1e-9)]
    tol_gradient: f64,
    /// Energy-norm separation below which two points count as the same
    #[arg(long, default_value_t = 1e-6)]
    tol_distinctness: f64,
    /// Quadrature tolerance for data antiderivatives
    #[arg(long, default_value_t = 1e-10)]
    tol_quadrature: f64,
}

#[derive(Args)]
struct FiberArgs {
    #[command(flatten)]
    source: Source,
    /// Which interpolated bump direction to scan (1-based frequency)
    #[arg(long, default_value_t = 1)]
    direction: usize,
    /// Number of scale samples along the scan
    #[arg(long, default_value_t = 240)]
    grid: usize,
    /// Mesh resolution between consecutive partition points
    #[arg(long, default_value_t = 8)]
    elements_per_segment: usize,
    /// Quadrature tolerance for data antiderivatives
    #[arg(long, default_value_t = 1e-10)]
    tol_quadrature: f64,
    /// Output directory for fiber.csv and manifest.json
    #[arg(long, default_value = "camber-fiber")]
    out: PathBuf,
    /// Replace an existing output directory
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct NormsArgs {
    #[command(flatten)]
    source: Source,
    /// Random trial fields per inequality
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Seed for the trial draws
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Mesh resolution between consecutive partition points
    #[arg(long, default_value_t = 8)]
    elements_per_segment: usize,
    /// Write report files into this directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Replace an existing output directory
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct Example4Args {
    /// Destination file
    #[arg(long, default_value = "example4.prob")]
    out: PathBuf,
    /// Replace the destination if it already exists
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.cmd {
        Cmd::Check(a) => commands::check(a),
        Cmd::Solve(a) => commands::solve(a),
        Cmd::Fiber(a) => commands::fiber(a),
        Cmd::Norms(a) => commands::norms(a),
        Cmd::Example4(a) => commands::example4(a),
    };
    match run {
        Ok(code) => code,
        Err(e) => {
            eprintln!("camber: {e}");
            e.exit_code()
        }
    }
}
