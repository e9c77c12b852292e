mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use osp_core::{BudgetStrategy, Error, Profile, Strategy};

/// Optimal and budgeted resistance selection for Friedkin-Johnsen dynamics.
#[derive(Parser, Debug)]
#[command(name = "osp", version)]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "OSP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build an instance file from an edge list or a synthetic graph.
    Gen(GenArgs),
    /// Solve the unbudgeted problem.
    Solve(SolveArgs),
    /// Run a budgeted heuristic, optionally over several seeds.
    Budget(BudgetArgs),
    /// Check a result file against its instance.
    Verify(VerifyArgs),
    /// Time the unbudgeted strategies.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Edge list with lines `u v [w]`.
    #[arg(long, conflicts_with = "preferential", required_unless_present = "preferential")]
    pub edges: Option<PathBuf>,
    /// Synthetic preferential attachment graph `N:M`.
    #[arg(long, value_parser = parse_pair)]
    pub preferential: Option<(usize, usize)>,
    #[arg(long, default_value = "unbudgeted")]
    pub profile: Profile,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep edge direction instead of adding both orientations.
    #[arg(long)]
    pub directed: bool,
    /// Replace edge weights by random draws from (0, 1].
    #[arg(long)]
    pub random_weights: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value = "optimistic")]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Magnitude of the opinion perturbation.
    #[arg(long, default_value_t = osp_core::instance::DEFAULT_PERTURBATION)]
    pub perturb: f64,
    #[arg(long, default_value_t = osp_core::DEFAULT_DENSE_LIMIT)]
    pub dense_limit: usize,
    #[arg(long)]
    pub max_phase_iterations: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub slope_window: u64,
    #[arg(long, default_value_t = 0.1)]
    pub slope_factor: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BudgetArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value = "bgg")]
    pub strategy: BudgetStrategy,
    #[arg(long)]
    pub k: usize,
    /// Agents per batch: a count (`5`) or a fraction of k (`10%`, `0.1`).
    #[arg(long, default_value = "1")]
    pub batch: osp_core::BatchSize,
    /// First seed; runs use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub runs: u64,
    #[arg(long, default_value_t = osp_core::instance::DEFAULT_PERTURBATION)]
    pub perturb: f64,
    #[arg(long)]
    pub max_phase_iterations: Option<u64>,
    /// Result file for the first seed.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sweep_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long, default_value_t = osp_core::DEFAULT_DENSE_LIMIT)]
    pub dense_limit: usize,
    /// Coordinates checked in spot-check mode.
    #[arg(long, default_value_t = 1000)]
    pub sample: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Strategies to time; all by default.
    #[arg(long, value_delimiter = ',')]
    pub strategy: Vec<Strategy>,
    /// Thread counts to time, e.g. `1,2,4`.
    #[arg(long = "thread-counts", value_delimiter = ',')]
    pub thread_counts: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected N:M")?;
    Ok((
        a.parse().map_err(|_| format!("bad N in {s:?}"))?,
        b.parse().map_err(|_| format!("bad M in {s:?}"))?,
    ))
}

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    VerificationFailed = 1,
    Usage = 2,
    Numerical = 3,
}

pub fn status_of(err: &Error) -> Status {
    match err {
        Error::VerificationFailed { .. } => Status::VerificationFailed,
        Error::SingularSystem { .. } | Error::Inconclusive { .. } | Error::IterationBudgetExceeded { .. } => {
            Status::Numerical
        }
        _ => Status::Usage,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: cannot start {threads} threads: {e}");
        return ExitCode::from(Status::Usage as u8);
    }
    let status = match commands::run(&cli, threads) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            status_of(&e)
        }
    };
    ExitCode::from(status as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_parses_both_halves() {
        assert_eq!(parse_pair("5000:3"), Ok((5000, 3)));
        assert!(parse_pair("5000").is_err());
        assert!(parse_pair("a:3").is_err());
        assert!(parse_pair("5:-1").is_err());
    }

    #[test]
    fn errors_map_to_exit_codes() {
        assert_eq!(status_of(&Error::InvalidConfig("k".into())), Status::Usage);
        assert_eq!(
            status_of(&Error::Parse {
                line: 3,
                message: "bad".into()
            }),
            Status::Usage
        );
        assert_eq!(
            status_of(&Error::IterationBudgetExceeded {
                phase: 1,
                iterations: 9
            }),
            Status::Numerical
        );
    }

    #[test]
    fn arguments_parse() {
        let cli = Cli::try_parse_from([
            "osp",
            "--threads",
            "2",
            "budget",
            "--instance",
            "g.inst",
            "--k",
            "4",
            "--batch",
            "50%",
            "--out",
            "b.res",
        ])
        .unwrap();
        assert_eq!(cli.threads, Some(2));
        let Command::Budget(b) = cli.command else {
            panic!("expected budget")
        };
        assert_eq!(b.strategy, BudgetStrategy::BatchGradient);
        assert_eq!(b.batch.resolve(b.k), 2);
        assert!(Cli::try_parse_from(["osp", "gen", "--out", "x"]).is_err());
        assert!(
            Cli::try_parse_from(["osp", "solve", "--instance", "a", "--strategy", "greedy", "--out", "x"]).is_err()
        );
    }
}
