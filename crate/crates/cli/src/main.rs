//! `bobkov-lab`: sweeps and reports over the bobkov-core routines.
//!
//! Exit codes: 0 when every check passes, 1 when a tolerance is exceeded or a
//! computation fails, 2 on a usage error.

mod commands;
mod format;
mod report;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use bobkov_core::verifier::{TestFunction1D, TestFunction2D};
use clap::{Args, Parser, Subcommand, ValueEnum};

use report::Report;

#[derive(Parser)]
#[command(name = "bobkov-lab", version, about = "Numerical checks of the Bellman-function proof of Bobkov's inequality")]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format; sweeps default to CSV, single objects to JSON.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Seed for randomized corpora.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// HJB residual of M over a (t, p, λ) grid, with y = λΦ(t).
    HjbSweep {
        #[command(flatten)]
        grid: GridArgs,
        /// Bound on the relative residual.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Closed-form partials of a and M against central differences over a grid.
    DerivativeCheck {
        #[command(flatten)]
        grid: GridArgs,
        /// Relative step of the central differences.
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Bound on the relative error.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Deficit of Bobkov's inequality for one test function or a seeded corpus.
    #[command(group = clap::ArgGroup::new("target").required(true).args(["function", "corpus"]))]
    BobkovCheck {
        /// `probit-poly:c0,c1[,c2,c3]`, `const:c` or `blend:w,u,v;w,u,v;…`.
        #[arg(allow_hyphen_values = true)]
        function: Option<TestFunction1D>,
        /// Check this many seeded random functions instead.
        #[arg(long)]
        corpus: Option<usize>,
        /// Deficit at or below which the bound counts as attained.
        #[arg(long, default_value_t = 1e-8)]
        equality_tol: f64,
        /// Bound on sup |r| along the trajectory for the ODE classification.
        #[arg(long, default_value_t = 1e-6)]
        residual_tol: f64,
        /// Allowed negative deficit.
        #[arg(long, default_value_t = 1e-9)]
        inequality_tol: f64,
        /// Bound on |deficit − ∫Ψ|.
        #[arg(long, default_value_t = 1e-7)]
        identity_tol: f64,
    },
    /// Solve M(t, p, a) = y for the slope a.
    #[command(group = clap::ArgGroup::new("mass").required(true).args(["lambda", "y"]))]
    SolveSlope {
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
        #[arg(long, allow_negative_numbers = true)]
        p: f64,
        /// y as a fraction of Φ(t).
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        y: Option<f64>,
        #[arg(long, default_value_t = bobkov_core::slope::DEFAULT_SLOPE_TOL)]
        tol: f64,
    },
    /// Collocation optimum and sampled candidate against the analytic B(t, x, y).
    #[command(
        group = clap::ArgGroup::new("endpoint").required(true).args(["x", "p"]),
        group = clap::ArgGroup::new("mass").required(true).args(["lambda", "y", "slope"])
    )]
    Certify {
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
        /// Endpoint value x = Φ(p).
        #[arg(long)]
        x: Option<f64>,
        /// Endpoint probit p.
        #[arg(long, allow_negative_numbers = true)]
        p: Option<f64>,
        /// y as a fraction of Φ(t).
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        y: Option<f64>,
        /// Take y from the trajectory Φ(as + b) through (t, x) with this slope.
        #[arg(long, allow_negative_numbers = true)]
        slope: Option<f64>,
        /// Collocation nodes.
        #[arg(long, default_value_t = 512)]
        nodes: usize,
    },
    /// Values of M along the trajectory of f at ±T.
    Limits {
        #[arg(allow_hyphen_values = true)]
        function: TestFunction1D,
        /// Horizon T.
        #[arg(long, default_value_t = 7.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Slacks of the tensorization chain for a 2D function or a seeded corpus.
    #[command(group = clap::ArgGroup::new("target").required(true).args(["function", "corpus"]))]
    TensorCheck {
        /// `probit-affine:α,β,c` or `probit-separable:u0,u1,…;v0,v1,…`.
        #[arg(allow_hyphen_values = true)]
        function: Option<TestFunction2D>,
        #[arg(long)]
        corpus: Option<usize>,
        /// Allowed negative slack.
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        /// Bound on the 2D deficit of probit-affine functions.
        #[arg(long, default_value_t = 1e-6)]
        deficit_tol: f64,
    },
}

#[derive(Args)]
struct GridArgs {
    /// `lo:hi:n` or a single value.
    #[arg(long, default_value = "-2:2:6", allow_hyphen_values = true)]
    t: Range,
    #[arg(long, default_value = "-2:2:6", allow_hyphen_values = true)]
    p: Range,
    /// Fractions of Φ(t), each in (0, 1).
    #[arg(long, default_value = "0.1:0.9:5")]
    lambda: Range,
}

/// `n` evenly spaced values from `lo` to `hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let last = (self.n - 1) as f64;
        let mut v: Vec<f64> = (0..self.n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / last)
            .collect();
        v[self.n - 1] = self.hi;
        v
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |tok: &str| -> Result<f64, String> {
            tok.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("`{tok}` is not a finite number"))
        };
        let parts: Vec<&str> = s.split(':').collect();
        let r = match parts.as_slice() {
            [v] => {
                let v = num(v)?;
                Range { lo: v, hi: v, n: 1 }
            }
            [lo, hi, n] => Range {
                lo: num(lo)?,
                hi: num(hi)?,
                n: n.trim().parse().map_err(|_| format!("`{n}` is not a point count"))?,
            },
            _ => return Err("expected `lo:hi:n` or a single value".into()),
        };
        if r.n == 0 {
            return Err("a range needs at least one point".into());
        }
        if r.lo > r.hi || (r.n == 1 && r.lo != r.hi) {
            return Err(format!("empty or ambiguous range `{s}`"));
        }
        Ok(r)
    }
}

/// A bad argument detected after parsing (exit 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<bobkov_core::LabError> for UsageError {
    fn from(e: bobkov_core::LabError) -> Self {
        UsageError(e.to_string())
    }
}

fn run(cli: &Cli) -> Result<(Report, Format), UsageError> {
    let pool = commands::thread_pool()?;
    let (report, default) = match &cli.command {
        Command::HjbSweep { grid, tol } => (commands::hjb_sweep(&pool, grid, *tol)?, Format::Csv),
        Command::DerivativeCheck { grid, step, tol } => {
            (commands::derivative_check(&pool, grid, *step, *tol)?, Format::Csv)
        }
        Command::BobkovCheck {
            function,
            corpus,
            equality_tol,
            residual_tol,
            inequality_tol,
            identity_tol,
        } => {
            let tols = commands::BobkovTolerances {
                equality: *equality_tol,
                residual: *residual_tol,
                inequality: *inequality_tol,
                identity: *identity_tol,
            };
            match (function, corpus) {
                (Some(f), _) => (commands::bobkov_check(f, &tols), Format::Json),
                (None, Some(n)) => (commands::bobkov_corpus(&pool, cli.seed, *n, &tols), Format::Csv),
                (None, None) => unreachable!("clap enforces the target group"),
            }
        }
        Command::SolveSlope { t, p, lambda, y, tol } => {
            (commands::solve_slope(*t, *p, *lambda, *y, *tol)?, Format::Csv)
        }
        Command::Certify { t, x, p, lambda, y, slope, nodes } => {
            let endpoint = commands::Endpoint { x: *x, p: *p };
            let mass = commands::Mass { lambda: *lambda, y: *y, slope: *slope };
            (commands::certify(*t, endpoint, mass, *nodes)?, Format::Json)
        }
        Command::Limits { function, horizon, tol } => {
            (commands::limits(function, *horizon, *tol)?, Format::Json)
        }
        Command::TensorCheck { function, corpus, tol, deficit_tol } => match (function, corpus) {
            (Some(g), _) => (commands::tensor_check(g, *tol, *deficit_tol), Format::Json),
            (None, Some(n)) => {
                (commands::tensor_corpus(&pool, cli.seed, *n, *tol, *deficit_tol), Format::Csv)
            }
            (None, None) => unreachable!("clap enforces the target group"),
        },
    };
    Ok((report, cli.format.unwrap_or(default)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (report, format) = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let text = match format {
        Format::Csv => report.to_csv(&stamp),
        Format::Json => report.to_json(&stamp),
    };
    let written = match &cli.out {
        Some(path) => std::fs::write(path, &text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(1);
    }
    eprint!("{}", report.summary());
    ExitCode::from(report.status().exit_code())
}
