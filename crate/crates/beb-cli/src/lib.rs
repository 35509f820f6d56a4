//! `beb`: command-line analyses of boundary equilibrium bifurcations in
//! impacting hybrid systems.

use std::ffi::OsString;
use std::path::PathBuf;

use beb_core::BebError;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod output;
pub mod parse;
pub mod setup;

use parse::{MuRange, MAX_GRID};

fn finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = finite(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{s:?} must be positive"))
    }
}

fn assignment(s: &str) -> Result<(String, f64), String> {
    parse::parse_assignment(s).map_err(|e| e.to_string())
}

fn bracket(s: &str) -> Result<(f64, f64), String> {
    parse::parse_bracket(s).map_err(|e| e.to_string())
}

fn mu_range(s: &str) -> Result<MuRange, String> {
    parse::parse_mu_range(s, None).map_err(|e| e.to_string())
}

fn list(s: &str) -> Result<Vec<f64>, String> {
    parse::parse_list(s).map_err(|e| e.to_string())
}

fn grid_size(s: &str) -> Result<usize, String> {
    let n: usize = s.trim().parse().map_err(|_| format!("{s:?} is not a positive integer"))?;
    if n == 0 || n > MAX_GRID {
        return Err(format!("must be between 1 and {MAX_GRID}"));
    }
    Ok(n)
}

#[derive(Debug, Parser)]
#[command(name = "beb", version, about = "Boundary equilibrium bifurcations of impacting hybrid systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model specification file (JSON).
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Built-in model: sn3d, pd3d or airfoil_fixture.
    #[arg(long, value_name = "NAME")]
    pub builtin: Option<String>,
    /// Override a builtin parameter or an explicit model entry (`B[1]=0.5`).
    #[arg(long = "param", value_name = "KEY=VALUE", value_parser = assignment)]
    pub params: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Integrator relative tolerance.
    #[arg(long, value_parser = positive)]
    pub rtol: Option<f64>,
    /// Integrator absolute tolerance.
    #[arg(long, value_parser = positive)]
    pub atol: Option<f64>,
    /// Initial-condition selector, recorded in the header.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (standard output when absent).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Sn,
    Pd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObservableArg {
    ImpactVelocity,
    MaxFirstState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ContinueWhat {
    Cycle,
    Curve,
}

#[derive(Debug, Clone, Args)]
pub struct Codim2Args {
    #[arg(long = "type", value_enum)]
    pub kind: KindArg,
    /// Search interval for the family parameter.
    #[arg(long, value_name = "LO:HI", value_parser = bracket)]
    pub bracket: Option<(f64, f64)>,
    /// Parameter varied in the search (builtin name or entry such as `B[1]`).
    #[arg(long, value_name = "NAME")]
    pub family_param: Option<String>,
    #[arg(long, default_value_t = 21, value_parser = grid_size)]
    pub scan_points: usize,
    /// Longest flight time searched for cycles.
    #[arg(long, default_value_t = 60.0, value_parser = positive)]
    pub t_max: f64,
    #[arg(long, default_value_t = 8, value_parser = grid_size)]
    pub max_seeds: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the model hypotheses.
    Validate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Classify the boundary equilibrium bifurcation and report equilibria.
    Classify {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_parser = finite)]
        mu: Option<f64>,
        #[arg(long, value_parser = finite)]
        eta: Option<f64>,
        #[arg(long, value_name = "NAME")]
        family_param: Option<String>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Simulate one trajectory and write it as CSV.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = finite)]
        mu: f64,
        #[arg(long, value_parser = finite)]
        eta: Option<f64>,
        #[arg(long, value_name = "NAME")]
        family_param: Option<String>,
        /// Initial state (comma separated). Defaults to the pseudo-equilibrium
        /// displaced off the surface by (1 + seed) mu.
        #[arg(long, value_parser = list)]
        x0: Option<Vec<f64>>,
        #[arg(long, default_value_t = 100.0, value_parser = positive)]
        t_end: f64,
    },
    /// Brute-force bifurcation diagram by simulation.
    Diagram {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_name = "LO:HI:N", value_parser = mu_range)]
        mu_range: MuRange,
        #[arg(long, value_parser = finite)]
        eta: Option<f64>,
        #[arg(long, value_name = "NAME")]
        family_param: Option<String>,
        #[arg(long, default_value_t = 500.0, value_parser = positive)]
        transient: f64,
        #[arg(long, default_value_t = 200.0, value_parser = positive)]
        window: f64,
        #[arg(long, value_enum, default_value_t = ObservableArg::ImpactVelocity)]
        observable: ObservableArg,
        /// Also start each mu from the final state of the previous one.
        #[arg(long)]
        sweep_up: bool,
    },
    /// Locate a codimension-two point on the line mu = 0.
    Codim2 {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        search: Codim2Args,
    },
    /// Normal-form coefficients at a codimension-two point.
    Coeffs {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        search: Codim2Args,
        /// Parameter used as eta in the coefficients (defaults to the search parameter;
        /// sigma for pd3d).
        #[arg(long, value_name = "NAME")]
        coeff_param: Option<String>,
        /// Report coefficients for the eigenvector pair (-w, -v).
        #[arg(long)]
        flip: bool,
    },
    /// Predicted and computed impact velocities near an SN or PD point.
    Amplitude {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "type", value_enum)]
        kind: KindArg,
        /// Slice on which the bifurcation is located (1.85 for sn3d, 0.82 for pd3d).
        #[arg(long, value_parser = finite)]
        eta: Option<f64>,
        #[arg(long, value_name = "NAME")]
        family_param: Option<String>,
        /// Grid of mu values (default 0.5 mu_c : mu_c : 11).
        #[arg(long, value_name = "LO:HI:N", value_parser = mu_range)]
        mu_range: Option<MuRange>,
        /// Largest mu searched for the bifurcation.
        #[arg(long, default_value_t = 0.05, value_parser = positive)]
        mu_max: f64,
        #[arg(long, default_value_t = 60.0, value_parser = positive)]
        t_max: f64,
        /// Include the transverse drift and centre-manifold curvature terms.
        #[arg(long)]
        shifted: bool,
        /// Write blown-up velocities instead of original ones.
        #[arg(long)]
        blown_up: bool,
    },
    /// Continue cycles in mu, or SN/PD curves in (mu, eta).
    Continue {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = ContinueWhat::Cycle)]
        what: ContinueWhat,
        #[arg(long = "type", value_enum)]
        kind: Option<KindArg>,
        #[arg(long, value_name = "LO:HI", value_parser = bracket)]
        bracket: Option<(f64, f64)>,
        #[arg(long, value_parser = finite)]
        eta: Option<f64>,
        #[arg(long, value_name = "NAME")]
        family_param: Option<String>,
        /// Cycle continuation interval in mu.
        #[arg(long, value_name = "LO:HI", value_parser = bracket)]
        mu: Option<(f64, f64)>,
        #[arg(long, default_value_t = 1e-4, value_parser = positive)]
        step: f64,
        #[arg(long, default_value_t = 1e-3, value_parser = positive)]
        max_step: f64,
        /// Curve continuation: steps and initial arclength step.
        #[arg(long, default_value_t = 50, value_parser = grid_size)]
        steps: usize,
        #[arg(long, default_value_t = 1e-3, value_parser = positive)]
        ds: f64,
        #[arg(long, default_value_t = 60.0, value_parser = positive)]
        t_max: f64,
    },
}

/// Parses argv (including the program name).
pub fn parse_cli<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(args)
}

/// Raised when a model fails its hypotheses.
#[derive(Debug)]
pub struct ValidationFailed(pub String);

impl std::fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "validation failed: {}", self.0)
    }
}

impl std::error::Error for ValidationFailed {}

/// 3 for numerical failures, 2 for everything the user can fix.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(b) = cause.downcast_ref::<BebError>() {
            return if b.is_numerical() { 3 } else { 2 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    2
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match parse_cli(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("beb: {}", line.trim_start_matches("error: "));
            return 2;
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("beb: {e:#}");
            exit_code(&e)
        }
    }
}
