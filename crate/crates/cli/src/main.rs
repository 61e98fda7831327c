mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use collabmech::simulation::MechanismKind;
use collabmech::{DistributionSpec, Error, ProblemParams};

use crate::report::Format;

#[derive(Debug, Parser)]
#[command(name = "collabmech", version, about = "Data-sharing mechanisms for collaborative mean estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the corruption modulator alpha.
    SolveAlpha {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Regenerate the data behind the G and E(m) plots.
    Figures {
        #[command(subcommand)]
        which: Figure,
    },
    /// Analytic and Monte Carlo experiments.
    Experiment {
        #[command(subcommand)]
        which: Experiment,
    },
}

#[derive(Debug, Subcommand)]
enum Figure {
    /// G at the upper end of the bracket, per m.
    GCheck(FigureArgs),
    /// E(m) against 5/m.
    EmCheck(FigureArgs),
}

#[derive(Debug, Subcommand)]
enum Experiment {
    /// Compare the recommended strategy with a menu of deviations.
    NashSweep(SimArgs),
    /// Participation versus the best standalone penalty.
    IrCheck(SimArgs),
    /// Price of stability across a range of market sizes.
    PosTable {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value = "5:100", value_parser = parse_range)]
        m_range: (usize, usize),
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo penalty of the recommended strategy against its closed form.
    McVsClosedForm(SimArgs),
    /// Approximate equilibrium check in several dimensions.
    HighdimCheck(SimArgs),
}

#[derive(Debug, Args)]
struct ParamArgs {
    /// Noise standard deviation (upper bound) per coordinate.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Cost per sample; accepts `a/b`. Defaults to the cost giving n* = 10
    /// (n* = 2 when m <= 4).
    #[arg(long, value_parser = parse_rational)]
    cost: Option<f64>,
    #[arg(long, default_value_t = 9)]
    agents: usize,
    #[arg(long, default_value_t = 1)]
    dim: usize,
}

impl ParamArgs {
    fn cost_for(&self, m: usize) -> f64 {
        self.cost.unwrap_or_else(|| default_cost(self.sigma, m, self.dim))
    }

    fn resolve(&self) -> Result<ProblemParams, CliError> {
        self.resolve_for(self.agents)
    }

    fn resolve_for(&self, m: usize) -> Result<ProblemParams, CliError> {
        Ok(ProblemParams::new(self.sigma, self.cost_for(m), m, self.dim)?)
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Defaults to JSON for solve-alpha and CSV otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FigureArgs {
    #[arg(long, default_value = "5:500", value_parser = parse_range)]
    m_range: (usize, usize),
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanismArg {
    Pool,
    SizeCheck,
    CorruptDeploy,
    CrossCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistributionArg {
    Gaussian,
    Uniform,
    Rademacher,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, value_enum, default_value_t = MechanismArg::CrossCheck)]
    mechanism: MechanismArg,
    /// Approximation level for corrupt-deploy.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Offer deviations outside the mechanism's restricted strategy space.
    #[arg(long)]
    unrestricted: bool,
    #[arg(long, default_value_t = 100_000)]
    replications: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated means; each is used in every coordinate.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    mu_grid: Option<Vec<f64>>,
    /// Data distribution, scaled so its per-coordinate variance is sigma^2.
    #[arg(long, value_enum, default_value_t = DistributionArg::Gaussian)]
    distribution: DistributionArg,
    #[command(flatten)]
    output: OutputArgs,
}

impl SimArgs {
    fn mechanism(&self) -> MechanismKind {
        match self.mechanism {
            MechanismArg::Pool => MechanismKind::Pool,
            MechanismArg::SizeCheck => MechanismKind::SizeCheck,
            MechanismArg::CorruptDeploy => MechanismKind::CorruptDeploy { epsilon: self.epsilon },
            MechanismArg::CrossCheck => MechanismKind::CrossCheckCorrupt,
        }
    }

    fn distribution(&self) -> Result<DistributionSpec, CliError> {
        let s = self.params.sigma;
        let mean = vec![0.0; self.params.dim];
        let spec = match self.distribution {
            DistributionArg::Gaussian => DistributionSpec::gaussian(mean, s),
            DistributionArg::Uniform => DistributionSpec::uniform_box(mean, 3f64.sqrt() * s, s),
            DistributionArg::Rademacher => DistributionSpec::scaled_rademacher(mean, s, s),
        };
        Ok(spec?)
    }

    fn mu_grid(&self) -> Option<Vec<Vec<f64>>> {
        self.mu_grid.as_ref().map(|g| g.iter().map(|&v| vec![v; self.params.dim]).collect())
    }
}

/// Cost for which `n*` equals 10, or 2 when m <= 4 (where `n* = (sigma/m) sqrt(d/c)`).
fn default_cost(sigma: f64, m: usize, d: usize) -> f64 {
    let mf = m as f64;
    let s2d = sigma * sigma * d as f64;
    if m <= 4 {
        s2d / (4.0 * mf * mf)
    } else {
        s2d / (100.0 * mf)
    }
}

fn parse_rational(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("numerator: {e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("denominator: {e}"))?;
            if b == 0.0 {
                return Err("zero denominator".into());
            }
            a / b
        }
        None => s.trim().parse().map_err(|e| format!("{e}"))?,
    };
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("expected a positive value, got {s}"));
    }
    Ok(v)
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("lo: {e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("hi: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

#[derive(Debug)]
pub enum CliError {
    Flags(String),
    Core(Error),
    Io(std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Flags(_) | CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                Error::NoSignChange { .. } => 2,
                Error::QuadratureFailure { .. } | Error::Overflow(_) | Error::MaxIterations(_) => 5,
                _ => 1,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Flags(s) => s.clone(),
            CliError::Core(Error::NoCorruptionRegime(m)) => {
                format!("m ≤ 4 uses no corruption (m = {m}); the mechanism simply pools")
            }
            CliError::Core(e) => e.to_string(),
            CliError::Io(e) => format!("i/o error: {e}"),
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let (report, output, default_format) = match cli.command {
        Command::SolveAlpha { params, output } => (commands::solve_alpha(&params)?, output, Format::Json),
        Command::Figures { which } => match which {
            Figure::GCheck(a) => (commands::g_check(a.m_range)?, a.output, Format::Csv),
            Figure::EmCheck(a) => (commands::em_check(a.m_range)?, a.output, Format::Csv),
        },
        Command::Experiment { which } => match which {
            Experiment::NashSweep(a) => (commands::nash_sweep(&a)?, a.output, Format::Csv),
            Experiment::IrCheck(a) => (commands::ir_check(&a)?, a.output, Format::Csv),
            Experiment::PosTable { params, m_range, output } => {
                (commands::pos_table(&params, m_range)?, output, Format::Csv)
            }
            Experiment::McVsClosedForm(a) => (commands::mc_vs_closed_form(&a)?, a.output, Format::Csv),
            Experiment::HighdimCheck(a) => (commands::highdim_check(&a)?, a.output, Format::Csv),
        },
    };
    report.emit(output.format.unwrap_or(default_format), output.out.as_deref())?;
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
