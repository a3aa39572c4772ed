use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qspectro::cli::{self, CliError, Scenario, SourceSpec, TimeGrid};
use qspectro::detection::{DetectionOutcome, TestMode};
use qspectro::ingest::DilutionRule;

#[derive(Parser)]
#[command(name = "qspectro", version, about = "Quantum-limited absorbance metrology for growth curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit growth parameters to optical-density CSV data.
    Fit {
        /// CSV with header species,time_h,dilution,od,replicate
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
        /// Only fit this species.
        #[arg(long)]
        species: Option<String>,
        /// Freeze the background absorbance instead of fitting it.
        #[arg(long)]
        blank: Option<f64>,
        #[arg(long, value_enum, default_value_t = DilutionArg::Literal)]
        dilution_rule: DilutionArg,
    },
    /// Quantum-limited error bars along a fitted growth curve.
    Errorbars {
        /// JSON file with Gompertz parameters.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
        #[arg(long, default_value = "coherent")]
        source: String,
        /// Total mean photon number spent per time point.
        #[arg(long)]
        n_tot: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Error-probability sweep and detection time, growth vs blank.
    Detect(SweepArgs),
    /// Error-probability sweep and discrimination time between two species.
    Discriminate(SweepArgs),
    /// Monte Carlo check of the analytic error model.
    Simulate {
        /// Scenario JSON file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
        #[arg(long, default_value = "coherent")]
        source: String,
        #[arg(long)]
        n_tot: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Time at which to simulate (default: window midpoint).
        #[arg(long)]
        time: Option<f64>,
        /// Decision threshold (default: minimizer of the mean error).
        #[arg(long)]
        tau: Option<f64>,
    },
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario JSON file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// Probe source, repeatable: coherent | optimal | squeezed:<dB> | thermal:<x>[:<n_bar>]
    #[arg(long = "source", default_values_t = [String::from("coherent")])]
    sources: Vec<String>,
    /// Override the scenario photon budget.
    #[arg(long)]
    n_tot: Option<f64>,
    /// Error-probability target for the detection time.
    #[arg(long, default_value_t = 0.05)]
    target: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Symmetric)]
    mode: ModeArg,
    /// Fixed false-positive rate for asymmetric mode.
    #[arg(long, default_value_t = 0.01)]
    fp: f64,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 0.0)]
    t_min: f64,
    #[arg(long, default_value_t = 3.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.05)]
    t_step: f64,
}

impl GridArgs {
    fn grid(&self) -> TimeGrid {
        TimeGrid {
            t_min: self.t_min,
            t_max: self.t_max,
            t_step: self.t_step,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DilutionArg {
    Literal,
    Physical,
}

impl From<DilutionArg> for DilutionRule {
    fn from(a: DilutionArg) -> Self {
        match a {
            DilutionArg::Literal => DilutionRule::Literal,
            DilutionArg::Physical => DilutionRule::Physical,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Symmetric,
    Asymmetric,
}

fn run_sweep_command(args: &SweepArgs, command: &str, want_growth: bool) -> Result<bool, CliError> {
    let scenario = Scenario::load(&args.input)?;
    let is_growth = matches!(scenario, Scenario::GrowthVsBlank { .. });
    if is_growth != want_growth {
        return Err(CliError::Input(format!(
            "scenario kind does not match the `{command}` command"
        )));
    }
    let mode = match args.mode {
        ModeArg::Symmetric => TestMode::Symmetric,
        ModeArg::Asymmetric => TestMode::Asymmetric { fixed_fp: args.fp },
    };
    let sources = args
        .sources
        .iter()
        .map(|s| SourceSpec::parse(s))
        .collect::<Result<Vec<_>, _>>()?;
    let n_tot = args.n_tot.unwrap_or(scenario.n_tot());
    let (summary, all_reached) = cli::run_sweep(
        &scenario,
        mode,
        args.target,
        n_tot,
        &sources,
        &args.grid.grid(),
        &args.output_dir,
        command,
        &args.input,
    )?;
    for s in &summary.sources {
        match &s.detection {
            DetectionOutcome::Reached { time } => {
                println!("{}: target {} reached at t = {:.3} h (N = {})", s.source, args.target, time, s.probes_n)
            }
            DetectionOutcome::NotReached { final_error } => {
                println!("{}: target {} not reached (final error {:.4})", s.source, args.target, final_error)
            }
        }
    }
    Ok(all_reached)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Fit {
            input,
            output_dir,
            species,
            blank,
            dilution_rule,
        } => {
            let outputs = cli::cmd_fit(&input, &output_dir, species.as_deref(), blank, dilution_rule.into())?;
            for out in &outputs {
                let p = &out.report.params;
                println!(
                    "{}: a = {:.4}, mu = {:.4}, theta = {:.4}, A_bk = {:.4} (rms {:.2e})",
                    out.species, p.asymptote_a, p.rate_mu, p.lag_theta, p.background_abk, out.report.residual_rms
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Errorbars {
            input,
            output_dir,
            source,
            n_tot,
            grid,
        } => {
            let spec = SourceSpec::parse(&source)?;
            let path = cli::cmd_errorbars(&input, &spec, n_tot, &grid.grid(), &output_dir)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Detect(args) => {
            let all_reached = run_sweep_command(&args, "detect", true)?;
            Ok(if all_reached { ExitCode::SUCCESS } else { ExitCode::from(4) })
        }
        Command::Discriminate(args) => {
            let all_reached = run_sweep_command(&args, "discriminate", false)?;
            Ok(if all_reached { ExitCode::SUCCESS } else { ExitCode::from(4) })
        }
        Command::Simulate {
            input,
            output_dir,
            source,
            n_tot,
            trials,
            seed,
            time,
            tau,
        } => {
            let spec = SourceSpec::parse(&source)?;
            let report = cli::cmd_simulate(&input, &spec, n_tot, trials, seed, time, tau, &output_dir)?;
            println!(
                "p_fp analytic {:.6} empirical {:.6}; p_fn analytic {:.6} empirical {:.6}",
                report.analytic_p_fp, report.test.empirical_fp, report.analytic_p_fn, report.test.empirical_fn
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
