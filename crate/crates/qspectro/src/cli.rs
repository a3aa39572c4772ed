//! Command implementations behind the `qspectro` binary: scenario
//! files, sweep tables, fit/errorbars/detect/discriminate/simulate.
//!
//! All CSV numbers are printed with 17 significant digits; JSON goes
//! through serde_json (shortest round-trip representation). Every
//! command drops a `manifest.json` holding parameters and input
//! digests, and re-running with identical inputs reproduces the output
//! bytes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{
    species_pair_from_gompertz, DetectionOutcome, HypothesisPair, TestMode, TransmissivityLaw,
};
use crate::growth::{CubicDecayParams, GompertzParams};
use crate::ingest::{self, DilutionRule, FitOptions, FitReport};
use crate::manifest::{fmt_f64, RunManifest};
use crate::metrology::{squeezing_from_db, EnergyBudget, ProbeSource, TruncatedGaussian};
use crate::montecarlo::{self, SimConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: unreadable files, schema violations, bad flags. Exit code 2.
    #[error("input error: {0}")]
    Input(String),
    /// Numerical failure inside the engine. Exit code 3.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ingest::IngestError> for CliError {
    fn from(e: ingest::IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<crate::metrology::MetrologyError> for CliError {
    fn from(e: crate::metrology::MetrologyError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::detection::DetectionError> for CliError {
    fn from(e: crate::detection::DetectionError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::montecarlo::SimError> for CliError {
    fn from(e: crate::montecarlo::SimError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

/// Declarative scenario file: which hypothesis pair to study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// Growth of a species against a blank, cubic transmissivity decay.
    GrowthVsBlank {
        name: String,
        blank_eta: f64,
        cubic: CubicDecayParams<f64>,
        n_tot: f64,
    },
    /// Two-species discrimination from fitted growth curves.
    Discrimination {
        name: String,
        ecoli: GompertzParams<f64>,
        salmo: GompertzParams<f64>,
        n_tot: f64,
        window: (f64, f64),
    },
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn name(&self) -> &str {
        match self {
            Scenario::GrowthVsBlank { name, .. } | Scenario::Discrimination { name, .. } => name,
        }
    }

    pub fn n_tot(&self) -> f64 {
        match self {
            Scenario::GrowthVsBlank { n_tot, .. } | Scenario::Discrimination { n_tot, .. } => *n_tot,
        }
    }

    pub fn window(&self) -> (f64, f64) {
        match self {
            Scenario::GrowthVsBlank { cubic, .. } => cubic.window,
            Scenario::Discrimination { window, .. } => *window,
        }
    }

    pub fn pair(&self, source: ProbeSource<f64>, n_tot: f64) -> Result<HypothesisPair<f64>, CliError> {
        let budget = EnergyBudget::new(n_tot)?;
        Ok(match self {
            Scenario::GrowthVsBlank { blank_eta, cubic, .. } => HypothesisPair {
                null_law: TransmissivityLaw::Constant { eta: *blank_eta },
                alt_law: TransmissivityLaw::Cubic(*cubic),
                source,
                budget,
            },
            Scenario::Discrimination { ecoli, salmo, .. } => {
                species_pair_from_gompertz(*ecoli, *salmo, source, budget)
            }
        })
    }
}

/// Parsed `--source` flag: `coherent | optimal | squeezed:<dB> |
/// thermal:<x>[:<n_bar>]` (thermal per-probe photons default to 1).
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub label: String,
    pub source: ProbeSource<f64>,
}

impl SourceSpec {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let lower = s.to_ascii_lowercase();
        let parts: Vec<&str> = lower.split(':').collect();
        let bad = || CliError::Input(format!("unrecognized source `{s}`"));
        let source = match parts[0] {
            "coherent" if parts.len() == 1 => ProbeSource::Coherent,
            "optimal" if parts.len() == 1 => ProbeSource::OptimalQuantum,
            "squeezed" if parts.len() == 2 => {
                let db: f64 = parts[1].parse().map_err(|_| bad())?;
                let (_, n_bar) = squeezing_from_db(db).map_err(|e| CliError::Input(e.to_string()))?;
                ProbeSource::SqueezedVacuum { n_bar_per_probe: n_bar }
            }
            "thermal" if parts.len() == 2 || parts.len() == 3 => {
                let x: f64 = parts[1].parse().map_err(|_| bad())?;
                let n_bar: f64 = if parts.len() == 3 {
                    parts[2].parse().map_err(|_| bad())?
                } else {
                    1.0
                };
                ProbeSource::CorrelatedThermal {
                    n_bar_per_probe: n_bar,
                    asymmetry_x: x,
                }
            }
            _ => return Err(bad()),
        };
        source.validate().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(Self {
            label: lower.replace(':', "_").replace('.', "p"),
            source,
        })
    }
}

/// Time grid from `--t-min/--t-max/--t-step`.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
}

impl TimeGrid {
    pub fn points(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let n = ((self.t_max - self.t_min) / self.t_step).round() as i64;
        for i in 0..=n.max(0) {
            let t = self.t_min + i as f64 * self.t_step;
            if t <= self.t_max + 1e-12 {
                out.push(t.min(self.t_max));
            }
        }
        out
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Serialize, Deserialize)]
pub struct FitOutput {
    pub species: String,
    pub series: ingest::ReplicateSeries,
    pub report: FitReport,
}

pub fn cmd_fit(
    csv_path: &Path,
    out_dir: &Path,
    species_filter: Option<&str>,
    blank_a: Option<f64>,
    rule: DilutionRule,
) -> Result<Vec<FitOutput>, CliError> {
    ensure_dir(out_dir)?;
    let readings = ingest::read_csv_path(csv_path)?;
    if readings.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no data rows",
            csv_path.display()
        )));
    }
    let mut outputs = Vec::new();
    for (species, rows) in ingest::split_by_species(&readings) {
        if let Some(filter) = species_filter {
            if species != filter {
                continue;
            }
        }
        let scaled = ingest::filter_and_scale(&rows, rule);
        let series = ingest::reduce_replicates(&scaled, 1e-6, &species);
        // a supplied blank freezes the fitted background, means stay raw
        let opts = FitOptions {
            fixed_background: blank_a,
            ..FitOptions::default()
        };
        let report = ingest::fit_gompertz(&series, None, &opts)?;
        outputs.push(FitOutput {
            species,
            series,
            report,
        });
    }
    if outputs.is_empty() {
        return Err(CliError::Input("no species matched the filter".into()));
    }

    let fit_path = out_dir.join("fit.json");
    serde_json::to_writer_pretty(std::fs::File::create(&fit_path)?, &outputs)?;

    let mut manifest = RunManifest::new("fit");
    manifest.input(csv_path)?;
    manifest
        .param("species_filter", species_filter.unwrap_or("<all>"))
        .param("blank_a", blank_a.map(fmt_f64).unwrap_or_else(|| "<fitted>".into()))
        .param("dilution_rule", format!("{rule:?}"));
    manifest.output(&fit_path);
    manifest.write(out_dir)?;
    Ok(outputs)
}

// ---------------------------------------------------------- errorbars

pub fn cmd_errorbars(
    params_file: &Path,
    source: &SourceSpec,
    n_tot: f64,
    grid: &TimeGrid,
    out_dir: &Path,
) -> Result<PathBuf, CliError> {
    ensure_dir(out_dir)?;
    let text = std::fs::read_to_string(params_file)
        .map_err(|e| CliError::Input(format!("{}: {e}", params_file.display())))?;
    let params: GompertzParams<f64> = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", params_file.display())))?;
    let budget = EnergyBudget::new(n_tot)?;

    let path = out_dir.join(format!("errorbars_{}.csv", source.label));
    let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(file, "t,A_mean,A_lo,A_hi")?;
    for t in grid.points() {
        let a = crate::growth::gompertz_absorbance(t, &params)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        let sigma = source.source.sigma_a_bound(a, &budget)?;
        let (mean, lo, hi) = if sigma > 0.0 && a - sigma < 0.0 {
            // near the origin the estimator is truncated at A = 0; the
            // corrected moments shift the bar and make it asymmetric
            // around the plotted curve value
            let (m, s) = TruncatedGaussian::new(a, sigma, 0.0, f64::INFINITY)?.moments()?;
            (a, (m - s).max(0.0), m + s)
        } else {
            (a, a - sigma, a + sigma)
        };
        writeln!(
            file,
            "{},{},{},{}",
            fmt_f64(t),
            fmt_f64(mean),
            fmt_f64(lo),
            fmt_f64(hi)
        )?;
    }
    file.flush()?;

    let mut manifest = RunManifest::new("errorbars");
    manifest.input(params_file)?;
    manifest
        .param("source", &source.label)
        .param("n_tot", fmt_f64(n_tot))
        .param("t_min", fmt_f64(grid.t_min))
        .param("t_max", fmt_f64(grid.t_max))
        .param("t_step", fmt_f64(grid.t_step));
    manifest.output(&path);
    manifest.write(out_dir)?;
    Ok(path)
}

// ---------------------------------------------- detect / discriminate

#[derive(Debug, Serialize)]
pub struct SourceSummary {
    pub source: String,
    /// Probe count implied by the budget split (echoed for squeezed /
    /// thermal sources).
    pub probes_n: u64,
    pub n_bar_per_probe: f64,
    pub squeezed_fi_validity_ok: bool,
    pub detection: DetectionOutcome<f64>,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub scenario: String,
    pub mode: String,
    pub target: f64,
    pub n_tot: f64,
    pub sources: Vec<SourceSummary>,
}

/// Shared engine behind `detect` and `discriminate`: per-source sweep
/// CSV plus a summary with detection times. Returns the summary and
/// whether every source reached the target.
pub fn run_sweep(
    scenario: &Scenario,
    mode: TestMode<f64>,
    target: f64,
    n_tot: f64,
    sources: &[SourceSpec],
    grid: &TimeGrid,
    out_dir: &Path,
    command: &str,
    scenario_path: &Path,
) -> Result<(SweepSummary, bool), CliError> {
    ensure_dir(out_dir)?;
    let window = scenario.window();
    let mut summaries = Vec::new();
    let mut outputs = Vec::new();
    let mut all_reached = true;

    for spec in sources {
        let pair = scenario.pair(spec.source, n_tot)?;
        let path = out_dir.join(format!("sweep_{}.csv", spec.label));
        let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(file, "t,tau_star,p_fp,p_fn,p_mean")?;
        for t in grid.points() {
            let (p_mean, tau_mean) = pair.mean_error(t)?;
            let tau = match mode {
                TestMode::Symmetric => tau_mean,
                TestMode::Asymmetric { fixed_fp } => pair.threshold_for_fp(t, fixed_fp)?,
            };
            let point = pair.error_probabilities(t, tau)?;
            writeln!(
                file,
                "{},{},{},{},{}",
                fmt_f64(t),
                fmt_f64(tau),
                fmt_f64(point.p_fp),
                fmt_f64(point.p_fn),
                fmt_f64(p_mean)
            )?;
        }
        file.flush()?;
        outputs.push(path);

        let detection = pair.detection_time(mode, target, window)?;
        if matches!(detection, DetectionOutcome::NotReached { .. }) {
            all_reached = false;
        }
        let (probes_n, n_bar) = spec.source.probe_split(&pair.budget);
        let eta0 = pair.null_law.eval(window.0).map_err(|e| CliError::Numerical(e.to_string()))?;
        summaries.push(SourceSummary {
            source: spec.label.clone(),
            probes_n,
            n_bar_per_probe: n_bar,
            squeezed_fi_validity_ok: spec.source.in_validity_range(eta0, n_bar),
            detection,
        });
    }

    let summary = SweepSummary {
        scenario: scenario.name().to_string(),
        mode: match mode {
            TestMode::Symmetric => "symmetric".to_string(),
            TestMode::Asymmetric { fixed_fp } => format!("asymmetric(fp={fixed_fp})"),
        },
        target,
        n_tot,
        sources: summaries,
    };
    let summary_path = out_dir.join("summary.json");
    serde_json::to_writer_pretty(std::fs::File::create(&summary_path)?, &summary)?;

    let mut manifest = RunManifest::new(command);
    manifest.input(scenario_path)?;
    manifest
        .param("mode", &summary.mode)
        .param("target", fmt_f64(target))
        .param("n_tot", fmt_f64(n_tot))
        .param(
            "sources",
            sources.iter().map(|s| s.label.clone()).collect::<Vec<_>>().join(","),
        )
        .param("t_min", fmt_f64(grid.t_min))
        .param("t_max", fmt_f64(grid.t_max))
        .param("t_step", fmt_f64(grid.t_step));
    for p in &outputs {
        manifest.output(p);
    }
    manifest.output(&summary_path);
    manifest.write(out_dir)?;
    Ok((summary, all_reached))
}

// ------------------------------------------------------------ simulate

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub scenario: String,
    pub source: String,
    pub config: SimConfig,
    pub time: f64,
    pub tau: f64,
    pub analytic_p_fp: f64,
    pub analytic_p_fn: f64,
    pub test: montecarlo::TestReport,
    pub fp_within_wilson_99: bool,
    pub fn_within_wilson_99: bool,
    pub null_estimator: montecarlo::EstimatorReport,
    pub null_mean_within_3se: bool,
}

pub fn cmd_simulate(
    scenario_path: &Path,
    source: &SourceSpec,
    n_tot_override: Option<f64>,
    trials: u64,
    seed: u64,
    time: Option<f64>,
    tau: Option<f64>,
    out_dir: &Path,
) -> Result<SimulateReport, CliError> {
    ensure_dir(out_dir)?;
    let scenario = Scenario::load(scenario_path)?;
    let n_tot = n_tot_override.unwrap_or(scenario.n_tot());
    let pair = scenario.pair(source.source, n_tot)?;
    let window = scenario.window();
    let t = time.unwrap_or(0.5 * (window.0 + window.1));
    let tau = match tau {
        Some(v) => v,
        None => pair.mean_error(t)?.1,
    };
    let cfg = SimConfig::new(trials, seed).map_err(|e| CliError::Input(e.to_string()))?;

    let analytic = pair.error_probabilities(t, tau)?;
    let test = montecarlo::simulate_test(&pair, t, tau, &cfg)?;
    let (h0, _) = pair.hypotheses_at(t)?;
    let null_estimator = montecarlo::simulate_estimator(&source.source, h0.eta, &pair.budget, &cfg)?;

    let report = SimulateReport {
        scenario: scenario.name().to_string(),
        source: source.label.clone(),
        config: cfg,
        time: t,
        tau,
        analytic_p_fp: analytic.p_fp,
        analytic_p_fn: analytic.p_fn,
        fp_within_wilson_99: test.fp_wilson_99.0 <= analytic.p_fp && analytic.p_fp <= test.fp_wilson_99.1,
        fn_within_wilson_99: test.fn_wilson_99.0 <= analytic.p_fn && analytic.p_fn <= test.fn_wilson_99.1,
        null_mean_within_3se: null_estimator.mean_z_score <= 3.0,
        test,
        null_estimator,
    };
    let path = out_dir.join("simulation.json");
    serde_json::to_writer_pretty(std::fs::File::create(&path)?, &report)?;

    let mut manifest = RunManifest::new("simulate");
    manifest.input(scenario_path)?;
    manifest
        .param("source", &source.label)
        .param("n_tot", fmt_f64(n_tot))
        .param("trials", trials)
        .param("seed", seed)
        .param("t", fmt_f64(t))
        .param("tau", fmt_f64(tau));
    manifest.output(&path);
    manifest.write(out_dir)?;
    Ok(report)
}
