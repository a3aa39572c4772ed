//! Spectrophotometer data ingestion: CSV parsing, dilution filtering,
//! replicate reduction and Gompertz fitting.
//!
//! CSV schema (header required, exactly):
//! `species,time_h,dilution,od,replicate`

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::growth::{self, GompertzParams};
use crate::opt;

pub const CSV_HEADER: [&str; 5] = ["species", "time_h", "dilution", "od", "replicate"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad header: expected `species,time_h,dilution,od,replicate`, got `{0}`")]
    BadHeader(String),
    #[error("line {line}: {message}")]
    BadRecord { line: u64, message: String },
    #[error("need at least {needed} distinct time points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}

/// One raw spectrophotometer reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawReading {
    pub species: String,
    pub time_h: f64,
    /// `d` of a 1:d dilution (1, 2, 5, 10, ...).
    pub dilution_d: u32,
    pub od_measured: f64,
    pub replicate_id: String,
}

/// How a 1:d diluted reading maps to the effective OD of the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DilutionRule {
    /// `d^-1 * OD_d`, the rule as stated in the source protocol. Default.
    #[default]
    Literal,
    /// `d * OD_d`, the physical rescaling of a diluted sample.
    Physical,
}

/// Replicate readings reduced to a mean +/- std curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSeries {
    pub species: String,
    /// Strictly increasing times (hours).
    pub times: Vec<f64>,
    pub mean_a: Vec<f64>,
    /// Sample standard deviation (n-1 denominator; 0 when n = 1).
    pub std_a: Vec<f64>,
    pub count: Vec<usize>,
}

/// Outcome of a Gompertz least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: GompertzParams<f64>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the series carries no growth signal (flat data).
    pub degenerate: bool,
}

/// Parse the fixed-schema CSV; errors carry 1-based line numbers.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<RawReading>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr.headers()?;
        let got: Vec<&str> = headers.iter().collect();
        if got != CSV_HEADER {
            return Err(IngestError::BadHeader(got.join(",")));
        }
    }
    let mut out = Vec::new();
    for result in rdr.records() {
        let record = result?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let parse_f64 = |i: usize, name: &str| -> Result<f64, IngestError> {
            field(i).parse::<f64>().map_err(|_| IngestError::BadRecord {
                line,
                message: format!("cannot parse {name} `{}`", field(i)),
            })
        };
        let time_h = parse_f64(1, "time_h")?;
        let dilution_d: u32 = field(2).parse().map_err(|_| IngestError::BadRecord {
            line,
            message: format!("cannot parse dilution `{}`", field(2)),
        })?;
        let od_measured = parse_f64(3, "od")?;
        if dilution_d < 1 {
            return Err(IngestError::BadRecord {
                line,
                message: "dilution must be >= 1".into(),
            });
        }
        if time_h < 0.0 {
            return Err(IngestError::BadRecord {
                line,
                message: format!("negative time {time_h}"),
            });
        }
        out.push(RawReading {
            species: field(0),
            time_h,
            dilution_d,
            od_measured,
            replicate_id: field(4),
        });
    }
    Ok(out)
}

pub fn read_csv_path(path: &Path) -> Result<Vec<RawReading>, IngestError> {
    read_csv(std::fs::File::open(path)?)
}

/// Drop unreliable readings (`OD_d >= 1`) and map the rest to the
/// effective OD under the chosen dilution rule.
pub fn filter_and_scale(readings: &[RawReading], rule: DilutionRule) -> Vec<(f64, f64)> {
    readings
        .iter()
        .filter(|r| r.od_measured < 1.0)
        .map(|r| {
            let d = r.dilution_d as f64;
            let od = match rule {
                DilutionRule::Literal => r.od_measured / d,
                DilutionRule::Physical => r.od_measured * d,
            };
            (r.time_h, od)
        })
        .collect()
}

/// Group readings whose times differ by at most `grouping_tolerance`
/// (from the first member of the group) and reduce each group to its
/// arithmetic mean and sample standard deviation.
pub fn reduce_replicates(
    scaled: &[(f64, f64)],
    grouping_tolerance: f64,
    species: &str,
) -> ReplicateSeries {
    assert!(grouping_tolerance >= 0.0);
    let mut sorted: Vec<(f64, f64)> = scaled.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut times = Vec::new();
    let mut mean_a = Vec::new();
    let mut std_a = Vec::new();
    let mut count = Vec::new();

    let mut i = 0usize;
    while i < sorted.len() {
        let t0 = sorted[i].0;
        let mut j = i;
        while j < sorted.len() && sorted[j].0 - t0 <= grouping_tolerance {
            j += 1;
        }
        let group = &sorted[i..j];
        let n = group.len();
        let mean_t = group.iter().map(|g| g.0).sum::<f64>() / n as f64;
        let mean = group.iter().map(|g| g.1).sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss = group.iter().map(|g| (g.1 - mean).powi(2)).sum::<f64>();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        times.push(mean_t);
        mean_a.push(mean);
        std_a.push(std);
        count.push(n);
        i = j;
    }
    ReplicateSeries {
        species: species.to_string(),
        times,
        mean_a,
        std_a,
        count,
    }
}

/// Group raw readings by species label.
pub fn split_by_species(readings: &[RawReading]) -> BTreeMap<String, Vec<RawReading>> {
    let mut map: BTreeMap<String, Vec<RawReading>> = BTreeMap::new();
    for r in readings {
        map.entry(r.species.clone()).or_default().push(r.clone());
    }
    map
}

/// Subtract a measured blank, clamping negative means to zero. Returns
/// the clamp count so callers can surface a warning.
pub fn subtract_blank(series: &ReplicateSeries, blank_a: f64) -> (ReplicateSeries, usize) {
    let mut out = series.clone();
    let mut clamped = 0usize;
    for m in &mut out.mean_a {
        *m -= blank_a;
        if *m < 0.0 {
            *m = 0.0;
            clamped += 1;
        }
    }
    (out, clamped)
}

/// Fit options; the defaults match the documented convergence contract.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Relative parameter-change convergence threshold.
    pub tol: f64,
    /// Iteration cap per simplex start.
    pub max_iters: usize,
    /// Freeze the background to a measured blank instead of fitting it.
    pub fixed_background: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 500,
            fixed_background: None,
        }
    }
}

/// Least-squares Gompertz fit over (a, mu, theta, A_bk) by multi-start
/// Nelder-Mead (5 deterministic starts around a heuristic init; ties
/// broken by start index). Non-convergence is reported, never silent.
pub fn fit_gompertz(
    series: &ReplicateSeries,
    init: Option<GompertzParams<f64>>,
    opts: &FitOptions,
) -> Result<FitReport, IngestError> {
    let n = series.times.len();
    if n < 5 {
        return Err(IngestError::TooFewPoints { needed: 5, got: n });
    }

    let max = series.mean_a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = series.mean_a.iter().cloned().fold(f64::INFINITY, f64::min);
    if max - min < 1e-12 {
        // flat series: no growth signal to fit
        return Ok(FitReport {
            params: GompertzParams {
                asymptote_a: 0.0,
                rate_mu: 0.0,
                lag_theta: 0.0,
                background_abk: max.max(0.0),
            },
            residual_rms: 0.0,
            iterations: 0,
            converged: false,
            degenerate: true,
        });
    }

    let fixed_bk = opts.fixed_background;
    let objective = |x: &[f64]| -> f64 {
        let (a, mu, theta) = (x[0], x[1], x[2]);
        let abk = fixed_bk.unwrap_or_else(|| x[3]);
        if a <= 0.0 || mu <= 0.0 || abk < 0.0 {
            return 1e30 * (1.0 + a.min(0.0).abs() + mu.min(0.0).abs() + abk.min(0.0).abs());
        }
        let p = GompertzParams {
            asymptote_a: a,
            rate_mu: mu,
            lag_theta: theta,
            background_abk: abk,
        };
        series
            .times
            .iter()
            .zip(&series.mean_a)
            .map(|(&t, &m)| {
                let v = growth::gompertz_absorbance(t, &p).unwrap_or(f64::INFINITY);
                (v - m) * (v - m)
            })
            .sum()
    };

    let base = init.map(|p| [p.asymptote_a, p.rate_mu, p.lag_theta, p.background_abk])
        .unwrap_or_else(|| heuristic_init(series, fixed_bk));

    // deterministic multi-start around the base point
    let scales: [[f64; 4]; 5] = [
        [1.0, 1.0, 1.0, 1.0],
        [0.5, 2.0, 1.0, 1.0],
        [2.0, 0.5, 1.0, 1.0],
        [1.0, 1.0, 0.5, 1.0],
        [1.5, 1.5, 1.5, 1.0],
    ];

    let mut best: Option<(usize, opt::SimplexResult)> = None;
    let mut total_iters = 0usize;
    for (start_idx, scale) in scales.iter().enumerate() {
        let x0 = [
            (base[0] * scale[0]).max(1e-6),
            (base[1] * scale[1]).max(1e-6),
            base[2] * scale[2],
            base[3].max(0.0),
        ];
        let step = [
            0.25 * x0[0].max(0.01),
            0.25 * x0[1].max(0.01),
            0.5,
            0.05,
        ];
        // polish with restarts inside the iteration budget
        let mut result = opt::nelder_mead(&objective, &x0, &step, opts.tol, opts.max_iters);
        total_iters += result.iterations;
        for _ in 0..2 {
            let small_step: Vec<f64> = result.x.iter().map(|v| 1e-4 * (1.0 + v.abs())).collect();
            let polished = opt::nelder_mead(&objective, &result.x, &small_step, opts.tol, opts.max_iters);
            total_iters += polished.iterations;
            if polished.fx < result.fx {
                result = polished;
            } else {
                result.converged = result.converged || polished.converged;
                break;
            }
        }
        let better = match &best {
            None => true,
            Some((_, b)) => result.fx < b.fx,
        };
        if better {
            best = Some((start_idx, result));
        }
    }

    let (_, best) = best.unwrap();
    let abk = fixed_bk.unwrap_or(best.x[3]).max(0.0);
    Ok(FitReport {
        params: GompertzParams {
            asymptote_a: best.x[0],
            rate_mu: best.x[1],
            lag_theta: best.x[2],
            background_abk: abk,
        },
        residual_rms: (best.fx / n as f64).sqrt(),
        iterations: total_iters,
        converged: best.converged,
        degenerate: false,
    })
}

fn heuristic_init(series: &ReplicateSeries, fixed_bk: Option<f64>) -> [f64; 4] {
    let max = series.mean_a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = series.mean_a.iter().cloned().fold(f64::INFINITY, f64::min);
    let abk = fixed_bk.unwrap_or(min.max(0.0));
    let a = (max - abk).max(1e-3);

    // steepest finite-difference slope locates the linear phase
    let mut mu = 1e-3;
    let mut t_slope = series.times[series.times.len() / 2];
    let mut a_slope = series.mean_a[series.times.len() / 2];
    for w in 0..series.times.len() - 1 {
        let dt = series.times[w + 1] - series.times[w];
        if dt <= 0.0 {
            continue;
        }
        let s = (series.mean_a[w + 1] - series.mean_a[w]) / dt;
        if s > mu {
            mu = s;
            t_slope = 0.5 * (series.times[w] + series.times[w + 1]);
            a_slope = 0.5 * (series.mean_a[w] + series.mean_a[w + 1]);
        }
    }
    // tangent of slope mu through the steepest point crosses A_bk at theta
    let theta = t_slope - (a_slope - abk) / mu;
    [a, mu, theta, abk]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reading(time: f64, d: u32, od: f64) -> RawReading {
        RawReading {
            species: "ecoli".into(),
            time_h: time,
            dilution_d: d,
            od_measured: od,
            replicate_id: "r1".into(),
        }
    }

    #[test]
    fn filter_drops_saturated_and_scales() {
        let rs = vec![reading(0.0, 1, 1.2), reading(0.0, 1, 0.5), reading(0.0, 2, 0.6)];
        let out = filter_and_scale(&rs, DilutionRule::Literal);
        assert_eq!(out, vec![(0.0, 0.5), (0.0, 0.3)]);
        let out = filter_and_scale(&rs, DilutionRule::Physical);
        assert_eq!(out, vec![(0.0, 0.5), (0.0, 1.2)]);
    }

    #[test]
    fn reduce_examples() {
        let s = reduce_replicates(&[(1.0, 0.2)], 0.01, "x");
        assert_eq!(s.mean_a, vec![0.2]);
        assert_eq!(s.std_a, vec![0.0]);
        assert_eq!(s.count, vec![1]);

        let s = reduce_replicates(&[(1.0, 0.1), (1.0, 0.3)], 0.01, "x");
        assert!((s.mean_a[0] - 0.2).abs() < 1e-15);
        assert!((s.std_a[0] - 0.1414213562373095).abs() < 1e-12);
    }

    #[test]
    fn reduce_matches_two_pass_oracle() {
        // deterministic pseudo-random replicates at a few time points
        let mut data = Vec::new();
        let mut state = 42u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for t in 0..4 {
            for _ in 0..7 {
                data.push((t as f64, 0.2 + 0.1 * next()));
            }
        }
        let s = reduce_replicates(&data, 0.01, "x");
        assert_eq!(s.times.len(), 4);
        for (k, &t) in s.times.iter().enumerate() {
            let group: Vec<f64> = data
                .iter()
                .filter(|(tt, _)| (*tt - t).abs() < 1e-9)
                .map(|&(_, v)| v)
                .collect();
            let mean = group.iter().sum::<f64>() / group.len() as f64;
            let var = group.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (group.len() - 1) as f64;
            assert!((s.mean_a[k] - mean).abs() < 1e-14);
            assert!((s.std_a[k] - var.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn csv_schema_enforced() {
        let good = "species,time_h,dilution,od,replicate\necoli,1.5,2,0.4,r1\n";
        let rs = read_csv(good.as_bytes()).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs[0].dilution_d, 2);

        let bad_header = "species,time,dilution,od,replicate\necoli,1.5,2,0.4,r1\n";
        assert!(matches!(read_csv(bad_header.as_bytes()), Err(IngestError::BadHeader(_))));

        let bad_value = "species,time_h,dilution,od,replicate\necoli,abc,2,0.4,r1\n";
        match read_csv(bad_value.as_bytes()) {
            Err(IngestError::BadRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected BadRecord, got {other:?}"),
        }
    }

    fn synthetic_series(p: &GompertzParams<f64>, times: &[f64]) -> ReplicateSeries {
        ReplicateSeries {
            species: "syn".into(),
            times: times.to_vec(),
            mean_a: times
                .iter()
                .map(|&t| growth::gompertz_absorbance(t, p).unwrap())
                .collect(),
            std_a: vec![0.0; times.len()],
            count: vec![1; times.len()],
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-6)
    }

    #[test]
    fn fit_recovers_fig1_parameters() {
        let truth = GompertzParams::new(9.4, 1.7, 2.9, 0.036).unwrap();
        let times: Vec<f64> = (0..25).map(|i| i as f64 * 0.25).collect();
        let series = synthetic_series(&truth, &times);
        let report = fit_gompertz(&series, None, &FitOptions::default()).unwrap();
        assert!(rel_err(report.params.asymptote_a, 9.4) < 1e-4, "{:?}", report.params);
        assert!(rel_err(report.params.rate_mu, 1.7) < 1e-4);
        assert!(rel_err(report.params.lag_theta, 2.9) < 1e-4);
        assert!(report.residual_rms < 1e-6);
    }

    #[test]
    fn fit_recovers_fig3_ecoli_parameters() {
        let truth = GompertzParams::new(0.309, 0.139, 2.634, 0.144).unwrap();
        let times: Vec<f64> = (0..30).map(|i| i as f64 * 0.5).collect();
        let series = synthetic_series(&truth, &times);
        let report = fit_gompertz(&series, None, &FitOptions::default()).unwrap();
        assert!(rel_err(report.params.asymptote_a, 0.309) < 1e-4, "{:?}", report.params);
        assert!(rel_err(report.params.rate_mu, 0.139) < 1e-4);
        assert!(rel_err(report.params.lag_theta, 2.634) < 1e-4);
    }

    #[test]
    fn flat_series_is_degenerate() {
        let series = ReplicateSeries {
            species: "flat".into(),
            times: (0..8).map(|i| i as f64).collect(),
            mean_a: vec![0.25; 8],
            std_a: vec![0.0; 8],
            count: vec![1; 8],
        };
        let report = fit_gompertz(&series, None, &FitOptions::default()).unwrap();
        assert!(report.degenerate);
        assert!(!report.converged);
    }

    #[test]
    fn too_few_points_rejected() {
        let series = ReplicateSeries {
            species: "tiny".into(),
            times: vec![0.0, 1.0, 2.0],
            mean_a: vec![0.1, 0.2, 0.3],
            std_a: vec![0.0; 3],
            count: vec![1; 3],
        };
        assert!(matches!(
            fit_gompertz(&series, None, &FitOptions::default()),
            Err(IngestError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn subtract_blank_clamps() {
        let series = ReplicateSeries {
            species: "x".into(),
            times: vec![0.0, 1.0],
            mean_a: vec![0.05, 0.3],
            std_a: vec![0.0, 0.0],
            count: vec![1, 1],
        };
        let (out, clamped) = subtract_blank(&series, 0.1);
        assert_eq!(out.mean_a[0], 0.0);
        assert!((out.mean_a[1] - 0.2).abs() < 1e-15);
        assert_eq!(clamped, 1);
    }

    proptest! {
        #[test]
        fn filter_is_order_independent_and_idempotent(
            ods in proptest::collection::vec((0.0f64..2.0, 1u32..11), 0..30)
        ) {
            let readings: Vec<RawReading> = ods
                .iter()
                .enumerate()
                .map(|(i, &(od, d))| reading(i as f64, d, od))
                .collect();
            let mut reversed = readings.clone();
            reversed.reverse();
            let mut a = filter_and_scale(&readings, DilutionRule::Literal);
            let mut b = filter_and_scale(&reversed, DilutionRule::Literal);
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            prop_assert_eq!(&a, &b);
            // idempotence: re-filtering already-scaled values with d=1
            let again: Vec<RawReading> = a
                .iter()
                .map(|&(t, od)| reading(t, 1, od))
                .collect();
            let c = filter_and_scale(&again, DilutionRule::Literal);
            let kept: Vec<(f64, f64)> = a.iter().cloned().filter(|&(_, od)| od < 1.0).collect();
            prop_assert_eq!(c, kept);
        }
    }
}
