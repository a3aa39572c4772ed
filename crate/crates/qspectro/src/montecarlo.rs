//! Stochastic oracle: simulate estimator draws and empirically confirm
//! the analytic error bars, truncated moments and test error
//! probabilities.
//!
//! Reproducibility contract: draws come from a counter-based generator
//! keyed by (seed, trial index, stream), and reductions run over fixed
//! index chunks, so results are bit-identical across runs and across
//! worker counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{DetectionError, HypothesisPair};
use crate::metrology::{EnergyBudget, MetrologyError, ProbeSource, TruncatedGaussian};
use crate::special;

const CHUNK: u64 = 1 << 16;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("trials must be >= 1")]
    NoTrials,
    #[error("sigma/eta ratio {0} exceeds the delta-method precondition 0.1")]
    RatioTooLarge(f64),
    #[error(transparent)]
    Metrology(#[from] MetrologyError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
}

/// Simulation size and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(trials: u64, seed: u64) -> Result<Self, SimError> {
        if trials == 0 {
            return Err(SimError::NoTrials);
        }
        Ok(Self { trials, seed })
    }
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in the open interval (0, 1), keyed by (seed, trial, stream).
#[inline]
pub fn keyed_uniform(seed: u64, trial: u64, stream: u64) -> f64 {
    let z = splitmix(
        seed ^ splitmix(trial.wrapping_add(0x9e37_79b9_7f4a_7c15))
            ^ splitmix(stream.wrapping_mul(0xd1b5_4a32_d192_ed03).wrapping_add(0x2545_f491_4f6c_dd1d)),
    );
    ((z >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF sample of a Gaussian truncated to [lower, upper]; no
/// rejection, so extreme truncation stays unbiased.
#[inline]
pub fn sample_truncated(mean: f64, std: f64, lower: f64, upper: f64, u: f64) -> f64 {
    if std == 0.0 {
        return mean.clamp(lower, upper);
    }
    let p_lo = special::norm_cdf((lower - mean) / std);
    let p_hi = if upper.is_finite() {
        special::norm_cdf((upper - mean) / std)
    } else {
        1.0
    };
    let p = (p_lo + u * (p_hi - p_lo)).clamp(f64::MIN_POSITIVE, 1.0 - 1e-16);
    (mean + std * special::inv_norm_cdf(p)).clamp(lower, if upper.is_finite() { upper } else { f64::MAX })
}

/// Deterministic chunked parallel reduction over trial indices.
fn reduce_chunks<A, F>(trials: u64, per_chunk: F) -> A
where
    A: Send + Accumulate,
    F: Fn(std::ops::Range<u64>) -> A + Sync,
{
    let n_chunks = trials.div_ceil(CHUNK);
    let partials: Vec<A> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            per_chunk(lo..(lo + CHUNK).min(trials))
        })
        .collect();
    // partials arrive in chunk order; fold sequentially for bit-stable sums
    let mut acc = A::zero();
    for p in partials {
        acc.merge(p);
    }
    acc
}

trait Accumulate {
    fn zero() -> Self;
    fn merge(&mut self, other: Self);
}

#[derive(Clone)]
struct MomentAcc {
    sum: f64,
    sum_sq: f64,
    hist: Vec<u64>,
}

impl Accumulate for MomentAcc {
    fn zero() -> Self {
        Self {
            sum: 0.0,
            sum_sq: 0.0,
            hist: vec![0; HIST_BINS],
        }
    }
    fn merge(&mut self, other: Self) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        for (a, b) in self.hist.iter_mut().zip(other.hist) {
            *a += b;
        }
    }
}

impl Accumulate for (u64, u64) {
    fn zero() -> Self {
        (0, 0)
    }
    fn merge(&mut self, other: Self) {
        self.0 += other.0;
        self.1 += other.1;
    }
}

pub const HIST_BINS: usize = 64;

/// Sample statistics of the simulated estimator plus the analytic
/// truncated-Gaussian prediction it is checked against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub trials: u64,
    pub sample_mean: f64,
    pub sample_std: f64,
    /// Counts over `HIST_BINS` equal bins spanning [0, 1].
    pub histogram: Vec<u64>,
    pub analytic_mean: f64,
    pub analytic_std: f64,
    /// |sample - analytic| in units of the mean's standard error.
    pub mean_z_score: f64,
}

/// Draw `eta_hat ~ N(eta_true, qcrb sigma)` truncated to [0, 1] and
/// compare with the analytic truncated moments.
pub fn simulate_estimator(
    source: &ProbeSource<f64>,
    eta_true: f64,
    budget: &EnergyBudget<f64>,
    cfg: &SimConfig,
) -> Result<EstimatorReport, SimError> {
    let sigma = source.qcrb_sigma_eta(eta_true, budget)?;
    let (analytic_mean, analytic_std) = if sigma > 0.0 {
        TruncatedGaussian::new(eta_true, sigma, 0.0, 1.0)?.moments()?
    } else {
        (eta_true, 0.0)
    };
    let seed = cfg.seed;
    let acc = reduce_chunks::<MomentAcc, _>(cfg.trials, |range| {
        let mut a = MomentAcc::zero();
        for trial in range {
            let u = keyed_uniform(seed, trial, 0);
            let x = sample_truncated(eta_true, sigma, 0.0, 1.0, u);
            a.sum += x;
            a.sum_sq += x * x;
            let bin = ((x * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
            a.hist[bin] += 1;
        }
        a
    });
    let n = cfg.trials as f64;
    let sample_mean = acc.sum / n;
    let sample_var = if cfg.trials > 1 {
        ((acc.sum_sq - acc.sum * acc.sum / n) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let sample_std = sample_var.sqrt();
    let se = if analytic_std > 0.0 { analytic_std / n.sqrt() } else { f64::MIN_POSITIVE };
    Ok(EstimatorReport {
        trials: cfg.trials,
        sample_mean,
        sample_std,
        histogram: acc.hist,
        analytic_mean,
        analytic_std,
        mean_z_score: (sample_mean - analytic_mean).abs() / se,
    })
}

/// 99% Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    let z = 2.5758293035489004; // Phi^-1(0.995)
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Empirical error probabilities of the threshold test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub trials: u64,
    pub empirical_fp: f64,
    pub fp_wilson_99: (f64, f64),
    pub empirical_fn: f64,
    pub fn_wilson_99: (f64, f64),
}

/// Simulate the estimator under both hypotheses at time `t` and count
/// threshold decisions.
pub fn simulate_test(
    pair: &HypothesisPair<f64>,
    t: f64,
    tau: f64,
    cfg: &SimConfig,
) -> Result<TestReport, SimError> {
    let (h0, h1) = pair.hypotheses_at(t)?;
    let seed = cfg.seed;
    let (fp, fn_) = reduce_chunks::<(u64, u64), _>(cfg.trials, |range| {
        let mut acc = (0u64, 0u64);
        for trial in range {
            let u0 = keyed_uniform(seed, trial, 1);
            let x0 = sample_truncated(h0.eta, h0.sigma, 0.0, 1.0, u0);
            if x0 < tau {
                acc.0 += 1; // false positive: growth declared under the null
            }
            let u1 = keyed_uniform(seed, trial, 2);
            let x1 = sample_truncated(h1.eta, h1.sigma, 0.0, 1.0, u1);
            if x1 >= tau {
                acc.1 += 1; // false negative: null accepted under growth
            }
        }
        acc
    });
    Ok(TestReport {
        trials: cfg.trials,
        empirical_fp: fp as f64 / cfg.trials as f64,
        fp_wilson_99: wilson_interval(fp, cfg.trials),
        empirical_fn: fn_ as f64 / cfg.trials as f64,
        fn_wilson_99: wilson_interval(fn_, cfg.trials),
    })
}

/// Delta-method cross-check of the log transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogTransformReport {
    pub sample_std_a: f64,
    pub analytic_sigma_a: f64,
    pub ratio: f64,
}

/// Sample `eta_hat` around `eta_mean`, push through `-log10`, and
/// compare the sample spread with the delta-method sigma_A.
pub fn log_transform_check(
    eta_mean: f64,
    sigma_eta: f64,
    cfg: &SimConfig,
) -> Result<LogTransformReport, SimError> {
    if sigma_eta < 0.0 || eta_mean <= 0.0 {
        return Err(SimError::Metrology(MetrologyError::InvalidInput {
            name: "eta_mean/sigma_eta",
            value: eta_mean,
        }));
    }
    let ratio = sigma_eta / eta_mean;
    if ratio >= 0.1 {
        return Err(SimError::RatioTooLarge(ratio));
    }
    let analytic = crate::metrology::sigma_a_from_sigma_eta(sigma_eta, eta_mean.min(1.0))?;
    if sigma_eta == 0.0 {
        return Ok(LogTransformReport {
            sample_std_a: 0.0,
            analytic_sigma_a: 0.0,
            ratio: 1.0,
        });
    }
    let seed = cfg.seed;
    let acc = reduce_chunks::<MomentAcc, _>(cfg.trials, |range| {
        let mut a = MomentAcc::zero();
        for trial in range {
            let u = keyed_uniform(seed, trial, 3);
            // truncated below zero so the log stays defined
            let x = sample_truncated(eta_mean, sigma_eta, f64::MIN_POSITIVE, f64::INFINITY, u);
            let v = -x.log10();
            a.sum += v;
            a.sum_sq += v * v;
        }
        a
    });
    let n = cfg.trials as f64;
    let var = ((acc.sum_sq - acc.sum * acc.sum / n) / (n - 1.0)).max(0.0);
    let sample_std_a = var.sqrt();
    Ok(LogTransformReport {
        sample_std_a,
        analytic_sigma_a: analytic,
        ratio: sample_std_a / analytic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::TransmissivityLaw;

    fn cfg(trials: u64, seed: u64) -> SimConfig {
        SimConfig::new(trials, seed).unwrap()
    }

    #[test]
    fn keyed_uniform_is_deterministic_and_open() {
        for trial in 0..1000 {
            let u = keyed_uniform(7, trial, 0);
            assert!(u > 0.0 && u < 1.0);
            assert_eq!(u, keyed_uniform(7, trial, 0));
        }
        assert_ne!(keyed_uniform(7, 0, 0), keyed_uniform(8, 0, 0));
        assert_ne!(keyed_uniform(7, 0, 0), keyed_uniform(7, 0, 1));
    }

    #[test]
    fn determinism_across_worker_counts() {
        let source = ProbeSource::Coherent;
        let budget = EnergyBudget::new(150.0).unwrap();
        let reference = {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            pool.install(|| simulate_estimator(&source, 0.92, &budget, &cfg(200_000, 3)).unwrap())
        };
        let wide = {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
            pool.install(|| simulate_estimator(&source, 0.92, &budget, &cfg(200_000, 3)).unwrap())
        };
        assert_eq!(reference.sample_mean.to_bits(), wide.sample_mean.to_bits());
        assert_eq!(reference.sample_std.to_bits(), wide.sample_std.to_bits());
        assert_eq!(reference.histogram, wide.histogram);
    }

    #[test]
    fn estimator_matches_qcrb_spread() {
        // eta = 0.5, n_tot = 1e4: the [0, 1] bounds sit 70 sigma away,
        // so the truncated spread equals the raw QCRB spread
        let budget = EnergyBudget::new(1e4).unwrap();
        let r = simulate_estimator(&ProbeSource::Coherent, 0.5, &budget, &cfg(1_000_000, 11)).unwrap();
        let sigma = (0.5f64 / 1e4).sqrt();
        // chi-distribution standard error bound on the sample std
        let tol = 3.0 * sigma / (2.0 * 1e6f64).sqrt();
        assert!((r.sample_std - r.analytic_std).abs() < tol);
        assert!((r.analytic_std - sigma).abs() < 1e-12 * sigma);
        assert!(r.mean_z_score < 4.0);
    }

    #[test]
    fn zero_sigma_collapses() {
        // optimal probe at eta = 1 has vanishing spread
        let x = sample_truncated(0.7, 0.0, 0.0, 1.0, 0.42);
        assert_eq!(x, 0.7);
    }

    #[test]
    fn extreme_truncation_matches_moments() {
        let r_mean = 0.02;
        let sigma = 0.05;
        let tg = TruncatedGaussian::new(r_mean, sigma, 0.0, 1.0).unwrap();
        let (m, s) = tg.moments().unwrap();
        let seed = 5u64;
        let n = 1_000_000u64;
        let mut sum = 0.0;
        for trial in 0..n {
            sum += sample_truncated(r_mean, sigma, 0.0, 1.0, keyed_uniform(seed, trial, 0));
        }
        let sample_mean = sum / n as f64;
        assert!((sample_mean - m).abs() < 3.0 * s / (n as f64).sqrt());
    }

    #[test]
    fn simulated_test_matches_analytics() {
        let pair = HypothesisPair {
            null_law: TransmissivityLaw::Constant { eta: 0.92 },
            alt_law: TransmissivityLaw::Constant { eta: 0.7 },
            source: ProbeSource::Coherent,
            budget: EnergyBudget::new(150.0).unwrap(),
        };
        let tau = pair.threshold_for_fp(0.0, 0.01).unwrap();
        let r = simulate_test(&pair, 0.0, tau, &cfg(1_000_000, 21)).unwrap();
        assert!(r.fp_wilson_99.0 <= 0.01 && 0.01 <= r.fp_wilson_99.1, "{:?}", r.fp_wilson_99);
        let analytic = pair.error_probabilities(0.0, tau).unwrap();
        assert!(r.fn_wilson_99.0 <= analytic.p_fn && analytic.p_fn <= r.fn_wilson_99.1);
    }

    #[test]
    fn tau_zero_never_fires() {
        let pair = HypothesisPair {
            null_law: TransmissivityLaw::Constant { eta: 0.92 },
            alt_law: TransmissivityLaw::Constant { eta: 0.7 },
            source: ProbeSource::Coherent,
            budget: EnergyBudget::new(150.0).unwrap(),
        };
        let r = simulate_test(&pair, 0.0, 0.0, &cfg(10_000, 1)).unwrap();
        assert_eq!(r.empirical_fp, 0.0);
    }

    #[test]
    fn identical_hypotheses_errors_sum_to_one() {
        let pair = HypothesisPair {
            null_law: TransmissivityLaw::Constant { eta: 0.8 },
            alt_law: TransmissivityLaw::Constant { eta: 0.8 },
            source: ProbeSource::Coherent,
            budget: EnergyBudget::new(150.0).unwrap(),
        };
        let r = simulate_test(&pair, 0.0, 0.8, &cfg(1_000_000, 9)).unwrap();
        let sum = r.empirical_fp + r.empirical_fn;
        assert!((sum - 1.0).abs() < 3.0 * (0.5 / 1e3), "{sum}");
    }

    #[test]
    fn log_transform_ratio_near_one() {
        let r = log_transform_check(0.9, 0.009, &cfg(400_000, 13)).unwrap();
        assert!(r.ratio > 0.99 && r.ratio < 1.01, "{}", r.ratio);
        let r = log_transform_check(0.9, 0.081, &cfg(400_000, 13)).unwrap();
        assert!(r.ratio > 0.95 && r.ratio < 1.05, "{}", r.ratio);
        assert!(matches!(
            log_transform_check(0.9, 0.5, &cfg(100, 1)),
            Err(SimError::RatioTooLarge(_))
        ));
    }
}
