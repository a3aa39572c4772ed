//! Binary hypothesis testing over time: growth-vs-blank and
//! species-vs-species, with asymmetric / symmetric error figures and
//! earliest-detection-time search.
//!
//! At reading time `t` the estimator under hypothesis `i` follows a
//! Gaussian in transmissivity centered on `eta_i(t)` with the QCRB
//! spread, truncated to [0, 1]. The decision rule accepts the null
//! when the estimate is at or above the threshold `tau`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::growth::{self, CubicDecayParams, GompertzParams, GrowthError};
use crate::metrology::{EnergyBudget, MetrologyError, ProbeSource};
use crate::opt;
use crate::real::Real;

#[derive(Debug, Error, PartialEq)]
pub enum DetectionError {
    #[error("threshold {0} outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("target probability {0} outside (0, 1)")]
    TargetOutOfRange(f64),
    #[error("invalid search window [{0}, {1}]")]
    InvalidWindow(f64, f64),
    #[error("error curve is not monotone non-increasing near t = {t} ({before} -> {after})")]
    NonMonotone { t: f64, before: f64, after: f64 },
    #[error(transparent)]
    Growth(#[from] GrowthError),
    #[error(transparent)]
    Metrology(#[from] MetrologyError),
}

/// Time-dependent transmissivity model for one hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TransmissivityLaw<T> {
    /// Blank sample: constant `eta_bk`.
    Constant { eta: T },
    /// Short-time cubic decay.
    Cubic(CubicDecayParams<T>),
    /// `eta(t) = 10^(-A(t))` with a Gompertz absorbance curve.
    Gompertz(GompertzParams<T>),
}

impl<T: Real> TransmissivityLaw<T> {
    pub fn eval(&self, t: T) -> Result<T, GrowthError> {
        match self {
            TransmissivityLaw::Constant { eta } => {
                if *eta > T::zero() && *eta <= T::one() {
                    Ok(*eta)
                } else {
                    Err(GrowthError::TransmissivityOutOfRange(eta.to_f64_lossy()))
                }
            }
            TransmissivityLaw::Cubic(p) => growth::cubic_transmissivity(t, p),
            TransmissivityLaw::Gompertz(p) => {
                growth::absorbance_to_transmissivity(growth::gompertz_absorbance(t, p)?)
            }
        }
    }
}

/// Two competing transmissivity laws sharing a probe source and budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisPair<T> {
    /// Null hypothesis law (blank, or the Salmonella curve).
    pub null_law: TransmissivityLaw<T>,
    /// Alternative hypothesis law (growth, or the E. coli curve).
    pub alt_law: TransmissivityLaw<T>,
    pub source: ProbeSource<T>,
    pub budget: EnergyBudget<T>,
}

/// One evaluated test configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestPoint<T> {
    pub time: T,
    pub threshold_tau: T,
    pub p_fp: T,
    pub p_fn: T,
}

/// Mean and spread of one hypothesis at a reading time.
#[derive(Debug, Clone, Copy)]
pub struct HypothesisAt<T> {
    pub eta: T,
    pub sigma: T,
}

/// Which error figure drives a detection-time search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TestMode<T> {
    /// Minimize the equal-prior mean error over the threshold.
    Symmetric,
    /// Fix the false-positive rate and track the false negatives.
    Asymmetric { fixed_fp: T },
}

/// Outcome of an earliest-detection-time search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DetectionOutcome<T> {
    Reached { time: T },
    NotReached { final_error: T },
}

fn clamp01<T: Real>(x: T) -> T {
    x.max(T::zero()).min(T::one())
}

impl<T: Real> HypothesisPair<T> {
    /// Per-hypothesis mean transmissivity and QCRB spread at time `t`.
    pub fn hypotheses_at(&self, t: T) -> Result<(HypothesisAt<T>, HypothesisAt<T>), DetectionError> {
        let eta0 = self.null_law.eval(t)?;
        let eta1 = self.alt_law.eval(t)?;
        Ok((
            HypothesisAt {
                eta: eta0,
                sigma: self.sigma_for(eta0)?,
            },
            HypothesisAt {
                eta: eta1,
                sigma: self.sigma_for(eta1)?,
            },
        ))
    }

    fn sigma_for(&self, eta: T) -> Result<T, DetectionError> {
        match self.source.qcrb_sigma_eta(eta, &self.budget) {
            Ok(s) => Ok(s),
            // information diverges at eta = 1: zero-width estimator
            Err(MetrologyError::DivergentInformation { .. }) if eta == T::one() => Ok(T::zero()),
            Err(e) => Err(e.into()),
        }
    }

    /// False-positive and false-negative probabilities of the threshold
    /// test at time `t`, with [0, 1]-truncated Gaussian estimators.
    pub fn error_probabilities(&self, t: T, tau: T) -> Result<TestPoint<T>, DetectionError> {
        if !(tau >= T::zero() && tau <= T::one()) {
            return Err(DetectionError::ThresholdOutOfRange(tau.to_f64_lossy()));
        }
        let (h0, h1) = self.hypotheses_at(t)?;
        let p_fp = truncated_lower_mass(h0.eta, h0.sigma, tau);
        let p_fn = truncated_upper_mass(h1.eta, h1.sigma, tau);
        Ok(TestPoint {
            time: t,
            threshold_tau: tau,
            p_fp,
            p_fn,
        })
    }

    /// The unique threshold with `p_fp(tau) = target_fp`, located by
    /// bracketed bisection to |p_fp - target| < 1e-12.
    pub fn threshold_for_fp(&self, t: T, target_fp: T) -> Result<T, DetectionError> {
        if !(target_fp > T::zero() && target_fp < T::one()) {
            return Err(DetectionError::TargetOutOfRange(target_fp.to_f64_lossy()));
        }
        let (h0, _) = self.hypotheses_at(t)?;
        let tau = opt::bisect_root(
            |tau| truncated_lower_mass(h0.eta, h0.sigma, tau) - target_fp,
            T::zero(),
            T::one(),
            T::zero(),
            T::c(1e-12),
        );
        Ok(tau)
    }

    /// Minimum over the threshold of the equal-prior mean error
    /// `[p_fp(tau) + p_fn(tau, t)] / 2`; returns `(p_mean, tau_star)`.
    ///
    /// A 1024-interval grid brackets the minimum, golden-section
    /// refines it.
    pub fn mean_error(&self, t: T) -> Result<(T, T), DetectionError> {
        let (h0, h1) = self.hypotheses_at(t)?;
        let objective = |tau: T| {
            (truncated_lower_mass(h0.eta, h0.sigma, tau) + truncated_upper_mass(h1.eta, h1.sigma, tau))
                / T::c(2.0)
        };
        let n = 1024usize;
        let mut best_i = 0usize;
        let mut best = T::infinity();
        for i in 0..=n {
            let tau = T::c(i as f64 / n as f64);
            let v = objective(tau);
            if v < best {
                best = v;
                best_i = i;
            }
        }
        let lo = T::c(best_i.saturating_sub(1) as f64 / n as f64);
        let hi = T::c(best_i.min(n - 1).saturating_add(1) as f64 / n as f64);
        let (tau_star, p_mean) = opt::golden_section_min(objective, lo, hi, T::c(1e-12));
        if best < p_mean {
            return Ok((best, T::c(best_i as f64 / n as f64)));
        }
        Ok((p_mean, tau_star))
    }

    /// Error figure of the chosen test mode at time `t`.
    pub fn error_figure(&self, t: T, mode: TestMode<T>) -> Result<T, DetectionError> {
        match mode {
            TestMode::Symmetric => Ok(self.mean_error(t)?.0),
            TestMode::Asymmetric { fixed_fp } => {
                let tau = self.threshold_for_fp(t, fixed_fp)?;
                Ok(self.error_probabilities(t, tau)?.p_fn)
            }
        }
    }

    /// Earliest `t` in `window` where the mode's error figure drops to
    /// `target`, bisected to 1e-3 h. The error curve must be monotone
    /// non-increasing over the window (checked on a grid).
    pub fn detection_time(
        &self,
        mode: TestMode<T>,
        target: T,
        window: (T, T),
    ) -> Result<DetectionOutcome<T>, DetectionError> {
        if !(window.0 < window.1) {
            return Err(DetectionError::InvalidWindow(
                window.0.to_f64_lossy(),
                window.1.to_f64_lossy(),
            ));
        }
        let grid = 64usize;
        let mut prev = self.error_figure(window.0, mode)?;
        let slack = T::c(1e-9);
        for i in 1..=grid {
            let t = window.0 + (window.1 - window.0) * T::c(i as f64 / grid as f64);
            let cur = self.error_figure(t, mode)?;
            if cur > prev + slack {
                return Err(DetectionError::NonMonotone {
                    t: t.to_f64_lossy(),
                    before: prev.to_f64_lossy(),
                    after: cur.to_f64_lossy(),
                });
            }
            prev = cur;
        }
        if self.error_figure(window.0, mode)? <= target {
            return Ok(DetectionOutcome::Reached { time: window.0 });
        }
        let final_error = self.error_figure(window.1, mode)?;
        if final_error > target {
            return Ok(DetectionOutcome::NotReached { final_error });
        }
        let mut failure: Option<DetectionError> = None;
        let time = opt::bisect_crossing(
            |t| match self.error_figure(t, mode) {
                Ok(v) => v - target,
                Err(e) => {
                    failure = Some(e);
                    T::one()
                }
            },
            window.0,
            window.1,
            T::c(1e-3),
        );
        match failure {
            Some(e) => Err(e),
            None => Ok(DetectionOutcome::Reached { time }),
        }
    }
}

/// Build the species-discrimination pair from two fitted growth curves:
/// null = Salmonella, alternative = E. coli, both as `10^(-A(t))`.
pub fn species_pair_from_gompertz<T: Real>(
    ecoli: GompertzParams<T>,
    salmo: GompertzParams<T>,
    source: ProbeSource<T>,
    budget: EnergyBudget<T>,
) -> HypothesisPair<T> {
    HypothesisPair {
        null_law: TransmissivityLaw::Gompertz(salmo),
        alt_law: TransmissivityLaw::Gompertz(ecoli),
        source,
        budget,
    }
}

/// `P(eta_hat < tau)` under a Gaussian(mean, sigma) truncated to [0, 1]:
/// the erf form of the false-positive integral.
fn truncated_lower_mass<T: Real>(mean: T, sigma: T, tau: T) -> T {
    if sigma == T::zero() {
        return if mean < tau { T::one() } else { T::zero() };
    }
    let s = T::sqrt2() * sigma;
    let norm = T::c(0.5) * ((mean / s).erf() - ((mean - T::one()) / s).erf());
    clamp01(T::c(0.5) * ((mean / s).erf() - ((mean - tau) / s).erf()) / norm)
}

/// `P(eta_hat >= tau)` under the truncated alternative: the erf form of
/// the false-negative integral.
fn truncated_upper_mass<T: Real>(mean: T, sigma: T, tau: T) -> T {
    if sigma == T::zero() {
        return if mean >= tau { T::one() } else { T::zero() };
    }
    let s = T::sqrt2() * sigma;
    let norm = T::c(0.5) * ((mean / s).erf() - ((mean - T::one()) / s).erf());
    clamp01(T::c(0.5) * (((mean - tau) / s).erf() - ((mean - T::one()) / s).erf()) / norm)
}
