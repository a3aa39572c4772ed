//! Fisher-information catalog, Cramer-Rao bounds in transmissivity and
//! absorbance space, truncated-Gaussian estimator statistics and photon
//! budget accounting.
//!
//! Everything here is per-reading: a reading irradiates `n_tot` mean
//! photons split over `N` probes of `n_bar` photons each, and the bound
//! on the transmissivity estimate is `sigma_eta = 1 / sqrt(N * H)`,
//! with `H` the (quantum) Fisher information of a single probe.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

/// Planck constant (J s).
pub const PLANCK_H: f64 = 6.626_070_15e-34;
/// Speed of light (m/s).
pub const LIGHT_SPEED: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetrologyError {
    #[error("Fisher information diverges at transmissivity {eta}")]
    DivergentInformation { eta: f64 },
    #[error("Fisher information is not positive ({value}) at eta={eta}, n_bar={n_bar}; outside the model's validity range")]
    NonPositiveInformation { eta: f64, n_bar: f64, value: f64 },
    #[error("invalid input {name}: {value}")]
    InvalidInput { name: &'static str, value: f64 },
    #[error("truncated Gaussian keeps mass {mass:e} inside the bounds; numerical underflow")]
    TruncationUnderflow { mass: f64 },
}

fn check<T: Real>(ok: bool, name: &'static str, value: T) -> Result<(), MetrologyError> {
    if ok {
        Ok(())
    } else {
        Err(MetrologyError::InvalidInput {
            name,
            value: value.to_f64_lossy(),
        })
    }
}

/// Light source probing the sample.
///
/// Per-probe mean photon numbers are carried by the variants that need
/// them; for `Coherent` and `OptimalQuantum` the (N, n_bar) split is
/// immaterial, only `n_tot` matters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeSource<T> {
    Coherent,
    OptimalQuantum,
    SqueezedVacuum { n_bar_per_probe: T },
    CorrelatedThermal { n_bar_per_probe: T, asymmetry_x: T },
}

/// Photon budget of one reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget<T> {
    /// Mean total photons irradiated over the sample per reading.
    pub n_tot: T,
}

impl<T: Real> EnergyBudget<T> {
    pub fn new(n_tot: T) -> Result<Self, MetrologyError> {
        check(n_tot > T::zero(), "n_tot", n_tot)?;
        Ok(Self { n_tot })
    }
}

impl<T: Real> ProbeSource<T> {
    pub fn validate(&self) -> Result<(), MetrologyError> {
        match *self {
            ProbeSource::Coherent | ProbeSource::OptimalQuantum => Ok(()),
            ProbeSource::SqueezedVacuum { n_bar_per_probe } => {
                check(n_bar_per_probe > T::zero(), "n_bar_per_probe", n_bar_per_probe)
            }
            ProbeSource::CorrelatedThermal {
                n_bar_per_probe,
                asymmetry_x,
            } => {
                check(n_bar_per_probe > T::zero(), "n_bar_per_probe", n_bar_per_probe)?;
                check(
                    asymmetry_x > T::zero() && asymmetry_x < T::one(),
                    "asymmetry_x",
                    asymmetry_x,
                )
            }
        }
    }

    /// (number of probes, mean photons per probe) for a total budget.
    ///
    /// Sources with a fixed per-probe energy use `N = round(n_tot / n_bar)`,
    /// at least 1; the others collapse to a single probe carrying the
    /// whole budget.
    pub fn probe_split(&self, budget: &EnergyBudget<T>) -> (u64, T) {
        match *self {
            ProbeSource::Coherent | ProbeSource::OptimalQuantum => (1, budget.n_tot),
            ProbeSource::SqueezedVacuum { n_bar_per_probe }
            | ProbeSource::CorrelatedThermal { n_bar_per_probe, .. } => {
                let n = (budget.n_tot / n_bar_per_probe).round().to_f64_lossy();
                ((n.max(1.0)) as u64, n_bar_per_probe)
            }
        }
    }

    /// Single-probe Fisher information `H_{eta, n_bar}` about `eta`.
    ///
    /// Coherent: `n_bar / eta`. Optimal quantum: `n_bar / (eta (1 - eta))`.
    /// Squeezed vacuum: `(1/eta) (n_bar - 2 n_bar eta (1-eta)) /
    /// ((1-eta)(1 + 2 n_bar eta (1-eta)))`. Correlated thermal:
    /// `gamma n_bar / eta` with `gamma <= 1`.
    pub fn qfi(&self, eta: T, n_bar: T) -> Result<T, MetrologyError> {
        check(n_bar > T::zero(), "n_bar", n_bar)?;
        let one = T::one();
        match *self {
            ProbeSource::Coherent => {
                if !(eta > T::zero() && eta <= one) {
                    return Err(MetrologyError::InvalidInput {
                        name: "eta",
                        value: eta.to_f64_lossy(),
                    });
                }
                Ok(n_bar / eta)
            }
            ProbeSource::OptimalQuantum => {
                if eta <= T::zero() || eta >= one {
                    return Err(MetrologyError::DivergentInformation {
                        eta: eta.to_f64_lossy(),
                    });
                }
                Ok(n_bar / (eta * (one - eta)))
            }
            ProbeSource::SqueezedVacuum { .. } => {
                if eta <= T::zero() || eta >= one {
                    return Err(MetrologyError::DivergentInformation {
                        eta: eta.to_f64_lossy(),
                    });
                }
                let two = T::c(2.0);
                let q = eta * (one - eta);
                let h = (n_bar - two * n_bar * q) / ((one - eta) * (one + two * n_bar * q)) / eta;
                if h <= T::zero() {
                    return Err(MetrologyError::NonPositiveInformation {
                        eta: eta.to_f64_lossy(),
                        n_bar: n_bar.to_f64_lossy(),
                        value: h.to_f64_lossy(),
                    });
                }
                Ok(h)
            }
            ProbeSource::CorrelatedThermal { asymmetry_x, .. } => {
                if !(eta > T::zero() && eta <= one) {
                    return Err(MetrologyError::InvalidInput {
                        name: "eta",
                        value: eta.to_f64_lossy(),
                    });
                }
                check(asymmetry_x > T::zero() && asymmetry_x < one, "asymmetry_x", asymmetry_x)?;
                let ratio = n_bar / asymmetry_x;
                let gamma = (one + (one - asymmetry_x) * ratio)
                    / (one + (one - asymmetry_x + asymmetry_x * eta) * ratio);
                Ok(gamma * n_bar / eta)
            }
        }
    }

    /// QCRB standard deviation of the transmissivity estimate for one
    /// reading: `1 / sqrt(N * H)`.
    pub fn qcrb_sigma_eta(&self, eta: T, budget: &EnergyBudget<T>) -> Result<T, MetrologyError> {
        let (probes, n_bar) = self.probe_split(budget);
        self.qcrb_sigma_eta_with_split(eta, probes, n_bar)
    }

    /// Same bound with an explicit (N, n_bar) split. For coherent and
    /// optimal probes the result depends only on the product `N n_bar`.
    pub fn qcrb_sigma_eta_with_split(&self, eta: T, probes: u64, n_bar: T) -> Result<T, MetrologyError> {
        let h = self.qfi(eta, n_bar)?;
        Ok((T::c(probes as f64) * h).sqrt().recip())
    }

    /// QCRB mapped to absorbance space at `A >= 0`.
    ///
    /// Equals `(1/ln10) sqrt(10^A / n_tot)` for coherent probes and
    /// `(1/ln10) sqrt((10^A - 1) / n_tot)` for optimal ones.
    pub fn sigma_a_bound(&self, a: T, budget: &EnergyBudget<T>) -> Result<T, MetrologyError> {
        check(a >= T::zero(), "absorbance", a)?;
        if a == T::zero() {
            if let ProbeSource::OptimalQuantum = self {
                // eta = 1 limit of the closed form: zero-width bar
                return Ok(T::zero());
            }
        }
        let eta = T::c(10.0).powf(-a);
        let sigma_eta = self.qcrb_sigma_eta(eta, budget)?;
        Ok(sigma_a_from_sigma_eta(sigma_eta, eta)?)
    }

    /// The squeezed-vacuum Fisher information is an adaptation whose
    /// validity range is unstated at high energy; flag the regime where
    /// it should not be trusted blindly.
    pub fn in_validity_range(&self, eta: T, n_bar: T) -> bool {
        match self {
            ProbeSource::SqueezedVacuum { .. } => {
                (n_bar * eta * (T::one() - eta)).to_f64_lossy() <= 10.0
            }
            _ => true,
        }
    }
}

/// Delta-method propagation `sigma_A = sigma_eta / (eta ln 10)`.
pub fn sigma_a_from_sigma_eta<T: Real>(sigma_eta: T, eta: T) -> Result<T, MetrologyError> {
    check(eta > T::zero() && eta <= T::one(), "eta", eta)?;
    check(sigma_eta >= T::zero(), "sigma_eta", sigma_eta)?;
    Ok(sigma_eta / (eta * T::ln10()))
}

/// Squeezing accounting: `db` decibels give squeezing parameter
/// `r = 10^(-db/10)` and mean photons `n_bar = (1 - r)^2 / (4 r)`.
pub fn squeezing_from_db<T: Real>(db: T) -> Result<(T, T), MetrologyError> {
    check(db > T::zero(), "db", db)?;
    let r = T::c(10.0).powf(-db / T::c(10.0));
    let n_bar = (T::one() - r).powi(2) / (T::c(4.0) * r);
    Ok((r, n_bar))
}

/// Tail ratio `g(x) = 2 N(x) / (1 - erf(x / sqrt(2)))` with `N` the
/// standard normal density; the one-sided truncation correction factor.
pub fn g_tail<T: Real>(x: T) -> T {
    let two = T::c(2.0);
    two * x.norm_pdf() / (T::one() - (x / T::sqrt2()).erf())
}

/// Gaussian restricted to `[lower, upper]` (upper may be infinite).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedGaussian<T> {
    pub raw_mean: T,
    pub raw_std: T,
    pub lower: T,
    pub upper: T,
}

impl<T: Real> TruncatedGaussian<T> {
    pub fn new(raw_mean: T, raw_std: T, lower: T, upper: T) -> Result<Self, MetrologyError> {
        check(raw_std > T::zero(), "raw_std", raw_std)?;
        check(lower < upper, "lower", lower)?;
        Ok(Self {
            raw_mean,
            raw_std,
            lower,
            upper,
        })
    }

    /// Probability mass the raw Gaussian keeps inside the bounds.
    pub fn mass(&self) -> T {
        let alpha = (self.lower - self.raw_mean) / self.raw_std;
        let beta = (self.upper - self.raw_mean) / self.raw_std;
        // difference of erfc terms keeps relative accuracy in either tail
        let half = T::c(0.5);
        if alpha + beta > T::zero() {
            half * ((alpha / T::sqrt2()).erfc() - (beta / T::sqrt2()).erfc())
        } else {
            half * ((-beta / T::sqrt2()).erfc() - (-alpha / T::sqrt2()).erfc())
        }
    }

    /// Mean and standard deviation after truncation.
    ///
    /// For `upper = +inf` this is the one-sided correction
    /// `mean' = mean + g(omega) sigma`, `std' = sigma sqrt(1 + omega g - g^2)`
    /// with `omega = (lower - mean)/sigma`; finite bounds use the general
    /// two-sided closed form.
    pub fn moments(&self) -> Result<(T, T), MetrologyError> {
        let alpha = (self.lower - self.raw_mean) / self.raw_std;
        let beta = (self.upper - self.raw_mean) / self.raw_std;
        let z = self.mass();
        if !(z > T::c(1e-100)) {
            return Err(MetrologyError::TruncationUnderflow {
                mass: z.to_f64_lossy(),
            });
        }
        if self.upper == T::infinity() {
            let g = alpha.norm_pdf() / z; // == g_tail(alpha)
            let mean = self.raw_mean + g * self.raw_std;
            let std = self.raw_std * (T::one() + alpha * g - g * g).max(T::zero()).sqrt();
            return Ok((mean, std));
        }
        let pa = alpha.norm_pdf();
        let pb = if beta.is_finite() { beta.norm_pdf() } else { T::zero() };
        let bt = if beta.is_finite() { beta * pb } else { T::zero() };
        let d = (pa - pb) / z;
        let mean = self.raw_mean + d * self.raw_std;
        let var = T::one() + (alpha * pa - bt) / z - d * d;
        Ok((mean, self.raw_std * var.max(T::zero()).sqrt()))
    }
}

/// Photon count `n = E lambda / (h c)` from Planck's law.
pub fn photon_budget<T: Real>(energy_j: T, wavelength_m: T) -> Result<T, MetrologyError> {
    check(energy_j >= T::zero(), "energy_j", energy_j)?;
    check(wavelength_m > T::zero(), "wavelength_m", wavelength_m)?;
    Ok(energy_j * wavelength_m / T::c(PLANCK_H * LIGHT_SPEED))
}

/// Covariance entries of the two-mode correlated thermal state:
/// diagonal blocks `a I`, `b I` and off-diagonal `c I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalCovariance<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

pub fn thermal_covariance<T: Real>(n_bar: T, x: T) -> Result<ThermalCovariance<T>, MetrologyError> {
    check(n_bar > T::zero(), "n_bar", n_bar)?;
    check(x > T::zero() && x < T::one(), "asymmetry_x", x)?;
    let half = T::c(0.5);
    Ok(ThermalCovariance {
        a: n_bar + half,
        b: n_bar * (x.recip() - T::one()) + half,
        c: ((T::one() - x) / x).sqrt() * n_bar,
    })
}
