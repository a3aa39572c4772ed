//! Growth-curve models and conversions between absorbance,
//! transmissivity and concentration.
//!
//! Absorbance (optical density) relates to transmissivity by
//! `A = -log10(eta)`, and to concentration by `A = eps * l * C`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, PartialEq)]
pub enum GrowthError {
    #[error("non-finite input: {0}")]
    NonFinite(f64),
    #[error("negative absorbance {0} would imply optical gain")]
    NegativeAbsorbance(f64),
    #[error("transmissivity {0} outside (0, 1]")]
    TransmissivityOutOfRange(f64),
    #[error("time {t} outside the cubic model validity window [{lo}, {hi}]")]
    OutsideValidityWindow { t: f64, lo: f64, hi: f64 },
    #[error("cubic model produced transmissivity {0} outside (0, 1]; model misused outside its validity window")]
    CubicOutOfRange(f64),
    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

fn check_param<T: Real>(ok: bool, name: &'static str, value: T) -> Result<(), GrowthError> {
    if ok {
        Ok(())
    } else {
        Err(GrowthError::InvalidParameter {
            name,
            value: value.to_f64_lossy(),
        })
    }
}

/// Gompertz growth curve in the asymptote/rate/lag parameterization,
/// plus a constant blank offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GompertzParams<T> {
    /// Asymptotic absorbance above the blank (dimensionless OD).
    pub asymptote_a: T,
    /// Maximal growth rate in the linear phase (OD per hour).
    pub rate_mu: T,
    /// Lag time (hours).
    pub lag_theta: T,
    /// Blank absorbance offset.
    pub background_abk: T,
}

impl<T: Real> GompertzParams<T> {
    pub fn new(asymptote_a: T, rate_mu: T, lag_theta: T, background_abk: T) -> Result<Self, GrowthError> {
        check_param(asymptote_a > T::zero(), "asymptote_a", asymptote_a)?;
        check_param(rate_mu > T::zero(), "rate_mu", rate_mu)?;
        check_param(background_abk >= T::zero(), "background_abk", background_abk)?;
        check_param(lag_theta.is_finite(), "lag_theta", lag_theta)?;
        Ok(Self {
            asymptote_a,
            rate_mu,
            lag_theta,
            background_abk,
        })
    }

    /// Convert from the `a * exp(-exp(b - c t))` parameterization:
    /// `mu = a c / e`, `theta = (b - 1) / c`, no blank offset.
    pub fn from_abc(a: T, b: T, c: T) -> Result<Self, GrowthError> {
        check_param(c > T::zero(), "c", c)?;
        Self::new(a, a * c / T::c(std::f64::consts::E), (b - T::one()) / c, T::zero())
    }

    /// Inflection time, where the curve meets its tangent of slope `mu`.
    pub fn inflection_time(&self) -> T {
        self.lag_theta + self.asymptote_a / (self.rate_mu * T::c(std::f64::consts::E))
    }
}

/// Short-time transmissivity decay `eta(t) = eta_bk - c t^2 + d t^3`,
/// valid only inside `window`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicDecayParams<T> {
    pub eta_bk: T,
    pub quad_c: T,
    pub cubic_d: T,
    /// Validity window in hours; the fit behind these coefficients does
    /// not extrapolate (the cubic turns upward later).
    pub window: (T, T),
}

impl<T: Real> CubicDecayParams<T> {
    pub fn new(eta_bk: T, quad_c: T, cubic_d: T, window: (T, T)) -> Result<Self, GrowthError> {
        check_param(eta_bk > T::zero() && eta_bk <= T::one(), "eta_bk", eta_bk)?;
        check_param(window.0 < window.1, "window", window.0)?;
        Ok(Self {
            eta_bk,
            quad_c,
            cubic_d,
            window,
        })
    }

    /// Coefficients fitted to the first experiment, valid on [0, 3] h.
    pub fn experiment_one() -> Self {
        Self {
            eta_bk: T::c(0.92),
            quad_c: T::c(0.1),
            cubic_d: T::c(0.0088),
            window: (T::zero(), T::c(3.0)),
        }
    }
}

/// Beer-Lambert-Bouguer coefficients `A = eps * l * C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeerLambert<T> {
    /// Molar extinction coefficient (m^2 / mol).
    pub molar_extinction_eps: T,
    /// Optical path length (m).
    pub path_length_l: T,
}

impl<T: Real> BeerLambert<T> {
    pub fn new(molar_extinction_eps: T, path_length_l: T) -> Result<Self, GrowthError> {
        check_param(molar_extinction_eps > T::zero(), "molar_extinction_eps", molar_extinction_eps)?;
        check_param(path_length_l > T::zero(), "path_length_l", path_length_l)?;
        Ok(Self {
            molar_extinction_eps,
            path_length_l,
        })
    }
}

/// Absorbance at time `t` (hours): `a exp{-exp[(mu e / a)(theta - t) + 1]} + A_bk`.
///
/// Strictly increasing in `t`, bounded in `(A_bk, a + A_bk)`.
pub fn gompertz_absorbance<T: Real>(t: T, p: &GompertzParams<T>) -> Result<T, GrowthError> {
    if !t.is_finite() {
        return Err(GrowthError::NonFinite(t.to_f64_lossy()));
    }
    let e = T::c(std::f64::consts::E);
    let inner = (p.rate_mu * e / p.asymptote_a) * (p.lag_theta - t) + T::one();
    Ok(p.asymptote_a * (-inner.exp()).exp() + p.background_abk)
}

/// Tangent line in the linear phase: `(t - theta) * mu`.
pub fn gompertz_linear_phase<T: Real>(t: T, p: &GompertzParams<T>) -> T {
    (t - p.lag_theta) * p.rate_mu
}

/// `eta = 10^(-A)`; rejects negative absorbance (would imply gain).
pub fn absorbance_to_transmissivity<T: Real>(a: T) -> Result<T, GrowthError> {
    if !a.is_finite() {
        return Err(GrowthError::NonFinite(a.to_f64_lossy()));
    }
    if a < T::zero() {
        return Err(GrowthError::NegativeAbsorbance(a.to_f64_lossy()));
    }
    Ok(T::c(10.0).powf(-a))
}

/// `A = -log10(eta)` for `eta` in (0, 1]; inverse of the above.
pub fn transmissivity_to_absorbance<T: Real>(eta: T) -> Result<T, GrowthError> {
    if !(eta > T::zero() && eta <= T::one()) {
        return Err(GrowthError::TransmissivityOutOfRange(eta.to_f64_lossy()));
    }
    Ok(-eta.log10())
}

/// Concentration `C = A / (eps * l)` in mol/m^3.
pub fn concentration_from_absorbance<T: Real>(a: T, bl: &BeerLambert<T>) -> Result<T, GrowthError> {
    if !a.is_finite() {
        return Err(GrowthError::NonFinite(a.to_f64_lossy()));
    }
    if a < T::zero() {
        return Err(GrowthError::NegativeAbsorbance(a.to_f64_lossy()));
    }
    Ok(a / (bl.molar_extinction_eps * bl.path_length_l))
}

/// Cubic transmissivity decay; errors outside the validity window or if
/// the polynomial leaves (0, 1].
pub fn cubic_transmissivity<T: Real>(t: T, p: &CubicDecayParams<T>) -> Result<T, GrowthError> {
    if !t.is_finite() {
        return Err(GrowthError::NonFinite(t.to_f64_lossy()));
    }
    if t < p.window.0 || t > p.window.1 {
        return Err(GrowthError::OutsideValidityWindow {
            t: t.to_f64_lossy(),
            lo: p.window.0.to_f64_lossy(),
            hi: p.window.1.to_f64_lossy(),
        });
    }
    let eta = p.eta_bk - p.quad_c * t * t + p.cubic_d * t * t * t;
    if !(eta > T::zero() && eta <= T::one()) {
        return Err(GrowthError::CubicOutOfRange(eta.to_f64_lossy()));
    }
    Ok(eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fig1_params() -> GompertzParams<f64> {
        GompertzParams::new(9.4, 1.7, 2.9, 0.036).unwrap()
    }

    #[test]
    fn gompertz_at_lag_time() {
        // t = theta: A = a * e^(-e) + A_bk
        let p = fig1_params();
        let a = gompertz_absorbance(2.9, &p).unwrap();
        let expected = 9.4 * f64::exp(-std::f64::consts::E) + 0.036;
        assert!((a - expected).abs() < 1e-12);
        assert!((a - 0.6563).abs() < 1e-3);
    }

    #[test]
    fn gompertz_asymptote() {
        let p = fig1_params();
        let a = gompertz_absorbance(1e4, &p).unwrap();
        assert!((a - 9.436).abs() < 1e-9);
        // monotone approach from below
        assert!(gompertz_absorbance(50.0, &p).unwrap() < a);
    }

    #[test]
    fn inflection_slope_is_mu() {
        // finite-difference slope at the inflection time equals mu
        let p = fig1_params();
        let t = p.inflection_time();
        let h = 1e-6;
        let slope = (gompertz_absorbance(t + h, &p).unwrap() - gompertz_absorbance(t - h, &p).unwrap()) / (2.0 * h);
        assert!((slope - 1.7).abs() < 1e-6, "slope {slope}");
    }

    #[test]
    fn linear_phase_values() {
        let p = fig1_params();
        assert_eq!(gompertz_linear_phase(2.9, &p), 0.0);
        assert!((gompertz_linear_phase(3.9, &p) - 1.7).abs() < 1e-15);
    }

    #[test]
    fn linear_phase_tangency_at_inflection() {
        // at the inflection time the curve meets the tangent line
        // mu (t - theta), which crosses zero at the lag time theta
        let p = fig1_params();
        let t = p.inflection_time();
        let tangent = gompertz_linear_phase(t, &p) + p.background_abk;
        let curve = gompertz_absorbance(t, &p).unwrap();
        assert!((tangent - curve).abs() < 1e-9, "tangent {tangent} curve {curve}");
        assert_eq!(gompertz_linear_phase(p.lag_theta, &p), 0.0);
    }

    #[test]
    fn absorbance_transmissivity_examples() {
        assert_eq!(absorbance_to_transmissivity(0.0_f64).unwrap(), 1.0);
        assert!((absorbance_to_transmissivity(0.144_f64).unwrap() - 0.7178).abs() < 1e-4);
        assert!((absorbance_to_transmissivity(1.0_f64).unwrap() - 0.1).abs() < 1e-15);
        assert!(absorbance_to_transmissivity(-0.1_f64).is_err());

        assert_eq!(transmissivity_to_absorbance(1.0_f64).unwrap(), 0.0);
        assert!((transmissivity_to_absorbance(0.717_f64).unwrap() - 0.1445).abs() < 1e-4);
        assert!((transmissivity_to_absorbance(0.92_f64).unwrap() - 0.0362).abs() < 1e-4);
        assert!(transmissivity_to_absorbance(0.0_f64).is_err());
        assert!(transmissivity_to_absorbance(1.5_f64).is_err());
    }

    #[test]
    fn concentration_examples() {
        let unit = BeerLambert::new(1.0, 1.0).unwrap();
        assert_eq!(concentration_from_absorbance(0.0, &unit).unwrap(), 0.0);
        assert_eq!(concentration_from_absorbance(2.0, &unit).unwrap(), 2.0);
        let bl = BeerLambert::new(0.5_f64, 0.02).unwrap();
        assert!((concentration_from_absorbance(0.3, &bl).unwrap() - 30.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_examples() {
        let p = CubicDecayParams::<f64>::experiment_one();
        assert_eq!(cubic_transmissivity(0.0, &p).unwrap(), 0.92);
        assert!((cubic_transmissivity(1.0, &p).unwrap() - 0.8288).abs() < 1e-12);
        assert!((cubic_transmissivity(2.0, &p).unwrap() - 0.5904).abs() < 1e-12);
        assert!(matches!(
            cubic_transmissivity(5.0, &p),
            Err(GrowthError::OutsideValidityWindow { .. })
        ));
    }

    #[test]
    fn cubic_out_of_range_is_rejected() {
        // steep decay leaves (0, 1] inside a too-wide window
        let p = CubicDecayParams::new(0.5, 0.2, 0.0, (0.0, 3.0)).unwrap();
        assert!(matches!(cubic_transmissivity(2.0, &p), Err(GrowthError::CubicOutOfRange(_))));
    }

    #[test]
    fn monotone_and_bounded_on_grid() {
        let p = fig1_params();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=600 {
            let t = -10.0 + i as f64 * 0.1;
            let a = gompertz_absorbance(t, &p).unwrap();
            // the double exponential underflows far below the lag time,
            // so monotonicity is only strict once t is near the window
            if t >= 0.0 {
                assert!(a > prev, "not increasing at t={t}");
            } else {
                assert!(a >= prev, "decreasing at t={t}");
            }
            assert!(a >= p.background_abk && a < p.asymptote_a + p.background_abk);
            prev = a;
        }
    }

    proptest! {
        #[test]
        fn abc_parameterizations_agree(
            a in 0.1f64..10.0,
            b in 0.5f64..5.0,
            c in 0.05f64..2.0,
            t in -5.0f64..20.0,
        ) {
            let direct = a * f64::exp(-f64::exp(b - c * t));
            let p = GompertzParams::from_abc(a, b, c).unwrap();
            let via = gompertz_absorbance(t, &p).unwrap();
            prop_assert!((direct - via).abs() <= 1e-10 * (1.0 + direct.abs()));
        }

        #[test]
        fn absorbance_round_trip(a in 0.0f64..10.0) {
            let eta = absorbance_to_transmissivity(a).unwrap();
            let back = transmissivity_to_absorbance(eta).unwrap();
            prop_assert!((back - a).abs() < 1e-12);
        }
    }
}
