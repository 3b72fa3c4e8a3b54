//! Integrator-free reference values for one-dimensional problems.
//!
//! Along a one-dimensional solution `H±(u′) = G(ξ) − G(u)`, so the time to
//! travel from a turning point to a height is a plain integral in `u`:
//!
//! ```text
//! T/4 = ∫₀^|ξ| du / Φ(G(ξ) − G(u)),   Φ = H±⁻¹
//! ```
//!
//! The inverse square-root singularity at `u = |ξ|` is removed with
//! `u = |ξ| sin θ`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{h_minus_inverse, h_plus_inverse};
use crate::dynamics::CurvatureSign;
use crate::nonlinearity::{NonlinearityError, NonlinearitySpec};
use crate::quadrature::{self, QuadratureError, QuadratureOptions};

/// Relative accuracy of the period.
pub const PERIOD_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    pub quarter_period: f64,
    pub period: f64,
    /// Absolute error bound on `period`.
    pub quadrature_error_bound: f64,
}

/// Whether `G(|ξ|) ≥ 1`, deciding exactly when a closed-form threshold exists.
fn reaches_cap(g: &NonlinearitySpec, a: f64) -> Result<bool, OracleError> {
    if let Some(t) = g.threshold_closed_form() {
        return Ok(a >= t);
    }
    Ok(g.primitive(a)? >= 1.0)
}

fn check_height(g: &NonlinearitySpec, xi: f64) -> Result<f64, OracleError> {
    let a = xi.abs();
    if !(a > 0.0) || !a.is_finite() {
        return Err(OracleError::Domain(format!("height {xi} has no turning point")));
    }
    if !g.alpha().exceeds(a) {
        return Err(OracleError::Domain(format!(
            "|xi| = {a} is not below the first positive zero {} of g",
            g.alpha()
        )));
    }
    if g.g(a) == 0.0 {
        return Err(OracleError::Domain(format!("degenerate turning point at {a}")));
    }
    Ok(a)
}

/// Period of the one-dimensional solution started at `ξ`.
pub fn time_map_period(sign: CurvatureSign, g: &NonlinearitySpec, xi: f64) -> Result<PeriodEstimate, OracleError> {
    let a = check_height(g, xi)?;
    if sign == CurvatureSign::Euclidean && reaches_cap(g, a)? {
        return Err(OracleError::Domain(format!(
            "G({a}) >= 1: the Euclidean solution has no periodic orbit"
        )));
    }
    let inverse = match sign {
        CurvatureSign::Euclidean => h_plus_inverse,
        CurvatureSign::Lorentz => h_minus_inverse,
    };
    let failed = std::cell::Cell::new(None);
    let integrand = |theta: f64| {
        let u = a * theta.sin();
        let drop = match g.primitive_drop(a, u) {
            Ok(d) => d.max(0.0),
            Err(e) => {
                failed.set(Some(e));
                return f64::NAN;
            }
        };
        match inverse(drop) {
            Ok(speed) => a * theta.cos() / speed,
            Err(_) => f64::NAN,
        }
    };
    let res = quadrature::integrate(
        integrand,
        0.0,
        FRAC_PI_2,
        QuadratureOptions::relative(PERIOD_REL_TOL / 10.0),
    );
    if let Some(e) = failed.take() {
        return Err(e.into());
    }
    let res = res?;
    Ok(PeriodEstimate {
        quarter_period: res.value,
        period: 4.0 * res.value,
        quadrature_error_bound: 4.0 * res.error,
    })
}

/// Height `u*` in `[0, |ξ|)` with `G(ξ) − G(u*) = 1`.
pub fn blowup_height(g: &NonlinearitySpec, xi: f64) -> Result<f64, OracleError> {
    let a = check_height(g, xi)?;
    if !reaches_cap(g, a)? {
        return Err(OracleError::Domain(format!("G({a}) < 1: the gradient stays bounded")));
    }
    if g.primitive_drop(a, 0.0)? <= 1.0 {
        return Ok(0.0);
    }
    // G(a) − G(u) decreases from above 1 at u = 0 to 0 at u = a.
    let (mut lo, mut hi) = (0.0, a);
    while hi - lo > 4.0 * f64::EPSILON * a {
        let mid = 0.5 * (lo + hi);
        if g.primitive_drop(a, mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Radius where a Euclidean one-dimensional solution started at `ξ` loses its gradient bound.
pub fn blowup_radius_bound(g: &NonlinearitySpec, xi: f64) -> Result<f64, OracleError> {
    let a = xi.abs();
    let u_star = blowup_height(g, xi)?;
    let span = a - u_star;
    let failed = std::cell::Cell::new(None);
    let integrand = |theta: f64| {
        let u = u_star + span * theta.sin();
        let drop = match g.primitive_drop(a, u) {
            Ok(d) => d.max(0.0),
            Err(e) => {
                failed.set(Some(e));
                return f64::NAN;
            }
        };
        if drop >= 1.0 {
            // Slope is infinite at u*.
            return 0.0;
        }
        match h_plus_inverse(drop) {
            Ok(speed) => span * theta.cos() / speed,
            Err(_) => f64::NAN,
        }
    };
    let res = quadrature::integrate(
        integrand,
        0.0,
        FRAC_PI_2,
        QuadratureOptions::relative(PERIOD_REL_TOL / 10.0),
    );
    if let Some(e) = failed.take() {
        return Err(e.into());
    }
    Ok(res?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ProblemSpec;
    use crate::integrator::{integrate, IntegrationControls, TerminationCause};
    use std::f64::consts::{PI, SQRT_2};

    fn linear() -> NonlinearitySpec {
        NonlinearitySpec::linear(1.0).unwrap()
    }

    #[test]
    fn small_amplitude_period_is_two_pi() {
        for sign in CurvatureSign::BOTH {
            let p = time_map_period(sign, &linear(), 1e-4).unwrap();
            assert!((p.period - 2.0 * PI).abs() < 1e-7, "{sign}: {}", p.period);
            assert_eq!(p.period, 4.0 * p.quarter_period);
            assert!(p.quadrature_error_bound <= PERIOD_REL_TOL * p.period);
        }
    }

    #[test]
    fn amplitude_correction_has_expected_sign() {
        // Euclidean slows down (effective stiffness (1+u'²)^{3/2} > 1 is
        // outweighed by the bounded speed); Lorentz speeds are capped below 1.
        let e = time_map_period(CurvatureSign::Euclidean, &linear(), 1.0).unwrap();
        let l = time_map_period(CurvatureSign::Lorentz, &linear(), 1.0).unwrap();
        assert!(l.period > 2.0 * PI);
        assert!(e.period.is_finite() && e.period > 0.0);
    }

    #[test]
    fn domain_errors() {
        let sin = NonlinearitySpec::sin();
        assert!(time_map_period(CurvatureSign::Euclidean, &sin, FRAC_PI_2).is_err());
        assert!(time_map_period(CurvatureSign::Euclidean, &sin, 0.0).is_err());
        assert!(time_map_period(CurvatureSign::Lorentz, &sin, PI).is_err());
        assert!(time_map_period(CurvatureSign::Lorentz, &sin, 3.0).is_ok());
        assert!(blowup_radius_bound(&linear(), 1.0).is_err());
    }

    #[test]
    fn sign_of_height_is_irrelevant() {
        let a = time_map_period(CurvatureSign::Lorentz, &NonlinearitySpec::cubic(), 0.7).unwrap();
        let b = time_map_period(CurvatureSign::Lorentz, &NonlinearitySpec::cubic(), -0.7).unwrap();
        assert_eq!(a, b);
    }

    // Naive quadrature up to |ξ| − ε, plus the tail from G(ξ) − G(u) ≈ g(ξ)(ξ − u):
    // ∫_{ξ−ε}^{ξ} du/√(2 g(ξ)(ξ−u)) = √(2ε/g(ξ)).
    fn naive_quarter(g: &NonlinearitySpec, xi: f64) -> f64 {
        let eps = 1e-6;
        let body = quadrature::integrate(
            |u| 1.0 / h_minus_inverse(g.primitive_drop(xi, u).unwrap()).unwrap(),
            0.0,
            xi - eps,
            QuadratureOptions::relative(1e-12),
        )
        .unwrap();
        body.value + (2.0 * eps / g.g(xi)).sqrt()
    }

    #[test]
    fn substitution_matches_naive_quadrature() {
        for (g, xi) in [
            (linear(), 0.5),
            (NonlinearitySpec::sin(), 1.0),
            (NonlinearitySpec::cubic(), 0.3),
        ] {
            let reg = time_map_period(CurvatureSign::Lorentz, &g, xi).unwrap().quarter_period;
            let naive = naive_quarter(&g, xi);
            assert!((reg - naive).abs() <= 1e-8, "{}: {reg} vs {naive}", g.label());
        }
    }

    #[test]
    fn period_is_smooth_in_height() {
        // Jumps show up in the second difference; the first difference carries
        // the genuine slope of the period, which grows without bound as |ξ| → α.
        for (sign, g) in [
            (CurvatureSign::Euclidean, NonlinearitySpec::sin()),
            (CurvatureSign::Lorentz, NonlinearitySpec::sin()),
            (CurvatureSign::Lorentz, NonlinearitySpec::cubic()),
        ] {
            let top = if sign == CurvatureSign::Euclidean {
                1.5
            } else {
                0.8 * g.alpha().effective()
            };
            let grid: Vec<f64> = (0..).map(|k| 0.05 + 1e-2 * k as f64).take_while(|x| *x < top).collect();
            let t: Vec<f64> = grid
                .iter()
                .map(|x| time_map_period(sign, &g, *x).unwrap().period)
                .collect();
            for k in 1..t.len() - 1 {
                let curvature = (t[k + 1] - 2.0 * t[k] + t[k - 1]) / t[k];
                assert!(curvature.abs() < 1e-3, "{sign} {}: jump at {}", g.label(), grid[k]);
            }
        }
    }

    #[test]
    fn blowup_height_examples() {
        assert_eq!(blowup_height(&NonlinearitySpec::sin(), FRAC_PI_2).unwrap(), 0.0);
        // SQRT_2² rounds above 2, leaving u* at the square root of the excess.
        assert!(blowup_height(&linear(), SQRT_2).unwrap() < 1e-7);
        let u = blowup_height(&linear(), 2.0).unwrap();
        // 2 − u²/2 = 1
        assert!((u - SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn blowup_radius_matches_integrator() {
        for (g, xi) in [
            (NonlinearitySpec::sin(), FRAC_PI_2),
            (linear(), SQRT_2),
            (linear(), 2.0),
            (NonlinearitySpec::sin(), 2.5),
        ] {
            let r_star = blowup_radius_bound(&g, xi).unwrap();
            let p = ProblemSpec::new(CurvatureSign::Euclidean, 1, xi, g.clone()).unwrap();
            let t = integrate(&p, &IntegrationControls::default()).unwrap();
            assert_eq!(t.termination_cause(), Some(TerminationCause::GradientBlowup));
            let r = t.termination().unwrap().r;
            assert!(((r - r_star) / r_star).abs() <= 1e-4, "{}: {r} vs {r_star}", g.label());
        }
    }

    #[test]
    fn period_matches_integrator() {
        for (sign, g, xi) in [
            (CurvatureSign::Euclidean, NonlinearitySpec::sin(), 1.0),
            (CurvatureSign::Lorentz, NonlinearitySpec::cubic(), 0.9),
            (CurvatureSign::Lorentz, linear(), 5.0),
        ] {
            let oracle = time_map_period(sign, &g, xi).unwrap().period;
            let p = ProblemSpec::new(sign, 1, xi, g).unwrap();
            let t = integrate(&p, &IntegrationControls::default().with_r_max(20.0 * oracle)).unwrap();
            let z: Vec<f64> = t.zeros().map(|e| e.r).collect();
            let est = 2.0 * (z[z.len() - 1] - z[0]) / (z.len() - 1) as f64;
            assert!(
                ((est - oracle) / oracle).abs() <= 1e-6,
                "{sign} {xi}: {est} vs {oracle}"
            );
        }
    }
}
