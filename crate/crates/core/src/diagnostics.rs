//! Energy, Lyapunov, symmetry and envelope diagnostics along trajectories.
//!
//! With `H₊(t) = 1 − 1/√(1+t²)` and `H₋(t) = 1/√(1−t²) − 1`:
//!
//! * `N = 1`: `H±(u′) = G(ξ) − G(u)` along the whole solution.
//! * `N ≥ 2`: `Z± = H±(u′) + G(u)` is nonincreasing, with
//!   `Z±′ = −(N−1)/r · u′²/√(1 ± u′²)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{CurvatureSign, ProblemSpec};
use crate::integrator::{EventKind, Trajectory};
use crate::nonlinearity::NonlinearityError;

/// Slack on `Z(r_{k+1}) − Z(r_k)` at default tolerances.
pub const Z_UPTICK_SLACK: f64 = 1e-9;
/// Slack on pairwise strict decrease of the extrema envelope.
pub const ENVELOPE_SLACK: f64 = 1e-10;
/// Grid size for the symmetry checks.
pub const SYMMETRY_GRID: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("argument {0} outside the domain of the function")]
    Domain(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
}

/// `1 − 1/√(1+t²)`, written without cancellation.
pub fn h_plus(t: f64) -> f64 {
    let s = t.hypot(1.0);
    t * t / (s * (1.0 + s))
}

/// `1/√(1−t²) − 1` for `|t| < 1`.
pub fn h_minus(t: f64) -> Result<f64, DiagnosticsError> {
    let a = t.abs();
    if !(a < 1.0) {
        return Err(DiagnosticsError::Domain(t));
    }
    let s = ((1.0 - a) * (1.0 + a)).sqrt();
    Ok(t * t / (s * (1.0 + s)))
}

/// Nonnegative `t` with `h_plus(t) = s`, for `s ∈ [0, 1)`.
pub fn h_plus_inverse(s: f64) -> Result<f64, DiagnosticsError> {
    if !(0.0..1.0).contains(&s) {
        return Err(DiagnosticsError::Domain(s));
    }
    Ok((s * (2.0 - s)).sqrt() / (1.0 - s))
}

/// `t ∈ [0, 1)` with `h_minus(t) = s`, for `s ≥ 0`.
pub fn h_minus_inverse(s: f64) -> Result<f64, DiagnosticsError> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(DiagnosticsError::Domain(s));
    }
    Ok((s * (2.0 + s)).sqrt() / (1.0 + s))
}

/// `H±(t)` for the given sign.
pub fn kinetic(sign: CurvatureSign, t: f64) -> Result<f64, DiagnosticsError> {
    match sign {
        CurvatureSign::Euclidean => Ok(h_plus(t)),
        CurvatureSign::Lorentz => h_minus(t),
    }
}

/// Inverse of [`kinetic`] on the nonnegative branch.
pub fn kinetic_inverse(sign: CurvatureSign, s: f64) -> Result<f64, DiagnosticsError> {
    match sign {
        CurvatureSign::Euclidean => h_plus_inverse(s),
        CurvatureSign::Lorentz => h_minus_inverse(s),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `N = 1`: sup over samples of `|H±(u′) − (G(ξ) − G(u))|`.
    pub max_identity_residual: Option<f64>,
    /// `N ≥ 2`: `(r, Z(r))` at every sample.
    pub z_values: Vec<(f64, f64)>,
    /// Largest increase of `Z` between consecutive samples.
    pub max_z_uptick: Option<f64>,
    pub min_z: Option<f64>,
    /// `N ≥ 2`: sup of `|H±(u′) + (N−1)∫ u′²/(s√(1±u′²)) ds − (G(ξ) − G(u))|`
    /// at step endpoints, with the integral accumulated on the dense output.
    pub dissipation_identity_residual: Option<f64>,
    pub gradient_sup: f64,
    /// Lorentz: `1 − sup|u′|`.
    pub light_cone_gap: Option<f64>,
}

impl EnergyReport {
    pub fn summary(&self) -> EnergySummary {
        EnergySummary {
            max_identity_residual: self.max_identity_residual,
            max_z_uptick: self.max_z_uptick,
            min_z: self.min_z,
            dissipation_identity_residual: self.dissipation_identity_residual,
            gradient_sup: self.gradient_sup,
            light_cone_gap: self.light_cone_gap,
        }
    }
}

/// [`EnergyReport`] without the per-sample `Z` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub max_identity_residual: Option<f64>,
    pub max_z_uptick: Option<f64>,
    pub min_z: Option<f64>,
    pub dissipation_identity_residual: Option<f64>,
    pub gradient_sup: f64,
    pub light_cone_gap: Option<f64>,
}

fn base_report(traj: &Trajectory) -> EnergyReport {
    let gradient_sup = traj.gradient_sup();
    EnergyReport {
        max_identity_residual: None,
        z_values: Vec::new(),
        max_z_uptick: None,
        min_z: None,
        dissipation_identity_residual: None,
        gradient_sup,
        light_cone_gap: (traj.problem.sign == CurvatureSign::Lorentz).then_some(1.0 - gradient_sup),
    }
}

/// Sup-norm residual of the one-dimensional energy identity.
pub fn energy_identity_residual(traj: &Trajectory) -> Result<EnergyReport, DiagnosticsError> {
    let p = &traj.problem;
    if p.dimension != 1 {
        return Err(DiagnosticsError::Precondition(format!(
            "energy identity holds for N = 1, got N = {}",
            p.dimension
        )));
    }
    let mut worst: f64 = 0.0;
    for s in &traj.samples {
        let lhs = kinetic(p.sign, s.up)?;
        let rhs = p.nonlinearity.primitive_drop(p.xi, s.u)?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(EnergyReport {
        max_identity_residual: Some(worst),
        ..base_report(traj)
    })
}

/// `Z±(r) = H±(u′) + G(u)`.
pub fn lyapunov(problem: &ProblemSpec, u: f64, up: f64) -> Result<f64, DiagnosticsError> {
    Ok(kinetic(problem.sign, up)? + problem.nonlinearity.primitive(u)?)
}

/// Lyapunov profile for `N ≥ 2`, including the integrated energy balance.
pub fn lyapunov_profile(traj: &Trajectory) -> Result<EnergyReport, DiagnosticsError> {
    let p = &traj.problem;
    if p.dimension < 2 {
        return Err(DiagnosticsError::Precondition(format!(
            "Lyapunov profile needs N >= 2, got N = {}",
            p.dimension
        )));
    }
    let mut z_values = Vec::with_capacity(traj.samples.len());
    for s in &traj.samples {
        z_values.push((s.r, lyapunov(p, s.u, s.up)?));
    }
    let max_z_uptick = z_values
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_z_uptick = if z_values.len() < 2 { 0.0 } else { max_z_uptick };
    let min_z = z_values.iter().map(|z| z.1).fold(f64::INFINITY, f64::min);

    Ok(EnergyReport {
        z_values,
        max_z_uptick: Some(max_z_uptick),
        min_z: Some(min_z),
        dissipation_identity_residual: dissipation_residual(traj)?,
        ..base_report(traj)
    })
}

// 5-point Gauss–Legendre on [0, 1].
const GL_NODES: [f64; 5] = [
    0.046_910_077_030_668_004,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_6,
    0.953_089_922_969_332,
];
const GL_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_54,
    0.239_314_335_249_683_23,
    0.284_444_444_444_444_45,
    0.239_314_335_249_683_23,
    0.118_463_442_528_094_54,
];

fn dissipation_residual(traj: &Trajectory) -> Result<Option<f64>, DiagnosticsError> {
    let p = &traj.problem;
    let Some(first) = traj.segments.first() else {
        return Ok(None);
    };
    if first.h < 0.0 {
        return Ok(None);
    }
    let n1 = (p.dimension - 1) as f64;
    let density = |r: f64, up: f64| n1 * up * up / (r * p.sign.metric_factor(up).sqrt());
    // Contribution on [0, δ] from u′ ≈ −g(ξ) r / N.
    let delta = first.r_start();
    let slope = p.nonlinearity.g(p.xi) / p.dimension as f64;
    let mut acc = 0.5 * n1 * slope * slope * delta * delta;
    let mut worst: f64 = 0.0;
    for seg in &traj.segments {
        let (a, h) = (seg.r_start(), seg.h);
        let mut piece = 0.0;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let r = a + x * h;
            piece += w * density(r, seg.state_at(r).up);
        }
        acc += piece * h;
        let end = seg.state_at(seg.r_end());
        let lhs = kinetic(p.sign, end.up)? + acc;
        let rhs = p.nonlinearity.primitive_drop(p.xi, end.u)?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(Some(worst))
}

/// Energy diagnostics appropriate to the problem's dimension.
pub fn energy_report(traj: &Trajectory) -> Result<EnergyReport, DiagnosticsError> {
    if traj.problem.dimension == 1 {
        energy_identity_residual(traj)
    } else {
        lyapunov_profile(traj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryStatus {
    Checked,
    /// Identically zero solution.
    Trivial,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub status: SymmetryStatus,
    pub critical_point: Option<f64>,
    pub zero: Option<f64>,
    /// `max_s |u(r_c+s) − u(r_c−s)|`
    pub symmetric_residual: Option<f64>,
    /// `max_s |u(r_z+s) + u(r_z−s)|`
    pub antisymmetric_residual: Option<f64>,
    pub window: Option<f64>,
}

impl SymmetryReport {
    pub fn passes(&self, tol: f64) -> bool {
        match self.status {
            SymmetryStatus::Trivial => true,
            SymmetryStatus::Inconclusive => false,
            SymmetryStatus::Checked => {
                self.symmetric_residual.is_some_and(|x| x <= tol)
                    && self.antisymmetric_residual.is_some_and(|x| x <= tol)
            }
        }
    }
}

/// Mirror residuals about the first interior critical point and first zero (`N = 1`).
pub fn symmetry_check(traj: &Trajectory) -> Result<SymmetryReport, DiagnosticsError> {
    if traj.problem.dimension != 1 {
        return Err(DiagnosticsError::Precondition(format!(
            "symmetry holds for N = 1, got N = {}",
            traj.problem.dimension
        )));
    }
    let floor = traj.controls.noise_floor();
    if traj.sup_norm <= floor && traj.interior_events().next().is_none() {
        return Ok(SymmetryReport {
            status: SymmetryStatus::Trivial,
            critical_point: None,
            zero: None,
            symmetric_residual: Some(0.0),
            antisymmetric_residual: Some(0.0),
            window: None,
        });
    }
    let rc = traj.critical_points().next().map(|e| e.r);
    let rz = traj.zeros().next().map(|e| e.r);
    let (lo, hi) = traj.r_range();

    let mirror = |center: f64, sign: f64| -> Option<(f64, f64)> {
        let window = (center - lo).min(hi - center);
        if !(window > 0.0) {
            return None;
        }
        let mut worst: f64 = 0.0;
        for k in 1..=SYMMETRY_GRID {
            let s = window * k as f64 / SYMMETRY_GRID as f64;
            let a = traj.interpolate((center + s).min(hi))?;
            let b = traj.interpolate((center - s).max(lo))?;
            worst = worst.max((a.u - sign * b.u).abs());
        }
        Some((worst, window))
    };

    let sym = rc.and_then(|c| mirror(c, 1.0));
    let anti = rz.and_then(|z| mirror(z, -1.0));
    let status = if sym.is_some() && anti.is_some() {
        SymmetryStatus::Checked
    } else {
        SymmetryStatus::Inconclusive
    };
    Ok(SymmetryReport {
        status,
        critical_point: rc,
        zero: rz,
        symmetric_residual: sym.map(|x| x.0),
        antisymmetric_residual: anti.map(|x| x.0),
        window: match (sym, anti) {
            (Some(a), Some(b)) => Some(a.1.min(b.1)),
            (Some(a), None) | (None, Some(a)) => Some(a.1),
            _ => None,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// `(r, |u|)` at the origin and at every recorded critical point.
    pub entries: Vec<(f64, f64)>,
    pub strictly_decreasing: bool,
    /// Index of the first entry that fails to decrease.
    pub first_violation: Option<usize>,
    /// Least-squares slope of `log|u|` against `log r` over the later half of the extrema.
    pub decay_exponent: Option<f64>,
}

impl EnvelopeReport {
    pub fn tail(&self, k: usize) -> &[(f64, f64)] {
        let n = self.entries.len();
        &self.entries[n.saturating_sub(k)..]
    }

    pub fn tail_max(&self, k: usize) -> Option<f64> {
        let t = self.tail(k);
        (!t.is_empty()).then(|| t.iter().map(|e| e.1).fold(0.0, f64::max))
    }
}

/// Heights at successive extrema for `N ≥ 2`.
pub fn extrema_envelope(traj: &Trajectory) -> Result<EnvelopeReport, DiagnosticsError> {
    if traj.problem.dimension < 2 {
        return Err(DiagnosticsError::Precondition(format!(
            "envelope decay is an N >= 2 property, got N = {}",
            traj.problem.dimension
        )));
    }
    let mut entries = vec![(0.0, traj.problem.xi.abs())];
    entries.extend(
        traj.events
            .iter()
            .filter(|e| e.kind == EventKind::CriticalPoint)
            .map(|e| (e.r, e.u.abs())),
    );
    let first_violation = entries
        .windows(2)
        .position(|w| !(w[1].1 < w[0].1 + ENVELOPE_SLACK))
        .map(|i| i + 1);

    let interior = &entries[1..];
    let decay_exponent = if interior.len() >= 8 {
        let half = &interior[interior.len() / 2..];
        let pts: Vec<(f64, f64)> = half
            .iter()
            .filter(|e| e.1 > 0.0 && e.0 > 0.0)
            .map(|e| (e.0.ln(), e.1.ln()))
            .collect();
        slope(&pts)
    } else {
        None
    };

    Ok(EnvelopeReport {
        strictly_decreasing: first_violation.is_none(),
        first_violation,
        entries,
        decay_exponent,
    })
}

fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate, IntegrationControls};
    use crate::nonlinearity::NonlinearitySpec;
    use proptest::prelude::*;

    fn run(sign: CurvatureSign, n: usize, xi: f64, g: NonlinearitySpec, r_max: f64) -> Trajectory {
        let p = ProblemSpec::new(sign, n, xi, g).unwrap();
        integrate(&p, &IntegrationControls::default().with_r_max(r_max)).unwrap()
    }

    #[test]
    fn h_examples() {
        assert_eq!(h_plus(0.0), 0.0);
        assert!((h_plus(1.0) - (1.0 - 0.5f64.sqrt())).abs() < 1e-16);
        assert!((h_plus(1.0) - 0.2928932).abs() < 1e-7);
        assert!((h_minus(0.6).unwrap() - 0.25).abs() < 1e-15);
        assert!(h_minus(1.0).is_err());
        assert!(h_minus(-1.5).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(h_plus_inverse(0.0).unwrap(), 0.0);
        assert!((h_plus_inverse(1.0 - 0.5f64.sqrt()).unwrap() - 1.0).abs() < 1e-14);
        assert!((h_minus_inverse(0.25).unwrap() - 0.6).abs() < 1e-15);
        assert!(h_plus_inverse(1.0).is_err());
        assert!(h_plus_inverse(-0.1).is_err());
        assert!(h_minus_inverse(-0.1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn h_is_even(t in -0.999f64..0.999, big in -1e6f64..1e6) {
            prop_assert_eq!(h_plus(t), h_plus(-t));
            prop_assert_eq!(h_plus(big), h_plus(-big));
            prop_assert_eq!(h_minus(t).unwrap(), h_minus(-t).unwrap());
        }

        #[test]
        fn inverses_round_trip(s in 0.0f64..1.0, s2 in 0.0f64..1.0) {
            let t = h_plus_inverse(s).unwrap();
            prop_assert!((h_plus(t) - s).abs() <= 1e-14);
            let t = h_minus_inverse(s2).unwrap();
            prop_assert!((h_minus(t).unwrap() - s2).abs() <= 1e-14);
        }

        #[test]
        fn lorentz_round_trip_is_conditioning_limited(s in 1.0f64..1e3) {
            // Beyond s = 1 the error is one ulp of t amplified by H₋′(t) = t(1+s)³.
            let t = h_minus_inverse(s).unwrap();
            let bound = 1e-14_f64.max(4.0 * f64::EPSILON * t * (1.0 + s).powi(3));
            prop_assert!((h_minus(t).unwrap() - s).abs() <= bound);
        }
    }

    #[test]
    fn euclidean_sine_energy_identity() {
        let t = run(CurvatureSign::Euclidean, 1, 1.0, NonlinearitySpec::sin(), 50.0);
        let e = energy_identity_residual(&t).unwrap();
        assert!(e.max_identity_residual.unwrap() <= 1e-8, "{e:?}");
    }

    #[test]
    fn lorentz_cubic_energy_identity() {
        let t = run(CurvatureSign::Lorentz, 1, 0.9, NonlinearitySpec::cubic(), 50.0);
        let e = energy_identity_residual(&t).unwrap();
        assert!(e.max_identity_residual.unwrap() <= 1e-8, "{e:?}");
        assert!(e.light_cone_gap.unwrap() > 0.0);
    }

    #[test]
    fn zero_solution_has_zero_residual() {
        let t = run(CurvatureSign::Euclidean, 1, 0.0, NonlinearitySpec::sin(), 50.0);
        assert_eq!(energy_identity_residual(&t).unwrap().max_identity_residual, Some(0.0));
        let t = run(CurvatureSign::Lorentz, 2, 0.0, NonlinearitySpec::sin(), 50.0);
        let z = lyapunov_profile(&t).unwrap();
        assert!(z.z_values.iter().all(|v| v.1 == 0.0));
        assert_eq!(z.max_z_uptick, Some(0.0));
    }

    #[test]
    fn energy_residual_tracks_tolerance() {
        let p = ProblemSpec::new(CurvatureSign::Euclidean, 1, 1.0, NonlinearitySpec::sin()).unwrap();
        let c = IntegrationControls::default().with_r_max(50.0);
        let loose = integrate(&p, &c.with_tolerances(1e-8, 1e-10)).unwrap();
        let tight = integrate(&p, &c.with_tolerances(1e-12, 1e-14)).unwrap();
        let a = energy_identity_residual(&loose).unwrap().max_identity_residual.unwrap();
        let b = energy_identity_residual(&tight).unwrap().max_identity_residual.unwrap();
        assert!(a >= 1e2 * b, "loose {a:e} tight {b:e}");
    }

    #[test]
    fn euclidean_plane_lyapunov_decreases() {
        let t = run(CurvatureSign::Euclidean, 2, 1.0, NonlinearitySpec::sin(), 1e3);
        let z = lyapunov_profile(&t).unwrap();
        assert!(z.max_z_uptick.unwrap() <= Z_UPTICK_SLACK, "{:?}", z.max_z_uptick);
        assert!(
            z.dissipation_identity_residual.unwrap() <= 1e-8,
            "{:?}",
            z.dissipation_identity_residual
        );
    }

    #[test]
    fn lorentz_space_lyapunov_nonnegative_and_decreasing() {
        let t = run(
            CurvatureSign::Lorentz,
            3,
            0.5,
            NonlinearitySpec::linear(1.0).unwrap(),
            1e3,
        );
        let z = lyapunov_profile(&t).unwrap();
        assert!(z.max_z_uptick.unwrap() <= Z_UPTICK_SLACK);
        assert!(z.min_z.unwrap() >= -1e-9);
    }

    #[test]
    fn dimension_preconditions() {
        let t1 = run(CurvatureSign::Euclidean, 1, 1.0, NonlinearitySpec::sin(), 10.0);
        let t2 = run(CurvatureSign::Euclidean, 2, 1.0, NonlinearitySpec::sin(), 10.0);
        assert!(lyapunov_profile(&t1).is_err());
        assert!(energy_identity_residual(&t2).is_err());
        assert!(extrema_envelope(&t1).is_err());
        assert!(symmetry_check(&t2).is_err());
    }

    #[test]
    fn lorentz_sine_symmetry() {
        let t = run(CurvatureSign::Lorentz, 1, 1.0, NonlinearitySpec::sin(), 40.0);
        let s = symmetry_check(&t).unwrap();
        assert_eq!(s.status, SymmetryStatus::Checked);
        assert!(s.passes(1e-7), "{s:?}");
    }

    #[test]
    fn zero_solution_is_trivially_symmetric() {
        let t = run(CurvatureSign::Lorentz, 1, 0.0, NonlinearitySpec::sin(), 40.0);
        let s = symmetry_check(&t).unwrap();
        assert_eq!(s.status, SymmetryStatus::Trivial);
        assert!(s.passes(1e-7));
    }

    #[test]
    fn short_window_is_inconclusive() {
        let t = run(CurvatureSign::Lorentz, 1, 1.0, NonlinearitySpec::sin(), 1.0);
        let s = symmetry_check(&t).unwrap();
        assert_eq!(s.status, SymmetryStatus::Inconclusive);
    }

    #[test]
    fn euclidean_cubic_symmetry_against_reintegration() {
        use crate::dynamics::State;
        use crate::integrator::integrate_from;
        let p = ProblemSpec::new(CurvatureSign::Euclidean, 1, 0.5, NonlinearitySpec::cubic()).unwrap();
        let t = integrate(&p, &IntegrationControls::default().with_r_max(40.0)).unwrap();
        let s = symmetry_check(&t).unwrap();
        assert!(s.passes(1e-7), "{s:?}");

        // Independent check: v(r) = -u(2z - r) solves the same equation, so a
        // backward run from the first zero must reproduce -u reflected about it.
        let z = *t.zeros().next().unwrap();
        let mirrored = integrate_from(&p, State::new(z.r, -z.u, z.up), (z.r - 3.0).max(0.1), &t.controls).unwrap();
        for m in mirrored.samples.iter().skip(1) {
            let ahead = t.interpolate(2.0 * z.r - m.r).unwrap();
            assert!((ahead.u + m.u).abs() <= 1e-7, "r={} {} {}", m.r, ahead.u, m.u);
        }
    }

    #[test]
    fn envelope_euclidean_plane_decreases() {
        let t = run(CurvatureSign::Euclidean, 2, 1.0, NonlinearitySpec::sin(), 1e3);
        let env = extrema_envelope(&t).unwrap();
        assert!(env.strictly_decreasing, "{:?}", env.first_violation);
        assert!(env.entries.len() > 20);
        // Linearized decay for N = 2 goes like r^{-1/2}.
        let k = env.decay_exponent.unwrap();
        assert!((-0.7..-0.3).contains(&k), "exponent {k}");
    }

    #[test]
    fn envelope_lorentz_space_cubic_decreases() {
        let t = run(CurvatureSign::Lorentz, 3, 0.9, NonlinearitySpec::cubic(), 1e3);
        let env = extrema_envelope(&t).unwrap();
        assert!(env.strictly_decreasing, "{:?}", env.first_violation);
    }
}
