//! Predicted versus observed qualitative behaviour of radial solutions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{self, DiagnosticsError, EnergySummary};
use crate::dynamics::{CurvatureSign, ProblemSpec};
use crate::integrator::{self, IntegrateError, IntegrationControls, TerminationCause, Trajectory};
use crate::nonlinearity::{Alpha, NonlinearityError, NonlinearitySpec};

/// Tolerance on `G(ξ) − 1` when `G` comes from quadrature.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Minimum number of interior zeros for an oscillation verdict.
pub const MIN_ZEROS: usize = 6;
/// Relative spread allowed across zero-to-zero gaps of a periodic solution.
pub const PERIOD_SPREAD_TOL: f64 = 1e-6;
/// Envelope tail height accepted as localized.
pub const ENVELOPE_TAIL: f64 = 1e-4;
/// Log-log envelope slope accepted as decay when the tail is still above [`ENVELOPE_TAIL`].
pub const DECAY_EXPONENT_MAX: f64 = -0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Constant,
    MonotoneDivergence,
    GradientBlowup,
    PeriodicOscillating,
    LocalizedOscillating,
    TheoryBoundary,
    OutsideTheory,
}

impl Regime {
    pub const ALL: [Regime; 7] = [
        Regime::Constant,
        Regime::MonotoneDivergence,
        Regime::GradientBlowup,
        Regime::PeriodicOscillating,
        Regime::LocalizedOscillating,
        Regime::TheoryBoundary,
        Regime::OutsideTheory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Constant => "Constant",
            Regime::MonotoneDivergence => "MonotoneDivergence",
            Regime::GradientBlowup => "GradientBlowup",
            Regime::PeriodicOscillating => "PeriodicOscillating",
            Regime::LocalizedOscillating => "LocalizedOscillating",
            Regime::TheoryBoundary => "TheoryBoundary",
            Regime::OutsideTheory => "OutsideTheory",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown regime `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Level {
    Below,
    At,
    Above,
    Uncertain,
}

/// Position of `G(a)` relative to 1. Closed forms decide exactly.
fn level(g: &NonlinearitySpec, a: f64) -> Result<Level, NonlinearityError> {
    if let Some(t) = g.threshold_closed_form() {
        return Ok(match a.partial_cmp(&t) {
            Some(std::cmp::Ordering::Less) => Level::Below,
            Some(std::cmp::Ordering::Equal) => Level::At,
            _ => Level::Above,
        });
    }
    let value = g.primitive(a)?;
    if g.has_closed_form() {
        return Ok(match value.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => Level::Below,
            Some(std::cmp::Ordering::Equal) => Level::At,
            _ => Level::Above,
        });
    }
    Ok(if (value - 1.0).abs() <= BOUNDARY_TOL {
        Level::Uncertain
    } else if value < 1.0 {
        Level::Below
    } else {
        Level::Above
    })
}

/// Regime implied by the existence theory for this problem.
pub fn predict(problem: &ProblemSpec) -> Result<Regime, NonlinearityError> {
    let a = problem.xi.abs();
    let g = &problem.nonlinearity;
    if a == 0.0 {
        return Ok(Regime::Constant);
    }
    if let Alpha::Finite(alpha) = g.alpha() {
        if a == alpha {
            return Ok(Regime::Constant);
        }
        if a > alpha {
            return Ok(Regime::MonotoneDivergence);
        }
    }
    let one_dim = problem.dimension == 1;
    Ok(match problem.sign {
        CurvatureSign::Lorentz if one_dim => Regime::PeriodicOscillating,
        CurvatureSign::Lorentz => Regime::LocalizedOscillating,
        CurvatureSign::Euclidean => match (one_dim, level(g, a)?) {
            (_, Level::Uncertain) => Regime::TheoryBoundary,
            (true, Level::Below) => Regime::PeriodicOscillating,
            (true, _) => Regime::GradientBlowup,
            (false, Level::Below | Level::At) => Regime::LocalizedOscillating,
            (false, Level::Above) => Regime::OutsideTheory,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSummary {
    pub extrema: usize,
    pub strictly_decreasing: bool,
    pub first_violation: Option<usize>,
    /// Largest `|u|` over the last three extrema.
    pub tail_max: f64,
    pub decay_exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub termination: Option<TerminationCause>,
    pub termination_r: Option<f64>,
    pub zero_count: usize,
    pub critical_count: usize,
    pub decayed: bool,
    pub stalled: bool,
    pub sup_norm: f64,
    pub max_height_deviation: f64,
    /// `|u|` strictly increases across all samples.
    pub monotone_growth: bool,
    pub period: Option<f64>,
    pub period_spread: Option<f64>,
    pub envelope: Option<EnvelopeSummary>,
    pub anomaly: bool,
    pub notes: Vec<String>,
}

fn strictly_growing(traj: &Trajectory) -> bool {
    traj.samples.windows(2).all(|w| w[1].u.abs() > w[0].u.abs())
}

/// Observed regime from a trajectory alone.
pub fn observe(traj: &Trajectory) -> Result<(Regime, Evidence), ClassifyError> {
    let p = &traj.problem;
    let zeros: Vec<f64> = traj.zeros().map(|e| e.r).collect();
    let critical_count = traj.critical_points().count();
    let max_height_deviation = traj.samples.iter().map(|s| (s.u - p.xi).abs()).fold(0.0, f64::max);
    let termination = traj.termination_cause();
    let mut ev = Evidence {
        termination,
        termination_r: traj.termination().map(|e| e.r),
        zero_count: zeros.len(),
        critical_count,
        decayed: traj.decayed,
        stalled: false,
        sup_norm: traj.sup_norm,
        max_height_deviation,
        monotone_growth: traj.samples.len() > 1 && strictly_growing(traj),
        period: None,
        period_spread: None,
        envelope: None,
        anomaly: false,
        notes: Vec::new(),
    };

    if zeros.len() >= 2 {
        let gaps: Vec<f64> = zeros.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        ev.period = Some(2.0 * mean);
        ev.period_spread = Some(gaps.iter().map(|g| (g - mean).abs()).fold(0.0, f64::max) / mean);
    }
    if p.dimension >= 2 {
        let env = diagnostics::extrema_envelope(traj)?;
        ev.envelope = Some(EnvelopeSummary {
            extrema: env.entries.len() - 1,
            strictly_decreasing: env.strictly_decreasing,
            first_violation: env.first_violation,
            tail_max: env.tail_max(3).unwrap_or(0.0),
            decay_exponent: env.decay_exponent,
        });
    }

    if traj.interior_events().next().is_none()
        && max_height_deviation <= traj.controls.noise_floor()
        && termination == Some(TerminationCause::HorizonReached)
    {
        return Ok((Regime::Constant, ev));
    }

    let escaping = zeros.is_empty() && ev.monotone_growth;
    let regime = match termination {
        Some(TerminationCause::GradientBlowup) => Regime::GradientBlowup,
        Some(TerminationCause::LightConeApproach) => {
            if escaping {
                ev.notes
                    .push("light-cone approach while |u| grows without zeros".into());
                Regime::MonotoneDivergence
            } else {
                ev.anomaly = true;
                ev.notes.push("light-cone approach with bounded height".into());
                Regime::OutsideTheory
            }
        }
        Some(TerminationCause::HeightDivergence) => {
            if zeros.is_empty() {
                Regime::MonotoneDivergence
            } else {
                ev.notes.push("height divergence after crossing zero".into());
                Regime::OutsideTheory
            }
        }
        Some(TerminationCause::HorizonReached | TerminationCause::EventBudgetExhausted) | None => {
            oscillation_verdict(traj, &mut ev, escaping)
        }
    };
    Ok((regime, ev))
}

fn oscillation_verdict(traj: &Trajectory, ev: &mut Evidence, escaping: bool) -> Regime {
    if escaping && traj.sup_norm > traj.problem.xi.abs() {
        ev.notes
            .push("monotone growth without reaching the divergence threshold".into());
        return Regime::MonotoneDivergence;
    }
    if ev.zero_count < MIN_ZEROS {
        ev.notes.push(format!("only {} zeros recorded", ev.zero_count));
        return Regime::OutsideTheory;
    }
    if traj.problem.dimension == 1 {
        return match ev.period_spread {
            Some(s) if s <= PERIOD_SPREAD_TOL => Regime::PeriodicOscillating,
            _ => {
                ev.notes.push("zero-to-zero gaps not stable".into());
                Regime::OutsideTheory
            }
        };
    }
    let env = ev.envelope.as_ref().expect("envelope computed for N >= 2");
    if !env.strictly_decreasing {
        ev.notes.push("extrema envelope not strictly decreasing".into());
        return Regime::OutsideTheory;
    }
    let decaying =
        ev.decayed || env.tail_max < ENVELOPE_TAIL || env.decay_exponent.is_some_and(|k| k <= DECAY_EXPONENT_MAX);
    if decaying {
        Regime::LocalizedOscillating
    } else {
        ev.notes
            .push("envelope decreasing without evidence of decay to zero".into());
        Regime::OutsideTheory
    }
}

/// Whether an observation is consistent with the prediction.
pub fn agrees(sign: CurvatureSign, predicted: Regime, observed: Regime) -> bool {
    match predicted {
        Regime::TheoryBoundary | Regime::OutsideTheory => true,
        Regime::MonotoneDivergence => {
            observed == Regime::MonotoneDivergence
                || (sign == CurvatureSign::Euclidean && observed == Regime::GradientBlowup)
        }
        p => p == observed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub sign: CurvatureSign,
    pub dimension: usize,
    pub xi: f64,
    pub nonlinearity: String,
    pub predicted: Regime,
    pub observed: Regime,
    pub agree: bool,
    pub evidence: Evidence,
    pub energy: Option<EnergySummary>,
}

/// Classify an already integrated trajectory.
pub fn classify_trajectory(traj: &Trajectory) -> Result<ClassificationReport, ClassifyError> {
    let p = &traj.problem;
    let predicted = predict(p)?;
    let (observed, evidence) = observe(traj)?;
    let energy = diagnostics::energy_report(traj)?.summary();
    Ok(ClassificationReport {
        sign: p.sign,
        dimension: p.dimension,
        xi: p.xi,
        nonlinearity: p.nonlinearity.label().to_string(),
        predicted,
        observed,
        agree: agrees(p.sign, predicted, observed),
        evidence,
        energy: Some(energy),
    })
}

/// Integrate and classify. A stalled run is reported as `OutsideTheory`
/// with the partial trajectory's evidence.
pub fn classify(
    problem: &ProblemSpec,
    controls: &IntegrationControls,
) -> Result<(ClassificationReport, Trajectory), ClassifyError> {
    match integrator::integrate(problem, controls) {
        Ok(traj) => Ok((classify_trajectory(&traj)?, traj)),
        Err(IntegrateError::Stalled { r, partial }) => {
            let predicted = predict(problem)?;
            let (_, mut evidence) = observe(&partial)?;
            evidence.stalled = true;
            evidence.notes.push(format!("integration stalled at r = {r}"));
            let report = ClassificationReport {
                sign: problem.sign,
                dimension: problem.dimension,
                xi: problem.xi,
                nonlinearity: problem.nonlinearity.label().to_string(),
                predicted,
                observed: Regime::OutsideTheory,
                agree: agrees(problem.sign, predicted, Regime::OutsideTheory),
                evidence,
                energy: diagnostics::energy_report(&partial).ok().map(|e| e.summary()),
            };
            Ok((report, *partial))
        }
        Err(e) => Err(e.into()),
    }
}
