//! Adaptive Dormand–Prince 5(4) integration of the radial problems.
//!
//! Every accepted step keeps its quartic dense-output polynomial, which is
//! used for event location (zeros of `u`, critical points of `u`) and for
//! interpolation by the diagnostics. Integration stops on the first
//! termination cause: gradient blow-up, height divergence, light-cone
//! approach (Lorentz), event budget exhaustion, or the horizon.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{CurvatureSign, DynamicsError, ProblemSpec, State, DEFAULT_ORIGIN_DELTA};

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MAX_GROWTH: f64 = 10.0;
const MIN_SHRINK: f64 = 0.2;

/// Sub-intervals per step scanned for sign changes.
const EVENT_SCAN_POINTS: usize = 4;

/// Extrema below this height count towards the decay stop.
pub const DECAY_HEIGHT: f64 = 1e-10;
/// Consecutive small extrema that trigger the decay stop.
pub const DECAY_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrationControls {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub r_max: f64,
    pub max_events: usize,
    /// Euclidean: terminate once `|u′|` exceeds this.
    pub up_blowup_threshold: f64,
    /// Lorentz: steps landing with `1 − |u′| < lorentz_margin` are rejected.
    pub lorentz_margin: f64,
    /// `None` selects `max(10⁶, 100|ξ|, 100 α_eff)`.
    pub u_divergence_threshold: Option<f64>,
    pub event_r_tol: f64,
    pub origin_delta: f64,
    pub max_steps: usize,
}

impl Default for IntegrationControls {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            r_max: 1e3,
            max_events: 1000,
            up_blowup_threshold: 1e8,
            lorentz_margin: 1e-10,
            u_divergence_threshold: None,
            event_r_tol: 1e-12,
            origin_delta: DEFAULT_ORIGIN_DELTA,
            max_steps: 20_000_000,
        }
    }
}

impl IntegrationControls {
    pub fn with_r_max(mut self, r_max: f64) -> Self {
        self.r_max = r_max;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("r_max", self.r_max),
            ("up_blowup_threshold", self.up_blowup_threshold),
            ("lorentz_margin", self.lorentz_margin),
            ("event_r_tol", self.event_r_tol),
            ("origin_delta", self.origin_delta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(IntegrateError::InvalidControls(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.lorentz_margin >= 1.0 {
            return Err(IntegrateError::InvalidControls("lorentz_margin must be below 1".into()));
        }
        if self.origin_delta > 1e-3 {
            return Err(IntegrateError::InvalidControls(format!(
                "origin_delta must not exceed 1e-3, got {}",
                self.origin_delta
            )));
        }
        if self.max_events == 0 || self.max_steps == 0 {
            return Err(IntegrateError::InvalidControls(
                "max_events and max_steps must be positive".into(),
            ));
        }
        if let Some(t) = self.u_divergence_threshold {
            if !(t > 0.0) {
                return Err(IntegrateError::InvalidControls(format!(
                    "u_divergence_threshold must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn divergence_threshold(&self, problem: &ProblemSpec) -> f64 {
        self.u_divergence_threshold.unwrap_or_else(|| {
            let alpha_eff = problem.nonlinearity.alpha().effective();
            1e6f64.max(100.0 * problem.xi.abs()).max(100.0 * alpha_eff)
        })
    }

    /// Events need `|u|` (resp. `|u′|`) to exceed this since the previous one.
    pub fn noise_floor(&self) -> f64 {
        1e3 * self.abs_tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Zero,
    CriticalPoint,
    Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    GradientBlowup,
    LightConeApproach,
    HeightDivergence,
    HorizonReached,
    EventBudgetExhausted,
}

impl TerminationCause {
    pub fn name(self) -> &'static str {
        match self {
            TerminationCause::GradientBlowup => "gradient_blowup",
            TerminationCause::LightConeApproach => "light_cone_approach",
            TerminationCause::HeightDivergence => "height_divergence",
            TerminationCause::HorizonReached => "horizon_reached",
            TerminationCause::EventBudgetExhausted => "event_budget_exhausted",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            TerminationCause::GradientBlowup,
            TerminationCause::LightConeApproach,
            TerminationCause::HeightDivergence,
            TerminationCause::HorizonReached,
            TerminationCause::EventBudgetExhausted,
        ]
        .into_iter()
        .find(|c| c.name() == s)
    }
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Zero => "zero",
            EventKind::CriticalPoint => "critical_point",
            EventKind::Termination => "termination",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [EventKind::Zero, EventKind::CriticalPoint, EventKind::Termination]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub r: f64,
    pub u: f64,
    pub up: f64,
    pub termination_cause: Option<TerminationCause>,
}

impl EventRecord {
    fn at(kind: EventKind, s: State) -> Self {
        Self {
            kind,
            r: s.r,
            u: s.u,
            up: s.up,
            termination_cause: None,
        }
    }

    pub fn state(&self) -> State {
        State::new(self.r, self.u, self.up)
    }
}

/// Dense output of one accepted step:
/// `y(θ) = c₀ + θ(c₁ + (1−θ)(c₂ + θ(c₃ + (1−θ)c₄)))`, `r = r0 + θh`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseSegment {
    pub r0: f64,
    pub h: f64,
    coeffs: [[f64; 2]; 5],
}

impl DenseSegment {
    pub fn r_start(&self) -> f64 {
        self.r0
    }

    pub fn r_end(&self) -> f64 {
        self.r0 + self.h
    }

    fn lo(&self) -> f64 {
        self.r_start().min(self.r_end())
    }

    fn hi(&self) -> f64 {
        self.r_start().max(self.r_end())
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.lo() && r <= self.hi()
    }

    #[inline]
    fn eval_theta(&self, theta: f64) -> State {
        let t1 = 1.0 - theta;
        let c = &self.coeffs;
        let comp = |i: usize| c[0][i] + theta * (c[1][i] + t1 * (c[2][i] + theta * (c[3][i] + t1 * c[4][i])));
        State::new(self.r0 + theta * self.h, comp(0), comp(1))
    }

    /// Interpolated state at `r` (clamped to the segment).
    pub fn state_at(&self, r: f64) -> State {
        let theta = ((r - self.r0) / self.h).clamp(0.0, 1.0);
        let mut s = self.eval_theta(theta);
        s.r = r;
        s
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("predicate does not change sign on [{a}, {b}]")]
    NoSignChange { a: f64, b: f64 },
}

/// Bisection on the dense interpolant for a sign change of `predicate`.
///
/// Shrinks the bracket to width `r_tol`, then keeps bisecting while the
/// predicate magnitude exceeds `value_tol` and the bracket can still split.
pub fn locate_event<P: Fn(&State) -> f64>(
    segment: &DenseSegment,
    predicate: P,
    r_a: f64,
    r_b: f64,
    r_tol: f64,
    value_tol: f64,
) -> Result<f64, EventError> {
    let theta_of = |r: f64| ((r - segment.r0) / segment.h).clamp(0.0, 1.0);
    let (mut ta, mut tb) = (theta_of(r_a), theta_of(r_b));
    let mut fa = predicate(&segment.eval_theta(ta));
    let fb = predicate(&segment.eval_theta(tb));
    if fa == 0.0 {
        return Ok(segment.r0 + ta * segment.h);
    }
    if fb == 0.0 {
        return Ok(segment.r0 + tb * segment.h);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(EventError::NoSignChange { a: r_a, b: r_b });
    }
    let h = segment.h.abs();
    loop {
        let tm = 0.5 * (ta + tb);
        if tm <= ta.min(tb) || tm >= ta.max(tb) {
            return Ok(segment.r0 + tm * segment.h);
        }
        let fm = predicate(&segment.eval_theta(tm));
        let narrow = (tb - ta).abs() * h <= r_tol;
        if fm == 0.0 || (narrow && fm.abs() <= value_tol) {
            return Ok(segment.r0 + tm * segment.h);
        }
        if fm.signum() == fa.signum() {
            ta = tm;
            fa = fm;
        } else {
            tb = tm;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub problem: ProblemSpec,
    pub controls: IntegrationControls,
    /// Accepted step endpoints and event states, ordered along the integration direction.
    pub samples: Vec<State>,
    pub events: Vec<EventRecord>,
    pub sup_norm: f64,
    /// Set when the run stopped early on consecutive negligible extrema.
    pub decayed: bool,
    pub segments: Vec<DenseSegment>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl Trajectory {
    pub fn termination(&self) -> Option<&EventRecord> {
        self.events.last().filter(|e| e.kind == EventKind::Termination)
    }

    pub fn termination_cause(&self) -> Option<TerminationCause> {
        self.termination().and_then(|e| e.termination_cause)
    }

    pub fn zeros(&self) -> impl Iterator<Item = &EventRecord> {
        self.events.iter().filter(|e| e.kind == EventKind::Zero)
    }

    pub fn critical_points(&self) -> impl Iterator<Item = &EventRecord> {
        self.events.iter().filter(|e| e.kind == EventKind::CriticalPoint)
    }

    pub fn interior_events(&self) -> impl Iterator<Item = &EventRecord> {
        self.events.iter().filter(|e| e.kind != EventKind::Termination)
    }

    pub fn r_range(&self) -> (f64, f64) {
        let a = self.samples.first().map_or(0.0, |s| s.r);
        let b = self.samples.last().map_or(0.0, |s| s.r);
        (a.min(b), a.max(b))
    }

    pub fn gradient_sup(&self) -> f64 {
        self.samples.iter().map(|s| s.up.abs()).fold(0.0, f64::max)
    }

    /// Dense-output state at `r`, or `None` outside the integrated range.
    pub fn interpolate(&self, r: f64) -> Option<State> {
        let first = self.segments.first()?;
        let forward = first.h > 0.0;
        // Segments are contiguous and monotone along the integration direction.
        let idx = self
            .segments
            .partition_point(|s| if forward { s.r_end() < r } else { s.r_end() > r });
        let seg = self.segments.get(idx)?;
        seg.contains(r).then(|| seg.state_at(r))
    }
}

#[derive(Debug, Error, Clone)]
pub enum IntegrateError {
    #[error("integration stalled at r = {r}: step size underflow")]
    Stalled { r: f64, partial: Box<Trajectory> },
    #[error("invalid integration controls: {0}")]
    InvalidControls(String),
    #[error("invalid start state: {0}")]
    InvalidStart(#[from] DynamicsError),
}

/// Integrate the Cauchy problem `u(0) = ξ, u′(0) = 0` from the regularized
/// start at `r = origin_delta` to `r_max` or the first termination.
pub fn integrate(problem: &ProblemSpec, controls: &IntegrationControls) -> Result<Trajectory, IntegrateError> {
    controls.validate()?;
    let start = problem.origin_start(controls.origin_delta);
    integrate_from(problem, start, controls.r_max, controls)
}

/// Integrate from an arbitrary state towards `r_end`, which may lie below `start.r`.
pub fn integrate_from(
    problem: &ProblemSpec,
    start: State,
    r_end: f64,
    controls: &IntegrationControls,
) -> Result<Trajectory, IntegrateError> {
    controls.validate()?;
    Stepper::new(problem, start, r_end, controls)?.run()
}

struct Stepper<'a> {
    problem: &'a ProblemSpec,
    controls: &'a IntegrationControls,
    r_end: f64,
    dir: f64,
    divergence: f64,
    traj: Trajectory,
    // Largest |u| since the last recorded zero, largest |u′| since the last critical point.
    peak_u: f64,
    peak_up: f64,
    small_extrema: usize,
    event_count: usize,
}

struct StepOutcome {
    y1: [f64; 2],
    k7: [f64; 2],
    err: f64,
    segment: DenseSegment,
}

enum Attempt {
    Ok(StepOutcome),
    /// Stage left the admissible region or produced non-finite values.
    Inadmissible,
}

impl<'a> Stepper<'a> {
    fn new(
        problem: &'a ProblemSpec,
        start: State,
        r_end: f64,
        controls: &'a IntegrationControls,
    ) -> Result<Self, IntegrateError> {
        problem.rhs(start)?;
        if !start.is_finite() || !r_end.is_finite() {
            return Err(IntegrateError::InvalidControls(
                "start state and horizon must be finite".into(),
            ));
        }
        let dir = if r_end >= start.r { 1.0 } else { -1.0 };
        if dir < 0.0 && r_end <= 0.0 {
            return Err(IntegrateError::InvalidControls(format!(
                "backward horizon must stay at positive r, got {r_end}"
            )));
        }
        let traj = Trajectory {
            problem: problem.clone(),
            controls: *controls,
            samples: vec![start],
            events: Vec::new(),
            sup_norm: start.u.abs(),
            decayed: false,
            segments: Vec::new(),
            steps_accepted: 0,
            steps_rejected: 0,
        };
        Ok(Self {
            problem,
            controls,
            r_end,
            dir,
            divergence: controls.divergence_threshold(problem),
            traj,
            peak_u: start.u.abs(),
            peak_up: start.up.abs(),
            small_extrema: 0,
            event_count: 0,
        })
    }

    fn f(&self, r: f64, y: [f64; 2]) -> Option<[f64; 2]> {
        match self.problem.rhs(State::new(r, y[0], y[1])) {
            Ok((a, b)) if a.is_finite() && b.is_finite() => Some([a, b]),
            _ => None,
        }
    }

    fn err_norm(&self, y0: [f64; 2], y1: [f64; 2], e: [f64; 2]) -> f64 {
        let mut acc = 0.0;
        for i in 0..2 {
            let sc = self.controls.abs_tol + self.controls.rel_tol * y0[i].abs().max(y1[i].abs());
            acc += (e[i] / sc).powi(2);
        }
        (acc / 2.0).sqrt()
    }

    /// Starting step from the usual two-evaluation heuristic.
    fn initial_step(&self, r0: f64, y0: [f64; 2], f0: [f64; 2]) -> f64 {
        let sc = |i: usize| self.controls.abs_tol + self.controls.rel_tol * y0[i].abs();
        let norm = |v: [f64; 2]| ((0..2).map(|i| (v[i] / sc(i)).powi(2)).sum::<f64>() / 2.0).sqrt();
        let d0 = norm(y0);
        let d1 = norm(f0);
        let span = (self.r_end - r0).abs();
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        // Keep the trial step comparable to r near the origin.
        h0 = h0.min(span).min(r0.abs().max(1e-6));
        let y1 = [y0[0] + self.dir * h0 * f0[0], y0[1] + self.dir * h0 * f0[1]];
        let d2 = match self.f(r0 + self.dir * h0, y1) {
            Some(f1) => norm([f1[0] - f0[0], f1[1] - f0[1]]) / h0,
            None => return self.dir * h0 * 0.1,
        };
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        self.dir * (100.0 * h0).min(h1).min(span)
    }

    fn attempt(&self, r: f64, y: [f64; 2], k1: [f64; 2], h: f64) -> Attempt {
        macro_rules! stage {
            ($c:expr, $($a:expr, $k:expr),+) => {{
                let yy = [
                    y[0] + h * (0.0 $(+ $a * $k[0])+),
                    y[1] + h * (0.0 $(+ $a * $k[1])+),
                ];
                match self.f(r + $c * h, yy) {
                    Some(v) => v,
                    None => return Attempt::Inadmissible,
                }
            }};
        }
        let k2 = stage!(C2, A21, k1);
        let k3 = stage!(C3, A31, k1, A32, k2);
        let k4 = stage!(C4, A41, k1, A42, k2, A43, k3);
        let k5 = stage!(C5, A51, k1, A52, k2, A53, k3, A54, k4);
        let k6 = stage!(1.0, A61, k1, A62, k2, A63, k3, A64, k4, A65, k5);
        let mut y1 = [0.0; 2];
        for i in 0..2 {
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        if !(y1[0].is_finite() && y1[1].is_finite()) {
            return Attempt::Inadmissible;
        }
        let r1 = r + h;
        let k7 = match self.f(r1, y1) {
            Some(v) => v,
            None => return Attempt::Inadmissible,
        };
        let mut e = [0.0; 2];
        for i in 0..2 {
            e[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err = self.err_norm(y, y1, e);
        let mut coeffs = [[0.0; 2]; 5];
        for i in 0..2 {
            let ydiff = y1[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            coeffs[0][i] = y[i];
            coeffs[1][i] = ydiff;
            coeffs[2][i] = bspl;
            coeffs[3][i] = ydiff - h * k7[i] - bspl;
            coeffs[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        Attempt::Ok(StepOutcome {
            y1,
            k7,
            err,
            segment: DenseSegment { r0: r, h, coeffs },
        })
    }

    fn h_min(&self, r: f64) -> f64 {
        1e-15 * r.abs().max(f64::MIN_POSITIVE)
    }

    fn run(mut self) -> Result<Trajectory, IntegrateError> {
        let start = self.traj.samples[0];
        let mut r = start.r;
        let mut y = [start.u, start.up];
        let mut k1 = self.f(r, y).expect("start state checked admissible");
        if r == self.r_end {
            self.terminate(TerminationCause::HorizonReached, start);
            return Ok(self.traj);
        }
        let mut h = self.initial_step(r, y, k1);
        let mut last_rejected = false;
        let mut constraint_pressure = false;
        let lorentz = self.problem.sign == CurvatureSign::Lorentz;
        let mut steps = 0usize;

        loop {
            steps += 1;
            if steps > self.controls.max_steps {
                return Err(self.stalled(r));
            }
            let remaining = self.r_end - r;
            let last = h.abs() >= remaining.abs();
            if last {
                h = remaining;
            }
            if h.abs() < self.h_min(r) {
                if lorentz && constraint_pressure {
                    let s = State::new(r, y[0], y[1]);
                    let r_hit = self.light_cone_radius(s);
                    self.terminate(TerminationCause::LightConeApproach, State { r: r_hit, ..s });
                    return Ok(self.traj);
                }
                // A vertical tangent at positive height: u′ ~ (r* − r)^{-1/2} cannot
                // reach the threshold before r* − r drops below one ulp of r.
                if !lorentz && y[1].abs() >= self.controls.up_blowup_threshold.sqrt() && k1[1] * y[1] > 0.0 {
                    self.terminate(TerminationCause::GradientBlowup, State::new(r, y[0], y[1]));
                    return Ok(self.traj);
                }
                return Err(self.stalled(r));
            }

            let outcome = match self.attempt(r, y, k1, h) {
                Attempt::Ok(o) => o,
                Attempt::Inadmissible => {
                    self.traj.steps_rejected += 1;
                    constraint_pressure = true;
                    last_rejected = true;
                    h *= 0.5;
                    continue;
                }
            };
            if outcome.err > 1.0 {
                self.traj.steps_rejected += 1;
                last_rejected = true;
                h *= (SAFETY * outcome.err.powf(-0.2)).max(MIN_SHRINK);
                continue;
            }
            if lorentz && 1.0 - outcome.y1[1].abs() < self.controls.lorentz_margin {
                // Already pressed against the margin and still steepening: |u'| has
                // no room left to move in floating point.
                if 1.0 - y[1].abs() < 2.0 * self.controls.lorentz_margin && k1[1] * y[1] > 0.0 {
                    let s = State::new(r, y[0], y[1]);
                    let r_hit = self.light_cone_radius(s);
                    self.terminate(TerminationCause::LightConeApproach, State { r: r_hit, ..s });
                    return Ok(self.traj);
                }
                self.traj.steps_rejected += 1;
                constraint_pressure = true;
                last_rejected = true;
                h *= 0.5;
                continue;
            }

            // Accepted.
            let r1 = if last { self.r_end } else { r + h };
            let mut segment = outcome.segment;
            if last {
                segment.h = r1 - r;
            }
            let end = State::new(r1, outcome.y1[0], outcome.y1[1]);
            self.traj.steps_accepted += 1;
            self.traj.segments.push(segment);

            let stop = self.scan_events(&segment, end);
            self.push_sample(end);

            if let Some(cause) = stop {
                self.terminate(cause, end);
                return Ok(self.traj);
            }
            if self.problem.sign == CurvatureSign::Euclidean && end.up.abs() > self.controls.up_blowup_threshold {
                self.terminate(TerminationCause::GradientBlowup, end);
                return Ok(self.traj);
            }
            if end.u.abs() > self.divergence {
                self.terminate(TerminationCause::HeightDivergence, end);
                return Ok(self.traj);
            }
            if last {
                self.terminate(TerminationCause::HorizonReached, end);
                return Ok(self.traj);
            }

            let mut factor = (SAFETY * outcome.err.max(1e-10).powf(-0.2)).clamp(MIN_SHRINK, MAX_GROWTH);
            if last_rejected {
                factor = factor.min(1.0);
            }
            last_rejected = false;
            constraint_pressure = false;
            r = r1;
            y = outcome.y1;
            k1 = outcome.k7;
            h *= factor;
        }
    }

    /// Radius reported for a light-cone termination: the last admissible state,
    /// nudged past the latest event so events stay strictly ordered.
    fn light_cone_radius(&self, s: State) -> f64 {
        match self.traj.events.last() {
            Some(prev) if (s.r - prev.r) * self.dir <= 0.0 => {
                if self.dir > 0.0 {
                    prev.r.next_up()
                } else {
                    prev.r.next_down()
                }
            }
            _ => s.r,
        }
    }

    fn push_sample(&mut self, s: State) {
        if let Some(last) = self.traj.samples.last() {
            if (s.r - last.r) * self.dir <= 0.0 {
                return;
            }
        }
        self.traj.sup_norm = self.traj.sup_norm.max(s.u.abs());
        self.traj.samples.push(s);
    }

    /// Locate and record sign changes of `u` and `u′` inside the step.
    fn scan_events(&mut self, seg: &DenseSegment, end: State) -> Option<TerminationCause> {
        let floor = self.controls.noise_floor();
        let value_tol = 10.0 * self.controls.abs_tol;
        let mut nodes = [State::new(0.0, 0.0, 0.0); EVENT_SCAN_POINTS + 1];
        for (k, node) in nodes.iter_mut().enumerate() {
            *node = if k == EVENT_SCAN_POINTS {
                end
            } else {
                seg.eval_theta(k as f64 / EVENT_SCAN_POINTS as f64)
            };
        }
        for w in nodes.windows(2) {
            let (a, b) = (w[0], w[1]);
            self.peak_u = self.peak_u.max(a.u.abs());
            self.peak_up = self.peak_up.max(a.up.abs());

            let mut found: Vec<(f64, EventKind)> = Vec::with_capacity(2);
            if crosses(a.u, b.u) {
                if let Ok(rr) = locate_event(seg, |s| s.u, a.r, b.r, self.controls.event_r_tol, value_tol) {
                    found.push((rr, EventKind::Zero));
                }
            }
            if crosses(a.up, b.up) {
                if let Ok(rr) = locate_event(seg, |s| s.up, a.r, b.r, self.controls.event_r_tol, value_tol) {
                    found.push((rr, EventKind::CriticalPoint));
                }
            }
            found.sort_by(|x, y| ((x.0 - y.0) * self.dir).total_cmp(&0.0));

            for (rr, kind) in found {
                let state = seg.state_at(rr);
                let significant = match kind {
                    EventKind::Zero => self.peak_u > floor,
                    _ => self.peak_up > floor,
                };
                if kind == EventKind::CriticalPoint {
                    if state.u.abs() < DECAY_HEIGHT {
                        self.small_extrema += 1;
                    } else {
                        self.small_extrema = 0;
                    }
                }
                if significant && self.event_count < self.controls.max_events {
                    let ordered = self.traj.events.last().is_none_or(|e| (rr - e.r) * self.dir > 0.0);
                    let inside = (rr - seg.r0) * self.dir > 0.0 && (end.r - rr) * self.dir > 0.0;
                    if ordered && inside {
                        self.traj.events.push(EventRecord::at(kind, state));
                        self.push_sample(state);
                        self.event_count += 1;
                        match kind {
                            EventKind::Zero => self.peak_u = 0.0,
                            _ => self.peak_up = 0.0,
                        }
                    }
                }
                if self.small_extrema >= DECAY_COUNT {
                    self.traj.decayed = true;
                    return Some(TerminationCause::HorizonReached);
                }
            }
        }
        self.peak_u = self.peak_u.max(end.u.abs());
        self.peak_up = self.peak_up.max(end.up.abs());
        (self.event_count >= self.controls.max_events).then_some(TerminationCause::EventBudgetExhausted)
    }

    fn terminate(&mut self, cause: TerminationCause, s: State) {
        self.traj.sup_norm = self.traj.sup_norm.max(s.u.abs());
        self.traj.events.push(EventRecord {
            termination_cause: Some(cause),
            ..EventRecord::at(EventKind::Termination, s)
        });
    }

    fn stalled(&mut self, r: f64) -> IntegrateError {
        IntegrateError::Stalled {
            r,
            partial: Box::new(self.traj.clone()),
        }
    }
}

#[inline]
fn crosses(a: f64, b: f64) -> bool {
    (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0) || (a != 0.0 && b == 0.0)
}
