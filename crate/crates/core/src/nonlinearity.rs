//! Odd nonlinearities `g` with their primitives `G(t) = ∫₀ᵗ g`.
//!
//! Built-in kinds carry closed-form primitives. Custom nonlinearities are
//! opaque closures whose primitive is computed by adaptive quadrature.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{self, QuadratureError, QuadratureOptions};

/// Absolute accuracy of quadrature-computed primitives.
pub const PRIMITIVE_TOLERANCE: f64 = 1e-12;

/// Accuracy demanded of `G(ξ*) = 1` by [`NonlinearitySpec::threshold_height`].
pub const THRESHOLD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonlinearityError {
    #[error("primitive quadrature failed: {0}")]
    Quadrature(#[from] QuadratureError),
    #[error("primitive requested at non-finite t = {0}")]
    NonFiniteArgument(f64),
    #[error("invalid validation request: {0}")]
    InvalidRequest(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Sign-change point of `g`: positive on `(0, α)`, negative beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alpha {
    Finite(f64),
    Infinite,
}

impl Alpha {
    pub fn finite(self) -> Option<f64> {
        match self {
            Alpha::Finite(a) => Some(a),
            Alpha::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Alpha::Finite(_))
    }

    /// `min(α, 10)`, the working height scale used for grids and thresholds.
    pub fn effective(self) -> f64 {
        match self {
            Alpha::Finite(a) => a.min(10.0),
            Alpha::Infinite => 10.0,
        }
    }

    /// `t < α`.
    pub fn exceeds(self, t: f64) -> bool {
        match self {
            Alpha::Finite(a) => t < a,
            Alpha::Infinite => true,
        }
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Finite(a) => write!(f, "{a}"),
            Alpha::Infinite => write!(f, "inf"),
        }
    }
}

/// Built-in nonlinearities, as named in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Builtin {
    /// `g(u) = sin u`, α = π.
    Sin,
    /// `g(u) = u(1 − u²)`, α = 1.
    Cubic,
    /// `g(u) = λu`, α = ∞.
    Linear { lambda: f64 },
    /// `g(u) = u / (1 + u²)`, α = ∞.
    Saturating,
}

impl Builtin {
    pub const DEFAULTS: [Builtin; 4] = [
        Builtin::Sin,
        Builtin::Cubic,
        Builtin::Linear { lambda: 1.0 },
        Builtin::Saturating,
    ];

    pub fn label(&self) -> String {
        match self {
            Builtin::Sin => "sin".into(),
            Builtin::Cubic => "cubic".into(),
            Builtin::Linear { lambda } if *lambda == 1.0 => "linear".into(),
            Builtin::Linear { lambda } => format!("linear(lambda={lambda})"),
            Builtin::Saturating => "saturating".into(),
        }
    }

    pub fn parse(name: &str, lambda: Option<f64>) -> Result<Builtin, NonlinearityError> {
        let b = match name {
            "sin" | "sine" => Builtin::Sin,
            "cubic" => Builtin::Cubic,
            "linear" => Builtin::Linear {
                lambda: lambda.unwrap_or(1.0),
            },
            "saturating" => Builtin::Saturating,
            other => {
                return Err(NonlinearityError::InvalidParameter(format!(
                    "unknown nonlinearity `{other}` (expected sin, cubic, linear, saturating)"
                )))
            }
        };
        Ok(b)
    }

    fn g(&self, u: f64) -> f64 {
        match *self {
            Builtin::Sin => u.sin(),
            Builtin::Cubic => u * (1.0 - u * u),
            Builtin::Linear { lambda } => lambda * u,
            Builtin::Saturating => u / (1.0 + u * u),
        }
    }

    fn primitive(&self, t: f64) -> f64 {
        match *self {
            Builtin::Sin => 2.0 * (0.5 * t).sin().powi(2),
            Builtin::Cubic => {
                let t2 = t * t;
                0.5 * t2 - 0.25 * t2 * t2
            }
            Builtin::Linear { lambda } => 0.5 * lambda * t * t,
            Builtin::Saturating => 0.5 * (t * t).ln_1p(),
        }
    }

    /// `G(a) − G(b)` in a cancellation-free form.
    fn primitive_drop(&self, a: f64, b: f64) -> f64 {
        let diff = a - b;
        let sum = a + b;
        match *self {
            Builtin::Sin => 2.0 * (0.5 * sum).sin() * (0.5 * diff).sin(),
            Builtin::Cubic => diff * sum * (0.5 - 0.25 * (a * a + b * b)),
            Builtin::Linear { lambda } => 0.5 * lambda * diff * sum,
            Builtin::Saturating => 0.5 * (diff * sum / (1.0 + b * b)).ln_1p(),
        }
    }

    fn alpha(&self) -> Alpha {
        match self {
            Builtin::Sin => Alpha::Finite(std::f64::consts::PI),
            Builtin::Cubic => Alpha::Finite(1.0),
            Builtin::Linear { .. } | Builtin::Saturating => Alpha::Infinite,
        }
    }

    fn g_prime_at_zero(&self) -> f64 {
        match *self {
            Builtin::Linear { lambda } => lambda,
            _ => 1.0,
        }
    }

    /// Closed-form smallest ξ* in (0, α) with G(ξ*) = 1, correctly rounded.
    fn threshold_closed_form(&self) -> Option<f64> {
        match *self {
            Builtin::Sin => Some(std::f64::consts::FRAC_PI_2),
            Builtin::Cubic => None,
            Builtin::Linear { lambda } => Some((2.0 / lambda).sqrt()),
            Builtin::Saturating => Some((std::f64::consts::E * std::f64::consts::E - 1.0).sqrt()),
        }
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Builtin(Builtin),
    Custom { g: ScalarFn, primitive: Option<ScalarFn> },
}

/// A nonlinearity `g` together with the structural data the theory uses.
///
/// Immutable after construction; cheap to clone and share across threads.
#[derive(Clone)]
pub struct NonlinearitySpec {
    kind: Kind,
    label: String,
    alpha: Alpha,
    g_prime_at_zero: f64,
}

impl fmt::Debug for NonlinearitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearitySpec")
            .field("label", &self.label)
            .field("alpha", &self.alpha)
            .field("g_prime_at_zero", &self.g_prime_at_zero)
            .field("closed_form", &self.has_closed_form())
            .finish()
    }
}

impl NonlinearitySpec {
    pub fn builtin(b: Builtin) -> Result<Self, NonlinearityError> {
        if let Builtin::Linear { lambda } = b {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(NonlinearityError::InvalidParameter(format!(
                    "linear nonlinearity needs lambda > 0, got {lambda}"
                )));
            }
        }
        Ok(Self {
            kind: Kind::Builtin(b),
            label: b.label(),
            alpha: b.alpha(),
            g_prime_at_zero: b.g_prime_at_zero(),
        })
    }

    pub fn sin() -> Self {
        Self::builtin(Builtin::Sin).expect("valid builtin")
    }

    pub fn cubic() -> Self {
        Self::builtin(Builtin::Cubic).expect("valid builtin")
    }

    pub fn linear(lambda: f64) -> Result<Self, NonlinearityError> {
        Self::builtin(Builtin::Linear { lambda })
    }

    pub fn saturating() -> Self {
        Self::builtin(Builtin::Saturating).expect("valid builtin")
    }

    /// An opaque nonlinearity. Its primitive is computed by quadrature.
    pub fn custom(
        label: impl Into<String>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        alpha: Alpha,
        g_prime_at_zero: f64,
    ) -> Self {
        Self {
            kind: Kind::Custom {
                g: Arc::new(g),
                primitive: None,
            },
            label: label.into(),
            alpha,
            g_prime_at_zero,
        }
    }

    /// Attach a closed-form primitive to a custom nonlinearity.
    pub fn with_primitive(mut self, primitive: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        if let Kind::Custom { primitive: p, .. } = &mut self.kind {
            *p = Some(Arc::new(primitive));
        }
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    pub fn g_prime_at_zero(&self) -> f64 {
        self.g_prime_at_zero
    }

    pub fn as_builtin(&self) -> Option<Builtin> {
        match self.kind {
            Kind::Builtin(b) => Some(b),
            Kind::Custom { .. } => None,
        }
    }

    pub fn has_closed_form(&self) -> bool {
        match &self.kind {
            Kind::Builtin(_) => true,
            Kind::Custom { primitive, .. } => primitive.is_some(),
        }
    }

    #[inline]
    pub fn g(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::Builtin(b) => b.g(u),
            Kind::Custom { g, .. } => g(u),
        }
    }

    /// `G(t)`: closed form when available, adaptive quadrature otherwise.
    pub fn primitive(&self, t: f64) -> Result<f64, NonlinearityError> {
        if !t.is_finite() {
            return Err(NonlinearityError::NonFiniteArgument(t));
        }
        match &self.kind {
            Kind::Builtin(b) => Ok(b.primitive(t)),
            Kind::Custom { primitive: Some(p), .. } => Ok(p(t)),
            Kind::Custom { primitive: None, .. } => self.primitive_by_quadrature(t),
        }
    }

    /// `G(t)` by quadrature regardless of any closed form.
    pub fn primitive_by_quadrature(&self, t: f64) -> Result<f64, NonlinearityError> {
        if !t.is_finite() {
            return Err(NonlinearityError::NonFiniteArgument(t));
        }
        let r = quadrature::integrate(|s| self.g(s), 0.0, t, QuadratureOptions::absolute(PRIMITIVE_TOLERANCE))?;
        Ok(r.value)
    }

    /// `G(a) − G(b)`, avoiding cancellation when `a ≈ b`.
    pub fn primitive_drop(&self, a: f64, b: f64) -> Result<f64, NonlinearityError> {
        match &self.kind {
            Kind::Builtin(bi) => Ok(bi.primitive_drop(a, b)),
            Kind::Custom { primitive: Some(p), .. } => Ok(p(a) - p(b)),
            Kind::Custom { primitive: None, .. } => {
                let r = quadrature::integrate(|s| self.g(s), b, a, QuadratureOptions::absolute(PRIMITIVE_TOLERANCE))?;
                Ok(r.value)
            }
        }
    }

    /// Closed-form threshold height, when the nonlinearity provides one.
    pub fn threshold_closed_form(&self) -> Option<f64> {
        self.as_builtin().and_then(|b| b.threshold_closed_form())
    }

    /// Smallest ξ* in (0, α) with G(ξ*) = 1, or `None` if G < 1 there.
    ///
    /// Brackets along G (monotone on `(0, α)`) and bisects.
    pub fn threshold_height(&self) -> Result<Option<f64>, NonlinearityError> {
        let hi = match self.alpha {
            Alpha::Finite(a) => {
                if self.primitive(a)? < 1.0 {
                    return Ok(None);
                }
                a
            }
            Alpha::Infinite => {
                let mut hi = 1.0;
                while self.primitive(hi)? < 1.0 {
                    hi *= 2.0;
                    if hi > 1e8 {
                        return Ok(None);
                    }
                }
                hi
            }
        };
        let mut lo = 0.0;
        let mut hi = hi;
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.primitive(mid)? < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Pick the bracket end with the smaller residual.
        let (glo, ghi) = (self.primitive(lo)?, self.primitive(hi)?);
        Ok(Some(if (glo - 1.0).abs() <= (ghi - 1.0).abs() { lo } else { hi }))
    }

    /// Sampling-based check of the structural hypotheses on `[−range, range]`.
    pub fn validate(&self, sample_count: usize, range: f64) -> Result<ValidationReport, NonlinearityError> {
        if sample_count < 16 {
            return Err(NonlinearityError::InvalidRequest(format!(
                "sample_count must be at least 16, got {sample_count}"
            )));
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(NonlinearityError::InvalidRequest(format!(
                "range must be positive and finite, got {range}"
            )));
        }

        // Positive sample points, symmetric sampling uses ±t.
        let ts: Vec<f64> = (1..=sample_count)
            .map(|k| range * k as f64 / sample_count as f64)
            .collect();
        let mut failures = Vec::new();

        // (g1): finite evaluations everywhere sampled.
        let mut g1 = HypothesisCheck::pass(Hypothesis::Continuity);
        for &t in std::iter::once(&0.0).chain(ts.iter()) {
            for x in [t, -t] {
                let y = self.g(x);
                if !y.is_finite() {
                    failures.push(EvaluationFailure { t: x, value: y });
                    g1.fail(format!("g({x}) = {y} is not finite"));
                }
            }
        }

        // (g2): oddness.
        let mut g2 = HypothesisCheck::pass(Hypothesis::Odd);
        let g0 = self.g(0.0);
        if g0 != 0.0 {
            g2.fail(format!("g(0) = {g0}"));
        }
        for &t in &ts {
            let (p, m) = (self.g(t), self.g(-t));
            let scale = p.abs().max(1.0);
            if !(p + m).is_finite() || (p + m).abs() > 1e-12 * scale {
                g2.fail(format!("g(-{t}) = {m} but -g({t}) = {}", -p));
                break;
            }
        }

        // (g4): positive on (0, α), negative on (α, range].
        let mut g4 = HypothesisCheck::pass(Hypothesis::SignChange);
        for &t in &ts {
            let y = self.g(t);
            let inside = self.alpha.exceeds(t);
            let on_alpha = self.alpha.finite() == Some(t);
            if on_alpha {
                continue;
            }
            if inside && !(y > 0.0) {
                g4.fail(format!("g({t}) = {y} should be positive below alpha = {}", self.alpha));
                break;
            }
            if !inside && !(y < 0.0) {
                g4.fail(format!("g({t}) = {y} should be negative above alpha = {}", self.alpha));
                break;
            }
        }

        // (g3): differentiable at 0 with g'(0) > 0; compare declared value with a difference quotient.
        let mut g3 = HypothesisCheck::pass(Hypothesis::PositiveSlope);
        let h = 1e-6 * range.min(1.0);
        let quotient = (self.g(h) - self.g(-h)) / (2.0 * h);
        if !(self.g_prime_at_zero > 0.0) {
            g3.fail(format!("declared g'(0) = {} is not positive", self.g_prime_at_zero));
        } else if (quotient - self.g_prime_at_zero).abs() > 1e-4 * self.g_prime_at_zero.max(1.0) {
            g3.fail(format!(
                "declared g'(0) = {} but difference quotient gives {quotient}",
                self.g_prime_at_zero
            ));
        }

        // G increasing on the sampled part of [0, α].
        let mut monotone = HypothesisCheck::pass(Hypothesis::PrimitiveIncreasing);
        let mut prev = 0.0;
        for &t in ts.iter().filter(|&&t| self.alpha.exceeds(t)) {
            let gt = self.primitive(t)?;
            if !(gt > prev) {
                monotone.fail(format!("G({t}) = {gt} does not exceed previous sample {prev}"));
                break;
            }
            prev = gt;
        }

        Ok(ValidationReport {
            label: self.label.clone(),
            sample_count,
            range,
            checks: vec![g1, g2, g3, g4, monotone],
            evaluation_failures: failures,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// (g1)
    Continuity,
    /// (g2)
    Odd,
    /// (g3), needed for N ≥ 2
    PositiveSlope,
    /// (g4)
    SignChange,
    PrimitiveIncreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub hypothesis: Hypothesis,
    pub passed: bool,
    pub detail: Option<String>,
}

impl HypothesisCheck {
    fn pass(hypothesis: Hypothesis) -> Self {
        Self {
            hypothesis,
            passed: true,
            detail: None,
        }
    }

    fn fail(&mut self, detail: String) {
        if self.passed {
            self.passed = false;
            self.detail = Some(detail);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationFailure {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub label: String,
    pub sample_count: usize,
    pub range: f64,
    pub checks: Vec<HypothesisCheck>,
    pub evaluation_failures: Vec<EvaluationFailure>,
}

impl ValidationReport {
    pub fn check(&self, h: Hypothesis) -> &HypothesisCheck {
        self.checks
            .iter()
            .find(|c| c.hypothesis == h)
            .expect("every hypothesis is checked")
    }

    pub fn passed(&self, h: Hypothesis) -> bool {
        self.check(h).passed
    }

    /// Hypotheses required for a problem in `dimension`.
    pub fn admissible_for(&self, dimension: usize) -> bool {
        let base =
            self.passed(Hypothesis::Continuity) && self.passed(Hypothesis::Odd) && self.passed(Hypothesis::SignChange);
        base && (dimension < 2 || self.passed(Hypothesis::PositiveSlope))
    }
}
