//! Radial ODE systems for the Euclidean and Lorentz–Minkowski operators.
//!
//! The radial equation `−(φ(u′))′ − (N−1)/r · φ(u′) = g(u)` with
//! `φ(t) = t/√(1 ± t²)` is solved for `u″`:
//!
//! ```text
//! u″ = −(1 ± u′²)^{3/2} g(u) − (N−1)/r · (1 ± u′²) u′
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nonlinearity::NonlinearitySpec;

/// Hard admissibility margin on `|u′| < 1` for the Lorentz right-hand side.
pub const LORENTZ_DOMAIN_MARGIN: f64 = 1e-14;

/// Default radius of the regularized start.
pub const DEFAULT_ORIGIN_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureSign {
    /// `+`: minimal-surface type operator.
    #[serde(alias = "euclid")]
    Euclidean,
    /// `−`: maximal-surface type operator, requires `|u′| < 1`.
    Lorentz,
}

impl CurvatureSign {
    pub const BOTH: [CurvatureSign; 2] = [CurvatureSign::Euclidean, CurvatureSign::Lorentz];

    #[inline]
    pub fn metric_factor(self, up: f64) -> f64 {
        match self {
            CurvatureSign::Euclidean => 1.0 + up * up,
            CurvatureSign::Lorentz => 1.0 - up * up,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CurvatureSign::Euclidean => "euclidean",
            CurvatureSign::Lorentz => "lorentz",
        }
    }
}

impl fmt::Display for CurvatureSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CurvatureSign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euclid" | "euclidean" | "plus" | "+" => Ok(CurvatureSign::Euclidean),
            "lorentz" | "minkowski" | "lorentz-minkowski" | "minus" | "-" => Ok(CurvatureSign::Lorentz),
            other => Err(format!("unknown curvature sign `{other}` (expected euclid or lorentz)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("right-hand side evaluated at r = {0}, which is not positive")]
    NonPositiveRadius(f64),
    #[error("Lorentz state |u'| = {0} leaves the admissible region")]
    LightCone(f64),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("initial height must be finite, got {0}")]
    NonFiniteHeight(f64),
}

/// A radial Cauchy problem `u(0) = ξ, u′(0) = 0`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub sign: CurvatureSign,
    pub dimension: usize,
    pub xi: f64,
    pub nonlinearity: NonlinearitySpec,
}

impl ProblemSpec {
    pub fn new(
        sign: CurvatureSign,
        dimension: usize,
        xi: f64,
        nonlinearity: NonlinearitySpec,
    ) -> Result<Self, DynamicsError> {
        if dimension == 0 {
            return Err(DynamicsError::ZeroDimension);
        }
        if !xi.is_finite() {
            return Err(DynamicsError::NonFiniteHeight(xi));
        }
        Ok(Self {
            sign,
            dimension,
            xi,
            nonlinearity,
        })
    }

    /// The same problem started from `−ξ`.
    pub fn mirrored(&self) -> Self {
        Self {
            xi: -self.xi,
            ..self.clone()
        }
    }

    /// `(u′, u″)` at `state`.
    #[inline]
    pub fn rhs(&self, state: State) -> Result<(f64, f64), DynamicsError> {
        if !(state.r > 0.0) {
            return Err(DynamicsError::NonPositiveRadius(state.r));
        }
        let up = state.up;
        if self.sign == CurvatureSign::Lorentz && up.abs() > 1.0 - LORENTZ_DOMAIN_MARGIN {
            return Err(DynamicsError::LightCone(up.abs()));
        }
        let m = self.sign.metric_factor(up);
        let mut upp = -m * m.sqrt() * self.nonlinearity.g(state.u);
        if self.dimension > 1 {
            upp -= (self.dimension - 1) as f64 / state.r * m * up;
        }
        Ok((up, upp))
    }

    /// Second-order Taylor state at `r = delta`, regularizing the `(N−1)/r` term.
    pub fn origin_start(&self, delta: f64) -> State {
        let n = self.dimension as f64;
        let gx = self.nonlinearity.g(self.xi);
        State {
            r: delta,
            u: self.xi - gx * delta * delta / (2.0 * n),
            up: -gx * delta / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub r: f64,
    pub u: f64,
    pub up: f64,
}

impl State {
    pub fn new(r: f64, u: f64, up: f64) -> Self {
        Self { r, u, up }
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite() && self.u.is_finite() && self.up.is_finite()
    }
}
