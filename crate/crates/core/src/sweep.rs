//! Batch classification over sign × dimension × nonlinearity × ξ grids.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{self, ClassificationReport, ClassifyError};
use crate::dynamics::{CurvatureSign, DynamicsError, ProblemSpec};
use crate::integrator::IntegrationControls;
use crate::nonlinearity::{Builtin, NonlinearityError, NonlinearitySpec};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "CURVLAB_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum XiGrid {
    Explicit(Vec<f64>),
    Linear { min: f64, max: f64, count: usize },
}

impl XiGrid {
    /// Grid points; a linear grid includes both endpoints.
    pub fn points(&self) -> Vec<f64> {
        match self {
            XiGrid::Explicit(v) => v.clone(),
            XiGrid::Linear { min, max, count } => match count {
                0 => Vec::new(),
                1 => vec![*min],
                n => (0..*n)
                    .map(|k| min + (max - min) * k as f64 / (*n - 1) as f64)
                    .collect(),
            },
        }
    }

    pub fn negated(&self) -> XiGrid {
        XiGrid::Explicit(self.points().into_iter().map(|x| -x).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub signs: Vec<CurvatureSign>,
    pub dimensions: Vec<usize>,
    pub nonlinearities: Vec<Builtin>,
    pub xi_grid: XiGrid,
    #[serde(default)]
    pub controls: IntegrationControls,
    #[serde(default = "default_workers")]
    pub worker_count: usize,
}

/// Worker count from the environment, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|n: &usize| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep needs at least one {0}")]
    Empty(&'static str),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("worker_count must be positive")]
    ZeroWorkers,
    #[error("non-finite xi grid point {0}")]
    NonFiniteXi(f64),
    #[error("nonlinearity {label} fails validation: {failed}")]
    InvalidNonlinearity { label: String, failed: String },
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("invalid controls: {0}")]
    Controls(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub sign: CurvatureSign,
    pub dimension: usize,
    pub nonlinearity: String,
    pub xi: f64,
    pub report: ClassificationReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub disagreements: Vec<SweepCell>,
    #[serde(skip)]
    pub wall_time: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<Vec<f64>, SweepError> {
        if self.signs.is_empty() {
            return Err(SweepError::Empty("sign"));
        }
        if self.dimensions.is_empty() {
            return Err(SweepError::Empty("dimension"));
        }
        if self.nonlinearities.is_empty() {
            return Err(SweepError::Empty("nonlinearity"));
        }
        if self.dimensions.contains(&0) {
            return Err(SweepError::ZeroDimension);
        }
        if self.worker_count == 0 {
            return Err(SweepError::ZeroWorkers);
        }
        self.controls
            .validate()
            .map_err(|e| SweepError::Controls(e.to_string()))?;
        let xs = self.xi_grid.points();
        if xs.is_empty() {
            return Err(SweepError::Empty("xi grid point"));
        }
        if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
            return Err(SweepError::NonFiniteXi(*x));
        }
        Ok(xs)
    }
}

fn validated(b: &Builtin, needs_slope: bool) -> Result<NonlinearitySpec, SweepError> {
    let spec = NonlinearitySpec::builtin(*b)?;
    let range = 1.25 * spec.alpha().effective();
    let report = spec.validate(64, range)?;
    let ok = if needs_slope {
        report.admissible_for(2)
    } else {
        report.admissible_for(1)
    };
    if !ok {
        let failed: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{:?}", c.hypothesis))
            .collect();
        return Err(SweepError::InvalidNonlinearity {
            label: spec.label().to_string(),
            failed: failed.join(", "),
        });
    }
    Ok(spec)
}

/// Classify every grid cell. Output order is sign, dimension, nonlinearity,
/// ξ, each in the order given, independent of the worker count.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    let start = Instant::now();
    let xs = spec.validate()?;
    let needs_slope = spec.dimensions.iter().any(|&n| n >= 2);
    let gs = spec
        .nonlinearities
        .iter()
        .map(|b| validated(b, needs_slope))
        .collect::<Result<Vec<_>, _>>()?;

    let mut problems = Vec::new();
    for &sign in &spec.signs {
        for &n in &spec.dimensions {
            for g in &gs {
                for &xi in &xs {
                    problems.push(ProblemSpec::new(sign, n, xi, g.clone())?);
                }
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.worker_count)
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let cells: Vec<SweepCell> = pool.install(|| {
        problems
            .par_iter()
            .map(|p| {
                let (report, _) = classifier::classify(p, &spec.controls)?;
                Ok(SweepCell {
                    sign: p.sign,
                    dimension: p.dimension,
                    nonlinearity: p.nonlinearity.label().to_string(),
                    xi: p.xi,
                    report,
                })
            })
            .collect::<Result<Vec<_>, SweepError>>()
    })?;

    let disagreements = cells.iter().filter(|c| !c.report.agree).cloned().collect();
    Ok(SweepResult {
        cells,
        disagreements,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Regime;
    use std::f64::consts::PI;

    fn spec(signs: Vec<CurvatureSign>, g: Builtin, xs: XiGrid) -> SweepSpec {
        SweepSpec {
            signs,
            dimensions: vec![1],
            nonlinearities: vec![g],
            xi_grid: xs,
            controls: IntegrationControls::default().with_r_max(100.0),
            worker_count: 2,
        }
    }

    #[test]
    fn linear_grid_points() {
        let g = XiGrid::Linear {
            min: 0.0,
            max: 1.0,
            count: 5,
        };
        assert_eq!(g.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(
            XiGrid::Linear {
                min: 0.3,
                max: 1.0,
                count: 1
            }
            .points(),
            vec![0.3]
        );
    }

    #[test]
    fn grid_deserializes_both_forms() {
        let a: XiGrid = serde_json::from_str("[0.5, 1.0]").unwrap();
        assert_eq!(a, XiGrid::Explicit(vec![0.5, 1.0]));
        let b: XiGrid = serde_json::from_str(r#"{"min": 0, "max": 1, "count": 3}"#).unwrap();
        assert_eq!(b.points().len(), 3);
    }

    #[test]
    fn lorentz_sine_all_periodic() {
        let xs: Vec<f64> = (1..=10).map(|k| PI * k as f64 / 11.0).collect();
        let r = run_sweep(&spec(vec![CurvatureSign::Lorentz], Builtin::Sin, XiGrid::Explicit(xs))).unwrap();
        assert_eq!(r.cells.len(), 10);
        assert!(r.cells.iter().all(|c| c.report.observed == Regime::PeriodicOscillating));
        assert!(r.disagreements.is_empty());
    }

    #[test]
    fn euclidean_sine_splits_at_threshold() {
        let xs = vec![1.0, 1.4, std::f64::consts::FRAC_PI_2, 1.7, 2.0];
        let r = run_sweep(&spec(
            vec![CurvatureSign::Euclidean],
            Builtin::Sin,
            XiGrid::Explicit(xs),
        ))
        .unwrap();
        let got: Vec<Regime> = r.cells.iter().map(|c| c.report.observed).collect();
        use Regime::*;
        assert_eq!(
            got,
            vec![
                PeriodicOscillating,
                PeriodicOscillating,
                GradientBlowup,
                GradientBlowup,
                GradientBlowup
            ]
        );
        assert!(r.disagreements.is_empty());
    }

    #[test]
    fn empty_axes_rejected() {
        let mut s = spec(vec![CurvatureSign::Lorentz], Builtin::Sin, XiGrid::Explicit(vec![1.0]));
        s.dimensions.clear();
        assert!(matches!(run_sweep(&s), Err(SweepError::Empty("dimension"))));
        let mut s = spec(vec![], Builtin::Sin, XiGrid::Explicit(vec![1.0]));
        assert!(matches!(run_sweep(&s), Err(SweepError::Empty("sign"))));
        s.signs.push(CurvatureSign::Lorentz);
        s.xi_grid = XiGrid::Explicit(vec![]);
        assert!(matches!(run_sweep(&s), Err(SweepError::Empty(_))));
        s.xi_grid = XiGrid::Explicit(vec![1.0]);
        s.worker_count = 0;
        assert!(matches!(run_sweep(&s), Err(SweepError::ZeroWorkers)));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let mut s = spec(
            CurvatureSign::BOTH.to_vec(),
            Builtin::Cubic,
            XiGrid::Linear {
                min: -1.2,
                max: 1.2,
                count: 7,
            },
        );
        s.dimensions = vec![1, 2];
        s.worker_count = 1;
        let a = serde_json::to_string(&run_sweep(&s).unwrap()).unwrap();
        s.worker_count = 4;
        let b = serde_json::to_string(&run_sweep(&s).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn negated_grid_same_regimes() {
        let s = spec(
            CurvatureSign::BOTH.to_vec(),
            Builtin::Sin,
            XiGrid::Explicit(vec![0.5, 1.5, 2.5]),
        );
        let neg = SweepSpec {
            xi_grid: s.xi_grid.negated(),
            ..s.clone()
        };
        let a = run_sweep(&s).unwrap();
        let b = run_sweep(&neg).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.report.observed, y.report.observed);
            assert_eq!(x.report.predicted, y.report.predicted);
        }
    }
}
