//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::classifier::{self, ClassifyError};
use crate::dynamics::CurvatureSign;
use crate::integrator::{self, IntegrateError, IntegrationControls};
use crate::nonlinearity::{Builtin, NonlinearityError, NonlinearitySpec};
use crate::output::{self, ConfigError, ProblemConfig, TrajectoryFile};
use crate::sweep::{self, SweepError, SweepSpec, WORKERS_ENV};

/// Exit status for a sweep that finished with disagreements.
pub const EXIT_DISAGREEMENT: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "curvlab",
    version,
    about = "Radial prescribed mean curvature solutions: integrate, diagnose, classify"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one problem and write samples, events and diagnostics.
    Trajectory(TrajectoryArgs),
    /// Integrate one problem and report predicted versus observed regime.
    Classify(ClassifyArgs),
    /// Classify every cell of a grid described by a JSON config.
    Sweep(SweepArgs),
    /// Check the structural hypotheses of a built-in nonlinearity.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl OutputArgs {
    fn format(&self, fallback: Format) -> Format {
        self.format
            .unwrap_or_else(|| match self.out.as_deref().and_then(Path::extension) {
                Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
                Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
                _ => fallback,
            })
    }
}

#[derive(Debug, Args)]
pub struct ControlArgs {
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    /// Integration horizon.
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub max_events: Option<usize>,
    /// Radius of the regularized start.
    #[arg(long)]
    pub origin_delta: Option<f64>,
}

impl ControlArgs {
    fn apply(&self, c: &mut IntegrationControls) {
        if let Some(v) = self.rel_tol {
            c.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            c.abs_tol = v;
        }
        if let Some(v) = self.r_max {
            c.r_max = v;
        }
        if let Some(v) = self.max_events {
            c.max_events = v;
        }
        if let Some(v) = self.origin_delta {
            c.origin_delta = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// JSON problem config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// euclid or lorentz.
    #[arg(long)]
    pub sign: Option<CurvatureSign>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// sin, cubic, linear or saturating.
    #[arg(long)]
    pub g: Option<String>,
    /// Slope of the linear nonlinearity.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Initial height.
    #[arg(long, allow_hyphen_values = true)]
    pub xi: Option<f64>,
    #[command(flatten)]
    pub controls: ControlArgs,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Keep every n-th sample.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub stride: u64,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep config.
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads; overrides the config file.
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub g: String,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    /// Half-width of the sampling interval; defaults to 1.25 α (α capped at 10).
    #[arg(long)]
    pub range: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: key `{key}`: {message}")]
    Config {
        path: PathBuf,
        key: String,
        message: String,
    },
    #[error("missing `{0}` (give it as a flag or in --config)")]
    Missing(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Problem(#[from] ConfigError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

/// Deserialize a JSON file, naming the offending key on failure.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_json(path, &text)
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let message = e.into_inner().to_string();
        CliError::Config {
            path: path.to_path_buf(),
            key,
            message,
        }
    })
}

fn problem_config(args: &ProblemArgs) -> Result<ProblemConfig, CliError> {
    let base: Option<ProblemConfig> = args.config.as_deref().map(load_json).transpose()?;
    let nonlinearity = match (&args.g, &base) {
        (Some(name), _) => Builtin::parse(name, args.lambda)?,
        (None, Some(b)) => match (b.nonlinearity, args.lambda) {
            (Builtin::Linear { .. }, Some(lambda)) => Builtin::Linear { lambda },
            (n, _) => n,
        },
        (None, None) => return Err(CliError::Missing("g")),
    };
    let mut controls = base.as_ref().map(|b| b.controls).unwrap_or_default();
    args.controls.apply(&mut controls);
    Ok(ProblemConfig {
        sign: args
            .sign
            .or(base.as_ref().map(|b| b.sign))
            .ok_or(CliError::Missing("sign"))?,
        dimension: args
            .dim
            .or(base.as_ref().map(|b| b.dimension))
            .ok_or(CliError::Missing("dim"))?,
        xi: args.xi.or(base.as_ref().map(|b| b.xi)).ok_or(CliError::Missing("xi"))?,
        nonlinearity,
        controls,
    })
}

fn emit(out: &OutputArgs, text: &str) -> Result<(), CliError> {
    match &out.out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Run a parsed command; returns the process exit status.
pub fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Trajectory(a) => {
            let cfg = problem_config(&a.problem)?;
            let traj = integrator::integrate(&cfg.problem()?, &cfg.controls)?;
            let file = TrajectoryFile::new(cfg, &traj, a.stride as usize);
            let text = match a.output.format(Format::Csv) {
                Format::Csv => output::trajectory_csv(&file),
                Format::Json => output::trajectory_json(&file),
            };
            emit(&a.output, &text)?;
            Ok(0)
        }
        Command::Classify(a) => {
            let cfg = problem_config(&a.problem)?;
            let (report, _) = classifier::classify(&cfg.problem()?, &cfg.controls)?;
            let text = match a.output.format(Format::Json) {
                Format::Csv => output::classification_csv(&cfg, &report),
                Format::Json => output::classification_json(&cfg, &report),
            };
            emit(&a.output, &text)?;
            Ok(0)
        }
        Command::Sweep(a) => {
            let mut spec: SweepSpec = load_json(&a.config)?;
            if let Some(w) = a.workers {
                spec.worker_count = w;
            }
            let result = sweep::run_sweep(&spec)?;
            let text = match a.output.format(Format::Csv) {
                Format::Csv => output::sweep_csv(&spec, &result),
                Format::Json => output::sweep_json(&spec, &result),
            };
            emit(&a.output, &text)?;
            eprintln!(
                "{} cells, {} disagreements, {:.2} s",
                result.cells.len(),
                result.disagreements.len(),
                result.wall_time
            );
            Ok(if result.disagreements.is_empty() {
                0
            } else {
                EXIT_DISAGREEMENT
            })
        }
        Command::Validate(a) => {
            let spec = NonlinearitySpec::builtin(Builtin::parse(&a.g, a.lambda)?)?;
            let range = a.range.unwrap_or(1.25 * spec.alpha().effective());
            let report = spec.validate(a.samples, range)?;
            let text = match a.output.format(Format::Json) {
                Format::Json => {
                    let mut s = serde_json::to_string_pretty(&serde_json::json!({
                        "schema_version": output::SCHEMA_VERSION,
                        "tool_version": output::TOOL_VERSION,
                        "report": report,
                    }))
                    .expect("report serializes");
                    s.push('\n');
                    s
                }
                Format::Csv => {
                    let mut s = format!(
                        "# curvlab validation\n# schema_version: {}\n# tool_version: {}\n# nonlinearity: {}\n# samples: {}\n# range: {:?}\nhypothesis,passed,detail\n",
                        output::SCHEMA_VERSION,
                        output::TOOL_VERSION,
                        report.label,
                        report.sample_count,
                        report.range
                    );
                    for c in &report.checks {
                        s.push_str(&format!(
                            "{},{},{}\n",
                            serde_json::to_value(c.hypothesis)
                                .expect("hypothesis serializes")
                                .as_str()
                                .unwrap_or(""),
                            c.passed,
                            c.detail.clone().unwrap_or_default().replace(',', ";")
                        ));
                    }
                    s
                }
            };
            emit(&a.output, &text)?;
            Ok(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_name_the_key() {
        let p = Path::new("cfg.json");
        let err = parse_json::<ProblemConfig>(
            p,
            r#"{"sign":"lorentz","dimension":2,"xi":"one","nonlinearity":{"kind":"sin"}}"#,
        )
        .unwrap_err();
        assert!(matches!(&err, CliError::Config { key, .. } if key == "xi"), "{err}");

        let err = parse_json::<ProblemConfig>(
            p,
            r#"{"sign":"lorentz","dimension":2,"xi":1,"nonlinearity":{"kind":"sin"},"controls":{"rel_tol":"x"}}"#,
        )
        .unwrap_err();
        assert!(
            matches!(&err, CliError::Config { key, .. } if key == "controls.rel_tol"),
            "{err}"
        );

        let err = parse_json::<SweepSpec>(
            p,
            r#"{"signs":["lorentz"],"dimensions":[1],"nonlinearities":[{"kind":"sin"}],"xi_grid":[1],"colour":1}"#,
        )
        .unwrap_err();
        assert!(matches!(&err, CliError::Config { key, .. } if key == "colour"), "{err}");
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        std::fs::write(
            &path,
            r#"{"sign":"euclidean","dimension":1,"xi":1.0,"nonlinearity":{"kind":"linear","lambda":2.0},"controls":{"r_max":5.0}}"#,
        )
        .unwrap();
        let cli = Cli::try_parse_from([
            "curvlab",
            "trajectory",
            "--config",
            path.to_str().unwrap(),
            "--xi",
            "-0.5",
            "--sign",
            "lorentz",
        ])
        .unwrap();
        let Command::Trajectory(a) = cli.command else { panic!() };
        let cfg = problem_config(&a.problem).unwrap();
        assert_eq!(cfg.sign, CurvatureSign::Lorentz);
        assert_eq!(cfg.xi, -0.5);
        assert_eq!(cfg.nonlinearity, Builtin::Linear { lambda: 2.0 });
        assert_eq!(cfg.controls.r_max, 5.0);
    }

    #[test]
    fn missing_problem_field_is_named() {
        let cli = Cli::try_parse_from(["curvlab", "classify", "--sign", "lorentz", "--g", "sin", "--xi", "1"]).unwrap();
        let Command::Classify(a) = cli.command else { panic!() };
        assert!(matches!(problem_config(&a.problem), Err(CliError::Missing("dim"))));
    }

    #[test]
    fn format_inferred_from_extension() {
        let o = OutputArgs {
            out: Some("x.JSON".into()),
            format: None,
        };
        assert_eq!(o.format(Format::Csv), Format::Json);
        let o = OutputArgs {
            out: Some("x.csv".into()),
            format: None,
        };
        assert_eq!(o.format(Format::Json), Format::Csv);
        let o = OutputArgs {
            out: None,
            format: Some(Format::Csv),
        };
        assert_eq!(o.format(Format::Json), Format::Csv);
    }

    #[test]
    fn zero_stride_rejected() {
        assert!(Cli::try_parse_from(["curvlab", "trajectory", "--stride", "0"]).is_err());
    }
}
