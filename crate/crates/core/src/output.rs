//! File formats for trajectories, classification reports and sweep tables.
//!
//! CSV files carry `#`-prefixed metadata lines, a data table and further
//! sections introduced by `# events` and `# diagnostics`. Floats are written
//! in shortest round-trip form, so parsing a file reproduces every value
//! bit for bit. JSON documents carry a top-level `schema_version`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ClassificationReport;
use crate::diagnostics::{self, EnergySummary};
use crate::dynamics::{CurvatureSign, DynamicsError, ProblemSpec, State};
use crate::integrator::{EventKind, EventRecord, IntegrationControls, TerminationCause, Trajectory};
use crate::nonlinearity::{Builtin, NonlinearityError, NonlinearitySpec};
use crate::sweep::{SweepCell, SweepResult, SweepSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("config: {0}")]
    Config(#[from] serde_json::Error),
}

/// Fully specified single-problem run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub sign: CurvatureSign,
    pub dimension: usize,
    pub xi: f64,
    pub nonlinearity: Builtin,
    #[serde(default)]
    pub controls: IntegrationControls,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

impl ProblemConfig {
    pub fn problem(&self) -> Result<ProblemSpec, ConfigError> {
        let g = NonlinearitySpec::builtin(self.nonlinearity)?;
        Ok(ProblemSpec::new(self.sign, self.dimension, self.xi, g)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDiagnostics {
    pub sup_norm: f64,
    pub gradient_sup: f64,
    pub decayed: bool,
    pub termination: Option<TerminationCause>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub energy: Option<EnergySummary>,
}

/// A trajectory as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: ProblemConfig,
    pub stride: usize,
    pub samples: Vec<State>,
    pub events: Vec<EventRecord>,
    pub diagnostics: TrajectoryDiagnostics,
}

impl TrajectoryFile {
    /// Keeps every `stride`-th sample plus the final one; events are kept in full.
    pub fn new(config: ProblemConfig, traj: &Trajectory, stride: usize) -> Self {
        let stride = stride.max(1);
        let n = traj.samples.len();
        let samples = traj
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0 || *i + 1 == n)
            .map(|(_, s)| *s)
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            config,
            stride,
            samples,
            events: traj.events.clone(),
            diagnostics: TrajectoryDiagnostics {
                sup_norm: traj.sup_norm,
                gradient_sup: traj.gradient_sup(),
                decayed: traj.decayed,
                termination: traj.termination_cause(),
                steps_accepted: traj.steps_accepted,
                steps_rejected: traj.steps_rejected,
                energy: diagnostics::energy_report(traj).ok().map(|e| e.summary()),
            },
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn header(out: &mut String, kind: &str, config: &impl Serialize) {
    let _ = writeln!(out, "# curvlab {kind}");
    let _ = writeln!(out, "# schema_version: {SCHEMA_VERSION}");
    let _ = writeln!(out, "# tool_version: {TOOL_VERSION}");
    let _ = writeln!(
        out,
        "# config: {}",
        serde_json::to_string(config).expect("config serializes")
    );
}

pub fn trajectory_csv(file: &TrajectoryFile) -> String {
    let mut out = String::new();
    header(&mut out, "trajectory", &file.config);
    let _ = writeln!(out, "# stride: {}", file.stride);
    out.push_str("r,u,up\n");
    for s in &file.samples {
        let _ = writeln!(out, "{},{},{}", num(s.r), num(s.u), num(s.up));
    }
    out.push_str("# events\nkind,r,u,up,termination_cause\n");
    for e in &file.events {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.kind.name(),
            num(e.r),
            num(e.u),
            num(e.up),
            e.termination_cause.map(|c| c.name()).unwrap_or("")
        );
    }
    let d = &file.diagnostics;
    out.push_str("# diagnostics\nkey,value\n");
    let mut rows = vec![
        ("sup_norm", num(d.sup_norm)),
        ("gradient_sup", num(d.gradient_sup)),
        ("decayed", d.decayed.to_string()),
        ("termination", d.termination.map(|c| c.name()).unwrap_or("").to_string()),
        ("steps_accepted", d.steps_accepted.to_string()),
        ("steps_rejected", d.steps_rejected.to_string()),
    ];
    if let Some(e) = &d.energy {
        rows.extend([
            ("max_identity_residual", opt_num(e.max_identity_residual)),
            ("max_z_uptick", opt_num(e.max_z_uptick)),
            ("min_z", opt_num(e.min_z)),
            (
                "dissipation_identity_residual",
                opt_num(e.dissipation_identity_residual),
            ),
            ("energy_gradient_sup", num(e.gradient_sup)),
            ("light_cone_gap", opt_num(e.light_cone_gap)),
        ]);
    }
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Samples,
    Events,
    Diagnostics,
}

fn bad(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Malformed {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, s: &str) -> Result<f64, ParseError> {
    s.parse().map_err(|_| bad(line, format!("not a number: `{s}`")))
}

fn parse_opt(line: usize, s: &str) -> Result<Option<f64>, ParseError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(line, s).map(Some)
    }
}

/// Inverse of [`trajectory_csv`].
pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryFile, ParseError> {
    let mut schema = None;
    let mut tool = None;
    let mut config = None;
    let mut stride = 1;
    let mut samples = Vec::new();
    let mut events = Vec::new();
    let mut diag: BTreeMap<String, String> = BTreeMap::new();
    let mut section = Section::Samples;

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let meta = meta.trim();
            match meta {
                "events" => section = Section::Events,
                "diagnostics" => section = Section::Diagnostics,
                _ => {
                    if let Some(v) = meta.strip_prefix("schema_version:") {
                        schema = Some(v.trim().parse::<u32>().map_err(|_| bad(ln, "bad schema version"))?);
                    } else if let Some(v) = meta.strip_prefix("tool_version:") {
                        tool = Some(v.trim().to_string());
                    } else if let Some(v) = meta.strip_prefix("config:") {
                        config = Some(serde_json::from_str::<ProblemConfig>(v.trim())?);
                    } else if let Some(v) = meta.strip_prefix("stride:") {
                        stride = v.trim().parse().map_err(|_| bad(ln, "bad stride"))?;
                    }
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match section {
            Section::Samples => {
                if line == "r,u,up" {
                    continue;
                }
                let [r, u, up] = fields[..] else {
                    return Err(bad(ln, "expected 3 columns"));
                };
                samples.push(State::new(parse_f64(ln, r)?, parse_f64(ln, u)?, parse_f64(ln, up)?));
            }
            Section::Events => {
                if fields.first() == Some(&"kind") {
                    continue;
                }
                let [kind, r, u, up, cause] = fields[..] else {
                    return Err(bad(ln, "expected 5 columns"));
                };
                events.push(EventRecord {
                    kind: EventKind::from_name(kind).ok_or_else(|| bad(ln, format!("unknown event `{kind}`")))?,
                    r: parse_f64(ln, r)?,
                    u: parse_f64(ln, u)?,
                    up: parse_f64(ln, up)?,
                    termination_cause: if cause.is_empty() {
                        None
                    } else {
                        Some(
                            TerminationCause::from_name(cause)
                                .ok_or_else(|| bad(ln, format!("unknown cause `{cause}`")))?,
                        )
                    },
                });
            }
            Section::Diagnostics => {
                if line == "key,value" {
                    continue;
                }
                let [k, v] = fields[..] else {
                    return Err(bad(ln, "expected key,value"));
                };
                diag.insert(k.to_string(), v.to_string());
            }
        }
    }

    let schema = schema.ok_or(ParseError::Missing("schema_version"))?;
    if schema != SCHEMA_VERSION {
        return Err(ParseError::Schema(schema));
    }
    let get = |k: &'static str| diag.get(k).map(String::as_str).ok_or(ParseError::Missing(k));
    let getf = |k: &'static str| get(k).and_then(|v| parse_f64(0, v));
    let geto = |k: &'static str| get(k).and_then(|v| parse_opt(0, v));
    let getu = |k: &'static str| get(k).and_then(|v| v.parse::<usize>().map_err(|_| bad(0, format!("bad {k}"))));
    let termination = match get("termination")? {
        "" => None,
        c => Some(TerminationCause::from_name(c).ok_or_else(|| bad(0, format!("unknown cause `{c}`")))?),
    };
    let energy = if diag.contains_key("energy_gradient_sup") {
        Some(EnergySummary {
            max_identity_residual: geto("max_identity_residual")?,
            max_z_uptick: geto("max_z_uptick")?,
            min_z: geto("min_z")?,
            dissipation_identity_residual: geto("dissipation_identity_residual")?,
            gradient_sup: getf("energy_gradient_sup")?,
            light_cone_gap: geto("light_cone_gap")?,
        })
    } else {
        None
    };
    Ok(TrajectoryFile {
        schema_version: schema,
        tool_version: tool.ok_or(ParseError::Missing("tool_version"))?,
        config: config.ok_or(ParseError::Missing("config"))?,
        stride,
        samples,
        events,
        diagnostics: TrajectoryDiagnostics {
            sup_norm: getf("sup_norm")?,
            gradient_sup: getf("gradient_sup")?,
            decayed: get("decayed")? == "true",
            termination,
            steps_accepted: getu("steps_accepted")?,
            steps_rejected: getu("steps_rejected")?,
            energy,
        },
    })
}

#[derive(Serialize)]
struct Document<'a, C: Serialize, B: Serialize> {
    schema_version: u32,
    tool_version: &'a str,
    config: C,
    #[serde(flatten)]
    body: B,
}

fn json<C: Serialize, B: Serialize>(config: C, body: B) -> String {
    let doc = Document {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        config,
        body,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("document serializes");
    s.push('\n');
    s
}

pub fn trajectory_json(file: &TrajectoryFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("trajectory serializes");
    s.push('\n');
    s
}

pub fn parse_trajectory_json(text: &str) -> Result<TrajectoryFile, ParseError> {
    let file: TrajectoryFile = serde_json::from_str(text)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ParseError::Schema(file.schema_version));
    }
    Ok(file)
}

const REPORT_COLUMNS: &str = "sign,dimension,nonlinearity,xi,predicted,observed,agree,termination,termination_r,\
zeros,critical_points,sup_norm,period,period_spread,envelope_tail,decay_exponent,decayed,\
identity_residual,max_z_uptick,gradient_sup,stalled,anomaly,notes";

fn report_row(r: &ClassificationReport) -> String {
    let e = &r.evidence;
    let energy = r.energy.as_ref();
    let notes = e.notes.join("; ").replace(',', ";");
    [
        r.sign.name().to_string(),
        r.dimension.to_string(),
        r.nonlinearity.clone(),
        num(r.xi),
        r.predicted.to_string(),
        r.observed.to_string(),
        r.agree.to_string(),
        e.termination.map(|c| c.name()).unwrap_or("").to_string(),
        opt_num(e.termination_r),
        e.zero_count.to_string(),
        e.critical_count.to_string(),
        num(e.sup_norm),
        opt_num(e.period),
        opt_num(e.period_spread),
        opt_num(e.envelope.as_ref().map(|v| v.tail_max)),
        opt_num(e.envelope.as_ref().and_then(|v| v.decay_exponent)),
        e.decayed.to_string(),
        opt_num(energy.and_then(|x| x.max_identity_residual)),
        opt_num(energy.and_then(|x| x.max_z_uptick)),
        opt_num(energy.map(|x| x.gradient_sup)),
        e.stalled.to_string(),
        e.anomaly.to_string(),
        notes,
    ]
    .join(",")
}

pub fn classification_csv(config: &ProblemConfig, report: &ClassificationReport) -> String {
    let mut out = String::new();
    header(&mut out, "classification", config);
    out.push_str(REPORT_COLUMNS);
    out.push('\n');
    out.push_str(&report_row(report));
    out.push('\n');
    out
}

pub fn classification_json(config: &ProblemConfig, report: &ClassificationReport) -> String {
    #[derive(Serialize)]
    struct Body<'a> {
        report: &'a ClassificationReport,
    }
    json(config, Body { report })
}

/// Sweep configuration as echoed into outputs. The worker count only
/// affects scheduling and is left out so outputs match across worker counts.
pub fn sweep_echo(spec: &SweepSpec) -> serde_json::Value {
    let mut v = serde_json::to_value(spec).expect("sweep spec serializes");
    if let Some(m) = v.as_object_mut() {
        m.remove("worker_count");
    }
    v
}

fn sweep_rows(out: &mut String, cells: &[SweepCell]) {
    out.push_str(REPORT_COLUMNS);
    out.push('\n');
    for c in cells {
        out.push_str(&report_row(&c.report));
        out.push('\n');
    }
}

pub fn sweep_csv(spec: &SweepSpec, result: &SweepResult) -> String {
    let mut out = String::new();
    header(&mut out, "sweep", &sweep_echo(spec));
    let _ = writeln!(out, "# cells: {}", result.cells.len());
    let _ = writeln!(out, "# disagreement_count: {}", result.disagreements.len());
    sweep_rows(&mut out, &result.cells);
    out.push_str("# disagreements\n");
    sweep_rows(&mut out, &result.disagreements);
    out
}

pub fn sweep_json(spec: &SweepSpec, result: &SweepResult) -> String {
    json(sweep_echo(spec), result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::integrate;

    fn config(sign: CurvatureSign, n: usize, xi: f64) -> ProblemConfig {
        ProblemConfig {
            sign,
            dimension: n,
            xi,
            nonlinearity: Builtin::Sin,
            controls: IntegrationControls::default().with_r_max(60.0),
        }
    }

    fn file(cfg: &ProblemConfig, stride: usize) -> TrajectoryFile {
        let traj = integrate(&cfg.problem().unwrap(), &cfg.controls).unwrap();
        TrajectoryFile::new(cfg.clone(), &traj, stride)
    }

    #[test]
    fn csv_round_trip_is_exact() {
        for cfg in [
            config(CurvatureSign::Lorentz, 2, 1.0),
            config(CurvatureSign::Euclidean, 1, 1.0),
            config(CurvatureSign::Euclidean, 1, 2.0),
        ] {
            let f = file(&cfg, 3);
            let text = trajectory_csv(&f);
            let back = parse_trajectory_csv(&text).unwrap();
            assert_eq!(back, f);
            assert_eq!(back.diagnostics.sup_norm.to_bits(), f.diagnostics.sup_norm.to_bits());
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let f = file(&config(CurvatureSign::Lorentz, 1, 2.0), 1);
        let back = parse_trajectory_json(&trajectory_json(&f)).unwrap();
        assert_eq!(back, f);
        assert!(trajectory_json(&f).contains("\"schema_version\": 1"));
    }

    #[test]
    fn stride_keeps_last_sample() {
        let cfg = config(CurvatureSign::Lorentz, 2, 1.0);
        let full = file(&cfg, 1);
        let thin = file(&cfg, 7);
        assert_eq!(thin.samples.last(), full.samples.last());
        assert_eq!(
            thin.samples.len(),
            (full.samples.len() - 1) / 7 + 1 + usize::from(!(full.samples.len() - 1).is_multiple_of(7))
        );
        assert_eq!(thin.events, full.events);
    }

    #[test]
    fn csv_layout() {
        let f = file(&config(CurvatureSign::Lorentz, 2, 1.0), 1);
        let text = trajectory_csv(&f);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# curvlab trajectory");
        assert!(lines.contains(&"r,u,up"));
        assert!(lines.contains(&"# events"));
        assert!(lines.contains(&"# diagnostics"));
        assert!(text.contains("\"sign\":\"lorentz\""));
    }

    #[test]
    fn malformed_rows_are_reported() {
        let f = file(&config(CurvatureSign::Lorentz, 1, 1.0), 1);
        let text = trajectory_csv(&f).replacen("r,u,up\n", "r,u,up\n1.0,abc,2.0\n", 1);
        assert!(matches!(parse_trajectory_csv(&text), Err(ParseError::Malformed { .. })));
        let text = trajectory_csv(&f).replace("# schema_version: 1", "# schema_version: 9");
        assert!(matches!(parse_trajectory_csv(&text), Err(ParseError::Schema(9))));
    }

    #[test]
    fn problem_config_rejects_unknown_keys() {
        let err = serde_json::from_str::<ProblemConfig>(
            r#"{"sign":"lorentz","dimension":2,"xi":1.0,"nonlinearity":{"kind":"sin"},"tolerance":1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("tolerance"));
    }
}
