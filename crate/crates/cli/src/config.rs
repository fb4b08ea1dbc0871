//! Scenario configuration: TOML with typed sections and unknown keys rejected.
//!
//! Every section has defaults, so the resolved config echoed into the
//! manifest lists every parameter that influenced the run.

use std::path::{Path, PathBuf};

use contact_hj::problem::{BuiltInFamily, DerivativeMode, InitialDatum, Polynomial, ProblemSpec};
use contact_hj::{AxisBox, Tolerances};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Task selected by the subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Value,
    Classify,
    TraceChar,
    ConjugateScan,
    TraceSingular,
    Oracle,
    Report,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Value => "value",
            TaskKind::Classify => "classify",
            TaskKind::TraceChar => "trace-char",
            TaskKind::ConjugateScan => "conjugate-scan",
            TaskKind::TraceSingular => "trace-singular",
            TaskKind::Oracle => "oracle",
            TaskKind::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Optional; when present it must match the subcommand.
    #[serde(default)]
    pub task: Option<TaskKind>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub value: GridTask,
    #[serde(default)]
    pub classify: GridTask,
    #[serde(default)]
    pub trace_char: TraceCharTask,
    #[serde(default)]
    pub conjugate_scan: ConjugateScanTask,
    #[serde(default)]
    pub trace_singular: TraceSingularTask,
    #[serde(default)]
    pub oracle: OracleTask,
    #[serde(default)]
    pub report: ReportTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ClassicalQuadratic,
    ContactDiscounted,
    Focusing,
    CustomPolynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub family: Family,
    #[serde(default = "one")]
    pub n: usize,
    /// Discount rate for `contact_discounted`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Curvature for `focusing`.
    #[serde(default)]
    pub c: Option<f64>,
    /// Initial datum; required except for `focusing`.
    #[serde(default)]
    pub datum: Option<InitialDatum>,
    #[serde(default)]
    pub hamiltonian: Option<Polynomial>,
    /// Omitted: the numerical Legendre dual of `hamiltonian` is used.
    #[serde(default)]
    pub lagrangian: Option<Polynomial>,
    #[serde(default)]
    pub derivative_mode: DerivativeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Random samples used by the problem validation report.
    #[serde(default = "default_validation_samples")]
    pub validation_samples: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            seed: 0,
            validation_samples: default_validation_samples(),
        }
    }
}

/// A `times × box grid` point set, used by `value` and `classify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridTask {
    pub times: Vec<f64>,
    pub box_min: Vec<f64>,
    pub box_max: Vec<f64>,
    /// Nodes per axis of the spatial grid.
    pub points_per_dim: usize,
    /// Shooting seeds per axis; `0` selects the library heuristic.
    pub seeds_per_dim: usize,
}

impl Default for GridTask {
    fn default() -> Self {
        Self {
            times: vec![1.0],
            box_min: vec![-1.0],
            box_max: vec![1.0],
            points_per_dim: 21,
            seeds_per_dim: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceCharTask {
    pub seeds: Vec<Vec<f64>>,
    pub horizon: f64,
    /// Hard limit on `max |U_z − PᵀX_z|`.
    pub max_solve_u_residual: f64,
    /// Hard limit on the Herglotz residual.
    pub max_herglotz_residual: f64,
}

impl Default for TraceCharTask {
    fn default() -> Self {
        Self {
            seeds: vec![vec![0.0]],
            horizon: 1.0,
            max_solve_u_residual: 1e-7,
            max_herglotz_residual: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConjugateScanTask {
    pub seeds: Vec<Vec<f64>>,
    pub t_max: f64,
}

impl Default for ConjugateScanTask {
    fn default() -> Self {
        Self {
            seeds: vec![vec![0.0]],
            t_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
    /// Both directions from a two-branch point.
    Bidirectional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSingularTask {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub direction: Direction,
    pub horizon_forward: f64,
    pub horizon_backward: f64,
}

impl Default for TraceSingularTask {
    fn default() -> Self {
        Self {
            t0: 1.0,
            x0: vec![0.0],
            direction: Direction::Forward,
            horizon_forward: 1.0,
            horizon_backward: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleTask {
    pub box_min: Vec<f64>,
    pub box_max: Vec<f64>,
    pub dx: f64,
    /// `0` selects `0.9` times the stable step estimated at `t = 0`.
    pub dt: f64,
    pub t_final: f64,
    pub save_every: usize,
    /// Kink threshold on slope jumps; `0` selects `10 dx`.
    pub jump_tol: f64,
}

impl Default for OracleTask {
    fn default() -> Self {
        Self {
            box_min: vec![-2.0],
            box_max: vec![2.0],
            dx: 0.01,
            dt: 0.0,
            t_final: 1.0,
            save_every: 1,
            jump_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportTask {
    /// Comparison window; an empty range uses the traced curve's span.
    pub t_min: f64,
    pub t_max: f64,
    /// Hard limit on the traced-vs-grid interface distance, in cells.
    pub max_cells: f64,
    /// Random points for the advisory value comparison.
    pub value_samples: usize,
}

impl Default for ReportTask {
    fn default() -> Self {
        Self {
            t_min: 0.0,
            t_max: 0.0,
            max_cells: 2.0,
            value_samples: 20,
        }
    }
}

fn one() -> usize {
    1
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_validation_samples() -> usize {
    32
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

/// Checks a box and returns it; errors name the offending field.
pub fn checked_box(section: &str, min: &[f64], max: &[f64], n: usize) -> Result<AxisBox, CliError> {
    if min.len() != n || max.len() != n {
        return Err(config_err(
            &format!("{section}.box_min/box_max"),
            format!("expected {n} entries, got {} and {}", min.len(), max.len()),
        ));
    }
    for (i, (a, b)) in min.iter().zip(max).enumerate() {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(config_err(
                &format!("{section}.box_min[{i}]"),
                format!("min {a} must be below max {b}"),
            ));
        }
    }
    AxisBox::new(min.to_vec(), max.to_vec()).map_err(|e| config_err(section, e))
}

fn check_point(field: &str, x: &[f64], n: usize) -> Result<(), CliError> {
    if x.len() != n {
        return Err(config_err(field, format!("expected {n} entries, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(config_err(field, "entries must be finite"));
    }
    Ok(())
}

fn check_positive(field: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_err(field, format!("must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Sets `tolerances.KEY = VAL`; the key must name an existing field.
    pub fn override_tolerance(&mut self, spec: &str) -> Result<(), CliError> {
        let (key, val) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--tol-override expects KEY=VAL, got {spec:?}")))?;
        let key = key.trim();
        let mut map = match serde_json::to_value(&self.tolerances) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => unreachable!("tolerances serialize to an object"),
        };
        if !map.contains_key(key) {
            return Err(CliError::Usage(format!("--tol-override: unknown tolerance {key:?}")));
        }
        let parsed: serde_json::Value = serde_json::from_str(val.trim())
            .map_err(|_| CliError::Usage(format!("--tol-override {key}: {val:?} is not a number")))?;
        map.insert(key.to_string(), parsed);
        self.tolerances = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| CliError::Usage(format!("--tol-override {key}: {e}")))?;
        Ok(())
    }

    /// Semantic checks shared by all tasks plus those of `task`.
    pub fn validate(&self, task: TaskKind) -> Result<(), CliError> {
        if let Some(t) = self.task {
            if t != task {
                return Err(config_err(
                    "task",
                    format!("config is for {}, subcommand is {}", t.as_str(), task.as_str()),
                ));
            }
        }
        self.tolerances
            .validate()
            .map_err(|e| config_err("tolerances", e))?;
        let n = self.problem.n;
        if n == 0 {
            return Err(config_err("problem.n", "must be positive"));
        }
        match task {
            TaskKind::Value | TaskKind::Classify => {
                let (name, g) = if task == TaskKind::Value {
                    ("value", &self.value)
                } else {
                    ("classify", &self.classify)
                };
                checked_box(name, &g.box_min, &g.box_max, n)?;
                if g.times.is_empty() {
                    return Err(config_err(&format!("{name}.times"), "must not be empty"));
                }
                for (i, &t) in g.times.iter().enumerate() {
                    check_positive(&format!("{name}.times[{i}]"), t)?;
                }
                if g.points_per_dim == 0 {
                    return Err(config_err(&format!("{name}.points_per_dim"), "must be positive"));
                }
            }
            TaskKind::TraceChar => {
                let c = &self.trace_char;
                check_positive("trace_char.horizon", c.horizon)?;
                check_positive("trace_char.max_solve_u_residual", c.max_solve_u_residual)?;
                check_positive("trace_char.max_herglotz_residual", c.max_herglotz_residual)?;
                for (i, z) in c.seeds.iter().enumerate() {
                    check_point(&format!("trace_char.seeds[{i}]"), z, n)?;
                }
            }
            TaskKind::ConjugateScan => {
                let c = &self.conjugate_scan;
                check_positive("conjugate_scan.t_max", c.t_max)?;
                for (i, z) in c.seeds.iter().enumerate() {
                    check_point(&format!("conjugate_scan.seeds[{i}]"), z, n)?;
                }
            }
            TaskKind::TraceSingular => self.validate_trace_singular()?,
            TaskKind::Oracle => self.validate_oracle()?,
            TaskKind::Report => {
                self.validate_trace_singular()?;
                self.validate_oracle()?;
                check_positive("report.max_cells", self.report.max_cells)?;
                if self.report.t_max < self.report.t_min {
                    return Err(config_err("report.t_max", "must not be below report.t_min"));
                }
            }
        }
        Ok(())
    }

    fn validate_trace_singular(&self) -> Result<(), CliError> {
        let s = &self.trace_singular;
        check_positive("trace_singular.t0", s.t0)?;
        check_point("trace_singular.x0", &s.x0, self.problem.n)?;
        if s.direction != Direction::Backward {
            check_positive("trace_singular.horizon_forward", s.horizon_forward)?;
        }
        if s.direction != Direction::Forward {
            check_positive("trace_singular.horizon_backward", s.horizon_backward)?;
        }
        Ok(())
    }

    fn validate_oracle(&self) -> Result<(), CliError> {
        let o = &self.oracle;
        if self.problem.n > 2 {
            return Err(config_err("problem.n", "the grid oracle supports n = 1 or 2"));
        }
        checked_box("oracle", &o.box_min, &o.box_max, self.problem.n)?;
        check_positive("oracle.dx", o.dx)?;
        check_positive("oracle.t_final", o.t_final)?;
        if o.dt < 0.0 || !o.dt.is_finite() {
            return Err(config_err("oracle.dt", "must be non-negative"));
        }
        if o.jump_tol < 0.0 || !o.jump_tol.is_finite() {
            return Err(config_err("oracle.jump_tol", "must be non-negative"));
        }
        if o.save_every == 0 {
            return Err(config_err("oracle.save_every", "must be positive"));
        }
        Ok(())
    }

    /// Builds the problem; errors name the `problem.*` field at fault.
    pub fn build_problem(&self) -> Result<ProblemSpec, CliError> {
        let p = &self.problem;
        let datum = || {
            p.datum
                .clone()
                .ok_or_else(|| config_err("problem.datum", "required for this family"))
        };
        let reject = |field: &str, present: bool| {
            if present {
                Err(config_err(field, "not used by this family"))
            } else {
                Ok(())
            }
        };
        let family = match p.family {
            Family::ClassicalQuadratic => {
                reject("problem.lambda", p.lambda.is_some())?;
                reject("problem.c", p.c.is_some())?;
                BuiltInFamily::ClassicalQuadratic
            }
            Family::ContactDiscounted => {
                reject("problem.c", p.c.is_some())?;
                let lambda = p
                    .lambda
                    .ok_or_else(|| config_err("problem.lambda", "required for contact_discounted"))?;
                check_positive("problem.lambda", lambda)?;
                BuiltInFamily::ContactDiscounted { lambda }
            }
            Family::Focusing => {
                reject("problem.lambda", p.lambda.is_some())?;
                reject("problem.datum", p.datum.is_some())?;
                let c = p.c.unwrap_or(1.0);
                check_positive("problem.c", c)?;
                BuiltInFamily::Focusing { c }
            }
            Family::CustomPolynomial => {
                reject("problem.lambda", p.lambda.is_some())?;
                reject("problem.c", p.c.is_some())?;
                let hamiltonian = p
                    .hamiltonian
                    .clone()
                    .ok_or_else(|| config_err("problem.hamiltonian", "required for custom_polynomial"))?;
                BuiltInFamily::CustomPolynomial {
                    hamiltonian,
                    lagrangian: p.lagrangian.clone(),
                }
            }
        };
        if p.family != Family::CustomPolynomial {
            reject("problem.hamiltonian", p.hamiltonian.is_some())?;
            reject("problem.lagrangian", p.lagrangian.is_some())?;
        }
        let d = if p.family == Family::Focusing {
            InitialDatum::ConcaveQuadratic { c: p.c.unwrap_or(1.0) }
        } else {
            datum()?
        };
        let spec = ProblemSpec::from_family(&family, p.n, d).map_err(|e| config_err("problem", e))?;
        Ok(spec.with_derivative_mode(p.derivative_mode))
    }

    /// The config with every default made explicit.
    pub fn resolved(&self) -> Self {
        let mut r = self.clone();
        if r.problem.family == Family::Focusing {
            r.problem.c = Some(r.problem.c.unwrap_or(1.0));
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[problem]
family = "classical_quadratic"
datum = { kind = "linear", a = [1.0] }
"#;

    #[test]
    fn defaults_fill_every_section() {
        let c = ScenarioConfig::from_toml(BASIC).unwrap();
        assert_eq!(c.problem.n, 1);
        assert_eq!(c.value.points_per_dim, 21);
        assert_eq!(c.tolerances, Tolerances::default());
        c.validate(TaskKind::Value).unwrap();
        c.build_problem().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = format!("{BASIC}\n[value]\npoints = 3\n");
        let e = ScenarioConfig::from_toml(&text).unwrap_err().to_string();
        assert!(e.contains("points"), "{e}");
        assert!(e.contains("line"), "{e}");
    }

    #[test]
    fn malformed_box_names_the_field() {
        let text = format!("{BASIC}\n[value]\nbox_min = [1.0]\nbox_max = [-1.0]\n");
        let c = ScenarioConfig::from_toml(&text).unwrap();
        let e = c.validate(TaskKind::Value).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("value.box_min[0]"), "{e}");
    }

    #[test]
    fn task_key_must_match_subcommand() {
        let text = format!("task = \"oracle\"\n{BASIC}");
        let c = ScenarioConfig::from_toml(&text).unwrap();
        assert!(c.validate(TaskKind::Oracle).is_ok());
        assert!(c.validate(TaskKind::Value).is_err());
    }

    #[test]
    fn tolerance_overrides_are_checked() {
        let mut c = ScenarioConfig::from_toml(BASIC).unwrap();
        c.override_tolerance("dt=0.005").unwrap();
        assert_eq!(c.tolerances.dt, 0.005);
        assert!(c.override_tolerance("no_such=1").is_err());
        assert!(c.override_tolerance("dt").is_err());
        c.override_tolerance("tol_conj=-1").unwrap();
        assert!(c.validate(TaskKind::Value).is_err());
    }

    #[test]
    fn family_parameters_are_checked() {
        let text = "[problem]\nfamily = \"contact_discounted\"\ndatum = { kind = \"double_well\" }\n";
        let e = ScenarioConfig::from_toml(text).unwrap().build_problem().unwrap_err();
        assert!(e.to_string().contains("problem.lambda"), "{e}");
        let text = "[problem]\nfamily = \"focusing\"\nlambda = 1.0\n";
        let e = ScenarioConfig::from_toml(text).unwrap().build_problem().unwrap_err();
        assert!(e.to_string().contains("problem.lambda"), "{e}");
    }
}
