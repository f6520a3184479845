//! TOML run configuration.
//!
//! Every section except `[problem]` is optional. Unknown keys are rejected.
//!
//! ```toml
//! [problem]
//! n = 2
//! f = { kind = "subsolution_curvature", rho1 = 1.0, a = 3.0 }
//! subsolution = { kind = "explicit", rho1 = 1.0, a = 3.0 }
//!
//! [exterior]
//! schedule = [8.0, 16.0, 32.0, 64.0]
//! window = 4.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barriers::{ExplicitSubsolution, GlueOptions};
use crate::diagnostics::AuditOptions;
use crate::exterior::{ExteriorRun, GridPlan, ProblemSpec};
use crate::fspec::{FSpec, FSpecError, Family, Validation};
use crate::grid::{InnerBoundary, Stretching};
use crate::radial::RadialOptions;
use crate::solver::SolverOptions;

use super::io::FieldColumns;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {msg}")]
    Syntax {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("referenced file does not exist: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveCompact,
    SolveExterior,
    Oracle,
    Audit,
    BarrierCheck,
    Glue,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveCompact => "solve-compact",
            Command::SolveExterior => "solve-exterior",
            Command::Oracle => "oracle",
            Command::Audit => "audit",
            Command::BarrierCheck => "barrier-check",
            Command::Glue => "glue",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubsolutionConfig {
    /// `u̲ = |x| − ρ₁ + ψ(|x|) + shift`.
    Explicit {
        rho1: f64,
        a: f64,
        #[serde(default)]
        shift: f64,
    },
    /// A field file on the compact grid, used as initializer by `solve-compact`.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "two")]
    pub n: usize,
    /// Defaults to the circle of radius `ρ₁`.
    #[serde(default)]
    pub boundary: Option<InnerBoundary>,
    pub f: Family,
    pub subsolution: SubsolutionConfig,
    /// `L` of the cone `|x| + L`.
    #[serde(default)]
    pub cone_offset: Option<f64>,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompactConfig {
    pub outer: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub stretching: Stretching,
}

impl Default for CompactConfig {
    fn default() -> Self {
        Self {
            outer: 16.0,
            n_r: 64,
            n_theta: 32,
            stretching: Stretching::Geometric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExteriorConfig {
    pub schedule: Vec<f64>,
    pub window: f64,
    pub tol_window: f64,
    pub grid: GridPlan,
    pub parallel: bool,
}

impl Default for ExteriorConfig {
    fn default() -> Self {
        Self {
            schedule: vec![8.0, 16.0, 32.0, 64.0],
            window: 4.0,
            tol_window: 1e-4,
            grid: GridPlan::default(),
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub outer: f64,
    pub intervals: usize,
    pub stretching: Stretching,
    pub options: RadialOptions,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            outer: 16.0,
            intervals: 4096,
            stretching: Stretching::Geometric,
            options: RadialOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Field files from `solve-exterior`; empty means every
    /// `solution_R*.csv` in the output directory.
    pub inputs: Vec<PathBuf>,
    pub beta: f64,
    pub gap_tol: f64,
    /// Boundary points for the barrier audit; drawn with `--seed`, else
    /// spread evenly starting at `θ = 0`.
    pub theta_points: usize,
    pub options: AuditOptions,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            beta: 1.0,
            gap_tol: 0.5,
            theta_points: 1,
            options: AuditOptions::default(),
        }
    }
}

/// `u₁ = coeff·|x|² + offset` glued to the explicit subsolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlueConfig {
    pub coeff: f64,
    pub offset: f64,
    /// `Ω₁ = {|x| < omega1_outer}`.
    pub omega1_outer: f64,
    /// `Ω₂ = {|x| > omega2_inner}`.
    pub omega2_inner: f64,
    #[serde(default)]
    pub options: GlueOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub compact: CompactConfig,
    #[serde(default)]
    pub exterior: ExteriorConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub glue: Option<GlueConfig>,
    #[serde(default)]
    pub output: FieldColumns,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Parses and validates a configuration; relative file paths are resolved
/// against `base` when given.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Syntax {
            line,
            column,
            msg: e.message().to_string(),
        }
    })?;
    if let Some(base) = base {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let SubsolutionConfig::File { path } = &mut cfg.problem.subsolution {
            fix(path);
        }
        cfg.audit.inputs.iter_mut().for_each(fix);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config_file(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path.parent())
}

impl From<FSpecError> for ConfigError {
    fn from(e: FSpecError) -> Self {
        hypothesis(e)
    }
}

fn hypothesis(e: FSpecError) -> ConfigError {
    ConfigError::Hypothesis(match e {
        FSpecError::Positivity(m) => format!("f > 0: {m}"),
        FSpecError::Monotonicity(m) => format!("f_z >= 0 violated by height factor: {m}"),
        FSpecError::Decay(m) => format!("sup f·r^(n+1) < inf: {m}"),
        FSpecError::Regularity(m) => format!("sup (|Df| + |D²f|)/f < inf: {m}"),
        FSpecError::Unsupported(m) => m,
    })
}

impl RunConfig {
    pub fn fspec(&self) -> FSpec {
        FSpec::new(self.problem.n, self.problem.f.clone())
    }

    /// How each hypothesis on `f` was established.
    pub fn hypotheses(&self) -> Result<Validation, ConfigError> {
        self.fspec().validate().map_err(hypothesis)
    }

    pub fn explicit_subsolution(&self) -> Option<ExplicitSubsolution> {
        match self.problem.subsolution {
            SubsolutionConfig::Explicit { rho1, a, shift } => ExplicitSubsolution::new(self.problem.n, rho1, a)
                .ok()
                .map(|s| s.with_shift(shift)),
            SubsolutionConfig::File { .. } => None,
        }
    }

    pub fn boundary(&self) -> InnerBoundary {
        self.problem.boundary.clone().unwrap_or_else(|| match self.problem.subsolution {
            SubsolutionConfig::Explicit { rho1, .. } => InnerBoundary::circle(rho1),
            SubsolutionConfig::File { .. } => InnerBoundary::circle(1.0),
        })
    }

    /// The exterior problem; needs an explicit subsolution.
    pub fn problem_spec(&self) -> Result<ProblemSpec, ConfigError> {
        let subsolution = self.explicit_subsolution().ok_or_else(|| {
            ConfigError::Invalid("this command needs an explicit subsolution".into())
        })?;
        Ok(ProblemSpec {
            boundary: self.boundary(),
            f: self.fspec(),
            subsolution,
            cone_offset: self.problem.cone_offset,
        })
    }

    pub fn exterior_run(&self) -> Result<ExteriorRun, ConfigError> {
        let e = &self.exterior;
        let mut run = ExteriorRun::new(self.problem_spec()?, e.schedule.clone(), e.window);
        run.tol_window = e.tol_window;
        run.grid = e.grid;
        run.solver = self.solver;
        run.parallel = e.parallel;
        Ok(run)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if p.n < 2 {
            return Err(ConfigError::Invalid(format!("dimension n = {} < 2", p.n)));
        }
        match &p.subsolution {
            SubsolutionConfig::Explicit { rho1, a, shift } => {
                if !(*a > 2.0) {
                    return Err(ConfigError::Hypothesis(format!("a > 2 required (got a = {a})")));
                }
                if !(*rho1 > 0.0) {
                    return Err(ConfigError::Hypothesis(format!("rho1 > 0 required (got rho1 = {rho1})")));
                }
                if !shift.is_finite() {
                    return Err(ConfigError::Invalid("subsolution shift must be finite".into()));
                }
            }
            SubsolutionConfig::File { path } => {
                if !path.exists() {
                    return Err(ConfigError::MissingFile(path.clone()));
                }
            }
        }
        if let Family::SubsolutionCurvature { a, .. } = &p.f {
            if !(*a > 2.0) {
                return Err(ConfigError::Hypothesis(format!("a > 2 required (got a = {a})")));
            }
        }
        self.hypotheses()?;
        for path in &self.audit.inputs {
            if !path.exists() {
                return Err(ConfigError::MissingFile(path.clone()));
            }
        }
        if self.explicit_subsolution().is_some() {
            let spec = self.problem_spec()?;
            if p.n == 2 {
                // L > max(u₀ − |x|) and ρ₁ ≤ min ρ
                spec.validate().map_err(|e| ConfigError::Hypothesis(e.to_string()))?;
                self.exterior_run()?
                    .validate()
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
        }
        let c = &self.compact;
        if !(c.outer > 0.0) || c.n_r < 3 || c.n_theta < 4 || c.n_theta % 4 != 0 {
            return Err(ConfigError::Invalid(
                "compact grid needs outer > 0, n_r >= 3 and n_theta a positive multiple of 4".into(),
            ));
        }
        if self.oracle.intervals < 2 || !(self.oracle.outer > 0.0) {
            return Err(ConfigError::Invalid("oracle needs outer > 0 and at least 2 intervals".into()));
        }
        if let Some(g) = &self.glue {
            if !(g.coeff > 0.0) {
                return Err(ConfigError::Invalid("glue coeff must be positive (u1 strictly convex)".into()));
            }
            if !(g.omega2_inner < g.omega1_outer) {
                return Err(ConfigError::Invalid(
                    "glue regions must overlap: omega2_inner < omega1_outer".into(),
                ));
            }
        }
        if !(self.audit.beta > 0.0) || !(self.audit.gap_tol >= 0.0) {
            return Err(ConfigError::Invalid("audit needs beta > 0 and gap_tol >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOKE: &str = r#"
[problem]
n = 2
f = { kind = "subsolution_curvature", rho1 = 1.0, a = 3.0 }
subsolution = { kind = "explicit", rho1 = 1.0, a = 3.0 }

[exterior]
schedule = [8.0, 16.0, 32.0, 64.0]
"#;

    #[test]
    fn minimal_radial_config_is_valid() {
        let cfg = parse_config(SMOKE, None).unwrap();
        assert_eq!(cfg.exterior.schedule, vec![8.0, 16.0, 32.0, 64.0]);
        assert_eq!(cfg.boundary(), InnerBoundary::circle(1.0));
        assert_eq!(cfg.exterior_run().unwrap().problem.cone().unwrap().offset, -0.9);
    }

    #[test]
    fn a_equal_two_is_rejected() {
        let text = SMOKE.replace("subsolution = { kind = \"explicit\", rho1 = 1.0, a = 3.0 }", "subsolution = { kind = \"explicit\", rho1 = 1.0, a = 2.0 }");
        let err = parse_config(&text, None).unwrap_err().to_string();
        assert!(err.contains("a > 2 required"), "{err}");
    }

    #[test]
    fn decreasing_height_factor_is_rejected() {
        let text = SMOKE.replace(
            "f = { kind = \"subsolution_curvature\", rho1 = 1.0, a = 3.0 }",
            "f = { kind = \"product_height\", base = { kind = \"radial_power\", c = 0.1, s = 4.0 }, height = { kind = \"tanh\", amplitude = -0.5, rate = 1.0 } }",
        );
        let err = parse_config(&text, None).unwrap_err().to_string();
        assert!(err.contains("f_z >= 0"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let text = "[problem]\nn = 2\nf = { kind = \n";
        match parse_config(text, None) {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = format!("{SMOKE}\n[exterior2]\nx = 1\n");
        assert!(matches!(parse_config(&text, None), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn cone_offset_below_boundary_excess_is_rejected() {
        let text = SMOKE.replace("[exterior]", "cone_offset = -1.5\n[exterior]");
        let err = parse_config(&text, None).unwrap_err().to_string();
        assert!(err.contains("cone offset"), "{err}");
    }

    #[test]
    fn missing_field_file_is_reported() {
        let text = SMOKE.replace(
            "subsolution = { kind = \"explicit\", rho1 = 1.0, a = 3.0 }",
            "subsolution = { kind = \"file\", path = \"nope.csv\" }",
        );
        assert!(matches!(parse_config(&text, None), Err(ConfigError::MissingFile(_))));
    }

    #[test]
    fn tabulated_decay_is_assumed() {
        let text = SMOKE.replace(
            "f = { kind = \"subsolution_curvature\", rho1 = 1.0, a = 3.0 }",
            "f = { kind = \"tabulated\", radii = [1.0, 2.0, 4.0], n_theta = 1, values = [0.1, 0.01, 0.001] }",
        );
        let cfg = parse_config(&text, None).unwrap();
        assert_eq!(cfg.hypotheses().unwrap().decay, crate::fspec::Check::Assumed);
    }
}
