//! Configuration, run orchestration and serialization behind the `excurv`
//! binary.
//!
//! Every command writes its artifacts into the output directory and returns
//! whether all checks it performed passed.

pub mod config;
pub mod io;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::barriers::{
    glue_subsolutions, radial_mask, verify_subsolution, BarrierError, SubsolutionCheckOptions,
    SubsolutionReport,
};
use crate::diagnostics::{
    c1_decay_audit, c2_boundary_audit, interior_w_audit, symmetry_audit, theta_barrier_audit,
    DecayAudit, DiagError, SymmetryAudit, ThetaAudit, WAudit,
};
use crate::exterior::{ConeCheck, ExteriorError, RadiusReport};
use crate::fields::{FieldError, ScalarField};
use crate::fspec::Validation;
use crate::grid::{AnnulusGrid, AnnulusSpec, GridError, RadialGrid};
use crate::radial::{radial_curvature, solve_radial_bvp, RadialError};
use crate::solver::{homotopy_solve, solve_dirichlet, CompactProblem, ConvergenceReport, InitKind, SolveError};

pub use config::{parse_config, parse_config_file, Command, ConfigError, RunConfig};
use config::SubsolutionConfig;
use io::{write_field_file, write_report, IoError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Exterior(#[from] ExteriorError),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error(transparent)]
    Audit(#[from] DiagError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Seed for randomly placed audit points.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub command: Command,
    pub artifacts: Vec<PathBuf>,
    pub passed: bool,
}

struct Artifacts<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Artifacts<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }
}

/// Runs `command` (or the configuration's own command) and writes artifacts.
pub fn run(cfg: &RunConfig, command: Command, opts: &RunOptions) -> Result<RunSummary, RunError> {
    if let Some(c) = cfg.command {
        if c != command {
            return Err(RunError::Invalid(format!(
                "configuration is for `{}`, not `{}`",
                c.name(),
                command.name()
            )));
        }
    }
    std::fs::create_dir_all(&opts.out).map_err(IoError::from)?;
    let mut art = Artifacts {
        dir: &opts.out,
        written: Vec::new(),
    };
    info!("running {} into {}", command.name(), opts.out.display());
    let passed = match command {
        Command::SolveCompact => solve_compact(cfg, &mut art)?,
        Command::SolveExterior => solve_exterior(cfg, &mut art)?,
        Command::Oracle => oracle(cfg, &mut art)?,
        Command::Audit => audit(cfg, opts, &mut art)?,
        Command::BarrierCheck => barrier_check(cfg, &mut art)?,
        Command::Glue => glue(cfg, &mut art)?,
    };
    Ok(RunSummary {
        command,
        artifacts: art.written,
        passed,
    })
}

fn compact_grid(cfg: &RunConfig) -> Result<Arc<AnnulusGrid>, RunError> {
    let c = &cfg.compact;
    Ok(Arc::new(AnnulusGrid::new(
        cfg.boundary(),
        c.outer,
        c.n_r,
        c.n_theta,
        c.stretching,
    )?))
}

fn require_planar(cfg: &RunConfig) -> Result<(), RunError> {
    if cfg.problem.n != 2 {
        return Err(RunError::Invalid(format!(
            "the grid solver needs n = 2, got n = {}",
            cfg.problem.n
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct CompactReport {
    grid: AnnulusSpec,
    hypotheses: Validation,
    initializer: SubsolutionReport,
    convergence: ConvergenceReport,
    /// `min(u − initializer)`; the initializer is a subsolution.
    lower_gap: f64,
}

fn solve_compact(cfg: &RunConfig, art: &mut Artifacts) -> Result<bool, RunError> {
    require_planar(cfg)?;
    let grid = compact_grid(cfg)?;
    let init = match &cfg.problem.subsolution {
        SubsolutionConfig::Explicit { .. } => cfg.problem_spec()?.subsolution.field(grid.clone())?,
        SubsolutionConfig::File { path } => io::read_field_file(path, grid.clone())?,
    };
    let check = verify_subsolution(
        &init,
        &cfg.fspec(),
        &SubsolutionCheckOptions {
            include_boundary_rows: false,
            ..Default::default()
        },
    );
    let prob = CompactProblem::new(cfg.fspec(), init.clone(), InitKind::Subsolution);
    let (u, convergence) = solve_dirichlet(&prob, &cfg.solver)?;
    let lower_gap = u
        .values()
        .iter()
        .zip(init.values())
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min);
    let tol = convergence.tol_cmp;
    write_field_file(&art.path("compact_solution.csv"), &u, cfg.output)?;
    let report = CompactReport {
        grid: grid.spec(),
        hypotheses: cfg.hypotheses()?,
        initializer: check,
        convergence,
        lower_gap,
    };
    write_report(&art.path("compact_report.json"), "solve-compact", &report)?;
    Ok(lower_gap >= -tol)
}

#[derive(Serialize)]
struct ExteriorReport {
    hypotheses: Validation,
    cone_offset: f64,
    radii: Vec<f64>,
    reports: Vec<RadiusReport>,
    window_radius: f64,
    converged_at: Option<usize>,
    close_to_cone: ConeCheck,
}

/// File name of the solution at outer radius `r`.
pub fn solution_file_name(r: f64) -> String {
    format!("solution_R{r}.csv")
}

fn solve_exterior(cfg: &RunConfig, art: &mut Artifacts) -> Result<bool, RunError> {
    require_planar(cfg)?;
    let run = cfg.exterior_run()?;
    let outcome = crate::exterior::solve_exterior(&run)?;
    for u in &outcome.solutions {
        write_field_file(&art.path(&solution_file_name(u.grid().outer())), u, cfg.output)?;
    }
    let w = &outcome.window;
    io::write_window(&art.path("window.csv"), &w.grid, &w.nodes, &w.values)?;
    let passed = outcome.reports.iter().all(|r| r.sandwich.passes) && outcome.close_to_cone.passes;
    let report = ExteriorReport {
        hypotheses: cfg.hypotheses()?,
        cone_offset: run.problem.cone()?.offset,
        radii: outcome.radii(),
        window_radius: outcome.window_radius,
        converged_at: outcome.converged_at,
        close_to_cone: outcome.close_to_cone,
        reports: outcome.reports,
    };
    write_report(&art.path("exterior_report.json"), "solve-exterior", &report)?;
    Ok(passed)
}

#[derive(Serialize)]
struct OracleReport {
    hypotheses: Validation,
    inner: f64,
    outer: f64,
    intervals: usize,
    u_inner: f64,
    u_outer: f64,
    p0: f64,
    total_mass: f64,
    bisections: usize,
    shooting_residual: f64,
    /// `max |K − f|/f` over interior radial nodes.
    max_relative_curvature_error: f64,
}

fn oracle(cfg: &RunConfig, art: &mut Artifacts) -> Result<bool, RunError> {
    let f = cfg.fspec();
    let boundary = cfg.boundary();
    if !f.is_radial() || !boundary.is_circle() {
        return Err(RunError::Invalid(
            "the radial oracle needs radial f and a circular inner boundary".into(),
        ));
    }
    let sub = cfg.problem_spec()?.subsolution;
    let rho = boundary.radius_at(0.0);
    let o = &cfg.oracle;
    let grid = RadialGrid::new(cfg.problem.n, rho, o.outer, o.intervals, o.stretching)?;
    let (u_inner, u_outer) = (sub.value_unchecked(rho), sub.value_unchecked(o.outer));
    let profile = solve_radial_bvp(&f, &grid, u_inner, u_outer, &o.options)?;
    let k = radial_curvature(&profile);
    let nodes = profile.grid.nodes();
    let mut err = 0.0f64;
    for i in 1..nodes.len() - 1 {
        let fr = f.radial_value(nodes[i]).map_err(ConfigError::from)?;
        err = err.max((k[i] - fr).abs() / fr);
    }
    let file = std::fs::File::create(art.path("profile.csv")).map_err(IoError::from)?;
    io::write_profile(std::io::BufWriter::new(file), &profile)?;
    let report = OracleReport {
        hypotheses: cfg.hypotheses()?,
        inner: rho,
        outer: o.outer,
        intervals: o.intervals,
        u_inner,
        u_outer,
        p0: profile.p0,
        total_mass: *profile.mass.last().expect("nonempty"),
        bisections: profile.bisections,
        shooting_residual: profile.shooting_residual,
        max_relative_curvature_error: err,
    };
    write_report(&art.path("oracle_report.json"), "oracle", &report)?;
    Ok(true)
}

#[derive(Serialize)]
struct ThetaEntry {
    radius: f64,
    node: usize,
    result: Result<ThetaAudit, String>,
}

#[derive(Serialize)]
struct AuditReport {
    radii: Vec<f64>,
    decay: Vec<DecayAudit>,
    interior_w: Vec<WAudit>,
    theta: Vec<ThetaEntry>,
    symmetry: Option<Vec<SymmetryAudit>>,
    passed: bool,
}

fn audit_inputs(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    if !cfg.audit.inputs.is_empty() {
        return Ok(cfg.audit.inputs.clone());
    }
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(IoError::from)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("solution_R") && n.ends_with(".csv"))
        })
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(RunError::Invalid(format!(
            "no solution_R*.csv files in {}; run solve-exterior first",
            dir.display()
        )));
    }
    Ok(found)
}

fn audit(cfg: &RunConfig, opts: &RunOptions, art: &mut Artifacts) -> Result<bool, RunError> {
    require_planar(cfg)?;
    let spec = cfg.problem_spec()?;
    let sub = spec.subsolution;
    let plan = cfg.exterior.grid;
    let mut solutions = Vec::new();
    for path in audit_inputs(cfg, art.dir)? {
        let table = io::read_field_table(std::fs::File::open(&path).map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })?)?;
        let r = table.outer_radius();
        let grid = Arc::new(plan.grid(&spec.boundary, spec.inner_extent(), r)?);
        if table.u.len() != grid.len() {
            return Err(RunError::Invalid(format!(
                "{} does not match the exterior grid plan at R = {r}",
                path.display()
            )));
        }
        solutions.push(ScalarField::new(grid, table.u)?);
    }
    solutions.sort_by(|a, b| a.grid().outer().total_cmp(&b.grid().outer()));
    let radii: Vec<f64> = solutions.iter().map(|u| u.grid().outer()).collect();
    let a = &cfg.audit;
    let mut decay = Vec::new();
    if solutions.len() >= 3 {
        decay.extend(c1_decay_audit(&solutions, &sub, &a.options)?);
        decay.extend(c2_boundary_audit(&solutions, &sub, &a.options)?);
    }
    let interior_w = solutions
        .iter()
        .map(|u| interior_w_audit(u, a.beta, a.gap_tol))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rng = opts.seed.map(ChaCha8Rng::seed_from_u64);
    let mut theta = Vec::new();
    for u in &solutions {
        let g = u.grid();
        let start = g.outer_row().start;
        for s in 0..a.theta_points {
            let j = match rng.as_mut() {
                Some(r) => r.gen_range(0..g.n_theta()),
                None => s * g.n_theta() / a.theta_points.max(1),
            };
            let node = start + j;
            theta.push(ThetaEntry {
                radius: g.outer(),
                node,
                result: theta_barrier_audit(u, &sub, node, None).map_err(|e| e.to_string()),
            });
        }
    }
    let symmetry = (spec.f.is_radial() && spec.boundary.is_circle())
        .then(|| solutions.iter().map(|u| symmetry_audit(u, &sub)).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    let passed = decay.iter().all(|d| d.passes)
        && interior_w.iter().all(|w| w.passes)
        && theta.iter().all(|t| t.result.as_ref().map_or(true, |r| r.passes))
        && symmetry.iter().flatten().all(|s| s.passes);
    let file = std::fs::File::create(art.path("decay_audit.csv")).map_err(IoError::from)?;
    io::write_decay_table(std::io::BufWriter::new(file), &decay)?;
    let report = AuditReport {
        radii,
        decay,
        interior_w,
        theta,
        symmetry,
        passed,
    };
    write_report(&art.path("audit_report.json"), "audit", &report)?;
    Ok(passed)
}

#[derive(Serialize)]
struct BarrierReport {
    n: usize,
    rho1: f64,
    a: f64,
    samples: usize,
    /// `min (K[u̲] − bound)` over log-spaced radii in `[ρ₁, 10³ρ₁]`.
    min_closed_form_margin: f64,
    psi_sup: f64,
    discrete: Option<SubsolutionReport>,
    cone_offset: Option<f64>,
    boundary_excess: Option<f64>,
    passed: bool,
}

fn barrier_check(cfg: &RunConfig, art: &mut Artifacts) -> Result<bool, RunError> {
    let sub = cfg.explicit_subsolution().ok_or_else(|| {
        RunError::Invalid("barrier-check needs an explicit subsolution".into())
    })?;
    let samples = 10_000;
    let min_margin = (0..samples)
        .map(|i| {
            let r = sub.rho1 * 1e3f64.powf(i as f64 / (samples - 1) as f64);
            let (k, bound) = sub.curvature(r)?;
            Ok(k - bound)
        })
        .collect::<Result<Vec<f64>, BarrierError>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let (discrete, cone_offset, excess) = if cfg.problem.n == 2 {
        let grid = compact_grid(cfg)?;
        let u = sub.field(grid)?;
        let spec = cfg.problem_spec()?;
        let rep = verify_subsolution(&u, &cfg.fspec(), &SubsolutionCheckOptions::default());
        (Some(rep), Some(spec.cone()?.offset), Some(spec.boundary_excess()))
    } else {
        (None, None, None)
    };
    let passed = min_margin >= -1e-12 && discrete.as_ref().map_or(true, |d| d.passes);
    let report = BarrierReport {
        n: sub.n,
        rho1: sub.rho1,
        a: sub.a,
        samples,
        min_closed_form_margin: min_margin,
        psi_sup: sub.psi_sup(),
        discrete,
        cone_offset,
        boundary_excess: excess,
        passed,
    };
    write_report(&art.path("barrier_report.json"), "barrier-check", &report)?;
    Ok(passed)
}

#[derive(Serialize)]
struct GlueReport {
    width: f64,
    crossing_nodes: usize,
    blended_nodes: usize,
    convergence: ConvergenceReport,
    /// `min (u − max{u₁, u₂})`.
    min_over_max: f64,
    /// `max |u − max{u₁, u₂}|` over boundary rows.
    boundary_mismatch: f64,
    passed: bool,
}

fn glue(cfg: &RunConfig, art: &mut Artifacts) -> Result<bool, RunError> {
    require_planar(cfg)?;
    let g = cfg
        .glue
        .ok_or_else(|| RunError::Invalid("glue needs a [glue] section".into()))?;
    let grid = compact_grid(cfg)?;
    let u1 = ScalarField::from_radial(grid.clone(), |r| g.coeff * r * r + g.offset)?;
    let u2 = cfg.problem_spec()?.subsolution.field(grid.clone())?;
    let m1 = radial_mask(&grid, |r| r < g.omega1_outer);
    let m2 = radial_mask(&grid, |r| r > g.omega2_inner);
    let glued = glue_subsolutions(&u1, &u2, &m1, &m2, &g.options)?;
    let prob = CompactProblem::new(cfg.fspec(), glued.field.clone(), InitKind::Glued);
    let (u, convergence) = homotopy_solve(&prob, None, &cfg.solver)?;
    let max12 = u1.zip_with(&u2, f64::max)?;
    let min_over_max = u
        .values()
        .iter()
        .zip(max12.values())
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min);
    let boundary_mismatch = grid
        .inner_row()
        .chain(grid.outer_row())
        .map(|k| (u.values()[k] - max12.values()[k]).abs())
        .fold(0.0, f64::max);
    write_field_file(&art.path("glued.csv"), &glued.field, cfg.output)?;
    write_field_file(&art.path("glue_solution.csv"), &u, cfg.output)?;
    let passed = min_over_max >= -1e-8 && boundary_mismatch == 0.0;
    let report = GlueReport {
        width: glued.width,
        crossing_nodes: glued.crossing.len(),
        blended_nodes: glued.blended.len(),
        convergence,
        min_over_max,
        boundary_mismatch,
        passed,
    };
    write_report(&art.path("glue_report.json"), "glue", &report)?;
    Ok(passed)
}
