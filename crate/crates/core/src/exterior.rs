//! Exterior problem as the monotone limit of Dirichlet problems on
//! `B_R \ K` with outer data from the subsolution.

use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barriers::{BarrierError, ConeSupersolution, ExplicitSubsolution};
use crate::fields::{FieldError, ScalarField};
use crate::fspec::{FSpec, FSpecError};
use crate::grid::{AnnulusGrid, GridError, InnerBoundary, Stretching};
use crate::solver::{solve_dirichlet, CompactProblem, ConvergenceReport, InitKind, SolveError, SolverOptions};

#[derive(Debug, Error)]
pub enum ExteriorError {
    #[error("invalid run: {0}")]
    Invalid(String),
    #[error("solve at R = {radius} failed: {source}")]
    Solve {
        radius: f64,
        #[source]
        source: SolveError,
    },
    #[error("monotonicity violated between R = {coarse} and R = {fine}: min(u_fine - u_coarse) = {min_increase:.3e} < -{tol:.3e}")]
    Monotonicity {
        coarse: f64,
        fine: f64,
        min_increase: f64,
        tol: f64,
    },
    #[error("window of radius {window} not covered by the grid of radius {radius}")]
    WindowNotCovered { window: f64, radius: f64 },
    #[error("no solutions for index {0} and its successor")]
    MissingRadius(usize),
    #[error(transparent)]
    Data(#[from] FSpecError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The exterior problem: inner boundary, curvature data, subsolution and
/// cone offset. The boundary data `u₀` are the subsolution's trace on `∂K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub boundary: InnerBoundary,
    pub f: FSpec,
    pub subsolution: ExplicitSubsolution,
    /// `L` of the supersolution `|x| + L`; defaults to
    /// `max_{∂K}(u₀ − |x|) + 0.1`.
    #[serde(default)]
    pub cone_offset: Option<f64>,
}

impl ProblemSpec {
    /// `max_{∂K}(u₀ − |x|)` over a fine sampling of the boundary.
    pub fn boundary_excess(&self) -> f64 {
        self.boundary
            .sample(4096)
            .into_iter()
            .map(|r| self.subsolution.value_unchecked(r) - r)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn cone(&self) -> Result<ConeSupersolution, BarrierError> {
        let excess = self.boundary_excess();
        ConeSupersolution::new(self.cone_offset.unwrap_or(excess + 0.1), excess)
    }

    /// `sup_{|x| ≥ ρ₁} |u̲ − |x||`.
    pub fn subsolution_cone_gap(&self) -> f64 {
        let s = &self.subsolution;
        let top = -s.rho1 + s.shift;
        top.abs().max((top - s.psi_sup()).abs())
    }

    pub fn validate(&self) -> Result<(), ExteriorError> {
        self.f.validate()?;
        if self.f.n != 2 || self.subsolution.n != 2 {
            return Err(ExteriorError::Invalid(
                "the two-dimensional solver needs n = 2".into(),
            ));
        }
        let min_rho = self
            .boundary
            .sample(4096)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if self.subsolution.rho1 > min_rho * (1.0 + 1e-14) {
            return Err(ExteriorError::Invalid(format!(
                "subsolution rho1 = {} exceeds the smallest boundary radius {min_rho}",
                self.subsolution.rho1
            )));
        }
        self.cone()?;
        Ok(())
    }

    /// Dirichlet problem on `grid` with the subsolution as data and initializer.
    pub fn compact_problem(&self, grid: Arc<AnnulusGrid>) -> Result<CompactProblem, ExteriorError> {
        let init = self.subsolution.field(grid)?;
        Ok(CompactProblem::new(self.f.clone(), init, InitKind::Subsolution))
    }

    pub fn outer_extent(&self) -> f64 {
        self.boundary
            .sample(4096)
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn inner_extent(&self) -> f64 {
        self.boundary
            .sample(4096)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

/// How the grid is sized for each outer radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridPlan {
    pub n_theta: usize,
    /// Radial intervals per doubling of `R / min ρ`.
    pub per_octave: usize,
    pub stretching: Stretching,
}

impl Default for GridPlan {
    fn default() -> Self {
        Self {
            n_theta: 64,
            per_octave: 32,
            stretching: Stretching::Geometric,
        }
    }
}

impl GridPlan {
    pub fn radial_count(&self, inner: f64, outer: f64) -> usize {
        let n = (self.per_octave as f64 * (outer / inner).log2()).round() as usize;
        n.max(AnnulusGrid::MIN_RADIAL)
    }

    pub fn grid(&self, boundary: &InnerBoundary, inner: f64, outer: f64) -> Result<AnnulusGrid, GridError> {
        AnnulusGrid::new(
            boundary.clone(),
            outer,
            self.radial_count(inner, outer),
            self.n_theta,
            self.stretching,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorRun {
    pub problem: ProblemSpec,
    pub schedule: Vec<f64>,
    pub window: f64,
    pub tol_window: f64,
    pub grid: GridPlan,
    pub solver: SolverOptions,
    /// Solve all radii independently in parallel.
    #[serde(default)]
    pub parallel: bool,
}

impl ExteriorRun {
    pub fn new(problem: ProblemSpec, schedule: Vec<f64>, window: f64) -> Self {
        Self {
            problem,
            schedule,
            window,
            tol_window: 1e-4,
            grid: GridPlan::default(),
            solver: SolverOptions::default(),
            parallel: false,
        }
    }

    /// `R_k = base·2^k`, `k < count`.
    pub fn doubling(base: f64, count: usize) -> Vec<f64> {
        (0..count).map(|k| base * 2f64.powi(k as i32)).collect()
    }

    pub fn validate(&self) -> Result<(), ExteriorError> {
        self.problem.validate()?;
        let r0 = self.problem.outer_extent();
        let base = *self
            .schedule
            .first()
            .ok_or_else(|| ExteriorError::Invalid("empty schedule".into()))?;
        if !(base > 4.0 * r0) {
            return Err(ExteriorError::Invalid(format!(
                "first radius {base} must exceed 4·R0 = {}",
                4.0 * r0
            )));
        }
        if !self.schedule.windows(2).all(|w| w[1] > w[0]) {
            return Err(ExteriorError::Invalid("schedule must be strictly increasing".into()));
        }
        if !(self.window > r0 && self.window <= 0.5 * base) {
            return Err(ExteriorError::Invalid(format!(
                "window radius {} must lie in (R0, R_base/2] = ({r0}, {}]",
                self.window,
                0.5 * base
            )));
        }
        if !(self.tol_window > 0.0) {
            return Err(ExteriorError::Invalid("tol_window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichCheck {
    /// `min(u − u̲)`.
    pub lower_gap: f64,
    /// `max(u − |x| − L)`.
    pub upper_gap: f64,
    pub tol: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCheck {
    pub previous_radius: f64,
    /// `min (u^{R_k} − u^{R_{k−1}})` over the nodes of the smaller grid.
    pub min_increase: f64,
    pub tol: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub radius: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub mesh_width: f64,
    pub tol_cmp: f64,
    pub convergence: ConvergenceReport,
    pub sandwich: SandwichCheck,
    pub monotone: Option<MonotoneCheck>,
    /// `max_window |u^{R_k} − u^{R_{k−1}}|`.
    pub window_cauchy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeCheck {
    pub sup_deviation: f64,
    pub bound: f64,
    pub passes: bool,
}

/// Values on the window nodes `{|x| ≤ W}` of the first grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowField {
    pub grid: Arc<AnnulusGrid>,
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExteriorOutcome {
    pub solutions: Vec<ScalarField>,
    pub reports: Vec<RadiusReport>,
    pub window: WindowField,
    pub close_to_cone: ConeCheck,
    /// Index `k` at which `window_cauchy_error(k) ≤ tol_window` first held.
    pub converged_at: Option<usize>,
    pub window_radius: f64,
}

fn window_nodes(grid: &AnnulusGrid, w: f64) -> Vec<usize> {
    (0..grid.len())
        .filter(|&k| grid.radius(k) <= w * (1.0 + 1e-12))
        .collect()
}

impl ExteriorOutcome {
    pub fn radii(&self) -> Vec<f64> {
        self.solutions.iter().map(|s| s.grid().outer()).collect()
    }

    /// `max |u^{R_{k+1}} − u^{R_k}|` over the window nodes of the first grid.
    pub fn window_cauchy_error(&self, k: usize) -> Result<f64, ExteriorError> {
        window_cauchy(&self.solutions, &self.window.grid, self.window_radius, k)
    }
}

fn window_cauchy(
    solutions: &[ScalarField],
    base: &AnnulusGrid,
    w: f64,
    k: usize,
) -> Result<f64, ExteriorError> {
    if k + 1 >= solutions.len() {
        return Err(ExteriorError::MissingRadius(k));
    }
    for s in &solutions[k..=k + 1] {
        if w > s.grid().outer() {
            return Err(ExteriorError::WindowNotCovered {
                window: w,
                radius: s.grid().outer(),
            });
        }
    }
    let nodes = window_nodes(base, w);
    let a = solutions[k].sample_on_rays(base, nodes.iter().copied())?;
    let b = solutions[k + 1].sample_on_rays(base, nodes.iter().copied())?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

fn sandwich(u: &ScalarField, lower: &ScalarField, cone: &ConeSupersolution, tol: f64) -> SandwichCheck {
    let g = u.grid();
    let mut lower_gap = f64::INFINITY;
    let mut upper_gap = f64::NEG_INFINITY;
    for k in 0..g.len() {
        lower_gap = lower_gap.min(u.values()[k] - lower.values()[k]);
        upper_gap = upper_gap.max(u.values()[k] - cone.value(g.point(k)));
    }
    SandwichCheck {
        lower_gap,
        upper_gap,
        tol,
        passes: lower_gap >= -tol && upper_gap <= tol,
    }
}

fn solve_one(
    run: &ExteriorRun,
    radius: f64,
) -> Result<(ScalarField, ConvergenceReport), ExteriorError> {
    let p = &run.problem;
    let grid = Arc::new(run.grid.grid(&p.boundary, p.inner_extent(), radius)?);
    let prob = p.compact_problem(grid)?;
    info!(
        "solving R = {radius} on {}x{} nodes",
        prob.grid().n_r() + 1,
        prob.grid().n_theta()
    );
    solve_dirichlet(&prob, &run.solver).map_err(|source| ExteriorError::Solve { radius, source })
}

/// Solves the schedule, checking the sandwich at every radius and
/// monotonicity between consecutive radii. Stops after the first pair whose
/// window Cauchy error is at most `tol_window`.
pub fn solve_exterior(run: &ExteriorRun) -> Result<ExteriorOutcome, ExteriorError> {
    run.validate()?;
    let p = &run.problem;
    let cone = p.cone()?;
    let mut solved: Vec<(ScalarField, ConvergenceReport)> = Vec::new();
    if run.parallel {
        solved = run
            .schedule
            .par_iter()
            .map(|&r| solve_one(run, r))
            .collect::<Result<_, _>>()?;
    }
    let mut solutions: Vec<ScalarField> = Vec::new();
    let mut reports: Vec<RadiusReport> = Vec::new();
    let mut converged_at = None;
    let mut parallel_iter = solved.into_iter();
    for (k, &radius) in run.schedule.iter().enumerate() {
        let (u, conv) = if run.parallel {
            parallel_iter.next().expect("one result per radius")
        } else {
            solve_one(run, radius)?
        };
        let g = u.grid().clone();
        let tol = run.solver.tol_cmp(&g);
        let lower = p.subsolution.field(g.clone())?;
        let mut report = RadiusReport {
            radius,
            n_r: g.n_r(),
            n_theta: g.n_theta(),
            mesh_width: g.mesh_width(),
            tol_cmp: tol,
            convergence: conv,
            sandwich: sandwich(&u, &lower, &cone, tol),
            monotone: None,
            window_cauchy: None,
        };
        if let Some(prev) = solutions.last() {
            let pg = prev.grid();
            let tol = tol.max(reports.last().map_or(0.0, |r: &RadiusReport| r.tol_cmp));
            let fine = u.sample_on_rays(pg, 0..pg.len())?;
            let min_increase = fine
                .iter()
                .zip(prev.values())
                .map(|(a, b)| a - b)
                .fold(f64::INFINITY, f64::min);
            let check = MonotoneCheck {
                previous_radius: pg.outer(),
                min_increase,
                tol,
                passes: min_increase >= -tol,
            };
            if !check.passes {
                return Err(ExteriorError::Monotonicity {
                    coarse: pg.outer(),
                    fine: radius,
                    min_increase,
                    tol,
                });
            }
            report.monotone = Some(check);
        }
        solutions.push(u);
        if k > 0 {
            let base = solutions[0].grid().clone();
            let e = window_cauchy(&solutions, &base, run.window, k - 1)?;
            report.window_cauchy = Some(e);
            info!("R = {radius}: window Cauchy error {e:.3e}");
            if e <= run.tol_window && converged_at.is_none() {
                converged_at = Some(k - 1);
            }
        }
        reports.push(report);
        if converged_at.is_some() {
            break;
        }
    }
    let base = solutions[0].grid().clone();
    let nodes = window_nodes(&base, run.window);
    let last = solutions.last().expect("nonempty schedule");
    let values = last.sample_on_rays(&base, nodes.iter().copied())?;
    let tol = reports.last().map_or(0.0, |r| r.tol_cmp);
    let bound = cone.offset.abs().max(p.subsolution_cone_gap());
    let sup_deviation = nodes
        .iter()
        .zip(&values)
        .map(|(&k, v)| (v - base.radius(k)).abs())
        .fold(0.0, f64::max);
    Ok(ExteriorOutcome {
        close_to_cone: ConeCheck {
            sup_deviation,
            bound,
            passes: sup_deviation <= bound + tol,
        },
        window: WindowField {
            grid: base,
            nodes,
            values,
        },
        solutions,
        reports,
        converged_at,
        window_radius: run.window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial_problem() -> ProblemSpec {
        ProblemSpec {
            boundary: InnerBoundary::circle(1.0),
            f: FSpec::subsolution_bound(2, 1.0, 3.0),
            subsolution: ExplicitSubsolution::new(2, 1.0, 3.0).unwrap(),
            cone_offset: None,
        }
    }

    fn small_run() -> ExteriorRun {
        let mut run = ExteriorRun::new(radial_problem(), ExteriorRun::doubling(8.0, 3), 4.0);
        run.grid = GridPlan {
            n_theta: 16,
            per_octave: 8,
            stretching: Stretching::Geometric,
        };
        run.tol_window = 1e-12;
        run
    }

    #[test]
    fn validation_rules() {
        let mut run = small_run();
        run.schedule = vec![3.0, 6.0];
        assert!(matches!(run.validate(), Err(ExteriorError::Invalid(_))));
        let mut run = small_run();
        run.window = 5.0;
        assert!(run.validate().is_err());
        let mut run = small_run();
        run.schedule = vec![16.0, 8.0];
        assert!(run.validate().is_err());
        let mut p = radial_problem();
        p.cone_offset = Some(-2.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn monotone_sandwiched_sequence() {
        let run = small_run();
        let out = solve_exterior(&run).unwrap();
        assert_eq!(out.solutions.len(), 3);
        for r in &out.reports {
            assert!(r.sandwich.passes, "{:?}", r.sandwich);
        }
        for r in &out.reports[1..] {
            assert!(r.monotone.unwrap().passes);
        }
        let e0 = out.window_cauchy_error(0).unwrap();
        let e1 = out.window_cauchy_error(1).unwrap();
        assert!(e1 < e0, "{e0} {e1}");
        assert!(out.close_to_cone.passes);
        assert!(matches!(out.window_cauchy_error(2), Err(ExteriorError::MissingRadius(2))));
        let par = solve_exterior(&ExteriorRun {
            parallel: true,
            ..run
        })
        .unwrap();
        assert_eq!(par.window.values, out.window.values);
    }
}
