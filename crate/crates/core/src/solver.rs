//! Dirichlet problem `K[u] = f(x, u)` on a bounded annulus, solved by damped
//! Newton on the logarithmic residual
//! `log det D²u − 2·log(1 + |Du|²) − log f(x, u)` at interior nodes, with a
//! continuation in the right-hand side as fallback.

use std::sync::Arc;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banded::{BandError, BandMatrix};
use crate::barriers::{verify_subsolution, SubsolutionCheckOptions};
use crate::fields::{
    gauss_curvature, linearized_coefficients, FieldError, Jet, ScalarField,
};
use crate::fspec::{FSpec, FSpecError};
use crate::grid::AnnulusGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("iterate lost strict convexity at node {node} (smallest eigenvalue {min_eig:.3e})")]
    NotConvex { node: usize, min_eig: f64 },
    #[error("right-hand side not positive at node {node}: {value:.3e}")]
    NonPositiveRhs { node: usize, value: f64 },
    #[error("Newton stagnated at iteration {iteration}: residual {residual:.3e}, no admissible damping")]
    Stagnation { iteration: usize, residual: f64 },
    #[error("Newton did not converge in {iterations} iterations (residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("continuation step fell below {t_min:e} at t = {t}")]
    HomotopyStalled { t: f64, t_min: f64 },
    #[error("initial field is not a discrete subsolution: margin {margin:.3e} at node {node} (tolerance {tol:.3e})")]
    NotSubsolution { node: usize, margin: f64, tol: f64 },
    #[error("initial field differs from the Dirichlet data at boundary node {node} by {diff:.3e}")]
    BoundaryMismatch { node: usize, diff: f64 },
    #[error("Dirichlet data has {got} values, expected {expected}")]
    BoundaryLength { expected: usize, got: usize },
    #[error(transparent)]
    Data(#[from] FSpecError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Band(#[from] BandError),
}

/// Right-hand side of the curvature equation, evaluated node by node.
pub trait Rhs: Sync {
    /// `(f, ∂f/∂z)` at node `node`, position `x`, height `z`.
    fn eval(&self, node: usize, x: [f64; 2], z: f64) -> (f64, f64);
}

impl Rhs for FSpec {
    #[inline]
    fn eval(&self, _node: usize, x: [f64; 2], z: f64) -> (f64, f64) {
        FSpec::eval(self, x, z)
    }
}

/// Height-independent nodal data.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalRhs(pub Vec<f64>);

impl Rhs for NodalRhs {
    #[inline]
    fn eval(&self, node: usize, _x: [f64; 2], _z: f64) -> (f64, f64) {
        (self.0[node], 0.0)
    }
}

/// `(1 − t)·a + t·b`.
pub struct Blend<'a> {
    pub t: f64,
    pub a: &'a dyn Rhs,
    pub b: &'a dyn Rhs,
}

impl Rhs for Blend<'_> {
    #[inline]
    fn eval(&self, node: usize, x: [f64; 2], z: f64) -> (f64, f64) {
        let (fa, da) = self.a.eval(node, x, z);
        let (fb, db) = self.b.eval(node, x, z);
        (
            (1.0 - self.t) * fa + self.t * fb,
            (1.0 - self.t) * da + self.t * db,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Discrete subsolution, checked before solving.
    #[default]
    Subsolution,
    /// Glued subsolution; the continuation path is used directly.
    Glued,
    /// No ordering is assumed.
    Arbitrary,
}

/// Discrete Dirichlet problem. The Dirichlet data are stored as the inner
/// row followed by the outer row.
#[derive(Debug, Clone)]
pub struct CompactProblem {
    pub f: FSpec,
    pub init: ScalarField,
    pub init_kind: InitKind,
    dirichlet: Vec<f64>,
}

impl CompactProblem {
    /// Uses the boundary rows of `init` as Dirichlet data.
    pub fn new(f: FSpec, init: ScalarField, init_kind: InitKind) -> Self {
        let g = init.grid().clone();
        let dirichlet = g
            .inner_row()
            .chain(g.outer_row())
            .map(|k| init.values()[k])
            .collect();
        Self {
            f,
            init,
            init_kind,
            dirichlet,
        }
    }

    /// Explicit Dirichlet data; `init` must agree with it on both rows.
    pub fn with_boundary(
        f: FSpec,
        init: ScalarField,
        init_kind: InitKind,
        inner: &[f64],
        outer: &[f64],
    ) -> Result<Self, SolveError> {
        let g = init.grid().clone();
        let nt = g.n_theta();
        if inner.len() != nt || outer.len() != nt {
            return Err(SolveError::BoundaryLength {
                expected: nt,
                got: inner.len().min(outer.len()),
            });
        }
        let dirichlet: Vec<f64> = inner.iter().chain(outer).copied().collect();
        for (slot, k) in g.inner_row().chain(g.outer_row()).enumerate() {
            let diff = (init.values()[k] - dirichlet[slot]).abs();
            if diff > 1e-12 * dirichlet[slot].abs().max(1.0) {
                return Err(SolveError::BoundaryMismatch { node: k, diff });
            }
        }
        Ok(Self {
            f,
            init,
            init_kind,
            dirichlet,
        })
    }

    pub fn grid(&self) -> &Arc<AnnulusGrid> {
        self.init.grid()
    }

    pub fn dirichlet(&self) -> &[f64] {
        &self.dirichlet
    }

    fn boundary_slot(&self, node: usize) -> usize {
        let g = self.grid();
        let (i, j) = g.row_col(node);
        if i == 0 {
            j
        } else {
            g.n_theta() + j
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HomotopyOptions {
    pub initial_step: f64,
    pub min_step: f64,
    pub growth: f64,
    /// Fraction used when the start curvature must be lowered first.
    pub presolve_factor: f64,
}

impl Default for HomotopyOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.25,
            min_step: 1e-4,
            growth: 1.5,
            presolve_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol_newton: f64,
    pub conv_floor: f64,
    pub max_iterations: usize,
    pub max_halvings: u32,
    /// Comparison tolerance; `None` means `1e-8 + 10·h²`.
    pub tol_cmp: Option<f64>,
    pub check_subsolution: bool,
    pub homotopy: HomotopyOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_newton: 1e-10,
            conv_floor: 1e-8,
            max_iterations: 60,
            max_halvings: 20,
            tol_cmp: None,
            check_subsolution: true,
            homotopy: HomotopyOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn tol_cmp(&self, grid: &AnnulusGrid) -> f64 {
        self.tol_cmp.unwrap_or_else(|| {
            let h = grid.mesh_width();
            1e-8 + 10.0 * h * h
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Stopped at the rounding floor of the discrete residual.
    RoundoffLimited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct HomotopyReport {
    /// Accepted continuation parameters.
    pub t_values: Vec<f64>,
    pub rejected_steps: usize,
    /// Set when the start curvature was scaled down first.
    pub presolve_factor: Option<f64>,
    /// `min(u^t − lower)` after each accepted step, when a lower bound is known.
    pub lower_gaps: Vec<f64>,
    /// `max(u^t − u^{t_prev})` over accepted steps; the path is nonincreasing.
    pub max_increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub damping_history: Vec<f64>,
    pub min_eig_history: Vec<f64>,
    pub final_residual: f64,
    pub roundoff_floor: f64,
    pub used_homotopy: bool,
    pub homotopy: Option<HomotopyReport>,
    /// `min(u − init)`.
    pub init_gap: f64,
    pub tol_cmp: f64,
}

/// Per-node Newton state at interior nodes.
struct State {
    jets: Vec<Jet>,
    res: Vec<f64>,
    fz_over_f: Vec<f64>,
    norm: f64,
    min_eig: f64,
}

/// Position of interior node `(i, j)` in the unknown vector. Angles are
/// folded (`0, N−1, 1, N−2, …` interleaved) so that periodic neighbours
/// stay within `n_theta + 2` of each other.
#[inline]
fn unknown(grid: &AnnulusGrid, i: usize, j: usize) -> usize {
    let nt = grid.n_theta();
    let pos = if j < nt / 2 { 2 * j } else { 2 * (nt - 1 - j) + 1 };
    (i - 1) * nt + pos
}

fn evaluate_state(u: &ScalarField, rhs: &dyn Rhs) -> Result<State, SolveError> {
    let g = u.grid();
    let vals = u.values();
    let nodes = g.interior_nodes();
    let per: Vec<(Jet, f64, f64, f64)> = nodes
        .clone()
        .into_par_iter()
        .map(|k| {
            let jet = u.jet(k);
            let eig = jet.hess.min_eig();
            let (f, fz) = rhs.eval(k, g.point(k), vals[k]);
            let res = if jet.hess.is_positive_definite() && f > 0.0 {
                jet.hess.det().ln() - 2.0 * jet.grad_norm2().ln_1p() - f.ln()
            } else {
                f64::NAN
            };
            (jet, res, fz / f, eig.min(if f > 0.0 { f64::INFINITY } else { f }))
        })
        .collect();
    let mut st = State {
        jets: Vec::with_capacity(per.len()),
        res: Vec::with_capacity(per.len()),
        fz_over_f: Vec::with_capacity(per.len()),
        norm: 0.0,
        min_eig: f64::INFINITY,
    };
    for (off, (jet, res, q, eig)) in per.into_iter().enumerate() {
        let k = nodes.start + off;
        if !res.is_finite() {
            let (f, _) = rhs.eval(k, g.point(k), vals[k]);
            if !(f > 0.0) {
                return Err(SolveError::NonPositiveRhs { node: k, value: f });
            }
            return Err(SolveError::NotConvex {
                node: k,
                min_eig: jet.hess.min_eig(),
            });
        }
        st.norm = st.norm.max(res.abs());
        st.min_eig = st.min_eig.min(eig);
        st.jets.push(jet);
        st.res.push(res);
        st.fz_over_f.push(q);
    }
    Ok(st)
}

/// Jacobian on the interior unknowns plus the rounding floor
/// `16·ε·max_k Σ_j |J_kj|·|u_j|` (boundary neighbours included).
fn assemble(u: &ScalarField, st: &State) -> (BandMatrix, f64) {
    let g = u.grid();
    let nt = g.n_theta();
    let n_unk = (g.n_r() - 1) * nt;
    let bw = nt + 2;
    let mut m = BandMatrix::zeros(n_unk, bw, bw);
    let vals = u.values();
    let first = g.interior_nodes().start;
    let mut floor: f64 = 0.0;
    for k in g.interior_nodes() {
        let (i, j) = g.row_col(k);
        let row = unknown(g, i, j);
        let c = linearized_coefficients(g.metric(k), &st.jets[k - first]);
        let q = st.fz_over_f[k - first];
        let mut sum = (q * vals[k]).abs();
        for &(di, dj, w) in g.row_kind(i).stencil() {
            let coef: f64 = c.iter().zip(w).map(|(a, b)| a * b).sum();
            let nb = g.neighbour(i, j, di, dj);
            sum += (coef * vals[nb]).abs();
            let (ni, nj) = g.row_col(nb);
            if ni > 0 && ni < g.n_r() {
                m.add(row, unknown(g, ni, nj), coef).expect("stencil within band");
            }
        }
        m.add(row, row, -q).expect("diagonal");
        floor = floor.max(sum);
    }
    (m, 16.0 * f64::EPSILON * floor)
}

/// Residual of the discrete problem: the logarithmic curvature mismatch at
/// interior nodes and `u − g` on the two boundary rows.
pub fn evaluate_residual(u: &ScalarField, prob: &CompactProblem) -> Result<ScalarField, SolveError> {
    evaluate_residual_with(u, prob, &prob.f)
}

fn evaluate_residual_with(
    u: &ScalarField,
    prob: &CompactProblem,
    rhs: &dyn Rhs,
) -> Result<ScalarField, SolveError> {
    if !u.same_grid(&prob.init) {
        return Err(FieldError::GridMismatch.into());
    }
    let st = evaluate_state(u, rhs)?;
    let g = u.grid();
    let mut out = vec![0.0; g.len()];
    let first = g.interior_nodes().start;
    for k in g.interior_nodes() {
        out[k] = st.res[k - first];
    }
    for k in g.inner_row().chain(g.outer_row()) {
        out[k] = u.values()[k] - prob.dirichlet[prob.boundary_slot(k)];
    }
    Ok(ScalarField::new(g.clone(), out)?)
}

/// Directional derivative of [`evaluate_residual`] at `u` along `w`:
/// `L w − (f_z/f)·w` inside, `w` on the boundary rows.
pub fn evaluate_jacobian_action(
    u: &ScalarField,
    w: &ScalarField,
    prob: &CompactProblem,
) -> Result<ScalarField, SolveError> {
    if !u.same_grid(w) || !u.same_grid(&prob.init) {
        return Err(FieldError::GridMismatch.into());
    }
    let st = evaluate_state(u, &prob.f)?;
    let g = u.grid();
    let first = g.interior_nodes().start;
    let mut out = w.values().to_vec();
    for k in g.interior_nodes() {
        let c = linearized_coefficients(g.metric(k), &st.jets[k - first]);
        let d = g.index_derivatives(w.values(), k);
        let lw: f64 = c.iter().zip(d).map(|(a, b)| a * b).sum();
        out[k] = lw - st.fz_over_f[k - first] * w.values()[k];
    }
    Ok(ScalarField::new(g.clone(), out)?)
}

/// The assembled Newton matrix applied to `w` restricted to interior nodes
/// (boundary entries of `w` are ignored and returned as zero).
pub fn assembled_jacobian_action(
    u: &ScalarField,
    w: &ScalarField,
    prob: &CompactProblem,
) -> Result<ScalarField, SolveError> {
    let st = evaluate_state(u, &prob.f)?;
    let g = u.grid();
    let (m, _) = assemble(u, &st);
    let mut x = vec![0.0; m.dim()];
    for k in g.interior_nodes() {
        let (i, j) = g.row_col(k);
        x[unknown(g, i, j)] = w.values()[k];
    }
    let y = m.mul_vec(&x);
    let mut out = vec![0.0; g.len()];
    for k in g.interior_nodes() {
        let (i, j) = g.row_col(k);
        out[k] = y[unknown(g, i, j)];
    }
    Ok(ScalarField::new(g.clone(), out)?)
}

/// Curvature of `u` evaluated only where the equation is imposed.
fn interior_curvature(u: &ScalarField) -> Vec<f64> {
    let k = gauss_curvature(u);
    let mut out = k.into_values();
    for v in out.iter_mut().take(u.grid().n_theta()) {
        *v = f64::NAN;
    }
    let start = u.grid().outer_row().start;
    for v in out.iter_mut().skip(start) {
        *v = f64::NAN;
    }
    out
}

struct NewtonLog<'a> {
    report: &'a mut ConvergenceReport,
}

fn newton(
    mut u: ScalarField,
    rhs: &dyn Rhs,
    opts: &SolverOptions,
    log: &mut NewtonLog<'_>,
) -> Result<ScalarField, SolveError> {
    let g = u.grid().clone();
    let mut st = evaluate_state(&u, rhs)?;
    for it in 0..opts.max_iterations {
        let (m, floor) = assemble(&u, &st);
        log.report.roundoff_floor = floor;
        log.report.residual_history.push(st.norm);
        log.report.min_eig_history.push(st.min_eig);
        log.report.final_residual = st.norm;
        let target = opts.tol_newton.max(floor);
        debug!("newton it {it}: |res| = {:.3e} (target {target:.3e}), min eig {:.3e}", st.norm, st.min_eig);
        if st.norm <= target {
            log.report.status = if st.norm <= opts.tol_newton {
                SolveStatus::Converged
            } else {
                SolveStatus::RoundoffLimited
            };
            return Ok(u);
        }
        let lu = m.factor()?;
        let mut rhs_vec = vec![0.0; lu_dim(&g)];
        let first = g.interior_nodes().start;
        for k in g.interior_nodes() {
            let (i, j) = g.row_col(k);
            rhs_vec[unknown(&g, i, j)] = -st.res[k - first];
        }
        lu.solve(&mut rhs_vec);
        log.report.iterations += 1;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial = u.clone();
            {
                let v = trial.values_mut();
                for k in g.interior_nodes() {
                    let (i, j) = g.row_col(k);
                    v[k] += alpha * rhs_vec[unknown(&g, i, j)];
                }
            }
            if let Ok(ts) = evaluate_state(&trial, rhs) {
                let enough = ts.norm <= (1.0 - 0.25 * alpha) * st.norm;
                if ts.min_eig >= opts.conv_floor && enough {
                    accepted = Some((trial, ts));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, ts)) => {
                log.report.damping_history.push(alpha);
                u = trial;
                st = ts;
            }
            None => {
                // near the rounding floor no damping can make progress
                if st.norm <= 100.0 * target {
                    log.report.status = SolveStatus::RoundoffLimited;
                    return Ok(u);
                }
                return Err(SolveError::Stagnation {
                    iteration: it,
                    residual: st.norm,
                });
            }
        }
    }
    let (_, floor) = assemble(&u, &st);
    if st.norm <= opts.tol_newton.max(floor) {
        log.report.residual_history.push(st.norm);
        log.report.final_residual = st.norm;
        log.report.status = SolveStatus::RoundoffLimited;
        return Ok(u);
    }
    Err(SolveError::MaxIterations {
        iterations: opts.max_iterations,
        residual: st.norm,
    })
}

fn lu_dim(g: &AnnulusGrid) -> usize {
    (g.n_r() - 1) * g.n_theta()
}

fn empty_report(tol_cmp: f64) -> ConvergenceReport {
    ConvergenceReport {
        status: SolveStatus::Converged,
        iterations: 0,
        residual_history: Vec::new(),
        damping_history: Vec::new(),
        min_eig_history: Vec::new(),
        final_residual: f64::NAN,
        roundoff_floor: 0.0,
        used_homotopy: false,
        homotopy: None,
        init_gap: f64::NAN,
        tol_cmp,
    }
}

fn min_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x - y)
        .fold(f64::INFINITY, f64::min)
}

/// Continuation from `start` (which solves the problem for `a`) to `b`.
fn continuation(
    start: ScalarField,
    a: &dyn Rhs,
    b: &dyn Rhs,
    lower: Option<&ScalarField>,
    opts: &SolverOptions,
    report: &mut ConvergenceReport,
    hr: &mut HomotopyReport,
) -> Result<ScalarField, SolveError> {
    let ho = &opts.homotopy;
    let mut t = 0.0;
    let mut dt = ho.initial_step;
    let mut streak = 0;
    let mut u = start;
    while t < 1.0 {
        let t_next = (t + dt).min(1.0);
        let blend = Blend { t: t_next, a, b };
        let mut log = NewtonLog { report };
        match newton(u.clone(), &blend, opts, &mut log) {
            Ok(next) => {
                hr.max_increase = hr.max_increase.max(-min_diff(&u, &next));
                if let Some(l) = lower {
                    hr.lower_gaps.push(min_diff(&next, l));
                }
                hr.t_values.push(t_next);
                debug!("continuation accepted t = {t_next:.4}");
                u = next;
                t = t_next;
                streak += 1;
                if streak >= 2 {
                    dt *= ho.growth;
                    streak = 0;
                }
            }
            Err(e) => {
                debug!("continuation step to t = {t_next:.4} rejected: {e}");
                hr.rejected_steps += 1;
                streak = 0;
                dt *= 0.5;
                if dt < ho.min_step {
                    return Err(SolveError::HomotopyStalled {
                        t,
                        t_min: ho.min_step,
                    });
                }
            }
        }
    }
    Ok(u)
}

/// Solves the problem by continuation in the right-hand side starting from
/// `prob.init = w`: first `K[u] = K[w]` (solved by `w` itself), then
/// `K[u^t] = (1 − t)·K[w] + t·f(x, u^t)`. When `K[w] < f(x, lower)` fails
/// somewhere, the start curvature is first scaled down by continuation to
/// `c·K[w]` with `c = presolve_factor·min(f(x, lower)/K[w])`.
pub fn homotopy_solve(
    prob: &CompactProblem,
    lower: Option<&ScalarField>,
    opts: &SolverOptions,
) -> Result<(ScalarField, ConvergenceReport), SolveError> {
    prob.f.validate()?;
    let g = prob.grid().clone();
    let tol_cmp = opts.tol_cmp(&g);
    let mut report = empty_report(tol_cmp);
    report.used_homotopy = true;
    let mut hr = HomotopyReport::default();
    let u = homotopy_inner(prob, lower, opts, &mut report, &mut hr)?;
    report.init_gap = min_diff(&u, &prob.init);
    report.homotopy = Some(hr);
    Ok((u, report))
}

fn homotopy_inner(
    prob: &CompactProblem,
    lower: Option<&ScalarField>,
    opts: &SolverOptions,
    report: &mut ConvergenceReport,
    hr: &mut HomotopyReport,
) -> Result<ScalarField, SolveError> {
    let g = prob.grid().clone();
    let w = &prob.init;
    let kw = interior_curvature(w);
    for k in g.interior_nodes() {
        if !(kw[k] > 0.0) {
            return Err(SolveError::NotConvex {
                node: k,
                min_eig: w.jet(k).hess.min_eig(),
            });
        }
    }
    let reference = lower.unwrap_or(w);
    let ratio = g
        .interior_nodes()
        .map(|k| prob.f.eval(g.point(k), reference.values()[k]).0 / kw[k])
        .fold(f64::INFINITY, f64::min);
    let start_rhs = NodalRhs(kw.clone());
    let mut start = w.clone();
    let mut base = start_rhs.clone();
    if prob.init_kind == InitKind::Glued && !(ratio > 1.0) {
        let c = opts.homotopy.presolve_factor * ratio;
        info!("start curvature exceeds f somewhere; scaling by {c:.3e} first");
        hr.presolve_factor = Some(c);
        let small = NodalRhs(kw.iter().map(|v| c * v).collect());
        start = continuation(start, &start_rhs, &small, lower, opts, report, hr)?;
        base = small;
        hr.t_values.clear();
        hr.lower_gaps.clear();
        hr.max_increase = 0.0;
    }
    continuation(start, &base, &prob.f, lower, opts, report, hr)
}

/// Solves the discrete Dirichlet problem by damped Newton from `prob.init`,
/// falling back to continuation when Newton stagnates.
pub fn solve_dirichlet(
    prob: &CompactProblem,
    opts: &SolverOptions,
) -> Result<(ScalarField, ConvergenceReport), SolveError> {
    prob.f.validate()?;
    let g = prob.grid().clone();
    let tol_cmp = opts.tol_cmp(&g);
    if prob.init_kind == InitKind::Glued {
        return homotopy_solve(prob, None, opts);
    }
    if prob.init_kind == InitKind::Subsolution && opts.check_subsolution {
        let rep = verify_subsolution(
            &prob.init,
            &prob.f,
            &SubsolutionCheckOptions {
                tol_disc: None,
                conv_floor: opts.conv_floor,
                include_boundary_rows: false,
            },
        );
        if rep.min_margin < -rep.tol_disc {
            return Err(SolveError::NotSubsolution {
                node: rep.worst_node,
                margin: rep.min_margin,
                tol: rep.tol_disc,
            });
        }
        if rep.min_eig < opts.conv_floor {
            return Err(SolveError::NotConvex {
                node: rep.min_eig_node,
                min_eig: rep.min_eig,
            });
        }
    }
    let mut report = empty_report(tol_cmp);
    let result = {
        let mut log = NewtonLog {
            report: &mut report,
        };
        newton(prob.init.clone(), &prob.f, opts, &mut log)
    };
    let u = match result {
        Ok(u) => u,
        Err(e @ (SolveError::Stagnation { .. } | SolveError::MaxIterations { .. })) => {
            info!("Newton failed ({e}); switching to continuation");
            report.used_homotopy = true;
            let mut hr = HomotopyReport::default();
            let kw = NodalRhs(interior_curvature(&prob.init));
            let u = continuation(prob.init.clone(), &kw, &prob.f, None, opts, &mut report, &mut hr)?;
            report.homotopy = Some(hr);
            u
        }
        Err(e) => return Err(e),
    };
    report.init_gap = min_diff(&u, &prob.init);
    Ok((u, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::ExplicitSubsolution;
    use crate::grid::{InnerBoundary, Stretching};
    use crate::radial::{solve_radial_bvp, RadialOptions};
    use crate::grid::RadialGrid;

    fn grid(n_r: usize, n_t: usize, outer: f64) -> Arc<AnnulusGrid> {
        Arc::new(
            AnnulusGrid::new(InnerBoundary::circle(1.0), outer, n_r, n_t, Stretching::Geometric)
                .unwrap(),
        )
    }

    fn problem(g: Arc<AnnulusGrid>) -> CompactProblem {
        let s = ExplicitSubsolution::new(2, 1.0, 3.0).unwrap();
        let init = s.field(g).unwrap();
        CompactProblem::new(FSpec::subsolution_bound(2, 1.0, 3.0), init, InitKind::Subsolution)
    }

    #[test]
    fn unknown_ordering_is_a_bijection_with_small_band() {
        let g = grid(6, 16, 4.0);
        let mut seen = vec![false; lu_dim(&g)];
        for k in g.interior_nodes() {
            let (i, j) = g.row_col(k);
            let a = unknown(&g, i, j);
            assert!(!seen[a]);
            seen[a] = true;
            for nb in g.ring(k) {
                let (ni, nj) = g.row_col(nb);
                if ni > 0 && ni < g.n_r() {
                    let b = unknown(&g, ni, nj);
                    assert!(a.abs_diff(b) <= g.n_theta() + 2);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = grid(12, 16, 4.0);
        let prob = problem(g.clone());
        let u = prob.init.clone();
        let w = ScalarField::from_fn(g.clone(), |p| (0.7 * p[0]).sin() * (0.3 * p[1]).cos()).unwrap();
        let mut wi = w.clone();
        for k in g.inner_row().chain(g.outer_row()) {
            wi.values_mut()[k] = 0.0;
        }
        let jw = evaluate_jacobian_action(&u, &wi, &prob).unwrap();
        let aw = assembled_jacobian_action(&u, &wi, &prob).unwrap();
        let eps = 1e-6;
        let rp = evaluate_residual(&u.zip_with(&wi, |a, b| a + eps * b).unwrap(), &prob).unwrap();
        let rm = evaluate_residual(&u.zip_with(&wi, |a, b| a - eps * b).unwrap(), &prob).unwrap();
        for k in g.interior_nodes() {
            let fd = (rp.values()[k] - rm.values()[k]) / (2.0 * eps);
            let scale = jw.values()[k].abs().max(1.0);
            assert!((fd - jw.values()[k]).abs() <= 1e-6 * scale, "{k}: {fd} vs {}", jw.values()[k]);
            assert!((aw.values()[k] - jw.values()[k]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn solves_radial_problem_and_matches_oracle() {
        let g = grid(32, 16, 4.0);
        let prob = problem(g.clone());
        let (u, rep) = solve_dirichlet(&prob, &Default::default()).unwrap();
        assert!(!rep.used_homotopy);
        assert!(rep.init_gap >= -rep.tol_cmp);
        let s = ExplicitSubsolution::new(2, 1.0, 3.0).unwrap();
        let rg = RadialGrid::new(2, 1.0, 4.0, 4096, Stretching::Geometric).unwrap();
        let prof = solve_radial_bvp(
            &prob.f,
            &rg,
            s.value_unchecked(1.0),
            s.value_unchecked(4.0),
            &RadialOptions::default(),
        )
        .unwrap();
        let err = (0..g.len())
            .map(|k| (u.values()[k] - prof.value_at(g.radius(k)).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-2, "{err}");
        // the solution lies above the subsolution and below the cone
        for k in 0..g.len() {
            assert!(u.values()[k] <= g.radius(k) + 1e-9);
        }
    }

    #[test]
    fn continuation_reaches_the_newton_solution() {
        let g = grid(16, 16, 4.0);
        let prob = problem(g.clone());
        let (a, _) = solve_dirichlet(&prob, &Default::default()).unwrap();
        let kw = NodalRhs(interior_curvature(&prob.init));
        let mut report = empty_report(1e-8);
        let mut hr = HomotopyReport::default();
        let b = continuation(prob.init.clone(), &kw, &prob.f, None, &Default::default(), &mut report, &mut hr)
            .unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-9);
        assert_eq!(*hr.t_values.last().unwrap(), 1.0);
    }

    #[test]
    fn rejects_non_subsolution_and_boundary_mismatch() {
        let g = grid(16, 32, 4.0);
        let s = ExplicitSubsolution::new(2, 1.0, 3.0).unwrap();
        let init = s.field(g.clone()).unwrap();
        let prob = CompactProblem::new(FSpec::radial_power(2, 5.0, 4.0), init.clone(), InitKind::Subsolution);
        assert!(matches!(
            solve_dirichlet(&prob, &Default::default()),
            Err(SolveError::NotSubsolution { .. })
        ));
        let nt = g.n_theta();
        let err = CompactProblem::with_boundary(
            FSpec::radial_power(2, 0.1, 4.0),
            init,
            InitKind::Subsolution,
            &vec![0.0; nt],
            &vec![0.0; nt],
        )
        .unwrap_err();
        assert!(matches!(err, SolveError::BoundaryMismatch { .. }));
    }
}
