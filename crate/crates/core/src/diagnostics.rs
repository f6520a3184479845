//! Read-only audits of computed solutions: decay of first and second
//! derivatives near the outer boundary as `R` grows, the interior
//! second-derivative test function, and the boundary barriers `ϑ`, `Θ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barriers::ExplicitSubsolution;
use crate::fields::{linearized_apply_at, FieldError, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("need at least {min} radii, got {got}")]
    TooFewRadii { min: usize, got: usize },
    #[error("degenerate fit: all radii equal")]
    Degenerate,
    #[error("non-positive value {value} at R = {radius} cannot be fitted in log scale")]
    NonPositive { radius: f64, value: f64 },
    #[error("barrier region reaches the inner boundary (node {node})")]
    RegionOutsideGrid { node: usize },
    #[error("node {0} is not on the outer boundary row")]
    NotOuterNode(usize),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Least-squares line through `(log R, log value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Returns `None` when every value is zero (nothing to fit, trivially decaying).
pub fn fit_loglog_slope(pairs: &[(f64, f64)]) -> Result<Option<SlopeFit>, DiagError> {
    if pairs.len() < 3 {
        return Err(DiagError::TooFewRadii {
            min: 3,
            got: pairs.len(),
        });
    }
    if pairs.iter().all(|&(_, v)| v == 0.0) {
        return Ok(None);
    }
    if let Some(&(radius, value)) = pairs.iter().find(|&&(_, v)| !(v > 0.0)) {
        return Err(DiagError::NonPositive { radius, value });
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return Err(DiagError::Degenerate);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(Some(SlopeFit {
        slope,
        intercept: my - slope * mx,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    /// `sup |∇_τ u|` on `R/2 ≤ |x| ≤ R`, expected `O(R^{−1/2})`.
    TangentialGradient,
    /// `sup |∇_ν(u − u̲)|` on `R/2 ≤ |x| ≤ R`, expected `O(R^{−1})`.
    NormalGradient,
    /// `sup |u_ττ − |x|_ττ|` on `∂B_R`, expected `O(R^{−2})`.
    TangentialSecond,
    /// `sup |u_τν|` on `∂B_R`, expected `O(R^{−1/2})`.
    MixedSecond,
    /// `sup |u_νν|` on `∂B_R`, expected bounded.
    DoubleNormal,
}

impl Estimate {
    pub fn target(self) -> f64 {
        match self {
            Estimate::TangentialGradient | Estimate::MixedSecond => -0.5,
            Estimate::NormalGradient => -1.0,
            Estimate::TangentialSecond => -2.0,
            Estimate::DoubleNormal => 0.0,
        }
    }

    pub fn default_slack(self) -> f64 {
        match self {
            Estimate::TangentialGradient => 0.15,
            Estimate::NormalGradient | Estimate::MixedSecond => 0.2,
            Estimate::TangentialSecond => 0.3,
            Estimate::DoubleNormal => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditOptions {
    /// Measured sups at or below this are treated as exact zeros.
    pub zero_floor: f64,
    /// Allowed growth of `sup |u_νν|` from the smallest to the largest radius.
    pub bounded_factor: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            zero_floor: 1e-12,
            bounded_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayAudit {
    pub estimate: Estimate,
    pub radii: Vec<f64>,
    /// Raw sups per radius.
    pub values: Vec<f64>,
    /// `R^{−target}·value`, which should stay bounded.
    pub scaled: Vec<f64>,
    pub fit: Option<SlopeFit>,
    pub target: f64,
    pub slack: f64,
    /// Largest over smallest radius value (boundedness audits).
    pub growth: Option<f64>,
    pub trivial: bool,
    pub passes: bool,
}

fn decay_audit(
    estimate: Estimate,
    radii: Vec<f64>,
    values: Vec<f64>,
    opts: &AuditOptions,
) -> Result<DecayAudit, DiagError> {
    let values: Vec<f64> = values
        .into_iter()
        .map(|v| if v <= opts.zero_floor { 0.0 } else { v })
        .collect();
    let target = estimate.target();
    let slack = estimate.default_slack();
    let scaled = radii
        .iter()
        .zip(&values)
        .map(|(r, v)| v * r.powf(-target))
        .collect();
    let pairs: Vec<(f64, f64)> = radii.iter().copied().zip(values.iter().copied()).collect();
    let trivial_all = values.iter().all(|&v| v == 0.0);
    let fit = if trivial_all {
        fit_loglog_slope(&pairs)?
    } else if values.iter().any(|&v| v == 0.0) {
        // mixed zeros: fit the positive part only when enough remain
        let pos: Vec<(f64, f64)> = pairs.iter().copied().filter(|p| p.1 > 0.0).collect();
        if pos.len() >= 3 {
            fit_loglog_slope(&pos)?
        } else {
            None
        }
    } else {
        fit_loglog_slope(&pairs)?
    };
    let (growth, passes) = if estimate == Estimate::DoubleNormal {
        let first = values[0];
        let last = *values.last().unwrap();
        let growth = if first > 0.0 { last / first } else if last == 0.0 { 0.0 } else { f64::INFINITY };
        (Some(growth), growth <= opts.bounded_factor)
    } else {
        let ok = match fit {
            Some(f) => f.slope <= target + slack,
            // too few nonzero sups to fit: accept only if the quantity vanished at the largest radius
            None => values.last() == Some(&0.0),
        };
        (None, ok)
    };
    Ok(DecayAudit {
        estimate,
        radii,
        values,
        scaled,
        fit,
        target,
        slack,
        growth,
        trivial: trivial_all,
        passes,
    })
}

#[inline]
fn frame(x: [f64; 2]) -> ([f64; 2], [f64; 2]) {
    let r = x[0].hypot(x[1]);
    let nu = [x[0] / r, x[1] / r];
    (nu, [-nu[1], nu[0]])
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn check_radii(solutions: &[ScalarField]) -> Result<Vec<f64>, DiagError> {
    if solutions.len() < 3 {
        return Err(DiagError::TooFewRadii {
            min: 3,
            got: solutions.len(),
        });
    }
    Ok(solutions.iter().map(|u| u.grid().outer()).collect())
}

fn minus_subsolution(u: &ScalarField, sub: &ExplicitSubsolution) -> Result<ScalarField, FieldError> {
    let lower = ScalarField::from_radial(u.grid().clone(), |r| sub.value_unchecked(r))?;
    u.sub(&lower)
}

/// Per-radius `(sup |∇_τ u|, sup |∇_ν(u − u̲)|)` over `R/2 ≤ |x| ≤ R`.
pub fn c1_sups(u: &ScalarField, sub: &ExplicitSubsolution) -> Result<(f64, f64), DiagError> {
    let v = minus_subsolution(u, sub)?;
    let g = u.grid();
    let r_out = g.outer();
    let (mut tan, mut nor) = (0.0f64, 0.0f64);
    for k in 0..g.len() {
        if g.radius(k) < 0.5 * r_out {
            continue;
        }
        let (nu, tau) = frame(g.point(k));
        let grad = v.jet(k).grad;
        // the subsolution is radial, so ∇_τ u = ∇_τ (u − u̲)
        tan = tan.max(dot(grad, tau).abs());
        nor = nor.max(dot(grad, nu).abs());
    }
    Ok((tan, nor))
}

/// First-derivative decay audits: `[tangential, normal]`.
pub fn c1_decay_audit(
    solutions: &[ScalarField],
    sub: &ExplicitSubsolution,
    opts: &AuditOptions,
) -> Result<[DecayAudit; 2], DiagError> {
    let radii = check_radii(solutions)?;
    let sups = solutions
        .iter()
        .map(|u| c1_sups(u, sub))
        .collect::<Result<Vec<_>, _>>()?;
    Ok([
        decay_audit(
            Estimate::TangentialGradient,
            radii.clone(),
            sups.iter().map(|s| s.0).collect(),
            opts,
        )?,
        decay_audit(
            Estimate::NormalGradient,
            radii,
            sups.iter().map(|s| s.1).collect(),
            opts,
        )?,
    ])
}

/// Per-radius `(sup |u_ττ − 1/R|, sup |u_τν|, sup |u_νν|)` on the outer row,
/// with one-sided radial stencils.
pub fn c2_sups(u: &ScalarField, sub: &ExplicitSubsolution) -> Result<(f64, f64, f64), DiagError> {
    let g = u.grid();
    let cone_dev = u.zip_with(&ScalarField::from_radial(g.clone(), |r| r)?, |a, b| a - b)?;
    let v = minus_subsolution(u, sub)?;
    let (mut tt, mut tn, mut nn) = (0.0f64, 0.0f64, 0.0f64);
    for k in g.outer_row() {
        let x = g.point(k);
        let (nu, tau) = frame(x);
        let h1 = cone_dev.jet(k).hess;
        let h2 = v.jet(k).hess;
        tt = tt.max(h1.quad(tau).abs());
        tn = tn.max(h2.bilinear(tau, nu).abs());
        nn = nn.max((h2.quad(nu) + sub.phi(g.radius(k))).abs());
    }
    Ok((tt, tn, nn))
}

/// Second-derivative audits at the outer boundary:
/// `[tangential, mixed, double normal]`.
pub fn c2_boundary_audit(
    solutions: &[ScalarField],
    sub: &ExplicitSubsolution,
    opts: &AuditOptions,
) -> Result<[DecayAudit; 3], DiagError> {
    let radii = check_radii(solutions)?;
    let sups = solutions
        .iter()
        .map(|u| c2_sups(u, sub))
        .collect::<Result<Vec<_>, _>>()?;
    Ok([
        decay_audit(
            Estimate::TangentialSecond,
            radii.clone(),
            sups.iter().map(|s| s.0).collect(),
            opts,
        )?,
        decay_audit(
            Estimate::MixedSecond,
            radii.clone(),
            sups.iter().map(|s| s.1).collect(),
            opts,
        )?,
        decay_audit(
            Estimate::DoubleNormal,
            radii,
            sups.iter().map(|s| s.2).collect(),
            opts,
        )?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WAudit {
    pub beta: f64,
    pub interior_max: f64,
    pub interior_node: usize,
    pub boundary_max: f64,
    pub boundary_node: usize,
    /// `interior_max − boundary_max`.
    pub gap: f64,
    pub gap_tol: f64,
    pub passes: bool,
}

/// `w = β/2·|Du|² + log λ_max(D²u)`, the maximum over directions of
/// `β/2·|Du|² + log u_ξξ`; compares interior and boundary-row maxima.
pub fn interior_w_audit(u: &ScalarField, beta: f64, gap_tol: f64) -> Result<WAudit, DiagError> {
    let g = u.grid();
    let (mut imax, mut inode) = (f64::NEG_INFINITY, 0);
    let (mut bmax, mut bnode) = (f64::NEG_INFINITY, 0);
    for k in 0..g.len() {
        let jet = u.jet(k);
        let (lo, hi) = jet.hess.eigenvalues();
        if !(lo > 0.0) {
            return Err(FieldError::NotConvex { node: k, min_eig: lo }.into());
        }
        let w = 0.5 * beta * jet.grad_norm2() + hi.ln();
        if g.is_boundary_row(k) {
            if w > bmax {
                bmax = w;
                bnode = k;
            }
        } else if w > imax {
            imax = w;
            inode = k;
        }
    }
    let gap = imax - bmax;
    Ok(WAudit {
        beta,
        interior_max: imax,
        interior_node: inode,
        boundary_max: bmax,
        boundary_node: bnode,
        gap,
        gap_tol,
        passes: gap <= gap_tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaAudit {
    pub radius: f64,
    pub x0: [f64; 2],
    pub delta: f64,
    pub tol: f64,
    pub region_nodes: usize,
    pub boundary_nodes: usize,
    /// Calibrated `A` (smallest power of two with `Θ± ≥ −tol` on `∂Ω_δ`).
    pub a: f64,
    pub min_vartheta_boundary: f64,
    pub min_theta_boundary: f64,
    pub max_l_theta: f64,
    pub max_l_vartheta: f64,
    pub theta_at_x0: f64,
    /// `ϑ_ν(x₀)` and `|(T(u − u̲))_ν|(x₀)` with `ν = −x₀/|x₀|`.
    pub vartheta_nu: f64,
    pub t_nu: f64,
    /// `√R·sup_{Ω_δ} |T(u − u̲)|`.
    pub scaled_t_sup: f64,
    /// `sup R²·|T(u − u̲)|/|x − x₀|²` over outer-row nodes of `Ω_δ`.
    pub boundary_quadratic_c: f64,
    pub vartheta_nonneg: bool,
    pub theta_nonneg: bool,
    pub l_theta_nonpos: bool,
    pub theta_x0_zero: bool,
    pub mixed_bound: bool,
    pub passes: bool,
}

/// Evaluates the barriers of the mixed-derivative argument near the outer
/// boundary point `x0` (an outer-row node) on `Ω_δ = B_δ(x₀) ∩ B_R`,
/// `δ = R^{3/4}`. With `a = None` the constant `A` is calibrated.
pub fn theta_barrier_audit(
    u: &ScalarField,
    sub: &ExplicitSubsolution,
    x0_node: usize,
    a: Option<f64>,
) -> Result<ThetaAudit, DiagError> {
    let g = u.grid().clone();
    if !g.outer_row().contains(&x0_node) {
        return Err(DiagError::NotOuterNode(x0_node));
    }
    let r = g.outer();
    let delta = r.powf(0.75);
    let h = g.mesh_width();
    let tol = 50.0 * h * h;
    let x0 = g.point(x0_node);
    let nu_out = [x0[0] / r, x0[1] / r];
    let tau0 = [-nu_out[1], nu_out[0]];
    let dist2 = |k: usize| {
        let p = g.point(k);
        (p[0] - x0[0]).powi(2) + (p[1] - x0[1]).powi(2)
    };
    let inside: Vec<bool> = (0..g.len()).map(|k| dist2(k) < delta * delta).collect();
    if let Some(node) = g.inner_row().find(|&k| inside[k]) {
        return Err(DiagError::RegionOutsideGrid { node });
    }
    let outer_row = g.outer_row();
    let on_boundary = |k: usize| inside[k] && (outer_row.contains(&k) || g.ring(k).any(|m| !inside[m]));
    let region: Vec<usize> = (0..g.len()).filter(|&k| inside[k]).collect();
    let bnodes: Vec<usize> = region.iter().copied().filter(|&k| on_boundary(k)).collect();
    let inodes: Vec<usize> = region.iter().copied().filter(|&k| !on_boundary(k)).collect();

    let v = minus_subsolution(u, sub)?;
    let tv_vals: Vec<f64> = (0..g.len())
        .map(|k| {
            let grad = v.jet(k).grad;
            let xt = dot(g.point(k), tau0);
            dot(grad, tau0) - xt / r * dot(grad, nu_out)
        })
        .collect();
    let tv = ScalarField::new(g.clone(), tv_vals)?;
    let vt_vals: Vec<f64> = (0..g.len())
        .map(|k| {
            let d = r - g.radius(k);
            v.values()[k] + d / r.sqrt() - d * d / (2.0 * r.powf(1.25))
        })
        .collect();
    let vartheta = ScalarField::new(g.clone(), vt_vals)?;

    let theta = |a: f64, sign: f64| -> ScalarField {
        let vals = (0..g.len())
            .map(|k| vartheta.values()[k] + a * dist2(k) / (r * r) + sign * tv.values()[k])
            .collect();
        ScalarField::new(g.clone(), vals).expect("finite barrier")
    };
    let min_on = |f: &ScalarField, nodes: &[usize]| {
        nodes.iter().map(|&k| f.values()[k]).fold(f64::INFINITY, f64::min)
    };
    let a_val = match a {
        Some(a) => a,
        None => {
            let mut chosen = 2f64.powi(60);
            for e in -30..=60 {
                let a = 2f64.powi(e);
                let ok = [1.0, -1.0]
                    .iter()
                    .all(|&s| min_on(&theta(a, s), &bnodes) >= -tol);
                if ok {
                    chosen = a;
                    break;
                }
            }
            chosen
        }
    };
    let thetas = [theta(a_val, 1.0), theta(a_val, -1.0)];
    let min_theta_boundary = thetas
        .iter()
        .map(|t| min_on(t, &bnodes))
        .fold(f64::INFINITY, f64::min);
    let min_vartheta_boundary = min_on(&vartheta, &bnodes);
    let mut max_l_theta = f64::NEG_INFINITY;
    let mut max_l_vartheta = f64::NEG_INFINITY;
    for &k in &inodes {
        for t in &thetas {
            max_l_theta = max_l_theta.max(linearized_apply_at(u, t, k)?);
        }
        max_l_vartheta = max_l_vartheta.max(linearized_apply_at(u, &vartheta, k)?);
    }
    let theta_at_x0 = thetas
        .iter()
        .map(|t| t.values()[x0_node].abs())
        .fold(0.0, f64::max);
    let nu_in = [-nu_out[0], -nu_out[1]];
    let vartheta_nu = dot(vartheta.jet(x0_node).grad, nu_in);
    let t_nu = dot(tv.jet(x0_node).grad, nu_in).abs();
    let scaled_t_sup = r.sqrt()
        * region
            .iter()
            .map(|&k| tv.values()[k].abs())
            .fold(0.0, f64::max);
    let boundary_quadratic_c = region
        .iter()
        .filter(|&&k| outer_row.contains(&k) && k != x0_node)
        .map(|&k| r * r * tv.values()[k].abs() / dist2(k))
        .fold(0.0, f64::max);
    let vartheta_nonneg = min_vartheta_boundary >= -tol;
    let theta_nonneg = min_theta_boundary >= -tol;
    let l_theta_nonpos = max_l_theta <= tol;
    let theta_x0_zero = theta_at_x0 <= tol;
    let mixed_bound = vartheta_nu >= t_nu - tol;
    Ok(ThetaAudit {
        radius: r,
        x0,
        delta,
        tol,
        region_nodes: region.len(),
        boundary_nodes: bnodes.len(),
        a: a_val,
        min_vartheta_boundary,
        min_theta_boundary,
        max_l_theta,
        max_l_vartheta,
        theta_at_x0,
        vartheta_nu,
        t_nu,
        scaled_t_sup,
        boundary_quadratic_c,
        vartheta_nonneg,
        theta_nonneg,
        l_theta_nonpos,
        theta_x0_zero,
        mixed_bound,
        passes: vartheta_nonneg && theta_nonneg && l_theta_nonpos && theta_x0_zero && mixed_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryAudit {
    pub max_tangential_gradient: f64,
    pub max_mixed_second: f64,
    pub max_t_operator: f64,
    pub tol: f64,
    pub passes: bool,
}

/// For radially symmetric data: every tangential or mixed quantity the
/// audits use, maximized over all nodes, against `10·h²`.
pub fn symmetry_audit(u: &ScalarField, sub: &ExplicitSubsolution) -> Result<SymmetryAudit, DiagError> {
    let g = u.grid();
    let v = minus_subsolution(u, sub)?;
    let h = g.mesh_width();
    let tol = 10.0 * h * h;
    let r = g.outer();
    let (mut tg, mut mx, mut tt) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..g.len() {
        let x = g.point(k);
        let (nu, tau) = frame(x);
        let jv = v.jet(k);
        let ju = u.jet(k);
        tg = tg.max(dot(ju.grad, tau).abs()).max(dot(jv.grad, tau).abs());
        mx = mx.max(ju.hess.bilinear(tau, nu).abs()).max(jv.hess.bilinear(tau, nu).abs());
        let xt = dot(x, tau);
        tt = tt.max((dot(jv.grad, tau) - xt / r * dot(jv.grad, nu)).abs());
    }
    Ok(SymmetryAudit {
        max_tangential_gradient: tg,
        max_mixed_second: mx,
        max_t_operator: tt,
        tol,
        passes: tg <= tol && mx <= tol && tt <= tol,
    })
}
