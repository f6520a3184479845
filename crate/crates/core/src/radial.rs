//! Radially symmetric Dirichlet problems, solved to near machine precision
//! through a first integral of the radial Gauss curvature equation.
//!
//! For `u(x) = U(|x|)` with slope `p = U'` the equation reads
//! `K = p' (p/r)^{n−1} (1+p²)^{−(n+2)/2} = f(r)`, and
//! `G(p) = ∫₀^p q^{n−1}(1+q²)^{−(n+2)/2} dq = (p/√(1+p²))ⁿ / n`
//! turns it into `G(p(r)) = G(p(ρ₁)) + ∫_{ρ₁}^r f τ^{n−1} dτ`.
//! The inner slope is found by bisection so that the integrated profile
//! hits the outer boundary value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fspec::{FSpec, FSpecError};
use crate::grid::{GridError, RadialGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadialError {
    #[error("radial solvability exceeded: curvature mass {mass:.6e} >= 1/n = {limit:.6e}")]
    MassExceeded { mass: f64, limit: f64 },
    #[error("boundary values incompatible with a strictly increasing profile: u_outer = {u_outer} but every admissible profile reaches at least {min_reachable}")]
    Incompatible { u_outer: f64, min_reachable: f64 },
    #[error("dimension mismatch: data posed in n = {f}, grid in n = {grid}")]
    Dimension { f: usize, grid: usize },
    #[error("quadrature failed on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
    #[error(transparent)]
    Data(#[from] FSpecError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// `G(p) = (p/√(1+p²))ⁿ / n`.
#[inline]
pub fn first_integral(n: usize, p: f64) -> f64 {
    (p / (1.0 + p * p).sqrt()).powi(n as i32) / n as f64
}

/// Inverse of [`first_integral`] on `[0, 1/n]`; returns `+∞` at the top.
#[inline]
pub fn inverse_first_integral(n: usize, g: f64) -> f64 {
    let s = (n as f64 * g.max(0.0)).powf(1.0 / n as f64);
    if s >= 1.0 {
        return f64::INFINITY;
    }
    s / ((1.0 - s) * (1.0 + s)).sqrt()
}

/// Gauss curvature of a radial graph from `r`, `p = U'` and `p' = U''`.
#[inline]
pub fn radial_gauss_curvature(n: usize, r: f64, p: f64, dp: f64) -> f64 {
    let nf = n as f64;
    dp * (p / r).powf(nf - 1.0) * (1.0 + p * p).powf(-0.5 * (nf + 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadialOptions {
    /// Shooting tolerance relative to `|u_outer − u_inner|`.
    pub tol_shoot: f64,
    pub max_bisections: usize,
    /// Absolute tolerance per interval for the curvature mass.
    pub quad_tol: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self {
            tol_shoot: 1e-10,
            max_bisections: 200,
            quad_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub grid: RadialGrid,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// Cumulative curvature mass `∫_{ρ₁}^{r_i} f τ^{n−1} dτ`.
    pub mass: Vec<f64>,
    pub p0: f64,
    pub bisections: usize,
    pub shooting_residual: f64,
}

impl RadialProfile {
    /// Cubic Hermite interpolation of `U` using the nodal slopes.
    pub fn value_at(&self, r: f64) -> Option<f64> {
        let nodes = self.grid.nodes();
        let last = nodes.len() - 1;
        let tol = 1e-12 * r.abs().max(1.0);
        if r < nodes[0] - tol || r > nodes[last] + tol {
            return None;
        }
        let k = match nodes.partition_point(|&x| x <= r) {
            0 => 0,
            k if k > last => last - 1,
            k => k - 1,
        };
        let (a, b) = (nodes[k], nodes[k + 1]);
        let h = b - a;
        let t = (r - a) / h;
        if t.abs() <= 1e-14 {
            return Some(self.u[k]);
        }
        let (h00, h10) = ((1.0 + 2.0 * t) * (1.0 - t).powi(2), t * (1.0 - t).powi(2));
        let (h01, h11) = (t * t * (3.0 - 2.0 * t), t * t * (t - 1.0));
        Some(h00 * self.u[k] + h10 * h * self.p[k] + h01 * self.u[k + 1] + h11 * h * self.p[k + 1])
    }

    /// Slope at `r` by linear interpolation of the nodal slopes.
    pub fn slope_at(&self, r: f64) -> Option<f64> {
        let nodes = self.grid.nodes();
        let last = nodes.len() - 1;
        if r < nodes[0] || r > nodes[last] {
            return None;
        }
        let k = nodes.partition_point(|&x| x <= r).clamp(1, last) - 1;
        let t = (r - nodes[k]) / (nodes[k + 1] - nodes[k]);
        Some(self.p[k] + t * (self.p[k + 1] - self.p[k]))
    }
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64, RadialError> {
    let out = quadrature::double_exponential::integrate(f, a, b, tol);
    if out.integral.is_finite() {
        Ok(out.integral)
    } else {
        Err(RadialError::Quadrature { a, b })
    }
}

/// Cumulative `∫_{r_0}^{r_i} f τ^{n−1} dτ` over the grid nodes.
pub fn curvature_mass(f: &FSpec, grid: &RadialGrid, quad_tol: f64) -> Result<Vec<f64>, RadialError> {
    if f.n != grid.dim() {
        return Err(RadialError::Dimension {
            f: f.n,
            grid: grid.dim(),
        });
    }
    f.validate()?;
    let n = grid.dim() as i32;
    let integrand = |t: f64| f.radial_value(t).unwrap_or(f64::NAN) * t.powi(n - 1);
    let _ = f.radial_value(grid.inner())?;
    let mut mass = Vec::with_capacity(grid.nodes().len());
    let mut acc = 0.0;
    mass.push(0.0);
    for w in grid.nodes().windows(2) {
        acc += integrate(integrand, w[0], w[1], quad_tol)?;
        mass.push(acc);
    }
    Ok(mass)
}

/// `∫_{ρ₁}^∞ f τ^{n−1} dτ` via `τ = ρ₁/s`.
pub fn total_curvature_mass(f: &FSpec, rho1: f64) -> Result<f64, RadialError> {
    f.validate()?;
    let n = f.n as i32;
    let _ = f.radial_value(rho1)?;
    integrate(
        |s: f64| {
            let t = rho1 / s;
            f.radial_value(t).unwrap_or(f64::NAN) * t.powi(n - 1) * rho1 / (s * s)
        },
        0.0,
        1.0,
        1e-14,
    )
}

fn integrate_profile(n: usize, g0: f64, mass: &[f64], nodes: &[f64], u_inner: f64) -> (Vec<f64>, Vec<f64>) {
    let p: Vec<f64> = mass.iter().map(|m| inverse_first_integral(n, g0 + m)).collect();
    let mut u = Vec::with_capacity(p.len());
    u.push(u_inner);
    for k in 1..p.len() {
        let prev = u[k - 1];
        u.push(prev + 0.5 * (nodes[k] - nodes[k - 1]) * (p[k] + p[k - 1]));
    }
    (u, p)
}

/// Solves `K[u] = f(|x|)` on `ρ₁ < |x| < R` with `u(ρ₁) = u_inner`,
/// `u(R) = u_outer` and a positive slope.
pub fn solve_radial_bvp(
    f: &FSpec,
    grid: &RadialGrid,
    u_inner: f64,
    u_outer: f64,
    opts: &RadialOptions,
) -> Result<RadialProfile, RadialError> {
    let n = grid.dim();
    let mass = curvature_mass(f, grid, opts.quad_tol)?;
    let total = *mass.last().expect("nonempty grid");
    let limit = 1.0 / n as f64;
    if total >= limit {
        return Err(RadialError::MassExceeded { mass: total, limit });
    }
    let nodes = grid.nodes();
    let reach = |g0: f64| integrate_profile(n, g0, &mass, nodes, u_inner);
    let (u_lo, _) = reach(0.0);
    let min_reachable = *u_lo.last().unwrap();
    if u_outer <= min_reachable {
        return Err(RadialError::Incompatible {
            u_outer,
            min_reachable,
        });
    }
    let (mut lo, mut hi) = (0.0, limit - total);
    let mut bisections = 0;
    let mut best = (f64::INFINITY, 0.0);
    while bisections < opts.max_bisections {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        bisections += 1;
        let (u, _) = reach(mid);
        let miss = u.last().unwrap() - u_outer;
        if miss.abs() < best.0 {
            best = (miss.abs(), mid);
        }
        if miss.abs() <= opts.tol_shoot * (u_outer - u_inner).abs() {
            break;
        }
        if miss > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let g0 = best.1;
    let (u, p) = reach(g0);
    Ok(RadialProfile {
        grid: grid.clone(),
        shooting_residual: u.last().unwrap() - u_outer,
        p0: p[0],
        u,
        p,
        mass,
        bisections,
    })
}

/// Nodal curvature of a profile, with `p'` from second-order
/// non-uniform differences of the slopes.
pub fn radial_curvature(profile: &RadialProfile) -> Vec<f64> {
    let r = profile.grid.nodes();
    let p = &profile.p;
    let n = profile.grid.dim();
    let m = r.len();
    (0..m)
        .map(|k| {
            // three-point stencil centred where possible
            let c = k.clamp(1, m - 2);
            let (x0, x1, x2) = (r[c - 1], r[c], r[c + 1]);
            let (y0, y1, y2) = (p[c - 1], p[c], p[c + 1]);
            let x = r[k];
            let dp = y0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
                + y1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
                + y2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1));
            radial_gauss_curvature(n, x, p[k], dp)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::ExplicitSubsolution;
    use crate::fspec::Family;
    use crate::grid::Stretching;

    #[test]
    fn first_integral_matches_quadrature() {
        for n in 2..=5 {
            for &p in &[0.0, 0.3, 1.0, 4.0, 50.0] {
                let q = quadrature::double_exponential::integrate(
                    |q: f64| q.powi(n as i32 - 1) * (1.0 + q * q).powf(-0.5 * (n as f64 + 2.0)),
                    0.0,
                    p,
                    1e-14,
                )
                .integral;
                assert!((first_integral(n, p) - q).abs() < 1e-13, "n={n} p={p}");
                if p > 0.0 {
                    let back = inverse_first_integral(n, first_integral(n, p));
                    assert!((back - p).abs() < 1e-10 * p.max(1.0));
                }
            }
        }
        assert_eq!(inverse_first_integral(3, 1.0 / 3.0), f64::INFINITY);
    }

    #[test]
    fn recovers_explicit_subsolution() {
        // the explicit subsolution solves its own curvature equation exactly
        for n in [2usize, 3] {
            let s = ExplicitSubsolution::new(n, 1.0, 3.0).unwrap();
            let f = FSpec::new(n, Family::SubsolutionCurvature { rho1: 1.0, a: 3.0 });
            let grid = RadialGrid::new(n, 1.0, 8.0, 4096, Stretching::Geometric).unwrap();
            let prof = solve_radial_bvp(
                &f,
                &grid,
                s.value_unchecked(1.0),
                s.value_unchecked(8.0),
                &Default::default(),
            )
            .unwrap();
            assert!((prof.p0 - 0.5).abs() < 1e-6, "p0 {}", prof.p0);
            for (k, &r) in grid.nodes().iter().enumerate() {
                assert!((prof.u[k] - s.value_unchecked(r)).abs() < 1e-6);
                assert!((prof.p[k] - 1.0 - s.dpsi(r)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn profile_is_convex_and_hits_boundary() {
        let f = FSpec::radial_power(2, 0.1, 4.0);
        let grid = RadialGrid::new(2, 1.0, 4.0, 512, Stretching::Geometric).unwrap();
        let prof = solve_radial_bvp(&f, &grid, 0.0, 3.0, &Default::default()).unwrap();
        assert!(prof.shooting_residual.abs() <= 1e-10);
        assert!(prof.p.windows(2).all(|w| w[1] > w[0]));
        assert!(prof.p.iter().all(|&p| p > 0.0));
        let k = radial_curvature(&prof);
        for (i, &r) in grid.nodes().iter().enumerate() {
            assert!((k[i] - 0.1 * r.powi(-4)).abs() < 1e-4 * 0.1 * r.powi(-4) + 1e-7, "{i}");
        }
    }

    #[test]
    fn exact_curvature_helper() {
        let s = ExplicitSubsolution::new(2, 1.0, 3.0).unwrap();
        for &r in &[1.0, 2.0, 7.5] {
            let k = radial_gauss_curvature(2, r, 1.0 + s.dpsi(r), s.phi(r));
            assert!((k - s.curvature_unchecked(r)).abs() <= 1e-15 * k.max(1e-300) * 10.0);
        }
    }

    #[test]
    fn error_cases() {
        let grid = RadialGrid::new(2, 1.0, 4.0, 64, Stretching::Geometric).unwrap();
        let f = FSpec::radial_power(2, 0.1, 4.0);
        assert!(matches!(
            solve_radial_bvp(&f, &grid, 1.0, 1.0, &Default::default()),
            Err(RadialError::Incompatible { .. })
        ));
        let big = FSpec::radial_power(2, 10.0, 4.0);
        assert!(matches!(
            solve_radial_bvp(&big, &grid, 0.0, 5.0, &Default::default()),
            Err(RadialError::MassExceeded { .. })
        ));
        let g3 = RadialGrid::new(3, 1.0, 4.0, 64, Stretching::Geometric).unwrap();
        assert!(matches!(
            solve_radial_bvp(&f, &g3, 0.0, 5.0, &Default::default()),
            Err(RadialError::Dimension { .. })
        ));
    }

    #[test]
    fn hermite_interpolation() {
        let f = FSpec::radial_power(2, 0.1, 4.0);
        let grid = RadialGrid::new(2, 1.0, 4.0, 256, Stretching::Geometric).unwrap();
        let prof = solve_radial_bvp(&f, &grid, 0.0, 3.0, &Default::default()).unwrap();
        let fine = solve_radial_bvp(&f, &grid.refine().refine(), 0.0, 3.0, &Default::default()).unwrap();
        for &r in &[1.0, 1.37, 2.5, 4.0] {
            let a = prof.value_at(r).unwrap();
            let b = fine.value_at(r).unwrap();
            assert!((a - b).abs() < 1e-4, "{r} {a} {b}");
        }
        assert!(prof.value_at(5.0).is_none());
    }
}
