//! Barrier functions: the shifted cone above, the explicit radial
//! subsolution below, discrete subsolution checks and the gluing of two
//! subsolutions by a smoothed maximum.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{convexity_min_eig, gauss_curvature, FieldError, Jet, ScalarField, Sym2};
use crate::fspec::FSpec;
use crate::grid::AnnulusGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("radius {r} lies inside the subsolution support boundary rho1 = {rho1}")]
    InsideSupport { r: f64, rho1: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("cone offset {offset} must exceed max(u0 - |x|) = {required} on the inner boundary")]
    ConeOffset { offset: f64, required: f64 },
    #[error("node {node} lies in neither region")]
    NotCovered { node: usize },
    #[error("ordering violated at node {node} on the boundary of region {region}: u1 - u2 = {diff:.3e}")]
    Ordering { node: usize, region: u8, diff: f64 },
    #[error("the crossing set reaches the domain boundary at node {node}")]
    CrossingTouchesBoundary { node: usize },
    #[error("ordering gap {gap:.3e} at interface node {node} is smaller than the blending width {width:.3e}")]
    GapTooSmall { node: usize, gap: f64, width: f64 },
    #[error("glued field not strictly convex at node {node} (smallest eigenvalue {min_eig:.3e}); increase the blending width")]
    NotConvex { node: usize, min_eig: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// `ū(x) = |x| + L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSupersolution {
    pub offset: f64,
}

impl ConeSupersolution {
    /// Requires `offset > max_{∂K}(u₀ − |x|)`, given as `boundary_excess`.
    pub fn new(offset: f64, boundary_excess: f64) -> Result<Self, BarrierError> {
        if !(offset > boundary_excess) {
            return Err(BarrierError::ConeOffset {
                offset,
                required: boundary_excess,
            });
        }
        Ok(Self { offset })
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        x[0].hypot(x[1]) + self.offset
    }

    pub fn jet(&self, x: [f64; 2]) -> Jet {
        let r = x[0].hypot(x[1]);
        let e = [x[0] / r, x[1] / r];
        Jet {
            grad: e,
            hess: Sym2::new(
                (1.0 - e[0] * e[0]) / r,
                -e[0] * e[1] / r,
                (1.0 - e[1] * e[1]) / r,
            ),
        }
    }

    pub fn field(&self, grid: Arc<AnnulusGrid>) -> ScalarField {
        let off = self.offset;
        ScalarField::from_radial(grid, |r| r + off).expect("finite cone")
    }
}

/// Radial data of the explicit subsolution at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionJet {
    pub value: f64,
    pub psi: f64,
    pub dpsi: f64,
    pub phi: f64,
}

/// `u̲(x) = |x| − ρ₁ + ψ(|x|) + shift` with
/// `ψ″ = φ = (a−1)/2·ρ₁^{a−1}·r^{−a}`, `ψ(ρ₁) = 0`, `ψ′(ρ₁) = −1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplicitSubsolution {
    pub n: usize,
    pub rho1: f64,
    pub a: f64,
    #[serde(default)]
    pub shift: f64,
}

impl ExplicitSubsolution {
    pub fn new(n: usize, rho1: f64, a: f64) -> Result<Self, BarrierError> {
        if n < 2 {
            return Err(BarrierError::Parameter(format!("dimension {n} < 2")));
        }
        if !(rho1 > 0.0 && rho1.is_finite()) {
            return Err(BarrierError::Parameter(format!("rho1 = {rho1} must be positive")));
        }
        if !(a > 2.0 && a.is_finite()) {
            return Err(BarrierError::Parameter(format!("a = {a} must exceed 2")));
        }
        Ok(Self {
            n,
            rho1,
            a,
            shift: 0.0,
        })
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    fn check(&self, r: f64) -> Result<(), BarrierError> {
        if r < self.rho1 * (1.0 - 1e-14) || !r.is_finite() {
            return Err(BarrierError::InsideSupport { r, rho1: self.rho1 });
        }
        Ok(())
    }

    #[inline]
    pub fn psi(&self, r: f64) -> f64 {
        let (rho, a) = (self.rho1, self.a);
        rho.powf(a - 1.0) * (r.powf(2.0 - a) - rho.powf(2.0 - a)) / (2.0 * (a - 2.0))
    }

    #[inline]
    pub fn dpsi(&self, r: f64) -> f64 {
        -0.5 * (self.rho1 / r).powf(self.a - 1.0)
    }

    #[inline]
    pub fn phi(&self, r: f64) -> f64 {
        0.5 * (self.a - 1.0) * self.rho1.powf(self.a - 1.0) * r.powf(-self.a)
    }

    /// `sup_{r ≥ ρ₁} |ψ| = ρ₁ / (2(a−2))`.
    pub fn psi_sup(&self) -> f64 {
        self.rho1 / (2.0 * (self.a - 2.0))
    }

    #[inline]
    pub fn value_unchecked(&self, r: f64) -> f64 {
        r - self.rho1 + self.psi(r) + self.shift
    }

    pub fn eval(&self, r: f64) -> Result<SubsolutionJet, BarrierError> {
        self.check(r)?;
        Ok(SubsolutionJet {
            value: self.value_unchecked(r),
            psi: self.psi(r),
            dpsi: self.dpsi(r),
            phi: self.phi(r),
        })
    }

    /// Gauss curvature of the graph at radius `r`.
    pub fn curvature_unchecked(&self, r: f64) -> f64 {
        let nf = self.n as f64;
        let q = 1.0 + self.dpsi(r);
        self.phi(r) * r.powf(1.0 - nf) * q.powf(nf - 1.0) * (1.0 + q * q).powf(-0.5 * (nf + 2.0))
    }

    /// Lower bound `(a−1)·2^{−3n/2−1}·ρ₁^{a−1}·r^{1−n−a}` for the curvature.
    pub fn curvature_bound(&self, r: f64) -> f64 {
        let nf = self.n as f64;
        (self.a - 1.0)
            * 2f64.powf(-1.5 * nf - 1.0)
            * self.rho1.powf(self.a - 1.0)
            * r.powf(1.0 - nf - self.a)
    }

    /// `(K[u̲](r), bound(r))`.
    pub fn curvature(&self, r: f64) -> Result<(f64, f64), BarrierError> {
        self.check(r)?;
        Ok((self.curvature_unchecked(r), self.curvature_bound(r)))
    }

    /// Exact Cartesian gradient and Hessian (two dimensions).
    pub fn jet(&self, x: [f64; 2]) -> Jet {
        let r = x[0].hypot(x[1]);
        let e = [x[0] / r, x[1] / r];
        let q = 1.0 + self.dpsi(r);
        let t = q / r;
        let p = self.phi(r);
        Jet {
            grad: [q * e[0], q * e[1]],
            hess: Sym2::new(
                t * (1.0 - e[0] * e[0]) + p * e[0] * e[0],
                (p - t) * e[0] * e[1],
                t * (1.0 - e[1] * e[1]) + p * e[1] * e[1],
            ),
        }
    }

    pub fn field(&self, grid: Arc<AnnulusGrid>) -> Result<ScalarField, BarrierError> {
        for &r in grid.radii() {
            self.check(r)?;
        }
        Ok(ScalarField::from_radial(grid, |r| self.value_unchecked(r))?)
    }
}

/// Tolerances for [`verify_subsolution`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubsolutionCheckOptions {
    /// Allowed curvature deficit; `None` means `5·h²` with the scale-free mesh width.
    pub tol_disc: Option<f64>,
    pub conv_floor: f64,
    /// Check the two boundary rows as well (one-sided stencils).
    pub include_boundary_rows: bool,
}

impl Default for SubsolutionCheckOptions {
    fn default() -> Self {
        Self {
            tol_disc: None,
            conv_floor: 1e-8,
            include_boundary_rows: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionReport {
    /// `min (K[u] − f(x, u))`.
    pub min_margin: f64,
    pub worst_node: usize,
    pub min_eig: f64,
    pub min_eig_node: usize,
    pub tol_disc: f64,
    pub conv_floor: f64,
    pub passes: bool,
}

/// Checks `K[u] ≥ f(x, u) − tol` and strict convexity node by node.
pub fn verify_subsolution(
    u: &ScalarField,
    f: &FSpec,
    opts: &SubsolutionCheckOptions,
) -> SubsolutionReport {
    let grid = u.grid();
    let h = grid.mesh_width();
    let tol_disc = opts.tol_disc.unwrap_or(5.0 * h * h);
    let k = gauss_curvature(u);
    let e = convexity_min_eig(u);
    let nodes: Vec<usize> = if opts.include_boundary_rows {
        (0..grid.len()).collect()
    } else {
        grid.interior_nodes().collect()
    };
    let (mut min_margin, mut worst_node) = (f64::INFINITY, 0);
    let (mut min_eig, mut min_eig_node) = (f64::INFINITY, 0);
    for node in nodes {
        let margin = k.values()[node] - f.eval(grid.point(node), u.values()[node]).0;
        if margin < min_margin {
            min_margin = margin;
            worst_node = node;
        }
        if e.values()[node] < min_eig {
            min_eig = e.values()[node];
            min_eig_node = node;
        }
    }
    SubsolutionReport {
        min_margin,
        worst_node,
        min_eig,
        min_eig_node,
        tol_disc,
        conv_floor: opts.conv_floor,
        passes: min_margin >= -tol_disc && min_eig >= opts.conv_floor,
    }
}

/// `C²` smoothed maximum: equal to `max(a, b)` when `|a − b| ≥ w`, and
/// always at least `max(a, b)`.
#[inline]
pub fn smooth_max(a: f64, b: f64, w: f64) -> f64 {
    if w <= 0.0 || (a - b).abs() >= w {
        return a.max(b);
    }
    let s = (a - b) / w;
    b + w * smooth_plus(s)
}

/// `∫∫` of the quartic bump `15/16·(1−s²)²`: a convex `C²` version of `s₊`.
#[inline]
fn smooth_plus(s: f64) -> f64 {
    if s <= -1.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return s;
    }
    let s2 = s * s;
    let cdf = 15.0 / 16.0 * (s - 2.0 * s * s2 / 3.0 + s * s2 * s2 / 5.0 + 8.0 / 15.0);
    let first_moment = 15.0 / 16.0 * (s2 / 2.0 - s2 * s2 / 2.0 + s2 * s2 * s2 / 6.0 - 1.0 / 6.0);
    s * cdf - first_moment
}

/// Nodes whose position satisfies `pred(|x|)`.
pub fn radial_mask(grid: &AnnulusGrid, pred: impl Fn(f64) -> bool) -> Vec<bool> {
    grid.radii().iter().map(|&r| pred(r)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlueOptions {
    /// Blending width in value units; `None` picks twice the largest radial
    /// spacing over the crossing set.
    pub width: Option<f64>,
    /// Rows over which the width tapers to zero next to the domain boundary.
    pub taper_rows: usize,
    pub conv_floor: f64,
}

impl Default for GlueOptions {
    fn default() -> Self {
        Self {
            width: None,
            taper_rows: 5,
            conv_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GluedSubsolution {
    pub field: ScalarField,
    pub width: f64,
    /// Overlap nodes next to a sign change of `u1 − u2`.
    pub crossing: Vec<usize>,
    /// Nodes where the smoothing differs from the plain maximum.
    pub blended: Vec<usize>,
}

fn interface(grid: &AnnulusGrid, mask: &[bool]) -> Vec<usize> {
    (0..grid.len())
        .filter(|&k| mask[k] && grid.ring(k).any(|m| !mask[m]))
        .collect()
}

/// Glues `u1` (on `Ω₁`) and `u2` (on `Ω₂`) into one convex function that
/// equals `u1` near `∂Ω₁`, `u2` near `∂Ω₂` and a smoothed `max{u1, u2}` in
/// between. Requires `u1 < u2` on `∂Ω₁` and `u2 < u1` on `∂Ω₂` away from
/// the inner boundary.
pub fn glue_subsolutions(
    u1: &ScalarField,
    u2: &ScalarField,
    omega1: &[bool],
    omega2: &[bool],
    opts: &GlueOptions,
) -> Result<GluedSubsolution, BarrierError> {
    if !u1.same_grid(u2) {
        return Err(FieldError::GridMismatch.into());
    }
    let grid = u1.grid().clone();
    let n = grid.len();
    if omega1.len() != n || omega2.len() != n {
        return Err(FieldError::Length {
            expected: n,
            got: omega1.len().min(omega2.len()),
        }
        .into());
    }
    if let Some(node) = (0..n).find(|&k| !omega1[k] && !omega2[k]) {
        return Err(BarrierError::NotCovered { node });
    }
    let (a, b) = (u1.values(), u2.values());
    let inner_row = grid.inner_row();
    let iface1: Vec<usize> = interface(&grid, omega1)
        .into_iter()
        .filter(|k| !inner_row.contains(k))
        .collect();
    let iface2: Vec<usize> = interface(&grid, omega2)
        .into_iter()
        .filter(|k| !inner_row.contains(k))
        .collect();
    for &k in &iface1 {
        if !(a[k] < b[k]) {
            return Err(BarrierError::Ordering {
                node: k,
                region: 1,
                diff: a[k] - b[k],
            });
        }
    }
    for &k in &iface2 {
        if !(b[k] < a[k]) {
            return Err(BarrierError::Ordering {
                node: k,
                region: 2,
                diff: a[k] - b[k],
            });
        }
    }
    let overlap = |k: usize| omega1[k] && omega2[k];
    let crossing: Vec<usize> = (0..n)
        .filter(|&k| {
            overlap(k)
                && grid
                    .ring(k)
                    .any(|m| overlap(m) && (a[k] - b[k]).signum() != (a[m] - b[m]).signum())
        })
        .collect();
    if let Some(&node) = crossing.iter().find(|&&k| grid.is_boundary_row(k)) {
        return Err(BarrierError::CrossingTouchesBoundary { node });
    }
    let width = opts.width.unwrap_or_else(|| {
        2.0 * crossing
            .iter()
            .map(|&k| grid.radial_spacing(k))
            .fold(0.0, f64::max)
    });
    if !(width >= 0.0 && width.is_finite()) {
        return Err(BarrierError::Parameter(format!("blending width {width}")));
    }
    for &k in iface1.iter().chain(&iface2) {
        let gap = (a[k] - b[k]).abs();
        if gap < width && !grid.is_boundary_row(k) {
            return Err(BarrierError::GapTooSmall {
                node: k,
                gap,
                width,
            });
        }
    }
    let n_r = grid.n_r();
    let taper = opts.taper_rows.max(1) as f64;
    let mut values = vec![0.0; n];
    let mut blended = Vec::new();
    for k in 0..n {
        values[k] = match (omega1[k], omega2[k]) {
            (true, false) => a[k],
            (false, true) => b[k],
            _ => {
                let (i, _) = grid.row_col(k);
                let t = (i as f64 / taper).min((n_r - i) as f64 / taper).min(1.0);
                let w = width * t;
                if (a[k] - b[k]).abs() < w {
                    blended.push(k);
                }
                smooth_max(a[k], b[k], w)
            }
        };
    }
    let field = ScalarField::new(grid.clone(), values)?;
    let eig = convexity_min_eig(&field);
    for k in grid.interior_nodes() {
        if eig.values()[k] < opts.conv_floor {
            return Err(BarrierError::NotConvex {
                node: k,
                min_eig: eig.values()[k],
            });
        }
    }
    Ok(GluedSubsolution {
        field,
        width,
        crossing,
        blended,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{InnerBoundary, Stretching};

    fn sub(n: usize, rho: f64, a: f64) -> ExplicitSubsolution {
        ExplicitSubsolution::new(n, rho, a).unwrap()
    }

    #[test]
    fn explicit_spot_values() {
        let s = sub(2, 1.0, 3.0);
        let (k, b) = s.curvature(1.0).unwrap();
        assert!((k - 0.32).abs() < 1e-15, "{k}");
        assert!((b - 0.125).abs() < 1e-15);
        let j = s.eval(2.0).unwrap();
        assert!((j.psi + 0.25).abs() < 1e-15);
        assert!((s.dpsi(1.0) + 0.5).abs() < 1e-15);
        assert!(matches!(s.eval(0.5), Err(BarrierError::InsideSupport { .. })));
        assert!(ExplicitSubsolution::new(2, 1.0, 2.0).is_err());
    }

    #[test]
    fn psi_derivatives_consistent() {
        let s = sub(3, 0.7, 3.5);
        for &r in &[0.7, 1.0, 3.0, 20.0] {
            let h = 1e-5 * r;
            let d1 = (s.psi(r + h) - s.psi(r - h)) / (2.0 * h);
            let d2 = (s.dpsi(r + h) - s.dpsi(r - h)) / (2.0 * h);
            assert!((d1 - s.dpsi(r)).abs() < 1e-8);
            assert!((d2 - s.phi(r)).abs() < 1e-6 * s.phi(r).max(1e-3));
        }
        assert!((s.psi(1e12) + s.psi_sup()).abs() < 1e-6);
    }

    #[test]
    fn cartesian_jet_matches_curvature() {
        let s = sub(2, 1.0, 3.0);
        for x in [[1.3, 0.4], [-2.0, 5.0], [0.0, 1.0]] {
            let j = s.jet(x);
            let r = x[0].hypot(x[1]);
            assert!((j.gauss_curvature() - s.curvature_unchecked(r)).abs() < 1e-14);
        }
        let c = ConeSupersolution::new(0.1, 0.0).unwrap();
        assert!(c.jet([3.0, 4.0]).hess.det().abs() < 1e-15);
        assert!(ConeSupersolution::new(0.0, 0.0).is_err());
    }

    #[test]
    fn smooth_max_properties() {
        assert_eq!(smooth_max(3.0, 1.0, 1.0), 3.0);
        assert_eq!(smooth_max(1.0, 3.0, 1.0), 3.0);
        assert!((smooth_max(1.0, 1.0, 1.0) - (1.0 + 15.0 / 96.0)).abs() < 1e-15);
        // C¹ and C² across s = ±1
        for s0 in [-1.0f64, 1.0] {
            let h = 1e-4;
            let f = |s: f64| smooth_max(s, 0.0, 1.0);
            let d_in = (f(s0 - s0.signum() * h) - f(s0)) / h;
            let d_out = (f(s0) - f(s0 + s0.signum() * h)) / h;
            assert!((d_in - d_out).abs() < 1e-3);
        }
    }

    #[test]
    fn subsolution_check_examples() {
        let g = Arc::new(
            AnnulusGrid::new(InnerBoundary::circle(1.0), 2.0, 16, 16, Stretching::Uniform).unwrap(),
        );
        let u = ScalarField::from_radial(g.clone(), |r| 0.5 * r * r).unwrap();
        let rep = verify_subsolution(&u, &FSpec::radial_power(2, 0.01, 3.0), &Default::default());
        assert!(rep.passes, "{rep:?}");
        let rep = verify_subsolution(&u, &FSpec::radial_power(2, 10.0, 3.0), &Default::default());
        assert!(!rep.passes);
        assert!(rep.min_margin < -1.0);
    }

    #[test]
    fn glue_two_radial_subsolutions() {
        let g = Arc::new(
            AnnulusGrid::new(InnerBoundary::circle(1.0), 8.0, 96, 32, Stretching::Geometric).unwrap(),
        );
        let u1 = ScalarField::from_radial(g.clone(), |r| 0.1 * (r * r - 1.0)).unwrap();
        let s = sub(2, 1.0, 3.0).with_shift(-0.1);
        let u2 = s.field(g.clone()).unwrap();
        let o1 = radial_mask(&g, |r| r < 1.6);
        let o2 = radial_mask(&g, |r| r > 1.1);
        let glued = glue_subsolutions(&u1, &u2, &o1, &o2, &GlueOptions::default()).unwrap();
        assert!(!glued.crossing.is_empty() && !glued.blended.is_empty());
        for k in 0..g.len() {
            let m = u1.values()[k].max(u2.values()[k]);
            let v = glued.field.values()[k];
            if o1[k] && o2[k] {
                assert!(v >= m);
            }
            if !o2[k] {
                assert_eq!(v, u1.values()[k]);
            }
            if !o1[k] {
                assert_eq!(v, u2.values()[k]);
            }
        }
        // swapped roles violate the ordering
        let err = glue_subsolutions(&u2, &u1, &o1, &o2, &GlueOptions::default()).unwrap_err();
        assert!(matches!(err, BarrierError::Ordering { .. }));
        let gap = glue_subsolutions(
            &u1,
            &u2,
            &o1,
            &o2,
            &GlueOptions {
                width: Some(1.0),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(gap, BarrierError::GapTooSmall { .. }));
    }
}
