//! Nodal fields on an annulus grid and the differential operators acting on
//! them: gradient/Hessian, Gauss curvature, the linearized operator and the
//! smallest Hessian eigenvalue.
//!
//! Derivatives are taken in index space with the stencils of
//! [`RowKind::stencil`](crate::grid::RowKind::stencil) and mapped to
//! Cartesian coordinates with metrics computed by the *same* stencils from
//! the node coordinates. Affine functions are therefore differentiated
//! exactly, and on a circular inner boundary radial data produce exactly
//! rotation-equivariant derivatives.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{AnnulusGrid, GridError, NodeMetric};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("value array has {got} entries, grid has {expected} nodes")]
    Length { expected: usize, got: usize },
    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("Hessian not positive definite at node {node} (smallest eigenvalue {min_eig:.3e})")]
    NotConvex { node: usize, min_eig: f64 },
    #[error("point at radius {radius} outside the source grid (outer radius {outer})")]
    OutOfRange { radius: f64, outer: f64 },
    #[error("angular layouts do not match: {0}")]
    AngularMismatch(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Symmetric 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Eigenvalues in ascending order.
    #[inline]
    pub fn eigenvalues(&self) -> (f64, f64) {
        let m = 0.5 * (self.xx + self.yy);
        let d = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (m - d, m + d)
    }

    #[inline]
    pub fn min_eig(&self) -> f64 {
        self.eigenvalues().0
    }

    #[inline]
    pub fn is_positive_definite(&self) -> bool {
        self.xx > 0.0 && self.det() > 0.0
    }

    #[inline]
    pub fn inverse(&self) -> Sym2 {
        let d = self.det();
        Sym2::new(self.yy / d, -self.xy / d, self.xx / d)
    }

    /// `vᵀ A v`.
    #[inline]
    pub fn quad(&self, v: [f64; 2]) -> f64 {
        self.xx * v[0] * v[0] + 2.0 * self.xy * v[0] * v[1] + self.yy * v[1] * v[1]
    }

    /// `aᵀ A b`.
    #[inline]
    pub fn bilinear(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        self.xx * a[0] * b[0] + self.xy * (a[0] * b[1] + a[1] * b[0]) + self.yy * a[1] * b[1]
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.abs().max(self.xy.abs()).max(self.yy.abs())
    }
}

impl std::ops::Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }
}

impl std::ops::Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }
}

/// Gradient and Hessian at one node.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jet {
    pub grad: [f64; 2],
    pub hess: Sym2,
}

impl Jet {
    #[inline]
    pub fn grad_norm2(&self) -> f64 {
        self.grad[0] * self.grad[0] + self.grad[1] * self.grad[1]
    }

    /// `det D²u / (1 + |Du|²)²`, the two-dimensional Gauss curvature.
    #[inline]
    pub fn gauss_curvature(&self) -> f64 {
        self.hess.det() / (1.0 + self.grad_norm2()).powi(2)
    }
}

/// Gradient and Hessian at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct GradHess {
    pub jets: Vec<Jet>,
}

impl GradHess {
    pub fn grad(&self, node: usize) -> [f64; 2] {
        self.jets[node].grad
    }

    pub fn hess(&self, node: usize) -> Sym2 {
        self.jets[node].hess
    }
}

#[inline]
pub(crate) fn jet_from_index(m: &NodeMetric, d: [f64; 5]) -> Jet {
    let ji = m.jinv;
    let g = [
        ji[0][0] * d[0] + ji[1][0] * d[1],
        ji[0][1] * d[0] + ji[1][1] * d[1],
    ];
    // index-space Hessian with the coordinate curvature removed
    let mk = [
        d[2] - g[0] * m.x2[0] - g[1] * m.y2[0],
        d[3] - g[0] * m.x2[1] - g[1] * m.y2[1],
        d[4] - g[0] * m.x2[2] - g[1] * m.y2[2],
    ];
    let mm = [[mk[0], mk[1]], [mk[1], mk[2]]];
    let mut h = [[0.0; 2]; 2];
    for (a, row) in h.iter_mut().enumerate() {
        for (b, hab) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    s += ji[k][a] * mm[k][l] * ji[l][b];
                }
            }
            *hab = s;
        }
    }
    Jet {
        grad: g,
        hess: Sym2::new(h[0][0], 0.5 * (h[0][1] + h[1][0]), h[1][1]),
    }
}

/// Coefficients `c` with `L w = Σ c_k ∂_k w` over the index derivatives
/// `[ξ, η, ξξ, ξη, ηη]`, where
/// `L w = u^{ij} w_ij − 4/(1+|Du|²) u^i w_i` (n = 2) and `u^{ij}` is the
/// inverse Hessian. Requires a positive definite Hessian.
#[inline]
pub(crate) fn linearized_coefficients(m: &NodeMetric, jet: &Jet) -> [f64; 5] {
    let a = jet.hess.inverse();
    let am = [[a.xx, a.xy], [a.xy, a.yy]];
    let ji = m.jinv;
    let mut p = [[0.0; 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += ji[k][i] * am[i][j] * ji[l][j];
                }
            }
            p[k][l] = s;
        }
    }
    let p12 = 0.5 * (p[0][1] + p[1][0]);
    let beta = 4.0 / (1.0 + jet.grad_norm2());
    let v = [
        -(p[0][0] * m.x2[0] + 2.0 * p12 * m.x2[1] + p[1][1] * m.x2[2]) - beta * jet.grad[0],
        -(p[0][0] * m.y2[0] + 2.0 * p12 * m.y2[1] + p[1][1] * m.y2[2]) - beta * jet.grad[1],
    ];
    [
        ji[0][0] * v[0] + ji[0][1] * v[1],
        ji[1][0] * v[0] + ji[1][1] * v[1],
        p[0][0],
        2.0 * p12,
        p[1][1],
    ]
}

/// Nodal values on a shared annulus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<AnnulusGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<AnnulusGrid>, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::Length {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite { node });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn new_unchecked(grid: Arc<AnnulusGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<AnnulusGrid>) -> Self {
        let n = grid.len();
        Self::new_unchecked(grid, vec![0.0; n])
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Arc<AnnulusGrid>, f: impl Fn([f64; 2]) -> f64) -> Result<Self, FieldError> {
        let values = (0..grid.len()).map(|k| f(grid.point(k))).collect();
        Self::new(grid, values)
    }

    /// Samples a radial profile `g(|x|)`.
    pub fn from_radial(grid: Arc<AnnulusGrid>, g: impl Fn(f64) -> f64) -> Result<Self, FieldError> {
        let values = grid.radii().iter().map(|&r| g(r)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<AnnulusGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        Self::new_unchecked(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(
        &self,
        other: &ScalarField,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<ScalarField, FieldError> {
        if !self.same_grid(other) {
            return Err(FieldError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::new_unchecked(self.grid.clone(), values))
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField, FieldError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField, FieldError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Gradient and Hessian at one node.
    #[inline]
    pub fn jet(&self, node: usize) -> Jet {
        jet_from_index(
            self.grid.metric(node),
            self.grid.index_derivatives(&self.values, node),
        )
    }

    /// Values of this field at the nodes `nodes` of `target`, interpolating
    /// along rays (cubic Lagrange in `log r`). Both grids must share the
    /// inner boundary at the target's angles, and the target angles must be
    /// a subset of the source angles.
    pub fn sample_on_rays(
        &self,
        target: &AnnulusGrid,
        nodes: impl IntoIterator<Item = usize>,
    ) -> Result<Vec<f64>, FieldError> {
        let src = &*self.grid;
        if src.n_theta() % target.n_theta() != 0 {
            return Err(FieldError::AngularMismatch(format!(
                "source has {} angles, target {}",
                src.n_theta(),
                target.n_theta()
            )));
        }
        let stride = src.n_theta() / target.n_theta();
        for jt in 0..target.n_theta() {
            let a = target.inner_radius(jt);
            let b = src.inner_radius(jt * stride);
            if (a - b).abs() > 1e-12 * a {
                return Err(FieldError::AngularMismatch(format!(
                    "inner radius differs at angle index {jt}: {a} vs {b}"
                )));
            }
        }
        let n_r = src.n_r();
        let mut out = Vec::new();
        for node in nodes {
            let (_, jt) = target.row_col(node);
            let js = jt * stride;
            let r = target.radius(node);
            if r > src.outer() * (1.0 + 1e-12) {
                return Err(FieldError::OutOfRange {
                    radius: r,
                    outer: src.outer(),
                });
            }
            let ray = |i: usize| src.radius(src.index(i, js));
            // first row index with ray(k) >= r
            let (mut lo, mut hi) = (0usize, n_r);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if ray(mid) < r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let hit = [lo, hi]
                .into_iter()
                .find(|&k| (ray(k) - r).abs() <= 1e-12 * r);
            if let Some(k) = hit {
                out.push(self.values[src.index(k, js)]);
                continue;
            }
            let start = lo.saturating_sub(1).min(n_r.saturating_sub(3));
            let idx: Vec<usize> = (start..start + 4).collect();
            let t = r.ln();
            let xs: Vec<f64> = idx.iter().map(|&k| ray(k).ln()).collect();
            let mut v = 0.0;
            for (a, &ka) in idx.iter().enumerate() {
                let mut w = 1.0;
                for (b, _) in idx.iter().enumerate() {
                    if a != b {
                        w *= (t - xs[b]) / (xs[a] - xs[b]);
                    }
                }
                v += w * self.values[src.index(ka, js)];
            }
            out.push(v);
        }
        Ok(out)
    }
}

/// Cartesian gradient and Hessian at every node.
pub fn differentiate(u: &ScalarField) -> GradHess {
    GradHess {
        jets: (0..u.grid.len()).map(|k| u.jet(k)).collect(),
    }
}

/// `K[u] = det D²u / (1 + |Du|²)²` at every node.
pub fn gauss_curvature(u: &ScalarField) -> ScalarField {
    let values = (0..u.grid.len()).map(|k| u.jet(k).gauss_curvature()).collect();
    ScalarField::new_unchecked(u.grid.clone(), values)
}

/// Smallest eigenvalue of the discrete Hessian at every node.
pub fn convexity_min_eig(u: &ScalarField) -> ScalarField {
    let values = (0..u.grid.len()).map(|k| u.jet(k).hess.min_eig()).collect();
    ScalarField::new_unchecked(u.grid.clone(), values)
}

/// `L w = u^{ij} w_ij − 4/(1+|Du|²) u^i w_i` at one node.
pub fn linearized_apply_at(u: &ScalarField, w: &ScalarField, node: usize) -> Result<f64, FieldError> {
    let jet = u.jet(node);
    if !jet.hess.is_positive_definite() {
        return Err(FieldError::NotConvex {
            node,
            min_eig: jet.hess.min_eig(),
        });
    }
    let grid = &u.grid;
    let c = linearized_coefficients(grid.metric(node), &jet);
    let d = grid.index_derivatives(&w.values, node);
    Ok(c.iter().zip(d).map(|(a, b)| a * b).sum())
}

/// The linearized Gauss curvature operator of `u` applied to `w`, at every node.
pub fn linearized_apply(u: &ScalarField, w: &ScalarField) -> Result<ScalarField, FieldError> {
    if !u.same_grid(w) {
        return Err(FieldError::GridMismatch);
    }
    let values = (0..u.grid.len())
        .map(|k| linearized_apply_at(u, w, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScalarField::new_unchecked(u.grid.clone(), values))
}
