//! Discrete domains: a 1D radial grid for any dimension and a polar annulus
//! grid between a star-shaped inner boundary and the circle of radius `R`.
//!
//! Annulus nodes are laid out row-major: row `i` (radial index, `0..=n_r`)
//! holds `n_theta` nodes at the angles `2πj/n_theta`. Row `0` lies on the
//! inner boundary and row `n_r` on the outer circle. Every node is reached
//! by a per-angle radial line from `ρ(θ_j)` to `R`, so the grid is the image
//! of the index rectangle under a smooth map and derivatives are taken in
//! index space and pulled back with discrete metrics (see [`crate::fields`]).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid ordering of radii: need 0 < inner ({inner}) < outer ({outer})")]
    InvalidOrdering { inner: f64, outer: f64 },
    #[error("too few intervals: {got} (need at least {min})")]
    TooCoarse { got: usize, min: usize },
    #[error("dimension must be at least 2 (got {0})")]
    Dimension(usize),
    #[error("angular node count {0} must be a positive multiple of 4")]
    AngularCount(usize),
    #[error("inner boundary not inside the outer ball: rho(theta_{index}) = {radius} >= R = {outer}")]
    InnerOutside { index: usize, radius: f64, outer: f64 },
    #[error("non-positive inner radius {radius} at angle index {index}")]
    NonPositiveRadius { index: usize, radius: f64 },
    #[error("inner boundary samples: expected {expected} values, got {got}")]
    SampleCount { expected: usize, got: usize },
}

/// Radial node placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stretching {
    Uniform,
    /// Nodes at `inner·(R/inner)^{i/N}`.
    #[default]
    Geometric,
}

impl Stretching {
    /// Position of the node with fractional index `t = i/N` on `[inner, outer]`.
    #[inline]
    pub fn place(self, inner: f64, outer: f64, t: f64) -> f64 {
        match self {
            Stretching::Uniform => inner + (outer - inner) * t,
            Stretching::Geometric => inner * (outer / inner).powf(t),
        }
    }
}

/// 1D grid `ρ₁ = r_0 < … < r_N = R` used by the radially symmetric solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    dim: usize,
    inner: f64,
    outer: f64,
    nodes: Vec<f64>,
    stretching: Stretching,
}

impl RadialGrid {
    pub const MIN_INTERVALS: usize = 2;

    pub fn new(
        dim: usize,
        inner: f64,
        outer: f64,
        intervals: usize,
        stretching: Stretching,
    ) -> Result<Self, GridError> {
        if dim < 2 {
            return Err(GridError::Dimension(dim));
        }
        if !(inner > 0.0 && outer > inner && outer.is_finite()) {
            return Err(GridError::InvalidOrdering { inner, outer });
        }
        if intervals < Self::MIN_INTERVALS {
            return Err(GridError::TooCoarse {
                got: intervals,
                min: Self::MIN_INTERVALS,
            });
        }
        let nodes = (0..=intervals)
            .map(|i| {
                if i == 0 {
                    inner
                } else if i == intervals {
                    outer
                } else {
                    stretching.place(inner, outer, i as f64 / intervals as f64)
                }
            })
            .collect();
        Ok(Self {
            dim,
            inner,
            outer,
            nodes,
            stretching,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inner(&self) -> f64 {
        self.inner
    }

    pub fn outer(&self) -> f64 {
        self.outer
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn stretching(&self) -> Stretching {
        self.stretching
    }

    /// Scale-free mesh width `max Δr / r`.
    pub fn mesh_width(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0])
            .fold(0.0, f64::max)
    }

    /// Doubles the interval count. Coarse nodes reappear at even indices.
    pub fn refine(&self) -> Self {
        Self::new(
            self.dim,
            self.inner,
            self.outer,
            2 * self.intervals(),
            self.stretching,
        )
        .expect("refining a valid grid")
    }
}

/// Star-shaped inner boundary `r = ρ(θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnerBoundary {
    Circle { radius: f64 },
    /// `ρ(θ) = radius + amplitude·cos(mode·θ)`.
    Cosine {
        radius: f64,
        amplitude: f64,
        mode: u32,
    },
    /// Uniform samples `ρ(2πj/N)`; values in between come from the
    /// trigonometric interpolant.
    Samples { values: Vec<f64> },
}

impl InnerBoundary {
    pub fn circle(radius: f64) -> Self {
        InnerBoundary::Circle { radius }
    }

    pub fn radius_at(&self, theta: f64) -> f64 {
        match self {
            InnerBoundary::Circle { radius } => *radius,
            InnerBoundary::Cosine {
                radius,
                amplitude,
                mode,
            } => radius + amplitude * (*mode as f64 * theta).cos(),
            InnerBoundary::Samples { values } => trig_interpolate(values, theta),
        }
    }

    /// Samples at `θ_j = 2πj/n`. For `Samples` with a matching (or dividing)
    /// count the stored values are returned exactly.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        if let InnerBoundary::Samples { values } = self {
            let m = values.len();
            if m > 0 && n % m == 0 {
                let stride = n / m;
                return (0..n)
                    .map(|j| {
                        if j % stride == 0 {
                            values[j / stride]
                        } else {
                            trig_interpolate(values, angle(j, n))
                        }
                    })
                    .collect();
            }
        }
        (0..n).map(|j| self.radius_at(angle(j, n))).collect()
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, InnerBoundary::Circle { .. })
            || matches!(self, InnerBoundary::Cosine { amplitude, .. } if *amplitude == 0.0)
    }
}

#[inline]
pub(crate) fn angle(j: usize, n: usize) -> f64 {
    2.0 * PI * (j as f64 / n as f64)
}

/// Evaluates the trigonometric interpolant through uniform samples on
/// `[0, 2π)`; the Nyquist mode (even counts) is split symmetrically.
pub(crate) fn trig_interpolate(values: &[f64], theta: f64) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    let nf = n as f64;
    let half = n / 2;
    let mut acc = values.iter().sum::<f64>() / nf;
    for k in 1..=half {
        let (mut a, mut b) = (0.0, 0.0);
        for (j, v) in values.iter().enumerate() {
            let phase = k as f64 * angle(j, n);
            a += v * phase.cos();
            b += v * phase.sin();
        }
        let kt = k as f64 * theta;
        if 2 * k == n {
            acc += a / nf * kt.cos();
        } else {
            acc += 2.0 / nf * (a * kt.cos() + b * kt.sin());
        }
    }
    acc
}

/// Which one-sided stencil family a row uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Inner,
    Interior,
    Outer,
}

/// Index-space stencil entry: `(di, dj, [w_ξ, w_η, w_ξξ, w_ξη, w_ηη])`.
pub type StencilEntry = (i32, i32, [f64; 5]);

const INTERIOR_STENCIL: [StencilEntry; 9] = [
    (0, 0, [0.0, 0.0, -2.0, 0.0, -2.0]),
    (1, 0, [0.5, 0.0, 1.0, 0.0, 0.0]),
    (-1, 0, [-0.5, 0.0, 1.0, 0.0, 0.0]),
    (0, 1, [0.0, 0.5, 0.0, 0.0, 1.0]),
    (0, -1, [0.0, -0.5, 0.0, 0.0, 1.0]),
    (1, 1, [0.0, 0.0, 0.0, 0.25, 0.0]),
    (1, -1, [0.0, 0.0, 0.0, -0.25, 0.0]),
    (-1, 1, [0.0, 0.0, 0.0, -0.25, 0.0]),
    (-1, -1, [0.0, 0.0, 0.0, 0.25, 0.0]),
];

// Forward (inner row) second-order one-sided stencils in ξ; η stays centred.
const INNER_STENCIL: [StencilEntry; 10] = [
    (0, 0, [-1.5, 0.0, 2.0, 0.0, -2.0]),
    (1, 0, [2.0, 0.0, -5.0, 0.0, 0.0]),
    (2, 0, [-0.5, 0.0, 4.0, 0.0, 0.0]),
    (3, 0, [0.0, 0.0, -1.0, 0.0, 0.0]),
    (0, 1, [0.0, 0.5, 0.0, -0.75, 1.0]),
    (0, -1, [0.0, -0.5, 0.0, 0.75, 1.0]),
    (1, 1, [0.0, 0.0, 0.0, 1.0, 0.0]),
    (1, -1, [0.0, 0.0, 0.0, -1.0, 0.0]),
    (2, 1, [0.0, 0.0, 0.0, -0.25, 0.0]),
    (2, -1, [0.0, 0.0, 0.0, 0.25, 0.0]),
];

const OUTER_STENCIL: [StencilEntry; 10] = [
    (0, 0, [1.5, 0.0, 2.0, 0.0, -2.0]),
    (-1, 0, [-2.0, 0.0, -5.0, 0.0, 0.0]),
    (-2, 0, [0.5, 0.0, 4.0, 0.0, 0.0]),
    (-3, 0, [0.0, 0.0, -1.0, 0.0, 0.0]),
    (0, 1, [0.0, 0.5, 0.0, 0.75, 1.0]),
    (0, -1, [0.0, -0.5, 0.0, -0.75, 1.0]),
    (-1, 1, [0.0, 0.0, 0.0, -1.0, 0.0]),
    (-1, -1, [0.0, 0.0, 0.0, 1.0, 0.0]),
    (-2, 1, [0.0, 0.0, 0.0, 0.25, 0.0]),
    (-2, -1, [0.0, 0.0, 0.0, -0.25, 0.0]),
];

impl RowKind {
    pub fn stencil(self) -> &'static [StencilEntry] {
        match self {
            RowKind::Inner => &INNER_STENCIL,
            RowKind::Interior => &INTERIOR_STENCIL,
            RowKind::Outer => &OUTER_STENCIL,
        }
    }
}

/// Pull-back data of the index-space map at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NodeMetric {
    /// Inverse of `J = ∂(x, y)/∂(ξ, η)`, row-major.
    pub jinv: [[f64; 2]; 2],
    /// `(ξξ, ξη, ηη)` index derivatives of the `x` coordinate.
    pub x2: [f64; 3],
    /// Same for `y`.
    pub y2: [f64; 3],
}

/// Polar tensor grid on `B_R \ K` for `n = 2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnulusGrid {
    n_r: usize,
    n_theta: usize,
    outer: f64,
    boundary: InnerBoundary,
    stretching: Stretching,
    #[serde(skip)]
    rho: Vec<f64>,
    #[serde(skip)]
    radius: Vec<f64>,
    #[serde(skip)]
    x: Vec<f64>,
    #[serde(skip)]
    y: Vec<f64>,
    #[serde(skip)]
    metrics: Vec<NodeMetric>,
}

impl PartialEq for AnnulusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n_r == other.n_r
            && self.n_theta == other.n_theta
            && self.outer == other.outer
            && self.stretching == other.stretching
            && self.rho == other.rho
    }
}

/// Serializable description from which a grid can be rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub n_r: usize,
    pub n_theta: usize,
    pub outer: f64,
    pub boundary: InnerBoundary,
    pub stretching: Stretching,
}

impl AnnulusGrid {
    pub const MIN_RADIAL: usize = 3;

    pub fn new(
        boundary: InnerBoundary,
        outer: f64,
        n_r: usize,
        n_theta: usize,
        stretching: Stretching,
    ) -> Result<Self, GridError> {
        if n_r < Self::MIN_RADIAL {
            return Err(GridError::TooCoarse {
                got: n_r,
                min: Self::MIN_RADIAL,
            });
        }
        if n_theta == 0 || n_theta % 4 != 0 {
            return Err(GridError::AngularCount(n_theta));
        }
        if let InnerBoundary::Samples { values } = &boundary {
            if values.is_empty() || n_theta % values.len() != 0 {
                return Err(GridError::SampleCount {
                    expected: n_theta,
                    got: values.len(),
                });
            }
        }
        let rho = boundary.sample(n_theta);
        for (index, &radius) in rho.iter().enumerate() {
            if !(radius > 0.0) {
                return Err(GridError::NonPositiveRadius { index, radius });
            }
            if radius >= outer {
                return Err(GridError::InnerOutside {
                    index,
                    radius,
                    outer,
                });
            }
        }
        let count = (n_r + 1) * n_theta;
        let mut radius = Vec::with_capacity(count);
        let mut x = Vec::with_capacity(count);
        let mut y = Vec::with_capacity(count);
        for i in 0..=n_r {
            let t = i as f64 / n_r as f64;
            for (j, &r0) in rho.iter().enumerate() {
                let r = if i == 0 {
                    r0
                } else if i == n_r {
                    outer
                } else {
                    stretching.place(r0, outer, t)
                };
                let th = angle(j, n_theta);
                radius.push(r);
                x.push(r * th.cos());
                y.push(r * th.sin());
            }
        }
        let mut grid = Self {
            n_r,
            n_theta,
            outer,
            boundary,
            stretching,
            rho,
            radius,
            x,
            y,
            metrics: Vec::new(),
        };
        grid.metrics = grid.compute_metrics();
        Ok(grid)
    }

    /// Builds a grid from raw inner-boundary samples (one per angle).
    pub fn from_samples(
        rho_inner: &[f64],
        outer: f64,
        n_r: usize,
        n_theta: usize,
        stretching: Stretching,
    ) -> Result<Self, GridError> {
        if rho_inner.len() != n_theta {
            return Err(GridError::SampleCount {
                expected: n_theta,
                got: rho_inner.len(),
            });
        }
        Self::new(
            InnerBoundary::Samples {
                values: rho_inner.to_vec(),
            },
            outer,
            n_r,
            n_theta,
            stretching,
        )
    }

    pub fn from_spec(spec: &AnnulusSpec) -> Result<Self, GridError> {
        Self::new(
            spec.boundary.clone(),
            spec.outer,
            spec.n_r,
            spec.n_theta,
            spec.stretching,
        )
    }

    pub fn spec(&self) -> AnnulusSpec {
        AnnulusSpec {
            n_r: self.n_r,
            n_theta: self.n_theta,
            outer: self.outer,
            boundary: self.boundary.clone(),
            stretching: self.stretching,
        }
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn outer(&self) -> f64 {
        self.outer
    }

    pub fn boundary(&self) -> &InnerBoundary {
        &self.boundary
    }

    pub fn stretching(&self) -> Stretching {
        self.stretching
    }

    pub fn len(&self) -> usize {
        self.radius.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radius.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }

    #[inline]
    pub fn row_col(&self, node: usize) -> (usize, usize) {
        (node / self.n_theta, node % self.n_theta)
    }

    #[inline]
    pub fn row_kind(&self, i: usize) -> RowKind {
        if i == 0 {
            RowKind::Inner
        } else if i == self.n_r {
            RowKind::Outer
        } else {
            RowKind::Interior
        }
    }

    pub fn theta(&self, j: usize) -> f64 {
        angle(j, self.n_theta)
    }

    pub fn inner_radius(&self, j: usize) -> f64 {
        self.rho[j]
    }

    pub fn inner_radii(&self) -> &[f64] {
        &self.rho
    }

    pub fn radius(&self, node: usize) -> f64 {
        self.radius[node]
    }

    pub fn radii(&self) -> &[f64] {
        &self.radius
    }

    #[inline]
    pub fn point(&self, node: usize) -> [f64; 2] {
        [self.x[node], self.y[node]]
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn is_boundary_row(&self, node: usize) -> bool {
        let i = node / self.n_theta;
        i == 0 || i == self.n_r
    }

    /// Nodes strictly between the two boundary rows.
    pub fn interior_nodes(&self) -> std::ops::Range<usize> {
        self.n_theta..self.n_r * self.n_theta
    }

    pub fn outer_row(&self) -> std::ops::Range<usize> {
        let start = self.n_r * self.n_theta;
        start..start + self.n_theta
    }

    pub fn inner_row(&self) -> std::ops::Range<usize> {
        0..self.n_theta
    }

    /// Flat index of the stencil neighbour `(i + di, j + dj)`, periodic in `j`.
    #[inline]
    pub fn neighbour(&self, i: usize, j: usize, di: i32, dj: i32) -> usize {
        let ii = (i as i64 + di as i64) as usize;
        let nt = self.n_theta as i64;
        let jj = ((j as i64 + dj as i64).rem_euclid(nt)) as usize;
        ii * self.n_theta + jj
    }

    /// The eight surrounding nodes that exist in the grid (fewer on boundary rows).
    pub fn ring(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.row_col(node);
        (-1i32..=1)
            .flat_map(|di| (-1i32..=1).map(move |dj| (di, dj)))
            .filter(move |&(di, dj)| {
                (di, dj) != (0, 0) && {
                    let ii = i as i64 + di as i64;
                    ii >= 0 && ii <= self.n_r as i64
                }
            })
            .map(move |(di, dj)| self.neighbour(i, j, di, dj))
    }

    /// Index-space derivatives `[ξ, η, ξξ, ξη, ηη]` of nodal data at a node.
    #[inline]
    pub fn index_derivatives(&self, values: &[f64], node: usize) -> [f64; 5] {
        let (i, j) = self.row_col(node);
        let mut d = [0.0; 5];
        for &(di, dj, w) in self.row_kind(i).stencil() {
            let v = values[self.neighbour(i, j, di, dj)];
            for k in 0..5 {
                d[k] += w[k] * v;
            }
        }
        d
    }

    /// Scale-free mesh width: the largest of `Δr/r` along rays and `Δθ`.
    pub fn mesh_width(&self) -> f64 {
        let mut h = 2.0 * PI / self.n_theta as f64;
        for i in 0..self.n_r {
            for j in 0..self.n_theta {
                let a = self.radius[self.index(i, j)];
                let b = self.radius[self.index(i + 1, j)];
                h = h.max((b - a) / a);
            }
        }
        h
    }

    /// Physical spacing to the next node along the ray (or previous on the
    /// outer row).
    pub fn radial_spacing(&self, node: usize) -> f64 {
        let (i, j) = self.row_col(node);
        if i < self.n_r {
            self.radius[self.index(i + 1, j)] - self.radius[node]
        } else {
            self.radius[node] - self.radius[self.index(i - 1, j)]
        }
    }

    /// Doubles both node counts; coarse node `(i, j)` becomes `(2i, 2j)`.
    pub fn refine(&self) -> Self {
        Self::new(
            self.boundary.clone(),
            self.outer,
            2 * self.n_r,
            2 * self.n_theta,
            self.stretching,
        )
        .expect("refining a valid grid")
    }

    pub(crate) fn metric(&self, node: usize) -> &NodeMetric {
        &self.metrics[node]
    }

    fn compute_metrics(&self) -> Vec<NodeMetric> {
        (0..self.len())
            .map(|node| {
                let dx = self.index_derivatives(&self.x, node);
                let dy = self.index_derivatives(&self.y, node);
                let (a, b, c, d) = (dx[0], dx[1], dy[0], dy[1]);
                let det = a * d - b * c;
                NodeMetric {
                    jinv: [[d / det, -b / det], [-c / det, a / det]],
                    x2: [dx[2], dx[3], dx[4]],
                    y2: [dy[2], dy[3], dy[4]],
                }
            })
            .collect()
    }

    /// Rebuilds the derived arrays after deserialization.
    pub fn rebuilt(&self) -> Result<Self, GridError> {
        Self::from_spec(&self.spec())
    }
}

/// Builds the radial grid of [`RadialGrid::new`]; kept as a free function for
/// symmetry with [`build_annulus_grid`].
pub fn build_radial_grid(
    dim: usize,
    inner: f64,
    outer: f64,
    intervals: usize,
    stretching: Stretching,
) -> Result<RadialGrid, GridError> {
    RadialGrid::new(dim, inner, outer, intervals, stretching)
}

pub fn build_annulus_grid(
    rho_inner: &[f64],
    outer: f64,
    n_r: usize,
    n_theta: usize,
) -> Result<AnnulusGrid, GridError> {
    AnnulusGrid::from_samples(rho_inner, outer, n_r, n_theta, Stretching::Geometric)
}
