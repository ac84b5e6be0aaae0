//! Uniform lattice discretization of Ω with zero Dirichlet trace.
//!
//! Each lattice cell is split into `n!` Kuhn simplices (one per axis
//! ordering). On a simplex the gradient of the piecewise-affine interpolant is
//! a vector of forward differences along the simplex's edge path, so affine
//! fields have exact gradients and there are no zero-energy checkerboard modes.
//! Node quadrature weights give each corner `1/2ⁿ` of the covered cell measure.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per axis when estimating the covered area of a boundary-cut cell.
const CUT_SUBSAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// `[-1/2, 1/2]²`
    UnitSquare,
    /// Open unit disk in `R²`.
    UnitDisk,
    /// `[-1/2, 1/2]³`
    UnitCube,
}

impl Shape {
    pub fn dim(self) -> usize {
        match self {
            Shape::UnitSquare | Shape::UnitDisk => 2,
            Shape::UnitCube => 3,
        }
    }

    pub fn measure(self) -> f64 {
        match self {
            Shape::UnitSquare | Shape::UnitCube => 1.0,
            Shape::UnitDisk => PI,
        }
    }

    /// Radius of the largest ball centered at the origin inside the shape.
    pub fn inradius(self) -> f64 {
        match self {
            Shape::UnitSquare | Shape::UnitCube => 0.5,
            Shape::UnitDisk => 1.0,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Shape::UnitSquare => 0,
            Shape::UnitDisk => 1,
            Shape::UnitCube => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Shape::UnitSquare),
            1 => Ok(Shape::UnitDisk),
            2 => Ok(Shape::UnitCube),
            _ => Err(Error::Format(format!("unknown shape code {code}"))),
        }
    }

    fn box_lo(self) -> f64 {
        match self {
            Shape::UnitDisk => -1.0,
            _ => -0.5,
        }
    }

    fn box_width(self) -> f64 {
        match self {
            Shape::UnitDisk => 2.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::UnitSquare => "unit-square",
            Shape::UnitDisk => "unit-disk",
            Shape::UnitCube => "unit-cube",
        })
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit-square" | "square" => Ok(Shape::UnitSquare),
            "unit-disk" | "disk" => Ok(Shape::UnitDisk),
            "unit-cube" | "cube" => Ok(Shape::UnitCube),
            _ => Err(Error::InvalidArgument(format!("unknown shape `{s}` (expected unit-square, unit-disk or unit-cube)"))),
        }
    }
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Accumulator::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[derive(Debug, Clone, Copy)]
pub struct Simplex {
    /// Vertices along the edge path `v0 → v1 → … → vn`.
    pub verts: [u32; 4],
    /// `axes[i]` is the coordinate direction of edge `v_i → v_{i+1}`.
    pub axes: [u8; 3],
    pub weight: f64,
}

#[derive(Debug)]
pub struct Grid {
    shape: Shape,
    n: usize,
    resolution: usize,
    h: f64,
    per_axis: usize,
    coords: Vec<f64>,
    node_weights: Vec<f64>,
    free: Vec<bool>,
    free_nodes: Vec<usize>,
    free_index: Vec<usize>,
    simplices: Vec<Simplex>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

impl Grid {
    /// Builds the lattice with `resolution` cells per axis of the bounding box.
    pub fn new(shape: Shape, resolution: usize) -> Result<Arc<Grid>> {
        let n = shape.dim();
        if resolution < 2 {
            return Err(Error::InvalidArgument(format!("resolution must be at least 2, got {resolution}")));
        }
        let limit = if n == 3 { 256 } else { 8192 };
        if resolution > limit {
            return Err(Error::InvalidArgument(format!("resolution {resolution} exceeds the limit {limit} for n = {n}")));
        }
        let per_axis = resolution + 1;
        let node_count = per_axis.pow(n as u32);
        let h = shape.box_width() / resolution as f64;
        let lo = shape.box_lo();

        let mut coords = Vec::with_capacity(node_count * n);
        for idx in 0..node_count {
            let mut rem = idx;
            for _ in 0..n {
                coords.push(lo + (rem % per_axis) as f64 * h);
                rem /= per_axis;
            }
        }

        let mut free = vec![false; node_count];
        for (idx, f) in free.iter_mut().enumerate() {
            let x = &coords[idx * n..(idx + 1) * n];
            *f = match shape {
                Shape::UnitDisk => x.iter().map(|v| v * v).sum::<f64>() < 1.0 - 1e-12,
                _ => {
                    let mut rem = idx;
                    let mut interior = true;
                    for _ in 0..n {
                        let i = rem % per_axis;
                        interior &= i > 0 && i < resolution;
                        rem /= per_axis;
                    }
                    interior
                }
            };
        }

        let perms = permutations(n);
        let stride: Vec<usize> = (0..n).map(|d| per_axis.pow(d as u32)).collect();
        let corner_count = 1usize << n;
        let cell_count = resolution.pow(n as u32);
        let mut node_weights = vec![0.0; node_count];
        let mut simplices = Vec::with_capacity(cell_count * perms.len());
        let full = h.powi(n as i32);

        for cell in 0..cell_count {
            let mut rem = cell;
            let mut base = 0usize;
            let mut cell_lo = [0.0; 3];
            for d in 0..n {
                let i = rem % resolution;
                rem /= resolution;
                base += i * stride[d];
                cell_lo[d] = lo + i as f64 * h;
            }
            let measure = match shape {
                Shape::UnitDisk => disk_coverage(cell_lo[0], cell_lo[1], h) * full,
                _ => full,
            };
            if measure <= 0.0 {
                continue;
            }
            for c in 0..corner_count {
                let mut node = base;
                for d in 0..n {
                    if c >> d & 1 == 1 {
                        node += stride[d];
                    }
                }
                node_weights[node] += measure / corner_count as f64;
            }
            let mut has_free = false;
            for c in 0..corner_count {
                let mut node = base;
                for d in 0..n {
                    if c >> d & 1 == 1 {
                        node += stride[d];
                    }
                }
                has_free |= free[node];
            }
            if !has_free {
                continue;
            }
            let weight = measure / perms.len() as f64;
            for perm in &perms {
                let mut verts = [0u32; 4];
                let mut axes = [0u8; 3];
                let mut v = base;
                verts[0] = v as u32;
                for (i, &ax) in perm.iter().enumerate() {
                    v += stride[ax];
                    verts[i + 1] = v as u32;
                    axes[i] = ax as u8;
                }
                simplices.push(Simplex { verts, axes, weight });
            }
        }

        let free_nodes: Vec<usize> = (0..node_count).filter(|&i| free[i]).collect();
        let mut free_index = vec![usize::MAX; node_count];
        for (k, &j) in free_nodes.iter().enumerate() {
            free_index[j] = k;
        }
        Ok(Arc::new(Grid { shape, n, resolution, h, per_axis, coords, node_weights, free, free_nodes, free_index, simplices }))
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn resolution(&self) -> usize {
        self.resolution
    }
    /// Lattice spacing.
    pub fn spacing(&self) -> f64 {
        self.h
    }
    pub fn nodes_per_axis(&self) -> usize {
        self.per_axis
    }
    pub fn node_count(&self) -> usize {
        self.node_weights.len()
    }
    pub fn point(&self, node: usize) -> &[f64] {
        &self.coords[node * self.n..(node + 1) * self.n]
    }
    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }
    pub fn is_free(&self, node: usize) -> bool {
        self.free[node]
    }
    /// Indices of the unknowns (nodes not on or outside ∂Ω).
    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }
    /// Position of `node` in the unknown vector, if it is free.
    pub fn free_index(&self, node: usize) -> Option<usize> {
        let k = self.free_index[node];
        (k != usize::MAX).then_some(k)
    }
    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    /// Sum of the quadrature weights.
    pub fn measure(&self) -> f64 {
        neumaier_sum(self.node_weights.iter().copied())
    }

    /// Quadrature of nodal values.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.node_count() {
            return Err(Error::GridMismatch(format!("expected {} nodal values, got {}", self.node_count(), values.len())));
        }
        Ok(neumaier_sum(self.node_weights.iter().zip(values).map(|(w, v)| w * v)))
    }

    /// Quadrature of `f` evaluated at the nodes.
    pub fn integrate_fn(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        neumaier_sum((0..self.node_count()).map(|j| self.node_weights[j] * f(self.point(j))))
    }

    #[inline]
    pub fn simplex_gradient(&self, s: &Simplex, values: &[f64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for i in 0..self.n {
            g[s.axes[i] as usize] = (values[s.verts[i + 1] as usize] - values[s.verts[i] as usize]) / self.h;
        }
        g
    }

    /// `Σ_T |T| |∇u|_Tⁿ`, the discrete `‖u‖ⁿ`.
    pub fn gradient_power(&self, values: &[f64]) -> f64 {
        let half_n = self.n as f64 / 2.0;
        let mut acc = Accumulator::default();
        for s in &self.simplices {
            let g = self.simplex_gradient(s, values);
            let sq = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
            if sq > 0.0 {
                let pw = if self.n == 2 { sq } else { sq.powf(half_n) };
                acc.add(s.weight * pw);
            }
        }
        acc.value()
    }

    /// Laplacian stiffness matrix on the free nodes in CSR form.
    pub fn stiffness(&self) -> Csr {
        let m = self.free_nodes.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let inv_h2 = 1.0 / (self.h * self.h);
        for s in &self.simplices {
            for i in 0..self.n {
                let a = s.verts[i] as usize;
                let b = s.verts[i + 1] as usize;
                let c = s.weight * inv_h2;
                let (fa, fb) = (self.free_index(a), self.free_index(b));
                if let Some(ia) = fa {
                    rows[ia].push((ia, c));
                    if let Some(ib) = fb {
                        rows[ia].push((ib, -c));
                    }
                }
                if let Some(ib) = fb {
                    rows[ib].push((ib, c));
                    if let Some(ia) = fa {
                        rows[ib].push((ia, -c));
                    }
                }
            }
        }
        let mut indptr = Vec::with_capacity(m + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for (j, v) in row {
                if j == last {
                    *data.last_mut().expect("entry") += v;
                } else {
                    indices.push(j);
                    data.push(v);
                    last = j;
                }
            }
            indptr.push(indices.len());
        }
        Csr { indptr, indices, data }
    }
}

fn disk_coverage(x0: f64, y0: f64, h: f64) -> f64 {
    let inside = |x: f64, y: f64| x * x + y * y < 1.0;
    let corners = [(x0, y0), (x0 + h, y0), (x0, y0 + h), (x0 + h, y0 + h)];
    if corners.iter().all(|&(x, y)| inside(x, y)) {
        return 1.0;
    }
    let cx = 0.0f64.clamp(x0, x0 + h);
    let cy = 0.0f64.clamp(y0, y0 + h);
    if cx * cx + cy * cy >= 1.0 {
        return 0.0;
    }
    let step = h / CUT_SUBSAMPLES as f64;
    let mut hits = 0usize;
    for i in 0..CUT_SUBSAMPLES {
        for j in 0..CUT_SUBSAMPLES {
            if inside(x0 + (i as f64 + 0.5) * step, y0 + (j as f64 + 0.5) * step) {
                hits += 1;
            }
        }
    }
    hits as f64 / (CUT_SUBSAMPLES * CUT_SUBSAMPLES) as f64
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yi = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows())
            .map(|i| (self.indptr[i]..self.indptr[i + 1]).find(|&k| self.indices[k] == i).map_or(0.0, |k| self.data[k]))
            .collect()
    }

    /// Jacobi-preconditioned conjugate gradients for `A x = b`, starting from `x`.
    /// Returns the iteration count.
    pub fn solve_cg(&self, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<usize> {
        let n = self.rows();
        let diag = self.diagonal();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(0);
        }
        let mut r = vec![0.0; n];
        self.mul(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        for it in 0..max_iter {
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= rel_tol * bnorm {
                return Ok(it);
            }
            self.mul(&p, &mut ap);
            let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        Err(Error::NonConvergence { iterations: max_iter, residual: rnorm / bnorm })
    }
}

/// Nodal values of a function vanishing on the fixed (boundary) nodes.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) && self.values == other.values
    }
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Field { grid: grid.clone(), values: vec![0.0; grid.node_count()] }
    }

    /// Samples `f` at the free nodes; fixed nodes are set to zero.
    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let mut values = vec![0.0; grid.node_count()];
        for &j in grid.free_nodes() {
            let v = f(grid.point(j));
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite value {v} at node {j}")));
            }
            values[j] = v;
        }
        Ok(Field { grid: grid.clone(), values })
    }

    /// Takes ownership of nodal values; fixed nodes must already be zero.
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch(format!("expected {} nodal values, got {}", grid.node_count(), values.len())));
        }
        for (j, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite value {v} at node {j}")));
            }
            if !grid.is_free(j) && v != 0.0 {
                return Err(Error::InvalidArgument(format!("boundary node {j} carries nonzero value {v}")));
            }
        }
        Ok(Field { grid: grid.clone(), values })
    }

    /// Builds a field from values on the free nodes, in `grid.free_nodes()` order.
    pub fn from_free(grid: &Arc<Grid>, free_values: &[f64]) -> Result<Self> {
        if free_values.len() != grid.free_nodes().len() {
            return Err(Error::GridMismatch(format!("expected {} free values, got {}", grid.free_nodes().len(), free_values.len())));
        }
        let mut values = vec![0.0; grid.node_count()];
        for (&j, &v) in grid.free_nodes().iter().zip(free_values) {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite value {v} at node {j}")));
            }
            values[j] = v;
        }
        Ok(Field { grid: grid.clone(), values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn free_values(&self) -> Vec<f64> {
        self.grid.free_nodes().iter().map(|&j| self.values[j]).collect()
    }

    pub fn scaled(&self, t: f64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|v| v * t).collect() }
    }

    pub fn abs(&self) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|v| v.abs()).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || (self.grid.shape == other.grid.shape && self.grid.resolution == other.grid.resolution)
    }

    /// `‖u‖ⁿ = ∫|∇u|ⁿ`.
    pub fn gradient_power(&self) -> f64 {
        self.grid.gradient_power(&self.values)
    }

    /// `‖u‖ = (∫|∇u|ⁿ)^{1/n}`.
    pub fn w1n_norm(&self) -> f64 {
        self.gradient_power().powf(1.0 / self.grid.n as f64)
    }

    /// `‖u − v‖`.
    pub fn distance(&self, other: &Field) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        let diff: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(self.grid.gradient_power(&diff).powf(1.0 / self.grid.n as f64))
    }

    /// Fraction of nodes with value `>= −tol`.
    pub fn nonnegative_fraction(&self, tol: f64) -> f64 {
        let count = self.values.iter().filter(|&&v| v >= -tol).count();
        count as f64 / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Named weight profiles `h(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightProfile {
    /// `h ≡ 1`
    One,
    /// `h(x) = sin(2π x₁)`, sign-changing.
    Sin2pix,
    /// `h(x) = exp(−|x|²/0.1)`
    GaussianBump,
    /// `h(x) = 1` where `x₁ > 0`, else 0.
    Indicator,
}

impl WeightProfile {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            WeightProfile::One => 1.0,
            WeightProfile::Sin2pix => (2.0 * PI * x[0]).sin(),
            WeightProfile::GaussianBump => (-x.iter().map(|v| v * v).sum::<f64>() / 0.1).exp(),
            WeightProfile::Indicator => {
                if x[0] > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightProfile::One => "one",
            WeightProfile::Sin2pix => "sin2pix",
            WeightProfile::GaussianBump => "gaussian-bump",
            WeightProfile::Indicator => "indicator",
        }
    }
}

impl FromStr for WeightProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(WeightProfile::One),
            "sin2pix" => Ok(WeightProfile::Sin2pix),
            "gaussian-bump" => Ok(WeightProfile::GaussianBump),
            "indicator" => Ok(WeightProfile::Indicator),
            _ => Err(Error::InvalidArgument(format!("unknown weight `{s}` (expected one, sin2pix, gaussian-bump or indicator)"))),
        }
    }
}

/// Nodal weight `h` with cached norms `∫|h|^γ` and `l = ∫|h|^{k/(k−1)}`.
#[derive(Debug, Clone)]
pub struct Weight {
    grid: Arc<Grid>,
    values: Vec<f64>,
    gamma_norm: f64,
    l_norm: f64,
}

impl Weight {
    /// `gamma` and `kprime` are the integrability exponents of the problem.
    pub fn new(grid: &Arc<Grid>, values: Vec<f64>, gamma: f64, kprime: f64) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch(format!("expected {} weight values, got {}", grid.node_count(), values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("weight values must be finite".into()));
        }
        if !grid.free_nodes().iter().any(|&j| values[j] > 0.0) {
            return Err(Error::InvalidParameters("h+ not identically zero violated: no interior node with h > 0".into()));
        }
        let gamma_norm = grid.integrate(&values.iter().map(|v| v.abs().powf(gamma)).collect::<Vec<_>>())?;
        let l_norm = grid.integrate(&values.iter().map(|v| v.abs().powf(kprime)).collect::<Vec<_>>())?;
        Ok(Weight { grid: grid.clone(), values, gamma_norm, l_norm })
    }

    pub fn from_profile(grid: &Arc<Grid>, profile: WeightProfile, gamma: f64, kprime: f64) -> Result<Self> {
        let values = (0..grid.node_count()).map(|j| profile.eval(grid.point(j))).collect();
        Self::new(grid, values, gamma, kprime)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    /// `∫|h|^γ`
    pub fn gamma_norm(&self) -> f64 {
        self.gamma_norm
    }
    /// `l = ∫|h|^{k/(k−1)}`
    pub fn l_norm(&self) -> f64 {
        self.l_norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_measure_and_symmetry() {
        let g = Grid::new(Shape::UnitSquare, 16).unwrap();
        assert!((g.measure() - 1.0).abs() < 1e-12);
        assert!(g.integrate_fn(|x| x[0]).abs() < 1e-12);
        assert_eq!(g.free_nodes().len(), 15 * 15);
        assert_eq!(g.simplices().len(), 2 * 16 * 16);
    }

    #[test]
    fn cube_measure() {
        let g = Grid::new(Shape::UnitCube, 6).unwrap();
        assert!((g.measure() - 1.0).abs() < 1e-12);
        assert_eq!(g.simplices().len(), 6 * 216);
    }

    #[test]
    fn disk_measure() {
        let g = Grid::new(Shape::UnitDisk, 256).unwrap();
        assert!((g.measure() - PI).abs() < 5e-3, "{}", g.measure());
    }

    #[test]
    fn affine_gradient_is_exact() {
        let g = Grid::new(Shape::UnitCube, 4).unwrap();
        let vals: Vec<f64> = (0..g.node_count()).map(|j| {
            let x = g.point(j);
            1.0 + 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2]
        }).collect();
        for s in g.simplices() {
            let grad = g.simplex_gradient(s, &vals);
            assert!((grad[0] - 2.0).abs() < 1e-12 && (grad[1] + 3.0).abs() < 1e-12 && (grad[2] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn stiffness_matches_gradient_power() {
        let g = Grid::new(Shape::UnitSquare, 8).unwrap();
        let u = Field::from_fn(&g, |x| (x[0] * 3.0).sin() + x[1] * x[1]).unwrap();
        let free = u.free_values();
        let k = g.stiffness();
        let mut ku = vec![0.0; free.len()];
        k.mul(&free, &mut ku);
        let quad: f64 = free.iter().zip(&ku).map(|(a, b)| a * b).sum();
        assert!((quad - u.gradient_power()).abs() < 1e-12 * quad);
    }

    #[test]
    fn cg_solves_poisson() {
        let g = Grid::new(Shape::UnitSquare, 16).unwrap();
        let k = g.stiffness();
        let b = vec![1.0; k.rows()];
        let mut x = vec![0.0; k.rows()];
        k.solve_cg(&b, &mut x, 1e-12, 1000).unwrap();
        let mut kx = vec![0.0; k.rows()];
        k.mul(&x, &mut kx);
        assert!(kx.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn field_rejects_boundary_values() {
        let g = Grid::new(Shape::UnitSquare, 4).unwrap();
        let mut vals = vec![0.0; g.node_count()];
        vals[0] = 1.0;
        assert!(Field::from_values(&g, vals).is_err());
    }

    #[test]
    fn weight_requires_positive_part() {
        let g = Grid::new(Shape::UnitSquare, 4).unwrap();
        assert!(Weight::new(&g, vec![-1.0; g.node_count()], 4.0, 1.2).is_err());
        let w = Weight::from_profile(&g, WeightProfile::One, 4.0, 1.2).unwrap();
        assert!((w.l_norm() - 1.0).abs() < 1e-12);
    }
}
