//! Discrete energies and weak-form residuals.
//!
//! The residual returned here is the exact gradient of the discrete energy with
//! respect to the free nodal values, so the two are consistent by construction.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Accumulator, Csr, Field, Grid, Weight};
use crate::scalar::{self, ExponentSet, GenericNonlinearity, KirchhoffSpec};

/// Regularization of `|∇u|^{n−2}` in residual assembly for `n > 2`.
pub const GRAD_REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Clone)]
pub enum Source {
    /// `λh|u|^{q−1}u + g(u)`
    ConcaveConvex { exps: ExponentSet, weight: Weight },
    /// `f(x, u) = h(x, u) e^{|u|^{n/(n−1)}}`
    Generic(GenericNonlinearity),
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    grid: Arc<Grid>,
    kirchhoff: KirchhoffSpec,
    source: Source,
}

impl ProblemSpec {
    pub fn concave_convex(grid: &Arc<Grid>, exps: ExponentSet, kirchhoff: KirchhoffSpec, weight: Weight) -> Result<Self> {
        if grid.dim() != exps.n() {
            return Err(Error::InvalidParameters(format!("grid dimension {} does not match n = {}", grid.dim(), exps.n())));
        }
        if !Arc::ptr_eq(grid, weight.grid()) {
            return Err(Error::GridMismatch("weight was built on a different grid".into()));
        }
        Ok(ProblemSpec { grid: grid.clone(), kirchhoff, source: Source::ConcaveConvex { exps, weight } })
    }

    pub fn generic(grid: &Arc<Grid>, kirchhoff: KirchhoffSpec, nonlinearity: GenericNonlinearity) -> Result<Self> {
        if grid.dim() != nonlinearity.n() {
            return Err(Error::InvalidParameters(format!("grid dimension {} does not match n = {}", grid.dim(), nonlinearity.n())));
        }
        Ok(ProblemSpec { grid: grid.clone(), kirchhoff, source: Source::Generic(nonlinearity) })
    }

    /// Same problem with a different λ.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        match &self.source {
            Source::ConcaveConvex { exps, weight } => Ok(ProblemSpec {
                grid: self.grid.clone(),
                kirchhoff: self.kirchhoff.clone(),
                source: Source::ConcaveConvex { exps: exps.with_lambda(lambda)?, weight: weight.clone() },
            }),
            Source::Generic(_) => Err(Error::InvalidArgument("the generic problem has no λ".into())),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn n(&self) -> usize {
        self.grid.dim()
    }
    pub fn kirchhoff(&self) -> &KirchhoffSpec {
        &self.kirchhoff
    }
    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn exps(&self) -> Option<&ExponentSet> {
        match &self.source {
            Source::ConcaveConvex { exps, .. } => Some(exps),
            Source::Generic(_) => None,
        }
    }

    pub fn weight(&self) -> Option<&Weight> {
        match &self.source {
            Source::ConcaveConvex { weight, .. } => Some(weight),
            Source::Generic(_) => None,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.exps().map_or(0.0, |e| e.lambda())
    }

    pub(crate) fn require_concave_convex(&self) -> Result<(&ExponentSet, &Weight)> {
        match &self.source {
            Source::ConcaveConvex { exps, weight } => Ok((exps, weight)),
            Source::Generic(_) => Err(Error::InvalidArgument("operation requires the concave-convex problem".into())),
        }
    }

    pub(crate) fn check_field(&self, u: &Field) -> Result<()> {
        if Arc::ptr_eq(u.grid(), &self.grid) || u.same_grid(&Field::zeros(&self.grid)) {
            Ok(())
        } else {
            Err(Error::GridMismatch("field and problem live on different grids".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum HSign {
    Positive,
    Negative,
    Zero,
}

/// `H(u) = ∫ h|u|^{q+1}`.
pub fn h_eval(u: &Field, weight: &Weight, exps: &ExponentSet) -> f64 {
    h_parts(u, weight, exps).0
}

/// `(∫h|u|^{q+1}, ∫|h||u|^{q+1})`.
pub(crate) fn h_parts(u: &Field, weight: &Weight, exps: &ExponentSet) -> (f64, f64) {
    let grid = u.grid();
    let w = grid.node_weights();
    let h = weight.values();
    let mut signed = Accumulator::default();
    let mut total = Accumulator::default();
    for &j in grid.free_nodes() {
        let v = u.values()[j];
        if v != 0.0 {
            let pw = w[j] * v.abs().powf(exps.q() + 1.0);
            signed.add(h[j] * pw);
            total.add(h[j].abs() * pw);
        }
    }
    (signed.value(), total.value())
}

/// Sign of `H(u)` with dead-band `1e−12 · ∫|h||u|^{q+1}`.
pub fn h_sign(u: &Field, weight: &Weight, exps: &ExponentSet) -> HSign {
    let (signed, total) = h_parts(u, weight, exps);
    if signed > 1e-12 * total {
        HSign::Positive
    } else if signed < -1e-12 * total {
        HSign::Negative
    } else {
        HSign::Zero
    }
}

fn node_error(node: usize, e: Error) -> Error {
    match e {
        Error::Saturation { s } => Error::NodeSaturation { node, s },
        other => other,
    }
}

/// Discrete energy `J(u)`.
pub fn energy(u: &Field, spec: &ProblemSpec) -> Result<f64> {
    spec.check_field(u)?;
    let n = spec.n() as f64;
    let s = u.gradient_power();
    let kin = spec.kirchhoff.big_m(s)? / n;
    let grid = u.grid();
    let w = grid.node_weights();
    let mut acc = Accumulator::default();
    match &spec.source {
        Source::ConcaveConvex { exps, weight } => {
            let h = weight.values();
            let lam = exps.lambda() / (exps.q() + 1.0);
            for &j in grid.free_nodes() {
                let v = u.values()[j];
                if v != 0.0 {
                    let big_g = scalar::big_g_eval(v, exps).map_err(|e| node_error(j, e))?;
                    acc.add(w[j] * (lam * h[j] * v.abs().powf(exps.q() + 1.0) + big_g));
                }
            }
        }
        Source::Generic(nl) => {
            for &j in grid.free_nodes() {
                let v = u.values()[j];
                if v > 0.0 {
                    acc.add(w[j] * nl.big_f_eval(grid.point(j), v).map_err(|e| node_error(j, e))?);
                }
            }
        }
    }
    Ok(kin - acc.value())
}

/// Discrete weak-form residual over the free nodes.
#[derive(Debug, Clone)]
pub struct Residual {
    /// `∂J/∂u_j` in `grid.free_nodes()` order.
    pub vector: Vec<f64>,
    /// `(Σ_j R_j² / w_j)^{1/2}`.
    pub norm: f64,
    /// Same norm of the operator part plus that of the source part.
    pub scale: f64,
}

impl Residual {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.norm / self.scale
        } else {
            0.0
        }
    }

    /// `R · φ` for a field `φ`.
    pub fn apply(&self, phi: &Field) -> f64 {
        let free = phi.grid().free_nodes();
        self.vector.iter().zip(free).map(|(r, &j)| r * phi.values()[j]).sum()
    }
}

/// Operator part `m(S)·∂S/∂u / n` and source part per free node.
pub(crate) fn residual_parts(u: &Field, spec: &ProblemSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    spec.check_field(u)?;
    let grid = u.grid();
    let n = grid.dim();
    let values = u.values();
    let coef = spec.kirchhoff.m(u.gradient_power());
    let h = grid.spacing();
    let mut op = vec![0.0; grid.node_count()];
    for s in grid.simplices() {
        let g = grid.simplex_gradient(s, values);
        let sq = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
        let pw = match n {
            2 => 1.0,
            _ => (sq + GRAD_REGULARIZATION * GRAD_REGULARIZATION).powf((n as f64 - 2.0) / 2.0),
        };
        let c = s.weight * coef * pw / h;
        for i in 0..n {
            let flux = c * g[s.axes[i] as usize];
            op[s.verts[i + 1] as usize] += flux;
            op[s.verts[i] as usize] -= flux;
        }
    }
    let w = grid.node_weights();
    let free = grid.free_nodes();
    let mut src = Vec::with_capacity(free.len());
    match &spec.source {
        Source::ConcaveConvex { exps, weight } => {
            let hv = weight.values();
            for &j in free {
                let v = values[j];
                let f = if v == 0.0 {
                    0.0
                } else {
                    scalar::g_eval(v, exps).map_err(|e| node_error(j, e))?
                        + exps.lambda() * hv[j] * v.abs().powf(exps.q() - 1.0) * v
                };
                src.push(w[j] * f);
            }
        }
        Source::Generic(nl) => {
            for &j in free {
                src.push(w[j] * nl.f_eval(grid.point(j), values[j]).map_err(|e| node_error(j, e))?);
            }
        }
    }
    Ok((free.iter().map(|&j| op[j]).collect(), src))
}

fn weighted_norm(v: &[f64], grid: &Grid) -> f64 {
    let w = grid.node_weights();
    v.iter().zip(grid.free_nodes()).map(|(r, &j)| r * r / w[j]).sum::<f64>().sqrt()
}

pub fn residual(u: &Field, spec: &ProblemSpec) -> Result<Residual> {
    let (op, src) = residual_parts(u, spec)?;
    let vector: Vec<f64> = op.iter().zip(&src).map(|(a, b)| a - b).collect();
    let grid = u.grid();
    Ok(Residual { norm: weighted_norm(&vector, grid), scale: weighted_norm(&op, grid) + weighted_norm(&src, grid), vector })
}

/// Jacobian of the residual for `n = 2`: `A + c vvᵀ` with `A = m(S)K − D`,
/// `v = Ku` and `c = 2m'(S)`, where `D` is the diagonal source derivative.
pub(crate) struct NewtonSystem {
    pub a: Csr,
    pub v: Vec<f64>,
    pub c: f64,
}

pub(crate) fn newton_system(u: &Field, spec: &ProblemSpec, stiffness: &Csr) -> Result<NewtonSystem> {
    spec.check_field(u)?;
    if spec.n() != 2 {
        return Err(Error::InvalidArgument("Newton systems are assembled for n = 2 only".into()));
    }
    let grid = u.grid();
    let free_vals = u.free_values();
    let s = u.gradient_power();
    let m = spec.kirchhoff.m(s);
    let mut v = vec![0.0; free_vals.len()];
    stiffness.mul(&free_vals, &mut v);
    let w = grid.node_weights();
    let mut diag = Vec::with_capacity(free_vals.len());
    match &spec.source {
        Source::ConcaveConvex { exps, weight } => {
            let hv = weight.values();
            for &j in grid.free_nodes() {
                let x = u.values()[j];
                let d = if x == 0.0 {
                    0.0
                } else {
                    scalar::g_prime_eval(x, exps).map_err(|e| node_error(j, e))?
                        + exps.q() * exps.lambda() * hv[j] * x.abs().powf(exps.q() - 1.0)
                };
                diag.push(w[j] * d);
            }
        }
        Source::Generic(nl) => {
            for &j in grid.free_nodes() {
                let x = u.values()[j];
                let p = grid.point(j);
                let eps = 1e-6 * x.abs().max(1e-3);
                let d = if x > eps {
                    (nl.f_eval(p, x + eps).map_err(|e| node_error(j, e))? - nl.f_eval(p, x - eps).map_err(|e| node_error(j, e))?) / (2.0 * eps)
                } else {
                    (nl.f_eval(p, x + eps).map_err(|e| node_error(j, e))? - nl.f_eval(p, x).map_err(|e| node_error(j, e))?) / eps
                };
                diag.push(w[j] * d);
            }
        }
    }
    let mut a = stiffness.clone();
    for i in 0..a.rows() {
        for k in a.indptr[i]..a.indptr[i + 1] {
            a.data[k] *= m;
            if a.indices[k] == i {
                a.data[k] -= diag[i];
            }
        }
    }
    Ok(NewtonSystem { a, v, c: 2.0 * spec.kirchhoff.m_prime(s) })
}

/// Default acceptance threshold `1e−8 (1 + ‖u‖)`.
pub fn default_residual_tolerance(u: &Field) -> f64 {
    1e-8 * (1.0 + u.w1n_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Shape, WeightProfile};

    fn desk(lambda: f64, res: usize) -> ProblemSpec {
        let grid = Grid::new(Shape::UnitSquare, res).unwrap();
        let exps = ExponentSet::new(2, 4.0, 0.5, 2.0, lambda).unwrap();
        let weight = Weight::from_profile(&grid, WeightProfile::One, exps.gamma(), exps.kprime()).unwrap();
        ProblemSpec::concave_convex(&grid, exps, KirchhoffSpec::affine(1.0, 1.0).unwrap(), weight).unwrap()
    }

    #[test]
    fn zero_field() {
        let spec = desk(0.0, 8);
        let u = Field::zeros(spec.grid());
        assert_eq!(energy(&u, &spec).unwrap(), 0.0);
        assert_eq!(residual(&u, &spec).unwrap().norm, 0.0);
    }

    #[test]
    fn h_sign_with_sign_changing_weight() {
        let grid = Grid::new(Shape::UnitSquare, 16).unwrap();
        let exps = ExponentSet::new(2, 4.0, 0.5, 2.0, 0.1).unwrap();
        let weight = Weight::from_profile(&grid, WeightProfile::Sin2pix, exps.gamma(), exps.kprime()).unwrap();
        let left = Field::from_fn(&grid, |x| if x[0] < -0.05 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(h_sign(&left, &weight, &exps), HSign::Negative);
        let right = Field::from_fn(&grid, |x| if x[0] > 0.05 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(h_sign(&right, &weight, &exps), HSign::Positive);
        assert_eq!(h_sign(&Field::zeros(&grid), &weight, &exps), HSign::Zero);
    }

    #[test]
    fn energy_gradient_matches_central_difference() {
        let spec = desk(0.05, 8);
        let grid = spec.grid().clone();
        let u = Field::from_fn(&grid, |x| 0.8 * (1.0 - 4.0 * x[0] * x[0]) * (1.0 - 4.0 * x[1] * x[1]) + 0.1 * x[0]).unwrap();
        let phi = Field::from_fn(&grid, |x| (3.0 * x[1]).cos() * (1.0 - 4.0 * x[0] * x[0])).unwrap();
        let r = residual(&u, &spec).unwrap();
        let eps = 1e-5;
        let plus = Field::from_values(&grid, u.values().iter().zip(phi.values()).map(|(a, b)| a + eps * b).collect()).unwrap();
        let minus = Field::from_values(&grid, u.values().iter().zip(phi.values()).map(|(a, b)| a - eps * b).collect()).unwrap();
        let fd = (energy(&plus, &spec).unwrap() - energy(&minus, &spec).unwrap()) / (2.0 * eps);
        assert!((fd - r.apply(&phi)).abs() < 1e-7 * (1.0 + fd.abs()), "{fd} vs {}", r.apply(&phi));
    }
}
