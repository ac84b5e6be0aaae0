//! Moser functions, the Trudinger–Moser integral probe and the mountain-pass
//! level probe.
//!
//! ```text
//! φ_k(x) = w_{n−1}^{−1/n} · { (log k)^{(n−1)/n}          |x−c| <= δ/k
//!                            { log(δ/|x−c|)/(log k)^{1/n}  δ/k <= |x−c| <= δ
//!                            { 0                          |x−c| >= δ
//! ```

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fibering::{self, GenericRay};
use crate::grid::{Accumulator, Field, Grid};
use crate::problem::ProblemSpec;
use crate::scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoserParams {
    pub k: usize,
    pub delta: f64,
    pub center: Vec<f64>,
    /// The α of `δ_k = (log k)^{−1/(αn)}`, when the schedule is used.
    pub alpha_exponent: Option<f64>,
}

impl MoserParams {
    /// Support radius from the schedule `δ_k = (log k)^{−1/(αn)}`, `α > n/(n−1)`.
    pub fn scheduled(k: usize, n: usize, alpha_exponent: f64, center: Vec<f64>) -> Result<Self> {
        let nf = n as f64;
        if !(alpha_exponent > nf / (nf - 1.0)) {
            return Err(Error::InvalidParameters(format!("alpha > n/(n-1) violated (alpha = {alpha_exponent})")));
        }
        if k < 2 {
            return Err(Error::InvalidParameters("k >= 2 violated".into()));
        }
        let delta = (k as f64).ln().powf(-1.0 / (alpha_exponent * nf));
        Ok(MoserParams { k, delta, center, alpha_exponent: Some(alpha_exponent) })
    }

    /// Fixed support radius.
    pub fn fixed(k: usize, delta: f64, center: Vec<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameters("k >= 2 violated".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidParameters("delta > 0 violated".into()));
        }
        Ok(MoserParams { k, delta, center, alpha_exponent: None })
    }

    /// `φ_k` as a function of the distance to the center.
    pub fn profile(&self, n: usize, r: f64) -> f64 {
        let nf = n as f64;
        let lk = (self.k as f64).ln();
        let scale = scalar::sphere_area(n).powf(-1.0 / nf);
        if r <= self.delta / self.k as f64 {
            scale * lk.powf((nf - 1.0) / nf)
        } else if r < self.delta {
            scale * (self.delta / r).ln() / lk.powf(1.0 / nf)
        } else {
            0.0
        }
    }
}

/// Samples `φ_k` at the grid nodes; the support ball must lie inside Ω.
pub fn moser_field(params: &MoserParams, grid: &Arc<Grid>) -> Result<Field> {
    let n = grid.dim();
    if params.center.len() != n {
        return Err(Error::InvalidArgument(format!("center has {} coordinates, expected {n}", params.center.len())));
    }
    let c_norm = params.center.iter().map(|v| v * v).sum::<f64>().sqrt();
    let room = match grid.shape() {
        crate::grid::Shape::UnitDisk => 1.0 - c_norm,
        _ => params.center.iter().map(|v| 0.5 - v.abs()).fold(f64::INFINITY, f64::min),
    };
    if params.delta > room {
        return Err(Error::SupportExceedsDomain { delta: params.delta, inradius: room });
    }
    Field::from_fn(grid, |x| {
        let r = x.iter().zip(&params.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        params.profile(n, r)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TmRow {
    pub index: usize,
    pub norm: f64,
    /// `∫e^{α|u|^{n/(n−1)}}`, absent when the integrand overflows.
    pub value: Option<f64>,
    pub blow_up: bool,
}

/// Largest `‖u‖` accepted by the probe (discrete norms of unit fields
/// scatter around 1).
pub const TM_NORM_SLACK: f64 = 1.05;

/// `∫_Ω e^{α|u|^{n/(n−1)}}` for each field.
pub fn tm_probe(alpha: f64, fields: &[Field]) -> Result<Vec<TmRow>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument("alpha must be positive".into()));
    }
    let mut rows = Vec::with_capacity(fields.len());
    for (index, u) in fields.iter().enumerate() {
        let grid = u.grid();
        let n = grid.dim() as f64;
        let norm = u.w1n_norm();
        if norm > TM_NORM_SLACK {
            return Err(Error::InvalidArgument(format!("field {index} has norm {norm} > 1")));
        }
        let expo = n / (n - 1.0);
        let mut acc = Accumulator::default();
        let mut blow_up = false;
        for (w, v) in grid.node_weights().iter().zip(u.values()) {
            let arg = alpha * v.abs().powf(expo);
            if arg > scalar::EXP_ARG_MAX {
                blow_up = true;
                break;
            }
            acc.add(w * arg.exp());
        }
        let value = acc.value();
        let blow_up = blow_up || !value.is_finite();
        rows.push(TmRow { index, norm, value: (!blow_up).then_some(value), blow_up });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub k: usize,
    pub delta: f64,
    pub norm: f64,
    pub t_k: Option<f64>,
    pub sup_j: Option<f64>,
    /// `|dJ(tφ_k)/dt|` at `t_k`.
    pub derivative: Option<f64>,
    pub bound: f64,
    pub below_bound: Option<bool>,
    /// `t_kⁿ ‖φ_k‖ⁿ`, compared against `α_n^{n−1}`.
    pub tk_pow_n: Option<f64>,
    pub alpha_pow: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub bound: f64,
    pub rows: Vec<LevelRow>,
}

/// For each Moser function computes `sup_t J(tφ_k)` and compares it with
/// `(1/n)M(α_n^{n−1})`.
pub fn level_bound_probe(spec: &ProblemSpec, schedule: &[MoserParams]) -> Result<LevelReport> {
    if spec.exps().is_some() {
        return Err(Error::InvalidArgument("level probe needs the generic problem".into()));
    }
    let n = spec.n();
    let bound = scalar::mountain_pass_bound(spec.kirchhoff(), n)?;
    let alpha_pow = scalar::alpha_n(n).powf(n as f64 - 1.0);
    let mut rows = Vec::with_capacity(schedule.len());
    for params in schedule {
        let mut row = LevelRow {
            k: params.k,
            delta: params.delta,
            norm: f64::NAN,
            t_k: None,
            sup_j: None,
            derivative: None,
            bound,
            below_bound: None,
            tk_pow_n: None,
            alpha_pow,
            error: None,
        };
        let phi = moser_field(params, spec.grid())?;
        row.norm = phi.w1n_norm();
        let outcome = GenericRay::new(&phi, spec).and_then(|ray| fibering::generic_ray_max(&ray).map(|rm| (rm, ray.norm_pow())));
        match outcome {
            Ok((rm, s)) => {
                row.t_k = Some(rm.t);
                row.sup_j = Some(rm.value);
                row.derivative = Some(rm.derivative.abs());
                row.below_bound = Some(rm.value < bound);
                row.tk_pow_n = Some(rm.t.powf(n as f64) * s);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    Ok(LevelReport { bound, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Shape;

    #[test]
    fn center_and_edge_values() {
        let p = MoserParams::fixed(10, 0.5, vec![0.0, 0.0]).unwrap();
        let center = p.profile(2, 0.0);
        let exact = (10f64.ln() / (2.0 * std::f64::consts::PI)).sqrt();
        assert!((center - exact).abs() < 1e-15);
        assert!((center - 0.605_365_839).abs() < 1e-9);
        assert_eq!(p.profile(2, 0.5), 0.0);
        // continuity at the inner radius
        let r = 0.05;
        assert!((p.profile(2, r * (1.0 - 1e-12)) - p.profile(2, r * (1.0 + 1e-12))).abs() < 1e-10);
    }

    #[test]
    fn schedule_requires_alpha_above_critical() {
        assert!(MoserParams::scheduled(8, 2, 2.0, vec![0.0, 0.0]).is_err());
        let p = MoserParams::scheduled(8, 2, 3.0, vec![0.0, 0.0]).unwrap();
        assert!((p.delta - 8f64.ln().powf(-1.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn support_must_fit() {
        let grid = Grid::new(Shape::UnitSquare, 16).unwrap();
        let p = MoserParams::fixed(8, 0.6, vec![0.0, 0.0]).unwrap();
        assert!(matches!(moser_field(&p, &grid), Err(Error::SupportExceedsDomain { .. })));
    }

    #[test]
    fn tm_probe_of_zero_is_measure() {
        let grid = Grid::new(Shape::UnitDisk, 64).unwrap();
        let rows = tm_probe(4.0 * std::f64::consts::PI, &[Field::zeros(&grid)]).unwrap();
        assert_eq!(rows[0].value.unwrap(), grid.measure());
    }
}
