//! Fibering maps `φ_u(t) = J(tu)` along a fixed direction and the Nehari
//! branch points `t₁ < t* < t₂`.
//!
//! With `S = ‖u‖ⁿ` and `H = ∫h|u|^{q+1}`:
//!
//! ```text
//! φ'(t)  = t^{n−1} m(tⁿS) S − λ t^q H − ∫g(tu)u
//! φ''(t) = (n−1) t^{n−2} m S + n t^{2n−2} m' S² − qλ t^{q−1} H − ∫g'(tu)u²
//! ψ(t)   = t^{n−1−q} m(tⁿS) S − t^{−q} ∫g(tu)u,      φ'(t) = t^q (ψ(t) − λH)
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Accumulator, Field};
use crate::problem::{self, HSign, ProblemSpec};
use crate::roots;
use crate::scalar::{self, ExponentSet, GenericNonlinearity, KirchhoffSpec};

/// Relative tolerance of the branch root solves.
const ROOT_TOL: f64 = 1e-14;
const TSTAR_MIN: f64 = 1e-8;
const TSTAR_MAX: f64 = 1e8;

pub(crate) fn is_saturation(e: &Error) -> bool {
    matches!(e, Error::Saturation { .. } | Error::NodeSaturation { .. })
}

/// Walks `t ← t·factor` from `from` until `f` changes sign relative to `f_from`.
/// Overflowing evaluations count as lying past the sign change; the search then
/// bisects back towards a finite point.
fn scan<F>(f: &mut F, from: f64, f_from: f64, factor: f64, limit: f64, what: &'static str) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let positive = f_from > 0.0;
    let mut near = from;
    let mut t = from;
    loop {
        t *= factor;
        let beyond = if factor > 1.0 { t > limit } else { t < limit };
        if beyond {
            return Err(Error::BracketNotFound { what, lo: from.min(t), hi: from.max(t) });
        }
        match f(t) {
            Ok(v) if v.is_nan() => return Err(Error::BracketNotFound { what, lo: from.min(t), hi: from.max(t) }),
            Ok(v) if (v > 0.0) != positive => return Ok((t, v)),
            Ok(_) => near = t,
            Err(e) if is_saturation(&e) => {
                let mut far = t;
                for _ in 0..200 {
                    let mid = (near * far).sqrt();
                    if mid == near || mid == far {
                        break;
                    }
                    match f(mid) {
                        Ok(v) if (v > 0.0) != positive => return Ok((mid, v)),
                        Ok(_) => near = mid,
                        Err(e) if is_saturation(&e) => far = mid,
                        Err(e) => return Err(e),
                    }
                }
                return Err(Error::BracketNotFound { what, lo: near.min(far), hi: near.max(far) });
            }
            Err(e) => return Err(e),
        }
    }
}

/// Values along `t ↦ tu` for the concave–convex problem.
#[derive(Debug, Clone)]
pub struct Ray<'a> {
    exps: &'a ExponentSet,
    kirchhoff: &'a KirchhoffSpec,
    norm_pow: f64,
    h_value: f64,
    h_abs: f64,
    weights: Vec<f64>,
    values: Vec<f64>,
    nodes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiValue {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl<'a> Ray<'a> {
    pub fn new(u: &Field, spec: &'a ProblemSpec) -> Result<Self> {
        let (exps, weight) = spec.require_concave_convex()?;
        spec.check_field(u)?;
        let grid = u.grid();
        let (h_value, h_abs) = problem::h_parts(u, weight, exps);
        let mut weights = Vec::new();
        let mut values = Vec::new();
        let mut nodes = Vec::new();
        for &j in grid.free_nodes() {
            let v = u.values()[j];
            if v != 0.0 {
                weights.push(grid.node_weights()[j]);
                values.push(v);
                nodes.push(j);
            }
        }
        Ok(Ray { exps, kirchhoff: spec.kirchhoff(), norm_pow: u.gradient_power(), h_value, h_abs, weights, values, nodes })
    }

    /// `‖u‖ⁿ`
    pub fn norm_pow(&self) -> f64 {
        self.norm_pow
    }

    /// `H(u)`
    pub fn h_value(&self) -> f64 {
        self.h_value
    }

    pub fn h_sign(&self) -> HSign {
        if self.h_value > 1e-12 * self.h_abs {
            HSign::Positive
        } else if self.h_value < -1e-12 * self.h_abs {
            HSign::Negative
        } else {
            HSign::Zero
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    fn attach(&self, k: usize, e: Error) -> Error {
        match e {
            Error::Saturation { s } => Error::NodeSaturation { node: self.nodes[k], s },
            other => other,
        }
    }

    /// `(∫g(tu)u, ∫g'(tu)u²)`.
    pub fn moments(&self, t: f64) -> Result<(f64, f64)> {
        let mut a = Accumulator::default();
        let mut b = Accumulator::default();
        for (k, (&w, &v)) in self.weights.iter().zip(&self.values).enumerate() {
            let (gs, gps) = scalar::g_moments(t * v, self.exps).map_err(|e| self.attach(k, e))?;
            a.add(w * gs);
            b.add(w * gps);
        }
        Ok((a.value() / t, b.value() / (t * t)))
    }

    /// `∫G(tu)`.
    pub fn primitive_sum(&self, t: f64) -> Result<f64> {
        let mut acc = Accumulator::default();
        for (k, (&w, &v)) in self.weights.iter().zip(&self.values).enumerate() {
            acc.add(w * scalar::big_g_eval(t * v, self.exps).map_err(|e| self.attach(k, e))?);
        }
        Ok(acc.value())
    }

    fn lambda(&self) -> f64 {
        self.exps.lambda()
    }

    pub fn phi_d1(&self, t: f64) -> Result<f64> {
        let n = self.exps.n() as f64;
        let s = self.norm_pow;
        let (gu, _) = self.moments(t)?;
        Ok(t.powf(n - 1.0) * self.kirchhoff.m(t.powf(n) * s) * s - self.lambda() * t.powf(self.exps.q()) * self.h_value - gu)
    }

    /// `φ'(t)` and the sum of the magnitudes of its terms.
    pub fn phi_d1_scaled(&self, t: f64) -> Result<(f64, f64)> {
        let n = self.exps.n() as f64;
        let s = self.norm_pow;
        let (gu, _) = self.moments(t)?;
        let kin = t.powf(n - 1.0) * self.kirchhoff.m(t.powf(n) * s) * s;
        let lam = self.lambda() * t.powf(self.exps.q()) * self.h_value;
        Ok((kin - lam - gu, kin.abs() + lam.abs() + gu.abs()))
    }

    /// `φ''(t)` and the sum of the magnitudes of its terms.
    pub fn phi_d2_scaled(&self, t: f64) -> Result<(f64, f64)> {
        let n = self.exps.n() as f64;
        let q = self.exps.q();
        let s = self.norm_pow;
        let (_, gpu) = self.moments(t)?;
        let arg = t.powf(n) * s;
        let t1 = (n - 1.0) * t.powf(n - 2.0) * self.kirchhoff.m(arg) * s;
        let t2 = n * t.powf(2.0 * n - 2.0) * self.kirchhoff.m_prime(arg) * s * s;
        let t3 = q * self.lambda() * t.powf(q - 1.0) * self.h_value;
        Ok((t1 + t2 - t3 - gpu, t1.abs() + t2.abs() + t3.abs() + gpu.abs()))
    }

    /// `φ(t)`, `φ'(t)`, `φ''(t)`.
    pub fn phi(&self, t: f64) -> Result<PhiValue> {
        let n = self.exps.n() as f64;
        let q = self.exps.q();
        let s = self.norm_pow;
        let arg = t.powf(n) * s;
        let value = self.kirchhoff.big_m(arg)? / n - self.lambda() * t.powf(q + 1.0) * self.h_value / (q + 1.0) - self.primitive_sum(t)?;
        let (d1, _) = self.phi_d1_scaled(t)?;
        let (d2, _) = self.phi_d2_scaled(t)?;
        Ok(PhiValue { value, d1, d2 })
    }

    /// `(ψ(t), ψ'(t))`.
    pub fn psi(&self, t: f64) -> Result<(f64, f64)> {
        let n = self.exps.n() as f64;
        let q = self.exps.q();
        let s = self.norm_pow;
        let (gu, gpu) = self.moments(t)?;
        let arg = t.powf(n) * s;
        let m = self.kirchhoff.m(arg);
        let mp = self.kirchhoff.m_prime(arg);
        let value = t.powf(n - 1.0 - q) * m * s - t.powf(-q) * gu;
        let d1 = (n - 1.0 - q) * t.powf(n - 2.0 - q) * m * s + n * t.powf(2.0 * n - 2.0 - q) * mp * s * s
            + q * t.powf(-q - 1.0) * gu
            - t.powf(-q) * gpu;
        Ok((value, d1))
    }

    pub fn psi_value(&self, t: f64) -> Result<f64> {
        Ok(self.psi(t)?.0)
    }

    /// Unique maximizer `t*` of `ψ`.
    pub fn find_tstar(&self) -> Result<f64> {
        if self.is_zero() {
            return Err(Error::InvalidArgument("zero direction".into()));
        }
        let mut f = |t: f64| Ok(self.psi(t)?.1);
        let f1 = match f(1.0) {
            Ok(v) => v,
            Err(e) if is_saturation(&e) => {
                let (t, v) = scan(&mut |t| f(t).or_else(|e| if is_saturation(&e) { Ok(-1.0) } else { Err(e) }), 1.0, -1.0, 0.5, TSTAR_MIN, "t* (psi')")?;
                let _ = v;
                return self.solve_tstar_from(t);
            }
            Err(e) => return Err(e),
        };
        if f1 == 0.0 {
            return Ok(1.0);
        }
        let (t, ft) = if f1 > 0.0 {
            scan(&mut f, 1.0, f1, 2.0, TSTAR_MAX, "t* (psi')")?
        } else {
            scan(&mut f, 1.0, f1, 0.5, TSTAR_MIN, "t* (psi')")?
        };
        let (a, b, fa, fb) = if t < 1.0 { (t, 1.0, ft, f1) } else { (1.0, t, f1, ft) };
        roots::brent(&mut f, a, b, fa, fb, ROOT_TOL)
    }

    fn solve_tstar_from(&self, lo: f64) -> Result<f64> {
        let mut f = |t: f64| Ok(self.psi(t)?.1);
        let flo = f(lo)?;
        let (hi, fhi) = scan(&mut f, lo, flo, 2.0, TSTAR_MAX, "t* (psi')")?;
        roots::brent(&mut f, lo, hi, flo, fhi, ROOT_TOL)
    }

    /// Root of `Σ w g'(tu)(tu)² / (2√(ab(2n−1−q)(n−1−q))) = t^{3n/2}‖u‖^{3n/2}`:
    /// `tu` lies in the set Λ exactly for `t` above it.
    pub fn lambda_set_threshold(&self, a: f64, b: f64) -> Result<f64> {
        let n = self.exps.n() as f64;
        let q = self.exps.q();
        let c = 2.0 * (a * b * (2.0 * n - 1.0 - q) * (n - 1.0 - q)).sqrt();
        let np = self.norm_pow.powf(1.5);
        let mut f = |t: f64| {
            let (_, gpu) = self.moments(t)?;
            Ok(t * t * gpu / c - t.powf(1.5 * n) * np)
        };
        let f1 = f(1.0)?;
        let (t, ft) = if f1 < 0.0 { scan(&mut f, 1.0, f1, 2.0, 1e12, "Lambda threshold")? } else { scan(&mut f, 1.0, f1, 0.5, 1e-12, "Lambda threshold")? };
        let (lo, hi, flo, fhi) = if t < 1.0 { (t, 1.0, ft, f1) } else { (1.0, t, f1, ft) };
        roots::brent(&mut f, lo, hi, flo, fhi, ROOT_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseTag {
    HNonPositive,
    HPositive,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiberingProfile {
    pub norm: f64,
    pub h_value: f64,
    pub case_tag: CaseTag,
    pub t_star: Option<f64>,
    pub psi_at_star: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub branch_count: usize,
    /// `λH(u)`
    pub level: f64,
    pub diagnostic: Option<String>,
}

fn solve_level(ray: &Ray, level: f64, from: f64, psi_from: f64, factor: f64, what: &'static str) -> Result<f64> {
    let mut f = |t: f64| Ok(ray.psi_value(t)? - level);
    let f_from = psi_from - level;
    let limit = if factor > 1.0 { f64::MAX / 4.0 } else { f64::MIN_POSITIVE * 4.0 };
    let (t, ft) = scan(&mut f, from, f_from, factor, limit, what)?;
    let (a, b, fa, fb) = if t < from { (t, from, ft, f_from) } else { (from, t, f_from, ft) };
    roots::brent(&mut f, a, b, fa, fb, ROOT_TOL)
}

/// Branch points of `φ_u`. For `H(u) > 0` below the threshold there are two
/// (`t₁ ∈ N⁺`, `t₂ ∈ N⁻`); for `H(u) <= 0` the single critical point (a global
/// maximum) is stored in `t2`.
pub fn find_branches(u: &Field, spec: &ProblemSpec) -> Result<FiberingProfile> {
    let ray = Ray::new(u, spec)?;
    find_branches_on(&ray, u.w1n_norm())
}

pub(crate) fn find_branches_on(ray: &Ray, norm: f64) -> Result<FiberingProfile> {
    if ray.is_zero() {
        return Err(Error::InvalidArgument("zero direction has no fibering map".into()));
    }
    let level = ray.lambda() * ray.h_value;
    let t_star = ray.find_tstar()?;
    let psi_star = ray.psi_value(t_star)?;
    let mut profile = FiberingProfile {
        norm,
        h_value: ray.h_value,
        case_tag: CaseTag::HPositive,
        t_star: Some(t_star),
        psi_at_star: Some(psi_star),
        t1: None,
        t2: None,
        branch_count: 0,
        level,
        diagnostic: None,
    };
    match ray.h_sign() {
        HSign::Positive if level > 0.0 => {
            if level >= psi_star - 1e-12 * psi_star.abs() {
                profile.diagnostic = Some(format!("lambda*H(u) = {level:e} >= psi(t*) = {psi_star:e}: no Nehari points on this ray"));
                return Ok(profile);
            }
            profile.t1 = Some(solve_level(ray, level, t_star, psi_star, 0.5, "t1")?);
            profile.t2 = Some(solve_level(ray, level, t_star, psi_star, 2.0, "t2")?);
            profile.branch_count = 2;
        }
        HSign::Positive => {
            // λ = 0: t₁ collapses to 0
            profile.t2 = Some(solve_level(ray, level, t_star, psi_star, 2.0, "t2")?);
            profile.branch_count = 1;
            profile.diagnostic = Some("lambda = 0: the N+ point collapses to t = 0".into());
        }
        HSign::Negative | HSign::Zero => {
            profile.case_tag = CaseTag::HNonPositive;
            profile.t2 = Some(solve_level(ray, level.min(0.0), t_star, psi_star, 2.0, "critical point")?);
            profile.branch_count = 1;
        }
    }
    Ok(profile)
}

/// `ψ` sampled on `ts`, for plotting.
pub fn psi_samples(u: &Field, spec: &ProblemSpec, ts: &[f64]) -> Result<Vec<(f64, f64)>> {
    let ray = Ray::new(u, spec)?;
    ts.iter().map(|&t| Ok((t, ray.psi_value(t)?))).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtremalityReport {
    pub j_t1: Option<f64>,
    pub min_on_0_t2: f64,
    pub j_t2: f64,
    pub max_beyond_tstar: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Checks `J(t₁u) = min_{[0,t₂]} J(tu)` and `J(t₂u) = max_{t>=t*} J(tu)` on
/// `samples` points per interval (the second over `[t*, 4t₂]`).
pub fn check_extremality(u: &Field, spec: &ProblemSpec, profile: &FiberingProfile, samples: usize) -> Result<ExtremalityReport> {
    let ray = Ray::new(u, spec)?;
    let t2 = profile.t2.ok_or_else(|| Error::NoBranch("profile has no t2".into()))?;
    let t_star = profile.t_star.ok_or_else(|| Error::NoBranch("profile has no t*".into()))?;
    let n = samples.max(2);
    let j = |t: f64| -> Result<f64> { Ok(ray.phi(t)?.value) };
    let mut min_val = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        let t = t2 * i as f64 / (n - 1) as f64;
        let v = if t == 0.0 { 0.0 } else { j(t)? };
        min_val = min_val.min(v);
        scale = scale.max(v.abs());
    }
    let mut max_val = f64::NEG_INFINITY;
    for i in 0..n {
        let t = t_star + (4.0 * t2 - t_star) * i as f64 / (n - 1) as f64;
        match j(t) {
            Ok(v) => {
                max_val = max_val.max(v);
                scale = scale.max(v.abs());
            }
            Err(e) if is_saturation(&e) => break,
            Err(e) => return Err(e),
        }
    }
    let j_t1 = profile.t1.map(j).transpose()?;
    let j_t2 = j(t2)?;
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let first = j_t1.map_or(true, |v| v <= min_val + tol);
    let passed = first && j_t2 >= max_val - tol;
    Ok(ExtremalityReport { j_t1, min_on_0_t2: min_val, j_t2, max_beyond_tstar: max_val, samples: n, passed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NehariKind {
    NPlus,
    NMinus,
    NZero,
    NotOnNehari,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NehariClass {
    pub kind: NehariKind,
    pub first_derivative: f64,
    pub second_derivative: f64,
}

/// Classifies `u` by `φ_u'(1)` (dead-band `1e−8`) and `φ_u''(1)` (dead-band
/// `1e−10`), both relative to the magnitudes of their terms.
pub fn nehari_classify(u: &Field, spec: &ProblemSpec) -> Result<NehariClass> {
    let ray = Ray::new(u, spec)?;
    if ray.is_zero() {
        return Ok(NehariClass { kind: NehariKind::NotOnNehari, first_derivative: 0.0, second_derivative: 0.0 });
    }
    let (d1, s1) = ray.phi_d1_scaled(1.0)?;
    let (d2, s2) = ray.phi_d2_scaled(1.0)?;
    let kind = if d1.abs() > 1e-8 * s1 {
        NehariKind::NotOnNehari
    } else if d2 > 1e-10 * s2 {
        NehariKind::NPlus
    } else if d2 < -1e-10 * s2 {
        NehariKind::NMinus
    } else {
        NehariKind::NZero
    };
    Ok(NehariClass { kind, first_derivative: d1, second_derivative: d2 })
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    /// `‖u‖^{3n/2}`
    pub lambda_set_lhs: f64,
    /// `∫g'(u)u² / (2√(ab(2n−1−q)(n−1−q)))`
    pub lambda_set_rhs: f64,
    pub in_lambda_set: bool,
    pub h_sign: HSign,
    /// `∫(p+2−2n+β|u|^β)|u|^{p+2}e^{|u|^β} − (2n−1−q)λ∫h|u|^{q+1}`
    pub lambda_m_integrand: f64,
    pub c1: Option<f64>,
    pub l: f64,
    /// `(1/(2n−q−1)) (C₁/l)^{(k−1)/k}` when `C₁` is known.
    pub step3_bound: Option<f64>,
    pub lambda: f64,
    pub lambda_below_bound: Option<bool>,
}

/// Admissibility data for direction `u` (affine Kirchhoff term only).
pub fn lambda_admissibility(u: &Field, spec: &ProblemSpec, c1: Option<f64>) -> Result<AdmissibilityReport> {
    let (exps, weight) = spec.require_concave_convex()?;
    let (a, b) = match spec.kirchhoff() {
        KirchhoffSpec::Affine { a, b } => (*a, *b),
        KirchhoffSpec::Generic(_) => return Err(Error::InvalidArgument("admissibility checks need the affine Kirchhoff term".into())),
    };
    let ray = Ray::new(u, spec)?;
    let n = exps.n() as f64;
    let q = exps.q();
    let (_, gpu) = if ray.is_zero() { (0.0, 0.0) } else { ray.moments(1.0)? };
    let lhs = ray.norm_pow.powf(1.5);
    let rhs = gpu / (2.0 * (a * b * (2.0 * n - 1.0 - q) * (n - 1.0 - q)).sqrt());
    let gap = gap_integral(u, exps)?;
    let integrand = gap - (2.0 * n - 1.0 - q) * exps.lambda() * ray.h_value;
    let l = weight.l_norm();
    let step3_bound = c1.map(|c| scalar::lambda_step_bound(exps, c, l));
    Ok(AdmissibilityReport {
        lambda_set_lhs: lhs,
        lambda_set_rhs: rhs,
        in_lambda_set: !ray.is_zero() && lhs <= rhs,
        h_sign: ray.h_sign(),
        lambda_m_integrand: integrand,
        c1,
        l,
        step3_bound,
        lambda: exps.lambda(),
        lambda_below_bound: step3_bound.map(|bd| exps.lambda() < bd),
    })
}

/// `∫(p+2−2n+β|u|^β)|u|^{p+2}e^{|u|^β}`.
pub fn gap_integral(u: &Field, exps: &ExponentSet) -> Result<f64> {
    let grid = u.grid();
    let mut acc = Accumulator::default();
    for &j in grid.free_nodes() {
        let v = u.values()[j];
        if v != 0.0 {
            acc.add(grid.node_weights()[j] * scalar::nehari_gap_density(v, exps)?);
        }
    }
    Ok(acc.value())
}

/// Sampled estimate of `C₁ = inf_{Λ∩H⁺} ∫(p+2−2n+β|u|^β)|u|^{p+2}e^{|u|^β}`
/// over the rays through `directions`: on each ray the infimum sits at the
/// entry point into Λ. This is an upper estimate of the true infimum.
pub fn estimate_c1(directions: &[Field], spec: &ProblemSpec) -> Result<f64> {
    let (exps, _) = spec.require_concave_convex()?;
    let (a, b) = match spec.kirchhoff() {
        KirchhoffSpec::Affine { a, b } => (*a, *b),
        KirchhoffSpec::Generic(_) => return Err(Error::InvalidArgument("C1 estimate needs the affine Kirchhoff term".into())),
    };
    let mut best = f64::INFINITY;
    for u in directions {
        let ray = Ray::new(u, spec)?;
        if ray.is_zero() || ray.h_sign() != HSign::Positive {
            continue;
        }
        let t = ray.lambda_set_threshold(a, b)?;
        best = best.min(gap_integral(&u.scaled(t), exps)?);
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::InvalidArgument("no direction in H+ supplied".into()))
    }
}

/// `t ↦ J(tu)` for the generic problem.
#[derive(Debug, Clone)]
pub struct GenericRay<'a> {
    n: usize,
    kirchhoff: &'a KirchhoffSpec,
    nl: &'a GenericNonlinearity,
    norm_pow: f64,
    weights: Vec<f64>,
    values: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl<'a> GenericRay<'a> {
    pub fn new(u: &Field, spec: &'a ProblemSpec) -> Result<Self> {
        let nl = match spec.source() {
            problem::Source::Generic(nl) => nl,
            problem::Source::ConcaveConvex { .. } => return Err(Error::InvalidArgument("generic ray needs the generic problem".into())),
        };
        spec.check_field(u)?;
        let grid = u.grid();
        let mut weights = Vec::new();
        let mut values = Vec::new();
        let mut points = Vec::new();
        for &j in grid.free_nodes() {
            let v = u.values()[j];
            if v > 0.0 {
                weights.push(grid.node_weights()[j]);
                values.push(v);
                points.push(grid.point(j).to_vec());
            }
        }
        Ok(GenericRay { n: spec.n(), kirchhoff: spec.kirchhoff(), nl, norm_pow: u.gradient_power(), weights, values, points })
    }

    pub fn norm_pow(&self) -> f64 {
        self.norm_pow
    }

    /// `J(tu)`
    pub fn value(&self, t: f64) -> Result<f64> {
        let n = self.n as f64;
        let mut acc = Accumulator::default();
        for ((w, v), x) in self.weights.iter().zip(&self.values).zip(&self.points) {
            acc.add(w * self.nl.big_f_eval(x, t * v)?);
        }
        Ok(self.kirchhoff.big_m(t.powf(n) * self.norm_pow)? / n - acc.value())
    }

    /// `dJ(tu)/dt` and the magnitude of its terms.
    pub fn d1_scaled(&self, t: f64) -> Result<(f64, f64)> {
        let n = self.n as f64;
        let mut acc = Accumulator::default();
        for ((w, v), x) in self.weights.iter().zip(&self.values).zip(&self.points) {
            acc.add(w * self.nl.f_eval(x, t * v)? * v);
        }
        let kin = t.powf(n - 1.0) * self.kirchhoff.m(t.powf(n) * self.norm_pow) * self.norm_pow;
        let f = acc.value();
        Ok((kin - f, kin.abs() + f.abs()))
    }

    pub fn d1(&self, t: f64) -> Result<f64> {
        Ok(self.d1_scaled(t)?.0)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RayMax {
    pub t: f64,
    pub value: f64,
    pub derivative: f64,
    /// `|dJ/dt|` relative to the magnitude of its terms.
    pub relative_derivative: f64,
}

const RAY_MAX_LIMIT: f64 = 1e8;

/// `max_{t>0} J(tu)` for the generic problem: geometric bracket of the sign
/// change of `dJ/dt`, golden-section refinement, then a Brent solve of
/// `dJ/dt = 0` inside the bracket.
pub fn generic_ray_max(ray: &GenericRay) -> Result<RayMax> {
    if ray.values.is_empty() {
        return Err(Error::InnerMaxNotFound("direction has no positive part".into()));
    }
    let mut d = |t: f64| ray.d1(t);
    let d_at_1 = match d(1.0) {
        Ok(v) => v,
        Err(e) if is_saturation(&e) => -1.0,
        Err(e) => return Err(e),
    };
    let (lo, hi, dlo, dhi) = if d_at_1 > 0.0 {
        let (t, v) = scan(&mut d, 1.0, d_at_1, 2.0, RAY_MAX_LIMIT, "ray maximum").map_err(|e| match e {
            Error::BracketNotFound { .. } => Error::InnerMaxNotFound(format!("dJ(tu)/dt stays positive up to t = {RAY_MAX_LIMIT:e}")),
            other => other,
        })?;
        (t / 2.0, t, ray.d1(t / 2.0)?, v)
    } else {
        let f1 = d(1.0).unwrap_or(-1.0);
        let (t, v) = scan(&mut |t| d(t).or_else(|e| if is_saturation(&e) { Ok(-1.0) } else { Err(e) }), 1.0, f1, 0.5, 1e-12, "ray maximum")
            .map_err(|e| match e {
                Error::BracketNotFound { .. } => Error::InnerMaxNotFound("dJ(tu)/dt negative for all sampled t".into()),
                other => other,
            })?;
        let hi = 2.0 * t;
        let dhi = match ray.d1(hi) {
            Ok(v) => v,
            Err(e) if is_saturation(&e) => {
                // shrink the upper end until it is finite
                let mut far = hi;
                let mut found = None;
                for _ in 0..200 {
                    far = (far * t).sqrt();
                    match ray.d1(far) {
                        Ok(v) if v < 0.0 => {
                            found = Some((far, v));
                            break;
                        }
                        Ok(_) => break,
                        Err(e) if is_saturation(&e) => continue,
                        Err(e) => return Err(e),
                    }
                }
                let (f, v) = found.ok_or_else(|| Error::InnerMaxNotFound("saturation around the ray maximum".into()))?;
                return finish_ray_max(ray, t, f, ray.d1(t)?, v);
            }
            Err(e) => return Err(e),
        };
        (t, hi, v, dhi)
    };
    finish_ray_max(ray, lo, hi, dlo, dhi)
}

fn finish_ray_max(ray: &GenericRay, lo: f64, hi: f64, dlo: f64, dhi: f64) -> Result<RayMax> {
    if !(dlo > 0.0 && dhi < 0.0) {
        return Err(Error::InnerMaxNotFound(format!("no sign change of dJ/dt on [{lo:e}, {hi:e}]")));
    }
    let (g_lo, g_hi) = roots::golden_section_max(|t| ray.value(t), lo, hi, 1e-3)?;
    let (a, b) = (g_lo.max(lo), g_hi.min(hi));
    let (da, db) = (ray.d1(a)?, ray.d1(b)?);
    let t = if da > 0.0 && db < 0.0 {
        roots::brent(|t| ray.d1(t), a, b, da, db, ROOT_TOL)?
    } else {
        roots::brent(|t| ray.d1(t), lo, hi, dlo, dhi, ROOT_TOL)?
    };
    let (derivative, scale) = ray.d1_scaled(t)?;
    Ok(RayMax { t, value: ray.value(t)?, derivative, relative_derivative: derivative.abs() / scale.max(f64::MIN_POSITIVE) })
}
