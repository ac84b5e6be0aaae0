//! Scalar formulas: the nonlinearity `g(s) = s|s|^p e^{|s|^β}` and its
//! primitive, Kirchhoff coefficients `m`/`M`, the generic nonlinearity
//! `f(x, t) = h(x, t) e^{|t|^{n/(n-1)}}`, and closed-form constants.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};

/// `ln(f64::MAX)`: exponent arguments above this overflow.
pub const EXP_ARG_MAX: f64 = 709.782_712_893_384;

/// Surface measure `w_{n-1}` of the unit sphere `S^{n-1} ⊂ R^n`.
pub fn sphere_area(n: usize) -> f64 {
    // Γ(n/2) for integer n
    let gamma_half = if n % 2 == 0 {
        (1..n / 2).map(|i| i as f64).product::<f64>()
    } else {
        (0..(n - 1) / 2).fold(PI.sqrt(), |acc, i| acc * (i as f64 + 0.5))
    };
    2.0 * PI.powf(n as f64 / 2.0) / gamma_half
}

/// Sharp Trudinger–Moser exponent `α_n = n w_{n-1}^{1/(n-1)}`.
pub fn alpha_n(n: usize) -> f64 {
    n as f64 * sphere_area(n).powf(1.0 / (n as f64 - 1.0))
}

/// Exponents and the parameter λ of the concave–convex problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentSet {
    n: usize,
    p: f64,
    q: f64,
    beta: f64,
    lambda: f64,
    gamma: f64,
    k: f64,
    kprime: f64,
}

impl ExponentSet {
    /// Validates `0 < q < n-1 < 2n-1 < p+1`, `1 < β <= n/(n-1)`,
    /// `p + 2 > 3n/2` and `λ >= 0`. Error messages name the violated inequality.
    pub fn new(n: usize, p: f64, q: f64, beta: f64, lambda: f64) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidParameters(msg.to_string()));
        if n < 2 {
            return bad("n >= 2 violated");
        }
        if ![p, q, beta, lambda].iter().all(|v| v.is_finite()) {
            return bad("parameters must be finite");
        }
        let nf = n as f64;
        if q <= 0.0 {
            return bad("0 < q violated");
        }
        if q >= nf - 1.0 {
            return bad("q < n-1 violated");
        }
        if 2.0 * nf - 1.0 >= p + 1.0 {
            return bad("2n-1 < p+1 violated");
        }
        if p + 2.0 <= 1.5 * nf {
            return bad("p+2 > 3n/2 violated");
        }
        if beta <= 1.0 {
            return bad("1 < beta violated");
        }
        if beta > nf / (nf - 1.0) + 1e-12 {
            return bad("beta <= n/(n-1) violated");
        }
        if lambda < 0.0 {
            return bad("lambda >= 0 violated");
        }
        let k = (p + 2.0 + beta) / (q + 1.0);
        Ok(ExponentSet {
            n,
            p,
            q,
            beta,
            lambda,
            gamma: nf / (nf - q - 1.0),
            k,
            kprime: k / (k - 1.0),
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.n, self.p, self.q, self.beta, lambda)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    /// `γ = n/(n-q-1)`, the integrability exponent required of the weight.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    /// `k = (p+2+β)/(q+1)`.
    pub fn k(&self) -> f64 {
        self.k
    }
    /// `k' = k/(k-1)`.
    pub fn kprime(&self) -> f64 {
        self.kprime
    }

    /// `β = n/(n-1)`: the exponential term has critical growth.
    pub fn is_critical(&self) -> bool {
        let nf = self.n as f64;
        (self.beta - nf / (nf - 1.0)).abs() <= 1e-12
    }
}

#[inline]
fn exp_of_power(a: f64, beta: f64) -> Result<f64> {
    let arg = a.powf(beta);
    if arg > EXP_ARG_MAX || arg.is_nan() {
        return Err(Error::Saturation { s: a });
    }
    Ok(arg.exp())
}

#[inline]
fn finite(v: f64, s: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Saturation { s: s.abs() })
    }
}

/// `g(s) = s|s|^p e^{|s|^β}`.
#[inline]
pub fn g_eval(s: f64, e: &ExponentSet) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let a = s.abs();
    let v = finite(a.powf(e.p + 1.0) * exp_of_power(a, e.beta)?, s)?;
    Ok(if s < 0.0 { -v } else { v })
}

/// `g'(s) = (p+1+β|s|^β)|s|^p e^{|s|^β}`.
#[inline]
pub fn g_prime_eval(s: f64, e: &ExponentSet) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let a = s.abs();
    let ab = a.powf(e.beta);
    finite((e.p + 1.0 + e.beta * ab) * a.powf(e.p) * exp_of_power(a, e.beta)?, s)
}

/// `g(s)s` and `g'(s)s²` sharing one exponential.
#[inline]
pub(crate) fn g_moments(s: f64, e: &ExponentSet) -> Result<(f64, f64)> {
    if s == 0.0 {
        return Ok((0.0, 0.0));
    }
    let a = s.abs();
    let ab = a.powf(e.beta);
    let gs = finite(a.powf(e.p + 2.0) * exp_of_power(a, e.beta)?, s)?;
    Ok((gs, finite((e.p + 1.0 + e.beta * ab) * gs, s)?))
}

fn primitive_tolerance(a: f64) -> Tolerance {
    if a <= 1.0 {
        Tolerance::new(1e-12, 1e-13)
    } else {
        Tolerance::new(0.0, 1e-10)
    }
}

/// `G(s) = ∫_0^s g(τ) dτ` by adaptive Gauss–Kronrod quadrature.
pub fn big_g_eval(s: f64, e: &ExponentSet) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let a = s.abs();
    // fail fast rather than deep inside the quadrature
    exp_of_power(a, e.beta)?;
    let est = quadrature::integrate(|t| g_eval(t, e), 0.0, a, primitive_tolerance(a))?;
    finite(est.value, s)
}

/// `ρ(s) = (2n+q)/(2n(q+1)) g(s)s − G(s) − g'(s)s²/(2n(q+1))`, for `s >= 0`.
pub fn rho_eval(s: f64, e: &ExponentSet) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::InvalidArgument(format!("rho requires s >= 0, got {s}")));
    }
    let nf = e.n as f64;
    let denom = 2.0 * nf * (e.q + 1.0);
    let (gs, gps) = g_moments(s, e)?;
    Ok((2.0 * nf + e.q) / denom * gs - big_g_eval(s, e)? - gps / denom)
}

/// `(p+2-2n+β|s|^β)|s|^{p+2}e^{|s|^β}`, which equals `g'(s)s² − (2n−1)g(s)s`.
pub fn nehari_gap_density(s: f64, e: &ExponentSet) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let a = s.abs();
    let nf = e.n as f64;
    finite(
        (e.p + 2.0 - 2.0 * nf + e.beta * a.powf(e.beta)) * a.powf(e.p + 2.0) * exp_of_power(a, e.beta)?,
        s,
    )
}

/// Upper bound for `ρ(s)`: `−(p+1−q)/(2n(q+1)(p+2)) · (p+2−2n+β|s|^β)|s|^{p+2}e^{|s|^β}`.
pub fn rho_upper_bound(s: f64, e: &ExponentSet) -> Result<f64> {
    let nf = e.n as f64;
    let c = (e.p + 1.0 - e.q) / (2.0 * nf * (e.q + 1.0) * (e.p + 2.0));
    Ok(-c * nehari_gap_density(s, e)?)
}

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Growth constants `m(t) <= a1 + a2 t^σ` for `t >= t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthParams {
    pub a1: f64,
    pub a2: f64,
    pub sigma: f64,
    pub t0: f64,
}

#[derive(Clone)]
pub struct GenericKirchhoff {
    label: String,
    m: ScalarMap,
    primitive: Option<ScalarMap>,
    m0: f64,
    growth: Option<GrowthParams>,
}

/// Kirchhoff coefficient `m` and its primitive `M`.
#[derive(Clone)]
pub enum KirchhoffSpec {
    /// `m(t) = a t + b`, `M(t) = a t²/2 + b t`.
    Affine { a: f64, b: f64 },
    Generic(GenericKirchhoff),
}

impl fmt::Debug for KirchhoffSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KirchhoffSpec::Affine { a, b } => write!(f, "Affine {{ a: {a}, b: {b} }}"),
            KirchhoffSpec::Generic(g) => write!(f, "Generic {{ {}, m0: {} }}", g.label, g.m0),
        }
    }
}

impl KirchhoffSpec {
    pub fn affine(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParameters(format!("affine Kirchhoff term needs a > 0, b > 0 (got a = {a}, b = {b})")));
        }
        Ok(KirchhoffSpec::Affine { a, b })
    }

    /// A user-supplied `m` with declared lower bound `m0 > 0`.
    pub fn generic(label: impl Into<String>, m: ScalarMap, m0: f64) -> Result<Self> {
        if !(m0 > 0.0) {
            return Err(Error::InvalidParameters(format!("m0 > 0 violated (m0 = {m0})")));
        }
        Ok(KirchhoffSpec::Generic(GenericKirchhoff { label: label.into(), m, primitive: None, m0, growth: None }))
    }

    /// `m ≡ m0`.
    pub fn constant(m0: f64) -> Result<Self> {
        let spec = Self::generic(format!("m = {m0}"), Arc::new(move |_| m0), m0)?;
        spec.with_primitive(Arc::new(move |t| m0 * t))
    }

    /// `m(t) = m0 + a t^α`, the standard example satisfying (m1)–(m3) for `α <= 1`.
    pub fn power(m0: f64, a: f64, alpha: f64) -> Result<Self> {
        let spec = Self::generic(format!("m = {m0} + {a} t^{alpha}"), Arc::new(move |t: f64| m0 + a * t.max(0.0).powf(alpha)), m0)?;
        spec.with_primitive(Arc::new(move |t: f64| m0 * t + a * t.max(0.0).powf(alpha + 1.0) / (alpha + 1.0)))
    }

    /// `m(t) = 1 + log(1 + t)`; `M` is left to quadrature.
    pub fn log1p() -> Self {
        Self::generic("m = 1 + log(1 + t)", Arc::new(|t: f64| 1.0 + t.max(0.0).ln_1p()), 1.0).expect("m0 = 1 is valid")
    }

    pub fn with_primitive(self, primitive: ScalarMap) -> Result<Self> {
        match self {
            KirchhoffSpec::Generic(mut g) => {
                g.primitive = Some(primitive);
                Ok(KirchhoffSpec::Generic(g))
            }
            KirchhoffSpec::Affine { .. } => Err(Error::InvalidArgument("affine Kirchhoff term has a fixed primitive".into())),
        }
    }

    pub fn with_growth(self, growth: GrowthParams) -> Result<Self> {
        match self {
            KirchhoffSpec::Generic(mut g) => {
                g.growth = Some(growth);
                Ok(KirchhoffSpec::Generic(g))
            }
            KirchhoffSpec::Affine { .. } => Err(Error::InvalidArgument("growth constants apply to generic terms".into())),
        }
    }

    pub fn growth(&self) -> Option<GrowthParams> {
        match self {
            KirchhoffSpec::Affine { .. } => None,
            KirchhoffSpec::Generic(g) => g.growth,
        }
    }

    pub fn label(&self) -> String {
        match self {
            KirchhoffSpec::Affine { a, b } => format!("m = {a} t + {b}"),
            KirchhoffSpec::Generic(g) => g.label.clone(),
        }
    }

    #[inline]
    pub fn m(&self, t: f64) -> f64 {
        match self {
            KirchhoffSpec::Affine { a, b } => a * t + b,
            KirchhoffSpec::Generic(g) => (g.m)(t),
        }
    }

    /// `m'(t)`; central differences for generic terms (one-sided at 0).
    pub fn m_prime(&self, t: f64) -> f64 {
        match self {
            KirchhoffSpec::Affine { a, .. } => *a,
            KirchhoffSpec::Generic(g) => {
                let h = 1e-6 * t.abs().max(1.0);
                if t > h {
                    ((g.m)(t + h) - (g.m)(t - h)) / (2.0 * h)
                } else {
                    ((g.m)(t + h) - (g.m)(t)) / h
                }
            }
        }
    }

    /// `M(t) = ∫_0^t m`.
    pub fn big_m(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("M(t) requires t >= 0, got {t}")));
        }
        match self {
            KirchhoffSpec::Affine { a, b } => Ok(0.5 * a * t * t + b * t),
            KirchhoffSpec::Generic(g) => match &g.primitive {
                Some(prim) => Ok(prim(t)),
                None => {
                    let m = g.m.clone();
                    Ok(quadrature::integrate(|s| Ok(m(s)), 0.0, t, Tolerance::new(1e-12, 1e-13))?.value)
                }
            },
        }
    }

    /// Lower bound `m0` of `m` on `[0, ∞)`.
    pub fn m0(&self) -> f64 {
        match self {
            KirchhoffSpec::Affine { b, .. } => *b,
            KirchhoffSpec::Generic(g) => g.m0,
        }
    }

    /// Sampled check of `m >= m0`, `M(0) = 0` and superadditivity of `M`.
    pub fn check_sampled(&self, samples: &[f64]) -> Result<()> {
        for &t in samples {
            if self.m(t) < self.m0() - 1e-12 {
                return Err(Error::InvalidParameters(format!("m(t) >= m0 violated at t = {t}")));
            }
        }
        if self.big_m(0.0)? != 0.0 {
            return Err(Error::InvalidParameters("M(0) = 0 violated".into()));
        }
        for &t in samples {
            for &s in samples {
                let lhs = self.big_m(t + s)?;
                let rhs = self.big_m(t)? + self.big_m(s)?;
                if lhs < rhs - 1e-10 * (1.0 + rhs.abs()) {
                    return Err(Error::InvalidParameters(format!("M(t+s) >= M(t)+M(s) violated at t = {t}, s = {s}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArReport {
    pub theta: f64,
    pub min_value: f64,
    pub argmin: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Evaluates `(1/n)M(t) − (1/θ)m(t)t` over the samples.
pub fn ar_inequality_check(spec: &KirchhoffSpec, n: usize, theta: f64, t_samples: &[f64]) -> Result<ArReport> {
    if theta < 2.0 * n as f64 {
        return Err(Error::InvalidArgument(format!("theta >= 2n required (theta = {theta}, n = {n})")));
    }
    let mut min_value = f64::INFINITY;
    let mut argmin = f64::NAN;
    for &t in t_samples {
        let v = spec.big_m(t)? / n as f64 - spec.m(t) * t / theta;
        if v < min_value {
            min_value = v;
            argmin = t;
        }
    }
    Ok(ArReport { theta, min_value, argmin, samples: t_samples.len(), passed: min_value >= -1e-12 })
}

pub type ProfileMap = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// `f(x, t) = h(x, t) e^{|t|^{n/(n-1)}}` for `t > 0`, zero otherwise.
#[derive(Clone)]
pub struct GenericNonlinearity {
    label: String,
    n: usize,
    h: ProfileMap,
    pub k0: f64,
    pub t0: f64,
    pub theta: f64,
}

impl fmt::Debug for GenericNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GenericNonlinearity {{ {}, n: {}, theta: {} }}", self.label, self.n, self.theta)
    }
}

impl GenericNonlinearity {
    pub fn new(label: impl Into<String>, n: usize, h: ProfileMap, k0: f64, t0: f64, theta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameters("n >= 2 violated".into()));
        }
        if !(k0 > 0.0 && t0 > 0.0) {
            return Err(Error::InvalidParameters("K0 > 0 and t0 > 0 required".into()));
        }
        if theta < 2.0 * n as f64 {
            return Err(Error::InvalidParameters(format!("theta >= 2n violated (theta = {theta})")));
        }
        Ok(GenericNonlinearity { label: label.into(), n, h, k0, t0, theta })
    }

    /// `h(x, t) = t^r` for `t > 0`.
    pub fn power(n: usize, r: f64) -> Result<Self> {
        Self::new(format!("h = t^{r}"), n, Arc::new(move |_: &[f64], t: f64| if t > 0.0 { t.powf(r) } else { 0.0 }), 1.0, 1.0, 2.0 * n as f64)
    }

    /// `h ≡ 0`, so `f ≡ 0`.
    pub fn zero(n: usize) -> Self {
        Self::new("h = 0", n, Arc::new(|_: &[f64], _| 0.0), 1.0, 1.0, 2.0 * n as f64).expect("valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn h(&self, x: &[f64], t: f64) -> f64 {
        (self.h)(x, t)
    }

    fn exponent(&self) -> f64 {
        self.n as f64 / (self.n as f64 - 1.0)
    }

    pub fn f_eval(&self, x: &[f64], t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        finite((self.h)(x, t) * exp_of_power(t, self.exponent())?, t)
    }

    /// `F(x, t) = ∫_0^t f(x, τ) dτ`.
    pub fn big_f_eval(&self, x: &[f64], t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        exp_of_power(t, self.exponent())?;
        let est = quadrature::integrate(|s| self.f_eval(x, s), 0.0, t, primitive_tolerance(t))?;
        finite(est.value, t)
    }
}

/// `|a−b|^l` and `2^{l−2}(|a|^{l−2}a − |b|^{l−2}b)·(a−b)` for vectors `a, b`.
pub fn monotonicity_pair(a: &[f64], b: &[f64], l: f64) -> (f64, f64) {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let pa = if na > 0.0 { na.powf(l - 2.0) } else { 0.0 };
    let pb = if nb > 0.0 { nb.powf(l - 2.0) } else { 0.0 };
    let inner: f64 = a.iter().zip(b).map(|(x, y)| (pa * x - pb * y) * (x - y)).sum();
    (diff.powf(l), 2f64.powf(l - 2.0) * inner)
}

/// The constant `C(p,q,n)` of the lower bound `θ_λ >= −C λ^{k/(k-1)}`, for
/// weight norm `l = ∫|h|^{k/(k-1)}`.
pub fn energy_bound_constant(e: &ExponentSet, l: f64) -> f64 {
    let (k, nf) = (e.k, e.n as f64);
    let inv = 1.0 / (k - 1.0);
    let kp = e.kprime;
    (k.powf(-inv) - k.powf(-kp)) * l * (e.p + 2.0).powf(inv) * (2.0 * nf - e.q - 1.0).powf(kp)
        / (2.0 * nf * (e.p + 2.0 - 2.0 * nf).powf(inv) * (e.q + 1.0).powf(kp))
}

/// `−C(p,q,n) λ^{k/(k-1)}`.
pub fn energy_lower_bound(e: &ExponentSet, l: f64) -> f64 {
    -energy_bound_constant(e, l) * e.lambda.powf(e.kprime)
}

/// Compactness level for the critical case:
/// `(1/(2n)) m0 α_n^{n-1} − C λ^{(p+2+β)/(p+1−q+β)}`.
pub fn critical_level_threshold(e: &ExponentSet, m0: f64, l: f64) -> f64 {
    let nf = e.n as f64;
    let expo = (e.p + 2.0 + e.beta) / (e.p + 1.0 - e.q + e.beta);
    m0 * alpha_n(e.n).powf(nf - 1.0) / (2.0 * nf) - energy_bound_constant(e, l) * e.lambda.powf(expo)
}

/// Mountain-pass level bound `(1/n) M(α_n^{n-1})`.
pub fn mountain_pass_bound(spec: &KirchhoffSpec, n: usize) -> Result<f64> {
    Ok(spec.big_m(alpha_n(n).powf(n as f64 - 1.0))? / n as f64)
}

/// Upper bound on λ from the Hölder step: `(1/(2n−q−1)) (C1/l)^{(k−1)/k}`.
pub fn lambda_step_bound(e: &ExponentSet, c1: f64, l: f64) -> f64 {
    let nf = e.n as f64;
    (c1 / l).powf((e.k - 1.0) / e.k) / (2.0 * nf - e.q - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> ExponentSet {
        ExponentSet::new(2, 4.0, 0.5, 2.0, 1e-3).unwrap()
    }

    fn riemann(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn derived_exponents() {
        let e = desk();
        assert!((e.k() - 16.0 / 3.0).abs() < 1e-14);
        assert!((e.kprime() - 16.0 / 13.0).abs() < 1e-14);
        assert!((e.gamma() - 4.0).abs() < 1e-14);
        assert!(e.is_critical());
    }

    #[test]
    fn validation_names_the_inequality() {
        let msg = ExponentSet::new(2, 4.0, 1.0, 2.0, 0.1).unwrap_err().to_string();
        assert!(msg.contains("q < n-1"), "{msg}");
        let msg = ExponentSet::new(2, 2.0, 0.5, 2.0, 0.1).unwrap_err().to_string();
        assert!(msg.contains("2n-1 < p+1"), "{msg}");
        let msg = ExponentSet::new(2, 4.0, 0.5, 2.5, 0.1).unwrap_err().to_string();
        assert!(msg.contains("beta <= n/(n-1)"), "{msg}");
        assert!(ExponentSet::new(2, 4.0, 0.5, 1.0, 0.1).is_err());
        assert!(ExponentSet::new(2, 4.0, 0.5, 2.0, -1.0).is_err());
    }

    #[test]
    fn sphere_and_alpha() {
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
        assert!((alpha_n(2) - 4.0 * PI).abs() < 1e-13);
        assert!((alpha_n(3) - 3.0 * (4.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn g_values() {
        let e = desk();
        assert_eq!(g_eval(0.0, &e).unwrap(), 0.0);
        assert!((g_eval(1.0, &e).unwrap() - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(g_eval(-1.0, &e).unwrap(), -g_eval(1.0, &e).unwrap());
        assert_eq!(g_prime_eval(0.0, &e).unwrap(), 0.0);
        for s in [0.1, 0.7, 1.3, 2.9] {
            assert!(g_prime_eval(s, &e).unwrap() > 0.0);
        }
    }

    #[test]
    fn g_identity_at_one() {
        let e = desk();
        let lhs = g_prime_eval(1.0, &e).unwrap() - 3.0 * g_eval(1.0, &e).unwrap();
        assert!((lhs - 4.0 * std::f64::consts::E).abs() < 1e-13);
    }

    #[test]
    fn overflow_saturates() {
        let e = desk();
        assert!(matches!(g_eval(27.0, &e), Err(Error::Saturation { .. })));
        assert!(matches!(big_g_eval(-27.0, &e), Err(Error::Saturation { .. })));
        assert!(matches!(g_prime_eval(30.0, &e), Err(Error::Saturation { .. })));
    }

    #[test]
    fn primitive_matches_riemann_oracle() {
        let e = desk();
        let oracle = riemann(|t| t.powi(5) * (t * t).exp(), 0.0, 1.0, 1_000_000);
        let g1 = big_g_eval(1.0, &e).unwrap();
        assert!((g1 - oracle).abs() < 1e-11, "{g1} vs {oracle}");
        assert!((g1 - (std::f64::consts::E - 2.0) / 2.0).abs() < 1e-13);
        assert_eq!(big_g_eval(0.0, &e).unwrap(), 0.0);
        for s in [0.01, 0.5, 1.7, 3.2] {
            let v = big_g_eval(s, &e).unwrap();
            assert!(v >= 0.0);
            assert_eq!(v, big_g_eval(-s, &e).unwrap());
        }
    }

    #[test]
    fn rho_limits() {
        let e = desk();
        assert_eq!(rho_eval(0.0, &e).unwrap(), 0.0);
        let s = 1e-3;
        let small = rho_eval(s, &e).unwrap() / s.powf(6.0);
        assert!(((small + 0.25) / 0.25).abs() < 0.01, "{small}");
        let s = 5.0;
        let large = rho_eval(s, &e).unwrap() / (s.powf(8.0) * (s * s).exp());
        assert!(((large + 1.0 / 3.0) / (1.0 / 3.0)).abs() < 0.05, "{large}");
        assert!(rho_eval(-1.0, &e).is_err());
    }

    #[test]
    fn kirchhoff_primitives() {
        let affine = KirchhoffSpec::affine(1.0, 1.0).unwrap();
        assert_eq!(affine.big_m(0.0).unwrap(), 0.0);
        assert_eq!(affine.big_m(2.0).unwrap(), 4.0);
        assert!(affine.big_m(-1.0).is_err());
        let log = KirchhoffSpec::log1p();
        let oracle = riemann(|t| 1.0 + t.ln_1p(), 0.0, 1.0, 1_000_000);
        let v = log.big_m(1.0).unwrap();
        assert!((v - oracle).abs() < 1e-11);
        assert!((v - 2.0 * 2f64.ln()).abs() < 1e-12);
        let samples: Vec<f64> = (0..20).map(|i| i as f64 * 0.7).collect();
        log.check_sampled(&samples).unwrap();
        affine.check_sampled(&samples).unwrap();
        assert!(KirchhoffSpec::affine(0.0, 1.0).is_err());
    }

    #[test]
    fn ar_inequality_examples() {
        let affine = KirchhoffSpec::affine(1.0, 1.0).unwrap();
        let r = ar_inequality_check(&affine, 2, 4.0, &[0.0]).unwrap();
        assert_eq!(r.min_value, 0.0);
        assert!(r.passed);
        let r = ar_inequality_check(&affine, 2, 4.0, &[1.0]).unwrap();
        assert!((r.min_value - 0.25).abs() < 1e-15);
        let sqrt_m = KirchhoffSpec::power(1.0, 1.0, 0.5).unwrap();
        let sweep: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.1).collect();
        assert!(ar_inequality_check(&sqrt_m, 2, 4.0, &sweep).unwrap().passed);
        assert!(ar_inequality_check(&affine, 2, 3.0, &sweep).is_err());
    }

    #[test]
    fn generic_nonlinearity() {
        let nl = GenericNonlinearity::power(2, 4.0).unwrap();
        let x = [0.0, 0.0];
        assert_eq!(nl.f_eval(&x, -1.0).unwrap(), 0.0);
        assert!((nl.f_eval(&x, 1.0).unwrap() - std::f64::consts::E).abs() < 1e-15);
        let mut prev = f64::NEG_INFINITY;
        for i in 1..60 {
            let s = i as f64 * 0.05;
            let v = s * nl.f_eval(&x, s).unwrap() - 4.0 * nl.big_f_eval(&x, s).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn bound_constants() {
        let e = desk();
        // independent arithmetic: C = (k^{-3/13} - k^{-16/13}) * 6^{3/13} * 2.5^{16/13} / (4 * 2^{3/13} * 1.5^{16/13})
        let k: f64 = 16.0 / 3.0;
        let c = (k.powf(-3.0 / 13.0) - k.powf(-16.0 / 13.0)) * 6f64.powf(3.0 / 13.0) * 2.5f64.powf(16.0 / 13.0)
            / (4.0 * 2f64.powf(3.0 / 13.0) * 1.5f64.powf(16.0 / 13.0));
        assert!((energy_bound_constant(&e, 1.0) - c).abs() < 1e-14);
        assert!((c - 0.333_536_956_054).abs() < 1e-10);
        assert!((lambda_step_bound(&e, 1.0, 1.0) - 0.4).abs() < 1e-15);
        let affine = KirchhoffSpec::affine(1.0, 1.0).unwrap();
        let bound = mountain_pass_bound(&affine, 2).unwrap();
        assert!((bound - (4.0 * PI * PI + 2.0 * PI)).abs() < 1e-12);
        assert!((bound - 45.7616).abs() < 1e-3);
    }

    #[test]
    fn monotonicity_pair_equality_for_l2() {
        let (lhs, rhs) = monotonicity_pair(&[1.0, -2.0], &[0.5, 3.0], 2.0);
        assert!((lhs - rhs).abs() < 1e-14);
    }
}
