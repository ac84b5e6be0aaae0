//! Identity and inequality suites run as a pass/fail matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fibering;
use crate::grid::{Grid, Shape, Weight, WeightProfile};
use crate::problem::ProblemSpec;
use crate::scalar::{self, ExponentSet, GenericNonlinearity, KirchhoffSpec};
use crate::solvers;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Base parameters; four fixed sets are added for the identity check.
    pub exps: ExponentSet,
    pub identity_samples: usize,
    pub vector_pairs: usize,
    pub directions: usize,
    pub resolution: usize,
    /// Test hook: evaluate the identity with `−g′` in place of `g′`.
    pub mutate_g_prime: bool,
}

impl VerifyOptions {
    pub fn new(exps: ExponentSet, seed: u64) -> Self {
        VerifyOptions {
            seed,
            exps,
            identity_samples: 1000,
            vector_pairs: 10_000,
            directions: 20,
            resolution: 24,
            mutate_g_prime: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    /// Largest violation (or relative error) seen.
    pub worst: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn result(name: &str, samples: usize, worst: f64, ok: bool, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed: ok, samples, worst, detail }
}

/// Parameter sets used by the identity check besides the base set.
pub fn identity_parameter_sets(base: &ExponentSet) -> Vec<ExponentSet> {
    let mut sets = vec![base.clone()];
    for (n, p, q, beta) in [(2, 3.5, 0.3, 1.5), (2, 6.0, 0.8, 1.3), (3, 5.0, 1.0, 1.2), (3, 6.5, 1.5, 1.4)] {
        sets.push(ExponentSet::new(n, p, q, beta, base.lambda()).expect("valid fixed set"));
    }
    sets
}

/// Largest `|s|` with `|s|^β` well inside the exponent range.
fn sample_range(e: &ExponentSet) -> f64 {
    10f64.min(600f64.powf(1.0 / e.beta()))
}

fn g_identity(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let sets = identity_parameter_sets(&opts.exps);
    let mut worst = 0.0f64;
    let mut count = 0;
    for e in &sets {
        let n = e.n() as f64;
        let smax = sample_range(e);
        for _ in 0..opts.identity_samples {
            let s: f64 = rng.gen_range(-smax..smax);
            let mut gp = scalar::g_prime_eval(s, e)?;
            if opts.mutate_g_prime {
                gp = -gp;
            }
            let lhs = gp * s * s - (2.0 * n - 1.0) * scalar::g_eval(s, e)? * s;
            let rhs = scalar::nehari_gap_density(s, e)?;
            worst = worst.max((lhs - rhs).abs() / (1.0 + (gp * s * s).abs()));
            count += 1;
        }
    }
    Ok(result("g-identity", count, worst, worst <= 1e-10, format!("{} parameter sets", sets.len())))
}

fn vector_inequality(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for n in [2usize, 3] {
        let l = n as f64;
        for _ in 0..opts.vector_pairs / 2 {
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (lhs, rhs) = scalar::monotonicity_pair(&a, &b, l);
            worst = worst.max(lhs - rhs);
            count += 1;
        }
    }
    result("vector-inequality", count, worst, worst <= 1e-12, "l = n, n in {2, 3}".into())
}

fn ar_inequality(opts: &VerifyOptions) -> Result<CheckResult> {
    let n = opts.exps.n();
    let sweep: Vec<f64> = (0..=1000).map(|i| 100.0 * i as f64 / 1000.0).collect();
    let specs = [KirchhoffSpec::affine(1.0, 1.0)?, KirchhoffSpec::power(1.0, 1.0, 0.5)?, KirchhoffSpec::log1p()];
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    let mut labels = Vec::new();
    for spec in &specs {
        let r = scalar::ar_inequality_check(spec, n, 2.0 * n as f64, &sweep)?;
        worst = worst.max(-r.min_value);
        ok &= r.passed;
        labels.push(spec.label());
    }
    Ok(result("ar-inequality", sweep.len() * specs.len(), worst, ok, labels.join("; ")))
}

fn positive_samples(e: &ExponentSet, count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let smax = sample_range(e).min(6.0);
    let mut s: Vec<f64> = (0..count).map(|_| rng.gen_range(1e-3..smax)).collect();
    s.sort_by(f64::total_cmp);
    s
}

fn rho_bound(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let e = &opts.exps;
    let samples = positive_samples(e, 200, rng);
    let mut worst = f64::NEG_INFINITY;
    for &s in &samples {
        let (gs, gps) = scalar::g_moments(s, e)?;
        let excess = (scalar::rho_eval(s, e)? - scalar::rho_upper_bound(s, e)?) / (gs + gps);
        worst = worst.max(excess);
    }
    Ok(result("rho-bound", samples.len(), worst, worst <= 1e-9, "excess relative to g(s)s + g'(s)s^2".into()))
}

fn primitive_bounds(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let e = &opts.exps;
    let n = e.n() as f64;
    let samples = positive_samples(e, 200, rng);
    let mut worst = f64::NEG_INFINITY;
    for &s in &samples {
        let (gs, _) = scalar::g_moments(s, e)?;
        let big_g = scalar::big_g_eval(s, e)?;
        worst = worst.max((big_g - gs / (e.p() + 2.0)) / gs);
        let lower = (1.0 / (2.0 * n) - 1.0 / (e.p() + 2.0)) * s.powf(e.p() + 2.0 + e.beta());
        worst = worst.max((lower - (gs / (2.0 * n) - big_g)) / gs);
    }
    Ok(result("primitive-bounds", samples.len(), worst, worst <= 1e-9, "G <= g(s)s/(p+2) and g(s)s/(2n) - G >= (1/(2n) - 1/(p+2))|s|^(p+2+beta)".into()))
}

fn generic_monotonicity(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let n = opts.exps.n();
    let nl = GenericNonlinearity::power(n, 2.0 * n as f64)?;
    let x = vec![0.0; n];
    let mut s: Vec<f64> = (0..100).map(|_| rng.gen_range(1e-2..3.0)).collect();
    s.sort_by(f64::total_cmp);
    let mut values = Vec::with_capacity(s.len());
    for &si in &s {
        values.push(si * nl.f_eval(&x, si)? - 2.0 * n as f64 * nl.big_f_eval(&x, si)?);
    }
    let worst = values.windows(2).map(|w| (w[0] - w[1]) / (1.0 + w[1].abs())).fold(f64::NEG_INFINITY, f64::max);
    Ok(result("generic-monotonicity", s.len(), worst, worst <= 1e-12, nl.label().into()))
}

fn parity(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let e = &opts.exps;
    let smax = sample_range(e);
    let mut bad = 0;
    for _ in 0..200 {
        let s: f64 = rng.gen_range(0.0..smax);
        if scalar::g_eval(-s, e)?.to_bits() != (-scalar::g_eval(s, e)?).to_bits() || scalar::big_g_eval(-s, e)?.to_bits() != scalar::big_g_eval(s, e)?.to_bits() {
            bad += 1;
        }
    }
    Ok(result("parity", 200, bad as f64, bad == 0, "g odd, G even, bitwise".into()))
}

/// `φ'` at the branch points is measured relative to the sum of its term
/// magnitudes, since the directions are unit-normalized and `t₂` can be large.
fn fibering_structure(opts: &VerifyOptions) -> Result<CheckResult> {
    let e = if opts.exps.lambda() > 0.0 { opts.exps.clone() } else { opts.exps.with_lambda(1e-3)? };
    let shape = match e.n() {
        2 => Shape::UnitSquare,
        _ => Shape::UnitCube,
    };
    let res = if e.n() == 2 { opts.resolution } else { opts.resolution.min(12) };
    let grid = Grid::new(shape, res)?;
    let weight = Weight::from_profile(&grid, WeightProfile::One, e.gamma(), e.kprime())?;
    let spec = ProblemSpec::concave_convex(&grid, e, KirchhoffSpec::affine(1.0, 1.0)?, weight)?;
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..opts.directions {
        let u = solvers::random_bump(&grid, opts.seed.wrapping_mul(1_000_003).wrapping_add(i as u64), 0.5);
        let ray = fibering::Ray::new(&u, &spec)?;
        let prof = fibering::find_branches(&u, &spec)?;
        let (Some(t1), Some(ts), Some(t2)) = (prof.t1, prof.t_star, prof.t2) else {
            failures.push(format!("direction {i}: {}", prof.diagnostic.unwrap_or_default()));
            continue;
        };
        let (d1a, sa) = ray.phi_d1_scaled(t1)?;
        let (d1b, sb) = ray.phi_d1_scaled(t2)?;
        let (d1a, d1b) = (d1a / sa, d1b / sb);
        let (d2a, _) = ray.phi_d2_scaled(t1)?;
        let (d2b, _) = ray.phi_d2_scaled(t2)?;
        worst = worst.max(d1a.abs()).max(d1b.abs());
        if !(t1 < ts && ts < t2 && d1a.abs() <= 1e-10 && d1b.abs() <= 1e-10 && d2a > 0.0 && d2b < 0.0) {
            failures.push(format!("direction {i}: t1 {t1:e} t* {ts:e} t2 {t2:e}"));
        }
    }
    let detail = if failures.is_empty() { format!("{} directions", opts.directions) } else { failures.join("; ") };
    Ok(result("fibering-structure", opts.directions, worst, failures.is_empty(), detail))
}

/// Runs every suite. Each suite draws from its own stream derived from the seed.
pub fn run_all(opts: &VerifyOptions) -> Result<VerifyReport> {
    let rng = |k: u64| ChaCha8Rng::seed_from_u64(opts.seed ^ (k << 32));
    let checks = vec![
        g_identity(opts, &mut rng(1))?,
        vector_inequality(opts, &mut rng(2)),
        ar_inequality(opts)?,
        rho_bound(opts, &mut rng(3))?,
        primitive_bounds(opts, &mut rng(4))?,
        generic_monotonicity(opts, &mut rng(5))?,
        parity(opts, &mut rng(6))?,
        fibering_structure(opts)?,
    ];
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { seed: opts.seed, checks, all_passed })
}
