//! Nehari-constrained descent: the `N⁺` and `N⁻` minimizers of the
//! concave–convex problem and the ground state of the generic problem.
//!
//! Every iterate is projected back onto its branch along its own ray (`t₁`,
//! `t₂`, or the ray maximum). On the constraint the reduced gradient equals the
//! full energy gradient, which is preconditioned by the Laplacian stiffness
//! matrix before an Armijo backtracking step.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::band::BandLu;
use crate::error::{Error, Result};
use crate::fibering::{self, GenericRay, NehariClass, NehariKind};
use crate::grid::{Csr, Field, Grid, Shape};
use crate::problem::{self, ProblemSpec};
use crate::scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub max_iterations: usize,
    /// First trial step; defaults to `1/m(‖u‖ⁿ)`.
    pub initial_step: Option<f64>,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    /// Absolute residual tolerance factor: accept when `‖R‖ <= tol (1 + ‖u‖)`.
    pub residual_tol: f64,
    /// Residual tolerance relative to the size of the operator and source terms.
    pub relative_tol: f64,
    pub energy_stall_tol: f64,
    /// Iterations without relative energy change above `energy_stall_tol`
    /// after which an unconverged run is abandoned.
    pub stall_window: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Relative amplitude of the random perturbation of the initial bump.
    pub init_noise: f64,
    /// Switch to Newton steps (n = 2) once the relative residual is below
    /// `newton_switch` or descent stalls.
    pub newton: bool,
    pub newton_switch: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_iterations: 3000,
            initial_step: None,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            residual_tol: 1e-8,
            relative_tol: 1e-10,
            energy_stall_tol: 1e-15,
            stall_window: 200,
            restarts: 3,
            seed: 0,
            init_noise: 0.1,
            newton: true,
            newton_switch: 0.5,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.shrink, self.sufficient_decrease, self.residual_tol, self.relative_tol, self.energy_stall_tol];
        if positive.iter().any(|v| !(*v > 0.0)) || self.shrink >= 1.0 || self.sufficient_decrease >= 1.0 {
            return Err(Error::InvalidParameters("solver tolerances must be positive (shrink and sufficient_decrease below 1)".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameters("max_iterations must be positive".into()));
        }
        if let Some(s) = self.initial_step {
            if !(s > 0.0) {
                return Err(Error::InvalidParameters("initial_step must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    NPlusMin,
    NMinusMin,
    GroundStateM,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    #[serde(skip)]
    pub field: Field,
    pub branch: Branch,
    pub energy: f64,
    pub residual_norm: f64,
    pub relative_residual: f64,
    pub residual_tolerance: f64,
    pub iterations: usize,
    pub restarts_used: usize,
    /// Fraction of nodes with value `>= −1e−12`.
    pub positivity: f64,
    pub norm: f64,
    pub max_value: f64,
    pub fibering_check: Option<NehariClass>,
    /// Branch point of the converged field's own ray (1 at an exact fixed point).
    pub reprojection_t: f64,
    pub lambda: f64,
    /// Compactness level in the critical case, when applicable.
    pub level_threshold: Option<f64>,
    pub certified: bool,
    pub notes: Vec<String>,
    /// Projected energy after each accepted step of the final run.
    #[serde(skip)]
    pub energy_history: Vec<f64>,
}

/// `∏ cos(πxᵢ)` on square and cube, `1 − |x|²` on the disk.
pub fn bump(grid: &Arc<Grid>) -> Field {
    Field::from_fn(grid, |x| match grid.shape() {
        Shape::UnitDisk => (1.0 - x.iter().map(|v| v * v).sum::<f64>()).max(0.0),
        _ => x.iter().map(|v| (std::f64::consts::PI * v).cos()).product(),
    })
    .expect("bump is finite")
}

/// Bump times `(1 + σξ)` with i.i.d. standard normal `ξ`, clipped at zero and
/// normalized to `‖u‖ = 1`.
pub fn random_bump(grid: &Arc<Grid>, seed: u64, sigma: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = bump(grid);
    let mut values = base.values().to_vec();
    for &j in grid.free_nodes() {
        let xi: f64 = StandardNormal.sample(&mut rng);
        values[j] = (values[j] * (1.0 + sigma * xi)).max(0.0);
    }
    let u = Field::from_values(grid, values).expect("finite");
    let norm = u.w1n_norm();
    u.scaled(1.0 / norm)
}

#[derive(Debug, Clone)]
struct Projected {
    field: Field,
    t: f64,
    energy: f64,
}

fn project(spec: &ProblemSpec, branch: Branch, w: &Field) -> Result<Projected> {
    // branch points are searched in a fixed window around t = 1, so work with
    // the unit direction
    let norm = w.w1n_norm();
    if !(norm > 0.0) {
        return Err(Error::NoBranch("zero direction".into()));
    }
    let w = &w.scaled(1.0 / norm);
    match branch {
        Branch::NPlusMin | Branch::NMinusMin => {
            let profile = fibering::find_branches(w, spec)?;
            let t = match branch {
                Branch::NPlusMin => profile.t1,
                _ => profile.t2,
            };
            let t = t.ok_or_else(|| Error::NoBranch(profile.diagnostic.clone().unwrap_or_else(|| "no branch point on this ray".into())))?;
            let field = w.scaled(t);
            let energy = problem::energy(&field, spec)?;
            Ok(Projected { field, t: t / norm, energy })
        }
        Branch::GroundStateM => {
            let ray = GenericRay::new(w, spec)?;
            let rm = fibering::generic_ray_max(&ray)?;
            Ok(Projected { field: w.scaled(rm.t), t: rm.t / norm, energy: rm.value })
        }
    }
}

fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::NoBranch(_)
            | Error::BracketNotFound { .. }
            | Error::Saturation { .. }
            | Error::NodeSaturation { .. }
            | Error::InnerMaxNotFound(_)
            | Error::RootIterationLimit { .. }
            | Error::Quadrature { .. }
    )
}

struct Descent {
    result: Projected,
    iterations: usize,
    residual: problem::Residual,
    history: Vec<f64>,
}

fn energy_scale(spec: &ProblemSpec, p: &Projected) -> Result<f64> {
    let s = p.field.gradient_power();
    Ok(p.energy.abs() + spec.kirchhoff().big_m(s)? / spec.n() as f64)
}

fn newton_step(spec: &ProblemSpec, branch: Branch, cur: &Projected, r: &problem::Residual, stiffness: &Csr) -> Result<Option<Projected>> {
    let sys = problem::newton_system(&cur.field, spec, stiffness)?;
    let lu = match BandLu::factor(&sys.a) {
        Ok(lu) => lu,
        Err(_) => return Ok(None),
    };
    // Sherman–Morrison for A + c vvᵀ
    let y = lu.solve(&r.vector);
    let z = lu.solve(&sys.v);
    let vy: f64 = sys.v.iter().zip(&y).map(|(a, b)| a * b).sum();
    let vz: f64 = sys.v.iter().zip(&z).map(|(a, b)| a * b).sum();
    let denom = 1.0 + sys.c * vz;
    if denom == 0.0 || !denom.is_finite() {
        return Ok(None);
    }
    let delta: Vec<f64> = y.iter().zip(&z).map(|(y, z)| y - sys.c * vy / denom * z).collect();
    let free = cur.field.free_values();
    let slack = 1e-12 * energy_scale(spec, cur)?;
    let mut theta = 1.0;
    for _ in 0..8 {
        let trial: Vec<f64> = free.iter().zip(&delta).map(|(u, d)| u - theta * d).collect();
        if let Ok(w) = Field::from_free(spec.grid(), &trial) {
            match project(spec, branch, &w) {
                Ok(p) if p.energy <= cur.energy + slack => {
                    let rn = problem::residual(&p.field, spec)?;
                    if rn.norm < r.norm {
                        return Ok(Some(p));
                    }
                }
                Ok(_) => {}
                Err(e) if recoverable(&e) => {}
                Err(e) => return Err(e),
            }
        }
        theta *= 0.5;
    }
    Ok(None)
}

fn descend(spec: &ProblemSpec, cfg: &SolveConfig, branch: Branch, init: &Field) -> Result<Descent> {
    let grid = spec.grid();
    let stiffness = grid.stiffness();
    let mut cur = project(spec, branch, init)?;
    let mut history = vec![cur.energy];
    let mut step: Option<f64> = cfg.initial_step;
    let mut stalled = 0usize;
    let mut newton_blocked_until = 0usize;
    let unknowns = grid.free_nodes().len();
    for it in 0..cfg.max_iterations {
        let r = problem::residual(&cur.field, spec)?;
        let tol = cfg.residual_tol * (1.0 + cur.field.w1n_norm());
        if r.norm <= tol && r.relative() <= cfg.relative_tol {
            // one more Newton step is nearly free and usually lands on the
            // round-off floor
            if cfg.newton && spec.n() == 2 {
                if let Some(next) = newton_step(spec, branch, &cur, &r, &stiffness)? {
                    let rn = problem::residual(&next.field, spec)?;
                    history.push(next.energy);
                    return Ok(Descent { result: next, iterations: it + 1, residual: rn, history });
                }
            }
            return Ok(Descent { result: cur, iterations: it, residual: r, history });
        }
        if stalled >= cfg.stall_window {
            return Err(Error::NonConvergence { iterations: it, residual: r.norm });
        }
        if cfg.newton && spec.n() == 2 && it >= newton_blocked_until && (r.relative() <= cfg.newton_switch || stalled >= 5) {
            if let Some(next) = newton_step(spec, branch, &cur, &r, &stiffness)? {
                stalled = 0;
                history.push(next.energy);
                cur = next;
                continue;
            }
            newton_blocked_until = it + 20;
        }
        let mut d = vec![0.0; unknowns];
        stiffness.solve_cg(&r.vector, &mut d, 1e-13, 20 * unknowns + 100)?;
        let slope: f64 = r.vector.iter().zip(&d).map(|(a, b)| a * b).sum();
        let m_coef = spec.kirchhoff().m(cur.field.gradient_power());
        let mut alpha = step.unwrap_or(1.0 / m_coef);
        let free = cur.field.free_values();
        let slack = 1e-13 * energy_scale(spec, &cur)?;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = free.iter().zip(&d).map(|(u, d)| u - alpha * d).collect();
            let w = Field::from_free(grid, &trial)?;
            match project(spec, branch, &w) {
                Ok(p) if p.energy <= cur.energy - cfg.sufficient_decrease * alpha * slope + slack => {
                    accepted = Some(p);
                    break;
                }
                Ok(_) => {}
                Err(e) if recoverable(&e) => {}
                Err(e) => return Err(e),
            }
            alpha *= cfg.shrink;
        }
        let next = accepted.ok_or(Error::NonConvergence { iterations: it, residual: r.norm })?;
        let change = (cur.energy - next.energy).abs();
        if change <= cfg.energy_stall_tol * energy_scale(spec, &cur)? {
            stalled += 1;
        } else {
            stalled = 0;
        }
        step = Some((alpha / cfg.shrink).min(1e3 / m_coef));
        history.push(next.energy);
        cur = next;
    }
    let r = problem::residual(&cur.field, spec)?;
    Err(Error::NonConvergence { iterations: cfg.max_iterations, residual: r.norm })
}

fn expected_kind(branch: Branch) -> Option<NehariKind> {
    match branch {
        Branch::NPlusMin => Some(NehariKind::NPlus),
        Branch::NMinusMin => Some(NehariKind::NMinus),
        Branch::GroundStateM => None,
    }
}

fn solve_branch(spec: &ProblemSpec, cfg: &SolveConfig, branch: Branch, init: Option<&Field>) -> Result<SolutionReport> {
    cfg.validate()?;
    let grid = spec.grid();
    let mut last_err = None;
    let mut used = 0usize;
    let mut attempt = 0usize;
    let mut pending: Option<Field> = init.cloned();
    while attempt <= cfg.restarts {
        let start = pending.take().unwrap_or_else(|| random_bump(grid, cfg.seed.wrapping_add(attempt as u64), cfg.init_noise));
        attempt += 1;
        let run = match descend(spec, cfg, branch, &start) {
            Ok(run) => run,
            Err(e) if recoverable(&e) || matches!(e, Error::NonConvergence { .. }) => {
                last_err = Some(e);
                used += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let field = &run.result.field;
        if field.nonnegative_fraction(1e-12) < 1.0 {
            // replace u by |u| and re-project; J(t(|u|)|u|) <= J(u)
            pending = Some(field.abs());
            used += 1;
            continue;
        }
        let check = match branch {
            Branch::GroundStateM => None,
            _ => Some(fibering::nehari_classify(field, spec)?),
        };
        if let (Some(c), Some(kind)) = (check, expected_kind(branch)) {
            if c.kind != kind {
                last_err = Some(Error::NonConvergence { iterations: run.iterations, residual: run.residual.norm });
                used += 1;
                continue;
            }
        }
        return build_report(spec, cfg, branch, run, check, used);
    }
    Err(match last_err {
        Some(Error::NoBranch(msg)) => Error::NoBranch(msg),
        Some(e) => e,
        None => Error::NonConvergence { iterations: cfg.max_iterations, residual: f64::NAN },
    })
}

fn build_report(spec: &ProblemSpec, cfg: &SolveConfig, branch: Branch, run: Descent, check: Option<NehariClass>, used: usize) -> Result<SolutionReport> {
    let field = run.result.field;
    let reprojection_t = project(spec, branch, &field)?.t;
    let norm = field.w1n_norm();
    let tol = cfg.residual_tol * (1.0 + norm);
    let mut report = SolutionReport {
        branch,
        energy: run.result.energy,
        residual_norm: run.residual.norm,
        relative_residual: run.residual.relative(),
        residual_tolerance: tol,
        iterations: run.iterations,
        restarts_used: used,
        positivity: field.nonnegative_fraction(1e-12),
        norm,
        max_value: field.values().iter().copied().fold(f64::NEG_INFINITY, f64::max),
        fibering_check: check,
        reprojection_t,
        lambda: spec.lambda(),
        level_threshold: None,
        certified: false,
        notes: Vec::new(),
        energy_history: run.history,
        field,
    };
    certify(&mut report, spec);
    Ok(report)
}

/// Re-checks residual, branch classification, sign and, in the critical case,
/// the compactness level; sets `certified` and records each failure in `notes`.
pub fn certify(report: &mut SolutionReport, spec: &ProblemSpec) {
    let mut notes = Vec::new();
    if !(report.residual_norm <= report.residual_tolerance) {
        notes.push(format!("residual {:e} above tolerance {:e}", report.residual_norm, report.residual_tolerance));
    }
    if report.positivity < 1.0 {
        notes.push(format!("field has negative nodes (positivity {})", report.positivity));
    }
    if let Some(kind) = expected_kind(report.branch) {
        match report.fibering_check {
            Some(c) if c.kind == kind => {}
            other => notes.push(format!("Nehari classification {:?} does not match {:?}", other.map(|c| c.kind), kind)),
        }
    }
    if report.branch == Branch::NPlusMin && !(report.energy < 0.0) {
        notes.push(format!("N+ energy {:e} is not negative", report.energy));
    }
    if let (Some(exps), Some(weight)) = (spec.exps(), spec.weight()) {
        if exps.is_critical() {
            let level = scalar::critical_level_threshold(exps, spec.kirchhoff().m0(), weight.l_norm());
            report.level_threshold = Some(level);
            if !(report.energy < level) {
                notes.push(format!("critical case: energy {:.6e} not below the compactness level {:.6e}", report.energy, level));
            }
        }
    }
    if report.branch == Branch::GroundStateM {
        if let Ok(bound) = scalar::mountain_pass_bound(spec.kirchhoff(), spec.n()) {
            report.level_threshold = Some(bound);
            if !(report.energy < bound) {
                notes.push(format!("energy {:.6e} not below the mountain-pass bound {:.6e}", report.energy, bound));
            }
        }
        if !(report.energy > 0.0) {
            notes.push(format!("ground-state energy {:e} is not positive", report.energy));
        }
    }
    report.certified = notes.is_empty();
    report.notes = notes;
}

/// Minimizer of `J` on `N⁺`, started from `init` or a seeded random bump.
pub fn minimize_nplus(spec: &ProblemSpec, cfg: &SolveConfig, init: Option<&Field>) -> Result<SolutionReport> {
    spec.require_concave_convex()?;
    solve_branch(spec, cfg, Branch::NPlusMin, init)
}

/// Minimizer of `J` on `N⁻`.
pub fn minimize_nminus(spec: &ProblemSpec, cfg: &SolveConfig, init: Option<&Field>) -> Result<SolutionReport> {
    spec.require_concave_convex()?;
    solve_branch(spec, cfg, Branch::NMinusMin, init)
}

/// Minimizes `u ↦ max_{t>0} J(tu)` for the generic problem.
pub fn ground_state(spec: &ProblemSpec, cfg: &SolveConfig, init: Option<&Field>) -> Result<SolutionReport> {
    if spec.exps().is_some() {
        return Err(Error::InvalidArgument("ground_state needs the generic problem".into()));
    }
    solve_branch(spec, cfg, Branch::GroundStateM, init)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub energy: Option<f64>,
    pub t1: Option<f64>,
    pub norm: Option<f64>,
    pub residual: Option<f64>,
    /// `−C(p,q,n) λ^{k/(k−1)}`
    pub lower_bound: f64,
    pub within_bounds: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log|θ_λ|` against `log λ`.
    pub fitted_exponent: Option<f64>,
    /// `k/(k−1)`
    pub predicted_exponent: f64,
    pub bound_constant: f64,
}

/// Runs `minimize_nplus` for each λ (in parallel) and fits the decay exponent.
pub fn lambda_sweep(spec: &ProblemSpec, cfg: &SolveConfig, lambdas: &[f64]) -> Result<SweepTable> {
    let (exps, weight) = spec.require_concave_convex()?;
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let constant = scalar::energy_bound_constant(exps, weight.l_norm());
    let rows: Vec<SweepRow> = std::thread::scope(|scope| {
        let handles: Vec<_> = lambdas
            .iter()
            .map(|&lambda| scope.spawn(move || sweep_row(spec, cfg, lambda, constant)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.energy.filter(|e| *e < 0.0).map(|e| (r.lambda.ln(), (-e).ln())))
        .collect();
    let fitted_exponent = (pts.len() >= 2).then(|| {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(SweepTable { rows, fitted_exponent, predicted_exponent: exps.kprime(), bound_constant: constant })
}

fn sweep_row(spec: &ProblemSpec, cfg: &SolveConfig, lambda: f64, constant: f64) -> SweepRow {
    let lower_bound = -constant * lambda.powf(spec.exps().map_or(1.0, |e| e.kprime()));
    let mut row = SweepRow { lambda, energy: None, t1: None, norm: None, residual: None, lower_bound, within_bounds: None, error: None };
    let outcome = spec.with_lambda(lambda).and_then(|s| minimize_nplus(&s, cfg, None));
    match outcome {
        Ok(rep) => {
            row.energy = Some(rep.energy);
            row.t1 = Some(rep.reprojection_t);
            row.norm = Some(rep.norm);
            row.residual = Some(rep.residual_norm);
            row.within_bounds = Some(lower_bound - 1e-12 <= rep.energy && rep.energy < 0.0);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}
