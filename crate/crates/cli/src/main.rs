//! Command-line driver: `solve`, `verify`, `sweep`, `moser`, `fibering`.
//!
//! Exit codes: 0 when every produced solution is certified (or every check
//! passes), 2 when something ran but is not certified, 1 on errors.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nkirchhoff::fibering;
use nkirchhoff::grid::{Field, Shape};
use nkirchhoff::io::{self, CsvTable, ProfileExport};
use nkirchhoff::moser::{self, MoserParams};
use nkirchhoff::scalar;
use nkirchhoff::solvers::{self, SolutionReport};
use nkirchhoff::verify::{self, VerifyOptions};

use config::{ExperimentConfig, ProblemKind};

#[derive(Parser, Debug)]
#[command(name = "nkirchhoff", version, about = "Nehari-manifold solvers for n-Kirchhoff problems with exponential growth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides solver.seed (and the verification seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides run.out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the resolved parameters and derived constants, write nothing.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Overrides grid.resolution.
    #[arg(long, global = true)]
    resolution: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the N+ and N- minimizers (or the ground state of the generic problem).
    Solve,
    /// Run the identity and inequality suites.
    Verify {
        /// Flip the sign of g' inside the identity check.
        #[arg(long, hide = true)]
        mutate_g_prime: bool,
    },
    /// Sweep lambda and fit the decay of the N+ minimum.
    Sweep,
    /// Moser-sequence probes.
    Moser,
    /// Fibering profile of one random direction.
    Fibering,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.solver.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.run.out = out.clone();
    }
    if let Some(res) = cli.resolution {
        cfg.grid.resolution = res;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = resolve(&cli)?;
    if let Command::Sweep = cli.command {
        if cfg.run.lambdas.is_empty() {
            bail!("run.lambdas is empty: nothing to sweep");
        }
    }
    if cli.dry_run {
        print!("{}", dry_run_text(&cfg)?);
        return Ok(ExitCode::SUCCESS);
    }
    print_constants(&cfg)?;
    let out = cfg.run.out.clone();
    fs::create_dir_all(&out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    fs::write(out.join("resolved.toml"), cfg.to_toml()?)?;
    match cli.command {
        Command::Solve => run_solve(&cfg, &out),
        Command::Verify { mutate_g_prime } => run_verify(&cfg, &out, mutate_g_prime),
        Command::Sweep => run_sweep(&cfg, &out),
        Command::Moser => run_moser(&cfg, &out),
        Command::Fibering => run_fibering(&cfg, &out),
    }
}

fn constants_lines(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let d = cfg.derived(true)?;
    let mut lines = vec![format!("n = {}", d.n), format!("alpha_n = {}", d.alpha_n)];
    let opt = |name: &str, v: Option<f64>| v.map(|v| format!("{name} = {v}"));
    lines.extend(
        [
            opt("k", d.k),
            opt("k'", d.k_prime),
            opt("gamma", d.gamma),
            opt("l = int |h|^k'", d.weight_l_norm),
            opt("C(p,q,n)", d.c_pqn),
            opt("critical level", d.critical_level),
            opt("mountain-pass bound", d.mountain_pass_bound),
        ]
        .into_iter()
        .flatten(),
    );
    if let Some(c) = d.critical {
        lines.push(format!("critical exponent = {c}"));
    }
    Ok(lines)
}

/// Resolved config as TOML, with the derived constants as comments so the
/// text can be loaded back.
fn dry_run_text(cfg: &ExperimentConfig) -> Result<String> {
    let mut text = String::new();
    for line in constants_lines(cfg)? {
        text.push_str(&format!("# {line}\n"));
    }
    text.push_str(&cfg.to_toml()?);
    Ok(text)
}

fn print_constants(cfg: &ExperimentConfig) -> Result<()> {
    for line in constants_lines(cfg)? {
        println!("{line}");
    }
    Ok(())
}

fn write_report(out: &Path, name: &str, rep: &SolutionReport) -> Result<()> {
    fs::write(out.join(format!("{name}.json")), io::to_json(rep)?)?;
    let mut f = fs::File::create(out.join(format!("{name}.nkfd")))?;
    io::write_field_binary(&rep.field, &mut f)?;
    Ok(())
}

fn summary_line(name: &str, rep: &SolutionReport) -> String {
    format!(
        "{name}: energy {:.10e} residual {:.3e} (tol {:.3e}) norm {:.6e} max {:.6e} iterations {} restarts {} certified {}{}",
        rep.energy,
        rep.residual_norm,
        rep.residual_tolerance,
        rep.norm,
        rep.max_value,
        rep.iterations,
        rep.restarts_used,
        rep.certified,
        if rep.notes.is_empty() { String::new() } else { format!(" ({})", rep.notes.join("; ")) }
    )
}

fn run_solve(cfg: &ExperimentConfig, out: &Path) -> Result<ExitCode> {
    let spec = cfg.spec()?;
    let mut reports = Vec::new();
    match cfg.problem.kind {
        ProblemKind::ConcaveConvex => {
            let u = solvers::minimize_nplus(&spec, &cfg.solver, None).context("N+ minimization failed")?;
            // fall back to the N+ direction when the random starts miss N-
            let v = match solvers::minimize_nminus(&spec, &cfg.solver, None) {
                Ok(v) => v,
                Err(_) => solvers::minimize_nminus(&spec, &cfg.solver, Some(&u.field)).context("N- minimization failed")?,
            };
            reports.push(("nplus", u));
            reports.push(("nminus", v));
        }
        ProblemKind::Generic => {
            reports.push(("ground_state", solvers::ground_state(&spec, &cfg.solver, None).context("ground-state minimization failed")?));
        }
    }
    let mut summary = String::new();
    for (name, rep) in &reports {
        write_report(out, name, rep)?;
        let line = summary_line(name, rep);
        println!("{line}");
        summary.push_str(&line);
        summary.push('\n');
    }
    if reports.len() == 2 {
        let d = reports[0].1.field.distance(&reports[1].1.field)?;
        let line = format!("distance between solutions {d:.6e}");
        println!("{line}");
        summary.push_str(&line);
        summary.push('\n');
    }
    fs::write(out.join("summary.txt"), summary)?;
    Ok(if reports.iter().all(|(_, r)| r.certified) { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run_verify(cfg: &ExperimentConfig, out: &Path, mutate: bool) -> Result<ExitCode> {
    let exps = cfg.exps()?;
    let mut opts = VerifyOptions::new(exps, cfg.solver.seed);
    opts.mutate_g_prime = mutate;
    let report = verify::run_all(&opts)?;
    for c in &report.checks {
        println!("{:<22} {} samples {:>6} worst {:.3e}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.samples, c.worst, c.detail);
    }
    fs::write(out.join("verify.json"), io::to_json(&report)?)?;
    Ok(if report.all_passed { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<ExitCode> {
    let spec = cfg.spec()?;
    let table = solvers::lambda_sweep(&spec, &cfg.solver, &cfg.run.lambdas)?;
    let csv = io::sweep_csv(&table).render();
    print!("{csv}");
    fs::write(out.join("sweep.csv"), csv)?;
    let ok = table.rows.iter().all(|r| r.within_bounds == Some(true));
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run_moser(cfg: &ExperimentConfig, out: &Path) -> Result<ExitCode> {
    let grid = cfg.grid()?;
    let n = grid.dim();
    if cfg.problem.kind != ProblemKind::Generic {
        bail!("moser needs problem.kind = \"generic\"");
    }
    let spec = cfg.spec_on(&grid)?;
    let center = vec![0.0; n];
    let schedule = cfg
        .run
        .moser_k
        .iter()
        .map(|&k| MoserParams::scheduled(k, n, cfg.run.moser_alpha_exponent, center.clone()))
        .collect::<nkirchhoff::Result<Vec<_>>>()?;
    if grid.shape() != Shape::UnitDisk {
        eprintln!("note: the delta_k schedule usually needs shape = \"unit-disk\"");
    }
    let fields = schedule.iter().map(|p| moser::moser_field(p, &grid)).collect::<nkirchhoff::Result<Vec<Field>>>()?;
    let report = moser::level_bound_probe(&spec, &schedule)?;
    let alpha_n = scalar::alpha_n(n);
    let first = cfg.run.tm_factors.first().copied().unwrap_or(1.0);
    let tm_first = moser::tm_probe(first * alpha_n, &fields)?;
    let csv = io::moser_csv(&report, first * alpha_n, &tm_first).render();
    print!("{csv}");
    fs::write(out.join("moser.csv"), csv)?;

    let mut tm = CsvTable {
        preamble: vec![format!("schema: integral of exp(alpha*|phi_k|^(n/(n-1))) per k; alpha = factor*alpha_n, alpha_n = {}", io::format_f64(alpha_n))],
        columns: std::iter::once("k".to_string()).chain(cfg.run.tm_factors.iter().map(|f| format!("factor_{f}"))).collect(),
        ..CsvTable::default()
    };
    let columns = cfg.run.tm_factors.iter().map(|f| moser::tm_probe(f * alpha_n, &fields)).collect::<nkirchhoff::Result<Vec<_>>>()?;
    for (i, p) in schedule.iter().enumerate() {
        let mut row = vec![p.k.to_string()];
        row.extend(columns.iter().map(|c| c[i].value.map(io::format_f64).unwrap_or_else(|| "blow-up".into())));
        tm.rows.push(row);
    }
    fs::write(out.join("tm.csv"), tm.render())?;
    let ok = report.rows.iter().all(|r| r.below_bound == Some(true));
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run_fibering(cfg: &ExperimentConfig, out: &Path) -> Result<ExitCode> {
    if cfg.problem.kind != ProblemKind::ConcaveConvex {
        bail!("fibering needs problem.kind = \"concave-convex\"");
    }
    let spec = cfg.spec()?;
    let u = solvers::random_bump(spec.grid(), cfg.run.direction_seed, cfg.solver.init_noise);
    let profile = fibering::find_branches(&u, &spec)?;
    let hi = profile.t2.or(profile.t_star).unwrap_or(1.0) * 1.5;
    let count = cfg.run.psi_samples.max(2);
    let ts: Vec<f64> = (1..=count).map(|i| hi * i as f64 / count as f64).collect();
    let samples = fibering::psi_samples(&u, &spec, &ts)?;
    println!(
        "case {:?} branches {} t1 {:?} t* {:?} t2 {:?} lambda*H {:.6e}",
        profile.case_tag, profile.branch_count, profile.t1, profile.t_star, profile.t2, profile.level
    );
    let found = profile.branch_count > 0;
    fs::write(out.join("profile.json"), io::to_json(&ProfileExport::new(profile, samples))?)?;
    Ok(if found { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
