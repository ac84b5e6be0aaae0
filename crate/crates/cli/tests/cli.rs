use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nkirchhoff"))
}

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/two_solutions.cfg")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn energy(json: &str) -> f64 {
    let line = json.lines().find(|l| l.trim_start().starts_with("\"energy\"")).unwrap();
    line.split(':').nth(1).unwrap().trim().trim_end_matches(',').parse().unwrap()
}

#[test]
fn bundled_config_gives_two_solutions_of_opposite_sign() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["solve", "--config", bundled().to_str().unwrap(), "--out", out, "--resolution", "32"]);
    // N- lies above the critical-case compactness level, so it is reported
    // but not certified
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let plus = std::fs::read_to_string(dir.path().join("nplus.json")).unwrap();
    let minus = std::fs::read_to_string(dir.path().join("nminus.json")).unwrap();
    assert!(energy(&plus) < 0.0 && energy(&minus) > 0.0);
    assert!(plus.contains("\"certified\": true"));
    assert!(dir.path().join("nplus.nkfd").exists() && dir.path().join("summary.txt").exists());
    let field = nkirchhoff::io::read_field_binary(std::fs::File::open(dir.path().join("nminus.nkfd")).unwrap()).unwrap();
    assert_eq!(field.grid().resolution(), 32);
}

#[test]
fn reports_are_byte_identical_for_the_same_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        run(&["solve", "--config", bundled().to_str().unwrap(), "--out", d.path().to_str().unwrap(), "--resolution", "20", "--seed", "5"]);
    }
    for name in ["nplus.json", "nminus.json", "nminus.nkfd"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn violated_assumption_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[problem]\nq = 1.2\n").unwrap();
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("q < n-1 violated"), "{}", stderr(&o));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_key_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.toml");
    std::fs::write(&cfg, "[solver]\nmax_iteration = 10\n").unwrap();
    let o = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown field"), "{}", stderr(&o));
}

#[test]
fn dry_run_prints_constants_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = run(&["solve", "--config", bundled().to_str().unwrap(), "--out", out.to_str().unwrap(), "--dry-run"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for key in ["# k = ", "# k' = ", "# gamma = ", "# alpha_n = ", "# C(p,q,n) = "] {
        assert!(text.contains(key), "missing {key} in\n{text}");
    }
    assert!(!out.exists());
}

#[test]
fn resolved_parameters_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let first = stdout(&run(&["sweep", "--config", bundled().to_str().unwrap(), "--seed", "3", "--resolution", "40", "--dry-run"]));
    let dumped = dir.path().join("resolved.toml");
    std::fs::write(&dumped, &first).unwrap();
    let second = stdout(&run(&["sweep", "--config", dumped.to_str().unwrap(), "--dry-run"]));
    assert_eq!(first, second);
    assert!(first.contains("seed = 3") && first.contains("resolution = 40"));
}

#[test]
fn empty_lambda_grid_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "[run]\nlambdas = []\n").unwrap();
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lambdas is empty"));
}

#[test]
fn sweep_writes_a_table_with_footer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, "[grid]\nresolution = 16\n[run]\nlambdas = [1e-2, 1e-3]\n").unwrap();
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# schema:"));
    assert!(lines[1].starts_with("lambda,theta,"));
    assert!(lines.last().unwrap().starts_with("# fitted_exponent="));
    assert_eq!(lines.len(), 5);
}

#[test]
fn verify_passes_and_mutation_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["verify", "--out", out, "--seed", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
    let o = run(&["verify", "--out", out, "--mutate-g-prime"]);
    assert_eq!(o.status.code(), Some(2));
    let line = stdout(&o).lines().find(|l| l.starts_with("g-identity")).unwrap().to_string();
    assert!(line.contains("FAIL"), "{line}");
}

#[test]
fn moser_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("moser.toml");
    std::fs::write(&cfg, "[problem]\nkind = \"generic\"\ngeneric_power = 4.0\n[grid]\nshape = \"unit-disk\"\nresolution = 64\n[run]\nmoser_k = [8, 16]\n").unwrap();
    let o = run(&["moser", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("moser.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("k,delta_k,norm,t_k,sup_j,bound"));
    let tm = std::fs::read_to_string(dir.path().join("tm.csv")).unwrap();
    assert_eq!(tm.lines().nth(1).unwrap(), "k,factor_0.8,factor_1.2");
}

#[test]
fn moser_schedule_does_not_fit_the_square() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("moser.toml");
    std::fs::write(&cfg, "[problem]\nkind = \"generic\"\n[grid]\nresolution = 32\n").unwrap();
    let o = run(&["moser", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fibering_profile_export() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fibering", "--resolution", "16", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("profile.json")).unwrap();
    for key in ["\"t_star\"", "\"t1\"", "\"t2\"", "\"psi\""] {
        assert!(text.contains(key));
    }
}
