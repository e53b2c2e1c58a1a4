use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bcbounds(args: &[&str], outdir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcbounds")).args(args).env("BCBOUNDS_OUTDIR", outdir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bounds_in_the_lipschitz_regime() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcbounds(&["bounds", "--set", "gamma=0.75", "--set", "l_p=1.15"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let line = |name: &str| out.lines().find(|l| l.starts_with(name)).unwrap_or_else(|| panic!("{name} in {out}")).to_string();
    assert!(line("L_Q ").contains("7.2727"));
    assert!(line("alpha_bar").trim_end().ends_with(" 1"));
    assert!(dir.path().join("bounds").join("summary.csv").exists());
}

#[test]
fn bounds_outside_the_lipschitz_regime() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcbounds(&["bounds", "--set", "gamma=0.9", "--set", "l_p=1.15", "--set", "alphas=0.5,0.7,0.9"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("L_Q ") && l.contains("inapplicable")), "{out}");
    assert!(out.lines().any(|l| l.starts_with("alpha_bar") && l.contains("0.753856978998")), "{out}");
    let row = |a: &str| out.lines().find(|l| l.starts_with(a)).unwrap().to_string();
    assert!(row("0.7 ").contains("164.17671"));
    assert!(row("0.9 ").contains("inapplicable"));
}

#[test]
fn config_file_and_outdir_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fig.cfg");
    fs::write(&cfg, "# figure one\n[figure1]\nn_cells = 20000\n").unwrap();
    let out = dir.path().join("explicit");
    let o = bcbounds(&["figure1", "-c", cfg.to_str().unwrap(), "--outdir", out.to_str().unwrap()], &dir.path().join("env"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("figure1").join("checks.csv").exists());
    assert!(!dir.path().join("env").exists());
}

#[test]
fn outdir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcbounds(&["counterexample"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("counterexample").join("summary.csv").exists());
    assert!(stdout(&o).lines().any(|l| l.ends_with(" pass")));
}

#[test]
fn seed_flag_reproduces_and_changes_stochastic_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, tag: &str| {
        let out = dir.path().join(tag);
        let o = bcbounds(&["noise-performance", "--seed", seed, "--outdir", out.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read_to_string(out.join("noise-performance").join("summary.csv")).unwrap()
    };
    let (a, b, c) = (run("5", "a"), run("5", "b"), run("6", "c"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn failed_thresholds_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcbounds(&["figure1", "--set", "tolerance=1e-12"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).lines().any(|l| l.ends_with(" FAIL")));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcbounds(&["figure7"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = bcbounds(&["bounds", "--seed", "abc"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = bcbounds(&["bounds", "--set", "gamma"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma"));
    assert_eq!(bcbounds(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn malformed_config_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "gamma = 0.9\nthis line has no equals sign\n").unwrap();
    let o = bcbounds(&["bounds", "-c", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    fs::write(&cfg, "bounds.gamma = steep\n").unwrap();
    let o = bcbounds(&["bounds", "-c", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));

    let o = bcbounds(&["bounds", "-c", dir.path().join("missing.cfg").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
