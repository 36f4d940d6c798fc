use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

const CONTROL: &str = r#"
seed = 11
dt = 0.01
duration = 0.2
observables = ["occupations", "energy"]

[model]
sites = 4
v = 2.0
"#;

const FREE: &str = r#"
seed = 3
dt = 0.01
duration = 0.3

[model]
sites = 4
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn fockdyn(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_fockdyn"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
        .status;
    status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Cells of one named CSV column.
fn column(path: &Path, name: &str) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

fn floats(cells: &[String]) -> Vec<f64> {
    cells.iter().filter(|c| !c.is_empty()).map(|c| c.parse().unwrap()).collect()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONTROL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(fockdyn("run", &cfg, &a, &[]), 0);
    assert_eq!(fockdyn("run", &cfg, &b, &[]), 0);
    for f in ["trajectory.csv", "summary.json", "final_state.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let text = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 22);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONTROL);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(fockdyn("run", &cfg, &a, &["--seed", "11"]), 0);
    assert_eq!(fockdyn("run", &cfg, &b, &[]), 0);
    assert_eq!(fockdyn("run", &cfg, &c, &["--seed", "12"]), 0);
    let read = |d: &PathBuf| fs::read(d.join("trajectory.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(json(&c.join("summary.json"))["config"]["seed"], 12);
}

#[test]
fn noninteracting_run_has_unit_chi() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "free.toml", FREE);
    assert_eq!(fockdyn("run", &cfg, dir.path(), &[]), 0);
    let chi = floats(&column(&dir.path().join("trajectory.csv"), "chi"));
    assert_eq!(chi.len(), 30);
    assert!(chi.iter().all(|c| (c - 1.0).abs() < 1e-8), "{chi:?}");
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["status"], "ok");
    assert!((s["chi"]["min"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!((s["chi"]["max"].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn oversized_step_exits_two_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "big.toml", &CONTROL.replace("dt = 0.01", "dt = 0.1"));
    assert_eq!(fockdyn("run", &cfg, dir.path(), &[]), 2);
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["status"], "aborted");
    assert_eq!(s["error"]["tag"], "StepTooLarge");
    assert_eq!(s["guards_triggered"][0], "StepTooLarge");
    assert!(!column(&dir.path().join("trajectory.csv"), "step").is_empty());
}

#[test]
fn bad_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("unknown.toml", format!("{CONTROL}\nextra = 1\n")),
        ("syntax.toml", "dt = = 1".to_string()),
        ("modes.toml", CONTROL.replace("sites = 4", "sites = 11")),
        ("multiple.toml", CONTROL.replace("duration = 0.2", "duration = 0.205")),
    ] {
        let cfg = write_config(dir.path(), name, &text);
        assert_eq!(fockdyn("run", &cfg, dir.path(), &[]), 1, "{name}");
    }
    assert_eq!(fockdyn("run", &dir.path().join("missing.toml"), dir.path(), &[]), 1);
    let two = write_config(dir.path(), "two.toml", &format!("{CONTROL}\n[converge]\nlevels = 2\n"));
    assert_eq!(fockdyn("converge", &two, dir.path(), &[]), 1);
    let one = write_config(dir.path(), "one.toml", &format!("m = 1\n{CONTROL}"));
    assert_eq!(fockdyn("permtest", &one, dir.path(), &[]), 1);
}

#[test]
fn config_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("mode = \"phase-orbit\"\n{CONTROL}"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(fockdyn("run", &cfg, &a, &[]), 0);
    let echo = json(&a.join("summary.json"))["config"].clone();
    let again = write_config(dir.path(), "echo.toml", &toml::to_string(&echo).unwrap());
    assert_eq!(fockdyn("run", &again, &b, &[]), 0);
    assert_eq!(json(&b.join("summary.json"))["config"], echo);
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(b.join("trajectory.csv")).unwrap());
}

#[test]
fn converge_reports_second_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &CONTROL.replace("duration = 0.2", "duration = 0.5"));
    assert_eq!(fockdyn("converge", &cfg, dir.path(), &[]), 0);
    let s = json(&dir.path().join("converge.json"));
    let p = s["orders"][0].as_f64().unwrap();
    assert!((1.7..=2.3).contains(&p), "p = {p}");
    assert_eq!(s["order_in_range"], true);
    let shrink = floats(&column(&dir.path().join("converge.csv"), "return_shrink"));
    assert_eq!(shrink.len(), 2);
    assert!(shrink.iter().all(|&r| r >= 3.5), "{shrink:?}");
}

#[test]
fn converge_skips_order_at_floor() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.toml", &FREE.replace("duration = 0.3", "duration = 0.0"));
    assert_eq!(fockdyn("converge", &cfg, dir.path(), &[]), 0);
    let s = json(&dir.path().join("converge.json"));
    assert_eq!(s["floor_skip"], true);
    assert_eq!(s["orders"][0], Value::Null);
    assert_eq!(s["order_in_range"], Value::Null);
}

#[test]
fn permtest_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONTROL);
    assert_eq!(fockdyn("permtest", &cfg, dir.path(), &[]), 0);
    let path = dir.path().join("permtest.csv");
    let case = column(&path, "case");
    let step = column(&path, "step");
    let perm = column(&path, "permutation");
    let dist = floats(&column(&path, "distance"));
    assert_eq!(case.len(), 2 * 6 * 4);
    let mut generic_first = 0.0f64;
    for i in 0..case.len() {
        if step[i] == "0" || perm[i] == "0-1-2" {
            assert_eq!(dist[i], 0.0);
        } else if case[i] == "even" {
            assert!(dist[i] < 1e-12, "even row {i}: {}", dist[i]);
        } else if step[i] == "1" {
            generic_first = generic_first.max(dist[i]);
        }
    }
    assert!(generic_first > 1e-10);
}

#[test]
fn orbit_distance_sources() {
    let dir = tempfile::tempdir().unwrap();
    let phase = write_config(dir.path(), "phase.toml", &format!("{CONTROL}\n[orbit]\nsource = \"phase\"\nphi = 1.3\n"));
    assert_eq!(fockdyn("orbit-distance", &phase, dir.path(), &[]), 0);
    let s = json(&dir.path().join("orbit.json"));
    assert!(s["orbit_distance_sq"].as_f64().unwrap().abs() < 1e-10);
    assert!(s["plain_distance_sq"].as_f64().unwrap() > 1e-3);
    assert_eq!(column(&dir.path().join("orbit_curve.csv"), "phi").len(), 256);

    let perturb =
        write_config(dir.path(), "perturb.toml", &format!("{CONTROL}\n[orbit]\nsource = \"perturb\"\neps = 1e-4\n"));
    assert_eq!(fockdyn("orbit-distance", &perturb, dir.path(), &[]), 0);
    let s = json(&dir.path().join("orbit.json"));
    let (finite, small) = (s["orbit_distance_sq"].as_f64().unwrap(), s["small_closed_form"].as_f64().unwrap());
    assert!((finite - small).abs() < 1e-3 * small, "{finite} vs {small}");
    assert_eq!(s["orbit_le_plain"], true);

    let cfg = write_config(dir.path(), "c.toml", CONTROL);
    assert_eq!(fockdyn("run", &cfg, &dir.path().join("r"), &[]), 0);
    let end = dir.path().join("r/final_state.json");
    let files = format!(
        "{CONTROL}\n[orbit]\nsource = \"files\"\nfiles = [{:?}, {:?}]\n",
        end.display().to_string(),
        end.display().to_string()
    );
    let files = write_config(dir.path(), "files.toml", &files);
    assert_eq!(fockdyn("orbit-distance", &files, dir.path(), &[]), 0);
    let s = json(&dir.path().join("orbit.json"));
    assert!(s["orbit_distance_sq"].as_f64().unwrap().abs() < 1e-12);
}
