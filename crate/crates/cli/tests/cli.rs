use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pcm_forge_core::scenario::{case_study_1, case_study_2, default_case_study, load_config};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pcm-forge"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_in(args: &[&str], out: &Path) -> Output {
    let mut a: Vec<&str> = args.to_vec();
    a.extend(["--out", out.to_str().unwrap()]);
    run(&a)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bundled_configs_match_the_case_study_constructors() {
    let cases = [
        ("cs1_static.cfg", case_study_1(1.0, 100.0)),
        ("cs1_dynamic.cfg", case_study_1(100.0, 1.0)),
        ("cs2_static.cfg", case_study_2(1.0, 100.0)),
        ("cs2_dynamic.cfg", case_study_2(100.0, 1.0)),
        ("passive.cfg", default_case_study()),
    ];
    for (name, expected) in cases {
        let run = load_config(config(name), None).unwrap();
        assert_eq!(run.scenario, expected, "{name}");
    }
    assert!(load_config(config("passive.cfg"), None)
        .unwrap()
        .design
        .is_some());
}

#[test]
fn simulate_writes_the_output_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("passive.cfg");
    let o = run_in(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "trajectory.csv",
        "objectives.json",
        "manifest.json",
        "scenario.cfg",
    ] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t_s,E_d,E_pcm,"));
    assert_eq!(csv.lines().count(), 62);
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["tool_version"], env!("CARGO_PKG_VERSION"));
    let obj = json(&dir.path().join("objectives.json"));
    assert!(obj["j_tot"].is_f64());
}

#[test]
fn simulation_reproduces_from_the_config_copy() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("passive.cfg");
    assert!(
        run_in(&["simulate", "--config", cfg.to_str().unwrap()], a.path())
            .status
            .success()
    );
    let copy = a.path().join("scenario.cfg");
    assert!(
        run_in(&["simulate", "--config", copy.to_str().unwrap()], b.path())
            .status
            .success()
    );
    for f in ["trajectory.csv", "objectives.json", "scenario.cfg"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(&["simulate", "--config", "no/such/file.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/file.cfg"));
}

#[test]
fn missing_profile_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("passive.cfg");
    let o = run_in(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--profile",
            "absent.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.csv"));
}

#[test]
fn out_of_range_valve_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("passive.cfg"))
        .unwrap()
        .replace("v2 = 1.0", "v2 = 1.5");
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, text).unwrap();
    let o = run_in(
        &["simulate", "--config", cfg.to_str().unwrap()],
        &dir.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("v2"), "{}", stderr(&o));
}

#[test]
fn simulate_rejects_optimized_channels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("cs2_static.cfg");
    let o = run_in(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn evaluation_failure_exits_4_with_log_paths() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("cs1_static.cfg"))
        .unwrap()
        .replace("q_hx_lb = 0.0", "q_hx_lb = 10.0")
        .replace("q_hx = 0.0", "q_hx = \"optimize\"");
    let cfg = dir.path().join("no_flow.cfg");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = run_in(
        &[
            "optimize",
            "--config",
            cfg.to_str().unwrap(),
            "--starts",
            "2",
        ],
        &out,
    );
    assert_eq!(o.status.code(), Some(4));
    let err = stderr(&o);
    for i in 0..2 {
        let log = out.join(format!("logs/start_{i:02}.log"));
        assert!(err.contains(log.to_str().unwrap()), "{err}");
        assert!(fs::read_to_string(log).unwrap().contains("no flow"));
    }
    assert_eq!(json(&out.join("summary.json"))["status"], "eval-failure");
}

fn optimize(cfg: &Path, out: &Path, seed: &str, starts: &str) -> Output {
    run_in(
        &[
            "optimize",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--starts",
            starts,
        ],
        out,
    )
}

#[test]
fn optimize_is_byte_identical_across_runs_and_from_the_manifest() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let cfg = config("cs1_static.cfg");
    for dir in [&a, &b] {
        let o = optimize(&cfg, dir.path(), "11", "1");
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let files = [
        "trajectory.csv",
        "objectives.json",
        "summary.json",
        "solve.log",
        "logs/start_00.log",
        "scenario.cfg",
    ];
    for f in files {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let strip = |dir: &Path| {
        let mut m = json(&dir.join("manifest.json"));
        m.as_object_mut().unwrap().remove("wall_clock_s");
        m.as_object_mut().unwrap().remove("output_dir");
        m
    };
    assert_eq!(strip(a.path()), strip(b.path()));

    // Reproduce from the recorded manifest and config copy alone.
    let m = json(&a.path().join("manifest.json"));
    let copy = a.path().join(m["scenario_copy"].as_str().unwrap());
    let seed = m["seed"].as_u64().unwrap().to_string();
    let starts = m["options"]["n_starts"].as_u64().unwrap().to_string();
    assert!(optimize(&copy, c.path(), &seed, &starts).status.success());
    for f in files {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(c.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn static_weighting_selects_the_capacity_lower_bound() {
    let dir = tempfile::tempdir().unwrap();
    let o = optimize(&config("cs1_static.cfg"), dir.path(), "0", "2");
    assert!(o.status.success(), "{}", stderr(&o));
    let s = json(&dir.path().join("summary.json"));
    let c = s["design"]["c_pcm"].as_f64().unwrap();
    assert!(c <= 1.01 * 5e5, "C_pcm* = {c}");
    assert!(s["diagnostics"]["objective_gap"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn dynamic_weighting_selects_the_melt_temperature_lower_bound() {
    let dir = tempfile::tempdir().unwrap();
    let o = optimize(&config("cs2_dynamic.cfg"), dir.path(), "0", "2");
    assert!(o.status.success(), "{}", stderr(&o));
    let t_m = json(&dir.path().join("summary.json"))["design"]["t_m"]
        .as_f64()
        .unwrap();
    assert!((t_m - 20.0).abs() <= 1e-6, "T_m* = {t_m}");
}

/// Writes a run directory holding only an objectives file.
fn fake_run(root: &Path, name: &str, j_cv_pcm: f64, j_ce: f64) -> PathBuf {
    let dir = root.join(name);
    fs::create_dir_all(&dir).unwrap();
    let w = serde_json::json!({
        "w_d": 1.0, "w_s": 100.0, "n": 1.0, "w_ie": 1.0, "w_ce": 1.0,
        "w_cv_d": 1.0, "w_cv_p": 1.0, "w_m": 1.0, "w_nom": 0.0
    });
    let j_d = j_ce + j_cv_pcm;
    let v = serde_json::json!({
        "j_ie": 0.0, "j_ce": j_ce, "j_cv_d": 0.0, "j_cv_pcm": j_cv_pcm,
        "j_m": 5e5, "j_nom": 0.0, "j_d": j_d, "j_s": 5e5, "j_tot": j_d + 100.0 * 5e5,
        "weights": w
    });
    fs::write(dir.join("objectives.json"), v.to_string()).unwrap();
    dir
}

fn table_rows(o: &Output) -> Vec<Vec<String>> {
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .filter(|l| !l.starts_with('*'))
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect()
}

#[test]
fn comparing_a_run_with_itself_gives_unit_ratios() {
    let root = tempfile::tempdir().unwrap();
    let d = fake_run(root.path(), "cs1", 8.04e4, -5.1e5);
    let o = run(&["compare", d.to_str().unwrap(), d.to_str().unwrap()]);
    assert!(o.status.success());
    let rows = table_rows(&o);
    let ratio_rows: Vec<_> = rows.iter().filter(|r| r[0].contains('/')).collect();
    assert_eq!(ratio_rows.len(), 2);
    for r in ratio_rows {
        assert!(r[1..].iter().all(|v| v == "1.00"), "{r:?}");
    }
}

#[test]
fn three_runs_give_three_ratio_rows_that_match_the_raw_json() {
    let root = tempfile::tempdir().unwrap();
    let a = fake_run(root.path(), "passive", 8.04e4, -5.10e5);
    let b = fake_run(root.path(), "active", 1.32e3, -5.94e5);
    let c = fake_run(root.path(), "other", 4.0e4, -6.0e5);
    let out = root.path().join("cmp");
    let o = run(&[
        "compare",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        c.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = table_rows(&o);
    let header = &rows[0];
    let ratio_rows: Vec<_> = rows.iter().filter(|r| r[0].contains('/')).collect();
    assert_eq!(ratio_rows.len(), 3);
    assert_eq!(ratio_rows[1][0], "passive/active");

    // Recompute from the raw objective files.
    let raw = |d: &Path, key: &str| json(&d.join("objectives.json"))[key].as_f64().unwrap();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let shown: f64 = ratio_rows[1][col("J_cv_pcm")].parse().unwrap();
    let exact = raw(&a, "j_cv_pcm") / raw(&b, "j_cv_pcm");
    assert_eq!(format!("{shown:.1}"), format!("{exact:.1}"));
    assert!((shown - 60.9).abs() < 1e-9);
    let shown_ce: f64 = ratio_rows[1][col("J_ce*")].parse().unwrap();
    assert!((shown_ce - raw(&a, "j_ce") / raw(&b, "j_ce")).abs() <= 5e-3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("benefit-inverted"));

    let saved = json(&out.join("comparison.json"));
    assert_eq!(saved["ratios"].as_array().unwrap().len(), 3);
    assert_eq!(saved["ratios"][1]["values"][3].as_f64().unwrap(), exact);
}

#[test]
fn compare_with_missing_objectives_fails() {
    let root = tempfile::tempdir().unwrap();
    let a = fake_run(root.path(), "a", 1.0, -1.0);
    let empty = root.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let o = run(&["compare", a.to_str().unwrap(), empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("objectives.json"));
    let o = run(&["compare", a.to_str().unwrap()]);
    assert!(!o.status.success());
}
