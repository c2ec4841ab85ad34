use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rydberg_mirror_cli::Config;

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim")).args(args).output().expect("sim runs")
}

fn run_ok(args: &[&str]) {
    let out = sim(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn defaults_round_trip_through_binary() {
    let out = sim(&["defaults"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = Config::parse(&text).unwrap();
    assert_eq!(cfg, Config::default());
    assert_eq!(cfg.to_toml(), text);
}

#[test]
fn blockade_summary_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    run_ok(&["blockade", "--out", d]);
    let s = summary(dir.path());
    let r_b = s["blockade"]["r_b_um"].as_f64().unwrap();
    assert!((r_b - 4.60).abs() < 0.01, "{r_b}");
    let csv = fs::read_to_string(dir.path().join("blockade_chi.csv")).unwrap();
    assert!(csv.starts_with("r_m,chi_re,chi_im\n"));
    assert_eq!(csv.lines().count(), 112);
}

#[test]
fn missing_section_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[blockade]\nc6_ghz_um6 = 35.0\nomega_p_mhz = 0.168\nomega_c_mhz = 6.7\nr_min_um = 1.0\nr_max_um = 12.0\npoints = 11\n").unwrap();
    let out = sim(&["rabi", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[rabi]"));
    // the present section runs
    run_ok(&["blockade", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
}

#[test]
fn unknown_key_and_bad_value_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let o = dir.path().to_str().unwrap();
    let text = Config::default().to_toml().replace("omega_uv_mhz", "omega_uv");
    fs::write(&cfg, text).unwrap();
    assert_eq!(sim(&["rabi", "--config", cfg.to_str().unwrap(), "--out", o]).status.code(), Some(2));

    let text = Config::default().to_toml().replace("tau_decay_us = 6.0", "tau_decay_us = -6.0");
    fs::write(&cfg, text).unwrap();
    assert_eq!(sim(&["rabi", "--config", cfg.to_str().unwrap(), "--out", o]).status.code(), Some(2));

    let out = sim(&["rabi", "--config", dir.path().join("absent.toml").to_str().unwrap(), "--out", o]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_three() {
    // interaction too weak for the absorption ever to reach one half
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("weak.dat");
    fs::write(&ds, "range_um 1 25\na 0.0001 0 0 0.5\n").unwrap();
    let mut cfg = Config::default();
    cfg.physics.pair_dataset = Some(ds);
    cfg.blockade.as_mut().unwrap().points = 5;
    let path = dir.path().join("c.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    let out = sim(&["blockade", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let d = dir.path().to_str().unwrap();
        for s in ["rabi", "lifetime", "calibrate"] {
            run_ok(&[s, "--seed", "9", "--threads", threads, "--out", d]);
        }
    }
    let (fa, fb) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
    assert_eq!(fa.len(), fb.len());
    for ((na, ca), (nb, cb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(ca == cb, "{na} differs");
    }
}

#[test]
fn seed_changes_synthetic_data() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_ok(&["rabi", "--seed", "1", "--out", a.path().to_str().unwrap()]);
    run_ok(&["rabi", "--seed", "2", "--out", b.path().to_str().unwrap()]);
    let f = "rabi_trace.csv";
    assert_ne!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
}

#[test]
fn band_mode_adds_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Config::default();
    let h = cfg.histogram.as_mut().unwrap();
    h.band_runs = 5;
    h.band_samples = 2000;
    let path = dir.path().join("c.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    run_ok(&["histogram", "--band", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let csv = fs::read_to_string(dir.path().join("histogram_rydberg.csv")).unwrap();
    assert!(csv.starts_with("bin_lo_photons,bin_hi_photons,count,mean,sd\n"));
    let s = summary(dir.path());
    assert_eq!(s["histogram"]["rydberg_samples"], 10_000);
    assert_eq!(s["histogram"]["band"], true);
}

#[test]
fn reproduce_runs_all_figure_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["reproduce", "--figure", "S9", "--out", dir.path().to_str().unwrap()]);
    let s = summary(dir.path());
    let alpha = s["calibrate"]["alpha_photons_per_count"].as_f64().unwrap();
    assert!((alpha - 0.32).abs() < 0.02, "{alpha}");
    assert_eq!(sim(&["reproduce", "--figure", "7"]).status.code(), Some(2));
}
