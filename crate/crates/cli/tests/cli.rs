use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn orbach(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orbach")).args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = orbach(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Data rows (header line and comments skipped) split into fields.
fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(csv: &str, k: usize) -> Vec<f64> {
    rows(csv).iter().map(|r| r[k].parse().unwrap()).collect()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn orientation_sweep_matches_golden() {
    let golden = include_str!("golden/orientation_singlet.csv");
    let fresh = stdout(&["orientation-sweep"]);
    let (g, f) = (rows(golden), rows(&fresh));
    assert_eq!(g.len(), 91);
    assert_eq!(g.len(), f.len());
    for (a, b) in g.iter().zip(&f) {
        for (x, y) in a.iter().zip(b) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!(x == y || ((x - y) / x).abs() < 1e-6, "{x} vs {y}");
        }
    }
}

#[test]
fn provenance_header_is_one_tagged_line() {
    let out = stdout(&["temperature-sweep"]);
    let comments: Vec<&str> = out.lines().filter(|l| l.starts_with('#')).collect();
    assert_eq!(comments.len(), 1);
    assert!(comments[0].contains("activation_mev=16.8 [Arrhenius fit of T1 and T2]"));
    assert!(out.lines().nth(1).unwrap() == "temperature_k,t1_on_axis_s,t1_off_axis_s,t2_s");
}

#[test]
fn identical_seed_gives_identical_bytes() {
    let a = stdout(&["decay", "--seed", "17"]);
    let b = stdout(&["decay", "--seed", "17", "--threads", "1"]);
    let c = stdout(&["decay", "--seed", "18"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let serial = stdout(&["orientation-sweep", "--model", "triplet", "--threads", "1"]);
    let parallel = stdout(&["orientation-sweep", "--model", "triplet", "--threads", "4"]);
    assert_eq!(serial, parallel);
}

#[test]
fn equal_overlaps_give_flat_t1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "flat.toml", "[orbach]\nratio = 1.0\n");
    let out = stdout(&["--config", &cfg, "orientation-sweep"]);
    for k in [1, 2] {
        let col = column(&out, k);
        assert!(col.iter().all(|t| (t / col[0] - 1.0).abs() < 1e-9), "column {k} varies");
    }
}

#[test]
fn esr_line_groups() {
    let dir = tempfile::tempdir().unwrap();
    let groups = |csv: &str| {
        let mut fields = column(csv, 0);
        fields.sort_by(f64::total_cmp);
        fields.dedup_by(|a, b| (*a - *b).abs() < 0.01);
        fields
    };
    let tilted = groups(&stdout(&["esr-spectrum"]));
    let aligned_cfg = write_config(dir.path(), "a.json", r#"{"esr": {"misalignment_deg": 0.0}}"#);
    let aligned = groups(&stdout(&["--config", &aligned_cfg, "esr-spectrum"]));
    assert_eq!(aligned.len(), 4);
    assert_eq!(tilted.len(), 6);
    for g in [&aligned, &tilted] {
        let outer = g[g.len() - 1] - g[0];
        assert!((outer - 67.0).abs() < 0.5, "outer splitting {outer}");
    }
}

#[test]
fn decay_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    stdout(&["decay", "--seed", "5", "--out", out]);
    let curve = dir.path().join("decay.csv");
    stdout(&["fit-biexp", "--input", curve.to_str().unwrap(), "--out", out]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit-biexp.json")).unwrap()).unwrap();
    let names: Vec<&str> = json["names"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(names, ["a1", "tau1", "a2", "tau2", "offset"]);
    // time constants of the default 80 degree singlet rate matrix
    let tau1 = json["values"][1].as_f64().unwrap();
    let tau2 = json["values"][3].as_f64().unwrap();
    assert!((tau1 / 1.6589e-3 - 1.0).abs() < 0.05, "tau1 = {tau1}");
    assert!((tau2 / 1.8306e-2 - 1.0).abs() < 0.05, "tau2 = {tau2}");
}

#[test]
fn arrhenius_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = stdout(&["temperature-sweep"]);
    let mut input = String::from("label,observable,temperature_k,time_s\n");
    for r in rows(&sweep) {
        for (label, obs, k) in [("on", "T1", 1), ("off", "T1", 2), ("t2", "T2", 3)] {
            input.push_str(&format!("{label},{obs},{},{}\n", r[0], r[k]));
        }
    }
    let path = dir.path().join("arrhenius.csv");
    fs::write(&path, input).unwrap();
    let fit = stdout(&["fit-arrhenius", "--input", path.to_str().unwrap()]);
    let ea: f64 = rows(&fit)[0][2].parse().unwrap();
    assert!((ea - 16.8).abs() < 1e-4, "Ea = {ea}");
    let off = rows(&fit).into_iter().find(|r| r[0] == "off" && r[1] == "prefactor_hz").unwrap();
    assert!((off[2].parse::<f64>().unwrap() / 378e3 - 1.0).abs() < 1e-4);
}

#[test]
fn instantaneous_diffusion_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut input = String::from("theta2_deg,t2_s\n");
    for deg in [30.0f64, 60.0, 90.0, 120.0, 150.0, 180.0] {
        let rate = 1.0 / 0.95e-3 + (deg.to_radians() / 2.0).sin().powi(2) / 0.319e-3;
        input.push_str(&format!("{deg},{}\n", 1.0 / rate));
    }
    let path = dir.path().join("id.csv");
    fs::write(&path, input).unwrap();
    let fit = stdout(&["fit-id", "--input", path.to_str().unwrap()]);
    let sd: f64 = rows(&fit).iter().find(|r| r[0] == "t2_sd_s").unwrap()[1].parse().unwrap();
    assert!((sd / 0.95e-3 - 1.0).abs() < 1e-9);
}

#[test]
fn orientation_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = stdout(&["orientation-sweep"]);
    let mut input = String::from("series,theta_deg,time_s\n");
    for r in rows(&sweep).iter().step_by(5) {
        for (series, k) in [("t1a", 1), ("t1b", 2), ("t2", 3)] {
            input.push_str(&format!("{series},{},{}\n", r[0], r[k]));
        }
    }
    let path = dir.path().join("orientation.csv");
    fs::write(&path, input).unwrap();
    let fit = stdout(&["fit-orientation", "--input", path.to_str().unwrap()]);
    let ratio: f64 = rows(&fit).iter().find(|r| r[0] == "ratio").unwrap()[1].parse().unwrap();
    assert!((ratio / 125.0 - 1.0).abs() < 1e-3, "ratio = {ratio}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "bad.json", r#"{"orbach": {"ratoi": 3}}"#);
    assert_eq!(orbach(&["--config", &unknown, "decay"]).status.code(), Some(2));
    let invalid = write_config(dir.path(), "bad.toml", "[spin]\ng_parallel = 3.0\n");
    assert_eq!(orbach(&["--config", &invalid, "decay"]).status.code(), Some(2));

    let path = dir.path().join("two.csv");
    fs::write(&path, "theta2_deg,t2_s\n90,1e-3\n180,5e-4\n").unwrap();
    assert_eq!(orbach(&["fit-id", "--input", path.to_str().unwrap()]).status.code(), Some(3));

    let missing = dir.path().join("nope.csv");
    assert_eq!(orbach(&["fit-biexp", "--input", missing.to_str().unwrap()]).status.code(), Some(2));
}
