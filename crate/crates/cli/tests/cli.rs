use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hsl_core::grid::io::decode;
use tempfile::TempDir;

fn hsl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsl"))
        .args(args)
        .current_dir(dir)
        .env_remove("HSL_OUT")
        .env_remove("HSL_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_EVOLVE: &str = r#"{
  "grid": {"d": 1, "N": 128, "L": 8},
  "equation": {"lambda": 1.0},
  "time": {"T": TT, "dt": 0.001, "record_every": 20},
  "initial": {"norm": 0.5},
  "pairs": [{"s": 1, "q": 8}]
}"#;

fn evolve_config(dir: &Path, name: &str, t: f64) -> PathBuf {
    write_config(dir, name, &SMALL_EVOLVE.replace("TT", &t.to_string()))
}

#[test]
fn dry_run_prints_resolved_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"d":1,"N":256,"L":8,"experiment":"isometry"}"#);
    let o = hsl(&["run", "--config", cfg.to_str().unwrap(), "--dry-run", "--seed", "9"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["grid"]["N"], 256);
    assert_eq!(v["equation"]["gamma"], 0.5);
    assert_eq!(v["ensemble"]["seed"], 9);
    assert!(!tmp.path().join("hsl-out").exists());
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (r#"{"equation":{"gamma":1.5}}"#, "0 < γ < d"),
        (r#"{"equation":{"potential":"harmonic","s1":0.5}}"#, "(−Δ+|x|²)u"),
        (r#"{"time":{"dt":"small"}}"#, "time.dt"),
    ];
    for (i, (json, needle)) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("c{i}.json"), json);
        let o = hsl(&["norms", "--config", cfg.to_str().unwrap(), "--dry-run"], tmp.path());
        assert_eq!(code(&o), 2, "{json}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{}", stderr(&o));
    }
    let o = hsl(&["verify", "everything", "--config", "c0.json"], tmp.path());
    assert_eq!(code(&o), 2);
    let o = hsl(&["norms", "--config", "missing.json"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn witness_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "w.json", r#"{"grid":{"d":1,"N":64,"L":4},"experiment":"witness"}"#);
    let o = hsl(&["run", "--config", cfg.to_str().unwrap(), "--out", "w"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(tmp.path().join("w/witness.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("N,L,l2,"));
    let l2: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(l2.windows(2).all(|w| w[1] > w[0]));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("w/report.json")).unwrap()).unwrap();
    assert_eq!(report["experiment"], "witness");
    assert_eq!(report["config"]["grid"]["N"], 64);
    assert_eq!(report["pass"], true);
}

fn last_snapshot(out: &Path) -> hsl_core::Field {
    let index: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("index.json")).unwrap()).unwrap();
    let file = index["entries"].as_array().unwrap().last().unwrap()["file"].as_str().unwrap().to_string();
    decode(&fs::read(out.join(file)).unwrap()).unwrap().into_field()
}

#[test]
fn evolve_resume_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let full = evolve_config(dir, "full.json", 0.2);
    let half = evolve_config(dir, "half.json", 0.1);
    for out in ["a", "a2"] {
        let o = hsl(&["evolve", "--config", full.to_str().unwrap(), "--out", out], dir);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["report.json", "evolve.csv", "index.json"] {
        assert_eq!(fs::read(dir.join("a").join(f)).unwrap(), fs::read(dir.join("a2").join(f)).unwrap(), "{f}");
    }
    let o = hsl(&["evolve", "--config", half.to_str().unwrap(), "--out", "b"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = hsl(&["evolve", "--config", full.to_str().unwrap(), "--out", "b", "--resume"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let (a, b) = (last_snapshot(&dir.join("a")), last_snapshot(&dir.join("b")));
    let diff = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("b/report.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["steps"], 200);
    assert!((report["result"]["resumed_from"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert!(report["result"]["mass_drift"].as_f64().unwrap() < 1e-9);
    let header = fs::read_to_string(dir.join("b/evolve.csv")).unwrap();
    assert!(header.starts_with("time,mass,\"w^{2,1}_0\",L^8_t L^4"), "{header}");

    // a resume with another grid is refused
    let other = write_config(dir, "other.json", &SMALL_EVOLVE.replace("TT", "0.2").replace("\"N\": 128", "\"N\": 64"));
    let o = hsl(&["evolve", "--config", other.to_str().unwrap(), "--out", "b", "--resume"], dir);
    assert_eq!(code(&o), 2);
}

#[test]
fn corrupt_snapshot_on_resume() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let half = evolve_config(dir, "half.json", 0.05);
    let full = evolve_config(dir, "full.json", 0.1);
    let o = hsl(&["evolve", "--config", half.to_str().unwrap(), "--out", "c"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    fs::write(dir.join("c/fields/step_00000040.hsl"), b"JUNK and more").unwrap();
    let o = hsl(&["evolve", "--config", full.to_str().unwrap(), "--out", "c", "--resume"], dir);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));
    let o = hsl(&["evolve", "--config", full.to_str().unwrap(), "--out", "empty", "--resume"], dir);
    assert_eq!(code(&o), 2);
}

#[test]
fn picard_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let ok = write_config(dir, "ok.json", r#"{"grid":{"N":128,"L":8},"time":{"T":0.1,"dt":0.1},"initial":{"norm":0.5}}"#);
    let o = hsl(&["picard", "--config", ok.to_str().unwrap(), "--out", "p"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(dir.join("p/picard.csv")).unwrap();
    assert!(table.starts_with("iteration,difference"));
    assert!(dir.join("p/fields/picard_final.hsl").exists());

    let big = write_config(dir, "big.json", r#"{"grid":{"N":128,"L":8},"equation":{"lambda":4},"time":{"T":2,"dt":1},"initial":{"norm":20}}"#);
    let o = hsl(&["picard", "--config", big.to_str().unwrap(), "--out", "q"], dir);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("q/report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);

    let short = write_config(dir, "short.json", r#"{"grid":{"N":128,"L":8},"time":{"T":0.1,"dt":0.1,"max_iter":2},"initial":{"norm":0.5}}"#);
    let o = hsl(&["picard", "--config", short.to_str().unwrap(), "--out", "r"], dir);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn verify_suite_and_seed_override() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir, "v.json", r#"{"grid":{"N":512,"L":16},"ensemble":{"count":6}}"#);
    let run = |out: &str, seed: &str| hsl(&["verify", "spaces", "--config", cfg.to_str().unwrap(), "--out", out, "--seed", seed, "--threads", "2"], dir);
    for out in ["v1", "v2"] {
        let o = run(out, "3");
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = fs::read(dir.join("v1/report.json")).unwrap();
    assert_eq!(a, fs::read(dir.join("v2/report.json")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["result"]["suite"], "spaces");
    assert_eq!(report["config"]["ensemble"]["seed"], 3);
    let checks = fs::read_to_string(dir.join("v1/checks.csv")).unwrap();
    assert!(checks.starts_with("check,max_ratio,deviation,drift,pass"));
}

#[test]
fn ensemble_experiments() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let cfg = write_config(
        dir,
        "e.json",
        r#"{"grid":{"N":128,"L":8},"ensemble":{"count":3},"equation":{"lambda":4},
            "pairs":[{"s":1,"q":8},{"s":0.75,"q":"inf"}],
            "local_existence":{"m":[1,2],"iterations":6}}"#,
    );
    let c = cfg.to_str().unwrap();

    let o = hsl(&["norms", "--config", c, "--out", "n"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dir.join("n/norms.csv")).unwrap().lines().count(), 1 + 3 * 4);

    let o = hsl(&["strichartz", "--config", c, "--out", "s"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(dir.join("s/strichartz.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 3);
    assert!(table.contains("0.75,inf,2,"), "{table}");

    let o = hsl(&["local-existence", "--config", c, "--out", "l"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("l/report.json")).unwrap()).unwrap();
    let rows = report["result"]["rows"].as_array().unwrap();
    let t1 = rows[0]["threshold"].as_f64().unwrap();
    let t2 = rows[1]["threshold"].as_f64().unwrap();
    assert!(t2 < t1);
}

#[test]
fn out_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let cfg = write_config(dir, "w.json", r#"{"grid":{"N":64,"L":4},"witness":{"levels":2}}"#);
    let o = Command::new(env!("CARGO_BIN_EXE_hsl"))
        .args(["witness", "--config", cfg.to_str().unwrap()])
        .current_dir(dir)
        .env("HSL_OUT", "from-env")
        .env("HSL_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.join("from-env/witness.csv").exists());
}
