use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

const P0: &str = r#"{"beta":2,"gamma":0.5,"mu":0.5,"sigma":0.5,"N":1}"#;
const P1: &str = r#"{"beta":0.8,"gamma":0.5,"mu":0.5,"sigma":0.5,"N":1}"#;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sis-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SIS_LAB_THREADS")
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn thresholds_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&out, &["thresholds", "--config", P0]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let t = json(&out.join("thresholds.json"));
    assert_eq!(t["r0_stoch"].as_f64(), Some(1.875));
    assert_eq!(t["r0_det"].as_f64(), Some(2.0));
    let text = fs::read_to_string(out.join("thresholds.json")).unwrap();
    assert!(text.contains("1.8750000000000000e0"), "{text}");

    let m = json(&out.join("manifest.json"));
    assert_eq!(m["master_seed"].as_u64(), Some(0));
    assert!(m["timestamp"].as_str().unwrap().contains('T'));
    for entry in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(out.join(entry["path"].as_str().unwrap())).unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn usage_errors_exit_two_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(run(&out, &["frobnicate"]).status.code(), Some(2));
    assert!(!out.exists());

    let o = run(&out, &["thresholds", "--config", r#"{"gamma":0.5,"mu":0.5,"sigma":0.5,"N":1}"#]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("beta"));
    assert!(!out.exists());

    let o = run(&out, &["thresholds", "--config", "{\"beta\": 2,\n \"nope\": 1}"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    assert_eq!(run(&out, &["density", "--config", P0, "--sweep", "beta=1:2:3"]).status.code(), Some(2));
    assert_eq!(run(&out, &["sweep", "--config", P0, "--sweep", "delta=1:2:3"]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn computation_errors_exit_one_and_clean_up() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&out, &["density", "--config", P1]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not normalizable"));
    assert!(!out.exists());
}

#[test]
fn compare_sweep_flips_at_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = r#"{"gamma":0.5,"mu":0.5,"N":1,"c0":4}"#;
    let o = run(&out, &["compare", "--config", cfg, "--sweep", "r0_det=1.1:3.0:50"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(&out.join("compare.csv"));
    let header = &table[0];
    let col = header.iter().position(|h| h == "prevalence_order").unwrap();
    assert_eq!(header[0], "r0_det");
    let mut seen = 0;
    for row in &table[1..] {
        let r0: f64 = row[0].parse().unwrap();
        if row[col].is_empty() {
            assert!(r0 <= 1.5 + 1e-12, "blank row at {r0}");
            continue;
        }
        let sign: i32 = row[col].parse().unwrap();
        let expected = if r0 < 2.0 { -1 } else if r0 > 2.0 { 1 } else { 0 };
        assert_eq!(sign, expected, "r0_det = {r0}");
        seen += 1;
    }
    assert!(seen > 30);
}

#[test]
fn compare_sweep_hits_two_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = r#"{"gamma":0.5,"mu":0.5,"N":1,"c0":4}"#;
    let o = run(&out, &["compare", "--config", cfg, "--sweep", "r0_det=1.6:2.4:5"]);
    assert!(o.status.success());
    let table = rows(&out.join("compare.csv"));
    let col = table[0].iter().position(|h| h == "prevalence_order").unwrap();
    let signs: Vec<&str> = table[1..].iter().map(|r| r[col].as_str()).collect();
    assert_eq!(signs, ["-1", "-1", "0", "1", "1"]);
}

#[test]
fn sweep_is_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(
        &out,
        &[
            "sweep", "--config", P0, "--sweep", "sigma=0.1:0.5:3", "--sweep", "beta=1:4:4:log",
            "--quantity", "r0_stoch", "--quantity", "mean",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = rows(&out.join("sweep.csv"));
    assert_eq!(table[0], ["axis1", "axis2", "quantity", "value"]);
    assert_eq!(table.len(), 1 + 3 * 4 * 2);
    let last = &table[table.len() - 2];
    assert_eq!(last[2], "r0_stoch");
    assert_eq!(last[1].parse::<f64>().unwrap(), 4.0);
    // σ = 0.5, β = 4: R0^S = 4 − 0.125
    assert!((last[3].parse::<f64>().unwrap() - 3.875).abs() < 1e-12);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["ensemble", "--config", P0, "--paths", "4", "--horizon", "5", "--seed", "11"];
    assert!(run(&a, &args).status.success());

    // replay from the manifest's config echo
    let echo = json(&a.join("manifest.json"))["config"].to_string();
    assert!(run(&b, &["ensemble", "--config", &echo]).status.success());
    for name in ["summary.json", "histogram.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let s = json(&a.join("summary.json"));
    assert_eq!(s["n_paths"].as_u64(), Some(4));
    assert_eq!(s["master_seed"].as_u64(), Some(11));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = vec![];
    for threads in ["1", "3"] {
        let out = dir.path().join(threads);
        let o = Command::new(env!("CARGO_BIN_EXE_sis-lab"))
            .args(["ensemble", "--config", P0, "--paths", "6", "--horizon", "4", "--out"])
            .arg(&out)
            .env("SIS_LAB_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
        outputs.push(fs::read(out.join("summary.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn remaining_subcommands_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&[&str], &[&str]); 6] = [
        (&["density"], &["density.csv", "profile.json"]),
        (&["moments"], &["moments.json"]),
        (&["simulate", "--horizon", "2"], &["trajectory.csv"]),
        (&["fpe", "--cells", "200"], &["steady_state.csv", "fpe_error.json"]),
        (&["feller"], &["feller.json"]),
        (&["concentration"], &["concentration.csv"]),
    ];
    for (k, (args, files)) in cases.iter().enumerate() {
        let out = dir.path().join(k.to_string());
        let mut full = args.to_vec();
        full.extend(["--config", P0]);
        let o = run(&out, &full);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        for f in *files {
            assert!(out.join(f).exists(), "{f}");
        }
        assert!(out.join("manifest.json").exists());
    }

    let d = rows(&dir.path().join("0/density.csv"));
    assert_eq!(d[0], ["x", "p"]);
    let m = json(&dir.path().join("1/moments.json"));
    assert!(m["mean_relative_error"].as_f64().unwrap() < 1e-10);
    let t = rows(&dir.path().join("2/trajectory.csv"));
    assert_eq!(t[0], ["t", "i"]);
    assert_eq!(t.len(), 1 + 2001);
    let f = rows(&dir.path().join("3/steady_state.csv"));
    assert_eq!(f[0], ["x_center", "cell_mass", "analytic_mass"]);
    let fe = json(&dir.path().join("4/feller.json"));
    assert_eq!(fe["regime"], "Recurrent");
    let c = rows(&dir.path().join("5/concentration.csv"));
    assert_eq!(c[0], ["sigma", "mass"]);
    assert_eq!(c.len(), 4);
}
