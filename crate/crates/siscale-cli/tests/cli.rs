use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], config: &str, out: &Path) -> Output {
    let dir = out.parent().unwrap();
    let cfg = dir.join(format!("cfg-{}.json", out.file_name().unwrap().to_string_lossy()));
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_siscale"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const DSBS: &str = r#"{"p": 0.25, "d1": [0.05, 0.1], "d2": [0.1, 0.2], "optimizer": {"restarts": 0, "descent_iterations": 60, "aux_cap": 3}}"#;

const GAUSS: &str = r#"{"var_x": 1.0, "noise_increments": [0.5, 1.0, 2.0], "distortions": [0.2, 0.3, 0.25], "order": [0, 1, 2]}"#;

const SIM: &str = r#"{
  "px_y1": [[0.375, 0.125], [0.125, 0.375]],
  "py2_given_y1": [[1.0], [1.0]],
  "distortion1": [[0, 1], [1, 0]],
  "distortion2": [[0, 1], [1, 0]],
  "aux": {
    "cond": [[0.3025, 0.2475, 0.2475, 0.2025], [0.2025, 0.2475, 0.2475, 0.3025]],
    "dims": [1, 2, 2],
    "decoders": [
      {"aux_size": 2, "side_size": 2, "map": [0, 1, 0, 1]},
      {"aux_size": 2, "side_size": 1, "map": [0, 1]}
    ]
  },
  "blocklengths": [100, 200],
  "trials": 40,
  "RATES"
}"#;

#[test]
fn dsbs_sweep_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("dsbs");
    let o = run(&["dsbs", "--deterministic"], DSBS, &out);
    assert!(o.status.success(), "{}", stdout(&o));
    let csv = fs::read_to_string(out.join("dsbs.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "D1,D2,region,R_WZ,R_HB");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0.05,0.1,I-D,"), "{}", lines[1]);
    assert!(stdout(&o).starts_with("dsbs: p=0.25"));
}

#[test]
fn timestamp_header_unless_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("stamped");
    assert!(run(&["dsbs"], DSBS, &out).status.success());
    let csv = fs::read_to_string(out.join("dsbs.csv")).unwrap();
    assert!(csv.starts_with("# generated_unix="));
    assert_eq!(csv.lines().nth(1), Some("D1,D2,region,R_WZ,R_HB"));
}

#[test]
fn gaussian_stage_and_grid_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    let o = run(&["gaussian", "--deterministic"], GAUSS, &out);
    assert!(o.status.success(), "{}", stdout(&o));
    let stages = fs::read_to_string(out.join("gaussian_stages.csv")).unwrap();
    assert_eq!(stages.lines().next(), Some("stage,decoder,distortion,rate,cumulative,hb_prefix,wz_rate,perfectly_scalable"));
    assert_eq!(stages.lines().count(), 4);
    // Cumulative stage rates equal the prefix Heegard-Berger rates.
    for line in stages.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (cum, prefix): (f64, f64) = (f[4].parse().unwrap(), f[5].parse().unwrap());
        assert!((cum - prefix).abs() < 1e-9, "{line}");
    }
    let grid = fs::read_to_string(out.join("cover_grid.csv")).unwrap();
    assert_eq!(grid.lines().next(), Some("rank,level,decoder_at_rank,rate"));
    assert_eq!(grid.lines().count(), 10);
    assert!(out.join("gaussian.json").exists());
}

#[test]
fn outputs_are_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = SIM.replace("\"RATES\"", "\"margin\": 0.1");
    for (cmd, cfg, file) in [("gaussian", GAUSS, "cover_grid.csv"), ("simulate", sim.as_str(), "simulate.csv"), ("dsbs", DSBS, "dsbs.csv")] {
        let a = tmp.path().join(format!("{cmd}-a"));
        let b = tmp.path().join(format!("{cmd}-b"));
        assert!(run(&[cmd, "--deterministic", "--seed", "5"], cfg, &a).status.success());
        assert!(run(&[cmd, "--deterministic", "--seed", "5"], cfg, &b).status.success());
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{cmd}");
    }
    let a = fs::read(tmp.path().join("simulate-a/simulate_n200.json")).unwrap();
    let b = fs::read(tmp.path().join("simulate-b/simulate_n200.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn violated_rates_still_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let cfg = SIM.replace(
        "\"RATES\"",
        r#""rates": {"r_v": 0.0, "r_w1": 0.001, "r_w2": 0.001, "r_a": 0.0, "r_a_prime": 0.0, "r_b": 0.0, "r_c": 0.0}"#,
    );
    let o = run(&["simulate", "--deterministic"], &cfg, &out);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let summary = fs::read_to_string(out.join("simulate_n100.json")).unwrap();
    assert!(summary.contains("\"label\": \"margin-violated\""));
    assert!(stdout(&o).contains("label=margin-violated"));
}

#[test]
fn malformed_config_reports_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    let o = run(&["dsbs"], "{\n  \"p\": 0.25,\n  \"d1\": [0.1,\n}", &out);
    assert!(!o.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["error"]["kind"], "parse");
    assert!(v["error"]["message"].as_str().unwrap().contains("line"));

    let o = run(&["dsbs"], r#"{"d1": [0.1], "d2": [0.2]}"#, &out);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(v["error"]["message"].as_str().unwrap().contains("`p`"));
}

#[test]
fn infeasible_instance_names_the_precondition() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("dom");
    let o = run(&["gaussian"], r#"{"var_x": -1.0, "noise_increments": [1.0], "distortions": [0.5]}"#, &out);
    assert!(!o.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["error"]["kind"], "domain");
}

#[test]
fn rateloss_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rl");
    let cfg = r#"{"gaussian_grid": {"var_x": [1.0], "noise1": [0.5], "noise2": [1.0, null], "d1": [0.1, 0.3], "d2": [0.2]}}"#;
    let o = run(&["rateloss", "--deterministic"], cfg, &out);
    assert!(o.status.success(), "{}", stdout(&o));
    let csv = fs::read_to_string(out.join("rateloss.csv")).unwrap();
    assert!(csv.starts_with("index,kind,var_x,noise1,noise2,quantization_mse,d1,d2,case,"));
    assert_eq!(csv.lines().count(), 5);
    assert!(stdout(&o).contains("within_budget=true"));
}

#[test]
fn region_battery_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("reg");
    let cfg = r#"{
      "source": {"px_y1": [[0.375, 0.125], [0.125, 0.375]], "py2_given_y1": [[1.0], [1.0]],
                 "d1": [[0, 1], [1, 0]], "d2": [[0, 1], [1, 0]]},
      "points": [[0.2, 0.05]],
      "frontier_points": 3,
      "optimizer": {"restarts": 0, "descent_iterations": 60, "aux_cap": 2}
    }"#;
    let o = run(&["region", "--deterministic"], cfg, &out);
    assert!(o.status.success(), "{}", stdout(&o));
    let csv = fs::read_to_string(out.join("region_0.csv")).unwrap();
    assert!(csv.starts_with("r1,r_sum,bound_tag\n"));
    for tag in ["inner_hat", "inner", "outer_out_approx", "outer_cap"] {
        assert!(csv.lines().any(|l| l.ends_with(&format!(",{tag}"))), "{tag}");
    }
    let certs = fs::read_to_string(out.join("certificates.csv")).unwrap();
    assert_eq!(certs.lines().count(), 2);
}
