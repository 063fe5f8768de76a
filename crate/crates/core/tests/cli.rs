use std::path::Path;
use std::process::{Command, Output};

use redsense::experiment::read_csv_records;

fn redsense(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redsense"))
        .args(args)
        .env("REDSENSE_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn entropy_sweep_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "entropy-sweep", "--n", "4..8", "--sigma0", "0,0.10", "--trials", "20", "--seed", "7",
    ];
    let o = redsense(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv_path = dir.path().join("entropy-sweep.csv");
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let head: Vec<&str> = text.lines().take(3).collect();
    assert_eq!(head[0], "# schema_version: 1");
    assert_eq!(head[1], "# seed: 7");
    assert!(head[2].starts_with("# spec: {\"command\":\"entropy-sweep\""));

    let rows = read_csv_records(&csv_path).unwrap();
    assert_eq!(rows.len(), 5 * 2 * 20);
    for r in &rows {
        let (bits, sigma, h): (f64, f64, f64) =
            (r[0].parse().unwrap(), r[1].parse().unwrap(), r[4].parse().unwrap());
        if sigma == 0.0 {
            assert_eq!(h, bits);
        }
        assert!(h <= bits + 1e-9);
    }

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("entropy-sweep.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["seed"], 7);
    assert_eq!(json["result"]["cells"].as_array().unwrap().len(), 10);

    // Same spec, same bytes.
    let first = std::fs::read(&csv_path).unwrap();
    assert_eq!(code(&redsense(&args, dir.path())), 0);
    assert_eq!(std::fs::read(&csv_path).unwrap(), first);
}

#[test]
fn stored_spec_reproduces_command_line_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "adc-measure", "--n", "6", "--sigma0", "0.05", "--trials", "4", "--seed", "3", "--v-co", "0.4",
    ];
    assert_eq!(code(&redsense(&args, a.path())), 0);

    let mut print = args.to_vec();
    print.push("--print-spec");
    let o = redsense(&print, a.path());
    assert_eq!(code(&o), 0);
    let spec_path = b.path().join("spec.json");
    std::fs::write(&spec_path, &o.stdout).unwrap();
    let o = redsense(&["run", "--spec", spec_path.to_str().unwrap()], b.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    for f in ["adc-measure.csv", "adc-measure.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn assembly_hist_totals() {
    let dir = tempfile::tempdir().unwrap();
    let o = redsense(&["assembly-hist", "--identity", "8x7s1", "--format", "csv"], dir.path());
    assert_eq!(code(&o), 0);
    let rows = read_csv_records(&dir.path().join("assembly-hist.csv")).unwrap();
    assert_eq!(rows.len(), 256);
    let total: u64 = rows.iter().map(|r| r[1].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 1 << 15);
    assert!(!dir.path().join("assembly-hist.json").exists());
}

#[test]
fn calibrate_demo_reports_every_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = redsense(&["calibrate-demo", "--n", "10", "--sigma0", "0.03", "--seed", "1"], dir.path());
    assert_eq!(code(&o), 0);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("calibrate-demo.json")).unwrap()).unwrap();
    let modes: Vec<&str> = json["result"].as_array().unwrap().iter().map(|r| r["mode"].as_str().unwrap()).collect();
    assert_eq!(modes, ["binary", "heuristic-calibrated", "oracle-optimal"]);
    let rows = read_csv_records(&dir.path().join("calibrate-demo.csv")).unwrap();
    assert_eq!(rows.len(), 1023);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("calibrate-demo N=10"));
}

#[test]
fn exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = redsense(&["plot-everything"], dir.path());
    let identity = redsense(&["assembly-hist", "--identity", "8x9s1"], dir.path());
    let capacity = redsense(&["error-dist", "--n", "30", "--sigma0", "0.1"], dir.path());
    let oracle_capacity = redsense(
        &["adc-measure", "--n", "16", "--sigma0", "0.1", "--modes", "oracle", "--trials", "1"],
        dir.path(),
    );
    assert_eq!(code(&unknown), 64);
    assert_eq!(code(&identity), 2);
    assert_eq!(code(&capacity), 3);
    // A capacity problem in one sweep cell is reported, not fatal.
    assert_eq!(code(&oracle_capacity), 0);
    assert!(String::from_utf8_lossy(&oracle_capacity.stdout).contains("1 cells skipped"));
    for o in [&unknown, &identity, &capacity] {
        assert!(!o.stderr.is_empty());
    }

    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, r#"{"command":"plot","seed":1}"#).unwrap();
    let o = redsense(&["run", "--spec", spec.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 64);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown command 'plot'"));
}

#[test]
fn verify_negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ok = redsense(&["verify", "--criteria", "1,6,11"], dir.path());
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    assert_eq!(String::from_utf8_lossy(&ok.stdout).matches("[PASS]").count(), 3);
    let tampered = redsense(&["verify", "--criteria", "11", "--tamper-seed"], dir.path());
    assert_eq!(code(&tampered), 4);
    assert!(String::from_utf8_lossy(&tampered.stdout).contains("[FAIL] criterion 11"));
}
