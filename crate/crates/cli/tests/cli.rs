use std::path::Path;
use std::process::{Command, Output};

fn vhetnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vhetnet"))
        .args(args)
        .current_dir(dir)
        .env("VHETNET_THREADS", "2")
        .output()
        .unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

const SYNTH: &str = "\
[traffic]
source = \"synth\"
num_cells = 16
days = 1
[network]
source = \"synth\"
sbs_count = 5
";

#[test]
fn zero_traffic_puts_every_cell_to_sleep() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("synth.toml"), SYNTH).unwrap();
    let out = vhetnet(
        &["synth", "--config", "synth.toml", "--out", "data"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Same cells and slots, no traffic.
    let trace = dir.path().join("data/trace.csv");
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut zeroed = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            zeroed += line;
        } else {
            let f: Vec<&str> = line.split(',').collect();
            zeroed += &format!("{},{},0,0,0", f[0], f[1]);
        }
        zeroed.push('\n');
    }
    std::fs::write(&trace, zeroed).unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "[traffic]\nsource = \"cdr\"\npath = \"data/trace.csv\"\n[network]\nsource = \"file\"\npath = \"data/network.toml\"\n",
    )
    .unwrap();
    let out = vhetnet(
        &["switch", "--config", "exp.toml", "--out", "run"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let timeline = std::fs::read_to_string(dir.path().join("run/timeline.csv")).unwrap();
    let mut lines = timeline.lines();
    assert_eq!(
        lines.next(),
        Some("slot,delta_bits,grid_power_w,total_power_w,feasible,configs_evaluated")
    );
    let mut slots = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1], "00000", "{line}");
        assert_eq!(f[4], "true", "{line}");
        slots += 1;
    }
    assert_eq!(slots, 144);
}

#[test]
fn invalid_input_exits_with_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    std::fs::write(p.join("typo.toml"), "seed = 1\ngamm = 0.5\n").unwrap();
    let out = vhetnet(&["switch", "--config", "typo.toml"], p);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "parse");

    let out = vhetnet(&["switch", "--gamma", "1.5", "--out", "x"], p);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"], "config");
    assert_eq!(e["field"], "gamma");

    std::fs::write(
        p.join("missing.toml"),
        "[traffic]\nsource = \"cdr\"\npath = \"nowhere.csv\"\n",
    )
    .unwrap();
    let out = vhetnet(&["estimate", "--config", "missing.toml"], p);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["field"], "traffic.path");

    let out = vhetnet(&["estimate", "--trials", "0", "--out", "x"], p);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["field"], "trials");

    let out = vhetnet(&["switch", "--estimator", "crystal-ball"], p);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "usage");

    let out = vhetnet(&["report", "not-a-run", "--out", "rep"], p);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped not-a-run"));
}
