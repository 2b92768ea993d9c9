// Copyright (c) 2026 The fluidcc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fluidcc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fluidcc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SCENARIO: &str = r#"
[solver]
duration_s = 0.3
window_s = 0.1

[bottleneck]
capacity_mbps = 100
delay_ms = 10
buffer_bdp = 1

[[agents]]
cca = "bbr1"
count = 2
access_delay_ms = [5, 10]
"#;

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn simulate_writes_trace_metrics_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.toml", SCENARIO);
    let out = dir.path().join("out");
    let o = fluidcc(&[
        "simulate",
        "--scenario",
        &sc,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,"));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    for key in [
        "jain_fairness",
        "loss_rate",
        "mean_queue_share",
        "utilization",
        "jitter",
    ] {
        assert!(m[key].is_number(), "{key}");
    }
    let echo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("scenario-echo.json")).unwrap()).unwrap();
    assert!(echo["scenario_hash"].is_string());
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.toml", SCENARIO);
    let mut traces = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = fluidcc(&[
            "simulate",
            "--scenario",
            &sc,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        traces.push(fs::read(out.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn malformed_key_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SCENARIO.replace("buffer_bdp = 1", "bufer_bdp = 1");
    let sc = write(dir.path(), "s.toml", &bad);
    let o = fluidcc(&[
        "simulate",
        "--scenario",
        &sc,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bufer_bdp"), "{err}");
    assert!(err.contains("line 9"), "{err}");
}

#[test]
fn oversized_step_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.toml", SCENARIO);
    let o = fluidcc(&[
        "simulate",
        "--scenario",
        &sc,
        "--out",
        dir.path().to_str().unwrap(),
        "--step",
        "0.01",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

const GRID: &str = r#"
[base]
duration_s = 0.2
window_s = 0.1
access_delay_ms = [5, 10]

[axes]
buffer_bdp = [0.5, 1, 2, 4, 7]
delay_ms = [10]
senders = [2]
mix = ["bbr1"]
"#;

#[test]
fn sweep_writes_one_row_per_point_in_grid_order() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write(dir.path(), "g.toml", GRID);
    let out = dir.path().join("out");
    let o = fluidcc(&[
        "sweep",
        "--grid",
        &grid,
        "--out",
        out.to_str().unwrap(),
        "--parallel",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(
        lines[0],
        "buffer_bdp,delay_ms,senders,mix,discipline,status,jain_fairness,loss_rate,mean_queue_share,utilization,jitter"
    );
    let buffers: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(buffers, [0.5, 1.0, 2.0, 4.0, 7.0]);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(5) == Some("ok")));
}

#[test]
fn sweep_output_does_not_depend_on_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write(
        dir.path(),
        "g.toml",
        &GRID.replace("mix = [\"bbr1\"]", "mix = [\"bbr1\", \"bbr1+reno\"]"),
    );
    let mut outputs = Vec::new();
    for p in ["1", "8"] {
        let out = dir.path().join(p);
        let o = fluidcc(&[
            "sweep",
            "--grid",
            &grid,
            "--out",
            out.to_str().unwrap(),
            "--parallel",
            p,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(out.join("summary.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn empty_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write(dir.path(), "g.toml", "[axes]\nbuffer_bdp = []\n");
    let o = fluidcc(&[
        "sweep",
        "--grid",
        &grid,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("buffer_bdp"));
}

fn analyze(args: &[&str]) -> serde_json::Value {
    let mut full = vec!["analyze"];
    full.extend_from_slice(args);
    let o = fluidcc(&full);
    assert!(o.status.success(), "{}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn analyze_bbr1_deep_single_flow_is_stable() {
    let r = analyze(&["--cca", "bbr1-deep", "-n", "1", "-c", "1", "-d", "1"]);
    assert!(
        (r["lambda_max"].as_f64().unwrap() + 0.5).abs() < 1e-9,
        "{r}"
    );
    assert_eq!(r["stable"], true);
}

#[test]
fn analyze_bbr1_shallow_rate() {
    let r = analyze(&["--cca", "bbr1-shallow", "-n", "10", "-c", "100"]);
    for x in r["x_btl"].as_array().unwrap() {
        assert!((x.as_f64().unwrap() - 500.0 / 41.0).abs() < 1e-9);
    }
    assert_eq!(r["stable"], true);
}

#[test]
fn analyze_bbr2_queue() {
    let r = analyze(&["--cca", "bbr2", "-n", "10", "-c", "1", "-d", "1"]);
    assert!((r["q"].as_f64().unwrap() - 9.0 / 41.0).abs() < 1e-9, "{r}");
}

#[test]
fn analyze_rejects_bad_input() {
    let o = fluidcc(&["analyze", "--cca", "bbr1-deep", "-n", "0", "-c", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fluidcc(&["analyze", "--cca", "vegas", "-n", "2", "-c", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_bbr2_single_flow() {
    let r = analyze(&["--cca", "bbr2", "-n", "1", "-c", "1", "-d", "1"]);
    assert!(r["q"].as_f64().unwrap().abs() < 1e-12, "{r}");
    assert!(
        (r["lambda_max"].as_f64().unwrap() + 1.0).abs() < 1e-9,
        "{r}"
    );
}

#[test]
fn shipped_files_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for name in ["bbr1-vs-reno.toml", "bbr2-homogeneous.toml"] {
        let s = fluidcc::config::load_scenario(&dir.join(name));
        assert!(s.is_ok(), "{name}: {:?}", s.err());
    }
}
