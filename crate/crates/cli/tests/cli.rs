use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ddq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddq"))
        .args(args)
        .env_remove("DDQ_THREADS")
        .output()
        .expect("spawn ddq")
}

fn ok(args: &[&str]) -> Output {
    let out = ddq(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn sim(dir: &Path, name: &str, seed: &str) -> (String, String) {
    let out = dir.join(format!("{name}.csv"));
    let trace = dir.join(format!("{name}_trace.csv"));
    ok(&[
        "sim-shots", "--config", "q1", "--experiment", "ramsey", "--delays", "0,4,8,12,16,20,24", "--shots", "200",
        "--seed", seed, "--out", p(&out), "--trace-out", p(&trace),
    ]);
    (p(&out).to_string(), p(&trace).to_string())
}

#[test]
fn sim_shots_writes_one_row_per_shot_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, ta) = sim(dir.path(), "a", "9");
    let (b, tb) = sim(dir.path(), "b", "9");
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1 + 200 * 7);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(&ta).unwrap(), fs::read(&tb).unwrap());
    assert!(Path::new(&format!("{a}.manifest.json")).exists());
}

#[test]
fn missing_input_is_exit_2_and_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = ddq(&["sim-shots", "--config", "no_such_device.json", "--experiment", "bitflip", "--seed", "1", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_device.json"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn existing_output_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = sim(dir.path(), "a", "1");
    let before = fs::read(&a).unwrap();
    let args = ["sim-shots", "--config", "q1", "--experiment", "ramsey", "--delays", "0", "--shots", "10", "--seed", "2", "--out", &a];
    let o = ddq(&args);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(fs::read(&a).unwrap(), before);
    let mut forced = vec!["--force"];
    forced.extend_from_slice(&args);
    ok(&forced);
    assert_ne!(fs::read(&a).unwrap(), before);
}

#[test]
fn analyze_without_bootstrap_omits_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let (_, trace) = sim(dir.path(), "a", "4");
    let out = dir.path().join("m.json");
    ok(&["analyze", "--trace", &trace, "--kind", "ramsey", "--bootstrap", "0", "--out", p(&out)]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let metrics = v["metrics"].as_array().unwrap();
    assert!(!metrics.is_empty());
    for m in metrics {
        assert!(m.get("lower").is_none() && m.get("upper").is_none(), "{m}");
    }
}

#[test]
fn analyze_bootstrap_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (_, trace) = sim(dir.path(), "a", "4");
    let out = dir.path().join("m.json");
    let o = ddq(&["analyze", "--trace", &trace, "--kind", "ramsey", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn corrupted_trace_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let (_, trace) = sim(dir.path(), "a", "4");
    let mut lines: Vec<String> = fs::read_to_string(&trace).unwrap().lines().map(String::from).collect();
    lines[3] = "12,oops,1,2,3,+L,0".into();
    fs::write(&trace, lines.join("\n")).unwrap();
    let out = dir.path().join("m.json");
    let o = ddq(&["analyze", "--trace", &trace, "--kind", "ramsey", "--bootstrap", "0", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("line 4") || msg.contains(":4"), "{msg}");
}

#[test]
fn allan_of_constant_series_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.csv");
    let mut body = String::from("timestamp_s,delta_f_hz\n");
    for i in 0..64 {
        body.push_str(&format!("{},75000\n", 100 * i));
    }
    fs::write(&input, body).unwrap();
    let out = dir.path().join("allan.csv");
    ok(&["allan", "--in", p(&input), "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let mut rows = text.lines().skip(1).peekable();
    assert!(rows.peek().is_some());
    for row in rows {
        let sigma: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(sigma, 0.0, "{row}");
    }
}

#[test]
fn help_lists_global_flags() {
    let o = ok(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in ["--threads", "--force", "--emit-plot-data", "sim-shots", "campaign", "summarize"] {
        assert!(text.contains(flag), "{flag}");
    }
    assert_eq!(ddq(&["--no-such-flag"]).status.code(), Some(2));
    assert_eq!(ddq(&["--threads", "0", "--help"]).status.code(), Some(0));
}

const SMALL_CAMPAIGN: &str = r#"{
  "seed": 11,
  "devices": [{"name": "q2", "preset": "q2"}],
  "repetitions": 3,
  "shots_per_point": 200,
  "bootstrap_resamples": 20
}"#;

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "command.json" {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn campaign_resume_matches_uninterrupted_and_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("campaign.json");
    fs::write(&cfg, SMALL_CAMPAIGN).unwrap();
    let whole = dir.path().join("whole");
    let split = dir.path().join("split");
    ok(&["campaign", "--config", p(&cfg), "--out", p(&whole)]);

    let o = ok(&["campaign", "--config", p(&cfg), "--out", p(&split), "--stop-after", "4"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("stopped after"));
    assert_eq!(ddq(&["campaign", "--config", p(&cfg), "--out", p(&split)]).status.code(), Some(3));
    ok(&["campaign", "--config", p(&cfg), "--out", p(&split), "--resume"]);
    assert_eq!(tree(&whole), tree(&split));

    let o = ok(&["summarize", "--in", p(&whole)]);
    let table = String::from_utf8_lossy(&o.stdout);
    for label in ["T_1^L", "T_2E^L", "T_2R^L"] {
        assert!(table.contains(label), "{table}");
    }
}
