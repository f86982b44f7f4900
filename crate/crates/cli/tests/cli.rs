use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hallunav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hallunav")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn small_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&hallunav(d, &["explore", "--seed", "3", "--duration", "4", "--out", "raw.jsonl"]));
    let raw = fs::read_to_string(d.join("raw.jsonl")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 100, "header plus 4 s at 25 Hz");

    ok(&hallunav(d, &["hallucinate", "--raw", "raw.jsonl", "--seed", "1", "--out", "train.jsonl"]));
    ok(&hallunav(d, &["hallucinate", "--raw", "raw.jsonl", "--mode", "most-constrained", "--out", "mc.jsonl"]));
    let minimal = fs::read_to_string(d.join("train.jsonl")).unwrap().lines().count() - 1;
    let constrained = fs::read_to_string(d.join("mc.jsonl")).unwrap().lines().count() - 1;
    assert_eq!(minimal, 12 * constrained);

    ok(&hallunav(d, &["train", "--data", "train.jsonl", "--epochs", "1", "--out", "hlsd.bin"]));
    ok(&hallunav(d, &["train", "--data", "mc.jsonl", "--epochs", "1", "--no-vel-input", "--out", "lfh.bin"]));
    ok(&hallunav(d, &["genworlds", "--count", "2", "--seed", "5", "--out", "worlds"]));
    assert!(d.join("worlds/world_000.json").exists() && d.join("worlds/world_001.json").exists());

    let nav = hallunav(
        d,
        &["navigate", "--world", "worlds/world_000.json", "--planner", "dwa", "--timeout", "5", "--trace", "t.jsonl"],
    );
    ok(&nav);
    assert!(String::from_utf8_lossy(&nav.stdout).starts_with("success="));
    let trace = fs::read_to_string(d.join("t.jsonl")).unwrap();
    assert!(trace.lines().count() > 0 && trace.lines().all(|l| l.contains("\"phase\"")));

    fs::write(
        d.join("arms.json"),
        r#"{"arms":[{"name":"DWA","planner":"dwa"},
                    {"name":"HLSD","planner":"hlsd","weights":"hlsd.bin"},
                    {"name":"LfH","planner":"lfh","weights":"lfh.bin","speed_cap":0.6}]}"#,
    )
    .unwrap();
    ok(&hallunav(d, &["bench", "--worlds", "worlds", "--arms", "arms.json", "--out", "rep", "--timeout", "3", "--workers", "2"]));
    let csv = fs::read_to_string(d.join("rep/results.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("arm,world,success,time,collisions,recoveries,path_length"));
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    let table = fs::read_to_string(d.join("rep/table.txt")).unwrap();
    for arm in ["DWA", "HLSD", "LfH"] {
        assert!(table.contains(arm), "{table}");
    }
}

#[test]
fn learned_planner_without_weights_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&hallunav(d, &["genworlds", "--count", "1", "--out", "w"]));
    let out = hallunav(d, &["navigate", "--world", "w/world_000.json", "--planner", "hlsd"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn blocked_world_exits_with_no_path() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let world = r#"{"bounds":{"xmin":0,"ymin":-1,"xmax":4,"ymax":1},
        "obstacles":[{"type":"disc","cx":2,"cy":-0.6,"r":0.35},{"type":"disc","cx":2,"cy":0,"r":0.35},
                     {"type":"disc","cx":2,"cy":0.6,"r":0.35}],
        "start":{"x":0.5,"y":0,"psi":0},"goal":{"x":3.5,"y":0,"psi":0}}"#;
    fs::write(d.join("blocked.json"), world).unwrap();
    let out = hallunav(d, &["navigate", "--world", "blocked.json", "--planner", "dwa"]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unplaceable_worlds_exit_as_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let out = hallunav(dir.path(), &["genworlds", "--count", "1", "--density", "50", "--out", "w"]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hallunav(dir.path(), &["hallucinate", "--raw", "nope.jsonl", "--out", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}
