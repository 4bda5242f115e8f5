//! The `airway` binary, the bundled scenario and the example programs.

use airway::export::{corridor_file, read_records, CorridorRecord};
use airway::scenario::{load_scenario, parse_scenario};
use std::path::{Path, PathBuf};
use std::process::Command;

fn demo_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/demo.toml")
}

fn airway() -> Command {
    Command::new(env!("CARGO_BIN_EXE_airway"))
}

const SMALL: &str = r#"
schema_version = 1

[region]
x_min = 0.0
x_max = 200.0
y_min = 0.0
y_max = 200.0

[grid]
dx = 5.0
dy = 5.0

[layers]
altitudes = [20.0, 25.0, 30.0]
streamlines_odd = 4
streamlines_even = 4

[planning]
spacing = 10.0
delta0 = 7.5
j0 = 15.0
gamma = 1.0
epsilon = 1e-6
horizon = 60

[[obstacles]]
shape = "cylinder"
kind = "building"
center = [100.0, 100.0]
radius = 15.0
base = 0.0
top = 40.0

[[events]]
type = "new_request"
t = 0
uas = 1
entry = [0.0, ENTRY_Y, 20.0]
goal = [GOAL_X, GOAL_Y, 20.0]
"#;

/// Writes the small scenario with UAS 1 entering at the start of lane 0 on layer 1
/// and heading for the end of lane `goal_lane`, or for its start when `backwards`.
fn small_scenario(dir: &Path, goal_lane: usize, backwards: bool) -> PathBuf {
    let probe = dir.join("probe");
    let template = dir.join("template.toml");
    std::fs::write(
        &template,
        SMALL
            .replace("ENTRY_Y", "0.0")
            .replace("GOAL_X", "0.0")
            .replace("GOAL_Y", "0.0"),
    )
    .unwrap();
    let status = airway()
        .args(["--log-level", "error", "--out-dir"])
        .arg(&probe)
        .arg("gen-corridors")
        .arg(&template)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let rows: Vec<CorridorRecord> = read_records(&probe.join(corridor_file(1))).unwrap();
    let lane = |s: usize| rows.iter().filter(move |r| r.streamline == s);
    let entry = lane(0).next().unwrap();
    let goal = if backwards {
        lane(goal_lane).next()
    } else {
        lane(goal_lane).next_back()
    }
    .unwrap();
    let path = dir.join("small.toml");
    let text = SMALL
        .replace("ENTRY_Y", &format!("{:?}", entry.y))
        .replace("GOAL_X", &format!("{:?}", goal.x))
        .replace("GOAL_Y", &format!("{:?}", goal.y));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn demo_scenario_round_trips() {
    let doc = load_scenario(&demo_path()).unwrap();
    assert_eq!(doc.layers.altitudes.len(), 8);
    assert_eq!(doc.request_count(), 4);
    assert_eq!(parse_scenario(&doc.to_toml()).unwrap(), doc);
}

#[test]
fn validate_reports_exit_codes() {
    let ok = airway().arg("validate").arg(demo_path()).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("8 layers"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(small_scenario(dir.path(), 0, false)).unwrap();
    std::fs::write(&bad, text.replace("x_max = 200.0", "x_max = -1.0")).unwrap();
    let out = airway().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_then_plot_from_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path(), 0, false);
    let run = dir.path().join("run");
    let status = airway()
        .args(["--log-level", "warn", "--out-dir"])
        .arg(&run)
        .arg("simulate")
        .arg(&scenario)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for f in [
        "summary.txt",
        "allocation_log.csv",
        "paths/uas_1.csv",
        "corridors/layer_1.csv",
        "fields/layer_3.txt",
    ] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let out = airway()
        .arg("plot")
        .arg(&run)
        .args(["--which", "corridors,paths"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(run.join("plots/corridors.svg").is_file());
    assert!(run.join("plots/paths.svg").is_file());
}

#[test]
fn unreachable_request_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // every lane runs one way, so the start of another lane cannot be reached
    let scenario = small_scenario(dir.path(), 1, true);
    let status = airway()
        .args(["--log-level", "error", "--out-dir"])
        .arg(dir.path().join("run"))
        .arg("plan")
        .arg(&scenario)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

/// Example binaries sit in `examples/` next to the test executable's directory.
fn example(name: &str) -> Option<Command> {
    let exe = std::env::current_exe().unwrap();
    let dir = exe.parent().unwrap().parent().unwrap().join("examples");
    let bin = dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
    bin.is_file().then(|| Command::new(bin))
}

#[test]
fn examples_run_to_completion() {
    if example("demo_pipeline").is_none() {
        eprintln!("examples not built; run the whole test suite to include them");
        return;
    }
    let out_dir = tempfile::tempdir().unwrap();
    for name in [
        "polygon_streamlines",
        "layered_corridors",
        "single_uas_mdp",
        "fcfs_queue",
        "failure_replan",
    ] {
        let out = example(name)
            .unwrap()
            .output()
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(
            out.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = example("demo_pipeline")
        .unwrap()
        .arg(out_dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.path().join("paths/uas_4.csv").is_file());
}
