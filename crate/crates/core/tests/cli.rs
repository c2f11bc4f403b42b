use coop_track::scenario::replay::format_replay;
use coop_track::scenario::{build_paper_scenario, synthesize_frame};
use std::path::Path;
use std::process::{Command, Output};

fn coop_track(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coop-track")).args(args).output().expect("binary runs")
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn reference_run_writes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = coop_track(&["--mc", "2", "--seed", "4", "--particles", "40", "--out", out]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for mode in ["jlt", "slt"] {
        for r in 0..2 {
            let metrics = lines(&dir.path().join(format!("metrics_{mode}_{r}.csv")));
            assert_eq!(metrics[0], "t,mospa,detected");
            assert_eq!(metrics.len(), 51);
            let agents = lines(&dir.path().join(format!("agents_{mode}_{r}.csv")));
            assert_eq!(agents.len(), 1 + 50 * 4);
            assert!(dir.path().join(format!("tracks_{mode}_{r}.csv")).exists());
        }
    }
    let summary = lines(&dir.path().join("summary.csv"));
    assert_eq!(
        summary[0],
        "mode,t,true_count,mospa,detected,agent_1_error,agent_2_error,agent_3_error,agent_4_error"
    );
    assert_eq!(summary.len(), 1 + 2 * 50);
}

#[test]
fn both_modes_see_the_same_measurements() {
    // the separate-mode half of a joint invocation must reproduce a
    // separate-only invocation, which holds only if the frames are shared
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = coop_track(&["--mode", "both", "--seed", "9", "--particles", "40", "--out", out]);
    assert!(res.status.success());
    let both = lines(&dir.path().join("agents_slt_0.csv"));
    let dir2 = tempfile::tempdir().unwrap();
    let out2 = dir2.path().to_str().unwrap();
    assert!(coop_track(&["--mode", "slt", "--seed", "9", "--particles", "40", "--out", out2]).status.success());
    assert_eq!(both, lines(&dir2.path().join("agents_slt_0.csv")));
}

#[test]
fn replay_input_runs_without_truth() {
    let truth = build_paper_scenario(2);
    let frames: Vec<_> = (1..=truth.horizon).map(|t| synthesize_frame(&truth, t, 2)).collect();
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("frames.txt");
    std::fs::write(&replay, format_replay(&frames)).unwrap();
    let out = dir.path().join("out");
    let res = coop_track(&[
        "--replay",
        replay.to_str().unwrap(),
        "--mode",
        "jlt",
        "--particles",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let metrics = lines(&out.join("metrics_jlt_0.csv"));
    assert_eq!(metrics.len(), 51);
    assert!(metrics[1].starts_with("1,,"));
}

#[test]
fn bad_inputs_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "horizon = 50\n[model]\ndetection_prob = \n").unwrap();
    let out = dir.path().join("out");
    let res = coop_track(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 3"));

    let replay = dir.path().join("bad.txt");
    std::fs::write(&replay, "1 NAV 3 0 0\n1 NAV 3 zero 0\n").unwrap();
    let res = coop_track(&["--replay", replay.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));

    let res = coop_track(&["--mc", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let res = coop_track(&["--mode", "fast"]);
    assert_eq!(res.status.code(), Some(1));
}
