use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spermtrack"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Relative path -> bytes for every file below `dir`.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn scene(tmp: &TempDir, name: &str, seed: &str) -> PathBuf {
    ok(&["synth", "--seed", seed, "--count", "8", "--out", name], tmp.path());
    tmp.path().join(name)
}

#[test]
fn synth_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let a = scene(&tmp, "a", "7");
    let b = scene(&tmp, "b", "7");
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.iter().any(|(p, _)| p == Path::new("scenario.json")));
    assert_eq!(ta.iter().filter(|(p, _)| p.starts_with("frames")).count(), 25);
    assert_eq!(ta, tb);
    // Re-running into the same directory rewrites identical bytes.
    scene(&tmp, "a", "7");
    assert_eq!(tree(&a), ta);
    // The echoed scenario renders the same files again.
    ok(&["synth", "--scenario", "a/scenario.json", "--out", "d"], tmp.path());
    assert_eq!(tree(&tmp.path().join("d")), ta);
    let c = scene(&tmp, "c", "8");
    assert_ne!(tree(&c), ta);
}

#[test]
fn pipeline_equals_composed_subcommands() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    scene(&tmp, "s", "3");
    ok(&["pipeline", "--frames", "s/frames", "--out", "p"], dir);

    ok(&["detect", "--frames", "s/frames", "--out", "detections.csv"], dir);
    ok(&["track", "--frames", "s/frames", "--detections", "detections.csv", "--out", "tracks_raw.csv"], dir);
    ok(
        &["join", "--tracks", "tracks_raw.csv", "--frames", "s/frames", "--out", "tracks.csv", "--decisions", "join_decisions.json"],
        dir,
    );
    ok(
        &["motility", "--tracks", "tracks.csv", "--out", "motility.csv", "--summary", "motility_summary.json"],
        dir,
    );
    for f in ["detections.csv", "tracks_raw.csv", "tracks.csv", "join_decisions.json", "motility.csv", "motility_summary.json"] {
        assert_eq!(fs::read(dir.join("p").join(f)).unwrap(), fs::read(dir.join(f)).unwrap(), "{f}");
    }

    let report: Value = serde_json::from_str(&ok(
        &["eval-track", "--tracks", "p/tracks.csv", "--gt", "s/gt_tracks.csv", "--json"],
        dir,
    ))
    .unwrap();
    let t = &report["tracking"];
    for k in ["precision", "recall", "f1", "accuracy"] {
        let v = t[k].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{k} = {v}");
    }
    assert_eq!(t["f1"].as_f64(), Some(1.0));
    assert!(report.get("detection").is_none());
}

#[test]
fn eval_det_reports_fractions() {
    let tmp = TempDir::new().unwrap();
    scene(&tmp, "s", "4");
    let out = ok(
        &["eval-det", "--detections", "s/detections.csv", "--gt", "s/gt_detections.csv", "--json"],
        tmp.path(),
    );
    let v: Value = serde_json::from_str(&out).unwrap();
    let d = &v["detection"];
    assert_eq!(d["fp"], 0);
    assert_eq!(d["fn"], 0);
    assert_eq!(d["ap"].as_f64(), Some(1.0));
    let text = ok(&["eval-det", "--detections", "s/detections.csv", "--gt", "s/gt_detections.csv"], tmp.path());
    assert!(text.contains("100.00%"));
}

#[test]
fn missing_input_exits_2() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["track", "--detections", "missing.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing.csv: not found"), "{}", stderr(&out));

    let out = run(&["track", "--bogus"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["motility", "--out", "m.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--tracks"));
}

#[test]
fn bad_data_exits_1_with_line() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("d.csv"), "frame,x_min,y_min,x_max,y_max,score\n0,1,1,5,5,0.9\n3,100.0,50.0,110.0,62.0,1.7\n").unwrap();
    let out = run(&["eval-det", "--detections", "d.csv", "--gt", "d.csv"], dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("d.csv:3"), "{}", stderr(&out));
}

#[test]
fn config_file_layering() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    scene(&tmp, "s", "5");
    fs::write(dir.join("bad.cfg"), "fps = 50\nnot_a_key = 3\n").unwrap();
    let out = run(&["eval-track", "--config", "bad.cfg", "--tracks", "s/gt_tracks.csv", "--gt", "s/gt_tracks.csv"], dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.cfg:2: unknown key 'not_a_key'"), "{}", stderr(&out));

    // A file value that fails validation is rescued by a flag.
    fs::write(dir.join("c.cfg"), "# tracks and gates\ntracks = s/gt_tracks.csv\ngt = s/gt_tracks.csv\neval_mean_dist_px = -1\n").unwrap();
    let out = run(&["eval-track", "--config", "c.cfg"], dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("eval_mean_dist_px"));
    let v: Value = serde_json::from_str(&ok(&["eval-track", "--config", "c.cfg", "--eval-mean-dist-px", "15", "--json"], dir)).unwrap();
    assert_eq!(v["tracking"]["f1"].as_f64(), Some(1.0));

    let out = run(&["eval-track", "--config", "c.cfg", "--eval-mean-dist-px", "fifteen"], dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--eval-mean-dist-px"));
}

#[test]
fn motility_skips_short_tracks() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("t.csv"),
        "track_id,frame,x,y,source\n0,0,10,10,detected\n0,1,16,10,detected\n0,2,22,10,detected\n1,0,50,50,detected\n",
    )
    .unwrap();
    let out = run(&["motility", "--tracks", "t.csv", "--out", "m.csv", "--json"], dir);
    assert!(out.status.success());
    assert!(stderr(&out).contains("track 1 has 1 point(s)"), "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["tracks"], 1);
    assert_eq!(v["categories"]["rapid"]["fraction"].as_f64(), Some(1.0));
    let csv = fs::read_to_string(dir.join("m.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let vsl: f64 = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((vsl - 249.9).abs() < 1e-9);
}

#[test]
fn pipeline_runs_several_videos() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    scene(&tmp, "v1", "11");
    scene(&tmp, "v2", "12");
    let v: Value = serde_json::from_str(&ok(
        &["pipeline", "--frames", "v1/frames", "v2/frames", "--out", "runs", "--jobs", "2", "--tracker", "hold", "--json"],
        dir,
    ))
    .unwrap();
    assert_eq!(v["videos"].as_array().unwrap().len(), 2);
    assert!(dir.join("runs/frames/tracks.csv").exists());
    assert!(dir.join("runs/frames_2/motility.csv").exists());
}

#[test]
fn stack_exports_tiffs() {
    let tmp = TempDir::new().unwrap();
    scene(&tmp, "s", "2");
    let v: Value = serde_json::from_str(&ok(
        &["stack", "--frames", "s/frames", "--out", "st", "--stack-channels", "5", "--json"],
        tmp.path(),
    ))
    .unwrap();
    assert_eq!(v["files"].as_array().unwrap().len(), 25);
    assert!(tmp.path().join("st/stack_0.tiff").exists());
    let out = run(&["stack", "--frames", "s/frames", "--out", "st", "--stack-channels", "4"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
