use std::path::Path;
use std::process::{Command, Output};

fn steploc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steploc"))
        .args(args)
        .output()
        .expect("run steploc")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn synth(dir: &Path) -> String {
    let out = path(dir, "corpus");
    let o = steploc(&["synth", "--seed", "4", "--n-videos", "8", "--out-dir", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn tc_nms_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let c = synth(dir.path());
    let tc = path(dir.path(), "tc.json");
    let det = path(dir.path(), "det.json");
    let csv = path(dir.path(), "map.csv");
    let runs: [Vec<String>; 3] = [
        vec![
            "tc".into(),
            "--proposals".into(),
            format!("{c}/proposals.json"),
            "--lexicon".into(),
            format!("{c}/lexicon.json"),
            "--out".into(),
            tc.clone(),
        ],
        vec![
            "nms".into(),
            "--proposals".into(),
            tc.clone(),
            "--out".into(),
            det.clone(),
        ],
        vec![
            "eval-map".into(),
            "--detections".into(),
            det,
            "--annotations".into(),
            format!("{c}/test_annotations.json"),
            "--out".into(),
            csv.clone(),
        ],
    ];
    for args in &runs {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = steploc(&args);
        assert!(o.status.success(), "{}: {}", args[0], stderr(&o));
    }
    let report = std::fs::read_to_string(&csv).unwrap();
    assert!(report.starts_with("metric,alpha,class_or_task,value\n"));
    let map: f64 = report
        .lines()
        .find(|l| l.starts_with("mAP,0.1,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.0..=100.0).contains(&map) && map > 0.0);
    let tasks = std::fs::read_to_string(dir.path().join("tc.tasks.json")).unwrap();
    assert!(tasks.contains("\"task\""));
}

#[test]
fn lambda_sum_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = steploc(&[
        "od",
        "--proposals",
        "p.json",
        "--transitions",
        "t.json",
        "--lambda1",
        "0.7",
        "--lambda2",
        "0.2",
        "--out",
        &path(dir.path(), "o.json"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda1+lambda2 must equal 1"));
}

#[test]
fn bad_flag_values_exit_2() {
    for args in [
        vec![
            "nms",
            "--proposals",
            "p.json",
            "--nms-threshold",
            "1.5",
            "--out",
            "o.json",
        ],
        vec![
            "tc",
            "--proposals",
            "p.json",
            "--lexicon",
            "l.json",
            "--gamma",
            "2",
            "--out",
            "o.json",
        ],
        vec![
            "od",
            "--proposals",
            "p.json",
            "--transitions",
            "t.json",
            "--slots",
            "1",
            "--out",
            "o.json",
        ],
        vec![
            "od",
            "--proposals",
            "p.json",
            "--transitions",
            "t.json",
            "--fusion",
            "median",
            "--out",
            "o.json",
        ],
        vec![
            "od",
            "--proposals",
            "p.json",
            "--transitions",
            "t.json",
            "--theta-gap",
            "3",
            "--theta-len",
            "4",
            "--out",
            "o.json",
        ],
        vec![
            "eval-map",
            "--detections",
            "d.json",
            "--annotations",
            "a.json",
            "--alphas",
            "0.1,1.5",
        ],
        vec!["synth", "--drop-prob", "1", "--out-dir", "x"],
        vec!["frobnicate"],
    ] {
        let o = steploc(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).trim().is_empty());
    }
}

#[test]
fn missing_and_malformed_files_exit_1_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = path(dir.path(), "missing.json");
    let o = steploc(&[
        "nms",
        "--proposals",
        &missing,
        "--out",
        &path(dir.path(), "o.json"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(
        msg.contains("missing.json") && msg.trim().lines().count() == 1,
        "{msg}"
    );

    let bad = path(dir.path(), "bad.json");
    std::fs::write(&bad, r#"{"videos": [{"video_id": "v", "duration_s": 10, "proposals": [{"start_s": 5, "end_s": 2, "scores": [0.5]}]}]}"#).unwrap();
    let o = steploc(&[
        "nms",
        "--proposals",
        &bad,
        "--out",
        &path(dir.path(), "o.json"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.json"), "{}", stderr(&o));
}

#[test]
fn synth_config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "synth.cfg");
    std::fs::write(&cfg, "seed = 9\nn_tasks = 2\nn_videos = 3\n").unwrap();
    let a = path(dir.path(), "a");
    let b = path(dir.path(), "b");
    assert!(steploc(&["synth", "--config", &cfg, "--out-dir", &a])
        .status
        .success());
    assert!(
        steploc(&["synth", "--config", &cfg, "--n-tasks", "3", "--out-dir", &b])
            .status
            .success()
    );
    let lex_a = std::fs::read_to_string(Path::new(&a).join("lexicon.json")).unwrap();
    let lex_b = std::fs::read_to_string(Path::new(&b).join("lexicon.json")).unwrap();
    assert_ne!(lex_a, lex_b);
    let test_a = std::fs::read_to_string(Path::new(&a).join("test_annotations.json")).unwrap();
    assert_eq!(test_a.matches("\"video_id\"").count(), 3);

    std::fs::write(&cfg, "colour = blue\n").unwrap();
    let o = steploc(&["synth", "--config", &cfg, "--out-dir", &a]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("synth.cfg"));
}

#[test]
fn stats_and_frames_report() {
    let dir = tempfile::tempdir().unwrap();
    let c = synth(dir.path());
    let o = steploc(&[
        "stats",
        "--annotations",
        &format!("{c}/test_annotations.json"),
        "--lexicon",
        &format!("{c}/lexicon.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("mean"));

    let det = path(dir.path(), "det.json");
    assert!(steploc(&[
        "nms",
        "--proposals",
        &format!("{c}/proposals.json"),
        "--out",
        &det
    ])
    .status
    .success());
    let o = steploc(&[
        "eval-frames",
        "--detections",
        &det,
        "--annotations",
        &format!("{c}/test_annotations.json"),
        "--fps",
        "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("frame accuracy"));
}
