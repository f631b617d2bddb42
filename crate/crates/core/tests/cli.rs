use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCENE: &str = r#"
width = 240
height = 180
frames = 16
seed = 4

[canvas]
markers = 40

[[camera]]
kind = "translate"
dx = 1.5
dy = 0.5

[athlete]
start = [80.0, 150.0]
velocity = [1.5, -1.0]
box_size = [20.0, 40.0]
"#;

fn piste(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_piste"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {stdout}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {report}"))
        .parse()
        .unwrap()
}

#[test]
fn synth_reconstruct_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("pan.toml"), SCENE).unwrap();
    ok(&piste(&["synth", "--scene", "pan.toml", "--out", "s"], d));
    assert_eq!(fs::read_dir(d.join("s/frames")).unwrap().count(), 16);
    assert!(d.join("s/truth.json").exists());

    let track = fs::read_to_string(d.join("s/track.csv")).unwrap();
    let row0 = track.lines().nth(1).unwrap();
    let bbox = row0.split_once(',').unwrap().1.to_string();

    let run = |export: &str| {
        ok(&piste(
            &[
                "reconstruct", "--frames", "s/frames", "--init-bbox", &bbox, "--seed", "7", "--out", "o",
                "--export", export,
            ],
            d,
        ))
    };
    let summary = run("o/a.jsonl");
    assert!(summary.contains("frames=16"), "{summary}");
    run("o/b.jsonl");
    assert_eq!(fs::read(d.join("o/a.jsonl")).unwrap(), fs::read(d.join("o/b.jsonl")).unwrap());
    assert_eq!(fs::read_dir(d.join("o")).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png")
    }).count(), 16);

    let report = ok(&piste(&["evaluate", "--export", "o/a.jsonl", "--truth", "s/truth.json"], d));
    assert_eq!(value(&report, "points"), 16.0);
    assert!(value(&report, "mean_px") < 2.0, "{report}");

    ok(&piste(
        &[
            "reconstruct", "--frames", "s/frames", "--track-file", "s/track.csv", "--snow-filter", "on",
            "--export", "o/c.jsonl",
        ],
        d,
    ));
    fs::write(d.join("speed.csv"), "frame,speed_mps\n0,10\n1,10.5\n2,11\n").unwrap();
    let cmp = ok(&piste(
        &[
            "compare", "--frames", "s/frames", "--export", "o/a.jsonl", "--other-frames", "s/frames",
            "--other-export", "o/c.jsonl", "--out", "cmp", "--speed", "speed.csv",
        ],
        d,
    ));
    assert!(cmp.contains("overlaid=16"), "{cmp}");
}

#[test]
fn missing_initial_box_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = piste(&["reconstruct", "--frames", "."], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--init-bbox") && err.contains("--track-file"), "{err}");
}

#[test]
fn failures_print_one_categorised_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("empty")).unwrap();
    let out = piste(&["reconstruct", "--frames", "empty", "--init-bbox", "1,2,3,4"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("piste: error: empty_directory: "), "{err}");

    fs::write(dir.path().join("bad.toml"), "width = \"wide\"").unwrap();
    let out = piste(&["synth", "--scene", "bad.toml", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(7));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("piste: error: parse_error: "));
}

#[test]
fn malformed_box_is_rejected_by_the_parser() {
    let dir = tempfile::tempdir().unwrap();
    let out = piste(&["reconstruct", "--frames", ".", "--init-bbox", "1,2,3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
