//! End-to-end checks of the `hsvt` binary.

use std::path::Path;
use std::process::{Command, Output};

use hsvt::esim::encode_pgm;
use hsvt::events::read_events;

fn hsvt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsvt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("HSVT_DATA_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hsvt(args);
    assert!(out.status.success(), "hsvt {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const LABELS: &str = "frame,class_id,x1,y1,x2,y2,track_id,class_confidence
0,0,10,12,30,40,1,1
3,1,5,5,25,20,2,0.75
3,0,40,8,60,28,3,1
";

#[test]
fn malformed_label_line_exits_1_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let txt = dir.path().join("bad.txt");
    std::fs::write(&txt, "0,0,1,1,5,5\n1,0,1,oops,5,5\n").unwrap();
    let out = hsvt(&["convert-labels", "--input", s(&txt), "--output", s(&dir.path().join("o.bin")), "--fps", "20"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.txt:2"), "{err}");
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = hsvt(&[
        "simulate-events",
        "--frames",
        s(&dir.path().join("no_such_dir")),
        "--output",
        s(&dir.path().join("e.bin")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(hsvt(&["train"]).status.code(), Some(1));
    assert_eq!(hsvt(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(hsvt(&["--help"]).status.code(), Some(0));
}

#[test]
fn constant_frames_give_an_empty_stream() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    std::fs::create_dir(&frames).unwrap();
    for k in 0..4 {
        std::fs::write(frames.join(format!("{k:03}.pgm")), encode_pgm(8, 6, &[90; 48])).unwrap();
    }
    let out = dir.path().join("e.bin");
    ok(&["simulate-events", "--frames", s(&frames), "--output", s(&out)]);
    let (stream, _) = read_events(&out, hsvt::events::EventFormat::Bin, None).unwrap();
    assert!(stream.is_empty());
    assert_eq!((stream.width(), stream.height()), (8, 6));
}

#[test]
fn brightening_frames_emit_on_events() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    std::fs::create_dir(&frames).unwrap();
    for (k, v) in [40u8, 80, 160].into_iter().enumerate() {
        std::fs::write(frames.join(format!("{k:03}.pgm")), encode_pgm(2, 2, &[v; 4])).unwrap();
    }
    let csv = dir.path().join("e.csv");
    ok(&["simulate-events", "--frames", s(&frames), "--output", s(&csv), "--fps", "100"]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.ends_with(",1")), "{text}");
}

#[test]
fn events_round_trip_through_binary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("in.csv");
    std::fs::write(&csv, "t_us,x,y,p\n5,1,2,1\n9,3,0,-1\n12,0,4,1\n").unwrap();
    let bin = dir.path().join("e.bin");
    let back = dir.path().join("back.csv");
    ok(&["convert-events", "--input", s(&csv), "--output", s(&bin), "--sensor", "4x5"]);
    ok(&["convert-events", "--input", s(&bin), "--output", s(&back)]);
    assert_eq!(std::fs::read_to_string(&back).unwrap(), std::fs::read_to_string(&csv).unwrap());
}

#[test]
fn labels_round_trip_and_score_perfectly_against_themselves() {
    let dir = tempfile::tempdir().unwrap();
    let txt = dir.path().join("labels.txt");
    std::fs::write(&txt, LABELS).unwrap();
    let bin = dir.path().join("labels.bin");
    let back = dir.path().join("back.txt");
    ok(&["convert-labels", "--input", s(&txt), "--output", s(&bin), "--fps", "20"]);
    ok(&["convert-labels", "--input", s(&bin), "--output", s(&back), "--fps", "20"]);
    assert_eq!(std::fs::read_to_string(&back).unwrap(), LABELS);

    let out = ok(&[
        "eval",
        "--predictions",
        s(&bin),
        "--labels",
        s(&bin),
        "--delta-t-ms",
        "50",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["map_50"], 1.0);
    assert_eq!(v["map_50_95"], 1.0);
}

#[test]
fn profile_published_flags_only_tiny() {
    let small = ok(&["profile", "--published", "small"]);
    assert!(small.contains("E_ANN  39.0339 mJ (listed 39.03)"), "{small}");
    assert!(!small.contains("FLAG"));
    let tiny = ok(&["profile", "--published", "tiny"]);
    assert!(tiny.contains("FLAG e_snn"), "{tiny}");
}

#[test]
fn profile_of_a_fresh_model_writes_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let j = dir.path().join("p.jsonl");
    ok(&["profile", "--height", "32", "--width", "32", "--calibration-windows", "2", "--jsonl", s(&j)]);
    let text = std::fs::read_to_string(&j).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());
}

#[test]
fn dump_attention_writes_normalised_maps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("att");
    ok(&["dump-attention", "--window", "1", "--synthetic", "1", "--out", s(&out)]);
    let events = std::fs::read(out.join("events.pgm")).unwrap();
    // "P5\nW H\n255\n"
    let header = |b: &[u8]| b.split(|&c| c == b'\n').take(3).map(|l| String::from_utf8_lossy(l).into_owned()).collect::<Vec<_>>();
    let mut csvs = 0;
    for entry in std::fs::read_dir(&out).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_str().unwrap().to_string();
        if name.ends_with(".csv") {
            csvs += 1;
            let text = std::fs::read_to_string(&p).unwrap();
            for row in text.lines().skip(1) {
                let sum: f64 = row.split(',').skip(4).map(|v| v.parse::<f64>().unwrap()).sum();
                assert!((sum - 1.0).abs() < 1e-9, "{name}: row sums to {sum}");
            }
            let stem = name.trim_end_matches(".csv");
            let overlay = std::fs::read(out.join(format!("{stem}_overlay.pgm"))).unwrap();
            assert_eq!(overlay.len(), events.len());
            assert_eq!(header(&overlay), header(&events));
        }
    }
    assert!(csvs >= 2, "expected block and grid maps, found {csvs}");
}
