use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bevtrack::bev::FeatureMap;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bevtrack"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn simulate(out: &Path) {
    let o = run(&["simulate", "--config", p(&configs().join("scene_small.json")), "--out", p(out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn help_exits_zero_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [&[][..], &["simulate"], &["track"], &["evaluate"], &["plot"]] {
        let o = bin().args(sub).arg("--help").current_dir(dir.path()).output().unwrap();
        assert_eq!(code(&o), 0, "{sub:?}");
        assert!(stdout(&o).contains("Usage"), "{sub:?}");
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(code(&run(&["track", "--method", "nearest", "--input", "x", "--out", "y"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
}

#[test]
fn simulate_writes_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    simulate(&a);
    simulate(&b);
    let ta = tree(&a);
    for name in ["manifest.json", "calibration.json", "gt.csv", "features/000000_cam0.bin"] {
        assert!(ta.iter().any(|(f, _)| f == Path::new(name)), "{name} missing");
    }
    assert_eq!(ta, tree(&b));
}

#[test]
fn simulate_missing_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--config", p(&dir.path().join("nope.json")), "--out", p(&dir.path().join("out"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn full_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    simulate(&scene);
    let mut reports = Vec::new();
    for k in 0..2 {
        let run_dir = dir.path().join(format!("run{k}"));
        fs::create_dir(&run_dir).unwrap();
        let tracks = run_dir.join("tracks.csv");
        let track_report = run_dir.join("track.json");
        let eval_report = run_dir.join("eval.json");
        let o = run(&[
            "track", "--input", p(&scene), "--config", p(&configs().join("pipeline.json")),
            "--out", p(&tracks), "--report", p(&track_report),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let o = run(&["evaluate", "--gt", p(&scene.join("gt.csv")), "--hyp", p(&tracks), "--out", p(&eval_report), "--seed", "5"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(stdout(&o).starts_with("MOTA "), "{}", stdout(&o));
        reports.push((fs::read(&tracks).unwrap(), fs::read(&track_report).unwrap(), fs::read(&eval_report).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
    let eval: serde_json::Value = serde_json::from_slice(&reports[0].2).unwrap();
    assert!(eval["metrics"]["mota"].as_f64().unwrap() > 0.8, "{eval}");
    assert_eq!(eval["provenance"]["seed"], 5);
    assert_eq!(eval["provenance"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn zero_offset_deformable_matches_bilinear() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    simulate(&scene);
    let mut outs = Vec::new();
    for m in ["bilinear", "deformable"] {
        let out = dir.path().join(format!("{m}.csv"));
        let o = run(&["track", "--input", p(&scene), "--method", m, "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outs.push(fs::read(out).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn corrupted_feature_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    simulate(&scene);
    let victim = scene.join("features/000003_cam2.bin");
    let bytes = fs::read(&victim).unwrap();
    fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
    let o = run(&["track", "--input", p(&scene), "--out", p(&dir.path().join("t.csv"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("000003_cam2.bin"), "{}", stderr(&o));
}

#[test]
fn downsample_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    simulate(&scene);
    let cfg = dir.path().join("pipeline.json");
    fs::write(&cfg, r#"{"downsample": 2}"#).unwrap();
    let o = run(&["track", "--input", p(&scene), "--config", p(&cfg), "--out", p(&dir.path().join("t.csv"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("downsample"));
}

fn eval_json(dir: &Path, gt: &str, hyp: &str, mode: &str) -> (Output, Option<serde_json::Value>) {
    let (g, h, out) = (dir.join("gt.csv"), dir.join("hyp.csv"), dir.join("report.json"));
    fs::write(&g, gt).unwrap();
    fs::write(&h, hyp).unwrap();
    let _ = fs::remove_file(&out);
    let o = run(&["evaluate", "--gt", p(&g), "--hyp", p(&h), "--mode", mode, "--out", p(&out)]);
    let json = fs::read(&out).ok().map(|b| serde_json::from_slice(&b).unwrap());
    (o, json)
}

const GT: &str = "frame,id,x,y\n0,1,1.0,1.0\n0,2,5.0,5.0\n1,1,1.2,1.0\n1,2,5.0,5.2\n";

#[test]
fn perfect_hypothesis_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let hyp = "frame,id,x,y,score\n0,7,1.0,1.0,1\n0,8,5.0,5.0,1\n1,7,1.2,1.0,1\n1,8,5.0,5.2,1\n";
    let (o, json) = eval_json(dir.path(), GT, hyp, "tracking");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("MOTA 1.0000  IDF1 1.0000"), "{}", stdout(&o));
    assert_eq!(json.unwrap()["metrics"]["mota"], 1.0);
    let (o, json) = eval_json(dir.path(), GT, hyp, "detection");
    assert!(stdout(&o).starts_with("MODA 1.0000"), "{}", stdout(&o));
    assert_eq!(json.unwrap()["metrics"]["moda"], 1.0);
}

#[test]
fn empty_hypothesis_is_all_misses() {
    let dir = tempfile::tempdir().unwrap();
    let (o, json) = eval_json(dir.path(), GT, "frame,id,x,y,score\n", "tracking");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = &json.unwrap()["metrics"];
    assert_eq!(m["mota"], 0.0);
    assert_eq!(m["ml"], 1.0);
}

#[test]
fn malformed_row_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let (o, json) = eval_json(dir.path(), "frame,id,x,y\n0,1,1.0,1.0\n1,1,oops,1.0\n", "frame,id,x,y,score\n", "tracking");
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line: 3"), "{}", stderr(&o));
    assert!(json.is_none());
}

#[test]
fn no_ground_truth_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = eval_json(dir.path(), "frame,id,x,y\n", "frame,id,x,y,score\n0,1,1.0,1.0,0.9\n", "tracking");
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn constant_map_gives_uniform_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let (input, out) = (dir.path().join("map.bin"), dir.path().join("map.pgm"));
    fs::write(&input, FeatureMap::filled(1, 4, 6, 0.3).to_bytes()).unwrap();
    let o = run(&["plot", "--input", p(&input), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bytes = fs::read(&out).unwrap();
    let header = b"P5\n6 4\n255\n";
    assert!(bytes.starts_with(header));
    let pixels = &bytes[header.len()..];
    assert_eq!(pixels.len(), 24);
    assert!(pixels.iter().all(|&v| v == pixels[0]));
}

#[test]
fn svg_has_one_polyline_per_track() {
    let dir = tempfile::tempdir().unwrap();
    let (input, out) = (dir.path().join("t.csv"), dir.path().join("t.svg"));
    fs::write(&input, "frame,id,x,y,score\n0,1,1.0,1.0,0.9\n1,1,1.5,1.0,0.9\n0,4,3.0,3.0,0.8\n1,4,3.0,3.5,0.8\n").unwrap();
    fs::write(dir.path().join("gt.csv"), GT).unwrap();
    let o = run(&["plot", "--input", p(&input), "--out", p(&out), "--gt", p(&dir.path().join("gt.csv"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(&out).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert_eq!(svg.matches("<circle").count(), 4);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn empty_track_file_gives_grid_only() {
    let dir = tempfile::tempdir().unwrap();
    let (input, out) = (dir.path().join("t.csv"), dir.path().join("t.svg"));
    fs::write(&input, "frame,id,x,y,score\n").unwrap();
    let o = run(&["plot", "--input", p(&input), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(&out).unwrap();
    assert_eq!(svg.matches("<rect").count(), 1);
    assert_eq!(svg.matches("<polyline").count(), 0);
}

#[test]
fn plot_rejects_unknown_extension() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.csv");
    fs::write(&input, "frame,id,x,y,score\n").unwrap();
    assert_eq!(code(&run(&["plot", "--input", p(&input), "--out", p(&dir.path().join("t.png"))])), 1);
}

#[test]
fn example_configs_parse() {
    let text = fs::read_to_string(configs().join("pipeline.json")).unwrap();
    let cfg: bevtrack::pipeline::PipelineConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(cfg, bevtrack::pipeline::PipelineConfig::default());
    for scene in ["scene.json", "scene_small.json"] {
        bevtrack::sim::SceneConfig::load(configs().join(scene)).unwrap();
    }
}
