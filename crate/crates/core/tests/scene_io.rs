use bevtrack::bev::BevGrid;
use bevtrack::pipeline::{self, PipelineConfig};
use bevtrack::sim::{self, SceneConfig, SceneDir};

fn scene() -> SceneConfig {
    SceneConfig::crossing(3, 5, 21, 0.05)
}

#[test]
fn exported_scene_reads_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scene();
    let manifest = sim::export_scene(&cfg, dir.path()).unwrap();
    let loaded = SceneDir::open(dir.path()).unwrap();
    assert_eq!(loaded.manifest, manifest);
    assert_eq!(loaded.cameras.len(), cfg.cameras().unwrap().len());

    let seq = sim::simulate(&cfg).unwrap();
    let gt: Vec<_> = seq.iter().flat_map(|f| f.ground_truth()).collect();
    assert_eq!(loaded.ground_truth().unwrap(), gt);
    for f in &seq {
        assert_eq!(loaded.features(f.frame).unwrap(), f.features);
    }
}

#[test]
fn pipeline_output_matches_from_disk_and_memory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scene();
    sim::export_scene(&cfg, dir.path()).unwrap();
    let loaded = SceneDir::open(dir.path()).unwrap();
    let pcfg = PipelineConfig { grid: BevGrid { cell_size: 0.2, width: 125, height: 80, ..pipeline::default_pipeline_grid() }, ..Default::default() };

    let mem = pipeline::run(&pcfg, cfg.cameras().unwrap(), sim::simulate(&cfg).unwrap().into_iter().map(|f| Ok((f.frame, f.features)))).unwrap();
    let disk = pipeline::run(&pcfg, loaded.cameras.clone(), (0..cfg.frames).map(|f| Ok((f, loaded.features(f).unwrap())))).unwrap();
    assert_eq!(mem, disk);
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = scene();
    let pcfg = PipelineConfig { grid: BevGrid { cell_size: 0.2, width: 125, height: 80, ..pipeline::default_pipeline_grid() }, ..Default::default() };
    let run = || pipeline::run(&pcfg, cfg.cameras().unwrap(), sim::simulate(&cfg).unwrap().into_iter().map(|f| Ok((f.frame, f.features)))).unwrap();
    let many = run();
    std::env::set_var(pipeline::THREADS_ENV, "1");
    let one = run();
    std::env::remove_var(pipeline::THREADS_ENV);
    assert_eq!(many, one);
}
