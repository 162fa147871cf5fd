use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use bevtrack::bev::{BevError, FeatureMap};
use bevtrack::lifting::LiftMethod;
use bevtrack::metrics::{self, MetricsError, DETECTION_RADIUS, TRACKING_RADIUS};
use bevtrack::pipeline::{Pipeline, PipelineConfig, PipelineError};
use bevtrack::sim::{self, SceneConfig, SceneDir, SimError};
use bevtrack::tracker::{self, TrackerError};
use serde::Serialize;

use crate::plot;
use crate::report::{self, RunReport};
use crate::Mode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {source}")]
    Metrics { path: String, source: MetricsError },
    #[error(transparent)]
    Undefined(MetricsError),
    #[error("{path}: {source}")]
    Tracker { path: String, source: TrackerError },
    #[error("{path}: {source}")]
    Bev { path: String, source: BevError },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Undefined(MetricsError::NoGroundTruth) => 2,
            _ => 1,
        }
    }
}

fn shown(path: &Path) -> String {
    path.display().to_string()
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: shown(path), source }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(io(path))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json { path: shown(path), source })?;
    text.push('\n');
    write(path, text)
}

fn file_key(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| shown(path))
}

fn load_pipeline_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    let config = match path {
        None => PipelineConfig::default(),
        Some(p) => {
            let text = String::from_utf8(read(p)?).map_err(|e| CliError::Input(format!("{}: {e}", shown(p))))?;
            serde_json::from_str(&text).map_err(|source| CliError::Json { path: shown(p), source })?
        }
    };
    config.validate()?;
    Ok(config)
}

pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut scene = SceneConfig::load(config)?;
    if let Some(seed) = seed {
        scene.seed = seed;
    }
    let manifest = sim::export_scene(&scene, out)?;
    println!("wrote {} frames from {} cameras to {}", manifest.frames, manifest.camera_ids.len(), out.display());
    Ok(())
}

pub struct TrackArgs<'a> {
    pub input: &'a Path,
    pub out: &'a Path,
    pub config: Option<&'a Path>,
    pub method: Option<LiftMethod>,
    pub seed: Option<u64>,
    pub report: Option<&'a Path>,
    pub score_dir: Option<&'a Path>,
}

#[derive(Debug, Serialize)]
struct TrackSummary {
    frames: u64,
    records: usize,
    track_ids: usize,
    detections: usize,
}

pub fn track(args: TrackArgs<'_>) -> Result<(), CliError> {
    let mut config = load_pipeline_config(args.config)?;
    if let Some(m) = args.method {
        config.method = m;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let scene = SceneDir::open(args.input)?;
    if scene.manifest.downsample != config.downsample {
        return Err(CliError::Input(format!(
            "features were rendered at downsample {}, config expects {}",
            scene.manifest.downsample, config.downsample
        )));
    }
    if let Some(dir) = args.score_dir {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    let mut pipe = Pipeline::new(config.clone(), scene.cameras.clone())?;
    let mut records = Vec::new();
    let mut detections = 0;
    for frame in 0..scene.manifest.frames {
        let out = pipe.step(frame, &scene.features(frame)?)?;
        detections += out.detections.len();
        records.extend(out.tracks);
        if let Some(dir) = args.score_dir {
            let data = out.score.data().iter().map(|&v| v as f32).collect();
            let map = FeatureMap::from_vec(1, out.score.height(), out.score.width(), data)
                .map_err(|source| CliError::Bev { path: shown(dir), source })?;
            write(&dir.join(format!("{frame:06}_score.bin")), map.to_bytes())?;
        }
    }
    let file = File::create(args.out).map_err(io(args.out))?;
    tracker::write_tracks_csv(BufWriter::new(file), &records).map_err(|source| CliError::Tracker { path: shown(args.out), source })?;

    let summary = TrackSummary {
        frames: scene.manifest.frames,
        records: records.len(),
        track_ids: records.iter().map(|r| r.id).collect::<BTreeSet<_>>().len(),
        detections,
    };
    println!(
        "{} frames, {} detections, {} track records over {} ids",
        summary.frames, summary.detections, summary.records, summary.track_ids
    );
    if let Some(path) = args.report {
        let manifest_path = scene.root.join(sim::MANIFEST_FILE);
        let inputs = BTreeMap::from([(sim::MANIFEST_FILE.to_string(), report::sha256_hex(&read(&manifest_path)?))]);
        let provenance = report::provenance(&config, Some(config.seed), inputs).map_err(|source| CliError::Json { path: shown(path), source })?;
        write_json(path, &RunReport { command: "track".into(), metrics: summary, provenance })?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalConfig {
    mode: &'static str,
    radius: f64,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum EvalMetrics {
    Detection(metrics::DetectionReport),
    Tracking(metrics::TrackingReport),
}

pub fn evaluate(gt_path: &Path, hyp_path: &Path, mode: Mode, out: &Path, radius: Option<f64>, seed: Option<u64>) -> Result<(), CliError> {
    let gt_bytes = read(gt_path)?;
    let hyp_bytes = read(hyp_path)?;
    let gt = metrics::read_ground_truth_csv(gt_bytes.as_slice()).map_err(|source| CliError::Metrics { path: shown(gt_path), source })?;
    let hyp = metrics::read_hypotheses_csv(hyp_bytes.as_slice()).map_err(|source| CliError::Metrics { path: shown(hyp_path), source })?;
    let frames = metrics::group_frames(&gt, &hyp);
    let undefined = |e: MetricsError| match e {
        MetricsError::NoGroundTruth | MetricsError::NoFrames => CliError::Undefined(MetricsError::NoGroundTruth),
        other => CliError::Input(other.to_string()),
    };
    let (config, result) = match mode {
        Mode::Detection => {
            let r = radius.unwrap_or(DETECTION_RADIUS);
            let m = metrics::detection_metrics(&frames, r).map_err(undefined)?;
            println!("MODA {:.4}  MODP {:.4}  precision {:.4}  recall {:.4}", m.moda, m.modp, m.precision, m.recall);
            (EvalConfig { mode: "detection", radius: r }, EvalMetrics::Detection(m))
        }
        Mode::Tracking => {
            let r = radius.unwrap_or(TRACKING_RADIUS);
            let m = metrics::tracking_metrics(&frames, r).map_err(undefined)?;
            println!(
                "MOTA {:.4}  IDF1 {:.4}  MOTP {:.4}  IDSW {}  MT {:.4}  ML {:.4}",
                m.mota, m.idf1, m.motp, m.idsw, m.mt, m.ml
            );
            (EvalConfig { mode: "tracking", radius: r }, EvalMetrics::Tracking(m))
        }
    };
    let inputs = BTreeMap::from([
        (format!("gt:{}", file_key(gt_path)), report::sha256_hex(&gt_bytes)),
        (format!("hyp:{}", file_key(hyp_path)), report::sha256_hex(&hyp_bytes)),
    ]);
    let provenance = report::provenance(&config, seed, inputs).map_err(|source| CliError::Json { path: shown(out), source })?;
    write_json(out, &RunReport { command: "evaluate".into(), metrics: result, provenance })
}

pub fn plot(input: &Path, out: &Path, channel: usize, gt: Option<&Path>, config: Option<&Path>) -> Result<(), CliError> {
    let ext = out.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") => {
            let file = File::open(input).map_err(io(input))?;
            let map = FeatureMap::read_from(BufReader::new(file)).map_err(|source| CliError::Bev { path: shown(input), source })?;
            let bytes = plot::pgm(&map, channel).map_err(|e| CliError::Input(format!("{}: {e}", shown(input))))?;
            write(out, bytes)
        }
        Some("svg") => {
            let grid = load_pipeline_config(config)?.grid;
            let tracks = tracker::read_tracks_csv(read(input)?.as_slice()).map_err(|source| CliError::Tracker { path: shown(input), source })?;
            let gt = match gt {
                Some(p) => metrics::read_ground_truth_csv(read(p)?.as_slice()).map_err(|source| CliError::Metrics { path: shown(p), source })?,
                None => Vec::new(),
            };
            write(out, plot::svg(&grid, &gt, &tracks))
        }
        _ => Err(CliError::Input(format!("{}: output must end in .pgm or .svg", PathBuf::from(out).display()))),
    }
}
