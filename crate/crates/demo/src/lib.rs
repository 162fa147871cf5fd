//! Browser demo. Each export returns a JSON string that `www/index.html`
//! draws on a canvas; the same functions run natively for tests.

use bevtrack::bev::BevGrid;
use bevtrack::geometry::WorldPoint;
use bevtrack::heads::{self, MotionField, OffsetField};
use bevtrack::lifting::LiftMethod;
use bevtrack::metrics::{self, HypRecord, TRACKING_RADIUS};
use bevtrack::pipeline::{self, PipelineConfig};
use bevtrack::sim::{self, SceneConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Coarser than the library default so a frame lifts quickly in the browser.
const DEMO_CELL: f64 = 0.2;

#[derive(Debug, Serialize)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct LiftView {
    pub heatmap: Heatmap,
    pub ground_truth: Vec<[f64; 2]>,
    pub detections: Vec<[f64; 3]>,
}

#[derive(Debug, Serialize)]
pub struct PeakView {
    pub heatmap: Heatmap,
    pub peaks: Vec<[f64; 3]>,
    pub skipped: usize,
}

#[derive(Debug, Serialize)]
pub struct TrackView {
    pub width: f64,
    pub height: f64,
    pub ground_truth: Vec<[f64; 3]>,
    /// `[frame, id, x, y]`
    pub tracks: Vec<[f64; 4]>,
    pub mota: f64,
    pub idf1: f64,
    pub id_switches: usize,
}

fn demo_config(method: LiftMethod, use_motion: bool) -> PipelineConfig {
    let mut cfg = PipelineConfig { method, grid: pipeline::default_pipeline_grid().with_cell_size(DEMO_CELL), ..Default::default() };
    cfg.tracker.use_motion = use_motion;
    cfg
}

fn heatmap(score: &heads::CenterHeatmap, cell_size: f64) -> Heatmap {
    Heatmap { width: score.width(), height: score.height(), cell_size, values: score.data().to_vec() }
}

/// Lifts one frame of a crossing scene with `method` and returns the BEV
/// score map with detections and ground truth.
pub fn lift_view(method: &str, agents: usize, seed: u64, noise: f64) -> Result<LiftView, String> {
    let method: LiftMethod = method.parse()?;
    let scene = SceneConfig::crossing(agents.max(1), 1, seed, noise.max(0.0));
    let frame = sim::simulate(&scene).map_err(|e| e.to_string())?.remove(0);
    let cfg = demo_config(method, true);
    let mut pipe = pipeline::Pipeline::new(cfg, scene.cameras().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let out = pipe.step(0, &frame.features).map_err(|e| e.to_string())?;
    Ok(LiftView {
        heatmap: heatmap(&out.score, DEMO_CELL),
        ground_truth: frame.agents.iter().map(|a| [a.x, a.y]).collect(),
        detections: out.detections.iter().map(|d| [d.x, d.y, d.score]).collect(),
    })
}

/// Splats Gaussians at `points` (flat `x, y` pairs in meters) on a 10 x 8 m
/// grid with spread `sigma` in cells and decodes them back as peaks.
pub fn peak_view(points: &[f64], sigma: f64, threshold: f64) -> Result<PeakView, String> {
    let grid = BevGrid::new((0.0, 0.0), 0.1, 100, 80, (0.0, 2.0), 1).map_err(|e| e.to_string())?;
    let centers: Vec<WorldPoint> = points.chunks_exact(2).map(|p| WorldPoint::ground(p[0], p[1])).collect();
    let (heat, skipped) = heads::encode_heatmap(&centers, &grid, sigma).map_err(|e| e.to_string())?;
    let offsets = OffsetField::zeros(grid.height, grid.width);
    let motion = MotionField::zeros(grid.height, grid.width);
    let dets = heads::decode_detections(&heat, &offsets, &motion, &grid, threshold, 64).map_err(|e| e.to_string())?;
    Ok(PeakView { heatmap: heatmap(&heat, grid.cell_size), peaks: dets.iter().map(|d| [d.x, d.y, d.score]).collect(), skipped })
}

/// Simulates and tracks a crossing scene, scoring it against ground truth.
pub fn track_view(agents: usize, frames: u64, seed: u64, use_motion: bool) -> Result<TrackView, String> {
    let scene = SceneConfig::crossing(agents.max(1), frames.max(1), seed, 0.05);
    let seq = sim::simulate(&scene).map_err(|e| e.to_string())?;
    let gt: Vec<_> = seq.iter().flat_map(|f| f.ground_truth()).collect();
    let cameras = scene.cameras().map_err(|e| e.to_string())?;
    let out = pipeline::run(&demo_config(LiftMethod::Bilinear, use_motion), cameras, seq.into_iter().map(|f| Ok((f.frame, f.features))))
        .map_err(|e| e.to_string())?;
    let tracks: Vec<_> = out.iter().flat_map(|o| o.tracks.iter().copied()).collect();
    let hyp: Vec<HypRecord> = tracks.iter().map(|t| HypRecord { frame: t.frame, id: Some(t.id), x: t.x, y: t.y, score: t.score }).collect();
    let report = metrics::tracking_metrics(&metrics::group_frames(&gt, &hyp), TRACKING_RADIUS).map_err(|e| e.to_string())?;
    let (width, height) = scene.grid.extent();
    Ok(TrackView {
        width,
        height,
        ground_truth: gt.iter().map(|g| [g.frame as f64, g.x, g.y]).collect(),
        tracks: tracks.iter().map(|t| [t.frame as f64, t.id as f64, t.x, t.y]).collect(),
        mota: report.mota,
        idf1: report.idf1,
        id_switches: report.idsw,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn lift(method: &str, agents: usize, seed: u64, noise: f64) -> Result<String, JsError> {
    to_js(lift_view(method, agents, seed, noise))
}

#[wasm_bindgen]
pub fn peaks(points: &[f64], sigma: f64, threshold: f64) -> Result<String, JsError> {
    to_js(peak_view(points, sigma, threshold))
}

#[wasm_bindgen]
pub fn track(agents: usize, frames: u64, seed: u64, use_motion: bool) -> Result<String, JsError> {
    to_js(track_view(agents, frames, seed, use_motion))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_finds_every_agent() {
        let v = lift_view("bilinear", 4, 3, 0.0).unwrap();
        assert_eq!(v.heatmap.values.len(), v.heatmap.width * v.heatmap.height);
        assert_eq!(v.detections.len(), 4);
        for g in &v.ground_truth {
            let near = v.detections.iter().any(|d| (d[0] - g[0]).hypot(d[1] - g[1]) < 0.3);
            assert!(near, "{g:?} not detected in {:?}", v.detections);
        }
    }

    #[test]
    fn unknown_method_is_an_error() {
        assert!(lift_view("nearest", 2, 0, 0.0).is_err());
    }

    #[test]
    fn peaks_round_trip() {
        let v = peak_view(&[2.05, 3.05, 7.05, 1.05, 40.0, 1.0], heads::DEFAULT_SIGMA_CELLS, 0.5).unwrap();
        assert_eq!(v.skipped, 1);
        assert_eq!(v.peaks.len(), 2);
        assert!(v.peaks.iter().any(|p| (p[0] - 2.05).abs() < 1e-9 && (p[1] - 3.05).abs() < 1e-9));
    }

    #[test]
    fn tracking_small_scene() {
        let v = track_view(4, 20, 5, true).unwrap();
        assert!(v.mota > 0.8, "MOTA {}", v.mota);
        assert!(!v.tracks.is_empty());
    }
}
