//! Frame-by-frame detection and tracking on oracle features: lift each
//! camera, fuse, collapse the vertical axis, stack the previous frame, turn
//! the response into a score map, decode peaks and feed the tracker.
//!
//! The score map is the fused response divided by the oracle blob amplitude
//! and clamped to `[0, 1]`. Sub-cell offsets come from a parabola through
//! each peak and its neighbors. The motion cue points from a peak to the
//! strongest nearby response in the previous frame's score map.

use crate::bev::{self, BevError, BevGrid, FeatureMap, Reduction, TemporalBuffer};
use crate::geometry::Camera;
use crate::heads::{self, CenterHeatmap, Detection, HeadError, VectorField};
use crate::lifting::{self, DeformableSpec, DepthDistribution, LiftError, LiftMethod, Lifted, SamplingPlan, DEFAULT_DOWNSAMPLE};
use crate::tracker::{TrackRecord, Tracker, TrackerConfig, TrackerError};
use serde::{Deserialize, Serialize};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "BEVTRACK_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Bev(#[from] BevError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error("frame {frame}: expected {expected} feature maps, got {got}")]
    CameraCount { frame: u64, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub threshold: f64,
    pub max_k: usize,
    /// Search radius in meters for the motion cue.
    pub motion_radius: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { threshold: 0.4, max_k: 200, motion_radius: 0.6 }
    }
}

/// Uniform depth bins `d0 + delta, ..., d0 + bins * delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthConfig {
    pub d0: f64,
    pub delta: f64,
    pub bins: usize,
}

impl Default for DepthConfig {
    fn default() -> Self {
        Self { d0: 2.0, delta: 1.0, bins: 32 }
    }
}

/// A center tap plus `points - 1` taps on a ring of `radius` feature pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeformableConfig {
    pub points: usize,
    pub radius: f32,
}

impl Default for DeformableConfig {
    fn default() -> Self {
        Self { points: 1, radius: 0.0 }
    }
}

pub fn default_pipeline_grid() -> BevGrid {
    BevGrid { z_max: 1.7, z_bins: 3, ..BevGrid::multiviewx().with_cell_size(0.1) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub method: LiftMethod,
    pub grid: BevGrid,
    pub downsample: u32,
    pub reduction: Reduction,
    /// Response that maps to score 1.
    pub reference_amplitude: f64,
    pub decode: DecodeConfig,
    pub depth: DepthConfig,
    pub deformable: DeformableConfig,
    pub tracker: TrackerConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            method: LiftMethod::Bilinear,
            grid: default_pipeline_grid(),
            downsample: DEFAULT_DOWNSAMPLE,
            reduction: Reduction::Max,
            reference_amplitude: 1.0,
            decode: DecodeConfig::default(),
            depth: DepthConfig::default(),
            deformable: DeformableConfig::default(),
            tracker: TrackerConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.grid.validate()?;
        self.tracker.validate()?;
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if self.downsample == 0 {
            return bad("downsample must be >= 1");
        }
        if !(self.reference_amplitude > 0.0) {
            return bad("reference_amplitude must be > 0");
        }
        if !(self.decode.threshold >= 0.0) || self.decode.max_k == 0 || !(self.decode.motion_radius >= 0.0) {
            return bad("decode: threshold >= 0, max_k >= 1, motion_radius >= 0 required");
        }
        if self.depth.bins == 0 || !(self.depth.delta > 0.0) || !(self.depth.d0 >= 0.0) {
            return bad("depth: bins >= 1, delta > 0, d0 >= 0 required");
        }
        if self.deformable.points == 0 || !self.deformable.radius.is_finite() {
            return bad("deformable: points >= 1 and finite radius required");
        }
        Ok(())
    }
}

enum Lifter {
    Plans(Vec<SamplingPlan>),
    Deformable(Vec<SamplingPlan>, DeformableSpec),
    DepthSplat(Vec<DepthDistribution>),
}

/// Worker count: `BEVTRACK_THREADS` if set, else the available parallelism.
pub fn thread_budget() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` over `items` on up to `threads` scoped workers. Output order
/// follows input order.
fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().enumerate().map(|(k, t)| f(k, t)).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                let f = &f;
                s.spawn(move || part.iter().enumerate().map(|(k, t)| f(c * chunk + k, t)).collect::<Vec<R>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("lifting worker panicked")).collect()
    })
}

/// Everything produced for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame: u64,
    pub score: CenterHeatmap,
    pub detections: Vec<Detection>,
    pub tracks: Vec<TrackRecord>,
}

pub struct Pipeline {
    config: PipelineConfig,
    cameras: Vec<Camera>,
    lifter: Lifter,
    history: TemporalBuffer,
    tracker: Tracker,
    threads: usize,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, cameras: Vec<Camera>) -> Result<Self, PipelineError> {
        config.validate()?;
        if cameras.is_empty() {
            return Err(LiftError::NoCameras.into());
        }
        let threads = thread_budget();
        let (grid, ds) = (config.grid, config.downsample);
        let lifter = match config.method {
            LiftMethod::Bilinear => Lifter::Plans(par_map(&cameras, threads, |_, c| SamplingPlan::voxels(c, &grid, ds))),
            LiftMethod::Perspective => {
                Lifter::Plans(par_map(&cameras, threads, |_, c| SamplingPlan::ground(c, &grid, ds)).into_iter().collect::<Result<_, _>>()?)
            }
            LiftMethod::Deformable => {
                let d = &config.deformable;
                let spec = if d.points == 1 { DeformableSpec::degenerate(&grid) } else { DeformableSpec::ring(&grid, d.points, d.radius)? };
                Lifter::Deformable(par_map(&cameras, threads, |_, c| SamplingPlan::voxels(c, &grid, ds)), spec)
            }
            LiftMethod::DepthSplat => {
                let d = &config.depth;
                let dists = cameras
                    .iter()
                    .map(|c| {
                        let k = c.intrinsics.downsampled(ds);
                        DepthDistribution::uniform(d.d0, d.delta, d.bins, k.height as usize, k.width as usize)
                    })
                    .collect::<Result<_, _>>()?;
                Lifter::DepthSplat(dists)
            }
        };
        let tracker = Tracker::new(config.tracker.clone())?;
        Ok(Self { config, cameras, lifter, history: TemporalBuffer::new(1, 1), tracker, threads })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    /// Per-camera lifted volumes for one frame, in rig order.
    pub fn lift(&self, features: &[FeatureMap]) -> Result<Vec<Lifted>, PipelineError> {
        let (grid, ds) = (&self.config.grid, self.config.downsample);
        let out: Vec<Result<Lifted, LiftError>> = match &self.lifter {
            Lifter::Plans(plans) => par_map(features, self.threads, |k, f| plans[k].sample(f)),
            Lifter::Deformable(plans, spec) => par_map(features, self.threads, |k, f| plans[k].sample_deformable(f, spec)),
            Lifter::DepthSplat(dists) => {
                par_map(features, self.threads, |k, f| lifting::lift_depth_splat(f, &dists[k], &self.cameras[k], grid, ds))
            }
        };
        Ok(out.into_iter().collect::<Result<_, _>>()?)
    }

    /// Fused ground response `[current | previous]` before scoring.
    pub fn bev_features(&mut self, frame: u64, features: &[FeatureMap]) -> Result<FeatureMap, PipelineError> {
        if features.len() != self.cameras.len() {
            return Err(PipelineError::CameraCount { frame, expected: self.cameras.len(), got: features.len() });
        }
        let lifted = self.lift(features)?;
        let fused = lifting::aggregate_cameras(&lifted)?;
        let ground = bev::reduce_vertical(&fused.volume, self.config.reduction);
        let first = FeatureMap::from_vec(1, ground.height(), ground.width(), ground.channel(0).to_vec())?;
        let stacked = bev::concat_history(&first, &self.history)?;
        self.history.push(frame, first)?;
        Ok(stacked)
    }

    pub fn step(&mut self, frame: u64, features: &[FeatureMap]) -> Result<FrameOutput, PipelineError> {
        let had_previous = !self.history.is_empty();
        let stacked = self.bev_features(frame, features)?;
        let amp = self.config.reference_amplitude;
        let to_score = |c: usize| {
            let data = stacked.channel(c).iter().map(|v| (*v as f64 / amp).clamp(0.0, 1.0)).collect();
            CenterHeatmap::from_vec(stacked.height(), stacked.width(), data)
        };
        let score = to_score(0)?;
        let previous = if had_previous { Some(to_score(1)?) } else { None };

        let grid = &self.config.grid;
        let dec = &self.config.decode;
        let peaks = heads::find_peaks(&score, dec.threshold, dec.max_k);
        let mut offsets = VectorField::zeros(grid.height, grid.width);
        let mut motion = VectorField::zeros(grid.height, grid.width);
        for &(i, j, _) in &peaks {
            let off = subcell_offset(&score, i, j);
            offsets.set(i, j, off);
            if let Some(prev) = &previous {
                motion.set(i, j, motion_cue(prev, (i as f64 + off.1, j as f64 + off.0), dec.motion_radius / grid.cell_size, dec.threshold));
            }
        }
        let detections = heads::decode_detections(&score, &offsets, &motion, grid, dec.threshold, dec.max_k)?;
        let tracks = self.tracker.step(frame, &detections);
        Ok(FrameOutput { frame, score, detections, tracks })
    }
}

fn parabola_vertex(l: f64, c: f64, r: f64) -> f64 {
    let den = l - 2.0 * c + r;
    if den < 0.0 { (0.5 * (l - r) / den).clamp(-0.5, 0.5) } else { 0.0 }
}

/// `(dx, dy)` in cells of the parabola vertex through a cell and its
/// neighbors; 0 along an axis without two neighbors.
pub fn subcell_offset(score: &CenterHeatmap, i: usize, j: usize) -> (f64, f64) {
    let (h, w) = (score.height(), score.width());
    let c = score.get(i, j);
    let dx = if j > 0 && j + 1 < w { parabola_vertex(score.get(i, j - 1), c, score.get(i, j + 1)) } else { 0.0 };
    let dy = if i > 0 && i + 1 < h { parabola_vertex(score.get(i - 1, j), c, score.get(i + 1, j)) } else { 0.0 };
    (dx, dy)
}

/// Displacement `(dx, dy)` in cells from `at = (row, col)` to the strongest
/// proximity-weighted response of `prev` within `radius` cells, refined to
/// sub-cell precision. Zero when nothing there reaches `threshold`.
pub fn motion_cue(prev: &CenterHeatmap, at: (f64, f64), radius: f64, threshold: f64) -> (f64, f64) {
    let (h, w) = (prev.height() as i64, prev.width() as i64);
    let (ci, cj) = (at.0.round() as i64, at.1.round() as i64);
    let r = radius.ceil() as i64;
    let spread = (radius * 0.5).max(0.5);
    let mut best: Option<(f64, usize, usize)> = None;
    for i in (ci - r).max(0)..=(ci + r).min(h - 1) {
        for j in (cj - r).max(0)..=(cj + r).min(w - 1) {
            let (di, dj) = (i as f64 - at.0, j as f64 - at.1);
            let d2 = di * di + dj * dj;
            let s = prev.get(i as usize, j as usize);
            if d2 > radius * radius || s < threshold {
                continue;
            }
            let weighted = s * (-0.5 * d2 / (spread * spread)).exp();
            if best.is_none_or(|b| weighted > b.0) {
                best = Some((weighted, i as usize, j as usize));
            }
        }
    }
    match best {
        Some((_, i, j)) => {
            let (ox, oy) = subcell_offset(prev, i, j);
            (j as f64 + ox - at.1, i as f64 + oy - at.0)
        }
        None => (0.0, 0.0),
    }
}

/// Runs the pipeline over a sequence of frames.
pub fn run<I>(config: &PipelineConfig, cameras: Vec<Camera>, frames: I) -> Result<Vec<FrameOutput>, PipelineError>
where
    I: IntoIterator<Item = Result<(u64, Vec<FeatureMap>), PipelineError>>,
{
    let mut pipe = Pipeline::new(config.clone(), cameras)?;
    frames.into_iter().map(|f| f.and_then(|(frame, maps)| pipe.step(frame, &maps))).collect()
}
