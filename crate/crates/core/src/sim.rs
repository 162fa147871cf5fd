//! Synthetic multi-camera world: agents moving on the ground plane, preset
//! camera rigs, oracle feature rendering with cylinder occlusion, and export
//! of calibration, ground truth and feature maps.
//!
//! Every random draw comes from a ChaCha stream derived from the scene seed,
//! so a scene renders identically no matter which order frames and cameras
//! are processed in.

use crate::bev::{BevError, BevGrid, FeatureMap};
use crate::geometry::{self, Camera, CameraRecord, GeometryError, Intrinsics, Projection, WorldPoint};
use crate::lifting::DEFAULT_DOWNSAMPLE;
use crate::metrics::{self, GtRecord, MetricsError};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scene config: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bev(#[from] BevError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("scene json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.to_path_buf(), source }
}

/// How an agent moves, in meters per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Motion {
    ConstantVelocity { start: [f64; 2], velocity: [f64; 2] },
    /// Walks the polyline at `speed` and stays at the last waypoint.
    Waypoints { points: Vec<[f64; 2]>, speed: f64 },
}

impl Motion {
    /// Noise-free position `steps` frames after spawning.
    pub fn position(&self, steps: u64) -> [f64; 2] {
        match self {
            Motion::ConstantVelocity { start, velocity } => {
                let t = steps as f64;
                [start[0] + t * velocity[0], start[1] + t * velocity[1]]
            }
            Motion::Waypoints { points, speed } => {
                let mut remaining = steps as f64 * speed;
                for w in points.windows(2) {
                    let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
                    if remaining <= len && len > 0.0 {
                        let f = remaining / len;
                        return [w[0][0] + f * (w[1][0] - w[0][0]), w[0][1] + f * (w[1][1] - w[0][1])];
                    }
                    remaining -= len;
                }
                *points.last().expect("validated non-empty")
            }
        }
    }
}

fn default_radius() -> f64 {
    0.3
}

fn default_height() -> f64 {
    1.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: u64,
    pub motion: Motion,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_height")]
    pub height: f64,
    #[serde(default)]
    pub start_frame: u64,
    /// Std of the per-frame position jitter in meters.
    #[serde(default)]
    pub noise: f64,
}

/// Camera rig: a preset name or explicit calibration records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RigSpec {
    Preset(RigPreset),
    Explicit(Vec<CameraRecord>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RigPreset {
    /// 7 cameras around a 12 x 36 m area.
    Wildtrack,
    /// 6 cameras around a 16 x 25 m area.
    Multiviewx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub amplitude: f32,
    /// Blob std in meters at the agent; its pixel size shrinks with depth.
    pub blob_sigma: f64,
    /// Height of the rendered center as a fraction of the agent height.
    pub center_height_fraction: f64,
    /// Std of the additive per-pixel noise.
    pub noise_sigma: f64,
    pub downsample: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { amplitude: 1.0, blob_sigma: 0.3, center_height_fraction: 0.5, noise_sigma: 0.0, downsample: DEFAULT_DOWNSAMPLE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub grid: BevGrid,
    pub rig: RigSpec,
    pub agents: Vec<AgentSpec>,
    pub frames: u64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub seed: u64,
    #[serde(default)]
    pub render: RenderConfig,
}

fn default_fps() -> f64 {
    10.0
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.grid.validate()?;
        let bad = |m: String| Err(SimError::Config(m));
        if self.frames == 0 {
            return bad("frames must be >= 1".into());
        }
        if !(self.fps > 0.0) {
            return bad(format!("fps must be > 0, got {}", self.fps));
        }
        if let RigSpec::Explicit(recs) = &self.rig {
            if recs.is_empty() {
                return bad("rig has no cameras".into());
            }
        }
        let r = &self.render;
        if r.downsample == 0 || !(r.blob_sigma > 0.0) || !(r.noise_sigma >= 0.0) || !r.amplitude.is_finite() {
            return bad("render: downsample >= 1, blob_sigma > 0 and noise_sigma >= 0 required".into());
        }
        if !(0.0..=1.0).contains(&r.center_height_fraction) {
            return bad("render: center_height_fraction must be in [0, 1]".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for a in &self.agents {
            if !ids.insert(a.id) {
                return bad(format!("duplicate agent id {}", a.id));
            }
            if !(a.radius > 0.0 && a.height > 0.0 && a.noise >= 0.0) {
                return bad(format!("agent {}: radius and height must be > 0, noise >= 0", a.id));
            }
            if let Motion::Waypoints { points, speed } = &a.motion {
                if points.is_empty() || !(*speed >= 0.0) {
                    return bad(format!("agent {}: waypoints need >= 1 point and speed >= 0", a.id));
                }
            }
        }
        Ok(())
    }

    pub fn cameras(&self) -> Result<Vec<Camera>, SimError> {
        let cams = match &self.rig {
            RigSpec::Preset(RigPreset::Wildtrack) => wildtrack_rig(),
            RigSpec::Preset(RigPreset::Multiviewx) => multiviewx_rig(),
            RigSpec::Explicit(recs) => geometry::rig_from_json(&serde_json::to_string(recs)?)?,
        };
        if cams.is_empty() {
            return Err(SimError::Config("rig has no cameras".into()));
        }
        Ok(cams)
    }

    pub fn from_json(json: &str) -> Result<Self, SimError> {
        let cfg: SceneConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    /// `n` agents on crossing lanes over the multiviewx-like area: half walk
    /// along x, half along y. Each y-lane start is shifted along its lane so
    /// that the noise-free paths keep bodies apart where lanes cross.
    pub fn crossing(n: usize, frames: u64, seed: u64, noise_sigma: f64) -> Self {
        const CLEARANCE: f64 = 1.0;
        const SHIFT_RANGE: f64 = 2.0;
        let grid = BevGrid::multiviewx().with_cell_size(0.1);
        let (w, h) = grid.extent();
        let mut agents: Vec<AgentSpec> = Vec::with_capacity(n);
        let half = n.div_ceil(2);
        let spec = |k: usize, start: [f64; 2], velocity: [f64; 2]| AgentSpec {
            id: k as u64 + 1,
            motion: Motion::ConstantVelocity { start, velocity },
            radius: default_radius(),
            height: default_height(),
            start_frame: 0,
            noise: 0.02,
        };
        let clearance = |a: &AgentSpec, placed: &[AgentSpec]| {
            (0..frames)
                .flat_map(|t| placed.iter().map(move |b| (t, b)))
                .map(|(t, b)| {
                    let (p, q) = (a.motion.position(t), b.motion.position(t));
                    (p[0] - q[0]).hypot(p[1] - q[1])
                })
                .fold(f64::INFINITY, f64::min)
        };
        for k in 0..n {
            let lane = (k % half) as f64 + 0.5;
            let dir = if k % 2 == 0 { 1.0 } else { -1.0 };
            if k < half {
                let y = 2.0 + lane * (h - 4.0) / half as f64;
                let x0 = if dir > 0.0 { 2.0 } else { w - 2.0 };
                agents.push(spec(k, [x0, y], [dir * (w - 4.0) / frames as f64, 0.0]));
                continue;
            }
            let x = 3.0 + lane * (w - 6.0) / half as f64 + 0.35;
            let span = h - 3.0 - SHIFT_RANGE;
            let velocity = [0.0, dir * span / frames as f64];
            let candidate = |shift: f64| {
                let y0 = if dir > 0.0 { 1.5 + shift } else { h - 1.5 - shift };
                spec(k, [x, y0], velocity)
            };
            let best = (0..=20)
                .map(|s| candidate(s as f64 * SHIFT_RANGE / 20.0))
                .map(|a| (clearance(&a, &agents), a))
                .find(|(c, _)| *c >= CLEARANCE)
                .map(|(_, a)| a)
                .unwrap_or_else(|| {
                    (0..=20)
                        .map(|s| candidate(s as f64 * SHIFT_RANGE / 20.0))
                        .max_by(|a, b| clearance(a, &agents).total_cmp(&clearance(b, &agents)))
                        .expect("non-empty candidates")
                });
            agents.push(best);
        }
        SceneConfig {
            grid,
            rig: RigSpec::Preset(RigPreset::Multiviewx),
            agents,
            frames,
            fps: default_fps(),
            seed,
            render: RenderConfig { noise_sigma, ..Default::default() },
        }
    }
}

fn preset_intrinsics() -> Intrinsics {
    Intrinsics::new(1000.0, 1000.0, 960.0, 540.0, 1920, 1080).expect("valid preset intrinsics")
}

fn rig_from_poses(poses: &[([f64; 3], [f64; 3])]) -> Vec<Camera> {
    poses
        .iter()
        .enumerate()
        .map(|(id, (eye, target))| {
            Camera::look_at(id, preset_intrinsics(), Vector3::from(*eye), Vector3::from(*target)).expect("valid preset pose")
        })
        .collect()
}

/// Seven 1920x1080 cameras around x in [0, 36], y in [0, 12].
pub fn wildtrack_rig() -> Vec<Camera> {
    rig_from_poses(&[
        ([-6.0, -5.0, 9.0], [10.0, 6.0, 0.0]),
        ([18.0, -9.0, 9.0], [18.0, 6.0, 0.0]),
        ([42.0, -5.0, 9.0], [26.0, 6.0, 0.0]),
        ([42.0, 17.0, 9.0], [26.0, 6.0, 0.0]),
        ([18.0, 21.0, 9.0], [18.0, 6.0, 0.0]),
        ([-6.0, 17.0, 9.0], [10.0, 6.0, 0.0]),
        ([-12.0, 6.0, 9.0], [14.0, 6.0, 0.0]),
    ])
}

/// Six 1920x1080 cameras around x in [0, 25], y in [0, 16].
pub fn multiviewx_rig() -> Vec<Camera> {
    rig_from_poses(&[
        ([-6.0, -6.0, 10.0], [9.0, 7.0, 0.0]),
        ([12.5, -10.0, 10.0], [12.5, 8.0, 0.0]),
        ([31.0, -6.0, 10.0], [16.0, 7.0, 0.0]),
        ([31.0, 22.0, 10.0], [16.0, 9.0, 0.0]),
        ([12.5, 26.0, 10.0], [12.5, 8.0, 0.0]),
        ([-6.0, 22.0, 10.0], [9.0, 9.0, 0.0]),
    ])
}

/// An agent's trajectory over its lifespan.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: u64,
    pub radius: f64,
    pub height: f64,
    pub first_frame: u64,
    pub positions: Vec<(f64, f64)>,
}

impl Agent {
    pub fn position_at(&self, frame: u64) -> Option<(f64, f64)> {
        let k = frame.checked_sub(self.first_frame)?;
        self.positions.get(k as usize).copied()
    }
}

/// Pose of one agent in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentPose {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleFrame {
    pub frame: u64,
    /// One map per camera, in rig order.
    pub features: Vec<FeatureMap>,
    /// Agents inside the grid, in config order.
    pub agents: Vec<AgentPose>,
    /// `visibility[camera][agent]`.
    pub visibility: Vec<Vec<bool>>,
}

impl OracleFrame {
    pub fn ground_truth(&self) -> Vec<GtRecord> {
        self.agents.iter().map(|a| GtRecord { frame: self.frame, id: a.id, x: a.x, y: a.y }).collect()
    }
}

const MOTION_STREAM: u64 = 1 << 62;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream-separated seed for rendering `camera` in `frame`.
pub fn render_stream(frame: u64, camera_index: usize) -> u64 {
    (frame << 16) | camera_index as u64
}

fn inside(grid: &BevGrid, x: f64, y: f64) -> bool {
    let (w, h) = grid.extent();
    x >= grid.origin.0 && y >= grid.origin.1 && x < grid.origin.0 + w && y < grid.origin.1 + h
}

/// Trajectories of all agents. An agent is removed for good the first time
/// it leaves the grid.
pub fn simulate_agents(config: &SceneConfig) -> Result<Vec<Agent>, SimError> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.agents.len());
    for (k, spec) in config.agents.iter().enumerate() {
        let mut rng = stream_rng(config.seed, MOTION_STREAM | k as u64);
        let jitter = Normal::new(0.0, spec.noise).map_err(|e| SimError::Config(e.to_string()))?;
        let mut positions = Vec::new();
        for f in spec.start_frame..config.frames {
            let [x, y] = spec.motion.position(f - spec.start_frame);
            let (x, y) = if spec.noise > 0.0 { (x + jitter.sample(&mut rng), y + jitter.sample(&mut rng)) } else { (x, y) };
            if !inside(&config.grid, x, y) {
                break;
            }
            positions.push((x, y));
        }
        out.push(Agent { id: spec.id, radius: spec.radius, height: spec.height, first_frame: spec.start_frame, positions });
    }
    Ok(out)
}

/// True when `other`'s cylinder cuts the segment from `eye` to `target`
/// strictly before reaching `target`.
pub fn occludes(eye: Vector3<f64>, target: Vector3<f64>, other: &AgentPose) -> bool {
    let d = target - eye;
    // horizontal: |e_xy + t d_xy - c|^2 <= r^2
    let (ex, ey) = (eye.x - other.x, eye.y - other.y);
    let a = d.x * d.x + d.y * d.y;
    let b = 2.0 * (ex * d.x + ey * d.y);
    let c = ex * ex + ey * ey - other.radius * other.radius;
    let (mut lo, mut hi) = if a < 1e-15 {
        if c > 0.0 {
            return false;
        }
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return false;
        }
        let s = disc.sqrt();
        ((-b - s) / (2.0 * a), (-b + s) / (2.0 * a))
    };
    // vertical: 0 <= e_z + t d_z <= height
    if d.z.abs() < 1e-15 {
        if eye.z < 0.0 || eye.z > other.height {
            return false;
        }
    } else {
        let (t0, t1) = ((0.0 - eye.z) / d.z, (other.height - eye.z) / d.z);
        lo = lo.max(t0.min(t1));
        hi = hi.min(t0.max(t1));
    }
    lo = lo.max(0.0);
    lo <= hi && lo < 1.0
}

/// Rendered point of an agent.
pub fn render_point(agent: &AgentPose, render: &RenderConfig) -> WorldPoint {
    WorldPoint::new(agent.x, agent.y, agent.height * render.center_height_fraction)
}

/// Oracle features for one camera: a Gaussian blob in channel 0 at the
/// projection of each visible agent, blobs combined by max, plus seeded
/// pixel noise. Returns the map and per-agent visibility flags.
pub fn render_oracle_features(agents: &[AgentPose], camera: &Camera, render: &RenderConfig, rng: &mut ChaCha8Rng) -> (FeatureMap, Vec<bool>) {
    let fcam = camera.downsampled(render.downsample);
    let (w, h) = (fcam.intrinsics.width as usize, fcam.intrinsics.height as usize);
    let mut map = FeatureMap::zeros(1, h, w);
    let eye = camera.center();
    let mut visible = Vec::with_capacity(agents.len());
    for (k, agent) in agents.iter().enumerate() {
        let p = render_point(agent, render);
        let Projection::Image(ip) = fcam.project(p) else {
            visible.push(false);
            continue;
        };
        let blocked = agents.iter().enumerate().any(|(m, other)| m != k && occludes(eye, p.to_vector(), other));
        let vis = fcam.in_image(ip.u, ip.v) && !blocked;
        visible.push(vis);
        if !vis {
            continue;
        }
        let depth = ip.depth.expect("projection carries depth");
        let su = fcam.intrinsics.fx * render.blob_sigma / depth;
        let sv = fcam.intrinsics.fy * render.blob_sigma / depth;
        let (ru, rv) = ((3.0 * su).ceil() + 1.0, (3.0 * sv).ceil() + 1.0);
        let c0 = (ip.u - ru).floor().max(0.0) as usize;
        let c1 = ((ip.u + ru).ceil().max(0.0) as usize).min(w);
        let r0 = (ip.v - rv).floor().max(0.0) as usize;
        let r1 = ((ip.v + rv).ceil().max(0.0) as usize).min(h);
        let ch = map.channel_mut(0);
        for r in r0..r1 {
            let dv = (r as f64 + 0.5 - ip.v) / sv;
            for c in c0..c1 {
                let du = (c as f64 + 0.5 - ip.u) / su;
                let val = render.amplitude * (-0.5 * (du * du + dv * dv)).exp() as f32;
                let px = &mut ch[r * w + c];
                *px = px.max(val);
            }
        }
    }
    if render.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, render.noise_sigma).expect("validated sigma");
        for px in map.data_mut() {
            *px += normal.sample(rng) as f32;
        }
    }
    (map, visible)
}

/// Agents inside the grid at `frame`, in config order.
pub fn poses_at(agents: &[Agent], frame: u64) -> Vec<AgentPose> {
    agents
        .iter()
        .filter_map(|a| a.position_at(frame).map(|(x, y)| AgentPose { id: a.id, x, y, radius: a.radius, height: a.height }))
        .collect()
}

pub fn render_frame(config: &SceneConfig, cameras: &[Camera], agents: &[Agent], frame: u64) -> OracleFrame {
    let poses = poses_at(agents, frame);
    let mut features = Vec::with_capacity(cameras.len());
    let mut visibility = Vec::with_capacity(cameras.len());
    for (ci, cam) in cameras.iter().enumerate() {
        let mut rng = stream_rng(config.seed, render_stream(frame, ci));
        let (map, vis) = render_oracle_features(&poses, cam, &config.render, &mut rng);
        features.push(map);
        visibility.push(vis);
    }
    OracleFrame { frame, features, agents: poses, visibility }
}

/// The full sequence, frames `0..config.frames`.
pub fn simulate(config: &SceneConfig) -> Result<Vec<OracleFrame>, SimError> {
    let cameras = config.cameras()?;
    let agents = simulate_agents(config)?;
    Ok((0..config.frames).map(|f| render_frame(config, &cameras, &agents, f)).collect())
}

/// Index of an exported sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub frames: u64,
    pub camera_ids: Vec<usize>,
    pub downsample: u32,
    pub grid: BevGrid,
    pub seed: u64,
    pub fps: f64,
    pub calibration: String,
    pub ground_truth: String,
    pub features_dir: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const GROUND_TRUTH_FILE: &str = "gt.csv";
pub const FEATURES_DIR: &str = "features";

pub fn feature_file_name(frame: u64, camera_id: usize) -> String {
    format!("{frame:06}_cam{camera_id}.bin")
}

/// Simulates and writes calibration, ground truth, per-frame feature maps
/// and a manifest into `out_dir`.
pub fn export_scene(config: &SceneConfig, out_dir: &Path) -> Result<Manifest, SimError> {
    let cameras = config.cameras()?;
    let agents = simulate_agents(config)?;
    let feat_dir = out_dir.join(FEATURES_DIR);
    fs::create_dir_all(&feat_dir).map_err(io_err(&feat_dir))?;

    let calib = out_dir.join(CALIBRATION_FILE);
    fs::write(&calib, geometry::rig_to_json(&cameras)).map_err(io_err(&calib))?;

    let mut gt = Vec::new();
    for f in 0..config.frames {
        let frame = render_frame(config, &cameras, &agents, f);
        gt.extend(frame.ground_truth());
        for (cam, map) in cameras.iter().zip(&frame.features) {
            let path = feat_dir.join(feature_file_name(f, cam.id));
            let file = File::create(&path).map_err(io_err(&path))?;
            map.write_to(BufWriter::new(file))?;
        }
    }
    let gt_path = out_dir.join(GROUND_TRUTH_FILE);
    let file = File::create(&gt_path).map_err(io_err(&gt_path))?;
    metrics::write_ground_truth_csv(BufWriter::new(file), &gt)?;

    let manifest = Manifest {
        frames: config.frames,
        camera_ids: cameras.iter().map(|c| c.id).collect(),
        downsample: config.render.downsample,
        grid: config.grid,
        seed: config.seed,
        fps: config.fps,
        calibration: CALIBRATION_FILE.into(),
        ground_truth: GROUND_TRUTH_FILE.into(),
        features_dir: FEATURES_DIR.into(),
    };
    let mpath = out_dir.join(MANIFEST_FILE);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&mpath))?;
    Ok(manifest)
}

/// A sequence on disk, with frames loaded on demand.
#[derive(Debug, Clone)]
pub struct SceneDir {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub cameras: Vec<Camera>,
}

impl SceneDir {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, SimError> {
        let root = root.as_ref().to_path_buf();
        let mpath = root.join(MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&mpath).map_err(io_err(&mpath))?)?;
        let cpath = root.join(&manifest.calibration);
        let cameras = geometry::rig_from_json(&fs::read_to_string(&cpath).map_err(io_err(&cpath))?)?;
        let ids: Vec<usize> = cameras.iter().map(|c| c.id).collect();
        if ids != manifest.camera_ids {
            return Err(SimError::Config(format!("calibration cameras {ids:?} do not match manifest {:?}", manifest.camera_ids)));
        }
        Ok(Self { root, manifest, cameras })
    }

    pub fn ground_truth(&self) -> Result<Vec<GtRecord>, SimError> {
        let path = self.root.join(&self.manifest.ground_truth);
        let file = File::open(&path).map_err(io_err(&path))?;
        Ok(metrics::read_ground_truth_csv(BufReader::new(file))?)
    }

    pub fn feature_path(&self, frame: u64, camera_id: usize) -> PathBuf {
        self.root.join(&self.manifest.features_dir).join(feature_file_name(frame, camera_id))
    }

    /// Feature maps of one frame in rig order.
    pub fn features(&self, frame: u64) -> Result<Vec<FeatureMap>, SimError> {
        self.cameras
            .iter()
            .map(|c| {
                let path = self.feature_path(frame, c.id);
                let file = File::open(&path).map_err(io_err(&path))?;
                FeatureMap::read_from(BufReader::new(file)).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
            })
            .collect()
    }
}
