//! Online ground-plane tracker: constant-velocity Kalman filter per track,
//! association cost fusing the motion-head cue with the Kalman prediction,
//! Hungarian assignment, and a tentative/confirmed/lost lifecycle in which
//! lost tracks stay associable until deleted.

use crate::assignment::{self, CostMatrix};
use crate::heads::Detection;
use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, thiserror::Error)]
pub enum TrackerError {
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error("track csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Maximum association distance in meters.
    pub gate: f64,
    pub birth_min_score: f64,
    pub confirm_hits: u32,
    pub max_misses: u32,
    /// Diagonal of the process noise for (x, y, vx, vy).
    pub process_noise: [f64; 4],
    /// Diagonal of the measurement noise for (x, y).
    pub measurement_noise: [f64; 2],
    /// Velocity variance of a newborn track.
    pub birth_velocity_var: f64,
    /// Use the detection's previous-frame position in the association cost.
    pub use_motion: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            gate: 1.0,
            birth_min_score: 0.5,
            confirm_hits: 2,
            max_misses: 5,
            process_noise: [0.1, 0.1, 0.5, 0.5],
            measurement_noise: [0.05, 0.05],
            birth_velocity_var: 1.0,
            use_motion: true,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if !(self.gate > 0.0) {
            return Err(TrackerError::InvalidConfig(format!("gate must be > 0, got {}", self.gate)));
        }
        if self.confirm_hits == 0 {
            return Err(TrackerError::InvalidConfig("confirm_hits must be >= 1".into()));
        }
        if self.max_misses == 0 {
            return Err(TrackerError::InvalidConfig("max_misses must be >= 1".into()));
        }
        if self.process_noise.iter().chain(&self.measurement_noise).any(|v| !(*v > 0.0)) || !(self.birth_velocity_var > 0.0) {
            return Err(TrackerError::InvalidConfig("noise variances must be > 0".into()));
        }
        Ok(())
    }
}

/// State `(x, y, vx, vy)` in meters and meters/frame with covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl KalmanState {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64, cov: Matrix4<f64>) -> Self {
        Self { mean: Vector4::new(x, y, vx, vy), cov }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.mean.x, self.mean.y)
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean.z, self.mean.w)
    }
}

fn symmetrize(m: Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Constant-velocity step of one frame.
pub fn kalman_predict(state: &KalmanState, process_noise: &[f64; 4]) -> KalmanState {
    let f = Matrix4::new(
        1.0, 0.0, 1.0, 0.0, //
        0.0, 1.0, 0.0, 1.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    );
    let q = Matrix4::from_diagonal(&Vector4::from(*process_noise));
    KalmanState { mean: f * state.mean, cov: symmetrize(f * state.cov * f.transpose() + q) }
}

/// Position-only measurement update (Joseph form).
pub fn kalman_update(state: &KalmanState, z: (f64, f64), measurement_noise: &[f64; 2]) -> KalmanState {
    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    let r = Matrix2::from_diagonal(&Vector2::from(*measurement_noise));
    let s = h * state.cov * h.transpose() + r;
    let s_inv = s.try_inverse().expect("innovation covariance is positive definite");
    let gain = state.cov * h.transpose() * s_inv;
    let innovation = Vector2::new(z.0, z.1) - h * state.mean;
    let i_kh = Matrix4::identity() - gain * h;
    KalmanState {
        mean: state.mean + gain * innovation,
        cov: symmetrize(i_kh * state.cov * i_kh.transpose() + gain * r * gain.transpose()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub kalman: KalmanState,
    /// Position at the end of the previous frame, before this frame's predict.
    pub last_position: (f64, f64),
    pub age: u32,
    pub hits: u32,
    pub misses: u32,
    pub status: TrackStatus,
    pub was_confirmed: bool,
    pub last_score: f64,
}

impl Track {
    pub fn position(&self) -> (f64, f64) {
        self.kalman.position()
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Association cost between an already-predicted track and a detection.
pub fn association_cost(track: &Track, det: &Detection, use_motion: bool) -> f64 {
    let kalman = dist(det.position(), track.position());
    if use_motion {
        kalman.min(dist(det.prev_position(), track.last_position))
    } else {
        kalman
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// `(track index, detection index)`, sorted by track index.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Gated minimum-cost assignment. `tracks` must already be predicted to the
/// detection frame; rows are ordered by track id, columns by detection
/// index.
pub fn associate(tracks: &[Track], detections: &[Detection], config: &TrackerConfig) -> Association {
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by_key(|&t| tracks[t].id);
    let costs = CostMatrix::from_fn(order.len(), detections.len(), |r, c| {
        let cost = association_cost(&tracks[order[r]], &detections[c], config.use_motion);
        (cost <= config.gate).then_some(cost)
    });
    let mut matches: Vec<(usize, usize)> = assignment::solve(&costs).into_iter().map(|(r, c)| (order[r], c)).collect();
    matches.sort_unstable();
    let mut track_used = vec![false; tracks.len()];
    let mut det_used = vec![false; detections.len()];
    for &(t, d) in &matches {
        track_used[t] = true;
        det_used[d] = true;
    }
    Association {
        matches,
        unmatched_tracks: (0..tracks.len()).filter(|t| !track_used[*t]).collect(),
        unmatched_detections: (0..detections.len()).filter(|d| !det_used[*d]).collect(),
    }
}

/// One emitted track position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame: u64,
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self { config, tracks: Vec::new(), next_id: 1 })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Live tracks in id order.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Advances one frame and returns the confirmed tracks matched in it.
    pub fn step(&mut self, frame: u64, detections: &[Detection]) -> Vec<TrackRecord> {
        let cfg = self.config.clone();
        for t in &mut self.tracks {
            t.last_position = t.position();
            t.kalman = kalman_predict(&t.kalman, &cfg.process_noise);
            t.age += 1;
        }
        let assoc = associate(&self.tracks, detections, &cfg);
        let mut matched = vec![false; self.tracks.len()];
        for &(ti, di) in &assoc.matches {
            let det = &detections[di];
            let t = &mut self.tracks[ti];
            t.kalman = kalman_update(&t.kalman, det.position(), &cfg.measurement_noise);
            t.hits += 1;
            t.misses = 0;
            t.last_score = det.score;
            if t.was_confirmed || t.hits >= cfg.confirm_hits {
                t.status = TrackStatus::Confirmed;
                t.was_confirmed = true;
            } else {
                t.status = TrackStatus::Tentative;
            }
            matched[ti] = true;
        }
        for &ti in &assoc.unmatched_tracks {
            let t = &mut self.tracks[ti];
            t.misses += 1;
            t.status = TrackStatus::Lost;
        }

        let mut records: Vec<TrackRecord> = self
            .tracks
            .iter()
            .zip(&matched)
            .filter(|(t, m)| **m && t.status == TrackStatus::Confirmed)
            .map(|(t, _)| TrackRecord { frame, id: t.id, x: t.kalman.mean.x, y: t.kalman.mean.y, score: t.last_score })
            .collect();
        self.tracks.retain(|t| t.misses < cfg.max_misses);

        for &di in &assoc.unmatched_detections {
            let det = &detections[di];
            if det.score < cfg.birth_min_score {
                continue;
            }
            let (vx, vy) = if cfg.use_motion { (det.x - det.prev_x, det.y - det.prev_y) } else { (0.0, 0.0) };
            let [rx, ry] = cfg.measurement_noise;
            let cov = Matrix4::from_diagonal(&Vector4::new(rx, ry, cfg.birth_velocity_var, cfg.birth_velocity_var));
            let confirmed = cfg.confirm_hits <= 1;
            let track = Track {
                id: self.next_id,
                kalman: KalmanState::new(det.x, det.y, vx, vy, cov),
                last_position: det.position(),
                age: 0,
                hits: 1,
                misses: 0,
                status: if confirmed { TrackStatus::Confirmed } else { TrackStatus::Tentative },
                was_confirmed: confirmed,
                last_score: det.score,
            };
            self.next_id += 1;
            if confirmed {
                records.push(TrackRecord { frame, id: track.id, x: det.x, y: det.y, score: det.score });
            }
            self.tracks.push(track);
        }
        records.sort_by_key(|r| r.id);
        records
    }
}

/// `frame,id,x,y,score` with a header row.
pub fn write_tracks_csv(w: impl Write, records: &[TrackRecord]) -> Result<(), TrackerError> {
    let mut wr = csv::Writer::from_writer(w);
    if records.is_empty() {
        wr.write_record(["frame", "id", "x", "y", "score"])?;
    }
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_tracks_csv(r: impl Read) -> Result<Vec<TrackRecord>, TrackerError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    rd.deserialize().map(|row| row.map_err(TrackerError::from)).collect()
}
