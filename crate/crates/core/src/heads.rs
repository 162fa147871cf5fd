//! Center heatmap targets, peak decoding into ground detections, and the
//! three head losses with analytic gradients.

use crate::bev::{BevGrid, FeatureMap};
use crate::geometry::WorldPoint;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Probabilities are clamped into `[EPS, 1 - EPS]` inside the focal loss.
pub const FOCAL_EPS: f64 = 1e-6;

/// Default target spread for `encode_heatmap`, in cells.
pub const DEFAULT_SIGMA_CELLS: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum HeadError {
    #[error("loss mask selects no cells")]
    EmptyMask,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("detection csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ground-plane center heatmap, values in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterHeatmap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl CenterHeatmap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self, HeadError> {
        if data.len() != height * width {
            return Err(HeadError::ShapeMismatch(format!("{} values for {height}x{width}", data.len())));
        }
        Ok(Self { height, width, data })
    }

    /// Channel `c` of a map, clamped into [0, 1].
    pub fn from_feature_channel(map: &FeatureMap, c: usize) -> Self {
        Self {
            height: map.height(),
            width: map.width(),
            data: map.channel(c).iter().map(|v| (*v as f64).clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap::from_vec(1, self.height, self.width, self.data.iter().map(|v| *v as f32).collect()).expect("matching shape")
    }
}

/// Two-component per-cell field in cell units: component 0 along x
/// (columns), component 1 along y (rows). Used for sub-cell offsets and for
/// the displacement to the previous-frame position.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

pub type OffsetField = VectorField;
pub type MotionField = VectorField;

impl VectorField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; 2 * height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self, HeadError> {
        if data.len() != 2 * height * width {
            return Err(HeadError::ShapeMismatch(format!("{} values for 2x{height}x{width}", data.len())));
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> (f64, f64) {
        let plane = self.height * self.width;
        let idx = i * self.width + j;
        (self.data[idx], self.data[plane + idx])
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: (f64, f64)) {
        let plane = self.height * self.width;
        let idx = i * self.width + j;
        self.data[idx] = value.0;
        self.data[plane + idx] = value.1;
    }
}

/// A decoded ground detection, positions in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub prev_x: f64,
    pub prev_y: f64,
}

impl Detection {
    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn prev_position(&self) -> (f64, f64) {
        (self.prev_x, self.prev_y)
    }
}

/// Gaussian splat target with `sigma` in cells. Returns the heatmap and the number of centers
/// skipped for falling outside the grid.
pub fn encode_heatmap(centers: &[WorldPoint], grid: &BevGrid, sigma: f64) -> Result<(CenterHeatmap, usize), HeadError> {
    if !(sigma > 0.0) {
        return Err(HeadError::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    let mut heat = CenterHeatmap::zeros(grid.height, grid.width);
    let radius = (3.0 * sigma).ceil() as i64;
    let mut skipped = 0;
    for c in centers {
        let Ok((i0, j0)) = grid.world_to_cell(*c) else {
            skipped += 1;
            continue;
        };
        let (i0, j0) = (i0 as i64, j0 as i64);
        for i in (i0 - radius).max(0)..=(i0 + radius).min(grid.height as i64 - 1) {
            for j in (j0 - radius).max(0)..=(j0 + radius).min(grid.width as i64 - 1) {
                let d2 = ((i - i0).pow(2) + (j - j0).pow(2)) as f64;
                let v = (-d2 / (2.0 * sigma * sigma)).exp();
                let cell = &mut heat.data[i as usize * grid.width + j as usize];
                *cell = cell.max(v);
            }
        }
    }
    Ok((heat, skipped))
}

/// Cells that are 3x3 local maxima with score >= `threshold`, strongest
/// first, at most `max_k`. Plateaus resolve toward the smaller (i, j).
pub fn find_peaks(heatmap: &CenterHeatmap, threshold: f64, max_k: usize) -> Vec<(usize, usize, f64)> {
    let (h, w) = (heatmap.height, heatmap.width);
    let mut peaks = Vec::new();
    for i in 0..h {
        for j in 0..w {
            let s = heatmap.get(i, j);
            if !(s >= threshold) {
                continue;
            }
            let mut is_peak = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= h as i64 || nj >= w as i64 {
                        continue;
                    }
                    let n = heatmap.get(ni as usize, nj as usize);
                    let earlier = (ni, nj) < (i as i64, j as i64);
                    if n > s || (earlier && n == s) {
                        is_peak = false;
                        break 'nb;
                    }
                }
            }
            if is_peak {
                peaks.push((i, j, s));
            }
        }
    }
    peaks.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    peaks.truncate(max_k);
    peaks
}

/// Peaks to ground detections: `position = cell center + offset * cell`,
/// `previous = position + motion * cell`.
pub fn decode_detections(
    heatmap: &CenterHeatmap,
    offsets: &OffsetField,
    motion: &MotionField,
    grid: &BevGrid,
    threshold: f64,
    max_k: usize,
) -> Result<Vec<Detection>, HeadError> {
    if !(0.0..=f64::INFINITY).contains(&threshold) {
        return Err(HeadError::InvalidParameter(format!("threshold {threshold}")));
    }
    let dims = (grid.height, grid.width);
    for (name, shape) in [
        ("heatmap", (heatmap.height, heatmap.width)),
        ("offsets", (offsets.height, offsets.width)),
        ("motion", (motion.height, motion.width)),
    ] {
        if shape != dims {
            return Err(HeadError::ShapeMismatch(format!("{name} is {shape:?}, grid is {dims:?}")));
        }
    }
    Ok(find_peaks(heatmap, threshold, max_k)
        .into_iter()
        .map(|(i, j, score)| {
            let c = grid.cell_center(i, j);
            let (ox, oy) = offsets.get(i, j);
            let (mx, my) = motion.get(i, j);
            let x = c.x + ox * grid.cell_size;
            let y = c.y + oy * grid.cell_size;
            Detection { x, y, score, prev_x: x + mx * grid.cell_size, prev_y: y + my * grid.cell_size }
        })
        .collect())
}

/// Scalar loss with its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Penalty-reduced focal loss over a center heatmap, normalized by the
/// number of positive cells (target == 1), floored at one.
pub fn focal_loss(pred: &CenterHeatmap, target: &CenterHeatmap, alpha: f64, beta: f64) -> Result<LossOutput, HeadError> {
    if pred.data.len() != target.data.len() {
        return Err(HeadError::ShapeMismatch(format!("pred {} vs target {}", pred.data.len(), target.data.len())));
    }
    let positives = target.data.iter().filter(|t| **t == 1.0).count().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.data.len()];
    for (k, (&p_raw, &t)) in pred.data.iter().zip(&target.data).enumerate() {
        let clamped = !(FOCAL_EPS..=1.0 - FOCAL_EPS).contains(&p_raw);
        let p = p_raw.clamp(FOCAL_EPS, 1.0 - FOCAL_EPS);
        let (l, g) = if t == 1.0 {
            let q = 1.0 - p;
            (-q.powf(alpha) * p.ln(), alpha * q.powf(alpha - 1.0) * p.ln() - q.powf(alpha) / p)
        } else {
            let neg = (1.0 - t).powf(beta);
            let lq = (1.0 - p).ln();
            (-neg * p.powf(alpha) * lq, -neg * (alpha * p.powf(alpha - 1.0) * lq - p.powf(alpha) / (1.0 - p)))
        };
        loss += l;
        grad[k] = if clamped { 0.0 } else { g / positives };
    }
    Ok(LossOutput { loss: loss / positives, grad })
}

fn check_masked(pred: &VectorField, target: &VectorField, mask: &[bool]) -> Result<usize, HeadError> {
    if pred.data.len() != target.data.len() || mask.len() * 2 != pred.data.len() {
        return Err(HeadError::ShapeMismatch(format!(
            "pred {}, target {}, mask {}",
            pred.data.len(),
            target.data.len(),
            mask.len()
        )));
    }
    match mask.iter().filter(|m| **m).count() {
        0 => Err(HeadError::EmptyMask),
        n => Ok(n),
    }
}

fn masked_loss(pred: &VectorField, target: &VectorField, mask: &[bool], f: impl Fn(f64) -> (f64, f64)) -> Result<LossOutput, HeadError> {
    let cells = check_masked(pred, target, mask)?;
    let denom = 2.0 * cells as f64;
    let plane = mask.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.data.len()];
    for comp in 0..2 {
        for (idx, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
            let k = comp * plane + idx;
            let (l, g) = f(pred.data[k] - target.data[k]);
            loss += l;
            grad[k] = g / denom;
        }
    }
    Ok(LossOutput { loss: loss / denom, grad })
}

/// Mean absolute error over masked cells and both components. The
/// subgradient at zero residual is 0.
pub fn l1_offset_loss(pred: &OffsetField, target: &OffsetField, mask: &[bool]) -> Result<LossOutput, HeadError> {
    masked_loss(pred, target, mask, |r| {
        let g = if r > 0.0 {
            1.0
        } else if r < 0.0 {
            -1.0
        } else {
            0.0
        };
        (r.abs(), g)
    })
}

/// Huber-form smooth L1 averaged over masked components.
pub fn smooth_l1_loss(pred: &MotionField, target: &MotionField, mask: &[bool], delta: f64) -> Result<LossOutput, HeadError> {
    if !(delta > 0.0) {
        return Err(HeadError::InvalidParameter(format!("delta must be > 0, got {delta}")));
    }
    masked_loss(pred, target, mask, |r| {
        if r.abs() < delta {
            (0.5 * r * r / delta, r / delta)
        } else {
            (r.abs() - 0.5 * delta, r.signum())
        }
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRow {
    frame: u64,
    x: f64,
    y: f64,
    score: f64,
    prev_x: f64,
    prev_y: f64,
}

/// `frame,x,y,score,prev_x,prev_y` with a header row.
pub fn write_detections_csv(w: impl Write, frames: &[(u64, Vec<Detection>)]) -> Result<(), HeadError> {
    let mut wr = csv::Writer::from_writer(w);
    for (frame, dets) in frames {
        for d in dets {
            wr.serialize(DetectionRow { frame: *frame, x: d.x, y: d.y, score: d.score, prev_x: d.prev_x, prev_y: d.prev_y })?;
        }
    }
    if frames.iter().all(|(_, d)| d.is_empty()) {
        wr.write_record(["frame", "x", "y", "score", "prev_x", "prev_y"])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_detections_csv(r: impl Read) -> Result<Vec<(u64, Detection)>, HeadError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        let row: DetectionRow = row?;
        out.push((row.frame, Detection { x: row.x, y: row.y, score: row.score, prev_x: row.prev_x, prev_y: row.prev_y }));
    }
    Ok(out)
}
