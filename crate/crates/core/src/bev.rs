//! The common bird's-eye-view frame: grid definition, dense feature
//! containers, vertical reduction and the one-frame temporal history.

use crate::geometry::WorldPoint;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, thiserror::Error)]
pub enum BevError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("cell ({i}, {j}) outside {rows}x{cols} grid")]
    OutOfGrid { i: i64, j: i64, rows: usize, cols: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("frame index {got} must be greater than {last}")]
    NonIncreasingFrame { got: u64, last: u64 },
    #[error("malformed feature map: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned ground grid. Row `i` runs along world y, column `j` along
/// world x; cell (0, 0) has its lower corner at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevGrid {
    pub origin: (f64, f64),
    pub cell_size: f64,
    /// Columns (x direction).
    pub width: usize,
    /// Rows (y direction).
    pub height: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub z_bins: usize,
}

impl BevGrid {
    pub fn new(origin: (f64, f64), cell_size: f64, width: usize, height: usize, z_range: (f64, f64), z_bins: usize) -> Result<Self, BevError> {
        let g = Self { origin, cell_size, width, height, z_min: z_range.0, z_max: z_range.1, z_bins };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), BevError> {
        if !(self.cell_size > 0.0) {
            return Err(BevError::InvalidGrid(format!("cell_size {} must be > 0", self.cell_size)));
        }
        if self.width == 0 || self.height == 0 || self.z_bins == 0 {
            return Err(BevError::InvalidGrid("width, height and z_bins must be >= 1".into()));
        }
        if !(self.z_max > self.z_min) {
            return Err(BevError::InvalidGrid(format!("z range [{}, {}] is empty", self.z_min, self.z_max)));
        }
        if !(self.origin.0.is_finite() && self.origin.1.is_finite()) {
            return Err(BevError::InvalidGrid("origin not finite".into()));
        }
        Ok(())
    }

    /// 12 x 36 m at 2.5 cm: 480 rows by 1440 columns.
    pub fn wildtrack() -> Self {
        Self { origin: (0.0, 0.0), cell_size: 0.025, width: 1440, height: 480, z_min: 0.0, z_max: 2.0, z_bins: 8 }
    }

    /// 16 x 25 m at 2.5 cm: 640 rows by 1000 columns.
    pub fn multiviewx() -> Self {
        Self { origin: (0.0, 0.0), cell_size: 0.025, width: 1000, height: 640, z_min: 0.0, z_max: 2.0, z_bins: 8 }
    }

    /// Same extent and vertical layout with a different cell size.
    pub fn with_cell_size(&self, cell_size: f64) -> Self {
        let w = (self.width as f64 * self.cell_size / cell_size).round().max(1.0) as usize;
        let h = (self.height as f64 * self.cell_size / cell_size).round().max(1.0) as usize;
        Self { cell_size, width: w, height: h, ..*self }
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.width as f64 * self.cell_size, self.height as f64 * self.cell_size)
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn voxels(&self) -> usize {
        self.cells() * self.z_bins
    }

    pub fn z_step(&self) -> f64 {
        (self.z_max - self.z_min) / self.z_bins as f64
    }

    pub fn z_center(&self, k: usize) -> f64 {
        self.z_min + (k as f64 + 0.5) * self.z_step()
    }

    pub fn cell_to_world(&self, i: usize, j: usize) -> Result<WorldPoint, BevError> {
        if i >= self.height || j >= self.width {
            return Err(BevError::OutOfGrid { i: i as i64, j: j as i64, rows: self.height, cols: self.width });
        }
        Ok(self.cell_center(i, j))
    }

    /// Cell center without bounds checking.
    pub fn cell_center(&self, i: usize, j: usize) -> WorldPoint {
        WorldPoint::ground(
            self.origin.0 + (j as f64 + 0.5) * self.cell_size,
            self.origin.1 + (i as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn world_to_cell(&self, p: WorldPoint) -> Result<(usize, usize), BevError> {
        let (i, j) = self.world_to_cell_unchecked(p.x, p.y);
        if i < 0 || j < 0 || i >= self.height as i64 || j >= self.width as i64 {
            return Err(BevError::OutOfGrid { i, j, rows: self.height, cols: self.width });
        }
        Ok((i as usize, j as usize))
    }

    pub(crate) fn world_to_cell_unchecked(&self, x: f64, y: f64) -> (i64, i64) {
        let j = ((x - self.origin.0) / self.cell_size).floor();
        let i = ((y - self.origin.1) / self.cell_size).floor();
        // saturate NaN/inf to an out-of-range index
        let clamp = |v: f64| if v.is_finite() { v.clamp(-1e15, 1e15) as i64 } else { -1 };
        (clamp(i), clamp(j))
    }

    /// Voxel `(k, i, j)` containing a 3D point, if any.
    pub fn world_to_voxel(&self, x: f64, y: f64, z: f64) -> Option<(usize, usize, usize)> {
        let (i, j) = self.world_to_cell_unchecked(x, y);
        let k = ((z - self.z_min) / self.z_step()).floor();
        if i < 0 || j < 0 || i >= self.height as i64 || j >= self.width as i64 || !(k >= 0.0 && k < self.z_bins as f64) {
            return None;
        }
        Some((k as usize, i as usize, j as usize))
    }
}

/// Dense `channels x height x width` map, row-major in (channel, row, col).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self, BevError> {
        if data.len() != channels * height * width {
            return Err(BevError::ShapeMismatch(format!(
                "{} values for a {channels}x{height}x{width} map",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(BevError::Malformed(format!("non-finite value at index {pos}")));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.height + i) * self.width + j
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f32 {
        self.data[self.index(c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f32) {
        let idx = self.index(c, i, j);
        self.data[idx] = v;
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Writes the little-endian `{C, H, W}` u32 header followed by f32 data.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), BevError> {
        let mut buf = Vec::with_capacity(12 + 4 * self.data.len());
        for dim in [self.channels, self.height, self.width] {
            let dim = u32::try_from(dim).map_err(|_| BevError::Malformed(format!("dimension {dim} exceeds u32")))?;
            buf.extend_from_slice(&dim.to_le_bytes());
        }
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec");
        out
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, BevError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BevError> {
        if bytes.len() < 12 {
            return Err(BevError::Malformed(format!("{} bytes is shorter than the header", bytes.len())));
        }
        let dim = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap()) as usize;
        let (c, h, w) = (dim(0), dim(1), dim(2));
        let n = c
            .checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .ok_or_else(|| BevError::Malformed("header dimensions overflow".into()))?;
        let body = &bytes[12..];
        if body.len() != 4 * n {
            return Err(BevError::Malformed(format!("expected {} data bytes for {c}x{h}x{w}, found {}", 4 * n, body.len())));
        }
        let data = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        Self::from_vec(c, h, w, data)
    }
}

/// Dense `channels x z_bins x height x width` volume.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    pub(crate) channels: usize,
    pub(crate) z_bins: usize,
    pub(crate) height: usize,
    pub(crate) width: usize,
    pub(crate) data: Vec<f32>,
}

impl VoxelVolume {
    pub fn zeros(channels: usize, grid: &BevGrid) -> Self {
        Self::zeros_with(channels, grid.z_bins, grid.height, grid.width)
    }

    pub fn zeros_with(channels: usize, z_bins: usize, height: usize, width: usize) -> Self {
        Self { channels, z_bins, height, width, data: vec![0.0; channels * z_bins * height * width] }
    }

    pub fn from_vec(channels: usize, z_bins: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self, BevError> {
        if data.len() != channels * z_bins * height * width {
            return Err(BevError::ShapeMismatch(format!(
                "{} values for a {channels}x{z_bins}x{height}x{width} volume",
                data.len()
            )));
        }
        Ok(Self { channels, z_bins, height, width, data })
    }

    /// A ground map viewed as a single-layer volume.
    pub fn from_ground(map: FeatureMap) -> Self {
        let (c, h, w) = map.shape();
        Self { channels: c, z_bins: 1, height: h, width: w, data: map.into_vec() }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn z_bins(&self) -> usize {
        self.z_bins
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.channels, self.z_bins, self.height, self.width)
    }

    /// Voxels per channel.
    pub fn spatial_len(&self) -> usize {
        self.z_bins * self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, c: usize, k: usize, i: usize, j: usize) -> usize {
        ((c * self.z_bins + k) * self.height + i) * self.width + j
    }

    #[inline]
    pub fn get(&self, c: usize, k: usize, i: usize, j: usize) -> f32 {
        self.data[self.index(c, k, i, j)]
    }

    /// `(k, i, j)` of the largest value in channel `c`; first wins on ties.
    pub fn argmax(&self, c: usize) -> (usize, usize, usize) {
        let n = self.spatial_len();
        let slice = &self.data[c * n..(c + 1) * n];
        let mut best = 0;
        for (idx, v) in slice.iter().enumerate() {
            if *v > slice[best] {
                best = idx;
            }
        }
        let plane = self.height * self.width;
        (best / plane, (best % plane) / self.width, best % self.width)
    }

    pub fn matches_grid(&self, grid: &BevGrid) -> bool {
        self.z_bins == grid.z_bins && self.height == grid.height && self.width == grid.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Max,
}

/// Collapses the vertical axis, per channel and cell.
pub fn reduce_vertical(v: &VoxelVolume, mode: Reduction) -> FeatureMap {
    let mut out = FeatureMap::zeros(v.channels, v.height, v.width);
    let plane = v.height * v.width;
    for c in 0..v.channels {
        let dst = out.channel_mut(c);
        let first = v.index(c, 0, 0, 0);
        dst.copy_from_slice(&v.data[first..first + plane]);
        for k in 1..v.z_bins {
            let start = v.index(c, k, 0, 0);
            let layer = &v.data[start..start + plane];
            match mode {
                // running mean: exact when all layers are equal
                Reduction::Mean => {
                    let n = (k + 1) as f32;
                    dst.iter_mut().zip(layer).for_each(|(d, s)| *d += (s - *d) / n)
                }
                Reduction::Max => dst.iter_mut().zip(layer).for_each(|(d, s)| *d = d.max(*s)),
            }
        }
    }
    out
}

/// Previous decoded BEV maps, oldest first.
#[derive(Debug, Clone)]
pub struct TemporalBuffer {
    capacity: usize,
    history_channels: usize,
    slots: std::collections::VecDeque<(u64, FeatureMap)>,
}

impl TemporalBuffer {
    /// `history_channels` is the width of the zero block used before any
    /// frame has been pushed.
    pub fn new(capacity: usize, history_channels: usize) -> Self {
        Self { capacity: capacity.max(1), history_channels, slots: Default::default() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn history_channels(&self) -> usize {
        self.history_channels
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn latest(&self) -> Option<(u64, &FeatureMap)> {
        self.slots.back().map(|(f, m)| (*f, m))
    }

    pub fn push(&mut self, frame: u64, map: FeatureMap) -> Result<(), BevError> {
        if let Some((last, _)) = self.slots.back() {
            if frame <= *last {
                return Err(BevError::NonIncreasingFrame { got: frame, last: *last });
            }
        }
        if self.slots.len() == self.capacity {
            self.slots.pop_front();
        }
        self.slots.push_back((frame, map));
        Ok(())
    }

    pub fn clear(&mut self) {
        self.slots.clear();
    }
}

/// `[current | previous]` along channels. An empty buffer contributes a zero
/// block of `buffer.history_channels()` channels.
pub fn concat_history(current: &FeatureMap, buffer: &TemporalBuffer) -> Result<FeatureMap, BevError> {
    let (c, h, w) = current.shape();
    let plane = h * w;
    let mut data = Vec::with_capacity(plane * (c + buffer.history_channels.max(1)));
    data.extend_from_slice(current.data());
    let prev_channels = match buffer.latest() {
        Some((_, prev)) => {
            if prev.height() != h || prev.width() != w {
                return Err(BevError::ShapeMismatch(format!(
                    "history is {}x{}, current is {h}x{w}",
                    prev.height(),
                    prev.width()
                )));
            }
            data.extend_from_slice(prev.data());
            prev.channels()
        }
        None => {
            data.resize(data.len() + buffer.history_channels * plane, 0.0);
            buffer.history_channels
        }
    };
    FeatureMap::from_vec(c + prev_channels, h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_grid() -> BevGrid {
        BevGrid::new((0.0, 0.0), 0.025, 40, 30, (0.0, 2.0), 4).unwrap()
    }

    #[test]
    fn cell_center_arithmetic() {
        let p = small_grid().cell_to_world(0, 0).unwrap();
        assert!((p.x - 0.0125).abs() < 1e-15 && (p.y - 0.0125).abs() < 1e-15 && p.z == 0.0);
        assert!(matches!(small_grid().cell_to_world(30, 0), Err(BevError::OutOfGrid { .. })));
    }

    #[test]
    fn default_grids_cover_dataset_extents() {
        let wt = BevGrid::wildtrack();
        assert_eq!((wt.height, wt.width), (480, 1440));
        let (ex, ey) = wt.extent();
        assert!((ex - 36.0).abs() < 1e-9 && (ey - 12.0).abs() < 1e-9);
        let mx = BevGrid::multiviewx();
        assert_eq!((mx.height, mx.width), (640, 1000));
        let (ex, ey) = mx.extent();
        assert!((ex - 25.0).abs() < 1e-9 && (ey - 16.0).abs() < 1e-9);
        let coarse = wt.with_cell_size(0.25);
        assert_eq!((coarse.height, coarse.width), (48, 144));
    }

    #[test]
    fn world_to_cell_boundaries() {
        let g = BevGrid::new((0.0, 0.0), 0.5, 4, 4, (0.0, 1.0), 1).unwrap();
        assert_eq!(g.world_to_cell(WorldPoint::ground(0.0, 0.0)).unwrap(), (0, 0));
        // exactly on the corner shared by four cells: floor picks the larger index
        assert_eq!(g.world_to_cell(WorldPoint::ground(0.5, 1.0)).unwrap(), (2, 1));
        assert!(g.world_to_cell(WorldPoint::ground(-0.01, 0.3)).is_err());
        assert!(g.world_to_cell(WorldPoint::ground(2.0, 0.3)).is_err());
        assert!(g.world_to_cell(WorldPoint::ground(f64::NAN, 0.3)).is_err());
    }

    #[test]
    fn invalid_grids() {
        assert!(BevGrid::new((0.0, 0.0), 0.0, 4, 4, (0.0, 1.0), 1).is_err());
        assert!(BevGrid::new((0.0, 0.0), 1.0, 0, 4, (0.0, 1.0), 1).is_err());
        assert!(BevGrid::new((0.0, 0.0), 1.0, 4, 4, (1.0, 1.0), 1).is_err());
        assert!(BevGrid::new((0.0, 0.0), 1.0, 4, 4, (0.0, 1.0), 0).is_err());
    }

    #[test]
    fn reduce_single_layer_and_two_layers() {
        let v = VoxelVolume::from_vec(1, 1, 1, 2, vec![3.0, -1.0]).unwrap();
        assert_eq!(reduce_vertical(&v, Reduction::Mean).data(), &[3.0, -1.0]);
        assert_eq!(reduce_vertical(&v, Reduction::Max).data(), &[3.0, -1.0]);

        let v = VoxelVolume::from_vec(1, 2, 1, 1, vec![0.0, 2.0]).unwrap();
        assert_eq!(reduce_vertical(&v, Reduction::Mean).data(), &[1.0]);
        assert_eq!(reduce_vertical(&v, Reduction::Max).data(), &[2.0]);

        let v = VoxelVolume::from_vec(2, 3, 2, 2, vec![0.7; 24]).unwrap();
        assert!(reduce_vertical(&v, Reduction::Mean).data().iter().all(|&x| x == 0.7));
        assert!(reduce_vertical(&v, Reduction::Max).data().iter().all(|&x| x == 0.7));
    }

    #[test]
    fn history_first_frame_and_order() {
        let cur = FeatureMap::filled(8, 3, 4, 1.0);
        let mut buf = TemporalBuffer::new(1, 8);
        let out = concat_history(&cur, &buf).unwrap();
        assert_eq!(out.shape(), (16, 3, 4));
        assert!(out.data()[..8 * 12].iter().all(|&v| v == 1.0));
        assert!(out.data()[8 * 12..].iter().all(|&v| v == 0.0));

        let prev = FeatureMap::filled(8, 3, 4, 2.0);
        buf.push(0, prev).unwrap();
        let out = concat_history(&cur, &buf).unwrap();
        assert_eq!(out.channel(0)[0], 1.0);
        assert_eq!(out.channel(8)[0], 2.0);

        let other = FeatureMap::zeros(8, 5, 4);
        assert!(matches!(concat_history(&other, &buf), Err(BevError::ShapeMismatch(_))));
    }

    #[test]
    fn buffer_rejects_stale_frames_and_keeps_capacity() {
        let mut buf = TemporalBuffer::new(1, 1);
        buf.push(3, FeatureMap::zeros(1, 1, 1)).unwrap();
        assert!(buf.push(3, FeatureMap::zeros(1, 1, 1)).is_err());
        buf.push(4, FeatureMap::filled(1, 1, 1, 5.0)).unwrap();
        assert_eq!(buf.len(), 1);
        assert_eq!(buf.latest().unwrap().0, 4);
    }

    #[test]
    fn feature_map_binary_layout() {
        let m = FeatureMap::from_vec(1, 1, 2, vec![1.0, -2.5]).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..12], &[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(FeatureMap::from_bytes(&bytes).unwrap(), m);
        assert!(FeatureMap::from_bytes(&bytes[..15]).is_err());
        assert!(FeatureMap::from_bytes(&bytes[..5]).is_err());
    }

    proptest! {
        #[test]
        fn cell_world_round_trip(ox in -50.0..50.0f64, oy in -50.0..50.0f64, cs in 0.01..2.0f64, i in 0usize..200, j in 0usize..200) {
            let g = BevGrid::new((ox, oy), cs, 200, 200, (0.0, 2.0), 1).unwrap();
            let p = g.cell_to_world(i, j).unwrap();
            prop_assert_eq!(g.world_to_cell(p).unwrap(), (i, j));
        }

        #[test]
        fn mean_equals_max_on_flat_columns(vals in proptest::collection::vec(-10.0f32..10.0, 6), z in 1usize..5) {
            let mut data = Vec::new();
            for _ in 0..z { data.extend_from_slice(&vals); }
            let v = VoxelVolume::from_vec(1, z, 2, 3, data).unwrap();
            let mean = reduce_vertical(&v, Reduction::Mean);
            let max = reduce_vertical(&v, Reduction::Max);
            prop_assert_eq!(mean, max);
        }

        #[test]
        fn feature_map_bytes_round_trip(c in 1usize..3, h in 1usize..5, w in 1usize..5, seed in any::<u64>()) {
            let data: Vec<f32> = (0..c * h * w).map(|k| ((seed.wrapping_add(k as u64) % 1000) as f32) * 0.37 - 100.0).collect();
            let m = FeatureMap::from_vec(c, h, w, data).unwrap();
            prop_assert_eq!(FeatureMap::from_bytes(&m.to_bytes()).unwrap(), m);
        }
    }
}
