//! Image-to-BEV lifting: ground homography warping, voxel bilinear
//! sampling, depth splatting and deformable (offset) sampling, plus the
//! visibility-normalized cross-camera average.
//!
//! Feature maps live at the camera resolution divided by a downsample
//! factor. Pixel `(r, c)` of a feature map covers `[c, c+1) x [r, r+1)`, so
//! its center is at `(c + 0.5, r + 0.5)`.

use crate::bev::{BevGrid, FeatureMap, VoxelVolume};
use crate::geometry::{self, apply_homography, Camera, GeometryError, Projection, WorldPoint};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub const DEFAULT_DOWNSAMPLE: u32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum LiftError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("feature map is {got:?} (h, w) but camera {camera} expects {expected:?} at downsample {downsample}")]
    FeatureShape { camera: usize, got: (usize, usize), expected: (usize, usize), downsample: u32 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid depth distribution: {0}")]
    InvalidDepth(String),
    #[error("invalid deformable spec: {0}")]
    InvalidDeformable(String),
    #[error("no camera volumes to aggregate")]
    NoCameras,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftMethod {
    Perspective,
    Bilinear,
    DepthSplat,
    Deformable,
}

impl std::str::FromStr for LiftMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perspective" => Ok(Self::Perspective),
            "bilinear" => Ok(Self::Bilinear),
            "depth_splat" => Ok(Self::DepthSplat),
            "deformable" => Ok(Self::Deformable),
            other => Err(format!("unknown lifting method `{other}`")),
        }
    }
}

/// Per-voxel flag: the voxel's sample location lies in front of the camera
/// and inside the feature image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMask {
    bits: Vec<bool>,
}

impl VisibilityMask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn all(len: usize) -> Self {
        Self { bits: vec![true; len] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// One camera's contribution in grid space.
#[derive(Debug, Clone, PartialEq)]
pub struct Lifted {
    pub camera_id: usize,
    pub volume: VoxelVolume,
    pub visibility: VisibilityMask,
}

/// The four bilinear taps around a sample location, with border clamping.
#[derive(Debug, Clone, Copy)]
struct Taps {
    idx: [usize; 4],
    w: [f32; 4],
}

impl Taps {
    fn new(u: f64, v: f64, width: usize, height: usize) -> Self {
        let x = (u - 0.5).clamp(0.0, (width - 1) as f64);
        let y = (v - 0.5).clamp(0.0, (height - 1) as f64);
        let x0 = (x.floor() as usize).min(width - 1);
        let y0 = (y.floor() as usize).min(height - 1);
        let x1 = (x0 + 1).min(width - 1);
        let y1 = (y0 + 1).min(height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        Taps {
            idx: [y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1],
            w: [(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx],
        }
    }

    #[inline]
    fn apply(&self, channel: &[f32]) -> f32 {
        let s = &self.idx;
        (self.w[0] * channel[s[0]] + self.w[1] * channel[s[1]]) + (self.w[2] * channel[s[2]] + self.w[3] * channel[s[3]])
    }
}

/// Bilinear sample of channel `c` at feature-pixel coordinates `(u, v)`.
pub fn bilinear_sample(feature: &FeatureMap, c: usize, u: f64, v: f64) -> f32 {
    Taps::new(u, v, feature.width(), feature.height()).apply(feature.channel(c))
}

fn check_feature(feature: &FeatureMap, cam: &Camera, downsample: u32) -> Result<Camera, LiftError> {
    let fcam = cam.downsampled(downsample);
    let expected = (fcam.intrinsics.height as usize, fcam.intrinsics.width as usize);
    let got = (feature.height(), feature.width());
    if got != expected {
        return Err(LiftError::FeatureShape { camera: cam.id, got, expected, downsample });
    }
    Ok(fcam)
}

/// Precomputed per-voxel reference points for one camera and grid. Static
/// rigs reuse a plan across frames.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    camera_id: usize,
    downsample: u32,
    feature_size: (usize, usize),
    shape: (usize, usize, usize),
    refs: Vec<Option<[f64; 2]>>,
}

impl SamplingPlan {
    /// Voxel plan: each voxel's eight corners are projected and the sample
    /// point is the center of their bounding box. The voxel is visible when
    /// every corner is in front of the camera and the sample point falls
    /// inside the feature image.
    pub fn voxels(camera: &Camera, grid: &BevGrid, downsample: u32) -> Self {
        let fcam = camera.downsampled(downsample);
        let p = fcam.projection_matrix();
        let (nz, ny, nx) = (grid.z_bins + 1, grid.height + 1, grid.width + 1);
        // projections of the lattice of voxel corners
        let mut corners: Vec<Option<[f64; 2]>> = Vec::with_capacity(nz * ny * nx);
        for k in 0..nz {
            let z = grid.z_min + k as f64 * grid.z_step();
            for i in 0..ny {
                let y = grid.origin.1 + i as f64 * grid.cell_size;
                for j in 0..nx {
                    let x = grid.origin.0 + j as f64 * grid.cell_size;
                    let h = p * nalgebra::Vector4::new(x, y, z, 1.0);
                    corners.push(match geometry::dehomogenize(h) {
                        Projection::Image(ip) => Some([ip.u, ip.v]),
                        Projection::BehindCamera => None,
                    });
                }
            }
        }
        let corner = |k: usize, i: usize, j: usize| corners[(k * ny + i) * nx + j];
        let mut refs = Vec::with_capacity(grid.voxels());
        for k in 0..grid.z_bins {
            for i in 0..grid.height {
                for j in 0..grid.width {
                    let mut lo = [f64::INFINITY; 2];
                    let mut hi = [f64::NEG_INFINITY; 2];
                    let mut in_front = true;
                    for (dk, di, dj) in CORNER_OFFSETS {
                        match corner(k + dk, i + di, j + dj) {
                            Some([u, v]) => {
                                lo = [lo[0].min(u), lo[1].min(v)];
                                hi = [hi[0].max(u), hi[1].max(v)];
                            }
                            None => {
                                in_front = false;
                                break;
                            }
                        }
                    }
                    let r = if in_front {
                        let (u, v) = (0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]));
                        fcam.in_image(u, v).then_some([u, v])
                    } else {
                        None
                    };
                    refs.push(r);
                }
            }
        }
        Self {
            camera_id: camera.id,
            downsample,
            feature_size: (fcam.intrinsics.height as usize, fcam.intrinsics.width as usize),
            shape: (grid.z_bins, grid.height, grid.width),
            refs,
        }
    }

    /// Ground plan: each cell center (z = 0) mapped through the ground
    /// homography of the downsampled camera.
    pub fn ground(camera: &Camera, grid: &BevGrid, downsample: u32) -> Result<Self, LiftError> {
        let fcam = camera.downsampled(downsample);
        let h = geometry::ground_homography(&fcam)?;
        let mut refs = Vec::with_capacity(grid.cells());
        for i in 0..grid.height {
            for j in 0..grid.width {
                let c = grid.cell_center(i, j);
                refs.push(match apply_homography(&h, c.x, c.y) {
                    Projection::Image(ip) if fcam.in_image(ip.u, ip.v) => Some([ip.u, ip.v]),
                    _ => None,
                });
            }
        }
        Ok(Self {
            camera_id: camera.id,
            downsample,
            feature_size: (fcam.intrinsics.height as usize, fcam.intrinsics.width as usize),
            shape: (1, grid.height, grid.width),
            refs,
        })
    }

    pub fn camera_id(&self) -> usize {
        self.camera_id
    }

    pub fn reference(&self, voxel: usize) -> Option<[f64; 2]> {
        self.refs[voxel]
    }

    pub fn visibility(&self) -> VisibilityMask {
        VisibilityMask::new(self.refs.iter().map(Option::is_some).collect())
    }

    fn check(&self, feature: &FeatureMap) -> Result<(), LiftError> {
        let got = (feature.height(), feature.width());
        if got != self.feature_size {
            return Err(LiftError::FeatureShape { camera: self.camera_id, got, expected: self.feature_size, downsample: self.downsample });
        }
        Ok(())
    }

    fn empty_volume(&self, channels: usize) -> VoxelVolume {
        VoxelVolume::zeros_with(channels, self.shape.0, self.shape.1, self.shape.2)
    }

    /// One bilinear tap per visible voxel; invisible voxels stay 0.
    pub fn sample(&self, feature: &FeatureMap) -> Result<Lifted, LiftError> {
        self.check(feature)?;
        let (fh, fw) = self.feature_size;
        let mut volume = self.empty_volume(feature.channels());
        let n = self.refs.len();
        for (idx, r) in self.refs.iter().enumerate() {
            if let Some([u, v]) = *r {
                let taps = Taps::new(u, v, fw, fh);
                for c in 0..feature.channels() {
                    volume.data[c * n + idx] = taps.apply(feature.channel(c));
                }
            }
        }
        Ok(Lifted { camera_id: self.camera_id, volume, visibility: self.visibility() })
    }

    /// Weighted sum of taps at `reference + offset_k`. A voxel whose
    /// reference point is invisible yields 0.
    pub fn sample_deformable(&self, feature: &FeatureMap, spec: &DeformableSpec) -> Result<Lifted, LiftError> {
        self.check(feature)?;
        if spec.voxels() != self.refs.len() {
            return Err(LiftError::InvalidDeformable(format!("spec covers {} voxels, grid has {}", spec.voxels(), self.refs.len())));
        }
        let (fh, fw) = self.feature_size;
        let mut volume = self.empty_volume(feature.channels());
        let n = self.refs.len();
        let mut taps = Vec::with_capacity(spec.points);
        for (idx, r) in self.refs.iter().enumerate() {
            let Some([u, v]) = *r else { continue };
            taps.clear();
            for (off, w) in spec.offsets(idx).iter().zip(spec.weights(idx)) {
                taps.push((Taps::new(u + off[0] as f64, v + off[1] as f64, fw, fh), *w));
            }
            for c in 0..feature.channels() {
                let ch = feature.channel(c);
                let (t0, w0) = &taps[0];
                let mut acc = *w0 * t0.apply(ch);
                for (t, w) in &taps[1..] {
                    acc += *w * t.apply(ch);
                }
                volume.data[c * n + idx] = acc;
            }
        }
        Ok(Lifted { camera_id: self.camera_id, volume, visibility: self.visibility() })
    }
}

const CORNER_OFFSETS: [(usize, usize, usize); 8] =
    [(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1), (1, 0, 0), (1, 0, 1), (1, 1, 0), (1, 1, 1)];

/// Warps the feature map onto the ground plane (single-layer volume).
pub fn lift_perspective(feature: &FeatureMap, camera: &Camera, grid: &BevGrid, downsample: u32) -> Result<Lifted, LiftError> {
    check_feature(feature, camera, downsample)?;
    SamplingPlan::ground(camera, grid, downsample)?.sample(feature)
}

/// Voxels pull a bilinear sample from the image.
pub fn lift_bilinear(feature: &FeatureMap, camera: &Camera, grid: &BevGrid, downsample: u32) -> Result<Lifted, LiftError> {
    check_feature(feature, camera, downsample)?;
    SamplingPlan::voxels(camera, grid, downsample).sample(feature)
}

pub fn lift_deformable(feature: &FeatureMap, spec: &DeformableSpec, camera: &Camera, grid: &BevGrid, downsample: u32) -> Result<Lifted, LiftError> {
    check_feature(feature, camera, downsample)?;
    SamplingPlan::voxels(camera, grid, downsample).sample_deformable(feature, spec)
}

/// Per-pixel categorical distribution over the depths
/// `d0 + delta, d0 + 2 delta, ..., d0 + bins * delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthDistribution {
    pub d0: f64,
    pub delta: f64,
    bins: usize,
    height: usize,
    width: usize,
    /// (bin, row, col) layout
    probs: Vec<f32>,
}

impl DepthDistribution {
    pub fn new(d0: f64, delta: f64, bins: usize, height: usize, width: usize, probs: Vec<f32>) -> Result<Self, LiftError> {
        if bins == 0 || !(delta > 0.0) || !d0.is_finite() {
            return Err(LiftError::InvalidDepth(format!("bins {bins}, delta {delta}, d0 {d0}")));
        }
        if probs.len() != bins * height * width {
            return Err(LiftError::InvalidDepth(format!("{} probabilities for {bins}x{height}x{width}", probs.len())));
        }
        let plane = height * width;
        for p in 0..plane {
            let mut sum = 0.0f64;
            for b in 0..bins {
                let v = probs[b * plane + p];
                if !(v >= 0.0) {
                    return Err(LiftError::InvalidDepth(format!("negative probability at pixel {p}")));
                }
                sum += v as f64;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(LiftError::InvalidDepth(format!("pixel {p} sums to {sum}")));
            }
        }
        Ok(Self { d0, delta, bins, height, width, probs })
    }

    pub fn uniform(d0: f64, delta: f64, bins: usize, height: usize, width: usize) -> Result<Self, LiftError> {
        Self::new(d0, delta, bins, height, width, vec![1.0 / bins as f32; bins * height * width])
            .or_else(|_| {
                // 1/bins in f32 may miss the 1e-6 sum tolerance for awkward bin counts
                let mut probs = vec![1.0 / bins as f32; bins * height * width];
                let plane = height * width;
                for p in 0..plane {
                    let rest: f32 = (1..bins).map(|b| probs[b * plane + p]).sum();
                    probs[p] = 1.0 - rest;
                }
                Self::new(d0, delta, bins, height, width, probs)
            })
    }

    pub fn one_hot(d0: f64, delta: f64, bins: usize, bin: usize, height: usize, width: usize) -> Result<Self, LiftError> {
        let plane = height * width;
        let mut probs = vec![0.0; bins * plane];
        probs[bin * plane..(bin + 1) * plane].iter_mut().for_each(|p| *p = 1.0);
        Self::new(d0, delta, bins, height, width, probs)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn depth(&self, bin: usize) -> f64 {
        self.d0 + (bin as f64 + 1.0) * self.delta
    }

    pub fn prob(&self, bin: usize, r: usize, c: usize) -> f32 {
        self.probs[(bin * self.height + r) * self.width + c]
    }
}

/// World point at `depth` along the ray through feature pixel `(r, c)`.
pub fn unproject_pixel(feature_camera: &Camera, r: usize, c: usize, depth: f64) -> WorldPoint {
    let k = &feature_camera.intrinsics;
    let ray = Vector3::new((c as f64 + 0.5 - k.cx) / k.fx, (r as f64 + 0.5 - k.cy) / k.fy, 1.0);
    let ext = &feature_camera.extrinsics;
    let w = ext.rotation.transpose() * (ray * depth - ext.translation);
    WorldPoint::new(w.x, w.y, w.z)
}

/// Pushes every pixel's feature along its ray, weighted by the depth
/// probabilities, summing into the containing voxels. Out-of-grid points are
/// dropped. Visibility marks voxels whose center projects into the image.
pub fn lift_depth_splat(feature: &FeatureMap, depth: &DepthDistribution, camera: &Camera, grid: &BevGrid, downsample: u32) -> Result<Lifted, LiftError> {
    let fcam = check_feature(feature, camera, downsample)?;
    if (depth.height, depth.width) != (feature.height(), feature.width()) {
        return Err(LiftError::InvalidDepth(format!(
            "distribution is {}x{}, features are {}x{}",
            depth.height,
            depth.width,
            feature.height(),
            feature.width()
        )));
    }
    let mut volume = VoxelVolume::zeros(feature.channels(), grid);
    let n = volume.spatial_len();
    let plane = grid.cells();
    for r in 0..feature.height() {
        for c in 0..feature.width() {
            for b in 0..depth.bins {
                let p = depth.prob(b, r, c);
                if p == 0.0 {
                    continue;
                }
                let w = unproject_pixel(&fcam, r, c, depth.depth(b));
                let Some((k, i, j)) = grid.world_to_voxel(w.x, w.y, w.z) else { continue };
                let idx = k * plane + i * grid.width + j;
                for ch in 0..feature.channels() {
                    volume.data[ch * n + idx] += p * feature.get(ch, r, c);
                }
            }
        }
    }
    let p = fcam.projection_matrix();
    let mut bits = Vec::with_capacity(n);
    for k in 0..grid.z_bins {
        for i in 0..grid.height {
            for j in 0..grid.width {
                let cc = grid.cell_center(i, j);
                let h = p * nalgebra::Vector4::new(cc.x, cc.y, grid.z_center(k), 1.0);
                bits.push(matches!(geometry::dehomogenize(h), Projection::Image(ip) if fcam.in_image(ip.u, ip.v)));
            }
        }
    }
    Ok(Lifted { camera_id: camera.id, volume, visibility: VisibilityMask::new(bits) })
}

/// Per-voxel sampling offsets (feature pixels) and weights for one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformableSpec {
    points: usize,
    offsets: Vec<[f32; 2]>,
    weights: Vec<f32>,
}

impl DeformableSpec {
    pub fn new(points: usize, offsets: Vec<[f32; 2]>, weights: Vec<f32>) -> Result<Self, LiftError> {
        if points == 0 || offsets.len() != weights.len() || !offsets.len().is_multiple_of(points) {
            return Err(LiftError::InvalidDeformable(format!(
                "{} offsets and {} weights for {points} points per voxel",
                offsets.len(),
                weights.len()
            )));
        }
        for (v, ws) in weights.chunks(points).enumerate() {
            if ws.iter().any(|w| !(*w >= 0.0)) {
                return Err(LiftError::InvalidDeformable(format!("negative weight at voxel {v}")));
            }
            let sum: f64 = ws.iter().map(|w| *w as f64).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(LiftError::InvalidDeformable(format!("weights of voxel {v} sum to {sum}")));
            }
        }
        if offsets.iter().flatten().any(|o| !o.is_finite()) {
            return Err(LiftError::InvalidDeformable("non-finite offset".into()));
        }
        Ok(Self { points, offsets, weights })
    }

    /// The same offsets and weights for every voxel of `grid`.
    pub fn shared(grid: &BevGrid, offsets: &[[f32; 2]], weights: &[f32]) -> Result<Self, LiftError> {
        let n = grid.voxels();
        Self::new(offsets.len(), offsets.repeat(n), weights.repeat(n))
    }

    /// One zero offset with weight 1: reduces to bilinear sampling.
    pub fn degenerate(grid: &BevGrid) -> Self {
        Self::shared(grid, &[[0.0, 0.0]], &[1.0]).expect("valid degenerate spec")
    }

    /// Center plus `points - 1` taps on a circle of `radius` pixels, equal
    /// weights.
    pub fn ring(grid: &BevGrid, points: usize, radius: f32) -> Result<Self, LiftError> {
        if points == 0 {
            return Err(LiftError::InvalidDeformable("points must be >= 1".into()));
        }
        let mut offsets = vec![[0.0f32, 0.0]];
        for k in 1..points {
            let a = std::f32::consts::TAU * (k - 1) as f32 / (points - 1) as f32;
            offsets.push([radius * a.cos(), radius * a.sin()]);
        }
        let w = 1.0 / points as f32;
        let mut weights = vec![w; points];
        weights[0] = 1.0 - w * (points - 1) as f32;
        Self::shared(grid, &offsets, &weights)
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn voxels(&self) -> usize {
        self.weights.len() / self.points
    }

    pub fn offsets(&self, voxel: usize) -> &[[f32; 2]] {
        &self.offsets[voxel * self.points..(voxel + 1) * self.points]
    }

    pub fn weights(&self, voxel: usize) -> &[f32] {
        &self.weights[voxel * self.points..(voxel + 1) * self.points]
    }
}

/// Cross-camera fusion result.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub volume: VoxelVolume,
    /// Number of cameras that see each voxel.
    pub view_count: Vec<u32>,
}

/// Mean over the cameras that see each voxel; unseen voxels are 0.
/// Cameras are summed in ascending id order regardless of input order.
pub fn aggregate_cameras(per_camera: &[Lifted]) -> Result<Aggregated, LiftError> {
    let first = per_camera.first().ok_or(LiftError::NoCameras)?;
    let shape = first.volume.shape();
    for l in per_camera {
        if l.volume.shape() != shape || l.visibility.len() != l.volume.spatial_len() {
            return Err(LiftError::GridMismatch(format!(
                "camera {} volume {:?} vs {:?}",
                l.camera_id,
                l.volume.shape(),
                shape
            )));
        }
    }
    let mut order: Vec<&Lifted> = per_camera.iter().collect();
    order.sort_by_key(|l| l.camera_id);
    let n = first.volume.spatial_len();
    let channels = shape.0;
    let mut volume = VoxelVolume::zeros_with(channels, shape.1, shape.2, shape.3);
    let mut view_count = vec![0u32; n];
    for l in &order {
        for (idx, seen) in l.visibility.as_slice().iter().enumerate() {
            if *seen {
                view_count[idx] += 1;
                for c in 0..channels {
                    volume.data[c * n + idx] += l.volume.data[c * n + idx];
                }
            }
        }
    }
    for (idx, count) in view_count.iter().enumerate() {
        if *count > 1 {
            let k = *count as f32;
            for c in 0..channels {
                volume.data[c * n + idx] /= k;
            }
        }
    }
    Ok(Aggregated { volume, view_count })
}
