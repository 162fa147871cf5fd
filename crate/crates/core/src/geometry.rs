//! Pinhole cameras, world/image projection and the ground-plane homography.
//!
//! World frame is right-handed with z up and the ground plane at z = 0, in
//! meters. Camera frame is x right, y down, z forward. Calibrations are
//! assumed rectified; there is no distortion model.

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Depth (third homogeneous coordinate) at or below which a point is treated
/// as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

const HOMOGRAPHY_MIN_DET: f64 = 1e-12;
const ROTATION_TOL: f64 = 1e-9;
/// Tolerance used when loading calibration files.
pub const LOAD_ROTATION_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal with det 1 (deviation {0:.3e})")]
    NotARotation(f64),
    #[error("ground homography is singular (|det| = {0:.3e})")]
    SingularHomography(f64),
    #[error("resize scale {0} outside [0.5, 2.0]")]
    InvalidScale(f64),
    #[error("crop window exits the scaled image: {0}")]
    InvalidCrop(String),
    #[error("duplicate camera id {0}")]
    DuplicateCameraId(usize),
    #[error("noise sigma must be >= 0, got {0}")]
    InvalidSigma(f64),
    #[error("calibration io: {0}")]
    Io(#[from] std::io::Error),
    #[error("calibration json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("principal point not finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("image size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Intrinsics of the same camera observed through a feature map
    /// downsampled by `factor` (image size divided with truncation).
    pub fn downsampled(&self, factor: u32) -> Intrinsics {
        let f = factor.max(1) as f64;
        Intrinsics {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: self.cx / f,
            cy: self.cy / f,
            width: (self.width / factor.max(1)).max(1),
            height: (self.height / factor.max(1)).max(1),
        }
    }
}

/// World-to-camera rigid transform: `x_cam = R x_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

fn rotation_deviation(r: &Matrix3<f64>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    ortho.max((r.determinant() - 1.0).abs())
}

impl Extrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let dev = rotation_deviation(&rotation);
        if !(dev <= ROTATION_TOL) || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NotARotation(dev));
        }
        Ok(Self { rotation, translation })
    }

    /// Accepts rotations within `tol`, snapping them to the nearest proper
    /// rotation when the deviation exceeds the strict tolerance.
    pub fn new_lenient(rotation: Matrix3<f64>, translation: Vector3<f64>, tol: f64) -> Result<Self, GeometryError> {
        let dev = rotation_deviation(&rotation);
        if !(dev <= tol) {
            return Err(GeometryError::NotARotation(dev));
        }
        if dev <= ROTATION_TOL {
            return Self::new(rotation, translation);
        }
        let svd = rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        Self::new(u * v_t, translation)
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn ground(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
    pub depth: Option<f64>,
}

/// Outcome of projecting a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Image(ImagePoint),
    BehindCamera,
}

impl Projection {
    pub fn point(self) -> Option<ImagePoint> {
        match self {
            Projection::Image(p) => Some(p),
            Projection::BehindCamera => None,
        }
    }

    pub fn is_behind(&self) -> bool {
        matches!(self, Projection::BehindCamera)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub id: usize,
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
}

impl Camera {
    pub fn new(id: usize, intrinsics: Intrinsics, extrinsics: Extrinsics) -> Result<Self, GeometryError> {
        intrinsics.validate()?;
        Extrinsics::new(extrinsics.rotation, extrinsics.translation)?;
        Ok(Self { id, intrinsics, extrinsics })
    }

    /// Camera at `eye` looking at `target` with world z as the up hint.
    pub fn look_at(id: usize, intrinsics: Intrinsics, eye: Vector3<f64>, target: Vector3<f64>) -> Result<Self, GeometryError> {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(&Vector3::z());
        if right.norm() < 1e-9 {
            // looking straight down or up
            right = Vector3::x();
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Camera::new(id, intrinsics, Extrinsics::new_lenient(rotation, translation, LOAD_ROTATION_TOL)?)
    }

    pub fn center(&self) -> Vector3<f64> {
        self.extrinsics.center()
    }

    /// Full 3x4 projection matrix `K [R | t]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.extrinsics.rotation);
        rt.set_column(3, &self.extrinsics.translation);
        self.intrinsics.matrix() * rt
    }

    /// Same pose, intrinsics rescaled to a feature map downsampled by `factor`.
    pub fn downsampled(&self, factor: u32) -> Camera {
        Camera { intrinsics: self.intrinsics.downsampled(factor), ..*self }
    }

    pub fn project(&self, p: WorldPoint) -> Projection {
        project(self, p)
    }

    pub fn in_image(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.intrinsics.width as f64 && v < self.intrinsics.height as f64
    }
}

/// Dehomogenized `K [R | t] (x, y, z, 1)`.
pub fn project(camera: &Camera, p: WorldPoint) -> Projection {
    let h = camera.projection_matrix() * Vector4::new(p.x, p.y, p.z, 1.0);
    dehomogenize(h)
}

pub(crate) fn dehomogenize(h: Vector3<f64>) -> Projection {
    if !(h.z > MIN_DEPTH) {
        return Projection::BehindCamera;
    }
    Projection::Image(ImagePoint { u: h.x / h.z, v: h.y / h.z, depth: Some(h.z) })
}

/// The 3x3 ground-plane homography: `K [R | t]` with the z column removed.
pub fn ground_homography(camera: &Camera) -> Result<Matrix3<f64>, GeometryError> {
    let p = camera.projection_matrix();
    let h: Matrix3<f64> = Matrix3::from_columns(&[p.column(0).into_owned(), p.column(1).into_owned(), p.column(3).into_owned()]);
    let det = h.determinant();
    if !(det.abs() >= HOMOGRAPHY_MIN_DET) {
        return Err(GeometryError::SingularHomography(det.abs()));
    }
    Ok(h)
}

/// Maps a ground point (x, y, 0) through a homography.
pub fn apply_homography(h: &Matrix3<f64>, x: f64, y: f64) -> Projection {
    dehomogenize(h * Vector3::new(x, y, 1.0))
}

/// Intrinsics after resizing the image by `scale` and cropping a
/// `crop_size` window whose top-left corner sits at `crop_origin` in the
/// resized image.
pub fn adjust_for_resize_crop(
    camera: &Camera,
    scale: f64,
    crop_origin: (f64, f64),
    crop_size: (u32, u32),
) -> Result<Camera, GeometryError> {
    if !(0.5..=2.0).contains(&scale) {
        return Err(GeometryError::InvalidScale(scale));
    }
    let k = camera.intrinsics;
    let scaled_w = k.width as f64 * scale;
    let scaled_h = k.height as f64 * scale;
    let (ox, oy) = crop_origin;
    if !(ox >= 0.0 && oy >= 0.0) || crop_size.0 == 0 || crop_size.1 == 0 {
        return Err(GeometryError::InvalidCrop(format!("origin ({ox}, {oy}), size {crop_size:?}")));
    }
    if ox + crop_size.0 as f64 > scaled_w + 1e-9 || oy + crop_size.1 as f64 > scaled_h + 1e-9 {
        return Err(GeometryError::InvalidCrop(format!(
            "window ({ox}, {oy}) + {crop_size:?} exceeds scaled image {scaled_w}x{scaled_h}"
        )));
    }
    let intrinsics = Intrinsics {
        fx: k.fx * scale,
        fy: k.fy * scale,
        cx: k.cx * scale - ox,
        cy: k.cy * scale - oy,
        width: crop_size.0,
        height: crop_size.1,
    };
    Camera::new(camera.id, intrinsics, camera.extrinsics)
}

/// Adds i.i.d. Gaussian noise to the translation vector. Rotation is kept.
pub fn perturb_extrinsics(camera: &Camera, sigma: f64, seed: u64) -> Result<Camera, GeometryError> {
    if !(sigma >= 0.0) {
        return Err(GeometryError::InvalidSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(*camera);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|_| GeometryError::InvalidSigma(sigma))?;
    let noise = Vector3::from_fn(|_, _| normal.sample(&mut rng));
    let mut out = *camera;
    out.extrinsics.translation += noise;
    Ok(out)
}

/// One entry of a calibration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: usize,
    #[serde(rename = "K")]
    pub k: [f64; 9],
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    pub width: u32,
    pub height: u32,
}

impl From<&Camera> for CameraRecord {
    fn from(c: &Camera) -> Self {
        let k = c.intrinsics.matrix();
        let r = c.extrinsics.rotation;
        let row_major = |m: &Matrix3<f64>| {
            let mut out = [0.0; 9];
            for i in 0..3 {
                for j in 0..3 {
                    out[i * 3 + j] = m[(i, j)];
                }
            }
            out
        };
        let t = c.extrinsics.translation;
        CameraRecord {
            id: c.id,
            k: row_major(&k),
            r: row_major(&r),
            t: [t.x, t.y, t.z],
            width: c.intrinsics.width,
            height: c.intrinsics.height,
        }
    }
}

impl TryFrom<&CameraRecord> for Camera {
    type Error = GeometryError;

    fn try_from(rec: &CameraRecord) -> Result<Self, Self::Error> {
        let k = rec.k;
        if k[1] != 0.0 || k[3] != 0.0 || k[6] != 0.0 || k[7] != 0.0 || k[8] != 1.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "camera {}: K must be [[fx,0,cx],[0,fy,cy],[0,0,1]]",
                rec.id
            )));
        }
        let intrinsics = Intrinsics::new(k[0], k[4], k[2], k[5], rec.width, rec.height)?;
        let rotation = Matrix3::from_row_slice(&rec.r);
        let translation = Vector3::from_row_slice(&rec.t);
        let extrinsics = Extrinsics::new_lenient(rotation, translation, LOAD_ROTATION_TOL)?;
        Camera::new(rec.id, intrinsics, extrinsics)
    }
}

pub fn rig_from_json(json: &str) -> Result<Vec<Camera>, GeometryError> {
    let records: Vec<CameraRecord> = serde_json::from_str(json)?;
    let mut cameras = Vec::with_capacity(records.len());
    for rec in &records {
        if cameras.iter().any(|c: &Camera| c.id == rec.id) {
            return Err(GeometryError::DuplicateCameraId(rec.id));
        }
        cameras.push(Camera::try_from(rec)?);
    }
    Ok(cameras)
}

pub fn rig_to_json(cameras: &[Camera]) -> String {
    let records: Vec<CameraRecord> = cameras.iter().map(CameraRecord::from).collect();
    serde_json::to_string_pretty(&records).expect("camera records serialize")
}

pub fn load_rig(path: impl AsRef<Path>) -> Result<Vec<Camera>, GeometryError> {
    rig_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_rig(path: impl AsRef<Path>, cameras: &[Camera]) -> Result<(), GeometryError> {
    std::fs::write(path, rig_to_json(cameras))?;
    Ok(())
}
