//! Pinhole cameras, rigid camera-to-world poses and per-pixel cone rays.
//!
//! Cameras are right-handed and look down their local −z axis with +y up and +x to the
//! right, the Blender/NeRF-synthetic convention.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Converts a pixel width on the normalized image plane into the radius of the cone
/// whose cross-section has the same variance as the square pixel.
pub fn cone_radius_from_pixel_width(pixel_width: f64) -> f64 {
    pixel_width * 2.0 / 12f64.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Cone radius per unit distance along the ray.
    pub pixel_radius: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pixel_radius: cone_radius_from_pixel_width(1.0 / fx),
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Square pixels, principal point at the image center, horizontal field of view in degrees.
    pub fn from_fov(width: usize, height: usize, fov_x_deg: f64) -> Result<Self> {
        let focal = 0.5 * width as f64 / (0.5 * fov_x_deg.to_radians()).tan();
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64
            && self.pixel_radius > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid intrinsics {self:?}")))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Direction through pixel-space point `(u, v)` = (column, row) in camera coordinates,
    /// on the z = −1 plane.
    pub fn unproject(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, -(v - self.cy) / self.fy, -1.0)
    }
}

/// Camera-to-world rigid transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if orth > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "pose rotation is not a proper rotation (orthogonality error {orth:e}, det {det})"
            )));
        }
        Ok(Pose { rotation, translation })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Camera at `eye` whose optical axis (local −z) points at `target`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Config("look_at: eye and target coincide".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-9)
            .ok_or_else(|| Error::Config("look_at: up vector parallel to view direction".into()))?;
        let cam_up = right.cross(&forward);
        let rotation = Matrix3::from_columns(&[right, cam_up, -forward]);
        Pose::new(rotation, eye)
    }

    /// Row-major 4×4 homogeneous matrix.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_matrix(m: &[[f64; 4]; 4]) -> Result<Self> {
        let rotation = Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        );
        Pose::new(rotation, Vec3::new(m[0][3], m[1][3], m[2][3]))
    }

    pub fn camera_to_world_dir(&self, d: &Vec3) -> Vec3 {
        self.rotation * d
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
    /// Cone radius per unit distance.
    pub radius: f64,
    /// (row, col)
    pub pixel: (usize, usize),
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

pub fn ray_for_pixel(intr: &Intrinsics, pose: &Pose, row: usize, col: usize, near: f64, far: f64) -> Ray {
    let cam = intr.unproject(col as f64 + 0.5, row as f64 + 0.5);
    let direction = pose.camera_to_world_dir(&cam).normalize();
    Ray {
        origin: pose.translation,
        direction,
        radius: intr.pixel_radius,
        pixel: (row, col),
        near,
        far,
    }
}

/// One ray per pixel, row-major.
pub fn rays_for_frame(intr: &Intrinsics, pose: &Pose, near: f64, far: f64) -> Result<Vec<Ray>> {
    if !(near > 0.0 && near < far) {
        return Err(Error::Config(format!("ray bounds must satisfy 0 < near < far, got {near}..{far}")));
    }
    let mut rays = Vec::with_capacity(intr.pixel_count());
    for row in 0..intr.height {
        for col in 0..intr.width {
            rays.push(ray_for_pixel(intr, pose, row, col, near, far));
        }
    }
    Ok(rays)
}

/// Continuous pixel coordinates `(row, col)` of a world point, `None` behind the camera.
pub fn project(intr: &Intrinsics, pose: &Pose, point: &Vec3) -> Option<(f64, f64)> {
    let p = pose.world_to_camera(point);
    let depth = -p.z;
    if depth <= 0.0 {
        return None;
    }
    let col = intr.cx + intr.fx * p.x / depth;
    let row = intr.cy - intr.fy * p.y / depth;
    Some((row, col))
}

/// Lowest and highest elevation, as the sine of the angle above the ground plane.
const MIN_ELEVATION_SIN: f64 = 0.15;
const MAX_ELEVATION_SIN: f64 = 0.95;

/// `n` cameras on the upper hemisphere of the given radius, all looking at the origin.
///
/// Azimuths are jittered strata so small view counts still surround the object; heights
/// are uniform in area over the band between the two elevation limits.
pub fn hemisphere_poses(n: usize, radius: f64, seed: u64) -> Result<Vec<Pose>> {
    if n == 0 || !(radius > 0.0) {
        return Err(Error::Config(format!("hemisphere_poses needs n >= 1 and radius > 0, got {n}, {radius}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let azimuth = std::f64::consts::TAU * (k as f64 + rng.random::<f64>()) / n as f64;
            let z = MIN_ELEVATION_SIN + (MAX_ELEVATION_SIN - MIN_ELEVATION_SIN) * rng.random::<f64>();
            let ring = (1.0 - z * z).sqrt();
            let eye = Vec3::new(ring * azimuth.cos(), ring * azimuth.sin(), z) * radius;
            Pose::look_at(eye, Vec3::zeros(), Vec3::z())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(w: usize, h: usize) -> Intrinsics {
        Intrinsics::from_fov(w, h, 50.0).unwrap()
    }

    #[test]
    fn center_pixel_looks_down_optical_axis() {
        let intr = cam(5, 7);
        let ray = ray_for_pixel(&intr, &Pose::identity(), 3, 2, 0.5, 5.0);
        assert!((ray.direction - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
        assert_eq!(ray.origin, Vec3::zeros());
    }

    #[test]
    fn corner_direction_matches_unprojection_oracle() {
        let intr = Intrinsics::new(40.0, 42.0, 15.5, 12.0, 32, 24).unwrap();
        let pose = Pose::look_at(Vec3::new(1.0, 2.0, 3.0), Vec3::zeros(), Vec3::z()).unwrap();
        let ray = ray_for_pixel(&intr, &pose, 0, 31, 0.5, 5.0);
        // oracle: pixel center (31.5, 0.5) pushed through K⁻¹, flipped to -z, rotated
        let x = (31.5 - 15.5) / 40.0;
        let y = -(0.5 - 12.0) / 42.0;
        let world = pose.rotation * Vec3::new(x, y, -1.0);
        let expect = world / world.norm();
        assert!((ray.direction - expect).norm() < 1e-12);
        assert!((ray.direction.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn near_point_projects_into_its_pixel() {
        let intr = cam(16, 12);
        let pose = hemisphere_poses(1, 4.0, 9).unwrap()[0];
        for ray in rays_for_frame(&intr, &pose, 1.0, 8.0).unwrap() {
            let (row, col) = project(&intr, &pose, &ray.at(ray.near)).unwrap();
            let dr = row - (ray.pixel.0 as f64 + 0.5);
            let dc = col - (ray.pixel.1 as f64 + 0.5);
            assert!(dr.abs() < 0.51 && dc.abs() < 0.51);
        }
    }

    #[test]
    fn rays_reject_bad_bounds() {
        assert!(rays_for_frame(&cam(4, 4), &Pose::identity(), 2.0, 1.0).is_err());
    }

    #[test]
    fn hemisphere_cameras_look_at_origin() {
        let poses = hemisphere_poses(30, 4.0, 3).unwrap();
        for p in &poses {
            let t = p.translation;
            assert!(t.z >= 0.0);
            assert!((t.norm() - 4.0).abs() < 1e-9);
            let forward = p.rotation * Vec3::new(0.0, 0.0, -1.0);
            assert!((forward + t / t.norm()).norm() < 1e-12);
        }
        assert_eq!(poses, hemisphere_poses(30, 4.0, 3).unwrap());
        assert_ne!(poses, hemisphere_poses(30, 4.0, 4).unwrap());
    }

    #[test]
    fn matrix_round_trip() {
        let p = hemisphere_poses(1, 3.0, 1).unwrap()[0];
        let q = Pose::from_matrix(&p.to_matrix()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn pose_rejects_reflection() {
        let m = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(m, Vec3::zeros()).is_err());
    }

    #[test]
    fn pixel_radius_uses_variance_matching_width() {
        let intr = Intrinsics::new(100.0, 100.0, 8.0, 8.0, 16, 16).unwrap();
        assert!((intr.pixel_radius - 0.01 * 2.0 / 12f64.sqrt()).abs() < 1e-18);
    }
}
