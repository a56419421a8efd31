use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Half diagonal of the canonical box; rays cover its bounding sphere.
pub const BOUNDING_RADIUS: f64 = 1.732_050_807_568_877_2;

/// Minimum near distance along any ray.
pub const MIN_NEAR: f64 = 0.05;

pub const DEFAULT_CAMERA_RADIUS: f64 = 2.0;
pub const DEFAULT_FOV_DEG: f64 = 60.0;
pub const DEFAULT_RESOLUTION: usize = 128;

/// Tolerance for "on the search sphere" checks.
pub const SPHERE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fov_deg: f64,
    /// Pixels per side.
    pub res: usize,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self {
            fov_deg: DEFAULT_FOV_DEG,
            res: DEFAULT_RESOLUTION,
        }
    }
}

/// Pinhole camera looking at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    position: Vec3,
    forward: Vec3,
    up: Vec3,
    right: Vec3,
    intrinsics: Intrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }

    pub fn length(&self) -> f64 {
        self.t_far - self.t_near
    }
}

impl Camera {
    /// A camera at `position` (any nonzero point) oriented toward the origin.
    ///
    /// `up` is world z made orthogonal to the view direction; near the poles
    /// the x axis is used instead.
    pub fn look_at_origin(position: Vec3, intrinsics: Intrinsics) -> Result<Self> {
        let dist = position.norm();
        if !(dist.is_finite() && dist > 1e-9) {
            return Err(Error::Pose(format!("camera position {position:?} is degenerate")));
        }
        if intrinsics.res == 0 || !(intrinsics.fov_deg > 0.0 && intrinsics.fov_deg < 180.0) {
            return Err(Error::domain(format!("invalid intrinsics {intrinsics:?}")));
        }
        let forward = -position / dist;
        let mut up = orthogonalize(Vec3::z(), &forward);
        if up.norm() < 1e-6 {
            up = orthogonalize(Vec3::x(), &forward);
        }
        let up = up.normalize();
        let right = forward.cross(&up);
        Ok(Self {
            position,
            forward,
            up,
            right,
            intrinsics,
        })
    }

    /// A camera on the search sphere of the given radius.
    pub fn on_sphere(position: Vec3, radius: f64, intrinsics: Intrinsics) -> Result<Self> {
        check_on_sphere(&position, radius)?;
        Self::look_at_origin(position, intrinsics)
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn forward(&self) -> Vec3 {
        self.forward
    }

    pub fn up(&self) -> Vec3 {
        self.up
    }

    pub fn right(&self) -> Vec3 {
        self.right
    }

    pub fn intrinsics(&self) -> Intrinsics {
        self.intrinsics
    }

    pub fn res(&self) -> usize {
        self.intrinsics.res
    }

    pub fn with_res(&self, res: usize) -> Self {
        let mut c = *self;
        c.intrinsics.res = res;
        c
    }

    pub fn pixel_count(&self) -> usize {
        self.intrinsics.res * self.intrinsics.res
    }

    /// Near/far distances spanning the canonical box's bounding sphere.
    pub fn depth_range(&self) -> (f64, f64) {
        let d = self.position.norm();
        ((d - BOUNDING_RADIUS).max(MIN_NEAR), d + BOUNDING_RADIUS)
    }

    /// Ray through the centre of pixel `(px, py)`; `py` grows downward.
    pub fn pixel_ray(&self, px: usize, py: usize) -> Ray {
        let res = self.intrinsics.res as f64;
        let half = (0.5 * self.intrinsics.fov_deg).to_radians().tan();
        let x = (2.0 * (px as f64 + 0.5) / res - 1.0) * half;
        let y = (1.0 - 2.0 * (py as f64 + 0.5) / res) * half;
        let dir = (self.forward + self.right * x + self.up * y).normalize();
        let (t_near, t_far) = self.depth_range();
        Ray {
            origin: self.position,
            dir,
            t_near,
            t_far,
        }
    }

    /// Ray for a row-major pixel id.
    pub fn pixel_id_ray(&self, id: usize) -> Ray {
        let res = self.intrinsics.res;
        self.pixel_ray(id % res, id / res)
    }
}

fn orthogonalize(v: Vec3, axis: &Vec3) -> Vec3 {
    v - axis * v.dot(axis)
}

pub(crate) fn check_on_sphere(position: &Vec3, radius: f64) -> Result<()> {
    let off = (position.norm() - radius).abs();
    if !(off <= SPHERE_TOLERANCE) {
        return Err(Error::Pose(format!(
            "camera at {:?} is {off:e} off the search sphere of radius {radius}",
            position.as_slice()
        )));
    }
    Ok(())
}

/// All pixel rays, row-major.
pub fn pixel_rays(cam: &Camera) -> Vec<Ray> {
    (0..cam.pixel_count()).map(|id| cam.pixel_id_ray(id)).collect()
}

/// Pixel ids drawn uniformly: without replacement when `n <= res^2`,
/// with replacement otherwise.
pub fn sample_pixel_ids(cam: &Camera, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::domain("cannot sample zero rays"));
    }
    let total = cam.pixel_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n <= total {
        Ok(index::sample(&mut rng, total, n).into_vec())
    } else {
        Ok((0..n).map(|_| rng.random_range(0..total)).collect())
    }
}

/// `n` rays through seeded random pixels of `cam`.
pub fn sample_rays(cam: &Camera, n: usize, seed: u64) -> Result<Vec<Ray>> {
    Ok(sample_pixel_ids(cam, n, seed)?
        .into_iter()
        .map(|id| cam.pixel_id_ray(id))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn cam(pos: Vec3, res: usize) -> Camera {
        Camera::look_at_origin(
            pos,
            Intrinsics {
                fov_deg: 60.0,
                res,
            },
        )
        .unwrap()
    }

    #[test]
    fn frame_is_orthonormal_everywhere() {
        for pos in [
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::new(0.0, 0.0, -2.0),
            Vec3::new(1.0, -1.2, 0.7),
        ] {
            let c = cam(pos, 8);
            assert!((c.forward().norm() - 1.0).abs() < 1e-12);
            assert!((c.up().norm() - 1.0).abs() < 1e-12);
            assert!(c.forward().dot(&c.up()).abs() < 1e-12);
            assert!((c.forward() + pos / pos.norm()).norm() < 1e-12);
        }
    }

    #[test]
    fn centre_pixel_is_optical_axis() {
        let c = cam(Vec3::new(1.0, 1.0, 1.0).normalize() * 2.0, 9);
        let r = c.pixel_ray(4, 4);
        assert!((r.dir - c.forward()).norm() < 1e-9);
    }

    #[test]
    fn rays_are_unit_and_ranges_cover_the_box() {
        let c = cam(Vec3::new(0.0, 2.0, 0.0), 16);
        for r in pixel_rays(&c) {
            assert!((r.dir.norm() - 1.0).abs() < 1e-12);
            assert!((r.t_near - (2.0 - 3f64.sqrt())).abs() < 1e-12);
            assert!((r.t_far - (2.0 + 3f64.sqrt())).abs() < 1e-12);
        }
        let close = cam(Vec3::new(0.0, 1.75, 0.0), 4);
        assert_eq!(close.pixel_ray(0, 0).t_near, MIN_NEAR);
    }

    #[test]
    fn corner_pixel_angle_matches_trigonometry() {
        let res = 64;
        let c = cam(Vec3::new(2.0, 0.0, 0.0), res);
        let r = c.pixel_ray(0, 0);
        // Independent recomputation: the corner pixel centre sits at
        // (1 - 1/res) * tan(fov/2) along both image axes.
        let t = (1.0 - 1.0 / res as f64) * 30f64.to_radians().tan();
        let expected = (t * 2f64.sqrt()).atan();
        let angle = r.dir.dot(&c.forward()).clamp(-1.0, 1.0).acos();
        assert!((angle - expected).abs() < 1e-12);
        // Upper-left: up component positive, right component negative.
        assert!(r.dir.dot(&c.up()) > 0.0);
        assert!(r.dir.dot(&c.right()) < 0.0);
    }

    #[test]
    fn sampling_is_seeded_and_distinct() {
        let c = cam(Vec3::new(0.0, 0.0, 2.0), 128);
        let a = sample_pixel_ids(&c, 1024, 5).unwrap();
        let b = sample_pixel_ids(&c, 1024, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 1024);
        assert_ne!(a, sample_pixel_ids(&c, 1024, 6).unwrap());
        assert!(sample_pixel_ids(&c, 0, 5).is_err());
    }

    #[test]
    fn full_sample_equals_pixel_grid() {
        let c = cam(Vec3::new(0.0, 0.0, 2.0), 6);
        let mut ids = sample_pixel_ids(&c, 36, 1).unwrap();
        ids.sort_unstable();
        assert_eq!(ids, (0..36).collect::<Vec<_>>());
        assert_eq!(sample_pixel_ids(&c, 50, 1).unwrap().len(), 50);
    }

    #[test]
    fn sphere_check() {
        assert!(Camera::on_sphere(Vec3::new(0.0, 0.0, 2.0), 2.0, Intrinsics::default()).is_ok());
        assert!(matches!(
            Camera::on_sphere(Vec3::new(0.0, 0.0, 2.1), 2.0, Intrinsics::default()),
            Err(Error::Pose(_))
        ));
    }
}
