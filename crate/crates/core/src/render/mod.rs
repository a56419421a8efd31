//! Ray quadrature and occupancy volume rendering.
//!
//! Along a ray with `n` evenly spaced midpoint samples the transmittance is
//! `T_i = exp(-sum_{j<i} o_j dt)`, the silhouette is `1 - T` after the last
//! sample, and colour integrates `T(t) o(t) c(t)` with `T` taken at each
//! sample position.

mod camera;

pub use camera::{
    pixel_rays, sample_pixel_ids, sample_rays, Camera, Intrinsics, Ray, BOUNDING_RADIUS,
    DEFAULT_CAMERA_RADIUS, DEFAULT_FOV_DEG, DEFAULT_RESOLUTION, MIN_NEAR, SPHERE_TOLERANCE,
};
pub(crate) use camera::check_on_sphere;

use std::path::Path;

use image::{GrayImage, Luma, Rgb as RgbPixel, RgbImage};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::OccupancyField;
use crate::geometry::{Rgb, Vec3};

pub const DEFAULT_SAMPLES: usize = 128;

/// Evenly spaced samples along one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayQuadrature {
    pub ts: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub occupancies: Vec<f64>,
    pub dt: f64,
}

impl RayQuadrature {
    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    /// Quadrature over explicit occupancies on `[t_near, t_far]`.
    pub fn from_occupancies(ray: &Ray, occupancies: Vec<f64>) -> Self {
        let n = occupancies.len();
        let dt = ray.length() / n as f64;
        let ts: Vec<f64> = (0..n).map(|i| sample_t(ray, i, dt)).collect();
        let positions = ts.iter().map(|&t| ray.at(t)).collect();
        Self {
            ts,
            positions,
            occupancies,
            dt,
        }
    }
}

#[inline]
fn sample_t(ray: &Ray, i: usize, dt: f64) -> f64 {
    ray.t_near + (i as f64 + 0.5) * dt
}

/// Samples `field` at `n` midpoints of `[t_near, t_far]`.
pub fn quadrature(field: &dyn OccupancyField, ray: &Ray, n: usize) -> Result<RayQuadrature> {
    if n == 0 {
        return Err(Error::domain("quadrature needs at least one sample"));
    }
    let dt = ray.length() / n as f64;
    let ts: Vec<f64> = (0..n).map(|i| sample_t(ray, i, dt)).collect();
    let positions: Vec<Vec3> = ts.iter().map(|&t| ray.at(t)).collect();
    let occupancies = positions.iter().map(|p| field.occupancy_at(p)).collect();
    Ok(RayQuadrature {
        ts,
        positions,
        occupancies,
        dt,
    })
}

/// Occupancies along `ray` written into `out`; returns the spacing.
#[inline]
pub(crate) fn sample_occupancies(
    field: &dyn OccupancyField,
    ray: &Ray,
    n: usize,
    out: &mut Vec<f64>,
) -> f64 {
    let dt = ray.length() / n as f64;
    out.clear();
    out.extend((0..n).map(|i| field.occupancy_at(&ray.at(sample_t(ray, i, dt)))));
    dt
}

/// Left-Riemann transmittance at the start of each sample cell; `T_0 = 1`.
pub fn transmittance(q: &RayQuadrature) -> Vec<f64> {
    transmittance_of(&q.occupancies, q.dt)
}

pub(crate) fn transmittance_of(occupancies: &[f64], dt: f64) -> Vec<f64> {
    let mut acc = 0.0f64;
    occupancies
        .iter()
        .map(|o| {
            let t = (-acc).exp();
            acc += o * dt;
            t
        })
        .collect()
}

/// Transmittance remaining after the last sample.
pub fn final_transmittance(q: &RayQuadrature) -> f64 {
    final_transmittance_of(&q.occupancies, q.dt)
}

#[inline]
pub(crate) fn final_transmittance_of(occupancies: &[f64], dt: f64) -> f64 {
    (-occupancies.iter().sum::<f64>() * dt).exp()
}

/// `s(r) = 1 - T_final`.
pub fn silhouette(field: &dyn OccupancyField, ray: &Ray, n: usize) -> Result<f64> {
    let q = quadrature(field, ray, n)?;
    Ok(silhouette_of(&q.occupancies, q.dt))
}

#[inline]
pub(crate) fn silhouette_of(occupancies: &[f64], dt: f64) -> f64 {
    (1.0 - final_transmittance_of(occupancies, dt)).clamp(0.0, 1.0)
}

/// Expected colour along `ray`, clamped to `[0, 1]`.
pub fn composite_colour(field: &dyn OccupancyField, ray: &Ray, n: usize) -> Result<Rgb> {
    if n == 0 {
        return Err(Error::domain("quadrature needs at least one sample"));
    }
    Ok(shade_ray(field, ray, n).0)
}

/// Colour and silhouette from a single pass over the ray.
fn shade_ray(field: &dyn OccupancyField, ray: &Ray, n: usize) -> (Rgb, f64) {
    let dt = ray.length() / n as f64;
    let mut acc = 0.0f64;
    let mut colour = [0.0; 3];
    for i in 0..n {
        let (o, c) = field.sample(&ray.at(sample_t(ray, i, dt)));
        let w = (-(acc + 0.5 * o * dt)).exp() * o * dt;
        for k in 0..3 {
            colour[k] += w * c[k];
        }
        acc += o * dt;
    }
    let silhouette = (1.0 - (-acc).exp()).clamp(0.0, 1.0);
    (colour.map(|c| c.clamp(0.0, 1.0)), silhouette)
}

/// A rendered view: row-major RGB and silhouette channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub res: usize,
    pub rgb: Vec<Rgb>,
    pub silhouette: Vec<f64>,
}

impl RenderedImage {
    /// Flattened RGB channel values in `[0, 1]`.
    pub fn channels(&self) -> Vec<f64> {
        self.rgb.iter().flat_map(|c| c.iter().copied()).collect()
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let res = self.res as u32;
        RgbImage::from_fn(res, res, |x, y| {
            let c = self.rgb[(y * res + x) as usize];
            RgbPixel(c.map(to_u8))
        })
    }

    pub fn silhouette_to_gray8(&self) -> GrayImage {
        let res = self.res as u32;
        GrayImage::from_fn(res, res, |x, y| {
            Luma([to_u8(self.silhouette[(y * res + x) as usize])])
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_rgb8().save(path.as_ref())?)
    }

    pub fn save_silhouette_png(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.silhouette_to_gray8().save(path.as_ref())?)
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Renders every pixel of `cam` with `n` samples per ray.
pub fn render_image(field: &dyn OccupancyField, cam: &Camera, n: usize) -> Result<RenderedImage> {
    if n == 0 {
        return Err(Error::domain("quadrature needs at least one sample"));
    }
    let res = cam.res();
    let shaded: Vec<(Rgb, f64)> = (0..res * res)
        .into_par_iter()
        .map(|id| shade_ray(field, &cam.pixel_id_ray(id), n))
        .collect();
    let (rgb, silhouette) = shaded.into_iter().unzip();
    Ok(RenderedImage {
        res,
        rgb,
        silhouette,
    })
}
