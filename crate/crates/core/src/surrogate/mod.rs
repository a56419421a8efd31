//! A deterministic stand-in for a learned reconstruction model.
//!
//! The reconstructor starts from a corrupted prior (blurred, warped and
//! noised copy of the ground truth) and blends toward the ground truth in
//! voxels that acquired views have actually seen, stopping at the first
//! surface each ray hits.

mod noise;

pub use noise::ValueNoise;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{voxelize, FieldKind, OccupancyField, VoxelGrid};
use crate::geometry::{Aabb, Rgb, Vec3};
use crate::render::{check_on_sphere, pixel_rays, Camera, Intrinsics, DEFAULT_SAMPLES};
use crate::uncertainty::recalibrate_unchecked;

/// Number of points in the blur kernel.
const BLUR_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSpec {
    pub blur_radius: f64,
    /// Noise weight `eta` in `[0, 1]`.
    pub noise_amplitude: f64,
    pub noise_scale: f64,
    /// Calibration warp `gamma` applied to the blurred occupancy.
    pub corruption_beta: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            blur_radius: 0.1,
            noise_amplitude: 0.4,
            noise_scale: 0.35,
            corruption_beta: 2.5,
        }
    }
}

impl PriorSpec {
    /// A prior identical to the ground truth.
    pub fn identity() -> Self {
        Self {
            blur_radius: 0.0,
            noise_amplitude: 0.0,
            noise_scale: 1.0,
            corruption_beta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.blur_radius >= 0.0 && self.blur_radius.is_finite()) {
            return Err(Error::Config(format!("blur_radius must be >= 0, got {}", self.blur_radius)));
        }
        if !(0.0..=1.0).contains(&self.noise_amplitude) {
            return Err(Error::Config(format!(
                "noise_amplitude must lie in [0, 1], got {}",
                self.noise_amplitude
            )));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!("noise_scale must be positive, got {}", self.noise_scale)));
        }
        if !(self.corruption_beta > 0.0 && self.corruption_beta.is_finite()) {
            return Err(Error::Config(format!(
                "corruption_beta must be positive, got {}",
                self.corruption_beta
            )));
        }
        Ok(())
    }
}

/// Low-discrepancy points filling the unit ball: spherical Fibonacci
/// directions with cube-root radial spacing.
fn ball_offsets(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let f = (i as f64 + 0.5) / n as f64;
            let z = 1.0 - 2.0 * f;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let r = ((i as f64 + 0.5) / n as f64).cbrt();
            Vec3::new(rho * phi.cos(), rho * phi.sin(), z) * r
        })
        .collect()
}

/// The corrupted prior field.
#[derive(Clone)]
pub struct PriorField {
    gt: Arc<dyn OccupancyField>,
    spec: PriorSpec,
    noise: ValueNoise,
    offsets: Vec<Vec3>,
    /// Cached occupancy, sampled trilinearly in place of the exact formula.
    baked: Option<VoxelGrid>,
}

impl std::fmt::Debug for PriorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PriorField")
            .field("spec", &self.spec)
            .field("baked", &self.baked.as_ref().map(|g| g.dims()))
            .finish()
    }
}

/// Builds the prior `clamp((1 - eta) * recal(blur(o_gt), gamma) + eta * n)`.
pub fn make_prior(gt: Arc<dyn OccupancyField>, spec: &PriorSpec, seed: u64) -> Result<PriorField> {
    spec.validate()?;
    let offsets = if spec.blur_radius > 0.0 {
        ball_offsets(BLUR_POINTS)
            .into_iter()
            .map(|o| o * spec.blur_radius)
            .collect()
    } else {
        Vec::new()
    };
    Ok(PriorField {
        gt,
        spec: *spec,
        noise: ValueNoise::new(seed, spec.noise_scale),
        offsets,
        baked: None,
    })
}

impl PriorField {
    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    /// Averages the ground truth over the blur kernel.
    pub fn blurred(&self, p: &Vec3) -> f64 {
        if self.offsets.is_empty() {
            return self.gt.occupancy_at(p);
        }
        self.offsets
            .iter()
            .map(|o| self.gt.occupancy_at(&(p + o)))
            .sum::<f64>()
            / self.offsets.len() as f64
    }

    pub fn noise_at(&self, p: &Vec3) -> f64 {
        self.noise.at(p)
    }

    /// The prior formula, ignoring any cache.
    pub fn exact_occupancy(&self, p: &Vec3) -> f64 {
        if !self.gt.bounds().contains(p) {
            return 0.0;
        }
        let eta = self.spec.noise_amplitude;
        let signal = if eta < 1.0 {
            recalibrate_unchecked(self.blurred(p).clamp(0.0, 1.0), self.spec.corruption_beta)
        } else {
            0.0
        };
        ((1.0 - eta) * signal + eta * self.noise.at(p)).clamp(0.0, 1.0)
    }

    /// Replaces exact evaluation by trilinear lookup in a `res^3` grid over
    /// the canonical box. Cheaper by an order of magnitude; the noise and blur
    /// are smooth at the default scales, so the error is small.
    pub fn baked(mut self, res: usize) -> Result<Self> {
        self.baked = None;
        let grid = voxelize(&ExactPrior(&self), res)?;
        self.baked = Some(grid);
        Ok(self)
    }

    pub fn is_baked(&self) -> bool {
        self.baked.is_some()
    }
}

struct ExactPrior<'a>(&'a PriorField);

impl OccupancyField for ExactPrior<'_> {
    fn kind(&self) -> FieldKind {
        FieldKind::SurrogatePrior
    }
    fn bounds(&self) -> Aabb {
        self.0.gt.bounds()
    }
    fn occupancy_at(&self, p: &Vec3) -> f64 {
        self.0.exact_occupancy(p)
    }
    fn colour_at(&self, p: &Vec3) -> Rgb {
        self.0.colour_at(p)
    }
}

impl OccupancyField for PriorField {
    fn kind(&self) -> FieldKind {
        FieldKind::SurrogatePrior
    }

    fn bounds(&self) -> Aabb {
        self.gt.bounds()
    }

    #[inline]
    fn occupancy_at(&self, p: &Vec3) -> f64 {
        match &self.baked {
            Some(grid) => grid.sample(p),
            None => self.exact_occupancy(p),
        }
    }

    /// Ground-truth colour washed toward grey by the noise.
    fn colour_at(&self, p: &Vec3) -> Rgb {
        if !self.gt.bounds().contains(p) {
            return [0.0; 3];
        }
        let eta = self.spec.noise_amplitude;
        let grey = self.noise.at(p);
        let c = self.gt.colour_at(p);
        c.map(|v| ((1.0 - eta) * v + eta * grey).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    /// Visibility grid resolution per side.
    pub res_w: usize,
    /// Rays per side cast when a view is acquired.
    pub res_acq: usize,
    pub n_samples: usize,
    /// Resolution at which the prior is cached; `None` evaluates it exactly.
    pub prior_bake_res: Option<usize>,
    pub camera_radius: f64,
    pub fov_deg: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            res_w: 64,
            res_acq: 64,
            n_samples: DEFAULT_SAMPLES,
            prior_bake_res: Some(64),
            camera_radius: crate::render::DEFAULT_CAMERA_RADIUS,
            fov_deg: crate::render::DEFAULT_FOV_DEG,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.res_w < 2 || self.res_acq == 0 || self.n_samples == 0 {
            return Err(Error::Config(format!("invalid surrogate resolutions {self:?}")));
        }
        if self.prior_bake_res.is_some_and(|r| r < 2) {
            return Err(Error::Config("prior_bake_res must be >= 2".into()));
        }
        if !(self.camera_radius > crate::render::BOUNDING_RADIUS) {
            return Err(Error::Config(format!(
                "camera_radius must exceed the box's bounding radius, got {}",
                self.camera_radius
            )));
        }
        Ok(())
    }
}

/// Ground truth, prior, and the visibility grid `W` built from acquired views.
#[derive(Debug, Clone)]
pub struct SurrogateReconstructor {
    gt: Arc<dyn OccupancyField>,
    prior: PriorField,
    confidence: VoxelGrid,
    acquired: Vec<Camera>,
    config: SurrogateConfig,
    /// True until the first view leaves some voxel below one.
    saturated: bool,
}

impl SurrogateReconstructor {
    pub fn new(
        gt: Arc<dyn OccupancyField>,
        spec: &PriorSpec,
        seed: u64,
        config: SurrogateConfig,
    ) -> Result<Self> {
        let mut prior = make_prior(gt.clone(), spec, seed)?;
        if let Some(res) = config.prior_bake_res {
            prior = prior.baked(res)?;
        }
        Self::with_prior(gt, prior, config)
    }

    /// Uses an already-built prior, e.g. one cached across episodes.
    pub fn with_prior(gt: Arc<dyn OccupancyField>, prior: PriorField, config: SurrogateConfig) -> Result<Self> {
        config.validate()?;
        let confidence = VoxelGrid::filled([config.res_w; 3], Aabb::CANONICAL, 0.0)?;
        Ok(Self {
            gt,
            prior,
            confidence,
            acquired: Vec::new(),
            config,
            saturated: false,
        })
    }

    pub fn gt(&self) -> &Arc<dyn OccupancyField> {
        &self.gt
    }

    pub fn prior(&self) -> &PriorField {
        &self.prior
    }

    pub fn confidence(&self) -> &VoxelGrid {
        &self.confidence
    }

    pub fn acquired(&self) -> &[Camera] {
        &self.acquired
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }

    /// Marks every voxel seen by `cam` up to and including each ray's first
    /// sample with ground-truth occupancy `>= 0.5`.
    pub fn acquire_view(&mut self, cam: &Camera) -> Result<()> {
        check_on_sphere(&cam.position(), self.config.camera_radius)?;
        let probe = Camera::look_at_origin(
            cam.position(),
            Intrinsics {
                fov_deg: cam.intrinsics().fov_deg,
                res: self.config.res_acq,
            },
        )?;
        let n = self.config.n_samples;
        let gt = &self.gt;
        let grid = &self.confidence;
        let seen: Vec<Vec<usize>> = pixel_rays(&probe)
            .par_iter()
            .map(|ray| {
                let dt = ray.length() / n as f64;
                let mut cells = Vec::new();
                for i in 0..n {
                    let p = ray.at(ray.t_near + (i as f64 + 0.5) * dt);
                    if let Some(c) = grid.cell_index(&p) {
                        cells.push(c);
                    }
                    if gt.occupancy_at(&p) >= 0.5 {
                        break;
                    }
                }
                cells
            })
            .collect();
        for c in seen.into_iter().flatten() {
            self.confidence.raise(c, 1.0);
        }
        self.saturated = self.confidence.values().iter().all(|&v| v >= 1.0);
        self.acquired.push(*cam);
        Ok(())
    }

    /// The current prediction, blending ground truth and prior by `W`.
    pub fn predicted_field(&self) -> PredictedField<'_> {
        PredictedField { recon: self }
    }

    /// Replaces `W`; for tests and debugging dumps.
    pub fn set_confidence(&mut self, grid: VoxelGrid) -> Result<()> {
        if grid.dims() != self.confidence.dims() || grid.bounds() != self.confidence.bounds() {
            return Err(Error::domain("confidence grid layout mismatch"));
        }
        self.saturated = grid.values().iter().all(|&v| v >= 1.0);
        self.confidence = grid;
        Ok(())
    }
}

/// `o_pred = w o_gt + (1 - w) o_prior`, with `w` interpolated from `W`.
#[derive(Debug, Clone, Copy)]
pub struct PredictedField<'a> {
    recon: &'a SurrogateReconstructor,
}

impl PredictedField<'_> {
    #[inline]
    pub fn weight(&self, p: &Vec3) -> f64 {
        if self.recon.saturated {
            return 1.0;
        }
        self.recon.confidence.sample(p)
    }
}

impl OccupancyField for PredictedField<'_> {
    fn kind(&self) -> FieldKind {
        FieldKind::SurrogatePredicted
    }

    fn bounds(&self) -> Aabb {
        self.recon.gt.bounds()
    }

    #[inline]
    fn occupancy_at(&self, p: &Vec3) -> f64 {
        if !self.bounds().contains(p) {
            return 0.0;
        }
        let w = self.weight(p);
        if w >= 1.0 {
            self.recon.gt.occupancy_at(p)
        } else if w <= 0.0 {
            self.recon.prior.occupancy_at(p)
        } else {
            w * self.recon.gt.occupancy_at(p) + (1.0 - w) * self.recon.prior.occupancy_at(p)
        }
    }

    fn colour_at(&self, p: &Vec3) -> Rgb {
        if !self.bounds().contains(p) {
            return [0.0; 3];
        }
        let w = self.weight(p);
        let g = self.recon.gt.colour_at(p);
        let q = self.recon.prior.colour_at(p);
        [0, 1, 2].map(|i| w * g[i] + (1.0 - w) * q[i])
    }
}
