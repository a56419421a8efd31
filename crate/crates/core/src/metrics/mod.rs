//! Volumetric IoU and rendered-view PSNR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{voxelize, OccupancyField, VoxelGrid};
use crate::policies::uniform_sphere_point;
use crate::render::{render_image, Camera, Intrinsics, RenderedImage, DEFAULT_CAMERA_RADIUS, DEFAULT_FOV_DEG};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;
pub const DEFAULT_IOU_RES: usize = 64;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// IoU of two already-voxelized grids binarized at `threshold`; 1 when both
/// are empty.
pub fn grid_iou(a: &VoxelGrid, b: &VoxelGrid, threshold: f64) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::domain(format!("grid dims differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    let t = threshold as f32;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        let (x, y) = (x >= t, y >= t);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// IoU of two fields voxelized at `res^3` over the canonical box.
pub fn iou(pred: &dyn OccupancyField, gt: &dyn OccupancyField, res: usize, threshold: f64) -> Result<f64> {
    grid_iou(&voxelize(pred, res)?, &voxelize(gt, res)?, threshold)
}

/// `10 log10(1 / MSE)` over all channels, capped for identical inputs.
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::domain(format!("image sizes differ or are empty: {} vs {}", a.len(), b.len())));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

pub fn image_psnr(a: &RenderedImage, b: &RenderedImage) -> Result<f64> {
    if a.res != b.res {
        return Err(Error::domain(format!("image resolutions differ: {} vs {}", a.res, b.res)));
    }
    psnr(&a.channels(), &b.channels())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_res: usize,
    pub iou_threshold: f64,
    pub n_psnr_views: usize,
    /// Pixels per side of evaluation renders.
    pub psnr_res: usize,
    pub n_samples: usize,
    pub eval_seed: u64,
    pub camera_radius: f64,
    pub fov_deg: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_res: DEFAULT_IOU_RES,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            n_psnr_views: 20,
            psnr_res: 32,
            n_samples: crate::render::DEFAULT_SAMPLES,
            eval_seed: 0,
            camera_radius: DEFAULT_CAMERA_RADIUS,
            fov_deg: DEFAULT_FOV_DEG,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_res < 2 {
            return Err(Error::Config("iou_res must be >= 2".into()));
        }
        if self.n_psnr_views == 0 || self.psnr_res == 0 || self.n_samples == 0 {
            return Err(Error::Config("psnr views, resolution and samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// `n` evaluation cameras drawn uniformly on the sphere from `seed`.
pub fn eval_cameras(n: usize, seed: u64, radius: f64, intrinsics: Intrinsics) -> Result<Vec<Camera>> {
    if n == 0 {
        return Err(Error::domain("need at least one evaluation view"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Camera::look_at_origin(uniform_sphere_point(&mut rng, radius), intrinsics))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub iou: f64,
    pub psnr_mean: f64,
    pub psnr_per_view: Vec<f64>,
    pub n_eval_views: usize,
    pub eval_seed: u64,
}

/// Ground-truth renders and voxels, reused across every evaluation of a scene.
#[derive(Debug, Clone)]
pub struct GroundTruthCache {
    pub config: EvalConfig,
    pub cameras: Vec<Camera>,
    pub images: Vec<RenderedImage>,
    pub voxels: VoxelGrid,
}

impl GroundTruthCache {
    pub fn new(gt: &dyn OccupancyField, config: &EvalConfig) -> Result<Self> {
        config.validate()?;
        let intr = Intrinsics {
            fov_deg: config.fov_deg,
            res: config.psnr_res,
        };
        let cameras = eval_cameras(config.n_psnr_views, config.eval_seed, config.camera_radius, intr)?;
        let images = cameras
            .iter()
            .map(|c| render_image(gt, c, config.n_samples))
            .collect::<Result<_>>()?;
        Ok(Self {
            config: *config,
            cameras,
            images,
            voxels: voxelize(gt, config.iou_res)?,
        })
    }

    /// PSNR of `pred` against the cached renders.
    pub fn views_psnr(&self, pred: &dyn OccupancyField) -> Result<(f64, Vec<f64>)> {
        let per_view = self
            .cameras
            .iter()
            .zip(&self.images)
            .map(|(c, gt)| image_psnr(&render_image(pred, c, self.config.n_samples)?, gt))
            .collect::<Result<Vec<f64>>>()?;
        let mean = per_view.iter().sum::<f64>() / per_view.len() as f64;
        Ok((mean, per_view))
    }

    pub fn evaluate(&self, pred: &dyn OccupancyField) -> Result<EvalReport> {
        let iou = grid_iou(&voxelize(pred, self.config.iou_res)?, &self.voxels, self.config.iou_threshold)?;
        let (psnr_mean, psnr_per_view) = self.views_psnr(pred)?;
        Ok(EvalReport {
            iou,
            psnr_mean,
            n_eval_views: psnr_per_view.len(),
            psnr_per_view,
            eval_seed: self.config.eval_seed,
        })
    }
}

/// Mean and per-view PSNR over `n_views` seeded sphere views.
pub fn eval_views_psnr(
    pred: &dyn OccupancyField,
    gt: &dyn OccupancyField,
    n_views: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let config = EvalConfig {
        n_psnr_views: n_views,
        eval_seed: seed,
        iou_res: 2,
        ..EvalConfig::default()
    };
    GroundTruthCache::new(gt, &config)?.views_psnr(pred)
}
