//! Occupancy, silhouette, depth and view uncertainty.
//!
//! Per-point uncertainty measures the calibrated distance of an occupancy
//! from the 0.5 decision boundary. Along a ray it is accumulated with an
//! uncertainty transmittance `T_u` that decays only where the occupancy is
//! confidently positive, and damped by a rate-of-change correction `d` inside
//! sharp transition bands. A view's uncertainty averages
//! `(u_sil + lambda) * u_depth` over sampled rays.

mod calibration;
mod diagnostic;

pub use calibration::{
    calibration_curve, calibration_error, calibration_sweep, CalibrationBin,
    DEFAULT_CALIBRATION_BINS,
};
pub use diagnostic::{ray_diagnostic, write_diagnostic_csv, DiagnosticRow, DIAGNOSTIC_HEADER};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::OccupancyField;
use crate::render::{sample_occupancies, sample_rays, Camera, RayQuadrature, DEFAULT_SAMPLES};
use crate::render::{silhouette_of, Ray};

/// Rate-of-change exponent: one value, or one per selection step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaD {
    Scalar(f64),
    Schedule(Vec<f64>),
}

impl LambdaD {
    /// The exponent used when no selection index applies: the scalar, or the
    /// first schedule entry.
    pub fn current(&self) -> f64 {
        match self {
            LambdaD::Scalar(v) => *v,
            LambdaD::Schedule(s) => s.first().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyParams {
    /// Calibration exponent for plain occupancy uncertainty.
    pub beta: f64,
    /// Silhouette uncertainty exponent.
    pub lambda_s: f64,
    /// Point uncertainty exponent along rays.
    pub lambda_u: f64,
    /// Uncertainty-transmittance smoothing exponent.
    pub lambda_t: f64,
    pub lambda_d: LambdaD,
    /// Floor added to silhouette uncertainty before weighting depth.
    pub lambda: f64,
    #[serde(default = "yes")]
    pub use_sil: bool,
    #[serde(default = "yes")]
    pub use_depth: bool,
    #[serde(default = "yes")]
    pub use_tu: bool,
    #[serde(default = "yes")]
    pub use_d: bool,
    #[serde(default)]
    pub silhouette_only: bool,
}

fn yes() -> bool {
    true
}

impl Default for UncertaintyParams {
    fn default() -> Self {
        Self::preset_3d()
    }
}

impl UncertaintyParams {
    /// Defaults for a model trained with 3D occupancy supervision.
    pub fn preset_3d() -> Self {
        Self {
            beta: 0.7,
            lambda_s: 2.0,
            lambda_u: 2.0,
            lambda_t: 4.0,
            lambda_d: LambdaD::Scalar(0.5),
            lambda: 1.0,
            use_sil: true,
            use_depth: true,
            use_tu: true,
            use_d: true,
            silhouette_only: false,
        }
    }

    /// Defaults for a model trained from renderings; `lambda_d` follows a
    /// per-selection schedule.
    pub fn preset_2d() -> Self {
        Self {
            lambda_s: 0.5,
            lambda_u: 4.0,
            lambda_t: 4.0,
            lambda_d: LambdaD::Schedule(vec![10.0, 2.0, 0.5, 0.2]),
            lambda: 0.0,
            ..Self::preset_3d()
        }
    }

    /// Silhouette uncertainty only, for scenes with poor local occupancy.
    pub fn preset_silhouette() -> Self {
        Self {
            lambda_s: 0.5,
            silhouette_only: true,
            ..Self::preset_2d()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "3d" => Ok(Self::preset_3d()),
            "2d" => Ok(Self::preset_2d()),
            "silhouette" => Ok(Self::preset_silhouette()),
            other => Err(Error::Config(format!("unknown uncertainty preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("lambda_s", self.lambda_s),
            ("lambda_u", self.lambda_u),
            ("lambda_t", self.lambda_t),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        match &self.lambda_d {
            LambdaD::Scalar(v) if !(*v > 0.0 && v.is_finite()) => {
                return Err(Error::Config(format!("lambda_d must be positive, got {v}")))
            }
            LambdaD::Schedule(s) if s.is_empty() || s.iter().any(|v| !(*v > 0.0 && v.is_finite())) => {
                return Err(Error::Config(
                    "lambda_d schedule must be non-empty and positive".into(),
                ))
            }
            _ => {}
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Parameters for the `selection`-th policy decision (0-based): a
    /// schedule is resolved to its entry for that step.
    pub fn at_selection(&self, selection: usize) -> Result<Self> {
        let lambda_d = match &self.lambda_d {
            LambdaD::Scalar(v) => *v,
            LambdaD::Schedule(s) => *s.get(selection).ok_or_else(|| {
                Error::Config(format!(
                    "lambda_d schedule has {} entries, selection {} requested",
                    s.len(),
                    selection + 1
                ))
            })?,
        };
        Ok(Self {
            lambda_d: LambdaD::Scalar(lambda_d),
            ..self.clone()
        })
    }
}

/// Ray and sample counts used to estimate a view's uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSampling {
    pub n_rays: usize,
    pub n_samples: usize,
}

impl Default for ViewSampling {
    fn default() -> Self {
        Self {
            n_rays: 1024,
            n_samples: DEFAULT_SAMPLES,
        }
    }
}

impl ViewSampling {
    pub fn validate(&self) -> Result<()> {
        if self.n_rays == 0 {
            return Err(Error::Config("n_rays must be >= 1".into()));
        }
        if self.n_samples < 3 {
            return Err(Error::Config("n_samples must be >= 3".into()));
        }
        Ok(())
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn check_exponent(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

#[inline]
fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 4.0 {
        let x2 = x * x;
        x2 * x2
    } else if e == 0.5 {
        x.sqrt()
    } else {
        x.powf(e)
    }
}

/// `1 - (2 |o - 0.5|)^e`, unchecked.
#[inline]
pub(crate) fn boundary_uncertainty(o: f64, e: f64) -> f64 {
    1.0 - pow((2.0 * (o - 0.5).abs()).min(1.0), e)
}

/// Uncertainty of an occupancy prediction: `1 - (2 |o - 0.5|)^beta`.
pub fn occupancy_uncertainty(o: f64, beta: f64) -> Result<f64> {
    check_unit("occupancy", o)?;
    check_exponent("beta", beta)?;
    Ok(boundary_uncertainty(o, beta))
}

/// Side-preserving recalibration of `o`: the distance `2 |o - 0.5|` from
/// the boundary is raised to `beta`. `beta = 1` is the identity and
/// recalibrating with `beta` then `1 / beta` round-trips.
pub fn recalibrate(o: f64, beta: f64) -> Result<f64> {
    check_unit("occupancy", o)?;
    check_exponent("beta", beta)?;
    Ok(recalibrate_unchecked(o, beta))
}

#[inline]
pub(crate) fn recalibrate_unchecked(o: f64, beta: f64) -> f64 {
    if beta == 1.0 {
        return o;
    }
    if o >= 0.5 {
        0.5 * (1.0 + pow((2.0 * o - 1.0).min(1.0), beta))
    } else {
        0.5 * (1.0 - pow((1.0 - 2.0 * o).min(1.0), beta))
    }
}

/// `u_sil = 1 - (2 |s - 0.5|)^lambda_s`.
pub fn silhouette_uncertainty(s: f64, lambda_s: f64) -> Result<f64> {
    check_unit("silhouette", s)?;
    check_exponent("lambda_s", lambda_s)?;
    Ok(boundary_uncertainty(s, lambda_s))
}

/// `T_u_i = exp(-sum_{j<i} [o_j > 0.5] |o_j - 0.5|^lambda_t dt)`.
pub fn uncertainty_transmittance(q: &RayQuadrature, lambda_t: f64) -> Result<Vec<f64>> {
    check_exponent("lambda_t", lambda_t)?;
    let mut acc = 0.0f64;
    Ok(q.occupancies
        .iter()
        .map(|&o| {
            let t = (-acc).exp();
            acc += uncertainty_absorption(o, lambda_t) * q.dt;
            t
        })
        .collect())
}

#[inline]
fn uncertainty_absorption(o: f64, lambda_t: f64) -> f64 {
    if o > 0.5 {
        pow(o - 0.5, lambda_t)
    } else {
        0.0
    }
}

/// Occupancy change across each sample, `|o_{i+1} - o_{i-1}|`, one-sided
/// at the ends, clamped to `[0, 1]`.
#[inline]
fn occupancy_gradient(occ: &[f64], i: usize) -> f64 {
    let n = occ.len();
    let g = if i == 0 {
        occ[1] - occ[0]
    } else if i == n - 1 {
        occ[n - 1] - occ[n - 2]
    } else {
        occ[i + 1] - occ[i - 1]
    };
    g.abs().clamp(0.0, 1.0)
}

/// Rate-of-change correction `d_i = 1 - (grad_i)^lambda_d`.
pub fn rate_correction(q: &RayQuadrature, lambda_d: f64) -> Result<Vec<f64>> {
    check_exponent("lambda_d", lambda_d)?;
    if q.len() < 3 {
        return Err(Error::domain(format!(
            "rate correction needs at least 3 samples, got {}",
            q.len()
        )));
    }
    Ok((0..q.len())
        .map(|i| 1.0 - pow(occupancy_gradient(&q.occupancies, i), lambda_d))
        .collect())
}

/// Depth uncertainty of one ray with its per-sample terms.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthUncertainty {
    pub u_depth: f64,
    pub u_p: Vec<f64>,
    /// Accumulation weights actually used (`T_u`, or `T` when `use_tu` is off).
    pub accumulation: Vec<f64>,
    /// Correction actually used (`d`, or ones when `use_d` is off).
    pub correction: Vec<f64>,
}

/// `u_depth = sum_i T_u_i d_i u_p_i dt`, honouring the ablation switches.
pub fn depth_uncertainty(q: &RayQuadrature, params: &UncertaintyParams) -> Result<DepthUncertainty> {
    if q.len() < 3 {
        return Err(Error::domain(format!(
            "depth uncertainty needs at least 3 samples, got {}",
            q.len()
        )));
    }
    let lambda_d = params.lambda_d.current();
    check_exponent("lambda_d", lambda_d)?;
    check_exponent("lambda_u", params.lambda_u)?;
    check_exponent("lambda_t", params.lambda_t)?;
    let accumulation = if params.use_tu {
        uncertainty_transmittance(q, params.lambda_t)?
    } else {
        crate::render::transmittance(q)
    };
    let correction = if params.use_d {
        rate_correction(q, lambda_d)?
    } else {
        vec![1.0; q.len()]
    };
    let u_p: Vec<f64> = q
        .occupancies
        .iter()
        .map(|&o| boundary_uncertainty(o, params.lambda_u))
        .collect();
    let u_depth = (0..q.len())
        .map(|i| accumulation[i] * correction[i] * u_p[i] * q.dt)
        .sum();
    Ok(DepthUncertainty {
        u_depth,
        u_p,
        accumulation,
        correction,
    })
}

/// Silhouette and depth uncertainty of one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayUncertainty {
    pub silhouette: f64,
    pub u_sil: f64,
    pub u_depth: f64,
}

/// Single-pass ray uncertainty over sampled occupancies; same arithmetic as
/// [`depth_uncertainty`] without the per-sample arrays.
pub(crate) fn ray_uncertainty_of(occ: &[f64], dt: f64, params: &UncertaintyParams) -> RayUncertainty {
    let lambda_d = params.lambda_d.current();
    let silhouette = silhouette_of(occ, dt);
    let u_sil = boundary_uncertainty(silhouette, params.lambda_s);
    let mut acc_u = 0.0f64;
    let mut acc_t = 0.0f64;
    let mut u_depth = 0.0;
    for (i, &o) in occ.iter().enumerate() {
        let weight = if params.use_tu {
            (-acc_u).exp()
        } else {
            (-acc_t).exp()
        };
        let d = if params.use_d {
            1.0 - pow(occupancy_gradient(occ, i), lambda_d)
        } else {
            1.0
        };
        u_depth += weight * d * boundary_uncertainty(o, params.lambda_u) * dt;
        acc_u += uncertainty_absorption(o, params.lambda_t) * dt;
        acc_t += o * dt;
    }
    RayUncertainty {
        silhouette,
        u_sil,
        u_depth,
    }
}

/// Uncertainty of a single ray through `field`.
pub fn ray_uncertainty(
    field: &dyn OccupancyField,
    ray: &Ray,
    params: &UncertaintyParams,
    n_samples: usize,
) -> Result<RayUncertainty> {
    if n_samples < 3 {
        return Err(Error::domain("ray uncertainty needs at least 3 samples"));
    }
    params.validate()?;
    let mut occ = Vec::with_capacity(n_samples);
    let dt = sample_occupancies(field, ray, n_samples, &mut occ);
    Ok(ray_uncertainty_of(&occ, dt, params))
}

/// A view's uncertainty with its mean silhouette and depth components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewUncertainty {
    pub value: f64,
    pub mean_u_sil: f64,
    pub mean_u_depth: f64,
}

impl ViewUncertainty {
    /// Combines per-ray terms according to the ablation switches.
    pub fn combine(rays: &[RayUncertainty], params: &UncertaintyParams) -> Self {
        let n = rays.len() as f64;
        let mut value = 0.0;
        let mut sil = 0.0;
        let mut depth = 0.0;
        for r in rays {
            value += if params.silhouette_only {
                r.u_sil
            } else {
                let s = if params.use_sil { r.u_sil } else { 0.0 };
                let d = if params.use_depth { r.u_depth } else { 1.0 };
                (s + params.lambda) * d
            };
            sil += r.u_sil;
            depth += r.u_depth;
        }
        Self {
            value: value / n,
            mean_u_sil: sil / n,
            mean_u_depth: depth / n,
        }
    }
}

/// Uncertainty of the view from `cam` over `sampling.n_rays` seeded rays.
pub fn view_uncertainty(
    field: &dyn OccupancyField,
    cam: &Camera,
    params: &UncertaintyParams,
    sampling: &ViewSampling,
    seed: u64,
) -> Result<ViewUncertainty> {
    params.validate()?;
    sampling.validate()?;
    let rays = sample_rays(cam, sampling.n_rays, seed)?;
    let per_ray: Vec<RayUncertainty> = rays
        .par_iter()
        .with_min_len(64)
        .map_init(
            || Vec::with_capacity(sampling.n_samples),
            |occ, ray| {
                let dt = sample_occupancies(field, ray, sampling.n_samples, occ);
                ray_uncertainty_of(occ, dt, params)
            },
        )
        .collect();
    Ok(ViewUncertainty::combine(&per_ray, params))
}
