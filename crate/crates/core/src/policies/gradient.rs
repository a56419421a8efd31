use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{draw_separated, PolicyConfig, SelectionContext};
use crate::error::Result;
use crate::geometry::Vec3;
use crate::render::Camera;
use crate::seed::derive_label;
use crate::uncertainty::view_uncertainty;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Below this distance from the sphere the sphere penalty has no gradient.
const SPHERE_DEADBAND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientStep {
    /// 0 for the initial point.
    pub iter: usize,
    pub theta: Vec3,
    pub u: f64,
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientTrace {
    /// Final position, projected onto the sphere.
    pub position: Vec3,
    pub steps: Vec<GradientStep>,
    pub j_initial: f64,
    pub j_final: f64,
    pub u_final: f64,
}

fn proximity_penalty(theta: &Vec3, history: &[Vec3], config: &PolicyConfig) -> (f64, Vec3) {
    let mut value = 0.0;
    let mut grad = Vec3::zeros();
    for v in history {
        let diff = theta - v;
        let dist = diff.norm();
        if config.eq5_literal {
            value += dist;
            if dist > 0.0 {
                grad += diff / dist;
            }
        } else if dist < config.delta {
            value += config.delta - dist;
            if dist > 0.0 {
                grad -= diff / dist;
            }
        }
    }
    (value, grad)
}

fn sphere_penalty(theta: &Vec3, radius: f64) -> (f64, Vec3) {
    let norm = theta.norm();
    let off = norm - radius;
    if off.abs() < SPHERE_DEADBAND || norm == 0.0 {
        return (off.abs(), Vec3::zeros());
    }
    (off.abs(), theta / norm * off.signum())
}

fn view_u(ctx: &SelectionContext<'_>, config: &PolicyConfig, theta: &Vec3, ray_seed: u64) -> Result<f64> {
    let cam = Camera::look_at_origin(*theta, ctx.intrinsics)?;
    Ok(view_uncertainty(ctx.field, &cam, ctx.params, &config.sampling, ray_seed)?.value)
}

/// `J = u - lambda_D P_prev - lambda_S |‖theta‖ - R|`; returns `(J, u)`.
pub fn objective(ctx: &SelectionContext<'_>, config: &PolicyConfig, theta: &Vec3, ray_seed: u64) -> Result<(f64, f64)> {
    let u = view_u(ctx, config, theta, ray_seed)?;
    let (p, _) = proximity_penalty(theta, ctx.history, config);
    let (s, _) = sphere_penalty(theta, ctx.radius);
    Ok((u - config.lambda_dist * p - config.lambda_sphere * s, u))
}

/// Gradient of `J`: central differences for `u` with common rays, analytic
/// for the penalties.
pub fn objective_gradient(
    ctx: &SelectionContext<'_>,
    config: &PolicyConfig,
    theta: &Vec3,
    ray_seed: u64,
) -> Result<Vec3> {
    let h = config.fd_step;
    let probes: Vec<f64> = (0..6)
        .into_par_iter()
        .map(|i| {
            let mut p = *theta;
            p[i / 2] += if i % 2 == 0 { h } else { -h };
            view_u(ctx, config, &p, ray_seed)
        })
        .collect::<Result<_>>()?;
    let du = Vec3::new(
        (probes[0] - probes[1]) / (2.0 * h),
        (probes[2] - probes[3]) / (2.0 * h),
        (probes[4] - probes[5]) / (2.0 * h),
    );
    let (_, dp) = proximity_penalty(theta, ctx.history, config);
    let (_, ds) = sphere_penalty(theta, ctx.radius);
    Ok(du - dp * config.lambda_dist - ds * config.lambda_sphere)
}

/// Adam ascent on `J` from a random admissible start, then projection onto
/// the sphere.
pub fn gradient_next(ctx: &SelectionContext<'_>, config: &PolicyConfig, seed: u64) -> Result<GradientTrace> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = draw_separated(&mut rng, ctx.history, config.delta, ctx.radius).position;
    let ray_seed = derive_label(seed, "rays");

    let (j0, u0) = objective(ctx, config, &theta, ray_seed)?;
    let mut steps = vec![GradientStep {
        iter: 0,
        theta,
        u: u0,
        j: j0,
    }];
    let mut m = Vec3::zeros();
    let mut v = Vec3::zeros();
    for t in 1..=config.steps {
        let g = objective_gradient(ctx, config, &theta, ray_seed)?;
        m = m * ADAM_BETA1 + g * (1.0 - ADAM_BETA1);
        v = v * ADAM_BETA2 + g.component_mul(&g) * (1.0 - ADAM_BETA2);
        let m_hat = m / (1.0 - ADAM_BETA1.powi(t as i32));
        let v_hat = v / (1.0 - ADAM_BETA2.powi(t as i32));
        let step = m_hat.zip_map(&v_hat, |a, b| a / (b.sqrt() + ADAM_EPS));
        theta += step * config.lr;
        let (j, u) = objective(ctx, config, &theta, ray_seed)?;
        steps.push(GradientStep { iter: t, theta, u, j });
    }
    let position = theta.normalize() * ctx.radius;
    let (j_final, u_final) = objective(ctx, config, &position, ray_seed)?;
    Ok(GradientTrace {
        position,
        steps,
        j_initial: j0,
        j_final,
        u_final,
    })
}
