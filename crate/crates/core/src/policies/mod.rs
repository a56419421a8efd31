//! Next-best-view policies over a sphere of cameras looking at the origin.
//!
//! Baselines (random, even, odd) ignore the scene. The candidate policy
//! scores random admissible views by their uncertainty; the gradient policy
//! runs Adam on the camera position against the uncertainty with proximity
//! and sphere penalties.

mod gradient;
mod sampling;

pub use gradient::{gradient_next, objective, objective_gradient, GradientStep, GradientTrace};
pub use sampling::{
    draw_separated, even_next, fibonacci_lattice, min_distance, random_next, uniform_sphere_point, Draw,
    MAX_REJECTION_TRIES,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::OccupancyField;
use crate::geometry::Vec3;
use crate::render::{Camera, Intrinsics};
use crate::seed::derive;
use crate::uncertainty::{view_uncertainty, UncertaintyParams, ViewSampling, ViewUncertainty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Candidate,
    Gradient,
    Random,
    Even,
    Odd,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Candidate => "candidate",
            PolicyKind::Gradient => "gradient",
            PolicyKind::Random => "random",
            PolicyKind::Even => "even",
            PolicyKind::Odd => "odd",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "candidate" => Ok(PolicyKind::Candidate),
            "gradient" => Ok(PolicyKind::Gradient),
            "random" => Ok(PolicyKind::Random),
            "even" => Ok(PolicyKind::Even),
            "odd" => Ok(PolicyKind::Odd),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Label used in outputs and seed derivation; defaults to the kind.
    pub name: Option<String>,
    pub n_candidates: usize,
    /// Minimum distance between views.
    pub delta: f64,
    /// Gradient steps `m`.
    pub steps: usize,
    pub lr: f64,
    pub lambda_dist: f64,
    pub lambda_sphere: f64,
    pub fd_step: f64,
    pub even_lattice_size: usize,
    /// Subtract the plain summed distance to previous views instead of the
    /// hinge proximity penalty. That literal form pulls views together.
    pub eq5_literal: bool,
    pub sampling: ViewSampling,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Candidate,
            name: None,
            n_candidates: 20,
            delta: 0.7,
            steps: 5,
            lr: 0.5,
            lambda_dist: 0.05,
            lambda_sphere: 4.0,
            fd_step: 0.01,
            even_lattice_size: 512,
            eq5_literal: false,
            sampling: ViewSampling::default(),
        }
    }
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_candidates == 0 {
            return Err(Error::Config("n_candidates must be >= 1".into()));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be >= 0, got {}", self.delta)));
        }
        if self.steps == 0 {
            return Err(Error::Config("gradient steps must be >= 1".into()));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::Config(format!("fd_step must be positive, got {}", self.fd_step)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.even_lattice_size == 0 {
            return Err(Error::Config("even_lattice_size must be >= 1".into()));
        }
        self.sampling.validate()
    }
}

/// Everything a policy may look at when choosing the next view.
#[derive(Clone, Copy)]
pub struct SelectionContext<'a> {
    pub field: &'a dyn OccupancyField,
    /// Positions of the views acquired so far, oldest first.
    pub history: &'a [Vec3],
    pub params: &'a UncertaintyParams,
    pub radius: f64,
    pub intrinsics: Intrinsics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEval {
    pub position: Vec3,
    pub uncertainty: ViewUncertainty,
    /// Sampling fell back to the best of the rejected tries.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateResult {
    pub position: Vec3,
    pub index: usize,
    pub uncertainty: f64,
    pub candidates: Vec<CandidateEval>,
}

/// Scores `n_candidates` separated random views and returns the most
/// uncertain one; ties go to the lowest index.
pub fn candidate_next(ctx: &SelectionContext<'_>, config: &PolicyConfig, seed: u64) -> Result<CandidateResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occupied: Vec<Vec3> = ctx.history.to_vec();
    let mut draws = Vec::with_capacity(config.n_candidates);
    for _ in 0..config.n_candidates {
        let d = draw_separated(&mut rng, &occupied, config.delta, ctx.radius);
        occupied.push(d.position);
        draws.push(d);
    }
    let evals: Vec<CandidateEval> = draws
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let cam = Camera::on_sphere(d.position, ctx.radius, ctx.intrinsics)?;
            let u = view_uncertainty(ctx.field, &cam, ctx.params, &config.sampling, derive(seed, i as u64 + 1))?;
            Ok(CandidateEval {
                position: d.position,
                uncertainty: u,
                fallback: d.fallback,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, e) in evals.iter().enumerate() {
        if e.uncertainty.value > evals[best].uncertainty.value {
            best = i;
        }
    }
    Ok(CandidateResult {
        position: evals[best].position,
        index: best,
        uncertainty: evals[best].uncertainty.value,
        candidates: evals,
    })
}

/// Diagnostics attached to a selection.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionTrace {
    None,
    Candidates(Vec<CandidateEval>),
    Gradient(GradientTrace),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub position: Vec3,
    /// The policy's own uncertainty estimate for the view, if it made one.
    pub uncertainty: Option<f64>,
    pub fallback: bool,
    pub trace: SelectionTrace,
}

/// A policy with whatever state it carries between selections.
#[derive(Debug, Clone)]
pub struct Policy {
    config: PolicyConfig,
    /// The odd policy's private even sequence.
    shadow: Vec<Vec3>,
}

impl Policy {
    pub fn new(config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            shadow: Vec::new(),
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    /// Chooses the next view. `ctx.history` must hold at least the first view.
    pub fn select(&mut self, ctx: &SelectionContext<'_>, seed: u64) -> Result<Selection> {
        let c = &self.config;
        match c.kind {
            PolicyKind::Random => {
                let d = random_next(ctx.history, c.delta, ctx.radius, seed);
                Ok(plain(d.position, d.fallback))
            }
            PolicyKind::Even => {
                let lattice = fibonacci_lattice(c.even_lattice_size, ctx.radius);
                Ok(plain(even_next(ctx.history, &lattice), false))
            }
            PolicyKind::Odd => {
                let first = *ctx
                    .history
                    .first()
                    .ok_or_else(|| Error::Config("odd policy needs a first view".into()))?;
                if self.shadow.is_empty() {
                    self.shadow.push(first);
                }
                let lattice = fibonacci_lattice(c.even_lattice_size, ctx.radius);
                for _ in 0..2 {
                    let next = even_next(&self.shadow, &lattice);
                    self.shadow.push(next);
                }
                Ok(plain(*self.shadow.last().unwrap(), false))
            }
            PolicyKind::Candidate => {
                let r = candidate_next(ctx, c, seed)?;
                let fallback = r.candidates[r.index].fallback;
                Ok(Selection {
                    position: r.position,
                    uncertainty: Some(r.uncertainty),
                    fallback,
                    trace: SelectionTrace::Candidates(r.candidates),
                })
            }
            PolicyKind::Gradient => {
                let t = gradient_next(ctx, c, seed)?;
                Ok(Selection {
                    position: t.position,
                    uncertainty: Some(t.u_final),
                    fallback: false,
                    trace: SelectionTrace::Gradient(t),
                })
            }
        }
    }
}

fn plain(position: Vec3, fallback: bool) -> Selection {
    Selection {
        position,
        uncertainty: None,
        fallback,
        trace: SelectionTrace::None,
    }
}
