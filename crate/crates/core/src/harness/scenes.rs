use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{CsgOp, CsgStep, Primitive, SceneSpec, Shape};
use crate::seed::derive;

/// Random scenes of a few overlapping primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_scenes: usize,
    #[serde(default = "all_shapes")]
    pub shape_mix: Vec<Shape>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_min_primitives")]
    pub min_primitives: usize,
    #[serde(default = "default_max_primitives")]
    pub max_primitives: usize,
    /// Chance that the last primitive is subtracted instead of unioned.
    #[serde(default = "default_subtract_prob")]
    pub subtract_prob: f64,
    /// SDF-to-occupancy sharpness of every generated scene.
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
}

fn all_shapes() -> Vec<Shape> {
    vec![Shape::Sphere, Shape::Box, Shape::Capsule]
}

fn default_min_primitives() -> usize {
    2
}

fn default_max_primitives() -> usize {
    4
}

fn default_subtract_prob() -> f64 {
    0.3
}

/// Generated scenes are sharper than hand-written ones so the ground truth's
/// own soft band does not dominate view uncertainty.
const GENERATED_SHARPNESS: f64 = 100.0;

fn default_sharpness() -> f64 {
    GENERATED_SHARPNESS
}

impl GeneratorSpec {
    pub fn new(n_scenes: usize, seed: u64) -> Self {
        Self {
            n_scenes,
            shape_mix: all_shapes(),
            seed,
            min_primitives: default_min_primitives(),
            max_primitives: default_max_primitives(),
            subtract_prob: default_subtract_prob(),
            sharpness: default_sharpness(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scenes == 0 {
            return Err(Error::Config("generator n_scenes must be >= 1".into()));
        }
        if self.shape_mix.is_empty() {
            return Err(Error::Config("generator shape_mix is empty".into()));
        }
        if self.min_primitives == 0 || self.min_primitives > self.max_primitives {
            return Err(Error::Config(format!(
                "need 1 <= min_primitives <= max_primitives, got {}..{}",
                self.min_primitives, self.max_primitives
            )));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::Config("generator sharpness must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.subtract_prob) {
            return Err(Error::Config("subtract_prob must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Scene `index`; each index has its own stream.
    pub fn generate(&self, index: usize) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(self.seed, index as u64));
        let n = rng.random_range(self.min_primitives..=self.max_primitives);
        let mut primitives = Vec::with_capacity(n);
        for _ in 0..n {
            let shape = self.shape_mix[rng.random_range(0..self.shape_mix.len())];
            let size: f64 = match shape {
                Shape::Sphere => rng.random_range(0.2..0.45),
                Shape::Box => rng.random_range(0.15..0.35),
                Shape::Capsule => rng.random_range(0.3..0.6),
            };
            // `size` bounds every shape's half extent.
            let reach = (0.85 - size).max(0.0);
            let center = [0, 1, 2].map(|_| rng.random_range(-reach..=reach) * 0.7);
            let colour = [0, 1, 2].map(|_| rng.random_range(0.1..0.95));
            primitives.push(Primitive {
                shape,
                center,
                size,
                colour,
            });
        }
        let mut spec = SceneSpec::new(primitives).with_sharpness(self.sharpness);
        if n >= 2 && rng.random::<f64>() < self.subtract_prob {
            spec.csg = vec![CsgStep {
                op: CsgOp::Subtract,
                index: n - 1,
            }];
        }
        spec
    }
}

/// Where an experiment's scenes come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneSource {
    Files(Vec<PathBuf>),
    Generator(GeneratorSpec),
}

impl SceneSource {
    pub fn len(&self) -> usize {
        match self {
            SceneSource::Files(f) => f.len(),
            SceneSource::Generator(g) => g.n_scenes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SceneSource::Files(f) if f.is_empty() => Err(Error::Config("no scene files given".into())),
            SceneSource::Files(_) => Ok(()),
            SceneSource::Generator(g) => g.validate(),
        }
    }

    /// Identifier used in records.
    pub fn scene_id(&self, index: usize) -> String {
        match self {
            SceneSource::Files(f) => f[index]
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("scene-{index:03}")),
            SceneSource::Generator(_) => format!("gen-{index:03}"),
        }
    }

    pub fn load(&self, index: usize) -> Result<SceneSpec> {
        let spec = match self {
            SceneSource::Files(f) => SceneSpec::load(&f[index])?,
            SceneSource::Generator(g) => g.generate(index),
        };
        spec.validate()?;
        Ok(spec)
    }
}
