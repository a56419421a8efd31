use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenes::SceneSource;
use crate::error::{Error, Result};
use crate::metrics::EvalConfig;
use crate::policies::PolicyConfig;
use crate::surrogate::{PriorSpec, SurrogateConfig};
use crate::uncertainty::{LambdaD, UncertaintyParams};

/// Uncertainty parameters as a preset name or a preset with overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UncertaintyConfig {
    Preset(String),
    Overrides(UncertaintyOverrides),
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyConfig::Preset("3d".into())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyOverrides {
    pub preset: Option<String>,
    pub beta: Option<f64>,
    pub lambda_s: Option<f64>,
    pub lambda_u: Option<f64>,
    pub lambda_t: Option<f64>,
    pub lambda_d: Option<LambdaD>,
    pub lambda: Option<f64>,
    pub use_sil: Option<bool>,
    pub use_depth: Option<bool>,
    pub use_tu: Option<bool>,
    pub use_d: Option<bool>,
    pub silhouette_only: Option<bool>,
}

impl UncertaintyConfig {
    pub fn resolve(&self) -> Result<UncertaintyParams> {
        let params = match self {
            UncertaintyConfig::Preset(name) => UncertaintyParams::preset(name)?,
            UncertaintyConfig::Overrides(o) => {
                let mut p = UncertaintyParams::preset(o.preset.as_deref().unwrap_or("3d"))?;
                macro_rules! set {
                    ($($f:ident),*) => {$(
                        if let Some(v) = o.$f.clone() {
                            p.$f = v;
                        }
                    )*};
                }
                set!(beta, lambda_s, lambda_u, lambda_t, lambda_d, lambda, use_sil, use_depth, use_tu, use_d, silhouette_only);
                p
            }
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenes: SceneSource,
    pub policies: Vec<PolicyConfig>,
    #[serde(default = "default_inits")]
    pub n_inits: usize,
    #[serde(default = "default_max_views")]
    pub max_views: usize,
    #[serde(default)]
    pub uncertainty: UncertaintyConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Fill `wall_ms`; off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
    /// Write per-candidate and per-step policy traces.
    #[serde(default)]
    pub trace: bool,
}

fn default_inits() -> usize {
    10
}

fn default_max_views() -> usize {
    5
}

impl ExperimentConfig {
    pub fn new(scenes: SceneSource, policies: Vec<PolicyConfig>) -> Self {
        Self {
            scenes,
            policies,
            n_inits: default_inits(),
            max_views: default_max_views(),
            uncertainty: UncertaintyConfig::default(),
            eval: EvalConfig::default(),
            prior: PriorSpec::default(),
            surrogate: SurrogateConfig::default(),
            master_seed: 0,
            output_dir: None,
            timing: false,
            trace: false,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        // Relative scene paths are taken from the config's directory.
        if let (SceneSource::Files(files), Some(dir)) = (&mut config.scenes, path.parent()) {
            for f in files.iter_mut() {
                if f.is_relative() {
                    *f = dir.join(&*f);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenes.validate()?;
        if self.policies.is_empty() {
            return Err(Error::Config("no policies configured".into()));
        }
        let mut labels: Vec<&str> = self.policies.iter().map(|p| p.label()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("policy labels must be unique; set `name`".into()));
        }
        for p in &self.policies {
            p.validate()?;
        }
        if self.max_views == 0 {
            return Err(Error::Config("max_views must be >= 1".into()));
        }
        if self.n_inits == 0 {
            return Err(Error::Config("n_inits must be >= 1".into()));
        }
        let params = self.uncertainty.resolve()?;
        if let LambdaD::Schedule(s) = &params.lambda_d {
            if s.len() + 1 < self.max_views {
                return Err(Error::Config(format!(
                    "lambda_d schedule has {} entries but {} selections are made",
                    s.len(),
                    self.max_views - 1
                )));
            }
        }
        self.eval.validate()?;
        self.prior.validate()?;
        self.surrogate.validate()?;
        if (self.eval.camera_radius - self.surrogate.camera_radius).abs() > 1e-12 {
            return Err(Error::Config("eval and surrogate camera radii differ".into()));
        }
        Ok(())
    }
}
