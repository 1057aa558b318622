use std::path::{Path, PathBuf};

use crate::codec::{LAMBDA_MAX, LAMBDA_MIN};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

use super::synthetic::SyntheticConfig;

/// Run configuration, read from a flat `key = value` file. `#` starts a comment.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub stage: u8,
    pub steps: usize,
    pub seed: u64,
    /// Weight of the codec-side depth term.
    pub gamma: f64,
    /// Weight of the rate term, applied to bits per pixel.
    pub beta: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub train_scenes: usize,
    pub eval_scenes: usize,
    pub scene: SyntheticConfig,
    pub model: ModelConfig,
    /// Stage-1 checkpoint to start stage 2 from.
    pub init: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub log_every: usize,
}

const REQUIRED: [&str; 3] = ["stage", "steps", "seed"];

impl TrainingConfig {
    /// Defaults for everything except the required keys.
    pub fn new(stage: u8, steps: usize, seed: u64) -> Self {
        Self {
            stage,
            steps,
            seed,
            gamma: 0.1,
            beta: 1e-4,
            lambda_min: LAMBDA_MIN,
            lambda_max: LAMBDA_MAX,
            lr: 1e-3,
            weight_decay: 0.0,
            grad_clip: 1.0,
            train_scenes: 32,
            eval_scenes: 8,
            scene: SyntheticConfig::default(),
            model: ModelConfig::default(),
            init: None,
            out: None,
            log_every: 50,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{line}'", n + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        for key in REQUIRED {
            if !pairs.iter().any(|(k, _)| k == key) {
                return Err(Error::Config(format!("missing required key '{key}'")));
            }
        }
        let mut cfg = Self::new(0, 0, 0);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value.parse().map_err(|_| Error::Config(format!("key '{key}': cannot parse '{value}'")))
        }
        match key {
            "stage" => self.stage = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "lambda_min" => self.lambda_min = num(key, value)?,
            "lambda_max" => self.lambda_max = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "grad_clip" => self.grad_clip = num(key, value)?,
            "train_scenes" => self.train_scenes = num(key, value)?,
            "eval_scenes" => self.eval_scenes = num(key, value)?,
            "height" => self.scene.height = num(key, value)?,
            "width" => self.scene.width = num(key, value)?,
            "context_views" => self.scene.context_views = num(key, value)?,
            "near" => self.scene.near = num(key, value)?,
            "far" => self.scene.far = num(key, value)?,
            "supersample" => self.scene.supersample = num(key, value)?,
            "feature_channels" => {
                let c = num(key, value)?;
                self.model.backbone.feature_channels = c;
                self.model.codec.feature_channels = c;
            }
            "mv_channels" => self.model.backbone.mv_channels = num(key, value)?,
            "candidates" => self.model.backbone.candidates = num(key, value)?,
            "latent_channels" => self.model.codec.latent_channels = num(key, value)?,
            "hyper_channels" => self.model.codec.hyper_channels = num(key, value)?,
            "init" => self.init = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "log_every" => self.log_every = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.stage, 1 | 2) {
            return Err(Error::Config(format!("stage must be 1 or 2, got {}", self.stage)));
        }
        if self.stage == 2 && self.init.is_none() {
            return Err(Error::Config("stage 2 requires 'init', a stage-1 checkpoint".into()));
        }
        if !(LAMBDA_MIN <= self.lambda_min && self.lambda_min <= self.lambda_max && self.lambda_max <= LAMBDA_MAX) {
            return Err(Error::Config(format!(
                "λ range [{}, {}] must lie within [{LAMBDA_MIN}, {LAMBDA_MAX}]",
                self.lambda_min, self.lambda_max
            )));
        }
        if !self.scene.height.is_multiple_of(16) || !self.scene.width.is_multiple_of(16) {
            return Err(Error::Config(format!(
                "image size {}x{} must be a multiple of 16",
                self.scene.height, self.scene.width
            )));
        }
        if self.train_scenes == 0 {
            return Err(Error::Config("train_scenes must be positive".into()));
        }
        Ok(())
    }
}
