//! Flat key-value configuration files.
//!
//! Grammar: one `section.key = value` per line, `#` starts a comment,
//! blank lines ignored. The flat format diffs cleanly across experiment
//! variants. Unknown keys are errors so typos surface immediately.

use std::path::{Path, PathBuf};

use crate::conv::ConvMode;
use crate::error::{Error, Result};
use crate::metrics::MetricConfig;
use crate::progan::TrainConfig;
use crate::srgan::SrConfig;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Progressive training halts at this stage; the SR stage takes over.
    pub stop_stage: usize,
    pub sr_enabled: bool,
    /// Final samples emitted (and evaluated) per column.
    pub sample_count: usize,
    pub seed: u64,
    pub progan: TrainConfig,
    pub srgan: SrConfig,
    pub metrics: MetricConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset_dir: PathBuf::new(),
            output_dir: PathBuf::new(),
            stop_stage: 2,
            sr_enabled: true,
            sample_count: 64,
            seed: 0,
            progan: TrainConfig::default(),
            srgan: SrConfig::default(),
            metrics: MetricConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// 4 * 2^stop_stage, then x4 when the super-resolution stage runs.
    pub fn final_resolution(&self) -> usize {
        let base = 4usize << self.stop_stage;
        if self.sr_enabled {
            base * 4
        } else {
            base
        }
    }

    pub fn progan_resolution(&self) -> usize {
        4usize << self.stop_stage
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_dir.as_os_str().is_empty() {
            return Err(Error::Config("pipeline.dataset_dir is required".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("pipeline.output_dir is required".into()));
        }
        if self.stop_stage > self.progan.max_stage {
            return Err(Error::Config(format!(
                "stop_stage {} exceeds progan.max_stage {}",
                self.stop_stage, self.progan.max_stage
            )));
        }
        if self.sample_count == 0 {
            return Err(Error::Config("pipeline.sample_count must be positive".into()));
        }
        self.progan.validate()?;
        self.srgan.validate()?;
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {path:?}: {e}")))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::default();
    // sub-seeds follow pipeline.seed unless set explicitly
    let mut progan_seed_set = false;
    let mut srgan_seed_set = false;
    let mut metrics_seed_set = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `section.key = value`, got {raw:?}",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        let fail = |what: &str| {
            Error::Config(format!(
                "line {}: bad value {value:?} for {key} ({what})",
                lineno + 1
            ))
        };
        macro_rules! parse {
            ($ty:ty) => {
                value.parse::<$ty>().map_err(|_| fail(stringify!($ty)))?
            };
        }
        match key {
            "pipeline.dataset_dir" => config.dataset_dir = PathBuf::from(value),
            "pipeline.output_dir" => config.output_dir = PathBuf::from(value),
            "pipeline.stop_stage" => config.stop_stage = parse!(usize),
            "pipeline.sr_enabled" => config.sr_enabled = parse!(bool),
            "pipeline.sample_count" => config.sample_count = parse!(usize),
            "pipeline.seed" => config.seed = parse!(u64),

            "progan.latent_dim" => config.progan.latent_dim = parse!(usize),
            "progan.base_channels" => config.progan.base_channels = parse!(usize),
            "progan.max_stage" => config.progan.max_stage = parse!(usize),
            "progan.epochs_per_stage" => config.progan.epochs_per_stage = parse!(usize),
            "progan.fade_fraction" => config.progan.fade_fraction = parse!(f64),
            "progan.batch_size" => config.progan.batch_size = parse!(usize),
            "progan.learning_rate" => config.progan.learning_rate = parse!(f64),
            "progan.gp_lambda" => config.progan.gp_lambda = parse!(f64),
            "progan.conv_mode" => config.progan.conv_mode = parse!(ConvMode),
            "progan.seed" => {
                config.progan.seed = parse!(u64);
                progan_seed_set = true;
            }

            "srgan.residual_blocks" => config.srgan.residual_blocks = parse!(usize),
            "srgan.base_channels" => config.srgan.base_channels = parse!(usize),
            "srgan.content_weight" => config.srgan.content_weight = parse!(f64),
            "srgan.adversarial_weight" => config.srgan.adversarial_weight = parse!(f64),
            "srgan.gp_lambda" => config.srgan.gp_lambda = parse!(f64),
            "srgan.pretrain_steps" => config.srgan.pretrain_steps = parse!(usize),
            "srgan.train_steps" => config.srgan.train_steps = parse!(usize),
            "srgan.batch_size" => config.srgan.batch_size = parse!(usize),
            "srgan.learning_rate" => config.srgan.learning_rate = parse!(f64),
            "srgan.seed" => {
                config.srgan.seed = parse!(u64);
                srgan_seed_set = true;
            }

            "metrics.patch_size" => config.metrics.patch_size = parse!(usize),
            "metrics.descriptors_per_level" => {
                config.metrics.descriptors_per_level = parse!(usize)
            }
            "metrics.projections" => config.metrics.projections = parse!(usize),
            "metrics.pyramid_levels" => config.metrics.pyramid_levels = Some(parse!(usize)),
            "metrics.msssim_scales" => config.metrics.msssim_scales = Some(parse!(usize)),
            "metrics.msssim_pair_cap" => config.metrics.msssim_pair_cap = parse!(usize),
            "metrics.is_splits" => config.metrics.is_splits = parse!(usize),
            "metrics.seed" => {
                config.metrics.seed = parse!(u64);
                metrics_seed_set = true;
            }

            other => {
                return Err(Error::Config(format!(
                    "line {}: unknown key {other:?}",
                    lineno + 1
                )))
            }
        }
    }
    if !progan_seed_set {
        config.progan.seed = config.seed;
    }
    if !srgan_seed_set {
        config.srgan.seed = config.seed;
    }
    if !metrics_seed_set {
        config.metrics.seed = config.seed;
    }
    Ok(config)
}
