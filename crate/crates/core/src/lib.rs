//! Desk-scale GAN training engine and evaluation toolkit.
//!
//! The pipeline trains a progressive GAN (with vanilla or depthwise-
//! separable convolutions), stops growth early, and hands the outputs to
//! a 4x super-resolution GAN. Alongside the training stack sit the
//! measurement tools: a multiplication-count cost model for both
//! convolution modes, resampling kernels with a timing harness, and the
//! sliced Wasserstein distance / MS-SSIM / inception score metrics.

pub mod checkpoint;
pub mod conv;
pub mod data;
pub mod error;
pub mod imageio;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod progan;
pub mod resample;
pub mod rng;
pub mod srgan;
pub mod synth;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use conv::{ConvGeometry, ConvMode, CostBreakdown};
pub use error::{Error, Result};
pub use pipeline::PipelineConfig;
pub use progan::{GrowthState, TrainConfig};
pub use tensor::{grad_check, GradMap, GradReport, Tensor};
