//! 4x super-resolution GAN: upsamples the progressive stage's stopping
//! resolution instead of growing further. The generator learns a
//! residual on top of a nearest-neighbor upsampling baseline; the loss is
//! pixel-space content MSE plus a small adversarial term sharing the
//! improved-Wasserstein critic machinery.

mod generator;
mod train;

pub use generator::{sr_generate, SrDiscriminator, SrGenerator};
pub use train::{make_pairs, train_srgan, SrRun, SR_LOSS_CSV_HEADER};

use crate::error::{Error, Result};
use crate::progan::wgan_gp_loss;
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

pub const SR_SCALE: usize = 4;

#[derive(Debug, Clone)]
pub struct SrConfig {
    /// Fixed at 4; anything else is rejected.
    pub scale_factor: usize,
    pub residual_blocks: usize,
    pub base_channels: usize,
    pub content_weight: f64,
    pub adversarial_weight: f64,
    pub gp_lambda: f64,
    pub pretrain_steps: usize,
    pub train_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SrConfig {
    fn default() -> Self {
        SrConfig {
            scale_factor: SR_SCALE,
            residual_blocks: 4,
            base_channels: 16,
            content_weight: 1.0,
            adversarial_weight: 1e-3,
            gp_lambda: 10.0,
            pretrain_steps: 500,
            train_steps: 200,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl SrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale_factor != SR_SCALE {
            return Err(Error::Config(format!(
                "scale factor is fixed at {SR_SCALE}, got {}",
                self.scale_factor
            )));
        }
        if self.content_weight < 0.0 || self.adversarial_weight < 0.0 || self.gp_lambda < 0.0 {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        if self.batch_size == 0 || self.base_channels == 0 {
            return Err(Error::Config("counts must be positive".into()));
        }
        Ok(())
    }
}

/// A low-resolution / high-resolution training pair; HR extents are
/// exactly 4x the LR extents.
#[derive(Debug, Clone)]
pub struct SrPair {
    pub lr_image: Tensor<f32>,
    pub hr_image: Tensor<f32>,
}

impl SrPair {
    pub fn new(lr_image: Tensor<f32>, hr_image: Tensor<f32>) -> Result<SrPair> {
        let (l, h) = (lr_image.shape(), hr_image.shape());
        if l.len() != h.len() || l.len() < 3 {
            return Err(Error::shape(format!("sr pair of {l:?} and {h:?}")));
        }
        let spatial = l.len() - 2;
        if h[spatial] != SR_SCALE * l[spatial] || h[spatial + 1] != SR_SCALE * l[spatial + 1] {
            return Err(Error::shape(format!(
                "hr extents {h:?} are not exactly {SR_SCALE}x the lr extents {l:?}"
            )));
        }
        Ok(SrPair { lr_image, hr_image })
    }
}

#[derive(Debug, Clone)]
pub struct SrLoss<T: Element> {
    pub g_loss: Tensor<T>,
    pub d_loss: Tensor<T>,
    pub content_term: Tensor<T>,
    pub adversarial_term: Tensor<T>,
}

/// g_loss = content_weight * MSE(sr, hr) + adversarial_weight * (-mean D(sr));
/// d_loss is the shared improved-Wasserstein critic loss separating the
/// HR targets (real) from the super-resolved outputs (fake).
pub fn srgan_loss<T, D>(
    discriminator: D,
    sr_output: &Tensor<T>,
    hr_target: &Tensor<T>,
    content_weight: f64,
    adversarial_weight: f64,
    gp_lambda: f64,
    rng: &mut Rng,
) -> Result<SrLoss<T>>
where
    T: Element,
    D: Fn(&Tensor<T>) -> Result<Tensor<T>>,
{
    if sr_output.shape() != hr_target.shape() {
        return Err(Error::shape(format!(
            "sr output {:?} vs hr target {:?}",
            sr_output.shape(),
            hr_target.shape()
        )));
    }
    let content_term = sr_output.sub(hr_target)?.square().mean_all();
    let gan = wgan_gp_loss(discriminator, hr_target, sr_output, gp_lambda, rng)?;
    let adversarial_term = gan.g_loss;
    let g_loss = content_term
        .mul_scalar(content_weight)
        .add(&adversarial_term.mul_scalar(adversarial_weight))?;
    Ok(SrLoss {
        g_loss,
        d_loss: gan.d_loss,
        content_term,
        adversarial_term,
    })
}
