//! Two-phase super-resolution training: content-only pretraining, then
//! joint content + adversarial steps. LR inputs come from bicubic
//! downsampling of the HR targets.

use std::io::Write as _;
use std::path::Path;

use rand::Rng as _;

use super::{srgan_loss, SrConfig, SrDiscriminator, SrGenerator, SrPair, SR_SCALE};
use crate::checkpoint::save_checkpoint;
use crate::error::{Error, Result};
use crate::imageio;
use crate::progan::GrowthState;
use crate::resample::{resample, KernelKind, ResampleKernel};
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;

pub const SR_LOSS_CSV_HEADER: &str = "step,phase,content_loss,adv_loss,g_loss,d_loss";

pub struct SrRun {
    pub generator: SrGenerator<f32>,
    pub discriminator: SrDiscriminator<f32>,
    pub pairs: Vec<SrPair>,
    /// Wall-clock of the optimizer loop (pair preparation excluded).
    pub seconds: f64,
}

/// Builds (bicubic LR, HR) pairs in [-1, 1] from [0, 1] HR images.
pub fn make_pairs(hr_images: &[Tensor<f64>]) -> Result<Vec<SrPair>> {
    hr_images
        .iter()
        .map(|hr| {
            let s = hr.shape();
            if s.len() != 3 || s[1] % SR_SCALE != 0 || s[2] % SR_SCALE != 0 {
                return Err(Error::Dataset(format!(
                    "hr image shape {s:?} not divisible by {SR_SCALE}"
                )));
            }
            let kernel = ResampleKernel::new(KernelKind::Bicubic);
            let lr = resample(hr, &kernel, (s[1] / SR_SCALE, s[2] / SR_SCALE))?;
            SrPair::new(imageio::to_signed_f32(&lr), imageio::to_signed_f32(hr))
        })
        .collect()
}

/// Trains on `hr_images` ([0, 1] range), writing `sr.ckpt` and `sr_loss.csv`
/// into `out_dir`. Phase 1 runs `pretrain_steps` of content-only updates;
/// phase 2 runs `train_steps` of joint critic + generator updates.
/// Deterministic for a fixed seed.
pub fn train_srgan(
    config: &SrConfig,
    hr_images: &[Tensor<f64>],
    out_dir: &Path,
) -> Result<SrRun> {
    config.validate()?;
    if hr_images.is_empty() {
        return Err(Error::Dataset("empty super-resolution dataset".into()));
    }
    let pairs = make_pairs(hr_images)?;
    let hr_res = pairs[0].hr_image.shape()[1];
    std::fs::create_dir_all(out_dir)?;

    let mut param_rng = stream(config.seed, Stream::ParamInit);
    let mut batch_rng = stream(config.seed, Stream::Shuffle);
    let mut gp_rng = stream(config.seed, Stream::GradPenalty);

    let mut generator = SrGenerator::<f32>::new(config, &mut param_rng)?;
    let mut discriminator = SrDiscriminator::<f32>::new(config, hr_res, &mut param_rng)?;
    let mut opt_g = crate::optim::Adam::<f32>::progan_default(config.learning_rate);
    let mut opt_d = crate::optim::Adam::<f32>::progan_default(config.learning_rate);

    let loss_path = out_dir.join("sr_loss.csv");
    let mut loss_file = std::fs::File::create(&loss_path)?;
    writeln!(loss_file, "{SR_LOSS_CSV_HEADER}")?;

    let batch = config.batch_size.min(pairs.len());
    let total_steps = config.pretrain_steps + config.train_steps;
    let loop_start = std::time::Instant::now();
    for step in 0..total_steps {
        let joint = step >= config.pretrain_steps;
        let idx: Vec<usize> = (0..batch)
            .map(|_| batch_rng.random_range(0..pairs.len()))
            .collect();
        let lr_batch = Tensor::stack(
            &idx.iter()
                .map(|&i| pairs[i].lr_image.clone())
                .collect::<Vec<_>>(),
        )?;
        let hr_batch = Tensor::stack(
            &idx.iter()
                .map(|&i| pairs[i].hr_image.clone())
                .collect::<Vec<_>>(),
        )?;

        let sr = generator.forward(&lr_batch)?;
        let (content_val, adv_val, g_loss, d_loss_val) = if joint {
            let losses = srgan_loss(
                |x| discriminator.forward(x),
                &sr,
                &hr_batch,
                config.content_weight,
                config.adversarial_weight,
                config.gp_lambda,
                &mut gp_rng,
            )?;
            let d_val = losses.d_loss.item()?;
            if !d_val.is_finite() {
                return Err(Error::NonFiniteLoss {
                    stage: 0,
                    epoch: step,
                    detail: format!("sr critic loss {d_val}"),
                });
            }
            let grads = losses.d_loss.backward()?;
            opt_d.begin_step();
            discriminator.visit_params(&mut |name, p| opt_d.update(&name, p, &grads));
            (
                losses.content_term.item()?,
                losses.adversarial_term.item()?,
                losses.g_loss,
                d_val,
            )
        } else {
            let content = sr.sub(&hr_batch)?.square().mean_all();
            let val = content.item()?;
            (
                val,
                0.0,
                content.mul_scalar(config.content_weight),
                0.0,
            )
        };
        let g_val = g_loss.item()?;
        if !g_val.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: 0,
                epoch: step,
                detail: format!("sr generator loss {g_val}"),
            });
        }
        let grads = g_loss.backward()?;
        opt_g.begin_step();
        generator.visit_params(&mut |name, p| opt_g.update(&name, p, &grads));

        writeln!(
            loss_file,
            "{step},{},{content_val:.6},{adv_val:.6},{g_val:.6},{d_loss_val:.6}",
            if joint { "joint" } else { "pretrain" }
        )?;
    }

    let seconds = loop_start.elapsed().as_secs_f64();
    let mut params = generator.named_params();
    params.extend(discriminator.named_params());
    save_checkpoint(&params, &GrowthState::start_of(0), &out_dir.join("sr.ckpt"))?;

    Ok(SrRun {
        generator,
        discriminator,
        pairs,
        seconds,
    })
}
