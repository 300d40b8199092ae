//! Progressive training loop: alternating critic/generator steps per
//! minibatch, one fade schedule per stage, a checkpoint and a timing row
//! per completed stage. Stochastic streams are scoped per stage, so a
//! run resumed from a stage checkpoint sees the same draws a full run
//! would.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use super::{
    build_discriminator, build_generator, schedule_step, wgan_gp_loss, Discriminator, Generator,
    GrowthState, TrainConfig,
};
use crate::checkpoint::{assign_params, load_checkpoint, save_checkpoint};
use crate::data::{batch_from, GanDataset};
use crate::error::{Error, Result};
use crate::imageio;
use crate::optim::Adam;
use crate::rng::{stage_stream, stream, Rng, Stream};
use crate::tensor::Tensor;

pub const TIMING_CSV_HEADER: &str = "stage,resolution,conv_mode,seconds";

#[derive(Debug, Clone)]
pub struct StageTiming {
    pub stage: usize,
    pub resolution: usize,
    pub seconds: f64,
}

pub struct ProganRun {
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    /// Stages trained in this invocation (resumed stages excluded).
    pub timing: Vec<StageTiming>,
    pub final_state: GrowthState,
}

/// Latents on the unit hypersphere: standard normal rows scaled to norm 1.
pub fn sample_latents(batch: usize, dim: usize, rng: &mut Rng) -> Result<Tensor<f32>> {
    let raw = Tensor::<f32>::randn(&[batch, dim], rng)?;
    let mut data = raw.to_vec();
    for row in data.chunks_mut(dim) {
        let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-12);
        for v in row {
            *v /= norm;
        }
    }
    Tensor::from_vec(data, &[batch, dim])
}

/// Runs the full progressive schedule over `dataset`, writing
/// `stage<k>.ckpt`, a sample grid per stage, and appending to
/// `timing.csv` in `out_dir`. Deterministic for a fixed seed.
pub fn train_progan(
    config: &TrainConfig,
    dataset: &GanDataset,
    out_dir: &Path,
) -> Result<ProganRun> {
    train_progan_with_resume(config, dataset, out_dir, false)
}

/// As `train_progan`, but with `resume` set it skips stages whose
/// checkpoints already exist in `out_dir` and continues from the next
/// one (optimizer moment estimates restart there).
pub fn train_progan_with_resume(
    config: &TrainConfig,
    dataset: &GanDataset,
    out_dir: &Path,
    resume: bool,
) -> Result<ProganRun> {
    config.validate()?;
    if dataset.len() < config.batch_size {
        return Err(Error::Dataset(format!(
            "dataset has {} images, smaller than batch_size {}",
            dataset.len(),
            config.batch_size
        )));
    }
    for stage in 0..=config.max_stage {
        dataset.level(GrowthState::resolution_of(stage))?;
    }
    std::fs::create_dir_all(out_dir)?;

    let mut param_rng = stream(config.seed, Stream::ParamInit);
    let mut opt_g = Adam::<f32>::progan_default(config.learning_rate);
    let mut opt_d = Adam::<f32>::progan_default(config.learning_rate);

    // fixed latents for the per-stage sample grids, on their own stream
    let mut grid_rng = stage_stream(config.seed, Stream::Latent, u32::MAX as usize);
    let grid_latents = sample_latents(16, config.latent_dim, &mut grid_rng)?;

    let done_through = if resume {
        highest_complete_stage(out_dir, config.max_stage)
    } else {
        None
    };
    let (mut generator, mut discriminator, first_stage) = match done_through {
        None => (
            Generator::<f32>::new(config, &mut param_rng)?,
            Discriminator::<f32>::new(config, &mut param_rng)?,
            0,
        ),
        Some(k) => {
            let state = GrowthState::start_of(k);
            let mut g = build_generator::<f32>(config, &state, &mut param_rng)?;
            let mut d = build_discriminator::<f32>(config, &state, &mut param_rng)?;
            let ckpt = load_checkpoint(&out_dir.join(format!("stage{k}.ckpt")))?;
            assign_params(&ckpt, |f| {
                g.visit_params(f);
                d.visit_params(f);
            })?;
            if k < config.max_stage {
                g.grow(&mut param_rng)?;
                d.grow(&mut param_rng)?;
            }
            (g, d, k + 1)
        }
    };

    let mut timing = Vec::new();
    let mut final_state = GrowthState::start_of(first_stage.min(config.max_stage));
    for stage in first_stage..=config.max_stage {
        let resolution = GrowthState::resolution_of(stage);
        let images = dataset.level(resolution)?;
        let mut indices: Vec<usize> = (0..images.len()).collect();
        let mut latent_rng = stage_stream(config.seed, Stream::Latent, stage);
        let mut shuffle_rng = stage_stream(config.seed, Stream::Shuffle, stage);
        let mut gp_rng = stage_stream(config.seed, Stream::GradPenalty, stage);
        let mut state = GrowthState::start_of(stage);

        let stage_start = Instant::now();
        for _epoch in 0..config.epochs_per_stage {
            let alpha = state.alpha;
            indices.shuffle(&mut shuffle_rng);
            for chunk in indices.chunks(config.batch_size) {
                let real = batch_from(images, chunk)?;
                let b = chunk.len();

                // critic step
                let z = sample_latents(b, config.latent_dim, &mut latent_rng)?;
                let fake = generator.forward(&z, alpha)?;
                let losses = wgan_gp_loss(
                    |x| discriminator.forward(x, alpha),
                    &real,
                    &fake,
                    config.gp_lambda,
                    &mut gp_rng,
                )?;
                let d_loss_val = losses.d_loss.item()?;
                if !d_loss_val.is_finite() {
                    return abort_non_finite(
                        &mut generator,
                        &mut discriminator,
                        &state,
                        out_dir,
                        format!("critic loss {d_loss_val}"),
                    );
                }
                let grads = losses.d_loss.backward()?;
                opt_d.begin_step();
                discriminator.visit_params(&mut |name, p| {
                    opt_d.update(&name, p, &grads);
                });

                // generator step on a fresh draw
                let z = sample_latents(b, config.latent_dim, &mut latent_rng)?;
                let fake = generator.forward(&z, alpha)?;
                let g_loss = discriminator.forward(&fake, alpha)?.mean_all().neg();
                let g_loss_val = g_loss.item()?;
                if !g_loss_val.is_finite() {
                    return abort_non_finite(
                        &mut generator,
                        &mut discriminator,
                        &state,
                        out_dir,
                        format!("generator loss {g_loss_val}"),
                    );
                }
                let grads = g_loss.backward()?;
                opt_g.begin_step();
                generator.visit_params(&mut |name, p| {
                    opt_g.update(&name, p, &grads);
                });
            }
            state = schedule_step(&state, config);
        }
        let seconds = stage_start.elapsed().as_secs_f64();
        timing.push(StageTiming {
            stage,
            resolution,
            seconds,
        });
        append_timing_row(
            out_dir,
            &stage.to_string(),
            resolution,
            &config.conv_mode.to_string(),
            seconds,
        )?;

        let ckpt_state = GrowthState {
            stage,
            resolution,
            alpha: 1.0,
            epochs_in_stage: config.epochs_per_stage,
            phase: super::Phase::Stable,
        };
        let mut params = generator.named_params();
        params.extend(discriminator.named_params());
        save_checkpoint(&params, &ckpt_state, &out_dir.join(format!("stage{stage}.ckpt")))?;

        let samples = generator.forward(&grid_latents, 1.0)?;
        let grid = imageio::batch_to_grid(&samples, 4)?;
        imageio::save_png(&grid, &out_dir.join(format!("samples_stage{stage}.png")))?;

        final_state = ckpt_state;
        if stage < config.max_stage {
            generator.grow(&mut param_rng)?;
            discriminator.grow(&mut param_rng)?;
        }
    }

    Ok(ProganRun {
        generator,
        discriminator,
        timing,
        final_state,
    })
}

fn highest_complete_stage(out_dir: &Path, max_stage: usize) -> Option<usize> {
    (0..=max_stage)
        .rev()
        .find(|k| load_checkpoint(&out_dir.join(format!("stage{k}.ckpt"))).is_ok())
}

fn abort_non_finite(
    generator: &mut Generator<f32>,
    discriminator: &mut Discriminator<f32>,
    state: &GrowthState,
    out_dir: &Path,
    detail: String,
) -> Result<ProganRun> {
    let mut params = generator.named_params();
    params.extend(discriminator.named_params());
    let _ = save_checkpoint(&params, state, &out_dir.join("diagnostic.ckpt"));
    Err(Error::NonFiniteLoss {
        stage: state.stage,
        epoch: state.epochs_in_stage,
        detail,
    })
}

pub fn append_timing_row(
    out_dir: &Path,
    stage: &str,
    resolution: usize,
    conv_mode: &str,
    seconds: f64,
) -> Result<()> {
    let path = out_dir.join("timing.csv");
    let fresh = !path.exists();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    if fresh {
        writeln!(file, "{TIMING_CSV_HEADER}")?;
    }
    writeln!(file, "{stage},{resolution},{conv_mode},{seconds:.6}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latents_live_on_the_unit_sphere() {
        let mut rng = crate::rng::seeded(3);
        let z = sample_latents(4, 16, &mut rng).unwrap();
        for row in z.data().chunks(16) {
            let norm = row.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_dataset_smaller_than_batch() {
        let config = TrainConfig {
            batch_size: 8,
            ..TrainConfig::default()
        };
        let mut dataset = GanDataset::new();
        dataset.insert_level(4, vec![Tensor::zeros(&[3, 4, 4]).unwrap(); 4]);
        let dir = tempfile::tempdir().unwrap();
        let err = train_progan(&config, &dataset, dir.path()).err().unwrap();
        assert!(matches!(err, Error::Dataset(_)));
    }
}
