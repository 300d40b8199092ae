//! Progressive GAN: resolution grows from 4x4 by doubling stages, new
//! layers fade in smoothly, the discriminator carries a minibatch
//! standard-deviation feature, all layers use equalized learning rate,
//! and training minimizes the improved Wasserstein loss with a gradient
//! penalty.

mod loss;
mod networks;
mod train;

pub use loss::{wgan_gp_loss, WganGpLoss};
pub use networks::{build_discriminator, build_generator, Discriminator, Generator};
pub use train::{
    append_timing_row, sample_latents, train_progan, train_progan_with_resume, ProganRun,
    StageTiming, TIMING_CSV_HEADER,
};

pub use crate::nn::equalized_scale;

use crate::conv::ConvMode;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Fading,
    Stable,
}

/// Where the progressive schedule currently stands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthState {
    /// 0 -> 4x4, 1 -> 8x8, ...
    pub stage: usize,
    pub resolution: usize,
    /// Fade-in coefficient in [0, 1]; 1 once the stage is stable.
    pub alpha: f64,
    pub epochs_in_stage: usize,
    pub phase: Phase,
}

impl GrowthState {
    pub fn resolution_of(stage: usize) -> usize {
        4 << stage
    }

    /// State at the first epoch of a stage. Stage 0 has nothing to fade
    /// into, so it starts (and stays) stable at alpha 1.
    pub fn start_of(stage: usize) -> GrowthState {
        GrowthState {
            stage,
            resolution: Self::resolution_of(stage),
            alpha: if stage == 0 { 1.0 } else { 0.0 },
            epochs_in_stage: 0,
            phase: if stage == 0 {
                Phase::Stable
            } else {
                Phase::Fading
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub base_channels: usize,
    pub max_stage: usize,
    pub epochs_per_stage: usize,
    /// Fraction of each stage's epochs spent ramping alpha 0 -> 1.
    pub fade_fraction: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gp_lambda: f64,
    pub conv_mode: ConvMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 64,
            base_channels: 64,
            max_stage: 2,
            epochs_per_stage: 50,
            fade_fraction: 0.5,
            batch_size: 16,
            learning_rate: 1e-3,
            gp_lambda: 10.0,
            conv_mode: ConvMode::Dsep,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0
            || self.base_channels == 0
            || self.epochs_per_stage == 0
            || self.batch_size == 0
        {
            return Err(Error::Config("all counts must be positive".into()));
        }
        if !(self.fade_fraction > 0.0 && self.fade_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "fade_fraction must be in (0, 1], got {}",
                self.fade_fraction
            )));
        }
        if self.gp_lambda < 0.0 {
            return Err(Error::Config("gp_lambda must be >= 0".into()));
        }
        Ok(())
    }

    /// Feature channels at a stage: base at 4x4, halved per stage, floor 8.
    pub fn channels_at(&self, stage: usize) -> usize {
        (self.base_channels >> stage).max(8)
    }
}

/// Advances the schedule by one epoch. Within a stage, alpha ramps
/// linearly from 0 to 1 over the first `fade_fraction * epochs_per_stage`
/// epochs and the phase flips to stable when it reaches 1. Completing a
/// stage advances to the next (alpha 0, fading) unless already at
/// `max_stage`, where the state keeps counting epochs but stays put.
pub fn schedule_step(state: &GrowthState, config: &TrainConfig) -> GrowthState {
    let epochs_done = state.epochs_in_stage + 1;
    if epochs_done >= config.epochs_per_stage && state.stage < config.max_stage {
        return GrowthState::start_of(state.stage + 1);
    }
    let alpha = stage_alpha(state.stage, epochs_done, config);
    GrowthState {
        stage: state.stage,
        resolution: state.resolution,
        alpha,
        epochs_in_stage: epochs_done,
        phase: if alpha < 1.0 {
            Phase::Fading
        } else {
            Phase::Stable
        },
    }
}

fn stage_alpha(stage: usize, epoch: usize, config: &TrainConfig) -> f64 {
    if stage == 0 {
        return 1.0;
    }
    let fade_epochs = config.fade_fraction * config.epochs_per_stage as f64;
    (epoch as f64 / fade_epochs).min(1.0)
}

/// (1 - alpha) * coarse + alpha * fine. The endpoints return the input
/// unchanged so a finished fade is exactly the fine path.
pub fn fade_blend<T: Element>(
    coarse: &Tensor<T>,
    fine: &Tensor<T>,
    alpha: f64,
) -> Result<Tensor<T>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "fade alpha must be in [0, 1], got {alpha}"
        )));
    }
    if coarse.shape() != fine.shape() {
        return Err(Error::shape(format!(
            "fade_blend of {:?} and {:?}",
            coarse.shape(),
            fine.shape()
        )));
    }
    if alpha == 0.0 {
        return Ok(coarse.clone());
    }
    if alpha == 1.0 {
        return Ok(fine.clone());
    }
    coarse.mul_scalar(1.0 - alpha).add(&fine.mul_scalar(alpha))
}

/// Appends one constant feature map holding the batch-average of the
/// per-feature population standard deviation across the batch.
/// (B, C, H, W) -> (B, C+1, H, W).
pub fn minibatch_stddev<T: Element>(batch: &Tensor<T>) -> Result<Tensor<T>> {
    let s = batch.shape();
    if s.len() != 4 {
        return Err(Error::shape(format!(
            "minibatch_stddev wants (B, C, H, W), got {s:?}"
        )));
    }
    let (b, _, h, w) = (s[0], s[1], s[2], s[3]);
    let mean = batch.mean_axes(&[0], true)?;
    let var = batch.sub(&mean)?.square().mean_axes(&[0], true)?;
    let avg_std = var.sqrt().mean_all();
    let feature = avg_std.broadcast_to(&[b, 1, h, w])?;
    Tensor::concat(&[batch.clone(), feature], 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growth_state_resolution_invariant() {
        for stage in 0..6 {
            assert_eq!(GrowthState::start_of(stage).resolution, 4 << stage);
        }
    }

    #[test]
    fn stage_zero_never_fades() {
        let config = TrainConfig {
            epochs_per_stage: 10,
            ..TrainConfig::default()
        };
        let mut state = GrowthState::start_of(0);
        for _ in 0..9 {
            assert_eq!(state.alpha, 1.0);
            assert_eq!(state.phase, Phase::Stable);
            state = schedule_step(&state, &config);
        }
    }

    #[test]
    fn alpha_ramps_linearly_and_reaches_exactly_one() {
        let config = TrainConfig {
            epochs_per_stage: 50,
            fade_fraction: 0.5,
            max_stage: 3,
            ..TrainConfig::default()
        };
        let mut state = GrowthState::start_of(1);
        assert_eq!(state.alpha, 0.0);
        let mut prev = -1.0;
        for epoch in 0..50 {
            assert_eq!(state.epochs_in_stage, epoch);
            let expect = (epoch as f64 / 25.0).min(1.0);
            assert!((state.alpha - expect).abs() < 1e-15, "epoch {epoch}");
            assert!(state.alpha >= prev, "alpha must not decrease");
            prev = state.alpha;
            state = schedule_step(&state, &config);
        }
        // epoch 13 of the spec's example: 13/25
        let mut state = GrowthState::start_of(1);
        for _ in 0..13 {
            state = schedule_step(&state, &config);
        }
        assert!((state.alpha - 0.52).abs() < 1e-15);
        // alpha hits exactly 1 at the end of the fade window
        let mut state = GrowthState::start_of(1);
        for _ in 0..25 {
            state = schedule_step(&state, &config);
        }
        assert_eq!(state.alpha, 1.0);
        assert_eq!(state.phase, Phase::Stable);
    }

    #[test]
    fn stage_transition_resets_fade() {
        let config = TrainConfig {
            epochs_per_stage: 50,
            max_stage: 3,
            ..TrainConfig::default()
        };
        let mut state = GrowthState::start_of(1);
        for _ in 0..50 {
            state = schedule_step(&state, &config);
        }
        assert_eq!(state.stage, 2);
        assert_eq!(state.alpha, 0.0);
        assert_eq!(state.phase, Phase::Fading);
        assert_eq!(state.epochs_in_stage, 0);
    }

    #[test]
    fn max_stage_is_terminal() {
        let config = TrainConfig {
            epochs_per_stage: 2,
            max_stage: 1,
            ..TrainConfig::default()
        };
        let mut state = GrowthState::start_of(1);
        for _ in 0..10 {
            state = schedule_step(&state, &config);
        }
        assert_eq!(state.stage, 1);
    }

    #[test]
    fn fade_blend_endpoints_exact() {
        let coarse = Tensor::<f64>::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        let fine = Tensor::<f64>::from_vec(vec![10.0, 20.0], &[2]).unwrap();
        assert_eq!(
            fade_blend(&coarse, &fine, 0.0).unwrap().to_vec(),
            coarse.to_vec()
        );
        assert_eq!(
            fade_blend(&coarse, &fine, 1.0).unwrap().to_vec(),
            fine.to_vec()
        );
        let mid = fade_blend(
            &Tensor::from_vec(vec![0.0], &[1]).unwrap(),
            &Tensor::from_vec(vec![2.0], &[1]).unwrap(),
            0.5,
        )
        .unwrap();
        assert_eq!(mid.to_vec(), vec![1.0]);
        assert!(fade_blend(&coarse, &fine, 1.5).is_err());
        assert!(fade_blend(&coarse, &fine, -0.1).is_err());
    }

    #[test]
    fn fade_blend_is_convex_combination() {
        let mut rng = crate::rng::seeded(5);
        let a = Tensor::<f64>::randn(&[2, 3, 4, 4], &mut rng).unwrap();
        let b = Tensor::<f64>::randn(&[2, 3, 4, 4], &mut rng).unwrap();
        for alpha in [0.1, 0.33, 0.77, 0.9] {
            let out = fade_blend(&a, &b, alpha).unwrap();
            for ((x, y), z) in a.data().iter().zip(b.data()).zip(out.data()) {
                let (lo, hi) = (x.min(*y), x.max(*y));
                assert!(*z >= lo - 1e-12 && *z <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn minibatch_stddev_zero_variance() {
        // exactly representable mean: identical samples give exact zeros
        let img = Tensor::<f64>::full(&[1, 2, 3, 3], 0.5).unwrap();
        let batch = Tensor::concat(&[img.clone(), img.clone(), img], 0).unwrap();
        let out = minibatch_stddev(&batch).unwrap();
        assert_eq!(out.shape(), &[3, 3, 3, 3]);
        let appended = out.narrow(1, 2, 1).unwrap();
        assert!(appended.data().iter().all(|&v| v == 0.0));

        // a mean with rounding noise stays zero to the stated tolerance
        let img = Tensor::<f64>::full(&[1, 2, 3, 3], 0.7).unwrap();
        let batch = Tensor::concat(&[img.clone(), img.clone(), img], 0).unwrap();
        let out = minibatch_stddev(&batch).unwrap();
        let appended = out.narrow(1, 2, 1).unwrap();
        assert!(appended.data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn minibatch_stddev_unit_case() {
        // two samples, features 0 and 2: mean 1, deviations +-1,
        // population variance 1, std 1 everywhere.
        let zeros = Tensor::<f64>::zeros(&[1, 2, 2, 2]).unwrap();
        let twos = Tensor::<f64>::full(&[1, 2, 2, 2], 2.0).unwrap();
        let batch = Tensor::concat(&[zeros, twos], 0).unwrap();
        let out = minibatch_stddev(&batch).unwrap();
        let appended = out.narrow(1, 2, 1).unwrap();
        for v in appended.data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn minibatch_stddev_shape_contract() {
        let mut rng = crate::rng::seeded(1);
        let batch = Tensor::<f64>::randn(&[4, 8, 16, 16], &mut rng).unwrap();
        let out = minibatch_stddev(&batch).unwrap();
        assert_eq!(out.shape(), &[4, 9, 16, 16]);
        // the appended channel is constant and equals the population-std
        // average
        let b = batch.data();
        let (c, h, w) = (8, 16, 16);
        let mut total = 0.0;
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let vals: Vec<f64> =
                        (0..4).map(|bi| b[((bi * c + ci) * h + y) * w + x]).collect();
                    let mean = vals.iter().sum::<f64>() / 4.0;
                    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
                    total += var.sqrt();
                }
            }
        }
        let expect = total / (c * h * w) as f64;
        let appended = out.narrow(1, c, 1).unwrap();
        for v in appended.data() {
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn minibatch_stddev_differentiable() {
        let mut rng = crate::rng::seeded(9);
        let x = Tensor::<f64>::randn(&[3, 2, 4, 4], &mut rng).unwrap();
        let report = crate::grad_check(
            |t| Ok(minibatch_stddev(t)?.square().sum_all()),
            &x,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn channel_plan_tapers_with_floor() {
        let config = TrainConfig {
            base_channels: 64,
            ..TrainConfig::default()
        };
        assert_eq!(config.channels_at(0), 64);
        assert_eq!(config.channels_at(1), 32);
        assert_eq!(config.channels_at(2), 16);
        assert_eq!(config.channels_at(3), 8);
        assert_eq!(config.channels_at(4), 8);
    }
}
