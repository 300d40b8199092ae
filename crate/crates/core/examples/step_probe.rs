//! Times the pieces of one critic step at stage-2 scale.
use ganpipe_core::conv::ConvMode;
use ganpipe_core::progan::{build_discriminator, build_generator, wgan_gp_loss, GrowthState, TrainConfig};
use ganpipe_core::rng::seeded;
use ganpipe_core::Tensor;
use std::time::Instant;

fn main() {
    for mode in [ConvMode::Vanilla, ConvMode::Dsep] {
        let config = TrainConfig { latent_dim: 64, base_channels: 64, max_stage: 2, batch_size: 8, conv_mode: mode, ..TrainConfig::default() };
        let mut rng = seeded(1);
        let g = build_generator::<f32>(&config, &GrowthState::start_of(2), &mut rng).unwrap();
        let d = build_discriminator::<f32>(&config, &GrowthState::start_of(2), &mut rng).unwrap();
        let z = Tensor::<f32>::randn(&[8, 64], &mut rng).unwrap();
        let real = Tensor::<f32>::randn(&[8, 3, 16, 16], &mut rng).unwrap();

        let t0 = Instant::now();
        let fake = g.forward(&z, 1.0).unwrap();
        let t_gfwd = t0.elapsed();

        let t0 = Instant::now();
        let score = d.forward(&real, 1.0).unwrap();
        let t_dfwd = t0.elapsed();
        std::hint::black_box(score.item().ok());

        let t0 = Instant::now();
        let losses = wgan_gp_loss(|x| d.forward(x, 1.0), &real, &fake, 10.0, &mut rng).unwrap();
        let t_loss = t0.elapsed();

        let t0 = Instant::now();
        let grads = losses.d_loss.backward().unwrap();
        let t_back = t0.elapsed();
        std::hint::black_box(grads.len());

        let t0 = Instant::now();
        let gl = losses.g_loss.backward().unwrap();
        let t_gback = t0.elapsed();
        std::hint::black_box(gl.len());

        println!("{mode}: g_fwd {:?}  d_fwd {:?}  loss(incl gp bwd) {:?}  d_loss.backward {:?}  g_loss.backward {:?}",
            t_gfwd, t_dfwd, t_loss, t_back, t_gback);
    }
}
