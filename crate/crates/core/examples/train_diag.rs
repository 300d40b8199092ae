//! Diagnostic: per-channel stats of real vs generated, critic scores,
//! and a sample dump.
use ganpipe_core::conv::ConvMode;
use ganpipe_core::data::GanDataset;
use ganpipe_core::imageio;
use ganpipe_core::progan::{sample_latents, train_progan, TrainConfig};
use ganpipe_core::resample::{resample, KernelKind, ResampleKernel};
use ganpipe_core::rng::{seeded, stage_stream, Stream};
use ganpipe_core::synth::{render_image, SynthKind};
use ganpipe_core::Tensor;

fn stats(name: &str, batch: &Tensor<f32>) {
    let d = batch.data();
    let n = d.len() as f64;
    let mean = d.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = d.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let min = d.iter().cloned().fold(f32::INFINITY, f32::min);
    let max = d.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    println!("{name}: mean {mean:.3} std {:.3} min {min:.3} max {max:.3}", var.sqrt());
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut rng = seeded(501);
    let originals: Vec<Tensor<f64>> = (0..64)
        .map(|_| render_image(SynthKind::SmoothBlob, 16, &mut rng))
        .collect();
    let kernel = ResampleKernel::new(KernelKind::Bicubic);
    let mut dataset = GanDataset::new();
    for res in [4usize, 8, 16] {
        dataset.insert_level(res, originals.iter().map(|img| {
            let s = if res == 16 { img.clone() } else { resample(img, &kernel, (res, res)).unwrap() };
            imageio::to_signed_f32(&s)
        }).collect());
    }
    let config = TrainConfig {
        latent_dim: 64, base_channels: 64, max_stage: 2, epochs_per_stage: epochs,
        batch_size: 8, learning_rate: 1e-3, conv_mode: ConvMode::Dsep, seed: 11,
        ..TrainConfig::default()
    };
    let out = std::path::PathBuf::from("/tmp/train_diag");
    let _ = std::fs::remove_dir_all(&out);
    let run = train_progan(&config, &dataset, &out).unwrap();

    let mut latent_rng = stage_stream(config.seed, Stream::Latent, 777);
    let latents = sample_latents(16, config.latent_dim, &mut latent_rng).unwrap();
    let fake = run.generator.forward(&latents, 1.0).unwrap();
    let real = Tensor::stack(&dataset.level(16).unwrap()[..16].to_vec()).unwrap();
    stats("real@16", &real);
    stats("fake@16", &fake);
    let d_real = run.discriminator.forward(&real, 1.0).unwrap();
    let d_fake = run.discriminator.forward(&fake, 1.0).unwrap();
    let mean = |t: &Tensor<f32>| t.data().iter().map(|&v| v as f64).sum::<f64>() / t.numel() as f64;
    println!("D(real) mean {:.3}  D(fake) mean {:.3}", mean(&d_real), mean(&d_fake));
    println!("samples at /tmp/train_diag/samples_stage2.png");
}
