//! Experiment: how far does the toy training move SWD under different
//! patch-level choices?
use ganpipe_core::conv::ConvMode;
use ganpipe_core::data::GanDataset;
use ganpipe_core::imageio;
use ganpipe_core::metrics::{swd, extract_patch_sets, MetricConfig};
use ganpipe_core::progan::{build_generator, sample_latents, train_progan, GrowthState, TrainConfig};
use ganpipe_core::resample::{resample, KernelKind, ResampleKernel};
use ganpipe_core::rng::{seeded, stage_stream, stream, Stream};
use ganpipe_core::synth::{render_image, SynthKind};
use ganpipe_core::Tensor;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let batch: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2);

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
        batch_size: batch, learning_rate: lr, conv_mode: ConvMode::Dsep, seed: 11,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let t0 = std::time::Instant::now();
    let run = train_progan(&config, &dataset, dir.path()).unwrap();
    eprintln!("trained in {:.1}s (batch {batch}, lr {lr}, epochs {epochs})", t0.elapsed().as_secs_f64());

    let mut latent_rng = stage_stream(config.seed, Stream::Latent, 777);
    let latents = sample_latents(64, config.latent_dim, &mut latent_rng).unwrap();
    let generate = |gen: &ganpipe_core::progan::Generator<f32>| -> Vec<Tensor<f64>> {
        let b = gen.forward(&latents, 1.0).unwrap();
        (0..64).map(|i| imageio::to_unit_f64(&b.narrow(0, i, 1).unwrap().reshape(&[3,16,16]).unwrap())).collect()
    };
    let mut init_rng = stream(config.seed, Stream::ParamInit);
    let untrained = build_generator::<f32>(&config, &GrowthState::start_of(2), &mut init_rng).unwrap();
    let init_samples = generate(&untrained);
    let trained_samples = generate(&run.generator);

    // variant A: bands only (current), levels 1
    // variant B: bands + residual as an extra level
    for (name, include_residual, levels) in [("bands L1", false, 1usize), ("bands L2? n/a", false, 1), ("bands+residual L1", true, 1)] {
        let cfg = MetricConfig { descriptors_per_level: 1024, projections: 128, seed: 9, ..MetricConfig::default() };
        let dist = |a: &[Tensor<f64>], b: &[Tensor<f64>]| -> f64 {
            let mut ra = stream(cfg.seed, Stream::Metrics);
            let mut rb = stream(cfg.seed, Stream::Metrics);
            let mut sa = extract_patch_sets(a, levels, 7, cfg.descriptors_per_level, &mut ra).unwrap();
            let mut sb = extract_patch_sets(b, levels, 7, cfg.descriptors_per_level, &mut rb).unwrap();
            if include_residual {
                // crude residual-level patches: downsample to 8 and patch whole set
                let down = |imgs: &[Tensor<f64>]| -> Vec<Tensor<f64>> {
                    imgs.iter().map(|im| resample(im, &ResampleKernel::new(KernelKind::Box), (8,8)).unwrap()).collect()
                };
                let mut ra = stream(cfg.seed ^ 7, Stream::Metrics);
                let mut rb = stream(cfg.seed ^ 7, Stream::Metrics);
                // patch the low-pass image directly (no band subtraction): pass levels=... extract on low-pass as single "band"?
                // quick hack: treat the 8x8 low-pass as an image and take its band-0 patches WITHOUT subtraction is not available;
                // approximate by patching raw images resampled to 8 via a custom extraction here:
                let patch_raw = |imgs: &[Tensor<f64>], r: &mut ganpipe_core::rng::Rng| {
                    use rand::Rng as _;
                    let mut descs = Vec::new();
                    for im in imgs {
                        for _ in 0..(cfg.descriptors_per_level / imgs.len()).max(1) {
                            let s = im.shape();
                            let y0 = r.random_range(0..=s[1]-7);
                            let x0 = r.random_range(0..=s[2]-7);
                            let mut d = Vec::with_capacity(3*49);
                            for c in 0..3 {
                                let plane = &im.data()[c*s[1]*s[2]..(c+1)*s[1]*s[2]];
                                let start = d.len();
                                for y in y0..y0+7 { d.extend_from_slice(&plane[y*s[2]+x0..y*s[2]+x0+7]); }
                                // per-channel normalize
                                let n = (d.len()-start) as f64;
                                let mean = d[start..].iter().sum::<f64>()/n;
                                let var = d[start..].iter().map(|v|(v-mean)*(v-mean)).sum::<f64>()/n;
                                let sd = var.sqrt().max(1e-8);
                                for v in &mut d[start..] { *v = (*v-mean)/sd; }
                            }
                            descs.push(d);
                        }
                    }
                    ganpipe_core::metrics::PatchSet { descriptors: descs, level: 99, normalized: true }
                };
                sa.push(patch_raw(&down(a), &mut ra));
                sb.push(patch_raw(&down(b), &mut rb));
            }
            let mut total = 0.0;
            for (l, (x, y)) in sa.iter().zip(&sb).enumerate() {
                total += swd(x, y, cfg.projections, cfg.seed ^ (l as u64+1)).unwrap();
            }
            total / sa.len() as f64
        };
        let init = dist(&originals, &init_samples);
        let trained = dist(&originals, &trained_samples);
        println!("{name}: init {init:.4} trained {trained:.4} ratio {:.3}", trained/init);
    }
}
