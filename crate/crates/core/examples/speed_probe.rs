//! Quick training-speed probe (not part of the deliverable test suite).
use ganpipe_core::conv::ConvMode;
use ganpipe_core::data::GanDataset;
use ganpipe_core::progan::{train_progan, TrainConfig};
use ganpipe_core::rng::seeded;
use ganpipe_core::Tensor;

fn main() {
    let mut rng = seeded(1);
    let mut dataset = GanDataset::new();
    for res in [4usize, 8, 16] {
        let imgs: Vec<Tensor<f32>> = (0..64)
            .map(|_| Tensor::<f32>::randn(&[3, res, res], &mut rng).unwrap())
            .collect();
        dataset.insert_level(res, imgs);
    }
    for mode in [ConvMode::Vanilla, ConvMode::Dsep] {
        let config = TrainConfig {
            latent_dim: 64,
            base_channels: 64,
            max_stage: 2,
            epochs_per_stage: 2,
            batch_size: 8,
            conv_mode: mode,
            seed: 7,
            ..TrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let t0 = std::time::Instant::now();
        let run = train_progan(&config, &dataset, dir.path()).unwrap();
        let total = t0.elapsed().as_secs_f64();
        let per_stage: Vec<String> = run
            .timing
            .iter()
            .map(|t| format!("s{}:{:.2}s", t.stage, t.seconds))
            .collect();
        println!("{mode}: total {total:.2}s  [{}]", per_stage.join(" "));
    }
}
