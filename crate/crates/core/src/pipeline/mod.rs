//! Orchestration: train the progressive stage to its stopping
//! resolution, optionally train the super-resolution stage and apply it
//! to the generated samples, then evaluate both sample sets against the
//! real images and emit the two-column report.
//!
//! Completed steps are recorded in `manifest.txt`; `resume` skips them,
//! so an aborted run picks up where it stopped without recomputing
//! finished stages.

mod config;
mod dataset;

pub use config::{load_config, parse_config, PipelineConfig};
pub use dataset::{ingest_dataset, IngestedDataset};

pub use crate::checkpoint::{assign_params, load_checkpoint, save_checkpoint, Checkpoint};
pub use crate::synth::{synth_dataset, SynthKind, SyntheticDatasetSpec};

use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::imageio;
use crate::metrics::{evaluate_sets, MetricReport, TinyConvClassifier, CLASSIFIER_NOTE};
use crate::progan::{
    build_discriminator, build_generator, sample_latents, train_progan_with_resume, GrowthState,
    TrainConfig,
};
use crate::rng::{stage_stream, Stream};
use crate::srgan::{train_srgan, SrGenerator};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug)]
pub struct PipelineOutcome {
    pub final_resolution: usize,
    pub progan_report: MetricReport,
    pub sr_report: Option<MetricReport>,
}

struct Manifest {
    path: PathBuf,
    done: Vec<String>,
}

impl Manifest {
    fn open(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        let done = if path.exists() {
            std::fs::read_to_string(&path)?
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect()
        } else {
            Vec::new()
        };
        Ok(Manifest { path, done })
    }

    fn is_done(&self, step: &str) -> bool {
        self.done.iter().any(|s| s == step)
    }

    fn mark_done(&mut self, step: &str) -> Result<()> {
        if !self.is_done(step) {
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)?;
            writeln!(file, "{step}")?;
            self.done.push(step.to_string());
        }
        Ok(())
    }
}

/// Runs the full pipeline described by `config`. With `resume`, steps
/// recorded in the output directory's manifest are skipped and their
/// artifacts reloaded.
pub fn run_pipeline(config: &PipelineConfig, resume: bool) -> Result<PipelineOutcome> {
    config.validate()?;
    let out = &config.output_dir;
    std::fs::create_dir_all(out)?;
    let mut manifest = Manifest::open(out)?;
    if !resume && !manifest.done.is_empty() {
        return Err(Error::Config(format!(
            "output dir {out:?} holds a previous run's manifest; pass resume or point at a \
             clean directory"
        )));
    }

    let final_res = config.final_resolution();
    let progan_res = config.progan_resolution();
    let dataset = ingest_dataset(&config.dataset_dir, final_res)?;
    if dataset.resolution < final_res {
        return Err(Error::Dataset(format!(
            "dataset resolution {} below the pipeline's final resolution {final_res}",
            dataset.resolution
        )));
    }

    // 1. progressive stage, halted at stop_stage
    let progan_config = TrainConfig {
        max_stage: config.stop_stage,
        ..config.progan.clone()
    };
    let generator = if manifest.is_done("progan") {
        let ckpt = checkpoint::load_checkpoint(&out.join(format!("stage{}.ckpt", config.stop_stage)))?;
        let mut throwaway = stage_stream(progan_config.seed, Stream::ParamInit, 0);
        let state = GrowthState::start_of(config.stop_stage);
        let mut g = build_generator::<f32>(&progan_config, &state, &mut throwaway)?;
        let mut d = build_discriminator::<f32>(&progan_config, &state, &mut throwaway)?;
        assign_params(&ckpt, |f| {
            g.visit_params(f);
            d.visit_params(f);
        })?;
        g
    } else {
        let run = train_progan_with_resume(&progan_config, &dataset.gan, out, resume)?;
        manifest.mark_done("progan")?;
        run.generator
    };

    // 2. final samples from the progressive stage
    let samples_dir = out.join("samples_progan");
    if !manifest.is_done("samples_progan") {
        std::fs::create_dir_all(&samples_dir)?;
        let mut latent_rng = stage_stream(config.seed, Stream::Latent, 1_000_000);
        let digits = config.sample_count.to_string().len();
        for i in 0..config.sample_count {
            let z = sample_latents(1, progan_config.latent_dim, &mut latent_rng)?;
            let img = generator.forward(&z, 1.0)?;
            let img01 = imageio::to_unit_f64(&img.reshape(&[3, progan_res, progan_res])?);
            imageio::save_png(&img01, &samples_dir.join(format!("{i:0digits$}.png")))?;
        }
        manifest.mark_done("samples_progan")?;
    }
    let progan_samples: Vec<Tensor<f64>> = imageio::list_pngs(&samples_dir)?
        .iter()
        .map(|p| imageio::load_png(p))
        .collect::<Result<_>>()?;

    // 3. super-resolution stage over the same dataset, then applied to
    // the generated samples
    let sr_samples: Option<Vec<Tensor<f64>>> = if config.sr_enabled {
        let sr_generator = if manifest.is_done("srgan") {
            let ckpt = checkpoint::load_checkpoint(&out.join("sr.ckpt"))?;
            let mut throwaway = stage_stream(config.srgan.seed, Stream::ParamInit, 0);
            let mut g = SrGenerator::<f32>::new(&config.srgan, &mut throwaway)?;
            assign_params(&ckpt, |f| g.visit_params(f))?;
            g
        } else {
            let hr01 = dataset.level01(final_res)?;
            let run = train_srgan(&config.srgan, hr01, out)?;
            crate::progan::append_timing_row(out, "sr", final_res, "vanilla", run.seconds)?;
            manifest.mark_done("srgan")?;
            run.generator
        };

        let sr_dir = out.join("samples_sr");
        if !manifest.is_done("samples_sr") {
            std::fs::create_dir_all(&sr_dir)?;
            let digits = progan_samples.len().to_string().len();
            for (i, sample01) in progan_samples.iter().enumerate() {
                let lr = imageio::to_signed_f32(sample01);
                let s = lr.shape().to_vec();
                let lr = lr.reshape(&[1, s[0], s[1], s[2]])?;
                let hr = sr_generator.forward(&lr)?;
                let hr01 = imageio::to_unit_f64(&hr.reshape(&[3, final_res, final_res])?);
                imageio::save_png(&hr01, &sr_dir.join(format!("{i:0digits$}.png")))?;
            }
            manifest.mark_done("samples_sr")?;
        }
        Some(
            imageio::list_pngs(&sr_dir)?
                .iter()
                .map(|p| imageio::load_png(p))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    // 4. Table-2-shaped evaluation: each column compares against real
    // images at its own resolution
    let classifier = TinyConvClassifier::train_default(config.metrics.seed)?;
    let progan_report = evaluate_sets(
        dataset.level01(progan_res)?,
        &progan_samples,
        &classifier,
        &config.metrics,
        &format!("{}@{}", config.dataset_dir.display(), progan_res),
        "samples_progan",
    )?;
    let sr_report = match &sr_samples {
        Some(samples) => Some(evaluate_sets(
            dataset.level01(final_res)?,
            samples,
            &classifier,
            &config.metrics,
            &format!("{}@{}", config.dataset_dir.display(), final_res),
            "samples_sr",
        )?),
        None => None,
    };
    write_report(out, &progan_report, sr_report.as_ref())?;
    manifest.mark_done("evaluate")?;

    Ok(PipelineOutcome {
        final_resolution: final_res,
        progan_report,
        sr_report,
    })
}

/// The three-row, one-or-two-column report. Inception cells carry their
/// split deviation inline; footers record scale variants and provenance.
pub fn write_report(
    out_dir: &Path,
    progan: &MetricReport,
    sr: Option<&MetricReport>,
) -> Result<()> {
    let mut text = String::new();
    match sr {
        Some(sr) => {
            text.push_str("metric,progan,srgan\n");
            text.push_str(&format!(
                "Sliced Wasserstein Distance,{:.6},{:.6}\n",
                progan.swd, sr.swd
            ));
            text.push_str(&format!("MSSSIM,{:.6},{:.6}\n", progan.ms_ssim, sr.ms_ssim));
            text.push_str(&format!(
                "Inception Score,{:.4} ± {:.4},{:.4} ± {:.4}\n",
                progan.inception_mean, progan.inception_std, sr.inception_mean, sr.inception_std
            ));
            text.push_str(&format!(
                "# swd_x1000: progan={:.3} srgan={:.3}\n",
                progan.swd_x1000(),
                sr.swd_x1000()
            ));
        }
        None => {
            text.push_str("metric,progan\n");
            text.push_str(&format!(
                "Sliced Wasserstein Distance,{:.6}\n",
                progan.swd
            ));
            text.push_str(&format!("MSSSIM,{:.6}\n", progan.ms_ssim));
            text.push_str(&format!(
                "Inception Score,{:.4} ± {:.4}\n",
                progan.inception_mean, progan.inception_std
            ));
            text.push_str(&format!("# swd_x1000: progan={:.3}\n", progan.swd_x1000()));
        }
    }
    text.push_str(&format!("# params: {}\n", progan.params));
    text.push_str(&format!("# note: {}\n", CLASSIFIER_NOTE));
    std::fs::write(out_dir.join(REPORT_FILE), text)?;
    Ok(())
}
