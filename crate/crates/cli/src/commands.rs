use std::io::Write as _;
use std::path::PathBuf;

use clap::Args;

use ganpipe_core::checkpoint::{assign_params, load_checkpoint};
use ganpipe_core::conv::{
    cost_breakdown, mult_count_corrected, speedup_ratio, ConvGeometry, ConvMode,
};
use ganpipe_core::imageio;
use ganpipe_core::metrics::{
    msssim_between_sets, swd_between_sets, MetricConfig, TinyConvClassifier, CLASSIFIER_NOTE,
};
use ganpipe_core::pipeline::{ingest_dataset, load_config, run_pipeline};
use ganpipe_core::progan::train_progan as run_train_progan;
use ganpipe_core::resample::{bench_resample, KernelKind};
use ganpipe_core::srgan::{train_srgan as train_srgan_run, SrConfig, SrGenerator};
use ganpipe_core::synth::{synth_dataset, SynthKind, SyntheticDatasetSpec};
use ganpipe_core::tensor::Tensor;
use ganpipe_core::{Error, Result};

#[derive(Args)]
pub struct CostmodelArgs {
    /// Input channels
    #[arg(long)]
    pub m: usize,
    /// Output channels (kernel count)
    #[arg(long)]
    pub n: usize,
    /// Kernel extent
    #[arg(long)]
    pub k: usize,
    /// Input spatial extent
    #[arg(long)]
    pub df: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    pub pad: usize,
}

pub fn costmodel(args: CostmodelArgs) -> Result<()> {
    let geometry = ConvGeometry::new(args.df, args.k, args.m, args.n, args.stride, args.pad)
        .map_err(|e| Error::Config(e.to_string()))?;
    let costs = cost_breakdown(&geometry);
    println!(
        "geometry: d_f={} d_k={} d_g={} m={} n={} stride={} pad={}",
        geometry.d_f,
        geometry.d_k,
        geometry.d_g,
        geometry.m,
        geometry.n,
        geometry.stride,
        geometry.padding
    );
    println!("{:<28} {:<26} {:>16}", "quantity", "formula", "value");
    println!(
        "{:<28} {:<26} {:>16}",
        "vanilla multiplications", "N*K^2*F^2*M", costs.vanilla_mults
    );
    let corrected = mult_count_corrected(&geometry, ConvMode::Vanilla);
    if corrected != costs.vanilla_mults {
        println!(
            "{:<28} {:<26} {:>16}",
            "  (spatially corrected)", "N*K^2*G^2*M", corrected
        );
    }
    println!(
        "{:<28} {:<26} {:>16}",
        "dsep multiplications",
        "M*G^2*(K^2+N)",
        costs.dsep_mults
    );
    match speedup_ratio(&geometry) {
        Ok(ratio) => println!(
            "{:<28} {:<26} {:>16.6}",
            "dsep/vanilla ratio", "1/N + 1/K^2", ratio
        ),
        Err(_) => println!(
            "{:<28} {:<26} {:>16}",
            "dsep/vanilla ratio", "1/N + 1/K^2", "n/a (needs d_f == d_g)"
        ),
    }
    Ok(())
}

#[derive(Args)]
pub struct TrainProganArgs {
    /// Key-value config file (pipeline.dataset_dir and the progan.*
    /// section apply)
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for checkpoints, samples, and timing.csv
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train_progan(args: TrainProganArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let max_res = 4usize << config.progan.max_stage;
    let dataset = ingest_dataset(&config.dataset_dir, max_res)?;
    let run = run_train_progan(&config.progan, &dataset.gan, &args.out)?;
    for row in &run.timing {
        println!(
            "stage {} ({}x{}): {:.2}s",
            row.stage, row.resolution, row.resolution, row.seconds
        );
    }
    println!("checkpoints and samples written to {}", args.out.display());
    Ok(())
}


#[derive(Args)]
pub struct TrainSrganArgs {
    /// Key-value config file (pipeline.dataset_dir and the srgan.*
    /// section apply)
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for sr.ckpt and sr_loss.csv
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train_srgan(args: TrainSrganArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let files = imageio::list_pngs(&config.dataset_dir)?;
    if files.is_empty() {
        return Err(Error::Dataset(format!(
            "no PNG images in {:?}",
            config.dataset_dir
        )));
    }
    let hr: Vec<Tensor<f64>> = files
        .iter()
        .map(|p| imageio::load_png(p))
        .collect::<Result<_>>()?;
    let run = train_srgan_run(&config.srgan, &hr, &args.out)?;
    println!(
        "trained {} steps in {:.2}s; checkpoint at {}",
        config.srgan.pretrain_steps + config.srgan.train_steps,
        run.seconds,
        args.out.join("sr.ckpt").display()
    );
    Ok(())
}

#[derive(Args)]
pub struct UpsampleArgs {
    /// Checkpoint produced by train-srgan or the pipeline
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of input PNGs
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for the 4x outputs
    #[arg(long)]
    pub out: PathBuf,
}

pub fn upsample(args: UpsampleArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    // recover the generator architecture from the manifest
    let conv_in = ckpt.get("sr_gen.conv_in.weight").ok_or_else(|| {
        Error::Checkpoint {
            message: "checkpoint holds no sr generator (sr_gen.conv_in.weight missing)".into(),
            offset: 0,
        }
    })?;
    let base_channels = conv_in.shape()[0];
    let residual_blocks = (0..)
        .take_while(|i| ckpt.get(&format!("sr_gen.res{i}.conv1.weight")).is_some())
        .count();
    let config = SrConfig {
        base_channels,
        residual_blocks,
        ..SrConfig::default()
    };
    let mut throwaway = ganpipe_core::rng::seeded(0);
    let mut generator = SrGenerator::<f32>::new(&config, &mut throwaway)?;
    assign_params(&ckpt, |f| generator.visit_params(f))?;

    let files = imageio::list_pngs(&args.input)?;
    if files.is_empty() {
        return Err(Error::Dataset(format!("no PNG images in {:?}", args.input)));
    }
    std::fs::create_dir_all(&args.out)?;
    for path in &files {
        let img = imageio::load_png(path)?;
        let s = img.shape().to_vec();
        let lr = imageio::to_signed_f32(&img).reshape(&[1, s[0], s[1], s[2]])?;
        let hr = generator.forward(&lr)?;
        let hr01 = imageio::to_unit_f64(&hr.reshape(&[3, 4 * s[1], 4 * s[2]])?);
        let name = path.file_name().expect("png path has a file name");
        imageio::save_png(&hr01, &args.out.join(name))?;
    }
    println!("upsampled {} images into {}", files.len(), args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct ResampleBenchArgs {
    #[arg(long)]
    pub input_dir: PathBuf,
    /// Target size as WxH, e.g. 64x64
    #[arg(long)]
    pub target: String,
    /// Comma-separated kernel names, or `all`
    #[arg(long, default_value = "all")]
    pub kernels: String,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// CSV output path (header: kernel,seconds_per_image)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn resample_bench(args: ResampleBenchArgs) -> Result<()> {
    let (w, h) = args
        .target
        .split_once('x')
        .and_then(|(w, h)| Some((w.parse::<usize>().ok()?, h.parse::<usize>().ok()?)))
        .ok_or_else(|| Error::Config(format!("bad --target {:?}, expected WxH", args.target)))?;
    let kernels: Vec<KernelKind> = if args.kernels == "all" {
        KernelKind::ALL.to_vec()
    } else {
        args.kernels
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<_>>()?
    };
    let rows = bench_resample(&args.input_dir, (h, w), &kernels, args.repeats)?;
    let mut file = std::fs::File::create(&args.out)?;
    writeln!(file, "kernel,seconds_per_image")?;
    for row in &rows {
        writeln!(file, "{},{:.9}", row.kernel, row.seconds_per_image)?;
        println!("{:<10} {:.6} s/image", row.kernel.name(), row.seconds_per_image);
    }
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub real_dir: PathBuf,
    #[arg(long)]
    pub fake_dir: PathBuf,
    /// Comma-separated subset of swd,msssim,is
    #[arg(long, default_value = "swd,msssim,is")]
    pub metrics: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output path (columns: metric,value,std,params)
    #[arg(long)]
    pub out: PathBuf,
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let wanted: Vec<&str> = args.metrics.split(',').map(str::trim).collect();
    for w in &wanted {
        if !["swd", "msssim", "is"].contains(w) {
            return Err(Error::Config(format!(
                "unknown metric {w:?} (expected swd, msssim, is)"
            )));
        }
    }
    let config = MetricConfig {
        seed: args.seed,
        ..MetricConfig::default()
    };
    let load = |dir: &PathBuf| -> Result<Vec<Tensor<f64>>> {
        let files = imageio::list_pngs(dir)?;
        if files.is_empty() {
            return Err(Error::Metric(format!("no PNG images in {dir:?}")));
        }
        files.iter().map(|p| imageio::load_png(p)).collect()
    };
    let real = load(&args.real_dir)?;
    let fake = load(&args.fake_dir)?;

    let mut file = std::fs::File::create(&args.out)?;
    writeln!(file, "metric,value,std,params")?;
    let params = config.params_string();
    if wanted.contains(&"swd") {
        let (value, _) = swd_between_sets(&real, &fake, &config)?;
        writeln!(
            file,
            "Sliced Wasserstein Distance,{value:.6},,{params} x1000={:.3}",
            value * 1000.0
        )?;
        println!("Sliced Wasserstein Distance: {value:.6}");
    }
    if wanted.contains(&"msssim") {
        let value = msssim_between_sets(&real, &fake, &config)?;
        writeln!(file, "MSSSIM,{value:.6},,{params}")?;
        println!("MSSSIM: {value:.6}");
    }
    if wanted.contains(&"is") {
        let classifier = TinyConvClassifier::train_default(config.seed)?;
        let report = ganpipe_core::metrics::evaluate_sets(
            &real,
            &fake,
            &classifier,
            &config,
            &args.real_dir.display().to_string(),
            &args.fake_dir.display().to_string(),
        )?;
        writeln!(
            file,
            "Inception Score,{:.4},{:.4},{params}",
            report.inception_mean, report.inception_std
        )?;
        println!(
            "Inception Score: {:.4} ± {:.4}",
            report.inception_mean, report.inception_std
        );
    }
    writeln!(file, "# note: {CLASSIFIER_NOTE}")?;
    Ok(())
}

#[derive(Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Continue a previous run, skipping completed steps
    #[arg(long)]
    pub resume: bool,
}

pub fn pipeline(args: PipelineArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let outcome = run_pipeline(&config, args.resume)?;
    println!(
        "pipeline finished at {0}x{0}; report at {1}",
        outcome.final_resolution,
        config.output_dir.join("report.csv").display()
    );
    Ok(())
}

#[derive(Args)]
pub struct SynthDataArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub resolution: usize,
    /// smooth-blob or gradient-stripe
    #[arg(long, default_value = "smooth-blob")]
    pub kind: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth_data(args: SynthDataArgs) -> Result<()> {
    let kind: SynthKind = args.kind.parse()?;
    let spec = SyntheticDatasetSpec {
        count: args.count,
        resolution: args.resolution,
        kind,
        seed: args.seed,
    };
    synth_dataset(&spec, &args.out)?;
    println!(
        "wrote {} {} images at {}x{} to {}",
        args.count,
        args.kind,
        args.resolution,
        args.resolution,
        args.out.display()
    );
    Ok(())
}
