//! Separable image resampling with the six benchmarked kernels, plus the
//! timing harness that ranks them.
//!
//! Coordinate convention: pixel centers sit at half-integers, so output
//! pixel `i` maps to source position `(i + 0.5) * scale - 0.5`
//! (align-centers). When downsampling, kernel support scales with the
//! ratio so the filter anti-aliases. Filter weights are normalized to
//! sum 1 per output pixel; `Nearest` picks the closest source sample.

use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::imageio;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KernelKind {
    Bicubic,
    Bilinear,
    Lanczos,
    Hamming,
    Nearest,
    Box,
}

impl KernelKind {
    pub const ALL: [KernelKind; 6] = [
        KernelKind::Bicubic,
        KernelKind::Bilinear,
        KernelKind::Lanczos,
        KernelKind::Hamming,
        KernelKind::Nearest,
        KernelKind::Box,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Bicubic => "bicubic",
            KernelKind::Bilinear => "bilinear",
            KernelKind::Lanczos => "lanczos",
            KernelKind::Hamming => "hamming",
            KernelKind::Nearest => "nearest",
            KernelKind::Box => "box",
        }
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<KernelKind> {
        KernelKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown resampling kernel {s:?}")))
    }
}

/// A resampling kernel: its kind and radius in source pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleKernel {
    pub kind: KernelKind,
    pub support: f64,
}

impl ResampleKernel {
    pub fn new(kind: KernelKind) -> ResampleKernel {
        let support = match kind {
            KernelKind::Bicubic => 2.0,
            KernelKind::Bilinear => 1.0,
            KernelKind::Lanczos => 3.0,
            KernelKind::Hamming => 1.0,
            KernelKind::Nearest => 0.5,
            KernelKind::Box => 0.5,
        };
        ResampleKernel { kind, support }
    }

    fn eval(&self, x: f64) -> f64 {
        match self.kind {
            KernelKind::Bicubic => catmull_rom(x),
            KernelKind::Bilinear => triangle(x),
            KernelKind::Lanczos => lanczos(x, 3.0),
            KernelKind::Hamming => hamming_sinc(x),
            // handled by the single-tap path; the kernel itself is a box
            KernelKind::Nearest => box_kernel(x),
            KernelKind::Box => box_kernel(x),
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let a = std::f64::consts::PI * x;
        a.sin() / a
    }
}

fn lanczos(x: f64, a: f64) -> f64 {
    if x.abs() < a {
        sinc(x) * sinc(x / a)
    } else {
        0.0
    }
}

fn hamming_sinc(x: f64) -> f64 {
    if x.abs() < 1.0 {
        sinc(x) * (0.54 + 0.46 * (std::f64::consts::PI * x).cos())
    } else {
        0.0
    }
}

/// Cubic with a = -0.5 (Catmull-Rom family).
fn catmull_rom(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * A
    } else {
        0.0
    }
}

fn triangle(x: f64) -> f64 {
    if x.abs() < 1.0 {
        1.0 - x.abs()
    } else {
        0.0
    }
}

fn box_kernel(x: f64) -> f64 {
    if x.abs() <= 0.5 {
        1.0
    } else {
        0.0
    }
}

/// (source index of leftmost tap, normalized tap weights) per output
/// pixel along one axis.
fn axis_weights(in_size: usize, out_size: usize, kernel: &ResampleKernel) -> Vec<(usize, Vec<f64>)> {
    let scale = in_size as f64 / out_size as f64;
    let sratio = scale.max(1.0);
    let support = kernel.support * sratio;
    let mut out = Vec::with_capacity(out_size);
    for i in 0..out_size {
        let center = (i as f64 + 0.5) * scale - 0.5;
        if kernel.kind == KernelKind::Nearest {
            let idx = center.round().clamp(0.0, (in_size - 1) as f64) as usize;
            out.push((idx, vec![1.0]));
            continue;
        }
        let left = ((center - support).floor().max(0.0)) as usize;
        let right = ((center + support).ceil() as usize).clamp(left + 1, in_size);
        let mut weights: Vec<f64> = (left..right)
            .map(|j| kernel.eval((j as f64 - center) / sratio))
            .collect();
        let sum: f64 = weights.iter().sum();
        if sum.abs() > 1e-12 {
            for w in &mut weights {
                *w /= sum;
            }
        } else {
            // degenerate window: fall back to the closest sample
            let idx = center.round().clamp(left as f64, (right - 1) as f64) as usize - left;
            weights.iter_mut().for_each(|w| *w = 0.0);
            weights[idx] = 1.0;
        }
        out.push((left, weights));
    }
    out
}

/// Filtered separable resampling of a (C, H, W) image with values in
/// [0, 1] to (C, H', W').
pub fn resample(
    image: &Tensor<f64>,
    kernel: &ResampleKernel,
    target: (usize, usize),
) -> Result<Tensor<f64>> {
    let s = image.shape();
    if s.len() != 3 {
        return Err(Error::shape(format!("resample wants (C, H, W), got {s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::InvalidArgument("target extents must be >= 1".into()));
    }
    let data = image.data();

    // horizontal pass: (C, H, W) -> (C, H, tw)
    let hk = axis_weights(w, tw, kernel);
    let mut mid = vec![0.0f64; c * h * tw];
    for row in 0..c * h {
        let src = &data[row * w..(row + 1) * w];
        let dst = &mut mid[row * tw..(row + 1) * tw];
        for (ox, (left, ws)) in hk.iter().enumerate() {
            let mut acc = 0.0;
            for (wt, v) in ws.iter().zip(&src[*left..]) {
                acc += wt * v;
            }
            dst[ox] = acc;
        }
    }

    // vertical pass: (C, H, tw) -> (C, th, tw)
    let vk = axis_weights(h, th, kernel);
    let mut out = vec![0.0f64; c * th * tw];
    for plane in 0..c {
        for (oy, (top, ws)) in vk.iter().enumerate() {
            let dst = &mut out[(plane * th + oy) * tw..(plane * th + oy + 1) * tw];
            for (wt, sy) in ws.iter().zip(*top..) {
                let src = &mid[(plane * h + sy) * tw..(plane * h + sy + 1) * tw];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += wt * v;
                }
            }
        }
    }
    Tensor::from_vec(out, &[c, th, tw])
}

/// One row of the downsampling benchmark. `visual_rank` is a
/// pass-through field for a human-assigned 1-6 quality rank; it is never
/// computed.
#[derive(Debug, Clone)]
pub struct TimingRow {
    pub kernel: KernelKind,
    pub seconds_per_image: f64,
    pub visual_rank: Option<u8>,
}

/// Median seconds-per-image per kernel over every decodable PNG in
/// `input_dir`, resampled `repeats` times each. Decode time is excluded.
/// Rows come back sorted fastest first, ties broken by kernel name.
pub fn bench_resample(
    input_dir: &Path,
    target: (usize, usize),
    kernels: &[KernelKind],
    repeats: usize,
) -> Result<Vec<TimingRow>> {
    if repeats < 3 {
        return Err(Error::InvalidArgument(
            "bench_resample needs at least 3 repeats".into(),
        ));
    }
    let mut images = Vec::new();
    for path in imageio::list_pngs(input_dir)? {
        match imageio::load_png(&path) {
            Ok(img) => images.push(img),
            Err(err) => eprintln!("warning: skipping unreadable image {path:?}: {err}"),
        }
    }
    if images.is_empty() {
        return Err(Error::Dataset(format!(
            "no decodable PNG images in {input_dir:?}"
        )));
    }
    let mut rows = Vec::with_capacity(kernels.len());
    for kind in kernels {
        let kernel = ResampleKernel::new(*kind);
        let mut times = Vec::with_capacity(images.len() * repeats);
        for image in &images {
            for _ in 0..repeats {
                let t0 = Instant::now();
                std::hint::black_box(resample(image, &kernel, target)?);
                times.push(t0.elapsed().as_secs_f64());
            }
        }
        times.sort_by(|a, b| a.total_cmp(b));
        rows.push(TimingRow {
            kernel: *kind,
            seconds_per_image: crate::conv::median_of_sorted(&times),
            visual_rank: None,
        });
    }
    sort_timing_rows(&mut rows);
    Ok(rows)
}

/// Ascending by median time; exact ties fall back to kernel name so the
/// ordering is deterministic.
pub fn sort_timing_rows(rows: &mut [TimingRow]) {
    rows.sort_by(|a, b| {
        a.seconds_per_image
            .total_cmp(&b.seconds_per_image)
            .then_with(|| a.kernel.name().cmp(b.kernel.name()))
    });
}
