//! Multi-scale structural similarity.
//!
//! Per scale the contrast-structure product is averaged over 11x11
//! Gaussian (sigma 1.5) local windows; luminance enters at the coarsest
//! scale only, and scales combine as a weighted geometric product.
//! Stabilizers C1 = 0.01^2 and C2 = 0.03^2 assume a unit dynamic range.

use crate::error::{Error, Result};
use crate::resample::{resample, KernelKind, ResampleKernel};
use crate::tensor::Tensor;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Canonical five-scale weights; shorter runs renormalize a prefix.
pub const MSSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// The three SSIM comparison terms, averaged over windows and channels.
#[derive(Debug, Clone, Copy)]
pub struct SsimComponents {
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
}

fn gaussian_taps() -> [f64; WINDOW] {
    let mut taps = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, t) in taps.iter_mut().enumerate() {
        let x = i as f64 - half;
        *t = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
        sum += *t;
    }
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable valid-mode Gaussian blur of one plane.
fn blur_plane(src: &[f64], h: usize, w: usize, taps: &[f64; WINDOW]) -> (Vec<f64>, usize, usize) {
    let ow = w - WINDOW + 1;
    let mut mid = vec![0.0f64; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let dst = &mut mid[y * ow..(y + 1) * ow];
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, v) in taps.iter().zip(&row[x..x + WINDOW]) {
                acc += t * v;
            }
            *d = acc;
        }
    }
    let oh = h - WINDOW + 1;
    let mut out = vec![0.0f64; oh * ow];
    for y in 0..oh {
        let dst = &mut out[y * ow..(y + 1) * ow];
        for (dy, t) in taps.iter().enumerate() {
            let row = &mid[(y + dy) * ow..(y + dy + 1) * ow];
            for (d, v) in dst.iter_mut().zip(row) {
                *d += t * v;
            }
        }
    }
    (out, oh, ow)
}

struct ScaleStats {
    luminance: f64,
    contrast: f64,
    structure: f64,
    /// mean of the combined contrast-structure map (2*cov + C2)/(va+vb+C2)
    cs: f64,
}

fn scale_stats(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<ScaleStats> {
    let s = a.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    if h < WINDOW || w < WINDOW {
        return Err(Error::shape(format!(
            "image {h}x{w} smaller than the {WINDOW}x{WINDOW} ssim window"
        )));
    }
    let taps = gaussian_taps();
    let (mut lum, mut con, mut str_, mut cs) = (0.0, 0.0, 0.0, 0.0);
    let mut count = 0usize;
    for ch in 0..c {
        let pa = &a.data()[ch * h * w..(ch + 1) * h * w];
        let pb = &b.data()[ch * h * w..(ch + 1) * h * w];
        let sq = |p: &[f64]| -> Vec<f64> { p.iter().map(|v| v * v).collect() };
        let prod: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();
        let (ma, oh, ow) = blur_plane(pa, h, w, &taps);
        let (mb, _, _) = blur_plane(pb, h, w, &taps);
        let (maa, _, _) = blur_plane(&sq(pa), h, w, &taps);
        let (mbb, _, _) = blur_plane(&sq(pb), h, w, &taps);
        let (mab, _, _) = blur_plane(&prod, h, w, &taps);
        for i in 0..oh * ow {
            let (mu_a, mu_b) = (ma[i], mb[i]);
            let va = (maa[i] - mu_a * mu_a).max(0.0);
            let vb = (mbb[i] - mu_b * mu_b).max(0.0);
            let cov = mab[i] - mu_a * mu_b;
            let (sa, sb) = (va.sqrt(), vb.sqrt());
            lum += (2.0 * mu_a * mu_b + C1) / (mu_a * mu_a + mu_b * mu_b + C1);
            con += (2.0 * sa * sb + C2) / (va + vb + C2);
            str_ += (cov + C2 / 2.0) / (sa * sb + C2 / 2.0);
            cs += (2.0 * cov + C2) / (va + vb + C2);
        }
        count += oh * ow;
    }
    let n = count as f64;
    Ok(ScaleStats {
        luminance: lum / n,
        contrast: con / n,
        structure: str_ / n,
        cs: cs / n,
    })
}

/// Single-scale SSIM comparison terms.
pub fn ssim_components(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<SsimComponents> {
    check_pair(a, b)?;
    let stats = scale_stats(a, b)?;
    Ok(SsimComponents {
        luminance: stats.luminance,
        contrast: stats.contrast,
        structure: stats.structure,
    })
}

fn check_pair(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "ms_ssim of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.rank() != 3 {
        return Err(Error::shape(format!(
            "ms_ssim wants (C, H, W), got {:?}",
            a.shape()
        )));
    }
    Ok(())
}

/// Largest scale count (up to 5) the extents support with the 11x11
/// window.
pub fn auto_scales(h: usize, w: usize) -> usize {
    let mut scales = 0;
    let mut extent = h.min(w);
    while extent >= WINDOW && scales < 5 {
        scales += 1;
        extent /= 2;
    }
    scales.max(1)
}

/// Prefix of the canonical weights, renormalized to sum 1.
pub fn weights_for(scales: usize) -> Vec<f64> {
    let prefix = &MSSSIM_WEIGHTS[..scales.clamp(1, 5)];
    let sum: f64 = prefix.iter().sum();
    prefix.iter().map(|w| w / sum).collect()
}

/// Multi-scale SSIM with explicit per-scale weights. Images are (C, H, W)
/// with values in [0, 1]; extents must survive `len(scale_weights) - 1`
/// halvings of the 11x11 window. Negative contrast-structure responses
/// clamp to 0 so the geometric combination stays real.
pub fn ms_ssim(a: &Tensor<f64>, b: &Tensor<f64>, scale_weights: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    if scale_weights.is_empty() {
        return Err(Error::Metric("ms_ssim needs at least one scale".into()));
    }
    let scales = scale_weights.len();
    let s = a.shape();
    let min_extent = s[1].min(s[2]) >> (scales - 1);
    if min_extent < WINDOW {
        return Err(Error::shape(format!(
            "extents {}x{} cannot support {scales} scales with an {WINDOW}-pixel window",
            s[1], s[2]
        )));
    }
    let mut ca = a.clone();
    let mut cb = b.clone();
    let mut result = 1.0f64;
    for (scale, weight) in scale_weights.iter().enumerate() {
        let stats = scale_stats(&ca, &cb)?;
        result *= stats.cs.max(0.0).powf(*weight);
        if scale + 1 == scales {
            result *= stats.luminance.max(0.0).powf(*weight);
        } else {
            let cs_shape = ca.shape().to_vec();
            let target = (cs_shape[1] / 2, cs_shape[2] / 2);
            let kernel = ResampleKernel::new(KernelKind::Box);
            ca = resample(&ca, &kernel, target)?;
            cb = resample(&cb, &kernel, target)?;
        }
    }
    Ok(result.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_similarity_is_one() {
        let mut rng = crate::rng::seeded(2);
        let x = Tensor::<f64>::rand_uniform(&[3, 32, 32], &mut rng).unwrap();
        let v = ms_ssim(&x, &x, &weights_for(2)).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "got {v}");
    }

    #[test]
    fn symmetric() {
        let mut rng = crate::rng::seeded(3);
        let a = Tensor::<f64>::rand_uniform(&[1, 32, 32], &mut rng).unwrap();
        let b = Tensor::<f64>::rand_uniform(&[1, 32, 32], &mut rng).unwrap();
        let w = weights_for(2);
        let ab = ms_ssim(&a, &b, &w).unwrap();
        let ba = ms_ssim(&b, &a, &w).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn constant_images_reduce_to_luminance_power() {
        let a = Tensor::full(&[1, 16, 16], 0.2).unwrap();
        let b = Tensor::full(&[1, 16, 16], 0.6).unwrap();
        let comp = ssim_components(&a, &b).unwrap();
        assert!((comp.contrast - 1.0).abs() < 1e-12);
        assert!((comp.structure - 1.0).abs() < 1e-12);
        let l_expect = (2.0 * 0.2 * 0.6 + C1) / (0.2 * 0.2 + 0.6 * 0.6 + C1);
        assert!((comp.luminance - l_expect).abs() < 1e-12);

        let w = weights_for(1);
        let v = ms_ssim(&a, &b, &w).unwrap();
        let expect = l_expect.powf(w[0]);
        assert!((v - expect).abs() < 1e-9, "got {v}, want {expect}");
    }

    #[test]
    fn shift_invariance_of_identical_crops() {
        // the same shift applied to both images leaves the score at 1
        let mut rng = crate::rng::seeded(4);
        let big = Tensor::<f64>::rand_uniform(&[1, 40, 40], &mut rng).unwrap();
        let crop = |dy: usize, dx: usize| {
            let mut out = vec![0.0; 32 * 32];
            for y in 0..32 {
                for x in 0..32 {
                    out[y * 32 + x] = big.data()[(y + dy) * 40 + (x + dx)];
                }
            }
            Tensor::from_vec(out, &[1, 32, 32]).unwrap()
        };
        let w = weights_for(2);
        let a = crop(3, 5);
        let v = ms_ssim(&a, &a, &w).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
        // different crops of the same texture score below identical ones
        let b = crop(0, 0);
        assert!(ms_ssim(&a, &b, &w).unwrap() < v);
    }

    #[test]
    fn shape_and_scale_errors() {
        let a = Tensor::<f64>::zeros(&[1, 16, 16]).unwrap();
        let b = Tensor::<f64>::zeros(&[1, 32, 32]).unwrap();
        assert!(ms_ssim(&a, &b, &weights_for(1)).is_err());
        // 16x16 cannot support two halvings of an 11px window
        let c = Tensor::<f64>::zeros(&[1, 16, 16]).unwrap();
        assert!(ms_ssim(&a, &c, &weights_for(2)).is_err());
    }

    #[test]
    fn auto_scales_by_resolution() {
        assert_eq!(auto_scales(16, 16), 1);
        assert_eq!(auto_scales(32, 32), 2);
        assert_eq!(auto_scales(64, 64), 3);
        assert_eq!(auto_scales(512, 512), 5);
    }
}
