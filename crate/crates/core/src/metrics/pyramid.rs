//! Laplacian pyramid: band-pass levels (image minus its blurred,
//! re-upsampled self) plus a low-pass residual. Reconstruction by
//! summing the upsampled chain is exact by construction.

use crate::error::{Error, Result};
use crate::resample::{resample, KernelKind, ResampleKernel};
use crate::tensor::Tensor;

#[derive(Debug)]
pub struct LaplacianPyramid {
    /// Band k lives at the resolution of the input halved k times.
    pub bands: Vec<Tensor<f64>>,
    pub residual: Tensor<f64>,
}

fn halve(image: &Tensor<f64>) -> Result<Tensor<f64>> {
    let s = image.shape();
    resample(
        image,
        &ResampleKernel::new(KernelKind::Box),
        (s[1] / 2, s[2] / 2),
    )
}

fn double(image: &Tensor<f64>, to: (usize, usize)) -> Result<Tensor<f64>> {
    resample(image, &ResampleKernel::new(KernelKind::Bilinear), to)
}

pub fn laplacian_pyramid(image: &Tensor<f64>, levels: usize) -> Result<LaplacianPyramid> {
    let s = image.shape();
    if s.len() != 3 {
        return Err(Error::shape(format!(
            "laplacian_pyramid wants (C, H, W), got {s:?}"
        )));
    }
    if levels == 0 {
        return Err(Error::InvalidArgument("levels must be >= 1".into()));
    }
    let (h, w) = (s[1], s[2]);
    let div = 1usize << levels;
    if h % div != 0 || w % div != 0 {
        return Err(Error::shape(format!(
            "extents {h}x{w} not divisible by 2^{levels}"
        )));
    }
    let mut bands = Vec::with_capacity(levels);
    let mut current = image.clone();
    for _ in 0..levels {
        let cs = current.shape();
        let down = halve(&current)?;
        let up = double(&down, (cs[1], cs[2]))?;
        bands.push(current.sub(&up)?);
        current = down;
    }
    Ok(LaplacianPyramid {
        bands,
        residual: current,
    })
}

/// Inverse of `laplacian_pyramid`: upsample the residual back through the
/// chain, adding each band.
pub fn reconstruct(pyramid: &LaplacianPyramid) -> Result<Tensor<f64>> {
    let mut current = pyramid.residual.clone();
    for band in pyramid.bands.iter().rev() {
        let bs = band.shape();
        current = double(&current, (bs[1], bs[2]))?.add(band)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_zero_bands() {
        let img = Tensor::full(&[3, 16, 16], 0.4).unwrap();
        let p = laplacian_pyramid(&img, 2).unwrap();
        for band in &p.bands {
            assert!(band.data().iter().all(|v| v.abs() < 1e-12));
        }
        assert!(p.residual.data().iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn shape_contract_two_levels() {
        let img = Tensor::zeros(&[1, 16, 16]).unwrap();
        let p = laplacian_pyramid(&img, 2).unwrap();
        assert_eq!(p.bands.len(), 2);
        assert_eq!(p.bands[0].shape(), &[1, 16, 16]);
        assert_eq!(p.bands[1].shape(), &[1, 8, 8]);
        assert_eq!(p.residual.shape(), &[1, 4, 4]);
    }

    #[test]
    fn reconstruction_is_exact_on_random_images() {
        let mut rng = crate::rng::seeded(12);
        let img = Tensor::<f64>::rand_uniform(&[1, 32, 32], &mut rng).unwrap();
        let p = laplacian_pyramid(&img, 2).unwrap();
        let back = reconstruct(&p).unwrap();
        let max_err = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-6, "max abs error {max_err}");
    }

    #[test]
    fn non_divisible_extents_are_rejected() {
        let img = Tensor::zeros(&[1, 12, 12]).unwrap();
        assert!(laplacian_pyramid(&img, 3).is_err());
        assert!(laplacian_pyramid(&img, 0).is_err());
    }
}
