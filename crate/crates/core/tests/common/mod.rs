//! Independent reference implementations used as test oracles. These are
//! deliberately written as direct loops sharing no code with the library
//! kernels.
//!
//! Padding is materialized as a zero border and every kernel tap is
//! charged, so the multiplication counters match a dense implementation
//! that multiplies through the padded buffer.

#![allow(dead_code)]

use ganpipe_core::Tensor;

pub struct NaiveConvOut {
    pub data: Vec<f64>,
    pub shape: [usize; 4],
    pub mults: u64,
}

fn pad_plane(x: &[f64], h: usize, w: usize, pad: usize) -> (Vec<f64>, usize, usize) {
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; ph * pw];
    for y in 0..h {
        for xx in 0..w {
            out[(y + pad) * pw + (xx + pad)] = x[y * w + xx];
        }
    }
    (out, ph, pw)
}

/// Dense cross-correlation by the definition: quadruple loop over output
/// site and kernel tap, every tap multiplied and counted.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    x: &[f64],
    batch: usize,
    m: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    n: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> NaiveConvOut {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let planes: Vec<(Vec<f64>, usize, usize)> = (0..batch * m)
        .map(|p| pad_plane(&x[p * h * w..(p + 1) * h * w], h, w, pad))
        .collect();
    let mut out = vec![0.0; batch * n * oh * ow];
    let mut mults: u64 = 0;
    for b in 0..batch {
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for mi in 0..m {
                        let (plane, _, pw) = &planes[b * m + mi];
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = oy * stride + ky;
                                let ix = ox * stride + kx;
                                acc += plane[iy * pw + ix]
                                    * weight[((ni * m + mi) * k + ky) * k + kx];
                                mults += 1;
                            }
                        }
                    }
                    out[((b * n + ni) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    NaiveConvOut {
        data: out,
        shape: [batch, n, oh, ow],
        mults,
    }
}

/// Depthwise stage by the definition, counting every tap.
#[allow(clippy::too_many_arguments)]
pub fn naive_depthwise(
    x: &[f64],
    batch: usize,
    channels: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    k: usize,
    stride: usize,
    pad: usize,
) -> NaiveConvOut {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let planes: Vec<(Vec<f64>, usize, usize)> = (0..batch * channels)
        .map(|p| pad_plane(&x[p * h * w..(p + 1) * h * w], h, w, pad))
        .collect();
    let mut out = vec![0.0; batch * channels * oh * ow];
    let mut mults: u64 = 0;
    for b in 0..batch {
        for c in 0..channels {
            let (plane, _, pw) = &planes[b * channels + c];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ky in 0..k {
                        for kx in 0..k {
                            acc += plane[(oy * stride + ky) * pw + (ox * stride + kx)]
                                * weight[(c * k + ky) * k + kx];
                            mults += 1;
                        }
                    }
                    out[((b * channels + c) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    NaiveConvOut {
        data: out,
        shape: [batch, channels, oh, ow],
        mults,
    }
}

/// Two-stage depthwise-separable convolution composed from the naive
/// loops: depthwise (carrying stride and padding) then pointwise 1x1.
#[allow(clippy::too_many_arguments)]
pub fn naive_dsep_conv2d(
    x: &[f64],
    batch: usize,
    m: usize,
    h: usize,
    w: usize,
    depthwise: &[f64],
    k: usize,
    pointwise: &[f64],
    n: usize,
    stride: usize,
    pad: usize,
) -> NaiveConvOut {
    let spatial = naive_depthwise(x, batch, m, h, w, depthwise, k, stride, pad);
    let [_, _, oh, ow] = spatial.shape;
    let mixed = naive_conv2d(&spatial.data, batch, m, oh, ow, pointwise, n, 1, 1, 0);
    NaiveConvOut {
        data: mixed.data,
        shape: mixed.shape,
        mults: spatial.mults + mixed.mults,
    }
}

pub fn assert_close(a: &Tensor<f64>, b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.numel(), b.len(), "{what}: length mismatch");
    for (i, (x, y)) in a.data().iter().zip(b).enumerate() {
        assert!(
            (x - y).abs() <= tol,
            "{what}: index {i}, {x} vs {y} (tol {tol})"
        );
    }
}
