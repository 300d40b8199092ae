//! Raw compute kernels over flat row-major buffers.
//!
//! Convolutions are organized as shift-and-accumulate over whole output
//! rows so the stride-1 inner loops vectorize. All kernels are
//! single-threaded and evaluate in a fixed order, which keeps results
//! bit-reproducible across runs.

use super::Element;

/// Output positions `o` with `0 <= o*stride + k_off - pad < in_size`,
/// clamped to `0..out_size`. Returns an inclusive range.
#[inline]
fn out_range(
    in_size: usize,
    k_off: usize,
    pad: usize,
    stride: usize,
    out_size: usize,
) -> Option<(usize, usize)> {
    let lo = if k_off >= pad {
        0
    } else {
        (pad - k_off + stride - 1) / stride
    };
    if in_size + pad <= k_off {
        return None;
    }
    let hi = ((in_size - 1 + pad - k_off) / stride).min(out_size - 1);
    if lo > hi {
        None
    } else {
        Some((lo, hi))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward<T: Element>(
    x: &[T],
    batch: usize,
    m: usize,
    h: usize,
    w: usize,
    weight: &[T],
    n: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); batch * n * oh * ow];
    for bi in 0..batch {
        for ni in 0..n {
            let out_plane = &mut out[(bi * n + ni) * oh * ow..][..oh * ow];
            for mi in 0..m {
                let x_plane = &x[(bi * m + mi) * h * w..][..h * w];
                let w_base = (ni * m + mi) * k * k;
                accumulate_plane(
                    x_plane, h, w, &weight[w_base..w_base + k * k], k, stride, pad, out_plane, oh,
                    ow,
                );
            }
        }
    }
    out
}

/// out_plane += correlation of x_plane with one k x k filter.
#[allow(clippy::too_many_arguments)]
fn accumulate_plane<T: Element>(
    x_plane: &[T],
    h: usize,
    w: usize,
    filter: &[T],
    k: usize,
    stride: usize,
    pad: usize,
    out_plane: &mut [T],
    oh: usize,
    ow: usize,
) {
    for ky in 0..k {
        let Some((oy0, oy1)) = out_range(h, ky, pad, stride, oh) else {
            continue;
        };
        for kx in 0..k {
            let Some((ox0, ox1)) = out_range(w, kx, pad, stride, ow) else {
                continue;
            };
            let wv = filter[ky * k + kx];
            let len = ox1 - ox0 + 1;
            for oy in oy0..=oy1 {
                let iy = oy * stride + ky - pad;
                let orow = &mut out_plane[oy * ow + ox0..oy * ow + ox0 + len];
                if stride == 1 {
                    let ix0 = ox0 + kx - pad;
                    let xrow = &x_plane[iy * w + ix0..iy * w + ix0 + len];
                    for (o, xv) in orow.iter_mut().zip(xrow) {
                        *o = *o + wv * *xv;
                    }
                } else {
                    for (j, o) in orow.iter_mut().enumerate() {
                        let ix = (ox0 + j) * stride + kx - pad;
                        *o = *o + wv * x_plane[iy * w + ix];
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_input_grad<T: Element>(
    gy: &[T],
    batch: usize,
    n: usize,
    oh: usize,
    ow: usize,
    weight: &[T],
    m: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h: usize,
    w: usize,
) -> Vec<T> {
    let mut gx = vec![T::zero(); batch * m * h * w];
    for bi in 0..batch {
        for mi in 0..m {
            let gx_plane = &mut gx[(bi * m + mi) * h * w..][..h * w];
            for ni in 0..n {
                let gy_plane = &gy[(bi * n + ni) * oh * ow..][..oh * ow];
                let w_base = (ni * m + mi) * k * k;
                scatter_plane(
                    gy_plane, oh, ow, &weight[w_base..w_base + k * k], k, stride, pad, gx_plane,
                    h, w,
                );
            }
        }
    }
    gx
}

/// gx_plane += transposed correlation: routes each output-grad row back
/// to the input positions that produced it.
#[allow(clippy::too_many_arguments)]
fn scatter_plane<T: Element>(
    gy_plane: &[T],
    oh: usize,
    ow: usize,
    filter: &[T],
    k: usize,
    stride: usize,
    pad: usize,
    gx_plane: &mut [T],
    h: usize,
    w: usize,
) {
    for ky in 0..k {
        let Some((oy0, oy1)) = out_range(h, ky, pad, stride, oh) else {
            continue;
        };
        for kx in 0..k {
            let Some((ox0, ox1)) = out_range(w, kx, pad, stride, ow) else {
                continue;
            };
            let wv = filter[ky * k + kx];
            let len = ox1 - ox0 + 1;
            for oy in oy0..=oy1 {
                let iy = oy * stride + ky - pad;
                let grow = &gy_plane[oy * ow + ox0..oy * ow + ox0 + len];
                if stride == 1 {
                    let ix0 = ox0 + kx - pad;
                    let xrow = &mut gx_plane[iy * w + ix0..iy * w + ix0 + len];
                    for (o, gv) in xrow.iter_mut().zip(grow) {
                        *o = *o + wv * *gv;
                    }
                } else {
                    for (j, gv) in grow.iter().enumerate() {
                        let ix = (ox0 + j) * stride + kx - pad;
                        gx_plane[iy * w + ix] = gx_plane[iy * w + ix] + wv * *gv;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_kernel_grad<T: Element>(
    x: &[T],
    batch: usize,
    m: usize,
    h: usize,
    w: usize,
    gy: &[T],
    n: usize,
    oh: usize,
    ow: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<T> {
    let mut gw = vec![T::zero(); n * m * k * k];
    for bi in 0..batch {
        for ni in 0..n {
            let gy_plane = &gy[(bi * n + ni) * oh * ow..][..oh * ow];
            for mi in 0..m {
                let x_plane = &x[(bi * m + mi) * h * w..][..h * w];
                let w_base = (ni * m + mi) * k * k;
                for ky in 0..k {
                    let Some((oy0, oy1)) = out_range(h, ky, pad, stride, oh) else {
                        continue;
                    };
                    for kx in 0..k {
                        let Some((ox0, ox1)) = out_range(w, kx, pad, stride, ow) else {
                            continue;
                        };
                        let len = ox1 - ox0 + 1;
                        let mut acc = T::zero();
                        for oy in oy0..=oy1 {
                            let iy = oy * stride + ky - pad;
                            let grow = &gy_plane[oy * ow + ox0..oy * ow + ox0 + len];
                            if stride == 1 {
                                let ix0 = ox0 + kx - pad;
                                let xrow = &x_plane[iy * w + ix0..iy * w + ix0 + len];
                                for (gv, xv) in grow.iter().zip(xrow) {
                                    acc = acc + *gv * *xv;
                                }
                            } else {
                                for (j, gv) in grow.iter().enumerate() {
                                    let ix = (ox0 + j) * stride + kx - pad;
                                    acc = acc + *gv * x_plane[iy * w + ix];
                                }
                            }
                        }
                        gw[w_base + ky * k + kx] = gw[w_base + ky * k + kx] + acc;
                    }
                }
            }
        }
    }
    gw
}

#[allow(clippy::too_many_arguments)]
pub fn dw_conv2d_forward<T: Element>(
    x: &[T],
    batch: usize,
    channels: usize,
    h: usize,
    w: usize,
    weight: &[T],
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); batch * channels * oh * ow];
    for bi in 0..batch {
        for ci in 0..channels {
            let x_plane = &x[(bi * channels + ci) * h * w..][..h * w];
            let out_plane = &mut out[(bi * channels + ci) * oh * ow..][..oh * ow];
            let w_base = ci * k * k;
            accumulate_plane(
                x_plane, h, w, &weight[w_base..w_base + k * k], k, stride, pad, out_plane, oh, ow,
            );
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn dw_conv2d_input_grad<T: Element>(
    gy: &[T],
    batch: usize,
    channels: usize,
    oh: usize,
    ow: usize,
    weight: &[T],
    k: usize,
    stride: usize,
    pad: usize,
    h: usize,
    w: usize,
) -> Vec<T> {
    let mut gx = vec![T::zero(); batch * channels * h * w];
    for bi in 0..batch {
        for ci in 0..channels {
            let gy_plane = &gy[(bi * channels + ci) * oh * ow..][..oh * ow];
            let gx_plane = &mut gx[(bi * channels + ci) * h * w..][..h * w];
            let w_base = ci * k * k;
            scatter_plane(
                gy_plane, oh, ow, &weight[w_base..w_base + k * k], k, stride, pad, gx_plane, h, w,
            );
        }
    }
    gx
}

#[allow(clippy::too_many_arguments)]
pub fn dw_conv2d_kernel_grad<T: Element>(
    x: &[T],
    batch: usize,
    channels: usize,
    h: usize,
    w: usize,
    gy: &[T],
    oh: usize,
    ow: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<T> {
    let mut gw = vec![T::zero(); channels * k * k];
    for bi in 0..batch {
        for ci in 0..channels {
            let gy_plane = &gy[(bi * channels + ci) * oh * ow..][..oh * ow];
            let x_plane = &x[(bi * channels + ci) * h * w..][..h * w];
            let w_base = ci * k * k;
            for ky in 0..k {
                let Some((oy0, oy1)) = out_range(h, ky, pad, stride, oh) else {
                    continue;
                };
                for kx in 0..k {
                    let Some((ox0, ox1)) = out_range(w, kx, pad, stride, ow) else {
                        continue;
                    };
                    let len = ox1 - ox0 + 1;
                    let mut acc = T::zero();
                    for oy in oy0..=oy1 {
                        let iy = oy * stride + ky - pad;
                        let grow = &gy_plane[oy * ow + ox0..oy * ow + ox0 + len];
                        if stride == 1 {
                            let ix0 = ox0 + kx - pad;
                            let xrow = &x_plane[iy * w + ix0..iy * w + ix0 + len];
                            for (gv, xv) in grow.iter().zip(xrow) {
                                acc = acc + *gv * *xv;
                            }
                        } else {
                            for (j, gv) in grow.iter().enumerate() {
                                let ix = (ox0 + j) * stride + kx - pad;
                                acc = acc + *gv * x_plane[iy * w + ix];
                            }
                        }
                    }
                    gw[w_base + ky * k + kx] = gw[w_base + ky * k + kx] + acc;
                }
            }
        }
    }
    gw
}

pub fn upsample_nearest_2x<T: Element>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..][..h * w];
        let dst = &mut out[p * oh * ow..][..oh * ow];
        for y in 0..h {
            for x_ in 0..w {
                let v = src[y * w + x_];
                let base = 2 * y * ow + 2 * x_;
                dst[base] = v;
                dst[base + 1] = v;
                dst[base + ow] = v;
                dst[base + ow + 1] = v;
            }
        }
    }
    out
}

pub fn sum_pool_2x<T: Element>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..][..h * w];
        let dst = &mut out[p * oh * ow..][..oh * ow];
        for y in 0..oh {
            for x_ in 0..ow {
                let base = 2 * y * w + 2 * x_;
                dst[y * ow + x_] = src[base] + src[base + 1] + src[base + w] + src[base + w + 1];
            }
        }
    }
    out
}

/// (m,k) x (k,n) -> (m,n)
pub fn matmul<T: Element>(a: &[T], m: usize, k: usize, b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..][..n];
        for kk in 0..k {
            let av = a[i * k + kk];
            let brow = &b[kk * n..][..n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * *bv;
            }
        }
    }
    out
}

pub fn transpose2<T: Element>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}
