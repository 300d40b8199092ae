//! Dense n-dimensional tensors with reverse-mode differentiation.
//!
//! Tensors are immutable, cheaply cloneable (shared storage), and carry
//! the op that produced them. `backward` on a scalar walks that graph and
//! returns one gradient per participating leaf. Gradients are themselves
//! graph tensors, so expressions built from them (such as gradient-norm
//! penalties) can be differentiated again.
//!
//! Layout is row-major; images use the NCHW convention. Broadcasting
//! aligns trailing dimensions; any mismatch that broadcasting cannot
//! resolve is a checked error.

mod backward;
mod gradcheck;
mod kernels;

pub use backward::GradMap;
pub use gradcheck::{grad_check, GradReport};

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Scalar element type. Training runs in `f32`; gradient checks and
/// metric math run in `f64`.
pub trait Element:
    num_traits::Float
    + num_traits::NumAssign
    + std::iter::Sum
    + Send
    + Sync
    + Default
    + fmt::Debug
    + fmt::Display
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

static NEXT_ID: AtomicUsize = AtomicUsize::new(1);

fn next_id() -> usize {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

pub(crate) enum Op<T: Element> {
    Leaf { requires_grad: bool },
    Add(Tensor<T>, Tensor<T>),
    Sub(Tensor<T>, Tensor<T>),
    Mul(Tensor<T>, Tensor<T>),
    Div(Tensor<T>, Tensor<T>),
    Neg(Tensor<T>),
    Affine { input: Tensor<T>, mul: T },
    Exp(Tensor<T>),
    Ln(Tensor<T>),
    Sqrt(Tensor<T>),
    Square(Tensor<T>),
    LeakyRelu { input: Tensor<T>, slope: T },
    MatMul(Tensor<T>, Tensor<T>),
    Transpose2(Tensor<T>),
    Reshape(Tensor<T>),
    BroadcastTo(Tensor<T>),
    SumAxes {
        input: Tensor<T>,
        axes: Vec<usize>,
        keepdim: bool,
    },
    SumAll(Tensor<T>),
    Concat {
        inputs: Vec<Tensor<T>>,
        axis: usize,
    },
    Narrow {
        input: Tensor<T>,
        axis: usize,
        start: usize,
    },
    UpsampleNearest2x(Tensor<T>),
    SumPool2x(Tensor<T>),
    Conv2d {
        input: Tensor<T>,
        kernel: Tensor<T>,
        stride: usize,
        pad: usize,
    },
    Conv2dInputGrad {
        grad_out: Tensor<T>,
        kernel: Tensor<T>,
        stride: usize,
        pad: usize,
    },
    Conv2dKernelGrad {
        input: Tensor<T>,
        grad_out: Tensor<T>,
        stride: usize,
        pad: usize,
    },
    DwConv2d {
        input: Tensor<T>,
        kernel: Tensor<T>,
        stride: usize,
        pad: usize,
    },
    DwConv2dInputGrad {
        grad_out: Tensor<T>,
        kernel: Tensor<T>,
        stride: usize,
        pad: usize,
    },
    DwConv2dKernelGrad {
        input: Tensor<T>,
        grad_out: Tensor<T>,
        stride: usize,
        pad: usize,
    },
}

struct Inner<T: Element> {
    id: usize,
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    op: Op<T>,
    track: bool,
}

/// Dense tensor with shared storage and autodiff provenance.
pub struct Tensor<T: Element> {
    inner: Arc<Inner<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor(id={}, shape={:?})", self.id(), self.shape())
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::shape(format!("zero extent in shape {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl<T: Element> Tensor<T> {
    fn build(data: Vec<T>, shape: Vec<usize>, op: Op<T>, track: bool) -> Tensor<T> {
        Tensor {
            inner: Arc::new(Inner {
                id: next_id(),
                shape,
                data: Arc::new(data),
                op,
                track,
            }),
        }
    }

    fn node(data: Vec<T>, shape: Vec<usize>, op: Op<T>) -> Tensor<T> {
        let track = op_tracks(&op);
        // When no parent participates in differentiation the provenance is
        // dropped, so dead subgraphs free eagerly.
        let op = if track { op } else { Op::Leaf { requires_grad: false } };
        Tensor::build(data, shape, op, track)
    }

    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Tensor<T>> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} wants {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor::build(
            data,
            shape.to_vec(),
            Op::Leaf {
                requires_grad: false,
            },
            false,
        ))
    }

    /// Leaf that participates in differentiation.
    pub fn var_from_vec(data: Vec<T>, shape: &[usize]) -> Result<Tensor<T>> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} wants {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor::build(
            data,
            shape.to_vec(),
            Op::Leaf {
                requires_grad: true,
            },
            true,
        ))
    }

    pub fn scalar(v: T) -> Tensor<T> {
        Tensor::build(
            vec![v],
            vec![],
            Op::Leaf {
                requires_grad: false,
            },
            false,
        )
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor<T>> {
        let n = check_shape(shape)?;
        Ok(Tensor::from_vec(vec![T::zero(); n], shape)?)
    }

    pub fn ones(shape: &[usize]) -> Result<Tensor<T>> {
        let n = check_shape(shape)?;
        Ok(Tensor::from_vec(vec![T::one(); n], shape)?)
    }

    pub fn full(shape: &[usize], v: T) -> Result<Tensor<T>> {
        let n = check_shape(shape)?;
        Ok(Tensor::from_vec(vec![v; n], shape)?)
    }

    /// Standard-normal samples. Draws in f64 so f32 and f64 tensors built
    /// from the same generator state hold the same values.
    pub fn randn(shape: &[usize], rng: &mut Rng) -> Result<Tensor<T>> {
        let n = check_shape(shape)?;
        let data = (0..n)
            .map(|_| T::from_f64(StandardNormal.sample(rng)))
            .collect();
        Tensor::from_vec(data, shape)
    }

    /// Uniform samples in [0, 1).
    pub fn rand_uniform(shape: &[usize], rng: &mut Rng) -> Result<Tensor<T>> {
        let n = check_shape(shape)?;
        let data = (0..n).map(|_| T::from_f64(rng.random::<f64>())).collect();
        Tensor::from_vec(data, shape)
    }

    pub fn id(&self) -> usize {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.to_vec()
    }

    /// True when this tensor participates in differentiation.
    pub fn tracks_grad(&self) -> bool {
        self.inner.track
    }

    pub fn is_var_leaf(&self) -> bool {
        matches!(
            self.inner.op,
            Op::Leaf {
                requires_grad: true
            }
        )
    }

    pub(crate) fn op(&self) -> &Op<T> {
        &self.inner.op
    }

    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::shape(format!(
                "item() on tensor of shape {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.data[0])
    }

    pub fn at(&self, index: &[usize]) -> T {
        assert_eq!(index.len(), self.rank(), "index rank mismatch");
        let mut off = 0;
        let mut stride = 1;
        for (d, (&i, &s)) in index.iter().zip(self.shape()).enumerate().rev() {
            assert!(i < s, "index {i} out of bounds for dim {d} (extent {s})");
            off += i * stride;
            stride *= s;
        }
        self.inner.data[off]
    }

    /// Constant copy outside the graph; shares storage.
    pub fn detach(&self) -> Tensor<T> {
        Tensor {
            inner: Arc::new(Inner {
                id: next_id(),
                shape: self.inner.shape.clone(),
                data: Arc::clone(&self.inner.data),
                op: Op::Leaf {
                    requires_grad: false,
                },
                track: false,
            }),
        }
    }

    /// Detached leaf that requires grad: the anchor for gradients taken
    /// with respect to an intermediate value (e.g. interpolated samples
    /// in a gradient penalty).
    pub fn detach_requiring_grad(&self) -> Tensor<T> {
        Tensor {
            inner: Arc::new(Inner {
                id: next_id(),
                shape: self.inner.shape.clone(),
                data: Arc::clone(&self.inner.data),
                op: Op::Leaf {
                    requires_grad: true,
                },
                track: true,
            }),
        }
    }

    // ---- elementwise ----

    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (data, shape) = binary_broadcast(self, rhs, |a, b| a + b)?;
        Ok(Tensor::node(data, shape, Op::Add(self.clone(), rhs.clone())))
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (data, shape) = binary_broadcast(self, rhs, |a, b| a - b)?;
        Ok(Tensor::node(data, shape, Op::Sub(self.clone(), rhs.clone())))
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (data, shape) = binary_broadcast(self, rhs, |a, b| a * b)?;
        Ok(Tensor::node(data, shape, Op::Mul(self.clone(), rhs.clone())))
    }

    pub fn div(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (data, shape) = binary_broadcast(self, rhs, |a, b| a / b)?;
        Ok(Tensor::node(data, shape, Op::Div(self.clone(), rhs.clone())))
    }

    pub fn neg(&self) -> Tensor<T> {
        let data = self.data().iter().map(|&v| -v).collect();
        Tensor::node(data, self.shape().to_vec(), Op::Neg(self.clone()))
    }

    /// v * mul + add, elementwise with scalar constants.
    pub fn affine(&self, mul: f64, add: f64) -> Tensor<T> {
        let (m, a) = (T::from_f64(mul), T::from_f64(add));
        let data = self.data().iter().map(|&v| v * m + a).collect();
        Tensor::node(
            data,
            self.shape().to_vec(),
            Op::Affine {
                input: self.clone(),
                mul: m,
            },
        )
    }

    pub fn add_scalar(&self, v: f64) -> Tensor<T> {
        self.affine(1.0, v)
    }

    pub fn mul_scalar(&self, v: f64) -> Tensor<T> {
        self.affine(v, 0.0)
    }

    pub fn exp(&self) -> Tensor<T> {
        let data = self.data().iter().map(|v| v.exp()).collect();
        Tensor::node(data, self.shape().to_vec(), Op::Exp(self.clone()))
    }

    pub fn ln(&self) -> Tensor<T> {
        let data = self.data().iter().map(|v| v.ln()).collect();
        Tensor::node(data, self.shape().to_vec(), Op::Ln(self.clone()))
    }

    pub fn sqrt(&self) -> Tensor<T> {
        let data = self.data().iter().map(|v| v.sqrt()).collect();
        Tensor::node(data, self.shape().to_vec(), Op::Sqrt(self.clone()))
    }

    pub fn square(&self) -> Tensor<T> {
        let data = self.data().iter().map(|&v| v * v).collect();
        Tensor::node(data, self.shape().to_vec(), Op::Square(self.clone()))
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<T> {
        let s = T::from_f64(slope);
        let data = self
            .data()
            .iter()
            .map(|&v| if v >= T::zero() { v } else { v * s })
            .collect();
        Tensor::node(
            data,
            self.shape().to_vec(),
            Op::LeakyRelu {
                input: self.clone(),
                slope: s,
            },
        )
    }

    // ---- linear algebra ----

    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (a, b) = (self.shape(), rhs.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return Err(Error::shape(format!("matmul of {a:?} and {b:?}")));
        }
        let data = kernels::matmul(self.data(), a[0], a[1], rhs.data(), b[1]);
        Ok(Tensor::node(
            data,
            vec![a[0], b[1]],
            Op::MatMul(self.clone(), rhs.clone()),
        ))
    }

    pub fn transpose2(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::shape(format!("transpose2 of rank {}", s.len())));
        }
        let data = kernels::transpose2(self.data(), s[0], s[1]);
        Ok(Tensor::node(
            data,
            vec![s[1], s[0]],
            Op::Transpose2(self.clone()),
        ))
    }

    // ---- shape ----

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let n = check_shape(shape)?;
        if n != self.numel() {
            return Err(Error::shape(format!(
                "reshape {:?} -> {shape:?}",
                self.shape()
            )));
        }
        Ok(Tensor {
            inner: Arc::new(Inner {
                id: next_id(),
                shape: shape.to_vec(),
                data: Arc::clone(&self.inner.data),
                op: if self.inner.track {
                    Op::Reshape(self.clone())
                } else {
                    Op::Leaf {
                        requires_grad: false,
                    }
                },
                track: self.inner.track,
            }),
        })
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor<T>> {
        check_shape(shape)?;
        if self.shape() == shape {
            return Ok(self.clone());
        }
        let strides = broadcast_strides(self.shape(), shape).ok_or(Error::Broadcast {
            lhs: self.shape().to_vec(),
            rhs: shape.to_vec(),
        })?;
        let n: usize = shape.iter().product();
        let src = self.data();
        let mut data = Vec::with_capacity(n);
        for_each_offset(shape, &strides, |off| data.push(src[off]));
        Ok(Tensor::node(
            data,
            shape.to_vec(),
            Op::BroadcastTo(self.clone()),
        ))
    }

    // ---- reductions ----

    pub fn sum_all(&self) -> Tensor<T> {
        let s: T = self.data().iter().copied().sum();
        Tensor::node(vec![s], vec![], Op::SumAll(self.clone()))
    }

    pub fn mean_all(&self) -> Tensor<T> {
        self.sum_all().mul_scalar(1.0 / self.numel() as f64)
    }

    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        let rank = self.rank();
        let mut axes: Vec<usize> = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if axes.iter().any(|&a| a >= rank) {
            return Err(Error::shape(format!(
                "axis out of range for rank {rank}: {axes:?}"
            )));
        }
        let kept: Vec<usize> = self
            .shape()
            .iter()
            .enumerate()
            .map(|(d, &s)| if axes.contains(&d) { 1 } else { s })
            .collect();
        let out_shape: Vec<usize> = if keepdim {
            kept.clone()
        } else {
            self.shape()
                .iter()
                .enumerate()
                .filter(|(d, _)| !axes.contains(d))
                .map(|(_, &s)| s)
                .collect()
        };
        let out_n: usize = kept.iter().product();
        let mut out = vec![T::zero(); out_n];
        let out_strides = reduced_strides(self.shape(), &kept);
        let src = self.data();
        let mut i = 0;
        for_each_offset(self.shape(), &out_strides, |off| {
            out[off] = out[off] + src[i];
            i += 1;
        });
        Ok(Tensor::node(
            out,
            out_shape,
            Op::SumAxes {
                input: self.clone(),
                axes,
                keepdim,
            },
        ))
    }

    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        let reduced: usize = axes
            .iter()
            .map(|&a| self.shape().get(a).copied().unwrap_or(1))
            .product();
        Ok(self
            .sum_axes(axes, keepdim)?
            .mul_scalar(1.0 / reduced as f64))
    }

    /// Reduce by summation to a broadcast-compatible smaller shape
    /// (the adjoint of `broadcast_to`).
    pub fn sum_to(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if self.shape() == shape {
            return Ok(self.clone());
        }
        let rank = self.rank();
        let pad = rank - shape.len();
        let mut axes = Vec::new();
        for d in 0..rank {
            let target = if d < pad { 1 } else { shape[d - pad] };
            if self.shape()[d] != target {
                axes.push(d);
            }
        }
        let summed = self.sum_axes(&axes, true)?;
        summed.reshape(shape)
    }

    // ---- structure ----

    pub fn concat(parts: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let first = parts[0].shape();
        if axis >= first.len() {
            return Err(Error::shape(format!("concat axis {axis} of {first:?}")));
        }
        let mut axis_total = 0;
        for p in parts {
            let s = p.shape();
            if s.len() != first.len()
                || s.iter()
                    .enumerate()
                    .any(|(d, &v)| d != axis && v != first[d])
            {
                return Err(Error::shape(format!(
                    "concat of {:?} and {first:?} along axis {axis}",
                    s
                )));
            }
            axis_total += s[axis];
        }
        let mut shape = first.to_vec();
        shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape()[axis] * inner;
                let src = &p.data()[o * chunk..(o + 1) * chunk];
                data.extend_from_slice(src);
            }
        }
        Ok(Tensor::node(
            data,
            shape,
            Op::Concat {
                inputs: parts.to_vec(),
                axis,
            },
        ))
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if axis >= s.len() || start + len > s[axis] || len == 0 {
            return Err(Error::shape(format!(
                "narrow axis {axis} [{start}, {start}+{len}) of {s:?}"
            )));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let mut shape = s.to_vec();
        shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * s[axis] + start) * inner;
            data.extend_from_slice(&self.data()[base..base + len * inner]);
        }
        Ok(Tensor::node(
            data,
            shape,
            Op::Narrow {
                input: self.clone(),
                axis,
                start,
            },
        ))
    }

    /// Stack rank-3 images into a rank-4 batch.
    pub fn stack(images: &[Tensor<T>]) -> Result<Tensor<T>> {
        if images.is_empty() {
            return Err(Error::InvalidArgument("stack of zero tensors".into()));
        }
        let mut rows = Vec::with_capacity(images.len());
        for img in images {
            let mut shape = vec![1];
            shape.extend_from_slice(img.shape());
            rows.push(img.reshape(&shape)?);
        }
        Tensor::concat(&rows, 0)
    }

    // ---- image ops ----

    pub fn upsample_nearest_2x(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(Error::shape(format!("upsample of rank {}", s.len())));
        }
        let data = kernels::upsample_nearest_2x(self.data(), s[0] * s[1], s[2], s[3]);
        Ok(Tensor::node(
            data,
            vec![s[0], s[1], 2 * s[2], 2 * s[3]],
            Op::UpsampleNearest2x(self.clone()),
        ))
    }

    pub fn sum_pool_2x(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0 {
            return Err(Error::shape(format!("sum_pool_2x of {s:?}")));
        }
        let data = kernels::sum_pool_2x(self.data(), s[0] * s[1], s[2], s[3]);
        Ok(Tensor::node(
            data,
            vec![s[0], s[1], s[2] / 2, s[3] / 2],
            Op::SumPool2x(self.clone()),
        ))
    }

    pub fn avg_pool_2x(&self) -> Result<Tensor<T>> {
        Ok(self.sum_pool_2x()?.mul_scalar(0.25))
    }

    /// Dense 2-D cross-correlation. Input (B, M, H, W), kernel (N, M, K, K).
    pub fn conv2d(&self, kernel: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
        let (xs, ks) = (self.shape(), kernel.shape());
        if xs.len() != 4 || ks.len() != 4 {
            return Err(Error::shape(format!("conv2d of {xs:?} with {ks:?}")));
        }
        if ks[1] != xs[1] {
            return Err(Error::shape(format!(
                "conv2d channel mismatch: input has {} channels, kernel expects {}",
                xs[1], ks[1]
            )));
        }
        if ks[2] != ks[3] {
            return Err(Error::shape(format!("non-square kernel {ks:?}")));
        }
        let (oh, ow) = (
            conv_out_size(xs[2], ks[2], stride, pad)?,
            conv_out_size(xs[3], ks[2], stride, pad)?,
        );
        let data = kernels::conv2d_forward(
            self.data(),
            xs[0],
            xs[1],
            xs[2],
            xs[3],
            kernel.data(),
            ks[0],
            ks[2],
            stride,
            pad,
            oh,
            ow,
        );
        Ok(Tensor::node(
            data,
            vec![xs[0], ks[0], oh, ow],
            Op::Conv2d {
                input: self.clone(),
                kernel: kernel.clone(),
                stride,
                pad,
            },
        ))
    }

    /// Depthwise 2-D cross-correlation. Input (B, M, H, W), kernel (M, 1, K, K).
    pub fn conv2d_depthwise(
        &self,
        kernel: &Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<T>> {
        let (xs, ks) = (self.shape(), kernel.shape());
        if xs.len() != 4 || ks.len() != 4 || ks[1] != 1 {
            return Err(Error::shape(format!(
                "depthwise conv of {xs:?} with {ks:?}"
            )));
        }
        if ks[0] != xs[1] {
            return Err(Error::shape(format!(
                "depthwise channel mismatch: input has {} channels, kernel has {}",
                xs[1], ks[0]
            )));
        }
        if ks[2] != ks[3] {
            return Err(Error::shape(format!("non-square kernel {ks:?}")));
        }
        let (oh, ow) = (
            conv_out_size(xs[2], ks[2], stride, pad)?,
            conv_out_size(xs[3], ks[2], stride, pad)?,
        );
        let data = kernels::dw_conv2d_forward(
            self.data(),
            xs[0],
            xs[1],
            xs[2],
            xs[3],
            kernel.data(),
            ks[2],
            stride,
            pad,
            oh,
            ow,
        );
        Ok(Tensor::node(
            data,
            vec![xs[0], xs[1], oh, ow],
            Op::DwConv2d {
                input: self.clone(),
                kernel: kernel.clone(),
                stride,
                pad,
            },
        ))
    }

    pub(crate) fn conv2d_input_grad(
        grad_out: &Tensor<T>,
        kernel: &Tensor<T>,
        stride: usize,
        pad: usize,
        in_hw: (usize, usize),
    ) -> Tensor<T> {
        let gs = grad_out.shape();
        let ks = kernel.shape();
        let data = kernels::conv2d_input_grad(
            grad_out.data(),
            gs[0],
            gs[1],
            gs[2],
            gs[3],
            kernel.data(),
            ks[1],
            ks[2],
            stride,
            pad,
            in_hw.0,
            in_hw.1,
        );
        Tensor::node(
            data,
            vec![gs[0], ks[1], in_hw.0, in_hw.1],
            Op::Conv2dInputGrad {
                grad_out: grad_out.clone(),
                kernel: kernel.clone(),
                stride,
                pad,
            },
        )
    }

    pub(crate) fn conv2d_kernel_grad(
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        stride: usize,
        pad: usize,
        ksize: usize,
    ) -> Tensor<T> {
        let xs = input.shape();
        let gs = grad_out.shape();
        let data = kernels::conv2d_kernel_grad(
            input.data(),
            xs[0],
            xs[1],
            xs[2],
            xs[3],
            grad_out.data(),
            gs[1],
            gs[2],
            gs[3],
            ksize,
            stride,
            pad,
        );
        Tensor::node(
            data,
            vec![gs[1], xs[1], ksize, ksize],
            Op::Conv2dKernelGrad {
                input: input.clone(),
                grad_out: grad_out.clone(),
                stride,
                pad,
            },
        )
    }

    pub(crate) fn dw_conv2d_input_grad(
        grad_out: &Tensor<T>,
        kernel: &Tensor<T>,
        stride: usize,
        pad: usize,
        in_hw: (usize, usize),
    ) -> Tensor<T> {
        let gs = grad_out.shape();
        let ks = kernel.shape();
        let data = kernels::dw_conv2d_input_grad(
            grad_out.data(),
            gs[0],
            gs[1],
            gs[2],
            gs[3],
            kernel.data(),
            ks[2],
            stride,
            pad,
            in_hw.0,
            in_hw.1,
        );
        Tensor::node(
            data,
            vec![gs[0], gs[1], in_hw.0, in_hw.1],
            Op::DwConv2dInputGrad {
                grad_out: grad_out.clone(),
                kernel: kernel.clone(),
                stride,
                pad,
            },
        )
    }

    pub(crate) fn dw_conv2d_kernel_grad(
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        stride: usize,
        pad: usize,
        ksize: usize,
    ) -> Tensor<T> {
        let xs = input.shape();
        let gs = grad_out.shape();
        let data = kernels::dw_conv2d_kernel_grad(
            input.data(),
            xs[0],
            xs[1],
            xs[2],
            xs[3],
            grad_out.data(),
            gs[2],
            gs[3],
            ksize,
            stride,
            pad,
        );
        Tensor::node(
            data,
            vec![xs[1], 1, ksize, ksize],
            Op::DwConv2dKernelGrad {
                input: input.clone(),
                grad_out: grad_out.clone(),
                stride,
                pad,
            },
        )
    }
}

pub fn conv_out_size(in_size: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Geometry("stride must be positive".into()));
    }
    if in_size + 2 * pad < k {
        return Err(Error::Geometry(format!(
            "kernel {k} larger than padded input {in_size}+2*{pad}"
        )));
    }
    Ok((in_size + 2 * pad - k) / stride + 1)
}

fn op_tracks<T: Element>(op: &Op<T>) -> bool {
    use Op::*;
    match op {
        Leaf { requires_grad } => *requires_grad,
        Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) => {
            a.tracks_grad() || b.tracks_grad()
        }
        Neg(a) | Exp(a) | Ln(a) | Sqrt(a) | Square(a) | Transpose2(a) | Reshape(a)
        | BroadcastTo(a) | SumAll(a) | UpsampleNearest2x(a) | SumPool2x(a) => a.tracks_grad(),
        Affine { input, .. } | LeakyRelu { input, .. } | SumAxes { input, .. }
        | Narrow { input, .. } => input.tracks_grad(),
        Concat { inputs, .. } => inputs.iter().any(|t| t.tracks_grad()),
        Conv2d { input, kernel, .. } | DwConv2d { input, kernel, .. } => {
            input.tracks_grad() || kernel.tracks_grad()
        }
        Conv2dInputGrad {
            grad_out, kernel, ..
        }
        | DwConv2dInputGrad {
            grad_out, kernel, ..
        } => grad_out.tracks_grad() || kernel.tracks_grad(),
        Conv2dKernelGrad {
            input, grad_out, ..
        }
        | DwConv2dKernelGrad {
            input, grad_out, ..
        } => input.tracks_grad() || grad_out.tracks_grad(),
    }
}

// ---- broadcasting machinery ----

pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for d in 0..rank {
        let av = if d < rank - a.len() { 1 } else { a[d - (rank - a.len())] };
        let bv = if d < rank - b.len() { 1 } else { b[d - (rank - b.len())] };
        out[d] = if av == bv || bv == 1 {
            av
        } else if av == 1 {
            bv
        } else {
            return Err(Error::Broadcast {
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        };
    }
    Ok(out)
}

/// Element strides of `from` aligned to `to`, 0 on broadcast dimensions.
/// None when `from` does not broadcast to `to`.
fn broadcast_strides(from: &[usize], to: &[usize]) -> Option<Vec<usize>> {
    if from.len() > to.len() {
        return None;
    }
    let pad = to.len() - from.len();
    let mut strides = vec![0usize; to.len()];
    let mut acc = 1usize;
    for d in (0..from.len()).rev() {
        if from[d] == to[d + pad] {
            strides[d + pad] = acc;
        } else if from[d] == 1 {
            strides[d + pad] = 0;
        } else {
            return None;
        }
        acc *= from[d];
    }
    Some(strides)
}

/// Strides into a same-rank reduced shape (`kept[d]` is 1 on summed axes).
fn reduced_strides(shape: &[usize], kept: &[usize]) -> Vec<usize> {
    let mut strides = vec![0usize; shape.len()];
    let mut acc = 1usize;
    for d in (0..shape.len()).rev() {
        strides[d] = if kept[d] == 1 && shape[d] != 1 { 0 } else { acc };
        acc *= kept[d];
    }
    strides
}

/// Walks `shape` in row-major order, calling `f` with the strided offset.
fn for_each_offset(shape: &[usize], strides: &[usize], mut f: impl FnMut(usize)) {
    let rank = shape.len();
    let total: usize = shape.iter().product();
    if total == 0 {
        return;
    }
    if rank == 0 {
        f(0);
        return;
    }
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    loop {
        f(off);
        let mut d = rank;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            off += strides[d];
            if idx[d] < shape[d] {
                break;
            }
            off -= strides[d] * shape[d];
            idx[d] = 0;
        }
    }
}

fn binary_broadcast<T: Element>(
    lhs: &Tensor<T>,
    rhs: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<(Vec<T>, Vec<usize>)> {
    if lhs.shape() == rhs.shape() {
        let data = lhs
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        return Ok((data, lhs.shape().to_vec()));
    }
    let out_shape = broadcast_shapes(lhs.shape(), rhs.shape())?;
    let ls = broadcast_strides(lhs.shape(), &out_shape).ok_or(Error::Broadcast {
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    })?;
    let rs = broadcast_strides(rhs.shape(), &out_shape).ok_or(Error::Broadcast {
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    })?;
    let n: usize = out_shape.iter().product();
    let mut data = Vec::with_capacity(n);
    let (ld, rd) = (lhs.data(), rhs.data());
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let (mut lo, mut ro) = (0usize, 0usize);
    loop {
        data.push(f(ld[lo], rd[ro]));
        let mut d = rank;
        loop {
            if d == 0 {
                return Ok((data, out_shape));
            }
            d -= 1;
            idx[d] += 1;
            lo += ls[d];
            ro += rs[d];
            if idx[d] < out_shape[d] {
                break;
            }
            lo -= ls[d] * out_shape[d];
            ro -= rs[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}
