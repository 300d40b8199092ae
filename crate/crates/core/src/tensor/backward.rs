//! Reverse-mode differentiation.
//!
//! Cotangents are built out of ordinary tensor ops, so every gradient is
//! itself a differentiable graph node. Losses that contain gradients of
//! other values (gradient-norm penalties) therefore differentiate
//! correctly on a second `backward` pass.

use std::collections::{HashMap, HashSet};

use super::{Element, Op, Tensor};
use crate::error::{Error, Result};

/// Gradients keyed by leaf tensor, produced by one `backward` call.
/// Each call returns a fresh map; gradients never accumulate across calls.
pub struct GradMap<T: Element> {
    grads: HashMap<usize, Tensor<T>>,
}

impl<T: Element> GradMap<T> {
    pub fn get(&self, t: &Tensor<T>) -> Option<&Tensor<T>> {
        self.grads.get(&t.id())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl<T: Element> Tensor<T> {
    /// d(self)/d(leaf) for every grad-requiring leaf the scalar depends on.
    /// Detached leaves are simply absent from the map.
    pub fn backward(&self) -> Result<GradMap<T>> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss {
                shape: self.shape().to_vec(),
            });
        }
        let order = topo_order(self);
        let mut cot: HashMap<usize, Tensor<T>> = HashMap::new();
        cot.insert(self.id(), Tensor::ones(self.shape())?);

        let mut leaf_grads = HashMap::new();
        for node in order.iter().rev() {
            let Some(grad) = cot.remove(&node.id()) else {
                continue;
            };
            if node.is_var_leaf() {
                accumulate(&mut leaf_grads, node.id(), grad);
                continue;
            }
            for (parent, pgrad) in vjp(node, &grad)? {
                if parent.tracks_grad() {
                    accumulate(&mut cot, parent.id(), pgrad);
                }
            }
        }
        Ok(GradMap { grads: leaf_grads })
    }
}

fn accumulate<T: Element>(map: &mut HashMap<usize, Tensor<T>>, id: usize, grad: Tensor<T>) {
    match map.remove(&id) {
        Some(prev) => {
            let sum = prev.add(&grad).expect("gradient shapes agree");
            map.insert(id, sum);
        }
        None => {
            map.insert(id, grad);
        }
    }
}

/// Post-order over the tracked subgraph (inputs before consumers).
fn topo_order<T: Element>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    let mut stack = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !seen.insert(node.id()) {
            continue;
        }
        stack.push((node.clone(), true));
        for_each_parent(&node, |p| {
            if p.tracks_grad() && !seen.contains(&p.id()) {
                stack.push((p.clone(), false));
            }
        });
    }
    order
}

fn for_each_parent<T: Element>(node: &Tensor<T>, mut f: impl FnMut(&Tensor<T>)) {
    use Op::*;
    match node.op() {
        Leaf { .. } => {}
        Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) => {
            f(a);
            f(b);
        }
        Neg(a) | Exp(a) | Ln(a) | Sqrt(a) | Square(a) | Transpose2(a) | Reshape(a)
        | BroadcastTo(a) | SumAll(a) | UpsampleNearest2x(a) | SumPool2x(a) => f(a),
        Affine { input, .. }
        | LeakyRelu { input, .. }
        | SumAxes { input, .. }
        | Narrow { input, .. } => f(input),
        Concat { inputs, .. } => inputs.iter().for_each(&mut f),
        Conv2d { input, kernel, .. } | DwConv2d { input, kernel, .. } => {
            f(input);
            f(kernel);
        }
        Conv2dInputGrad {
            grad_out, kernel, ..
        }
        | DwConv2dInputGrad {
            grad_out, kernel, ..
        } => {
            f(grad_out);
            f(kernel);
        }
        Conv2dKernelGrad {
            input, grad_out, ..
        }
        | DwConv2dKernelGrad {
            input, grad_out, ..
        } => {
            f(input);
            f(grad_out);
        }
    }
}

/// Parent cotangents of one node given its own cotangent.
fn vjp<T: Element>(node: &Tensor<T>, grad: &Tensor<T>) -> Result<Vec<(Tensor<T>, Tensor<T>)>> {
    use Op::*;
    let out = match node.op() {
        Leaf { .. } => vec![],
        Add(a, b) => vec![
            (a.clone(), grad.sum_to(a.shape())?),
            (b.clone(), grad.sum_to(b.shape())?),
        ],
        Sub(a, b) => vec![
            (a.clone(), grad.sum_to(a.shape())?),
            (b.clone(), grad.neg().sum_to(b.shape())?),
        ],
        Mul(a, b) => vec![
            (a.clone(), grad.mul(b)?.sum_to(a.shape())?),
            (b.clone(), grad.mul(a)?.sum_to(b.shape())?),
        ],
        Div(a, b) => {
            let ga = grad.div(b)?.sum_to(a.shape())?;
            // d/db (a/b) = -a / b^2 = -node / b
            let gb = grad.mul(node)?.div(b)?.neg().sum_to(b.shape())?;
            vec![(a.clone(), ga), (b.clone(), gb)]
        }
        Neg(a) => vec![(a.clone(), grad.neg())],
        Affine { input, mul } => vec![(input.clone(), grad.mul_scalar(mul.as_f64()))],
        Exp(a) => vec![(a.clone(), grad.mul(node)?)],
        Ln(a) => vec![(a.clone(), grad.div(a)?)],
        Sqrt(a) => vec![(a.clone(), grad.div(node)?.mul_scalar(0.5))],
        Square(a) => vec![(a.clone(), grad.mul(a)?.mul_scalar(2.0))],
        LeakyRelu { input, slope } => {
            let mask: Vec<T> = input
                .data()
                .iter()
                .map(|&v| if v >= T::zero() { T::one() } else { *slope })
                .collect();
            let mask = Tensor::from_vec(mask, input.shape())?;
            vec![(input.clone(), grad.mul(&mask)?)]
        }
        MatMul(a, b) => vec![
            (a.clone(), grad.matmul(&b.transpose2()?)?),
            (b.clone(), a.transpose2()?.matmul(grad)?),
        ],
        Transpose2(a) => vec![(a.clone(), grad.transpose2()?)],
        Reshape(a) => vec![(a.clone(), grad.reshape(a.shape())?)],
        BroadcastTo(a) => vec![(a.clone(), grad.sum_to(a.shape())?)],
        SumAxes {
            input,
            axes,
            keepdim,
        } => {
            let kept: Vec<usize> = input
                .shape()
                .iter()
                .enumerate()
                .map(|(d, &s)| if axes.contains(&d) { 1 } else { s })
                .collect();
            let g = if *keepdim {
                grad.clone()
            } else {
                grad.reshape(&kept)?
            };
            vec![(input.clone(), g.broadcast_to(input.shape())?)]
        }
        SumAll(a) => vec![(a.clone(), grad.broadcast_to(a.shape())?)],
        Concat { inputs, axis } => {
            let mut start = 0;
            let mut out = Vec::with_capacity(inputs.len());
            for part in inputs {
                let len = part.shape()[*axis];
                out.push((part.clone(), grad.narrow(*axis, start, len)?));
                start += len;
            }
            out
        }
        Narrow { input, axis, start } => {
            let len = node.shape()[*axis];
            let total = input.shape()[*axis];
            let mut pieces = Vec::new();
            if *start > 0 {
                let mut s = input.shape().to_vec();
                s[*axis] = *start;
                pieces.push(Tensor::zeros(&s)?);
            }
            pieces.push(grad.clone());
            if start + len < total {
                let mut s = input.shape().to_vec();
                s[*axis] = total - start - len;
                pieces.push(Tensor::zeros(&s)?);
            }
            vec![(input.clone(), Tensor::concat(&pieces, *axis)?)]
        }
        UpsampleNearest2x(a) => vec![(a.clone(), grad.sum_pool_2x()?)],
        SumPool2x(a) => vec![(a.clone(), grad.upsample_nearest_2x()?)],
        Conv2d {
            input,
            kernel,
            stride,
            pad,
        } => {
            let in_hw = (input.shape()[2], input.shape()[3]);
            let gi = Tensor::conv2d_input_grad(grad, kernel, *stride, *pad, in_hw);
            let gk = Tensor::conv2d_kernel_grad(input, grad, *stride, *pad, kernel.shape()[2]);
            vec![(input.clone(), gi), (kernel.clone(), gk)]
        }
        Conv2dInputGrad {
            grad_out,
            kernel,
            stride,
            pad,
        } => {
            // node = transposed correlation of grad_out with kernel; both
            // partials reuse the same conv family.
            let g_gy = grad.conv2d(kernel, *stride, *pad)?;
            let gk = Tensor::conv2d_kernel_grad(grad, grad_out, *stride, *pad, kernel.shape()[2]);
            vec![(grad_out.clone(), g_gy), (kernel.clone(), gk)]
        }
        Conv2dKernelGrad {
            input,
            grad_out,
            stride,
            pad,
        } => {
            let in_hw = (input.shape()[2], input.shape()[3]);
            let gi = Tensor::conv2d_input_grad(grad_out, grad, *stride, *pad, in_hw);
            let g_gy = input.conv2d(grad, *stride, *pad)?;
            vec![(input.clone(), gi), (grad_out.clone(), g_gy)]
        }
        DwConv2d {
            input,
            kernel,
            stride,
            pad,
        } => {
            let in_hw = (input.shape()[2], input.shape()[3]);
            let gi = Tensor::dw_conv2d_input_grad(grad, kernel, *stride, *pad, in_hw);
            let gk = Tensor::dw_conv2d_kernel_grad(input, grad, *stride, *pad, kernel.shape()[2]);
            vec![(input.clone(), gi), (kernel.clone(), gk)]
        }
        DwConv2dInputGrad {
            grad_out,
            kernel,
            stride,
            pad,
        } => {
            let g_gy = grad.conv2d_depthwise(kernel, *stride, *pad)?;
            let gk =
                Tensor::dw_conv2d_kernel_grad(grad, grad_out, *stride, *pad, kernel.shape()[2]);
            vec![(grad_out.clone(), g_gy), (kernel.clone(), gk)]
        }
        DwConv2dKernelGrad {
            input,
            grad_out,
            stride,
            pad,
        } => {
            let in_hw = (input.shape()[2], input.shape()[3]);
            let gi = Tensor::dw_conv2d_input_grad(grad_out, grad, *stride, *pad, in_hw);
            let g_gy = input.conv2d_depthwise(grad, *stride, *pad)?;
            vec![(input.clone(), gi), (grad_out.clone(), g_gy)]
        }
    };
    Ok(out)
}
