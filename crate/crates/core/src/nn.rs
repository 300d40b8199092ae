//! Network building blocks shared by the progressive and super-resolution
//! models: equalized-learning-rate convolution and linear layers.
//!
//! Raw weights are drawn unit-variance and multiplied at run time by a
//! fixed per-layer constant `c = gain / sqrt(fan_in)` (He constant,
//! gain = sqrt(2)). The constant is set at construction and never
//! trained, which keeps effective per-layer scales comparable under
//! adaptive optimizers.

use crate::conv::ConvMode;
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

/// Leaky-relu slope used everywhere in the models.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Runtime weight multiplier for a layer with the given fan-in.
pub fn equalized_scale(fan_in: usize, gain: f64) -> f64 {
    assert!(fan_in >= 1, "fan_in must be >= 1");
    gain / (fan_in as f64).sqrt()
}

pub fn he_gain() -> f64 {
    2f64.sqrt()
}

/// Convolution layer, dense or depthwise-separable, with equalized
/// scaling and a per-output-channel bias.
pub enum ConvLayer<T: Element> {
    Dense {
        weight: Tensor<T>,
        bias: Tensor<T>,
        scale: f64,
        stride: usize,
        pad: usize,
    },
    Separable {
        depthwise: Tensor<T>,
        pointwise: Tensor<T>,
        bias: Tensor<T>,
        dw_scale: f64,
        pw_scale: f64,
        stride: usize,
        pad: usize,
    },
}

impl<T: Element> ConvLayer<T> {
    /// Picks the implementation from `mode`. 1x1 kernels stay dense in
    /// either mode: a separable 1x1 only adds multiplications (the cost
    /// ratio 1/n + 1/k^2 exceeds 1 at k = 1).
    pub fn new(
        mode: ConvMode,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Result<ConvLayer<T>> {
        match mode {
            ConvMode::Dsep if k > 1 => Self::new_separable(in_ch, out_ch, k, stride, pad, rng),
            _ => Self::new_dense(in_ch, out_ch, k, stride, pad, rng),
        }
    }

    pub fn new_dense(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Result<ConvLayer<T>> {
        let weight = Tensor::randn(&[out_ch, in_ch, k, k], rng)?.detach_requiring_grad();
        let bias = Tensor::zeros(&[out_ch, 1, 1])?.detach_requiring_grad();
        Ok(ConvLayer::Dense {
            weight,
            bias,
            scale: equalized_scale(in_ch * k * k, he_gain()),
            stride,
            pad,
        })
    }

    pub fn new_separable(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Result<ConvLayer<T>> {
        let depthwise = Tensor::randn(&[in_ch, 1, k, k], rng)?.detach_requiring_grad();
        let pointwise = Tensor::randn(&[out_ch, in_ch, 1, 1], rng)?.detach_requiring_grad();
        let bias = Tensor::zeros(&[out_ch, 1, 1])?.detach_requiring_grad();
        Ok(ConvLayer::Separable {
            depthwise,
            pointwise,
            bias,
            dw_scale: equalized_scale(k * k, he_gain()),
            pw_scale: equalized_scale(in_ch, he_gain()),
            stride,
            pad,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            ConvLayer::Dense {
                weight,
                bias,
                scale,
                stride,
                pad,
            } => x.conv2d(weight, *stride, *pad)?.mul_scalar(*scale).add(bias),
            ConvLayer::Separable {
                depthwise,
                pointwise,
                bias,
                dw_scale,
                pw_scale,
                stride,
                pad,
            } => x
                .conv2d_depthwise(depthwise, *stride, *pad)?
                .mul_scalar(*dw_scale)
                .conv2d(pointwise, 1, 0)?
                .mul_scalar(*pw_scale)
                .add(bias),
        }
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        match self {
            ConvLayer::Dense { weight, bias, .. } => {
                f(format!("{prefix}.weight"), weight);
                f(format!("{prefix}.bias"), bias);
            }
            ConvLayer::Separable {
                depthwise,
                pointwise,
                bias,
                ..
            } => {
                f(format!("{prefix}.depthwise"), depthwise);
                f(format!("{prefix}.pointwise"), pointwise);
                f(format!("{prefix}.bias"), bias);
            }
        }
    }
}

pub struct Linear<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub scale: f64,
}

impl<T: Element> Linear<T> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<Linear<T>> {
        let weight = Tensor::randn(&[in_dim, out_dim], rng)?.detach_requiring_grad();
        let bias = Tensor::zeros(&[out_dim])?.detach_requiring_grad();
        Ok(Linear {
            weight,
            bias,
            scale: equalized_scale(in_dim, he_gain()),
        })
    }

    /// x: (B, in) -> (B, out)
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.matmul(&self.weight)?.mul_scalar(self.scale).add(&self.bias)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equalized_scale_values() {
        assert!((equalized_scale(2, he_gain()) - 1.0).abs() < 1e-15);
        assert!((equalized_scale(8, he_gain()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn runtime_multiplier_equals_prescaled_weights() {
        let mut rng = crate::rng::seeded(21);
        let layer: ConvLayer<f64> = ConvLayer::new_dense(3, 4, 3, 1, 1, &mut rng).unwrap();
        let x = Tensor::<f64>::randn(&[2, 3, 6, 6], &mut rng).unwrap();
        let out = layer.forward(&x).unwrap();

        let ConvLayer::Dense { weight, scale, .. } = &layer else {
            unreachable!()
        };
        let prescaled = Tensor::from_vec(
            weight.data().iter().map(|&v| v * *scale).collect(),
            weight.shape(),
        )
        .unwrap();
        let direct = x.conv2d(&prescaled, 1, 1).unwrap();
        for (a, b) in out.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_by_one_stays_dense_in_dsep_mode() {
        let mut rng = crate::rng::seeded(2);
        let layer: ConvLayer<f32> =
            ConvLayer::new(ConvMode::Dsep, 8, 3, 1, 1, 0, &mut rng).unwrap();
        assert!(matches!(layer, ConvLayer::Dense { .. }));
        let layer: ConvLayer<f32> =
            ConvLayer::new(ConvMode::Dsep, 8, 3, 3, 1, 1, &mut rng).unwrap();
        assert!(matches!(layer, ConvLayer::Separable { .. }));
    }
}
