//! Super-resolution generator and its critic.
//!
//! The generator runs a residual trunk at the input resolution, then two
//! nearest-neighbor x2 upsampling blocks each followed by a convolution
//! (chosen over sub-pixel shuffles to avoid checkerboard artifacts). Its
//! output is added to a nearest-neighbor x4 baseline of the input, so a
//! zero final layer reproduces that baseline exactly.

use super::{SrConfig, SR_SCALE};
use crate::error::{Error, Result};
use crate::nn::{ConvLayer, Linear, LEAKY_SLOPE};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

struct ResBlock<T: Element> {
    conv1: ConvLayer<T>,
    conv2: ConvLayer<T>,
}

pub struct SrGenerator<T: Element> {
    channels: usize,
    conv_in: ConvLayer<T>,
    blocks: Vec<ResBlock<T>>,
    trunk_conv: ConvLayer<T>,
    up1: ConvLayer<T>,
    up2: ConvLayer<T>,
    conv_out: ConvLayer<T>,
}

impl<T: Element> SrGenerator<T> {
    /// The x4 factor decomposes into two x2 stages; construction rejects
    /// any other configured scale.
    pub fn new(config: &SrConfig, rng: &mut Rng) -> Result<SrGenerator<T>> {
        config.validate()?;
        if config.scale_factor != SR_SCALE {
            return Err(Error::Config(format!(
                "generator supports only the fixed x{SR_SCALE} factor"
            )));
        }
        let ch = config.base_channels;
        let conv_in = ConvLayer::new_dense(3, ch, 3, 1, 1, rng)?;
        let blocks = (0..config.residual_blocks)
            .map(|_| {
                Ok(ResBlock {
                    conv1: ConvLayer::new_dense(ch, ch, 3, 1, 1, rng)?,
                    conv2: ConvLayer::new_dense(ch, ch, 3, 1, 1, rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let trunk_conv = ConvLayer::new_dense(ch, ch, 3, 1, 1, rng)?;
        let up1 = ConvLayer::new_dense(ch, ch, 3, 1, 1, rng)?;
        let up2 = ConvLayer::new_dense(ch, ch, 3, 1, 1, rng)?;
        // zero-initialized output conv: the untrained network starts at
        // the upsampling baseline and learns a correction
        let mut conv_out = ConvLayer::new_dense(ch, 3, 3, 1, 1, rng)?;
        if let ConvLayer::Dense { weight, .. } = &mut conv_out {
            *weight = Tensor::zeros(weight.shape())?.detach_requiring_grad();
        }
        Ok(SrGenerator {
            channels: ch,
            conv_in,
            blocks,
            trunk_conv,
            up1,
            up2,
            conv_out,
        })
    }

    pub fn residual_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// (B, 3, R, R) -> (B, 3, 4R, 4R).
    pub fn forward(&self, lr: &Tensor<T>) -> Result<Tensor<T>> {
        let s = lr.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::shape(format!(
                "sr generator wants (B, 3, R, R), got {s:?}"
            )));
        }
        if s[2] < 4 || s[3] < 4 {
            return Err(Error::shape(format!(
                "input extent {}x{} below the 4-pixel minimum",
                s[2], s[3]
            )));
        }
        let baseline = lr.upsample_nearest_2x()?.upsample_nearest_2x()?;
        let head = self.conv_in.forward(lr)?.leaky_relu(LEAKY_SLOPE);
        let mut h = head.clone();
        for block in &self.blocks {
            let r = block.conv1.forward(&h)?.leaky_relu(LEAKY_SLOPE);
            let r = block.conv2.forward(&r)?;
            h = h.add(&r)?;
        }
        let h = self.trunk_conv.forward(&h)?.add(&head)?;
        let h = self
            .up1
            .forward(&h.upsample_nearest_2x()?)?
            .leaky_relu(LEAKY_SLOPE);
        let h = self
            .up2
            .forward(&h.upsample_nearest_2x()?)?
            .leaky_relu(LEAKY_SLOPE);
        baseline.add(&self.conv_out.forward(&h)?)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.conv_in.visit_params("sr_gen.conv_in", f);
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.conv1.visit_params(&format!("sr_gen.res{i}.conv1"), f);
            block.conv2.visit_params(&format!("sr_gen.res{i}.conv2"), f);
        }
        self.trunk_conv.visit_params("sr_gen.trunk", f);
        self.up1.visit_params("sr_gen.up1", f);
        self.up2.visit_params("sr_gen.up2", f);
        self.conv_out.visit_params("sr_gen.conv_out", f);
    }

    pub fn named_params(&mut self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, t| out.push((name, t.clone())));
        out
    }
}

/// output exactly 4x the input extents; residual trunk plus two x2
/// upsampling blocks.
pub fn sr_generate<T: Element>(generator: &SrGenerator<T>, lr: &Tensor<T>) -> Result<Tensor<T>> {
    generator.forward(lr)
}

/// Strided-convolution critic over HR images, scoring one value per
/// sample.
pub struct SrDiscriminator<T: Element> {
    hr_resolution: usize,
    conv_in: ConvLayer<T>,
    down: Vec<ConvLayer<T>>,
    readout: Linear<T>,
    flat_dim: usize,
}

impl<T: Element> SrDiscriminator<T> {
    pub fn new(config: &SrConfig, hr_resolution: usize, rng: &mut Rng) -> Result<SrDiscriminator<T>> {
        if hr_resolution < 16 || !hr_resolution.is_power_of_two() {
            return Err(Error::Config(format!(
                "sr critic wants a power-of-two resolution >= 16, got {hr_resolution}"
            )));
        }
        let ch = config.base_channels;
        let conv_in = ConvLayer::new_dense(3, ch, 3, 1, 1, rng)?;
        let mut down = Vec::new();
        let mut res = hr_resolution;
        let mut c_in = ch;
        while res > 4 {
            let c_out = (c_in * 2).min(4 * ch);
            down.push(ConvLayer::new_dense(c_in, c_out, 3, 2, 1, rng)?);
            c_in = c_out;
            res /= 2;
        }
        let flat_dim = c_in * res * res;
        let readout = Linear::new(flat_dim, 1, rng)?;
        Ok(SrDiscriminator {
            hr_resolution,
            conv_in,
            down,
            readout,
            flat_dim,
        })
    }

    /// (B, 3, R, R) -> (B,)
    pub fn forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let s = image.shape();
        let r = self.hr_resolution;
        if s.len() != 4 || s[1] != 3 || s[2] != r || s[3] != r {
            return Err(Error::shape(format!(
                "sr critic wants (B, 3, {r}, {r}), got {s:?}"
            )));
        }
        let b = s[0];
        let mut h = self.conv_in.forward(image)?.leaky_relu(LEAKY_SLOPE);
        for layer in &self.down {
            h = layer.forward(&h)?.leaky_relu(LEAKY_SLOPE);
        }
        let flat = h.reshape(&[b, self.flat_dim])?;
        self.readout.forward(&flat)?.reshape(&[b])
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.conv_in.visit_params("sr_disc.conv_in", f);
        for (i, layer) in self.down.iter_mut().enumerate() {
            layer.visit_params(&format!("sr_disc.down{i}"), f);
        }
        self.readout.visit_params("sr_disc.readout", f);
    }

    pub fn named_params(&mut self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, t| out.push((name, t.clone())));
        out
    }
}
