//! Generator and discriminator that grow one resolution-doubling block at
//! a time. Growth appends fresh layers and leaves every previously
//! trained parameter untouched; the per-stage RGB projections are kept so
//! the fade-in skip paths stay available.

use super::{fade_blend, minibatch_stddev, GrowthState, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{ConvLayer, Linear, LEAKY_SLOPE};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

struct GenBlock<T: Element> {
    conv1: ConvLayer<T>,
    conv2: ConvLayer<T>,
}

pub struct Generator<T: Element> {
    latent_dim: usize,
    stage: usize,
    config: TrainConfig,
    input: Linear<T>,
    base_conv: ConvLayer<T>,
    blocks: Vec<GenBlock<T>>,
    to_rgb: Vec<ConvLayer<T>>,
}

impl<T: Element> Generator<T> {
    pub fn new(config: &TrainConfig, rng: &mut Rng) -> Result<Generator<T>> {
        let ch0 = config.channels_at(0);
        let input = Linear::new(config.latent_dim, ch0 * 16, rng)?;
        let base_conv = ConvLayer::new(config.conv_mode, ch0, ch0, 3, 1, 1, rng)?;
        let to_rgb = vec![ConvLayer::new_dense(ch0, 3, 1, 1, 0, rng)?];
        Ok(Generator {
            latent_dim: config.latent_dim,
            stage: 0,
            config: config.clone(),
            input,
            base_conv,
            blocks: Vec::new(),
            to_rgb,
        })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn resolution(&self) -> usize {
        4 << self.stage
    }

    /// Appends the next resolution block. Existing parameters are shared,
    /// not copied, so they are bitwise identical after growth.
    pub fn grow(&mut self, rng: &mut Rng) -> Result<()> {
        let next = self.stage + 1;
        if next > self.config.max_stage {
            return Err(Error::InvalidArgument(format!(
                "generator cannot grow past max_stage {}",
                self.config.max_stage
            )));
        }
        let (ch_in, ch_out) = (
            self.config.channels_at(next - 1),
            self.config.channels_at(next),
        );
        self.blocks.push(GenBlock {
            conv1: ConvLayer::new(self.config.conv_mode, ch_in, ch_out, 3, 1, 1, rng)?,
            conv2: ConvLayer::new(self.config.conv_mode, ch_out, ch_out, 3, 1, 1, rng)?,
        });
        self.to_rgb.push(ConvLayer::new_dense(ch_out, 3, 1, 1, 0, rng)?);
        self.stage = next;
        Ok(())
    }

    /// latent (B, latent_dim) -> image (B, 3, R, R) at the current stage.
    /// During fading the previous stage's RGB output is upsampled and
    /// blended with the new block's output.
    pub fn forward(&self, latent: &Tensor<T>, alpha: f64) -> Result<Tensor<T>> {
        let s = latent.shape();
        if s.len() != 2 || s[1] != self.latent_dim {
            return Err(Error::shape(format!(
                "latent shape {s:?}, expected (B, {})",
                self.latent_dim
            )));
        }
        let b = s[0];
        let ch0 = self.config.channels_at(0);
        let mut h = self
            .input
            .forward(latent)?
            .reshape(&[b, ch0, 4, 4])?
            .leaky_relu(LEAKY_SLOPE);
        h = self.base_conv.forward(&h)?.leaky_relu(LEAKY_SLOPE);

        if self.stage == 0 {
            return self.to_rgb[0].forward(&h);
        }
        for block in &self.blocks[..self.stage - 1] {
            h = apply_gen_block(block, &h)?;
        }
        let coarse_features = h;
        let fine_features = apply_gen_block(&self.blocks[self.stage - 1], &coarse_features)?;
        let fine = self.to_rgb[self.stage].forward(&fine_features)?;
        if alpha >= 1.0 {
            return Ok(fine);
        }
        let coarse = self.to_rgb[self.stage - 1]
            .forward(&coarse_features)?
            .upsample_nearest_2x()?;
        fade_blend(&coarse, &fine, alpha)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.input.visit_params("g.input", f);
        self.base_conv.visit_params("g.base_conv", f);
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.conv1.visit_params(&format!("g.block{}.conv1", i + 1), f);
            block.conv2.visit_params(&format!("g.block{}.conv2", i + 1), f);
        }
        for (i, rgb) in self.to_rgb.iter_mut().enumerate() {
            rgb.visit_params(&format!("g.to_rgb{i}"), f);
        }
    }

    pub fn named_params(&mut self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, t| out.push((name, t.clone())));
        out
    }
}

fn apply_gen_block<T: Element>(block: &GenBlock<T>, h: &Tensor<T>) -> Result<Tensor<T>> {
    let up = h.upsample_nearest_2x()?;
    let h = block.conv1.forward(&up)?.leaky_relu(LEAKY_SLOPE);
    Ok(block.conv2.forward(&h)?.leaky_relu(LEAKY_SLOPE))
}

struct DiscBlock<T: Element> {
    conv1: ConvLayer<T>,
    conv2: ConvLayer<T>,
}

pub struct Discriminator<T: Element> {
    stage: usize,
    config: TrainConfig,
    from_rgb: Vec<ConvLayer<T>>,
    /// blocks[k-1] consumes stage-k features and emits stage-(k-1) ones.
    blocks: Vec<DiscBlock<T>>,
    final_conv: ConvLayer<T>,
    readout: Linear<T>,
}

impl<T: Element> Discriminator<T> {
    pub fn new(config: &TrainConfig, rng: &mut Rng) -> Result<Discriminator<T>> {
        let ch0 = config.channels_at(0);
        let from_rgb = vec![ConvLayer::new_dense(3, ch0, 1, 1, 0, rng)?];
        // +1 input channel for the minibatch-stddev feature
        let final_conv = ConvLayer::new(config.conv_mode, ch0 + 1, ch0, 3, 1, 1, rng)?;
        let readout = Linear::new(ch0 * 16, 1, rng)?;
        Ok(Discriminator {
            stage: 0,
            config: config.clone(),
            from_rgb,
            blocks: Vec::new(),
            final_conv,
            readout,
        })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn grow(&mut self, rng: &mut Rng) -> Result<()> {
        let next = self.stage + 1;
        if next > self.config.max_stage {
            return Err(Error::InvalidArgument(format!(
                "discriminator cannot grow past max_stage {}",
                self.config.max_stage
            )));
        }
        let (ch_hi, ch_lo) = (
            self.config.channels_at(next),
            self.config.channels_at(next - 1),
        );
        self.from_rgb.push(ConvLayer::new_dense(3, ch_hi, 1, 1, 0, rng)?);
        self.blocks.push(DiscBlock {
            conv1: ConvLayer::new(self.config.conv_mode, ch_hi, ch_hi, 3, 1, 1, rng)?,
            conv2: ConvLayer::new(self.config.conv_mode, ch_hi, ch_lo, 3, 1, 1, rng)?,
        });
        self.stage = next;
        Ok(())
    }

    /// image (B, 3, R, R) -> per-sample score (B,). During fading the
    /// downsampled input enters through the previous stage's RGB
    /// projection and is blended with the new block's output.
    pub fn forward(&self, image: &Tensor<T>, alpha: f64) -> Result<Tensor<T>> {
        let s = image.shape();
        let r = 4usize << self.stage;
        if s.len() != 4 || s[1] != 3 || s[2] != r || s[3] != r {
            return Err(Error::shape(format!(
                "discriminator at stage {} wants (B, 3, {r}, {r}), got {s:?}",
                self.stage
            )));
        }
        let b = s[0];
        let mut h = if self.stage == 0 {
            self.from_rgb[0].forward(image)?.leaky_relu(LEAKY_SLOPE)
        } else {
            let fine_in = self.from_rgb[self.stage]
                .forward(image)?
                .leaky_relu(LEAKY_SLOPE);
            let fine = apply_disc_block(&self.blocks[self.stage - 1], &fine_in)?;
            if alpha >= 1.0 {
                fine
            } else {
                let coarse = self.from_rgb[self.stage - 1]
                    .forward(&image.avg_pool_2x()?)?
                    .leaky_relu(LEAKY_SLOPE);
                fade_blend(&coarse, &fine, alpha)?
            }
        };
        for k in (1..self.stage).rev() {
            h = apply_disc_block(&self.blocks[k - 1], &h)?;
        }
        let h = minibatch_stddev(&h)?;
        let h = self.final_conv.forward(&h)?.leaky_relu(LEAKY_SLOPE);
        let ch0 = self.config.channels_at(0);
        let flat = h.reshape(&[b, ch0 * 16])?;
        self.readout.forward(&flat)?.reshape(&[b])
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        for (i, rgb) in self.from_rgb.iter_mut().enumerate() {
            rgb.visit_params(&format!("d.from_rgb{i}"), f);
        }
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.conv1.visit_params(&format!("d.block{}.conv1", i + 1), f);
            block.conv2.visit_params(&format!("d.block{}.conv2", i + 1), f);
        }
        self.final_conv.visit_params("d.final_conv", f);
        self.readout.visit_params("d.readout", f);
    }

    pub fn named_params(&mut self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, t| out.push((name, t.clone())));
        out
    }
}

fn apply_disc_block<T: Element>(block: &DiscBlock<T>, h: &Tensor<T>) -> Result<Tensor<T>> {
    let h = block.conv1.forward(h)?.leaky_relu(LEAKY_SLOPE);
    let h = block.conv2.forward(&h)?.leaky_relu(LEAKY_SLOPE);
    h.avg_pool_2x()
}

/// Builds a generator already grown to `state.stage`. Parameters draw
/// from `rng` in the same order as growing one stage at a time, so a
/// freshly built network matches a grown one under the same seed.
pub fn build_generator<T: Element>(
    config: &TrainConfig,
    state: &GrowthState,
    rng: &mut Rng,
) -> Result<Generator<T>> {
    if state.stage > config.max_stage {
        return Err(Error::InvalidArgument(format!(
            "stage {} exceeds max_stage {}",
            state.stage, config.max_stage
        )));
    }
    let mut g = Generator::new(config, rng)?;
    for _ in 0..state.stage {
        g.grow(rng)?;
    }
    Ok(g)
}

pub fn build_discriminator<T: Element>(
    config: &TrainConfig,
    state: &GrowthState,
    rng: &mut Rng,
) -> Result<Discriminator<T>> {
    if state.stage > config.max_stage {
        return Err(Error::InvalidArgument(format!(
            "stage {} exceeds max_stage {}",
            state.stage, config.max_stage
        )));
    }
    let mut d = Discriminator::new(config, rng)?;
    for _ in 0..state.stage {
        d.grow(rng)?;
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn toy_config() -> TrainConfig {
        TrainConfig {
            latent_dim: 8,
            base_channels: 16,
            max_stage: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn generator_shapes_per_stage() {
        let config = toy_config();
        let mut rng = seeded(1);
        let mut latent_rng = seeded(2);
        let z = Tensor::<f64>::randn(&[2, 8], &mut latent_rng).unwrap();

        let g0 = build_generator::<f64>(&config, &GrowthState::start_of(0), &mut rng).unwrap();
        assert_eq!(g0.forward(&z, 1.0).unwrap().shape(), &[2, 3, 4, 4]);

        let g2 = build_generator::<f64>(&config, &GrowthState::start_of(2), &mut rng).unwrap();
        assert_eq!(g2.forward(&z, 1.0).unwrap().shape(), &[2, 3, 16, 16]);
        assert_eq!(g2.forward(&z, 0.3).unwrap().shape(), &[2, 3, 16, 16]);
    }

    #[test]
    fn discriminator_shapes_per_stage() {
        let config = toy_config();
        let mut rng = seeded(3);
        let d = build_discriminator::<f64>(&config, &GrowthState::start_of(2), &mut rng).unwrap();
        let mut img_rng = seeded(4);
        let img = Tensor::<f64>::randn(&[2, 3, 16, 16], &mut img_rng).unwrap();
        let score = d.forward(&img, 1.0).unwrap();
        assert_eq!(score.shape(), &[2]);
        // wrong resolution is a checked error
        let small = Tensor::<f64>::randn(&[2, 3, 8, 8], &mut img_rng).unwrap();
        assert!(d.forward(&small, 1.0).is_err());
    }

    #[test]
    fn stage_overflow_is_error() {
        let config = toy_config();
        let mut rng = seeded(5);
        let state = GrowthState::start_of(4);
        assert!(build_generator::<f64>(&config, &state, &mut rng).is_err());
        let mut g =
            build_generator::<f64>(&config, &GrowthState::start_of(3), &mut rng).unwrap();
        assert!(g.grow(&mut rng).is_err());
    }

    #[test]
    fn growth_preserves_existing_parameters_bitwise() {
        let config = toy_config();
        let mut rng = seeded(7);
        let mut g = build_generator::<f32>(&config, &GrowthState::start_of(1), &mut rng).unwrap();
        let mut d =
            build_discriminator::<f32>(&config, &GrowthState::start_of(1), &mut rng).unwrap();
        let g_before: Vec<(String, Vec<f32>)> = g
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.to_vec()))
            .collect();
        let d_before: Vec<(String, Vec<f32>)> = d
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.to_vec()))
            .collect();
        g.grow(&mut rng).unwrap();
        d.grow(&mut rng).unwrap();
        let g_after = g.named_params();
        let d_after = d.named_params();
        assert!(g_after.len() > g_before.len());
        assert!(d_after.len() > d_before.len());
        for (name, data) in &g_before {
            let (_, t) = g_after.iter().find(|(n, _)| n == name).unwrap();
            assert_eq!(&t.to_vec(), data, "generator param {name} changed");
        }
        for (name, data) in &d_before {
            let (_, t) = d_after.iter().find(|(n, _)| n == name).unwrap();
            assert_eq!(&t.to_vec(), data, "discriminator param {name} changed");
        }
    }

    #[test]
    fn built_equals_grown_under_same_seed() {
        let config = toy_config();
        let mut rng_a = seeded(11);
        let built = build_generator::<f64>(&config, &GrowthState::start_of(2), &mut rng_a)
            .unwrap()
            .named_params();
        let mut rng_b = seeded(11);
        let mut grown = Generator::<f64>::new(&config, &mut rng_b).unwrap();
        grown.grow(&mut rng_b).unwrap();
        grown.grow(&mut rng_b).unwrap();
        let grown = grown.named_params();
        assert_eq!(built.len(), grown.len());
        for ((na, ta), (nb, tb)) in built.iter().zip(&grown) {
            assert_eq!(na, nb);
            assert_eq!(ta.to_vec(), tb.to_vec());
        }
    }

    #[test]
    fn fade_endpoints_match_pure_paths() {
        // alpha=1 output must equal the plain stable forward
        let config = toy_config();
        let mut rng = seeded(13);
        let g = build_generator::<f64>(&config, &GrowthState::start_of(1), &mut rng).unwrap();
        let z = Tensor::<f64>::randn(&[1, 8], &mut seeded(14)).unwrap();
        let stable = g.forward(&z, 1.0).unwrap();
        let nearly = g.forward(&z, 0.999_999).unwrap();
        for (a, b) in stable.data().iter().zip(nearly.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
