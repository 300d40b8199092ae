//! Inception-style score over a pluggable classifier.
//!
//! The score is exp of the mean KL divergence between per-image class
//! predictions and their split marginal, reported as mean +- std across
//! splits. Confident, diverse predictions score high; the analytic range
//! is [1, K].
//!
//! The default classifier is a small convnet trained at construction on
//! self-generated labeled synthetic images. Scores from it are
//! internally comparable across runs of this toolkit but NOT comparable
//! to scores published against large pretrained classifiers.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::imageio;
use crate::nn::{ConvLayer, Linear, LEAKY_SLOPE};
use crate::optim::Adam;
use crate::resample::{resample, KernelKind, ResampleKernel};
use crate::rng::{stream, Stream};
use crate::synth::{render_image, SynthKind};
use crate::tensor::Tensor;

/// exp(mean KL(p(y|x) || p_hat)) per split; returns (mean, std) across
/// splits. Rows must be probability vectors; `splits` must divide the
/// row count.
pub fn inception_score(class_probs: &Tensor<f64>, splits: usize) -> Result<(f64, f64)> {
    let s = class_probs.shape();
    if s.len() != 2 {
        return Err(Error::Metric(format!(
            "class_probs must be (S, K), got {s:?}"
        )));
    }
    let (rows, k) = (s[0], s[1]);
    if splits == 0 || rows % splits != 0 {
        return Err(Error::Metric(format!(
            "{rows} samples not divisible into {splits} splits"
        )));
    }
    let data = class_probs.data();
    for (i, row) in data.chunks(k).enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&p| p < 0.0) {
            return Err(Error::Metric(format!(
                "row {i} is not a probability vector (sum {sum})"
            )));
        }
    }
    let per_split = rows / splits;
    let mut scores = Vec::with_capacity(splits);
    for split in 0..splits {
        let chunk = &data[split * per_split * k..(split + 1) * per_split * k];
        let mut marginal = vec![0.0f64; k];
        for row in chunk.chunks(k) {
            for (m, p) in marginal.iter_mut().zip(row) {
                *m += p;
            }
        }
        for m in &mut marginal {
            *m /= per_split as f64;
        }
        let mut mean_kl = 0.0;
        for row in chunk.chunks(k) {
            let mut kl = 0.0;
            for (&p, &m) in row.iter().zip(&marginal) {
                if p > 0.0 {
                    kl += p * (p.ln() - m.ln());
                }
            }
            mean_kl += kl;
        }
        scores.push((mean_kl / per_split as f64).exp());
    }
    let mean = scores.iter().sum::<f64>() / splits as f64;
    let var = scores.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / splits as f64;
    Ok((mean, var.sqrt()))
}

/// Maps images to per-class probabilities.
pub trait Classifier {
    fn class_count(&self) -> usize;
    /// images: (3, H, W) each, values in [0, 1] -> (S, K) probability rows.
    fn class_probs(&self, images: &[Tensor<f64>]) -> Result<Tensor<f64>>;
}

/// Small convnet over 16x16 inputs, trained at construction on a seeded
/// two-class synthetic set (smooth blobs vs gradient stripes).
pub struct TinyConvClassifier {
    conv1: ConvLayer<f32>,
    conv2: ConvLayer<f32>,
    readout: Linear<f32>,
}

const CLASSIFIER_RES: usize = 16;
const CLASSIFIER_CHANNELS: usize = 16;
const CLASSES: [SynthKind; 2] = [SynthKind::SmoothBlob, SynthKind::GradientStripe];

impl TinyConvClassifier {
    pub fn train_default(seed: u64) -> Result<TinyConvClassifier> {
        let mut rng = stream(seed, Stream::Metrics);
        let ch = CLASSIFIER_CHANNELS;
        let mut conv1 = ConvLayer::<f32>::new_dense(3, ch, 3, 1, 1, &mut rng)?;
        let mut conv2 = ConvLayer::<f32>::new_dense(ch, ch, 3, 1, 1, &mut rng)?;
        let mut readout = Linear::<f32>::new(ch * 16, CLASSES.len(), &mut rng)?;

        // training set: 48 images per class at 16x16
        let per_class = 64;
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (label, kind) in CLASSES.iter().enumerate() {
            for _ in 0..per_class {
                let img = render_image(*kind, CLASSIFIER_RES, &mut rng);
                images.push(imageio::to_signed_f32(&img));
                labels.push(label);
            }
        }

        let mut opt = Adam::<f32>::new(2e-3, 0.9, 0.99, 1e-8);
        let batch = 16;
        for _step in 0..600 {
            let idx: Vec<usize> = (0..batch)
                .map(|_| rng.random_range(0..images.len()))
                .collect();
            let x = crate::data::batch_from(&images, &idx)?;
            let logits = forward_logits(&conv1, &conv2, &readout, &x)?;
            // cross-entropy via log-sum-exp on small logits
            let mut onehot = vec![0.0f32; batch * CLASSES.len()];
            for (row, &i) in idx.iter().enumerate() {
                onehot[row * CLASSES.len() + labels[i]] = 1.0;
            }
            let onehot = Tensor::from_vec(onehot, &[batch, CLASSES.len()])?;
            let picked = logits.mul(&onehot)?.sum_axes(&[1], false)?;
            let lse = logits.exp().sum_axes(&[1], false)?.ln();
            let loss = lse.sub(&picked)?.mean_all();
            let grads = loss.backward()?;
            opt.begin_step();
            let mut visit = |name: String, p: &mut Tensor<f32>| opt.update(&name, p, &grads);
            conv1.visit_params("c1", &mut |n, p| visit(n, p));
            conv2.visit_params("c2", &mut |n, p| visit(n, p));
            readout.visit_params("ro", &mut |n, p| visit(n, p));
        }
        Ok(TinyConvClassifier {
            conv1,
            conv2,
            readout,
        })
    }
}

fn forward_logits(
    conv1: &ConvLayer<f32>,
    conv2: &ConvLayer<f32>,
    readout: &Linear<f32>,
    x: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let b = x.shape()[0];
    let h = conv1.forward(x)?.leaky_relu(LEAKY_SLOPE).avg_pool_2x()?;
    let h = conv2.forward(&h)?.leaky_relu(LEAKY_SLOPE).avg_pool_2x()?;
    let flat = h.reshape(&[b, CLASSIFIER_CHANNELS * 16])?;
    readout.forward(&flat)
}

impl Classifier for TinyConvClassifier {
    fn class_count(&self) -> usize {
        CLASSES.len()
    }

    fn class_probs(&self, images: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        if images.is_empty() {
            return Err(Error::Metric("no images to classify".into()));
        }
        let kernel = ResampleKernel::new(KernelKind::Bicubic);
        let prepared: Vec<Tensor<f32>> = images
            .iter()
            .map(|img| {
                let img = if img.shape()[1] != CLASSIFIER_RES || img.shape()[2] != CLASSIFIER_RES {
                    resample(img, &kernel, (CLASSIFIER_RES, CLASSIFIER_RES))?
                } else {
                    img.clone()
                };
                Ok(imageio::to_signed_f32(&img))
            })
            .collect::<Result<_>>()?;
        let indices: Vec<usize> = (0..prepared.len()).collect();
        let x = crate::data::batch_from(&prepared, &indices)?;
        let logits = forward_logits(&self.conv1, &self.conv2, &self.readout, &x)?;
        let k = CLASSES.len();
        let mut out = vec![0.0f64; prepared.len() * k];
        for (row, chunk) in logits.data().chunks(k).enumerate() {
            let max = chunk.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            let exps: Vec<f64> = chunk.iter().map(|&v| ((v as f64) - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for (j, e) in exps.iter().enumerate() {
                out[row * k + j] = e / sum;
            }
        }
        Tensor::from_vec(out, &[prepared.len(), k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_rows_score_exactly_one() {
        let k = 7;
        let rows = 21;
        let probs = Tensor::full(&[rows, k], 1.0 / k as f64).unwrap();
        let (mean, std) = inception_score(&probs, 3).unwrap();
        assert!((mean - 1.0).abs() < 1e-9);
        assert!(std.abs() < 1e-12);
    }

    #[test]
    fn balanced_one_hot_scores_k() {
        let k = 10;
        let rows = 40;
        let mut data = vec![0.0f64; rows * k];
        for i in 0..rows {
            data[i * k + (i % k)] = 1.0;
        }
        let probs = Tensor::from_vec(data, &[rows, k]).unwrap();
        let (mean, std) = inception_score(&probs, 2).unwrap();
        assert!((mean - 10.0).abs() < 1e-6, "mean {mean}");
        assert!(std < 1e-9);
    }

    #[test]
    fn score_bounds_hold() {
        let mut rng = crate::rng::seeded(6);
        let (rows, k) = (24, 5);
        let mut data = vec![0.0f64; rows * k];
        for row in data.chunks_mut(k) {
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = rng.random::<f64>() + 1e-3;
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let probs = Tensor::from_vec(data, &[rows, k]).unwrap();
        let (mean, _) = inception_score(&probs, 4).unwrap();
        assert!((1.0..=k as f64 + 1e-9).contains(&mean));
    }

    #[test]
    fn unnormalized_rows_are_rejected() {
        let probs = Tensor::from_vec(vec![0.9, 0.3, 0.5, 0.5], &[2, 2]).unwrap();
        assert!(inception_score(&probs, 1).is_err());
        let probs = Tensor::from_vec(vec![0.5, 0.5, 0.5, 0.5], &[2, 2]).unwrap();
        assert!(inception_score(&probs, 3).is_err()); // 2 rows, 3 splits
    }

    #[test]
    fn classifier_separates_its_training_classes() {
        let clf = TinyConvClassifier::train_default(11).unwrap();
        let mut rng = crate::rng::seeded(500);
        let blobs: Vec<Tensor<f64>> = (0..8)
            .map(|_| render_image(SynthKind::SmoothBlob, 16, &mut rng))
            .collect();
        let stripes: Vec<Tensor<f64>> = (0..8)
            .map(|_| render_image(SynthKind::GradientStripe, 16, &mut rng))
            .collect();
        let pb = clf.class_probs(&blobs).unwrap();
        let ps = clf.class_probs(&stripes).unwrap();
        let blob_conf: f64 = pb.data().chunks(2).map(|r| r[0]).sum::<f64>() / 8.0;
        let stripe_conf: f64 = ps.data().chunks(2).map(|r| r[1]).sum::<f64>() / 8.0;
        assert!(
            blob_conf > 0.7 && stripe_conf > 0.7,
            "blob {blob_conf}, stripe {stripe_conf}"
        );
    }
}
