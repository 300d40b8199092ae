//! Improved Wasserstein loss with gradient penalty.
//!
//! The penalty needs the gradient of the critic at interpolated samples
//! *inside* the loss graph; `backward` builds gradients as graph tensors,
//! so the penalty term differentiates through to the critic parameters on
//! the training pass.

use rand::Rng as _;

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone)]
pub struct WganGpLoss<T: Element> {
    /// mean D(fake) - mean D(real) + gp_term, on detached fake samples.
    pub d_loss: Tensor<T>,
    /// -mean D(fake), with fake keeping its provenance so it trains the
    /// generator.
    pub g_loss: Tensor<T>,
    /// gp_lambda * mean((|grad D(x_hat)|_2 - 1)^2).
    pub gp_term: Tensor<T>,
}

/// Critic loss pair. `x_hat = eps*real + (1-eps)*fake` with one uniform
/// eps per sample; the per-sample gradient norm is taken over all
/// non-batch axes. A 1e-12 floor inside the square root keeps the norm
/// differentiable at zero.
pub fn wgan_gp_loss<T, D>(
    discriminator: D,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    gp_lambda: f64,
    rng: &mut Rng,
) -> Result<WganGpLoss<T>>
where
    T: Element,
    D: Fn(&Tensor<T>) -> Result<Tensor<T>>,
{
    if real.shape() != fake.shape() {
        return Err(crate::error::Error::shape(format!(
            "real {:?} vs fake {:?}",
            real.shape(),
            fake.shape()
        )));
    }
    let fake_detached = fake.detach();
    let real_score = discriminator(real)?.mean_all();
    let fake_score = discriminator(&fake_detached)?.mean_all();

    let gp_term = if gp_lambda > 0.0 {
        let b = real.shape()[0];
        let mut eps_shape = vec![1usize; real.rank()];
        eps_shape[0] = b;
        let eps_data: Vec<T> = (0..b).map(|_| T::from_f64(rng.random::<f64>())).collect();
        let eps = Tensor::from_vec(eps_data, &eps_shape)?;
        let one_minus = eps.neg().add_scalar(1.0);
        let x_hat = real
            .detach()
            .mul(&eps)?
            .add(&fake_detached.mul(&one_minus)?)?
            .detach_requiring_grad();

        let score_sum = discriminator(&x_hat)?.sum_all();
        let grads = score_sum.backward()?;
        let grad_x = grads
            .get(&x_hat)
            .cloned()
            .unwrap_or(Tensor::zeros(x_hat.shape())?);
        let non_batch: Vec<usize> = (1..x_hat.rank()).collect();
        let norm = grad_x
            .square()
            .sum_axes(&non_batch, false)?
            .add_scalar(1e-12)
            .sqrt();
        norm.add_scalar(-1.0)
            .square()
            .mean_all()
            .mul_scalar(gp_lambda)
    } else {
        Tensor::scalar(T::zero())
    };

    let d_loss = fake_score.sub(&real_score)?.add(&gp_term)?;
    let g_loss = discriminator(fake)?.mean_all().neg();
    Ok(WganGpLoss {
        d_loss,
        g_loss,
        gp_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn constant_critic_pays_full_penalty() {
        // gradient norm 0 everywhere: gp = lambda * (0 - 1)^2 = lambda
        let mut rng = seeded(1);
        let real = Tensor::<f64>::randn(&[3, 2, 2, 2], &mut rng).unwrap();
        let fake = Tensor::<f64>::randn(&[3, 2, 2, 2], &mut rng).unwrap();
        let d = |x: &Tensor<f64>| Tensor::full(&[x.shape()[0]], 0.25);
        let out = wgan_gp_loss(d, &real, &fake, 10.0, &mut rng).unwrap();
        assert!((out.gp_term.item().unwrap() - 10.0).abs() < 1e-4);
    }

    #[test]
    fn linear_sum_critic_has_norm_sqrt_d() {
        // D(x) = sum over the 4 input entries: gradient is all-ones, the
        // per-sample norm is 2, gp = lambda * (2-1)^2 = lambda.
        let mut rng = seeded(2);
        let real = Tensor::<f64>::randn(&[5, 1, 2, 2], &mut rng).unwrap();
        let fake = Tensor::<f64>::randn(&[5, 1, 2, 2], &mut rng).unwrap();
        let d = |x: &Tensor<f64>| x.sum_axes(&[1, 2, 3], false);
        for lambda in [1.0, 10.0] {
            let out = wgan_gp_loss(d, &real, &fake, lambda, &mut rng).unwrap();
            assert!(
                (out.gp_term.item().unwrap() - lambda).abs() < 1e-9,
                "lambda {lambda}"
            );
        }
    }

    #[test]
    fn plug_in_means_without_penalty() {
        // mean D(real) = 1, mean D(fake) = 0, lambda 0:
        // d_loss = -1, g_loss = 0
        let real = Tensor::<f64>::full(&[4, 1, 1, 1], 1.0).unwrap();
        let fake = Tensor::<f64>::zeros(&[4, 1, 1, 1]).unwrap();
        let d = |x: &Tensor<f64>| x.sum_axes(&[1, 2, 3], false);
        let mut rng = seeded(3);
        let out = wgan_gp_loss(d, &real, &fake, 0.0, &mut rng).unwrap();
        assert_eq!(out.d_loss.item().unwrap(), -1.0);
        assert_eq!(out.g_loss.item().unwrap(), 0.0);
        assert_eq!(out.gp_term.item().unwrap(), 0.0);
    }

    #[test]
    fn lambda_zero_linear_critic_is_exact_mean_difference() {
        let mut rng = seeded(4);
        let real = Tensor::<f64>::randn(&[6, 1, 3, 3], &mut rng).unwrap();
        let fake = Tensor::<f64>::randn(&[6, 1, 3, 3], &mut rng).unwrap();
        let d = |x: &Tensor<f64>| Ok(x.sum_axes(&[1, 2, 3], false)?.mul_scalar(0.5));
        let out = wgan_gp_loss(d, &real, &fake, 0.0, &mut rng).unwrap();
        let mean = |t: &Tensor<f64>| {
            let b = t.shape()[0] as f64;
            t.data().iter().sum::<f64>() * 0.5 / b
        };
        let expect = mean(&fake) - mean(&real);
        assert!((out.d_loss.item().unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradient_reaches_critic_parameters() {
        // a critic whose gradient norm depends on its weight: the penalty
        // must contribute a parameter gradient (double backward).
        let w = Tensor::<f64>::var_from_vec(vec![2.0], &[1, 1, 1, 1]).unwrap();
        let real = Tensor::<f64>::full(&[2, 1, 1, 1], 0.5).unwrap();
        let fake = Tensor::<f64>::full(&[2, 1, 1, 1], -0.5).unwrap();
        let wc = w.clone();
        // D(x) = w * x summed per sample; grad wrt x is w, norm |w|
        let d = move |x: &Tensor<f64>| x.mul(&wc)?.sum_axes(&[1, 2, 3], false);
        let mut rng = seeded(5);
        let out = wgan_gp_loss(d, &real, &fake, 10.0, &mut rng).unwrap();
        // gp = 10*(|w|-1)^2, d(gp)/dw = 20*(w-1) = 20 at w=2.
        // the data terms are linear in w with slope mean(fake)-mean(real) = -1
        let grads = out.d_loss.backward().unwrap();
        let gw = grads.get(&w).unwrap().item().unwrap();
        assert!((gw - 19.0).abs() < 1e-6, "gw = {gw}");
    }

    #[test]
    fn wgan_gp_gradcheck_on_two_layer_critic() {
        // full finite-difference validation of the double-backward path
        let mut rng = seeded(6);
        let w1 = Tensor::<f64>::randn(&[4, 3], &mut rng).unwrap();
        let b1 = Tensor::<f64>::randn(&[3], &mut rng).unwrap();
        let w2 = Tensor::<f64>::randn(&[3, 1], &mut rng).unwrap();
        let real = Tensor::<f64>::randn(&[2, 1, 2, 2], &mut rng).unwrap();
        let fake = Tensor::<f64>::randn(&[2, 1, 2, 2], &mut rng).unwrap();

        let loss_of = |w1: &Tensor<f64>| -> Result<Tensor<f64>> {
            let (b1, w2) = (b1.clone(), w2.clone());
            let w1 = w1.clone();
            let d = move |x: &Tensor<f64>| -> Result<Tensor<f64>> {
                let b = x.shape()[0];
                let flat = x.reshape(&[b, 4])?;
                let h = flat.matmul(&w1)?.add(&b1)?.leaky_relu(0.2);
                h.matmul(&w2)?.reshape(&[b])
            };
            let mut rng = seeded(99);
            let out = wgan_gp_loss(d, &real, &fake, 10.0, &mut rng)?;
            Ok(out.d_loss)
        };
        let report = crate::grad_check(loss_of, &w1, 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
