//! Convolution kit against its independent oracles: the naive
//! quadruple-loop convolution and its instrumented multiplication
//! counter.

mod common;

use common::{assert_close, naive_conv2d, naive_dsep_conv2d};
use ganpipe_core::conv::{
    bench_conv, conv2d, dsep_conv2d, mult_count, mult_count_corrected, speedup_ratio,
    ConvGeometry, ConvMode,
};
use ganpipe_core::{grad_check, rng, Tensor};
use proptest::prelude::*;

#[test]
fn conv2d_matches_naive_oracle() {
    let mut rng = rng::seeded(42);
    let input = Tensor::<f64>::randn(&[2, 3, 8, 8], &mut rng).unwrap();
    let kernel = Tensor::<f64>::randn(&[4, 3, 3, 3], &mut rng).unwrap();
    for (stride, pad) in [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)] {
        let g = ConvGeometry::new(8, 3, 3, 4, stride, pad).unwrap();
        let got = conv2d(&input, &kernel, &g).unwrap();
        let want = naive_conv2d(input.data(), 2, 3, 8, 8, kernel.data(), 4, 3, stride, pad);
        assert_eq!(got.shape(), &want.shape);
        assert_close(&got, &want.data, 1e-12, &format!("conv s{stride} p{pad}"));
    }
}

#[test]
fn dsep_conv2d_matches_two_stage_oracle() {
    let mut rng = rng::seeded(7);
    let input = Tensor::<f64>::randn(&[1, 3, 6, 6], &mut rng).unwrap();
    let depthwise = Tensor::<f64>::randn(&[3, 1, 3, 3], &mut rng).unwrap();
    let pointwise = Tensor::<f64>::randn(&[5, 3, 1, 1], &mut rng).unwrap();
    for (stride, pad) in [(1, 0), (1, 1), (2, 1)] {
        let g = ConvGeometry::new(6, 3, 3, 5, stride, pad).unwrap();
        let got = dsep_conv2d(&input, &depthwise, &pointwise, &g).unwrap();
        let want = naive_dsep_conv2d(
            input.data(),
            1,
            3,
            6,
            6,
            depthwise.data(),
            3,
            pointwise.data(),
            5,
            stride,
            pad,
        );
        assert_eq!(got.shape(), &want.shape);
        assert_close(&got, &want.data, 1e-12, &format!("dsep s{stride} p{pad}"));
    }
}

#[test]
fn dsep_equals_composed_dense_convs() {
    // pointwise(depthwise(x)) computed through the dense path: the
    // depthwise stage as a block-diagonal dense kernel.
    let mut rng = rng::seeded(9);
    let (m, n, side) = (3, 5, 6);
    let input = Tensor::<f64>::randn(&[2, m, side, side], &mut rng).unwrap();
    let depthwise = Tensor::<f64>::randn(&[m, 1, 3, 3], &mut rng).unwrap();
    let pointwise = Tensor::<f64>::randn(&[n, m, 1, 1], &mut rng).unwrap();
    let g = ConvGeometry::same(side, 3, m, n).unwrap();

    let mut dense_dw = vec![0.0; m * m * 9];
    for c in 0..m {
        for t in 0..9 {
            dense_dw[(c * m + c) * 9 + t] = depthwise.data()[c * 9 + t];
        }
    }
    let dense_dw = Tensor::from_vec(dense_dw, &[m, m, 3, 3]).unwrap();
    let spatial = input.conv2d(&dense_dw, 1, 1).unwrap();
    let composed = spatial.conv2d(&pointwise, 1, 0).unwrap();

    let got = dsep_conv2d(&input, &depthwise, &pointwise, &g).unwrap();
    assert_close(&got, composed.data(), 1e-12, "dsep vs composed dense");
}

#[test]
fn mult_count_matches_instrumented_counter_on_sampled_geometries() {
    let mut rng = rng::seeded(2024);
    // 20+ same-padded geometries: the as-printed vanilla formula holds
    // exactly when d_f == d_g.
    for trial in 0..24 {
        let d_k = [1usize, 3, 5][trial % 3];
        let d_f = [4usize, 5, 7, 8][(trial / 3) % 4] + d_k;
        let m = 1 + trial % 5;
        let n = 1 + (trial * 7) % 9;
        let g = ConvGeometry::same(d_f, d_k, m, n).unwrap();
        let input = Tensor::<f64>::randn(&[1, m, d_f, d_f], &mut rng).unwrap();
        let dense = Tensor::<f64>::randn(&[n, m, d_k, d_k], &mut rng).unwrap();
        let depthwise = Tensor::<f64>::randn(&[m, 1, d_k, d_k], &mut rng).unwrap();
        let pointwise = Tensor::<f64>::randn(&[n, m, 1, 1], &mut rng).unwrap();

        let counted = naive_conv2d(input.data(), 1, m, d_f, d_f, dense.data(), n, d_k, 1, g.padding);
        assert_eq!(
            counted.mults,
            mult_count(&g, ConvMode::Vanilla),
            "vanilla count, geometry {g:?}"
        );
        let counted = naive_dsep_conv2d(
            input.data(),
            1,
            m,
            d_f,
            d_f,
            depthwise.data(),
            d_k,
            pointwise.data(),
            n,
            1,
            g.padding,
        );
        assert_eq!(
            counted.mults,
            mult_count(&g, ConvMode::Dsep),
            "dsep count, geometry {g:?}"
        );
    }
}

#[test]
fn corrected_vanilla_count_holds_for_strided_geometry() {
    let mut rng = rng::seeded(5);
    for (d_f, d_k, m, n, stride, pad) in
        [(9, 3, 2, 4, 2, 0), (8, 3, 3, 2, 2, 1), (12, 5, 1, 3, 3, 2)]
    {
        let g = ConvGeometry::new(d_f, d_k, m, n, stride, pad).unwrap();
        let input = Tensor::<f64>::randn(&[1, m, d_f, d_f], &mut rng).unwrap();
        let dense = Tensor::<f64>::randn(&[n, m, d_k, d_k], &mut rng).unwrap();
        let counted = naive_conv2d(input.data(), 1, m, d_f, d_f, dense.data(), n, d_k, stride, pad);
        assert_eq!(counted.mults, mult_count_corrected(&g, ConvMode::Vanilla));
        // dsep's formula is already written over the output extent
        let depthwise = Tensor::<f64>::randn(&[m, 1, d_k, d_k], &mut rng).unwrap();
        let pointwise = Tensor::<f64>::randn(&[n, m, 1, 1], &mut rng).unwrap();
        let counted = naive_dsep_conv2d(
            input.data(),
            1,
            m,
            d_f,
            d_f,
            depthwise.data(),
            d_k,
            pointwise.data(),
            n,
            stride,
            pad,
        );
        assert_eq!(counted.mults, mult_count_corrected(&g, ConvMode::Dsep));
        assert_eq!(counted.mults, mult_count(&g, ConvMode::Dsep));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ratio_consistent_with_counts_when_extents_match(
        d_f in 1usize..12,
        half_k in 0usize..3,
        m in 1usize..8,
        n in 1usize..12,
    ) {
        let d_k = 2 * half_k + 1;
        prop_assume!(d_f >= 1);
        let g = ConvGeometry::same(d_f + d_k, d_k, m, n).unwrap();
        let ratio = speedup_ratio(&g).unwrap();
        let by_counts =
            mult_count(&g, ConvMode::Dsep) as f64 / mult_count(&g, ConvMode::Vanilla) as f64;
        prop_assert!((ratio - by_counts).abs() < 1e-12);
    }
}

#[test]
fn conv_gradients_pass_grad_check() {
    let mut rng = rng::seeded(77);
    let input = Tensor::<f64>::randn(&[1, 1, 5, 5], &mut rng).unwrap();
    let kernel = Tensor::<f64>::randn(&[1, 1, 3, 3], &mut rng).unwrap();

    // grads w.r.t. input: loss = sum(conv2d(x, k))
    let k = kernel.clone();
    let report = grad_check(
        move |x| Ok(x.conv2d(&k, 1, 0)?.sum_all()),
        &input,
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");

    // grads w.r.t. kernel
    let x = input.clone();
    let report = grad_check(
        move |k| Ok(x.conv2d(k, 1, 1)?.sum_all()),
        &kernel,
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");

    // depthwise-separable, both stages, nonlinear readout so the kernel
    // gradient is input-dependent
    let input = Tensor::<f64>::randn(&[1, 3, 5, 5], &mut rng).unwrap();
    let depthwise = Tensor::<f64>::randn(&[3, 1, 3, 3], &mut rng).unwrap();
    let pointwise = Tensor::<f64>::randn(&[2, 3, 1, 1], &mut rng).unwrap();
    let g = ConvGeometry::same(5, 3, 3, 2).unwrap();

    let (dw, pw, gg) = (depthwise.clone(), pointwise.clone(), g);
    let report = grad_check(
        move |x| Ok(dsep_conv2d(x, &dw, &pw, &gg)?.square().sum_all()),
        &input,
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");

    let (x, pw) = (input.clone(), pointwise.clone());
    let report = grad_check(
        move |dw| Ok(dsep_conv2d(&x, dw, &pw, &g)?.square().sum_all()),
        &depthwise,
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");

    let (x, dw) = (input.clone(), depthwise.clone());
    let report = grad_check(
        move |pw| Ok(dsep_conv2d(&x, &dw, pw, &g)?.square().sum_all()),
        &pointwise,
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn conv_grad_matches_finite_differences_through_backward() {
    // the spec's named example: loss = sum(conv2d(x, k)) on a random
    // 1x1x5x5 input with a 3x3 kernel, gradients vs central differences
    let mut rng = rng::seeded(123);
    let x = Tensor::<f64>::randn(&[1, 1, 5, 5], &mut rng).unwrap();
    let k = Tensor::<f64>::randn(&[1, 1, 3, 3], &mut rng).unwrap();
    let report = grad_check(|t| Ok(t.conv2d(&k, 1, 0)?.sum_all()), &x, 1e-5).unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn bench_conv_direction_at_training_scale() {
    // K=3, m=n=64, d_f=32: the cost model predicts ~0.127x for dsep.
    // Direction, not magnitude, is the contract.
    let g = ConvGeometry::same(32, 3, 64, 64).unwrap();
    let mut rng = rng::seeded(4);
    let report = bench_conv(&g, 7, &mut rng).unwrap();
    assert!(
        report.dsep_median_s < report.vanilla_median_s,
        "dsep {} vs vanilla {}",
        report.dsep_median_s,
        report.vanilla_median_s
    );
}
