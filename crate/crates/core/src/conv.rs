//! Convolution geometry, the multiplication-count cost model, and a
//! micro-benchmark comparing vanilla against depthwise-separable mode.
//!
//! The cost model counts scalar multiplications only (no bias adds):
//! a vanilla convolution costs N*K^2*F^2*M, a depthwise-separable one
//! M*G^2*(K^2 + N), and their ratio on same-padded geometry collapses to
//! 1/N + 1/K^2 independent of spatial size.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{conv_out_size, Element, Tensor};

/// The symbols of the cost model in one place: square input extent `d_f`,
/// kernel extent `d_k`, output extent `d_g`, channel counts `m` (in) and
/// `n` (out), plus stride and padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub d_f: usize,
    pub d_k: usize,
    pub d_g: usize,
    pub m: usize,
    pub n: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(
        d_f: usize,
        d_k: usize,
        m: usize,
        n: usize,
        stride: usize,
        padding: usize,
    ) -> Result<ConvGeometry> {
        if d_f == 0 || d_k == 0 || m == 0 || n == 0 {
            return Err(Error::Geometry("all extents must be >= 1".into()));
        }
        let d_g = conv_out_size(d_f, d_k, stride, padding)?;
        Ok(ConvGeometry {
            d_f,
            d_k,
            d_g,
            m,
            n,
            stride,
            padding,
        })
    }

    /// Same-padded stride-1 geometry (`d_g == d_f`); requires odd `d_k`.
    pub fn same(d_f: usize, d_k: usize, m: usize, n: usize) -> Result<ConvGeometry> {
        if d_k % 2 == 0 {
            return Err(Error::Geometry(format!(
                "same-padded geometry needs an odd kernel, got {d_k}"
            )));
        }
        ConvGeometry::new(d_f, d_k, m, n, 1, (d_k - 1) / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    Vanilla,
    Dsep,
}

impl std::fmt::Display for ConvMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConvMode::Vanilla => write!(f, "vanilla"),
            ConvMode::Dsep => write!(f, "dsep"),
        }
    }
}

impl std::str::FromStr for ConvMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<ConvMode> {
        match s {
            "vanilla" => Ok(ConvMode::Vanilla),
            "dsep" => Ok(ConvMode::Dsep),
            other => Err(Error::Config(format!(
                "unknown conv mode {other:?} (expected vanilla or dsep)"
            ))),
        }
    }
}

/// Multiplication count for one convolution over a single image.
///
/// Vanilla counts `n * d_k^2 * d_f^2 * m`, written with the *input*
/// extent; it matches an instrumented dense convolution only when
/// `d_g == d_f`. See [`mult_count_corrected`] for the spatially-corrected
/// variant that holds for strided or valid-padded geometry. Depthwise-
/// separable counts `m * d_g^2 * (d_k^2 + n)`, which is exact for any
/// geometry because both of its stages run over the output extent.
pub fn mult_count(geometry: &ConvGeometry, mode: ConvMode) -> u64 {
    let g = geometry;
    match mode {
        ConvMode::Vanilla => (g.n * g.d_k * g.d_k * g.d_f * g.d_f * g.m) as u64,
        ConvMode::Dsep => (g.m * g.d_g * g.d_g * (g.d_k * g.d_k + g.n)) as u64,
    }
}

/// Multiplication count with the vanilla formula evaluated over the
/// output extent, exact for every geometry.
pub fn mult_count_corrected(geometry: &ConvGeometry, mode: ConvMode) -> u64 {
    let g = geometry;
    match mode {
        ConvMode::Vanilla => (g.n * g.d_k * g.d_k * g.d_g * g.d_g * g.m) as u64,
        ConvMode::Dsep => mult_count(geometry, ConvMode::Dsep),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub vanilla_mults: u64,
    pub dsep_mults: u64,
    pub ratio: f64,
}

pub fn cost_breakdown(geometry: &ConvGeometry) -> CostBreakdown {
    let vanilla = mult_count(geometry, ConvMode::Vanilla);
    let dsep = mult_count(geometry, ConvMode::Dsep);
    CostBreakdown {
        vanilla_mults: vanilla,
        dsep_mults: dsep,
        ratio: dsep as f64 / vanilla as f64,
    }
}

/// 1/n + 1/d_k^2: the depthwise-separable-to-vanilla multiplication ratio.
/// Defined only for `d_f == d_g`; the division that cancels the spatial
/// terms assumes same-padded geometry.
pub fn speedup_ratio(geometry: &ConvGeometry) -> Result<f64> {
    if geometry.d_f != geometry.d_g {
        return Err(Error::Geometry(format!(
            "speedup ratio requires d_f == d_g (same-padded, stride 1); got d_f={} d_g={}. \
             The spatial terms only cancel when input and output extents match.",
            geometry.d_f, geometry.d_g
        )));
    }
    Ok(1.0 / geometry.n as f64 + 1.0 / (geometry.d_k * geometry.d_k) as f64)
}

/// Dense cross-correlation with geometry validation.
/// Input (B, M, H, W), kernel (N, M, K, K), output (B, N, d_g, d_g).
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    geometry: &ConvGeometry,
) -> Result<Tensor<T>> {
    check_input(input, geometry)?;
    let ks = kernel.shape();
    if ks != [geometry.n, geometry.m, geometry.d_k, geometry.d_k] {
        return Err(Error::shape(format!(
            "kernel shape {ks:?} does not match geometry (n={}, m={}, k={})",
            geometry.n, geometry.m, geometry.d_k
        )));
    }
    input.conv2d(kernel, geometry.stride, geometry.padding)
}

/// Depthwise stage followed by the 1x1 pointwise stage. The depthwise
/// stage carries the stride and padding; pointwise is stride-1 unpadded.
/// depthwise_kernel (M, 1, K, K), pointwise_kernel (N, M, 1, 1).
pub fn dsep_conv2d<T: Element>(
    input: &Tensor<T>,
    depthwise_kernel: &Tensor<T>,
    pointwise_kernel: &Tensor<T>,
    geometry: &ConvGeometry,
) -> Result<Tensor<T>> {
    check_input(input, geometry)?;
    let ds = depthwise_kernel.shape();
    if ds != [geometry.m, 1, geometry.d_k, geometry.d_k] {
        return Err(Error::shape(format!(
            "depthwise kernel shape {ds:?} does not match geometry (m={}, k={})",
            geometry.m, geometry.d_k
        )));
    }
    let ps = pointwise_kernel.shape();
    if ps != [geometry.n, geometry.m, 1, 1] {
        return Err(Error::shape(format!(
            "pointwise kernel shape {ps:?} does not match geometry (n={}, m={})",
            geometry.n, geometry.m
        )));
    }
    let spatial = input.conv2d_depthwise(depthwise_kernel, geometry.stride, geometry.padding)?;
    spatial.conv2d(pointwise_kernel, 1, 0)
}

fn check_input<T: Element>(input: &Tensor<T>, geometry: &ConvGeometry) -> Result<()> {
    let s = input.shape();
    if s.len() != 4 || s[1] != geometry.m || s[2] != geometry.d_f || s[3] != geometry.d_f {
        return Err(Error::shape(format!(
            "input shape {s:?} does not match geometry (m={}, d_f={})",
            geometry.m, geometry.d_f
        )));
    }
    Ok(())
}

/// Median wall-clock per forward call for both conv modes on identical
/// random inputs.
#[derive(Debug, Clone)]
pub struct ConvBenchReport {
    pub geometry: ConvGeometry,
    pub repeats: usize,
    pub vanilla_median_s: f64,
    pub dsep_median_s: f64,
}

/// Times both modes over `repeats` forward calls (plus untimed warm-up).
pub fn bench_conv(geometry: &ConvGeometry, repeats: usize, rng: &mut Rng) -> Result<ConvBenchReport> {
    if repeats < 3 {
        return Err(Error::InvalidArgument(
            "bench_conv needs at least 3 repeats".into(),
        ));
    }
    let g = geometry;
    let input = Tensor::<f32>::randn(&[1, g.m, g.d_f, g.d_f], rng)?;
    let dense = Tensor::<f32>::randn(&[g.n, g.m, g.d_k, g.d_k], rng)?;
    let depthwise = Tensor::<f32>::randn(&[g.m, 1, g.d_k, g.d_k], rng)?;
    let pointwise = Tensor::<f32>::randn(&[g.n, g.m, 1, 1], rng)?;

    let vanilla_median_s = median_time(repeats, || {
        conv2d(&input, &dense, g).map(|t| t.data()[0])
    })?;
    let dsep_median_s = median_time(repeats, || {
        dsep_conv2d(&input, &depthwise, &pointwise, g).map(|t| t.data()[0])
    })?;
    Ok(ConvBenchReport {
        geometry: *geometry,
        repeats,
        vanilla_median_s,
        dsep_median_s,
    })
}

fn median_time<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    for _ in 0..2 {
        std::hint::black_box(f()?);
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        std::hint::black_box(f()?);
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(|a, b| a.total_cmp(b));
    Ok(median_of_sorted(&times))
}

pub(crate) fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_invariant_holds() {
        let g = ConvGeometry::new(8, 3, 4, 6, 2, 1).unwrap();
        assert_eq!(g.d_g, (8 + 2 - 3) / 2 + 1);
        let same = ConvGeometry::same(8, 3, 4, 6).unwrap();
        assert_eq!(same.d_g, 8);
    }

    #[test]
    fn mult_count_spot_values() {
        // m=3, n=8, k=3, d_f=d_g=4
        let g = ConvGeometry::same(4, 3, 3, 8).unwrap();
        assert_eq!(mult_count(&g, ConvMode::Vanilla), 3456);
        assert_eq!(mult_count(&g, ConvMode::Dsep), 816);

        // smallest geometry: the split doubles the work
        let g = ConvGeometry::same(1, 1, 1, 1).unwrap();
        assert_eq!(mult_count(&g, ConvMode::Vanilla), 1);
        assert_eq!(mult_count(&g, ConvMode::Dsep), 2);

        // m=16, n=32, k=3, d_f=d_g=8
        let g = ConvGeometry::same(8, 3, 16, 32).unwrap();
        assert_eq!(mult_count(&g, ConvMode::Vanilla), 294_912);
        assert_eq!(mult_count(&g, ConvMode::Dsep), 41_984);
    }

    #[test]
    fn speedup_ratio_spot_values() {
        let g = ConvGeometry::same(4, 3, 3, 8).unwrap();
        let r = speedup_ratio(&g).unwrap();
        assert!((r - 17.0 / 72.0).abs() < 1e-15);
        let b = cost_breakdown(&g);
        assert!((r - b.ratio).abs() < 1e-12);

        let g = ConvGeometry::same(1, 1, 1, 1).unwrap();
        assert_eq!(speedup_ratio(&g).unwrap(), 2.0);

        // k=3, n large: ratio approaches 1/9
        let g = ConvGeometry::same(4, 3, 3, 1_000_000).unwrap();
        assert!((speedup_ratio(&g).unwrap() - 1.0 / 9.0).abs() < 1e-5);
    }

    #[test]
    fn speedup_ratio_rejects_mismatched_extents() {
        let g = ConvGeometry::new(8, 3, 4, 6, 2, 1).unwrap();
        let err = speedup_ratio(&g).unwrap_err();
        assert!(err.to_string().contains("d_f == d_g"));
    }

    #[test]
    fn identity_kernel_passthrough() {
        let input = Tensor::<f64>::from_vec(vec![5.0], &[1, 1, 1, 1]).unwrap();
        let kernel = Tensor::<f64>::from_vec(vec![1.0], &[1, 1, 1, 1]).unwrap();
        let g = ConvGeometry::new(1, 1, 1, 1, 1, 0).unwrap();
        let out = conv2d(&input, &kernel, &g).unwrap();
        assert_eq!(out.to_vec(), vec![5.0]);
    }

    #[test]
    fn all_ones_window_sums() {
        let input = Tensor::<f64>::ones(&[1, 1, 3, 3]).unwrap();
        let kernel = Tensor::<f64>::ones(&[1, 1, 2, 2]).unwrap();
        let g = ConvGeometry::new(3, 2, 1, 1, 1, 0).unwrap();
        let out = conv2d(&input, &kernel, &g).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert_eq!(out.to_vec(), vec![4.0; 4]);
    }

    #[test]
    fn dsep_identity_factorization() {
        // delta depthwise kernels + identity pointwise mixing leave the
        // input unchanged on same-padded geometry.
        let mut rng = crate::rng::seeded(3);
        let c = 3;
        let input = Tensor::<f64>::randn(&[1, c, 6, 6], &mut rng).unwrap();
        let mut dw = vec![0.0; c * 9];
        for ch in 0..c {
            dw[ch * 9 + 4] = 1.0; // center tap
        }
        let depthwise = Tensor::from_vec(dw, &[c, 1, 3, 3]).unwrap();
        let mut pw = vec![0.0; c * c];
        for ch in 0..c {
            pw[ch * c + ch] = 1.0;
        }
        let pointwise = Tensor::from_vec(pw, &[c, c, 1, 1]).unwrap();
        let g = ConvGeometry::same(6, 3, c, c).unwrap();
        let out = dsep_conv2d(&input, &depthwise, &pointwise, &g).unwrap();
        for (a, b) in out.data().iter().zip(input.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_channel_dsep_collapses_to_dense() {
        let mut rng = crate::rng::seeded(11);
        let input = Tensor::<f64>::randn(&[1, 1, 5, 5], &mut rng).unwrap();
        let depthwise = Tensor::<f64>::randn(&[1, 1, 3, 3], &mut rng).unwrap();
        let scale = 1.7;
        let pointwise = Tensor::from_vec(vec![scale], &[1, 1, 1, 1]).unwrap();
        let g = ConvGeometry::new(5, 3, 1, 1, 1, 0).unwrap();
        let dsep = dsep_conv2d(&input, &depthwise, &pointwise, &g).unwrap();
        let dense_kernel =
            Tensor::from_vec(depthwise.data().iter().map(|v| v * scale).collect(), &[1, 1, 3, 3])
                .unwrap();
        let dense = conv2d(&input, &dense_kernel, &g).unwrap();
        for (a, b) in dsep.data().iter().zip(dense.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bench_reports_two_medians() {
        let g = ConvGeometry::same(8, 3, 4, 4).unwrap();
        let mut rng = crate::rng::seeded(1);
        let report = bench_conv(&g, 10, &mut rng).unwrap();
        assert!(report.vanilla_median_s > 0.0);
        assert!(report.dsep_median_s > 0.0);
        assert_eq!(report.geometry, g);
        assert_eq!(report.repeats, 10);
        assert!(bench_conv(&g, 2, &mut rng).is_err());
    }
}
