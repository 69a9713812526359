#![allow(dead_code)]

use hlr::data::{Dataset, MultiViewSample};
use hlr::hlr::HlrConfig;
use hlr::kernels::{build_gram, GramBlocks, KernelSpec};
use hlr::manifold::ManifoldOperator;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Problem {
    pub dataset: Dataset,
    pub kernels: Vec<KernelSpec>,
    pub gram: GramBlocks,
    pub manifold: ManifoldOperator,
    pub config: HlrConfig,
}

pub fn random_kernel(rng: &mut ChaCha8Rng) -> KernelSpec {
    match rng.random_range(0..3) {
        0 => KernelSpec::Linear,
        1 => KernelSpec::Polynomial {
            degree: rng.random_range(2..=3),
            offset: rng.random_range(0.5..1.5),
        },
        _ => KernelSpec::Gaussian {
            bandwidth: rng.random_range(0.5..2.0),
        },
    }
}

/// `BBᵀ / n` with a random Gaussian `B`.
pub fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let m = &b * b.transpose() / n as f64;
    (&m + m.transpose()) * 0.5
}

pub struct ProblemShape {
    pub max_n: usize,
    pub max_views: usize,
    pub outlier_rate: f64,
}

/// Random multi-view instance: smooth targets plus gross outliers, a random
/// unlabelled tail and a random PSD manifold operator per view.
pub fn random_problem(rng: &mut ChaCha8Rng, shape: &ProblemShape) -> Problem {
    let n = rng.random_range(4..=shape.max_n);
    let m = rng.random_range(1..=shape.max_views);
    let dims: Vec<usize> = (0..m).map(|_| rng.random_range(1..=4)).collect();
    let samples: Vec<MultiViewSample> = (0..n)
        .map(|_| {
            MultiViewSample::new(
                dims.iter()
                    .map(|&d| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect(),
            )
        })
        .collect();
    let ell = rng.random_range((n / 2).max(2)..=n);
    let labels: Vec<f64> = samples[..ell]
        .iter()
        .map(|s| {
            let clean: f64 = s.views.iter().flatten().map(|v| v.sin()).sum();
            if rng.random_bool(shape.outlier_rate) {
                clean + rng.random_range(2.0..5.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
            } else {
                clean + 0.05 * rng.random_range(-1.0..1.0)
            }
        })
        .collect();
    let dataset = Dataset::new(samples, labels).unwrap();
    let kernels: Vec<KernelSpec> = (0..m).map(|_| random_kernel(rng)).collect();
    let gram = build_gram(&kernels, dataset.samples()).unwrap();
    let manifold = ManifoldOperator::from_matrices((0..m).map(|_| random_psd(n, rng)).collect()).unwrap();
    let mut c: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = c.iter().sum();
    c.iter_mut().for_each(|v| *v /= total);
    let config = HlrConfig::new(
        10f64.powf(rng.random_range(-3.0..-1.0)),
        if rng.random_bool(0.2) { 0.0 } else { 10f64.powf(rng.random_range(-4.0..-2.0)) },
        rng.random_range(0.02..0.3),
        rng.random_range(1..=5),
        m,
    )
    .with_view_weights(c);
    Problem {
        dataset,
        kernels,
        gram,
        manifold,
        config,
    }
}

/// Largest absolute in-sample error over the retained labels of `ds`.
pub fn max_retained_error(p: &Problem, ds: &Dataset, w: &DMatrix<f64>) -> f64 {
    let f = hlr::hlr::in_sample_predictions(&p.gram, &p.config.view_weights, w).unwrap();
    ds.labelled_indices()
        .into_iter()
        .map(|i| (f[i] - ds.label(i).unwrap()).abs())
        .fold(0.0, f64::max)
}
