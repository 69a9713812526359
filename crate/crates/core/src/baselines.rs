//! Reference learners and a numerical differentiation helper.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, MultiViewSample};
use crate::error::{HlrError, Result};
use crate::hlr::{fit_with_gram, HlrConfig, HlrModel};
use crate::kernels::{build_gram, cross_gram, GramBlocks, KernelSpec};
use crate::manifold::ManifoldOperator;

/// Kernel ridge regression `h(v) = Σ_j a_j κ(v, x_j)` over the labelled
/// samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub alpha: DVector<f64>,
    pub support: Vec<MultiViewSample>,
    pub kernel: KernelSpec,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn predict(&self, query: &MultiViewSample) -> Result<f64> {
        let k = cross_gram(std::slice::from_ref(&self.kernel), &self.support, query)?;
        Ok(k[0].iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum())
    }
}

/// Solves `(G + 2ℓλ·I)·a = y` on the labelled samples of a single-view
/// dataset. The `2ℓλ` scaling matches the quadratic limit of the Huber
/// learner with no manifold term.
pub fn kernel_ridge(dataset: &Dataset, kernel: &KernelSpec, lambda: f64) -> Result<RidgeModel> {
    if dataset.n_views() != 1 {
        return Err(HlrError::dimension(format!(
            "kernel ridge takes a single view, got {}",
            dataset.n_views()
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(HlrError::domain(format!("lambda must be > 0, got {lambda}")));
    }
    let idx = dataset.labelled_indices();
    if idx.is_empty() {
        return Err(HlrError::domain("kernel ridge needs at least one labelled sample"));
    }
    let support: Vec<MultiViewSample> = idx.iter().map(|&i| dataset.samples()[i].clone()).collect();
    let gram = build_gram(std::slice::from_ref(kernel), &support)?;
    let ell = idx.len();
    let a = gram.view(0) + DMatrix::identity(ell, ell) * (2.0 * ell as f64 * lambda);
    let y = DVector::from_vec(dataset.labelled_values());
    let alpha = a
        .cholesky()
        .ok_or_else(|| HlrError::Solver {
            condition: f64::INFINITY,
            reason: "ridge system is not positive definite".into(),
        })?
        .solve(&y);
    Ok(RidgeModel {
        alpha,
        support,
        kernel: kernel.clone(),
        lambda,
    })
}

/// Quadratic-loss manifold regression: the Huber learner with no refinements.
pub fn quadratic_mr(
    dataset: &Dataset,
    kernels: &[KernelSpec],
    gram: &GramBlocks,
    manifold: &ManifoldOperator,
    config: &HlrConfig,
) -> Result<HlrModel> {
    let cfg = config.clone().with_refinements(0);
    fit_with_gram(dataset, kernels, gram, manifold, &cfg)
}

/// Central differences `(f(x + h·e_k) − f(x − h·e_k)) / 2h` for every `k`.
pub fn finite_difference_gradient<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(HlrError::domain(format!("step must be > 0, got {h}")));
    }
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + h;
        let up = f(&probe)?;
        probe[k] = orig - h;
        let down = f(&probe)?;
        probe[k] = orig;
        grad[k] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}
