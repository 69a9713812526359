//! Per-view Mercer kernels and the block-diagonal Gram structure.
//!
//! The multi-view kernel is `K(x, z) = diag(κ¹(x¹, z¹), …, κᵐ(xᵐ, zᵐ))`, so the
//! full `m·n × m·n` Gram matrix is never stored: [`GramBlocks`] keeps one
//! `n × n` block per view.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MultiViewSample;
use crate::error::{HlrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    /// `a·b`
    Linear,
    /// `(a·b + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
    /// `exp(−‖a−b‖² / (2·bandwidth²))`
    Gaussian { bandwidth: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, offset } => {
                if degree == 0 {
                    Err(HlrError::domain("polynomial degree must be >= 1"))
                } else if !(offset >= 0.0 && offset.is_finite()) {
                    Err(HlrError::domain(format!("polynomial offset must be >= 0, got {offset}")))
                } else {
                    Ok(())
                }
            }
            KernelSpec::Gaussian { bandwidth } => {
                if bandwidth > 0.0 && bandwidth.is_finite() {
                    Ok(())
                } else {
                    Err(HlrError::domain(format!("gaussian bandwidth must be > 0, got {bandwidth}")))
                }
            }
        }
    }

    #[inline]
    fn apply(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Polynomial { degree, offset } => (dot(a, b) + offset).powi(degree as i32),
            KernelSpec::Gaussian { bandwidth } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn eval_kernel(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(HlrError::dimension(format!(
            "kernel arguments have dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(spec.apply(a, b))
}

/// One symmetric `n × n` Gram block per view.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBlocks {
    per_view: Vec<DMatrix<f64>>,
}

impl GramBlocks {
    pub fn from_blocks(per_view: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = per_view.first().map_or(0, |g| g.nrows());
        if per_view.iter().any(|g| g.nrows() != n || g.ncols() != n) {
            return Err(HlrError::dimension("Gram blocks must all be n × n"));
        }
        Ok(GramBlocks { per_view })
    }

    pub fn n(&self) -> usize {
        self.per_view.first().map_or(0, |g| g.nrows())
    }

    pub fn n_views(&self) -> usize {
        self.per_view.len()
    }

    pub fn view(&self, alpha: usize) -> &DMatrix<f64> {
        &self.per_view[alpha]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.per_view
    }

    /// Smallest eigenvalue of each block.
    pub fn min_eigenvalues(&self) -> Vec<f64> {
        self.per_view.iter().map(min_eigenvalue).collect()
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn check_shapes(specs: &[KernelSpec], samples: &[MultiViewSample]) -> Result<Vec<usize>> {
    for s in specs {
        s.validate()?;
    }
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    let dims = first.view_dims();
    if dims.len() != specs.len() {
        return Err(HlrError::dimension(format!(
            "{} kernel specs for {} views",
            specs.len(),
            dims.len()
        )));
    }
    if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.view_dims() != dims) {
        return Err(HlrError::dimension(format!(
            "sample {i} has view dimensions {:?}, expected {dims:?}",
            s.view_dims()
        )));
    }
    Ok(dims)
}

/// `per_view[α][i][j] = κ^α(x_i^α, x_j^α)`.
pub fn build_gram(specs: &[KernelSpec], samples: &[MultiViewSample]) -> Result<GramBlocks> {
    check_shapes(specs, samples)?;
    let n = samples.len();
    let per_view = specs
        .par_iter()
        .enumerate()
        .map(|(alpha, spec)| {
            let mut g = DMatrix::zeros(n, n);
            for i in 0..n {
                let xi = &samples[i].views[alpha];
                for j in i..n {
                    let v = spec.apply(xi, &samples[j].views[alpha]);
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
            g
        })
        .collect();
    Ok(GramBlocks { per_view })
}

/// Kernel evaluations between `query` and every training sample, one
/// length-`n` vector per view.
pub fn cross_gram(
    specs: &[KernelSpec],
    train: &[MultiViewSample],
    query: &MultiViewSample,
) -> Result<Vec<Vec<f64>>> {
    let dims = check_shapes(specs, train)?;
    if query.n_views() != specs.len() || (!dims.is_empty() && query.view_dims() != dims) {
        return Err(HlrError::dimension(format!(
            "query has view dimensions {:?}, model expects {dims:?}",
            query.view_dims()
        )));
    }
    Ok(specs
        .iter()
        .enumerate()
        .map(|(alpha, spec)| {
            train
                .iter()
                .map(|x| spec.apply(&query.views[alpha], &x.views[alpha]))
                .collect()
        })
        .collect())
}
