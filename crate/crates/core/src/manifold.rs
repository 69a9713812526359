//! Per-view manifold regularization operators `M^α`: graph Laplacians of
//! k-nearest-neighbour Gaussian similarity graphs, or user supplied matrices.
//!
//! The quadratic form of the unnormalized Laplacian is
//! `vᵀLv = ½ Σ_ij w_ij (v_i − v_j)²`; the ½ is absorbed into γ.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{HlrError, Result};

pub const DEFAULT_NEIGHBORS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjacencySpec {
    pub neighbors: usize,
    /// Gaussian edge bandwidth; `None` uses the median pairwise distance of the view.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default = "default_normalized")]
    pub normalized: bool,
}

fn default_normalized() -> bool {
    true
}

impl Default for AdjacencySpec {
    fn default() -> Self {
        AdjacencySpec {
            neighbors: DEFAULT_NEIGHBORS,
            bandwidth: None,
            normalized: true,
        }
    }
}

/// One symmetric positive semi-definite `n × n` matrix per view.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldOperator {
    per_view: Vec<DMatrix<f64>>,
}

impl ManifoldOperator {
    /// All-zero operators: disables the manifold term regardless of γ.
    pub fn zeros(n: usize, m: usize) -> Self {
        ManifoldOperator {
            per_view: vec![DMatrix::zeros(n, n); m],
        }
    }

    /// Validates symmetry and positive semi-definiteness of every block.
    pub fn from_matrices(per_view: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = per_view.first().map_or(0, |m| m.nrows());
        for (alpha, m) in per_view.iter().enumerate() {
            validate_view(alpha, m, n, true)?;
        }
        Ok(ManifoldOperator { per_view })
    }

    pub fn n_views(&self) -> usize {
        self.per_view.len()
    }

    pub fn n(&self) -> usize {
        self.per_view.first().map_or(0, |m| m.nrows())
    }

    pub fn view(&self, alpha: usize) -> &DMatrix<f64> {
        &self.per_view[alpha]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.per_view
    }
}

fn validate_view(alpha: usize, m: &DMatrix<f64>, n: usize, check_psd: bool) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(HlrError::dimension(format!(
            "manifold view {alpha}: expected {n} × {n}, got {} × {}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(HlrError::domain(format!("manifold view {alpha}: non-finite entry")));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(HlrError::domain(format!(
            "manifold view {alpha}: matrix is not symmetric (max |M − Mᵀ| = {asym:.3e})"
        )));
    }
    if !check_psd {
        return Ok(());
    }
    let eigen = m.clone().symmetric_eigenvalues();
    let min_ev = eigen.min();
    if min_ev < -1e-8 * eigen.amax().max(f64::MIN_POSITIVE) {
        return Err(HlrError::domain(format!(
            "manifold view {alpha}: matrix is not positive semi-definite (min eigenvalue {min_ev:.3e})"
        )));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of the pairwise Euclidean distances, falling back to 1 when it is 0.
pub fn median_pairwise_distance(points: &[&[f64]]) -> f64 {
    let n = points.len();
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| sq_dist(points[i], points[j]).sqrt())
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, &mut median, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Symmetric k-NN graph with Gaussian weights `exp(−‖x_i−x_j‖²/(2σ²))`.
///
/// `j` is linked to `i` when either is among the other's `k` nearest
/// neighbours (ties broken by index). The diagonal is zero.
pub fn knn_adjacency(points: &[&[f64]], spec: &AdjacencySpec) -> Result<DMatrix<f64>> {
    let n = points.len();
    if n < 2 {
        return Err(HlrError::domain("adjacency needs at least two points"));
    }
    let k = spec.neighbors;
    if k == 0 || k >= n {
        return Err(HlrError::domain(format!("neighbors must satisfy 1 <= k < n, got k={k}, n={n}")));
    }
    let bandwidth = match spec.bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(b) => return Err(HlrError::domain(format!("adjacency bandwidth must be > 0, got {b}"))),
        None => median_pairwise_distance(points),
    };
    let denom = 2.0 * bandwidth * bandwidth;
    let neighbours: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, sq_dist(points[i], points[j])))
                .collect();
            cand.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            cand.truncate(k);
            cand
        })
        .collect();
    let mut w = DMatrix::zeros(n, n);
    for (i, list) in neighbours.iter().enumerate() {
        for &(j, d2) in list {
            let v = (-d2 / denom).exp();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(w)
}

/// `D − W`, or `I − D^{-1/2} W D^{-1/2}` when `normalized`.
///
/// Isolated nodes (zero degree) get all-zero rows and columns in the
/// normalized form.
pub fn laplacian(w: &DMatrix<f64>, normalized: bool) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(HlrError::dimension("adjacency must be square"));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(HlrError::domain("adjacency entries must be finite and nonnegative"));
    }
    if (w - w.transpose()).amax() > 1e-12 * w.amax().max(1.0) {
        return Err(HlrError::domain("adjacency must be symmetric"));
    }
    if (0..n).any(|i| w[(i, i)] != 0.0) {
        return Err(HlrError::domain("adjacency must have a zero diagonal"));
    }
    let degree: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let mut l = DMatrix::zeros(n, n);
    if normalized {
        let inv_sqrt: Vec<f64> = degree
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        for i in 0..n {
            for j in 0..n {
                l[(i, j)] = -w[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
            }
            if degree[i] > 0.0 {
                l[(i, i)] += 1.0;
            }
        }
    } else {
        for i in 0..n {
            for j in 0..n {
                l[(i, j)] = -w[(i, j)];
            }
            l[(i, i)] += degree[i];
        }
    }
    Ok(l)
}

/// How the operator of a single view is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum ViewManifold {
    Graph(AdjacencySpec),
    Explicit(DMatrix<f64>),
    Zero,
}

/// Builds (or validates) one operator per view of `dataset`.
///
/// Graph neighbourhood sizes larger than `n − 1` are clamped; a single-sample
/// dataset gets a zero operator.
pub fn assemble_manifold(dataset: &Dataset, per_view: &[ViewManifold]) -> Result<ManifoldOperator> {
    let m = dataset.n_views();
    let n = dataset.n();
    if per_view.len() != m {
        return Err(HlrError::dimension(format!(
            "{} manifold specs for {m} views",
            per_view.len()
        )));
    }
    let blocks = per_view
        .par_iter()
        .enumerate()
        .map(|(alpha, spec)| -> Result<DMatrix<f64>> {
            let block = match spec {
                ViewManifold::Zero => DMatrix::zeros(n, n),
                ViewManifold::Explicit(mat) => mat.clone(),
                ViewManifold::Graph(_) if n < 2 => DMatrix::zeros(n, n),
                ViewManifold::Graph(adj) => {
                    let pts: Vec<&[f64]> =
                        dataset.samples().iter().map(|s| s.views[alpha].as_slice()).collect();
                    let spec = AdjacencySpec {
                        neighbors: adj.neighbors.min(n - 1),
                        ..*adj
                    };
                    laplacian(&knn_adjacency(&pts, &spec)?, spec.normalized)?
                }
            };
            // graph Laplacians are PSD by construction; only user matrices pay for an eigensolve
            validate_view(alpha, &block, n, matches!(spec, ViewManifold::Explicit(_)))?;
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ManifoldOperator { per_view: blocks })
}

/// Reads a dense, header-free, comma-separated square matrix.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| HlrError::Parse {
            row: k + 1,
            column: 0,
            message: e.to_string(),
        })?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<f64>().map_err(|_| HlrError::Parse {
                    row: k + 1,
                    column: c + 1,
                    message: format!("cannot parse {f:?} as a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(HlrError::dimension(format!("matrix file is not square ({n} rows)")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_matrix_csv(std::io::BufReader::new(file))
}
