//! Huber loss regression: exact stationarity systems, the adaptive-threshold
//! refinement loop with noisy-label removal, prediction, and the objective /
//! gradient oracles used to certify the solutions.
//!
//! # Layout
//!
//! Coefficients are an `n × m` matrix `w` whose row `j` is `w_j ∈ Rᵐ`. The
//! assembled systems act on the flattened vector with entry `(j, α)` at
//! position `j·m + α`. For sample `i` and view `α` the system row reads
//!
//! ```text
//! 2ℓλ·w_i^α + 2ℓγ·(M^α G^α w^α)_i + [i ∈ L0]·c_α·Σ_{j,β} c_β G^β_ij w_j^β = b_i·c_α
//! ```
//!
//! with `b_i = −ξ` on `L+`, `y_i` on `L0`, `+ξ` on `L−`, and `0` for samples
//! without a retained label. `ℓ` is the number of currently retained labels.
//!
//! # Refinements
//!
//! A refinement lowers the threshold to `ξ̃ = ξ − Δξ`, solves the system whose
//! partition is taken at the previous coefficients, and drops every label the
//! new solution misses by at least `ξ̃`. The retained labels are then re-solved
//! in the quadratic regime (all of them inliers), dropping further labels
//! until every retained error is strictly below `ξ̃`. The resulting
//! coefficients are the exact minimizer of the Huber objective on the
//! retained data at `ξ = max error`, and the threshold sequence is strictly
//! decreasing.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MultiViewSample};
use crate::error::{HlrError, Result};
use crate::kernels::{build_gram, cross_gram, GramBlocks, KernelSpec};
use crate::linalg::{solve_linear, SystemMatrices};
use crate::loss::{huber, huber_deriv, HuberThreshold};
use crate::manifold::ManifoldOperator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HlrConfig {
    /// Tichonov weight λ.
    pub lambda: f64,
    /// Manifold weight γ.
    pub gamma: f64,
    /// Threshold decrement Δξ per refinement.
    pub delta_xi: f64,
    /// Maximum number of refinements T.
    pub refinements: usize,
    /// View weights c.
    pub view_weights: Vec<f64>,
}

impl HlrConfig {
    /// Uniform view weights `c = [1/m, …, 1/m]`.
    pub fn new(lambda: f64, gamma: f64, delta_xi: f64, refinements: usize, n_views: usize) -> Self {
        HlrConfig {
            lambda,
            gamma,
            delta_xi,
            refinements,
            view_weights: vec![1.0 / n_views.max(1) as f64; n_views],
        }
    }

    /// λ = 1e−2, γ = 1e−3, Δξ = 0.1, T = 1.
    pub fn paper_synth(n_views: usize) -> Self {
        Self::new(1e-2, 1e-3, 0.1, 1, n_views)
    }

    /// λ = 1e−3, γ = 1e−4, Δξ = 0.01, T = 3.
    pub fn paper_uci(n_views: usize) -> Self {
        Self::new(1e-3, 1e-4, 0.01, 3, n_views)
    }

    pub fn with_view_weights(mut self, c: Vec<f64>) -> Self {
        self.view_weights = c;
        self
    }

    pub fn with_refinements(mut self, t: usize) -> Self {
        self.refinements = t;
        self
    }

    pub fn validate(&self, n_views: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(HlrError::domain(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(HlrError::domain(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.delta_xi > 0.0 && self.delta_xi.is_finite()) {
            return Err(HlrError::domain(format!("delta_xi must be > 0, got {}", self.delta_xi)));
        }
        if self.view_weights.len() != n_views {
            return Err(HlrError::dimension(format!(
                "{} view weights for {n_views} views",
                self.view_weights.len()
            )));
        }
        if self.view_weights.iter().any(|v| !v.is_finite()) || self.view_weights.iter().all(|&v| v == 0.0) {
            return Err(HlrError::domain("view weights must be finite with at least one nonzero entry"));
        }
        Ok(())
    }
}

/// Labelled indices split by signed error `e_i = h(x_i) − y_i`:
/// `plus` has `e_i ≥ ξ`, `zero` has `|e_i| < ξ`, `minus` has `e_i ≤ −ξ`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartitionSets {
    pub plus: Vec<usize>,
    pub zero: Vec<usize>,
    pub minus: Vec<usize>,
}

impl PartitionSets {
    /// Every retained label an inlier: the `ξ = +∞` regime.
    pub fn all_inliers(dataset: &Dataset) -> Self {
        PartitionSets {
            zero: dataset.labelled_indices(),
            ..Default::default()
        }
    }

    pub fn outliers(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.plus.iter().chain(&self.minus).copied().collect();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HlrState {
    /// `n × m` coefficients.
    pub w: DMatrix<f64>,
    /// Retained labels, indexed by original sample position.
    pub labelled_mask: Vec<bool>,
    pub xi: f64,
    pub tau: usize,
}

impl HlrState {
    pub fn n_labelled(&self) -> usize {
        self.labelled_mask.iter().filter(|&&b| b).count()
    }

    /// `dataset` with only this state's labels retained.
    pub fn retained(&self, dataset: &Dataset) -> Result<Dataset> {
        dataset.with_label_mask(&self.labelled_mask)
    }
}

/// Why the refinement loop stopped before `T` refinements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// `ξ − Δξ ≤ 0`.
    ThresholdExhausted,
    /// No label fits strictly inside the reduced threshold.
    EmptyInlierSet,
    /// Every label would have been removed.
    AllLabelsRemoved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    /// The new state, or the unchanged previous one on termination.
    pub state: HlrState,
    /// Labels dropped by this refinement (empty on termination).
    pub removed: Vec<usize>,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub index: usize,
    pub refinement: usize,
}

/// A fitted regressor `h*(v) = Σ_j cᵀK(v, x_j) w_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HlrModel {
    pub w: DMatrix<f64>,
    pub support: Vec<MultiViewSample>,
    pub view_weights: Vec<f64>,
    pub kernels: Vec<KernelSpec>,
    /// `ξ⁽⁰⁾ … ξ⁽ᵀ'⁾`, one entry per completed stage.
    pub xi_history: Vec<f64>,
    pub removed: Vec<Removal>,
    pub labelled_mask: Vec<bool>,
    pub termination: Option<Termination>,
}

impl HlrModel {
    pub fn n_views(&self) -> usize {
        self.kernels.len()
    }

    pub fn removed_set(&self) -> BTreeSet<usize> {
        self.removed.iter().map(|r| r.index).collect()
    }

    pub fn final_xi(&self) -> f64 {
        *self.xi_history.last().expect("a fitted model has ξ⁽⁰⁾")
    }

    pub fn predict(&self, query: &MultiViewSample) -> Result<f64> {
        let k = cross_gram(&self.kernels, &self.support, query)?;
        decision_value_cross(&k, &self.view_weights, &self.w)
    }

    /// `sign(predict)` with 0 mapped to `+1`.
    pub fn predict_sign(&self, query: &MultiViewSample) -> Result<f64> {
        Ok(sign(self.predict(query)?))
    }

    pub fn predict_many(&self, queries: &[MultiViewSample]) -> Result<Vec<f64>> {
        queries.iter().map(|q| self.predict(q)).collect()
    }
}

pub fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn check_coefficients(w: &DMatrix<f64>, n: usize, c: &[f64]) -> Result<()> {
    if w.nrows() != n || w.ncols() != c.len() {
        return Err(HlrError::dimension(format!(
            "coefficients are {} × {}, expected {n} × {}",
            w.nrows(),
            w.ncols(),
            c.len()
        )));
    }
    Ok(())
}

/// `h(x_i)` for every training sample.
pub fn in_sample_predictions(gram: &GramBlocks, c: &[f64], w: &DMatrix<f64>) -> Result<DVector<f64>> {
    if gram.n_views() != c.len() {
        return Err(HlrError::dimension(format!(
            "{} view weights for {} Gram blocks",
            c.len(),
            gram.n_views()
        )));
    }
    check_coefficients(w, gram.n(), c)?;
    let mut f = DVector::zeros(gram.n());
    for (alpha, &ca) in c.iter().enumerate() {
        if ca != 0.0 {
            f.gemv(ca, gram.view(alpha), &w.column(alpha), 1.0);
        }
    }
    Ok(f)
}

/// `h(x_i) = Σ_j Σ_α c_α κ^α(x_i^α, x_j^α) w_j^α` for training sample `i`.
pub fn decision_value(gram: &GramBlocks, c: &[f64], w: &DMatrix<f64>, i: usize) -> Result<f64> {
    if i >= gram.n() {
        return Err(HlrError::dimension(format!("sample {i} out of range 0..{}", gram.n())));
    }
    check_coefficients(w, gram.n(), c)?;
    Ok(c.iter()
        .enumerate()
        .map(|(alpha, ca)| ca * gram.view(alpha).row(i).dot(&w.column(alpha).transpose()))
        .sum())
}

/// Decision value of a query given its kernel evaluations against the
/// training samples (see [`cross_gram`]).
pub fn decision_value_cross(cross: &[Vec<f64>], c: &[f64], w: &DMatrix<f64>) -> Result<f64> {
    if cross.len() != c.len() {
        return Err(HlrError::dimension(format!(
            "{} cross-kernel views for {} view weights",
            cross.len(),
            c.len()
        )));
    }
    let n = cross.first().map_or(0, Vec::len);
    if cross.iter().any(|k| k.len() != n) {
        return Err(HlrError::dimension("cross-kernel views differ in length"));
    }
    check_coefficients(w, n, c)?;
    let mut total = 0.0;
    for (alpha, (k, ca)) in cross.iter().zip(c).enumerate() {
        let s: f64 = k.iter().enumerate().map(|(j, kv)| kv * w[(j, alpha)]).sum();
        total += ca * s;
    }
    Ok(total)
}

/// Splits the retained labels of `dataset` by signed in-sample error.
/// `xi` may be `+∞`, in which case every label is an inlier.
pub fn compute_partition(
    dataset: &Dataset,
    gram: &GramBlocks,
    c: &[f64],
    w: &DMatrix<f64>,
    xi: f64,
) -> Result<PartitionSets> {
    if !(xi > 0.0) {
        return Err(HlrError::domain(format!("threshold must be > 0, got {xi}")));
    }
    let f = in_sample_predictions(gram, c, w)?;
    let mut sets = PartitionSets::default();
    for i in dataset.labelled_indices() {
        let e = f[i] - dataset.label(i).expect("labelled");
        if e.abs() < xi {
            sets.zero.push(i);
        } else if e > 0.0 {
            sets.plus.push(i);
        } else {
            sets.minus.push(i);
        }
    }
    Ok(sets)
}

/// Largest absolute in-sample error over the retained labels.
pub fn compute_xi(dataset: &Dataset, gram: &GramBlocks, c: &[f64], w: &DMatrix<f64>) -> Result<f64> {
    let labelled = dataset.labelled_indices();
    if labelled.is_empty() {
        return Err(HlrError::domain("no labelled samples left to measure the threshold on"));
    }
    let f = in_sample_predictions(gram, c, w)?;
    Ok(labelled
        .into_iter()
        .map(|i| (f[i] - dataset.label(i).expect("labelled")).abs())
        .fold(0.0, f64::max))
}

fn check_problem(
    dataset: &Dataset,
    gram: &GramBlocks,
    manifold: &ManifoldOperator,
    config: &HlrConfig,
) -> Result<()> {
    let (n, m) = (dataset.n(), dataset.n_views());
    if gram.n() != n || gram.n_views() != m {
        return Err(HlrError::dimension(format!(
            "Gram blocks are {} × {}² for a dataset with {m} views and {n} samples",
            gram.n_views(),
            gram.n()
        )));
    }
    if manifold.n() != n || manifold.n_views() != m {
        return Err(HlrError::dimension(format!(
            "manifold operator has {} views of size {}, expected {m} of size {n}",
            manifold.n_views(),
            manifold.n()
        )));
    }
    config.validate(m)
}

pub(crate) fn flatten(w: &DMatrix<f64>) -> DVector<f64> {
    let (n, m) = w.shape();
    DVector::from_fn(n * m, |k, _| w[(k / m, k % m)])
}

pub(crate) fn unflatten(v: &DVector<f64>, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |i, a| v[i * m + a])
}

/// Caches the per-view products `M^α G^α` shared by every system of a fit.
struct Assembler<'a> {
    gram: &'a GramBlocks,
    config: &'a HlrConfig,
    mg: Vec<DMatrix<f64>>,
}

impl<'a> Assembler<'a> {
    fn new(gram: &'a GramBlocks, manifold: &'a ManifoldOperator, config: &'a HlrConfig) -> Self {
        let mg = if config.gamma == 0.0 {
            Vec::new()
        } else {
            manifold
                .blocks()
                .iter()
                .zip(gram.blocks())
                .map(|(mm, g)| mm * g)
                .collect()
        };
        Assembler { gram, config, mg }
    }

    fn system(&self, dataset: &Dataset, partition: &PartitionSets, xi: f64) -> Result<SystemMatrices> {
        let ell = dataset.n_labelled();
        if ell == 0 {
            return Err(HlrError::domain("the system needs at least one labelled sample"));
        }
        if !(partition.plus.is_empty() && partition.minus.is_empty()) && !xi.is_finite() {
            return Err(HlrError::domain("outlier rows need a finite threshold"));
        }
        let n = self.gram.n();
        let m = self.gram.n_views();
        let c = &self.config.view_weights;
        let ell = ell as f64;
        let ridge = 2.0 * ell * self.config.lambda;
        let smooth = 2.0 * ell * self.config.gamma;

        let mut a = DMatrix::zeros(n * m, n * m);
        for i in 0..n {
            for alpha in 0..m {
                a[(i * m + alpha, i * m + alpha)] = ridge;
            }
        }
        for (alpha, mg) in self.mg.iter().enumerate() {
            for i in 0..n {
                for h in 0..n {
                    a[(i * m + alpha, h * m + alpha)] += smooth * mg[(i, h)];
                }
            }
        }
        for &i in &partition.zero {
            for (alpha, ca) in c.iter().enumerate() {
                for (beta, cb) in c.iter().enumerate() {
                    let g = self.gram.view(beta);
                    let cc = ca * cb;
                    for j in 0..n {
                        a[(i * m + alpha, j * m + beta)] += cc * g[(i, j)];
                    }
                }
            }
        }

        let mut rhs = DVector::zeros(n * m);
        let mut set_row = |i: usize, b: f64| {
            for (alpha, ca) in c.iter().enumerate() {
                rhs[i * m + alpha] = b * ca;
            }
        };
        for &i in &partition.plus {
            set_row(i, -xi);
        }
        for &i in &partition.minus {
            set_row(i, xi);
        }
        for &i in &partition.zero {
            let y = dataset
                .label(i)
                .ok_or_else(|| HlrError::domain(format!("partition lists unlabelled sample {i}")))?;
            set_row(i, y);
        }
        Ok(SystemMatrices { a, rhs })
    }

    fn solve(&self, dataset: &Dataset, partition: &PartitionSets, xi: f64) -> Result<DMatrix<f64>> {
        let sys = self.system(dataset, partition, xi)?;
        let w = solve_linear(&sys)?;
        Ok(unflatten(&w, self.gram.n(), self.gram.n_views()))
    }

    fn initial(&self, dataset: &Dataset) -> Result<HlrState> {
        let w = self.solve(dataset, &PartitionSets::all_inliers(dataset), f64::INFINITY)?;
        let xi = compute_xi(dataset, self.gram, &self.config.view_weights, &w)?;
        Ok(HlrState {
            w,
            labelled_mask: dataset.label_mask().to_vec(),
            xi,
            tau: 0,
        })
    }

    fn refine(&self, state: &HlrState, dataset: &Dataset) -> Result<RefineOutcome> {
        let c = &self.config.view_weights;
        let stop = |reason| {
            Ok(RefineOutcome {
                state: state.clone(),
                removed: Vec::new(),
                termination: Some(reason),
            })
        };
        let xi_t = state.xi - self.config.delta_xi;
        if !(xi_t > 0.0) {
            return stop(Termination::ThresholdExhausted);
        }
        let current = state.retained(dataset)?;

        // Q and b from the previous coefficients at the reduced threshold.
        let before = compute_partition(&current, self.gram, c, &state.w, xi_t)?;
        let w_tilde = self.solve(&current, &before, xi_t)?;
        let after = compute_partition(&current, self.gram, c, &w_tilde, xi_t)?;
        if after.zero.is_empty() {
            return stop(Termination::EmptyInlierSet);
        }

        let mut mask = state.labelled_mask.clone();
        let mut removed = after.outliers();
        for &i in &removed {
            mask[i] = false;
        }
        // Re-solve on the retained labels until all of them sit strictly
        // inside ξ̃; this makes w an exact minimizer on the retained data.
        let (w, retained) = loop {
            let retained = dataset.with_label_mask(&mask)?;
            if retained.n_labelled() == 0 {
                return stop(Termination::AllLabelsRemoved);
            }
            let w = self.solve(&retained, &PartitionSets::all_inliers(&retained), f64::INFINITY)?;
            let offenders = compute_partition(&retained, self.gram, c, &w, xi_t)?.outliers();
            if offenders.is_empty() {
                break (w, retained);
            }
            for i in offenders {
                mask[i] = false;
                removed.push(i);
            }
        };
        removed.sort_unstable();
        let xi = compute_xi(&retained, self.gram, c, &w)?;
        Ok(RefineOutcome {
            state: HlrState {
                w,
                labelled_mask: mask,
                xi,
                tau: state.tau + 1,
            },
            removed,
            termination: None,
        })
    }
}

/// Assembles the stationarity system for a given partition and threshold.
pub fn assemble_system(
    gram: &GramBlocks,
    manifold: &ManifoldOperator,
    config: &HlrConfig,
    dataset: &Dataset,
    partition: &PartitionSets,
    xi: f64,
) -> Result<SystemMatrices> {
    check_problem(dataset, gram, manifold, config)?;
    Assembler::new(gram, manifold, config).system(dataset, partition, xi)
}

/// Quadratic-regime solve (every label an inlier) and `ξ⁽⁰⁾` = its largest
/// in-sample error.
pub fn initial_solve(
    dataset: &Dataset,
    gram: &GramBlocks,
    manifold: &ManifoldOperator,
    config: &HlrConfig,
) -> Result<HlrState> {
    check_problem(dataset, gram, manifold, config)?;
    Assembler::new(gram, manifold, config).initial(dataset)
}

/// One threshold refinement. `dataset` is the original dataset; the state's
/// mask selects the retained labels.
pub fn refine_step(
    state: &HlrState,
    dataset: &Dataset,
    gram: &GramBlocks,
    manifold: &ManifoldOperator,
    config: &HlrConfig,
) -> Result<RefineOutcome> {
    check_problem(dataset, gram, manifold, config)?;
    check_coefficients(&state.w, dataset.n(), &config.view_weights)?;
    if state.labelled_mask.len() != dataset.n() {
        return Err(HlrError::dimension("state mask does not match the dataset"));
    }
    Assembler::new(gram, manifold, config).refine(state, dataset)
}

pub fn fit(
    dataset: &Dataset,
    kernels: &[KernelSpec],
    manifold: &ManifoldOperator,
    config: &HlrConfig,
) -> Result<HlrModel> {
    let gram = build_gram(kernels, dataset.samples())?;
    fit_with_gram(dataset, kernels, &gram, manifold, config)
}

/// [`fit`] with a precomputed Gram structure.
pub fn fit_with_gram(
    dataset: &Dataset,
    kernels: &[KernelSpec],
    gram: &GramBlocks,
    manifold: &ManifoldOperator,
    config: &HlrConfig,
) -> Result<HlrModel> {
    check_problem(dataset, gram, manifold, config)?;
    if kernels.len() != dataset.n_views() {
        return Err(HlrError::dimension(format!(
            "{} kernels for {} views",
            kernels.len(),
            dataset.n_views()
        )));
    }
    let asm = Assembler::new(gram, manifold, config);
    let mut state = asm.initial(dataset)?;
    let mut xi_history = vec![state.xi];
    let mut removed = Vec::new();
    let mut termination = None;
    for _ in 0..config.refinements {
        let out = asm.refine(&state, dataset)?;
        if let Some(reason) = out.termination {
            termination = Some(reason);
            break;
        }
        removed.extend(out.removed.iter().map(|&index| Removal {
            index,
            refinement: out.state.tau,
        }));
        state = out.state;
        xi_history.push(state.xi);
    }
    Ok(HlrModel {
        w: state.w,
        support: dataset.samples().to_vec(),
        view_weights: config.view_weights.clone(),
        kernels: kernels.to_vec(),
        xi_history,
        removed,
        labelled_mask: state.labelled_mask,
        termination,
    })
}

/// Per-view `M^α G^α w^α`, as an `n × m` matrix.
fn manifold_term(gram: &GramBlocks, manifold: &ManifoldOperator, w: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = w.shape();
    let mut out = DMatrix::zeros(n, m);
    for alpha in 0..m {
        let gw = gram.view(alpha) * w.column(alpha);
        out.set_column(alpha, &(manifold.view(alpha) * gw));
    }
    out
}

/// Huber objective on the retained labels of `dataset`:
/// `(1/ℓ)Σ H_ξ(y_i − h(x_i)) + λ Σ_α w^αᵀG^αw^α + γ Σ_α (G^αw^α)ᵀM^α(G^αw^α)`.
/// `xi = +∞` gives the quadratic loss.
pub fn objective_value(
    w: &DMatrix<f64>,
    dataset: &Dataset,
    gram: &GramBlocks,
    manifold: &ManifoldOperator,
    config: &HlrConfig,
    xi: f64,
) -> Result<f64> {
    check_problem(dataset, gram, manifold, config)?;
    let threshold = HuberThreshold::new_or_infinite(xi)?;
    let labelled = dataset.labelled_indices();
    if labelled.is_empty() {
        return Err(HlrError::domain("objective needs at least one labelled sample"));
    }
    let f = in_sample_predictions(gram, &config.view_weights, w)?;
    let mut fidelity = 0.0;
    for &i in &labelled {
        fidelity += huber(threshold, dataset.label(i).expect("labelled") - f[i])?;
    }
    fidelity /= labelled.len() as f64;
    let mut ridge = 0.0;
    let mut smooth = 0.0;
    for alpha in 0..w.ncols() {
        let gw = gram.view(alpha) * w.column(alpha);
        ridge += w.column(alpha).dot(&gw);
        if config.gamma != 0.0 {
            smooth += gw.dot(&(manifold.view(alpha) * &gw));
        }
    }
    Ok(fidelity + config.lambda * ridge + config.gamma * smooth)
}

/// Stationarity residual, flattened like the system unknowns:
/// `ψ_i = −[i labelled]·(1/ℓ)·H'_ξ(y_i − h(x_i))·c + 2λ·w_i + 2γ·(MGw)_i`.
///
/// The gradient of [`objective_value`] is `K·ψ` (see [`objective_gradient`]);
/// `ψ = 0` exactly at the minimizer.
pub fn stationarity_residual(
    w: &DMatrix<f64>,
    dataset: &Dataset,
    gram: &GramBlocks,
    manifold: &ManifoldOperator,
    config: &HlrConfig,
    xi: f64,
) -> Result<DVector<f64>> {
    check_problem(dataset, gram, manifold, config)?;
    let threshold = HuberThreshold::new_or_infinite(xi)?;
    let labelled = dataset.labelled_indices();
    if labelled.is_empty() {
        return Err(HlrError::domain("residual needs at least one labelled sample"));
    }
    let c = &config.view_weights;
    let f = in_sample_predictions(gram, c, w)?;
    let mut psi = 2.0 * config.lambda * w;
    if config.gamma != 0.0 {
        psi += 2.0 * config.gamma * manifold_term(gram, manifold, w);
    }
    let inv_ell = 1.0 / labelled.len() as f64;
    for i in labelled {
        let d = huber_deriv(threshold, dataset.label(i).expect("labelled") - f[i])?;
        for (alpha, ca) in c.iter().enumerate() {
            psi[(i, alpha)] -= inv_ell * d * ca;
        }
    }
    Ok(flatten(&psi))
}

/// Analytic gradient of [`objective_value`] with respect to the flattened
/// coefficients: `∂J/∂w_p^α = Σ_i G^α_pi ψ_i^α`.
pub fn objective_gradient(
    w: &DMatrix<f64>,
    dataset: &Dataset,
    gram: &GramBlocks,
    manifold: &ManifoldOperator,
    config: &HlrConfig,
    xi: f64,
) -> Result<DVector<f64>> {
    let psi = unflatten(
        &stationarity_residual(w, dataset, gram, manifold, config, xi)?,
        w.nrows(),
        w.ncols(),
    );
    let mut grad = DMatrix::zeros(w.nrows(), w.ncols());
    for alpha in 0..w.ncols() {
        grad.set_column(alpha, &(gram.view(alpha) * psi.column(alpha)));
    }
    Ok(flatten(&grad))
}
