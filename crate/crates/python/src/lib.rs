//! Python bindings for the `hlr` crate, importable as `pyhlr`.

use std::collections::BTreeSet;

use hlr::data::{self, Keep, MultiViewSample, Seed};
use hlr::manifold::{assemble_manifold, AdjacencySpec, ViewManifold};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(pyhlr, HlrError, PyException, "Base class of all pyhlr errors.");
create_exception!(pyhlr, ConfigError, HlrError, "Invalid configuration or hyperparameters.");
create_exception!(pyhlr, DataError, HlrError, "Malformed, mismatched or out-of-domain data.");
create_exception!(pyhlr, SolverError, HlrError, "A linear system could not be solved reliably.");

fn to_py(e: hlr::HlrError) -> PyErr {
    let msg = e.to_string();
    match e.exit_code() {
        2 => ConfigError::new_err(msg),
        4 => SolverError::new_err(msg),
        _ => DataError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for hlr::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// A positive semi-definite kernel for one view.
#[pyclass(frozen, skip_from_py_object, name = "Kernel")]
#[derive(Clone)]
struct Kernel(hlr::KernelSpec);

#[pymethods]
impl Kernel {
    #[staticmethod]
    fn linear() -> Self {
        Kernel(hlr::KernelSpec::Linear)
    }

    #[staticmethod]
    #[pyo3(signature = (degree, offset = 1.0))]
    fn polynomial(degree: u32, offset: f64) -> PyResult<Self> {
        let k = hlr::KernelSpec::Polynomial { degree, offset };
        k.validate().py()?;
        Ok(Kernel(k))
    }

    #[staticmethod]
    fn gaussian(bandwidth: f64) -> PyResult<Self> {
        let k = hlr::KernelSpec::Gaussian { bandwidth };
        k.validate().py()?;
        Ok(Kernel(k))
    }

    fn __call__(&self, a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
        hlr::kernels::eval_kernel(&self.0, &a, &b).py()
    }

    fn __repr__(&self) -> String {
        match self.0 {
            hlr::KernelSpec::Linear => "Kernel.linear()".into(),
            hlr::KernelSpec::Polynomial { degree, offset } => format!("Kernel.polynomial({degree}, {offset})"),
            hlr::KernelSpec::Gaussian { bandwidth } => format!("Kernel.gaussian({bandwidth})"),
        }
    }
}

fn specs(kernels: &[PyRef<'_, Kernel>]) -> Vec<hlr::KernelSpec> {
    kernels.iter().map(|k| k.0.clone()).collect()
}

/// Multi-view samples with optional labels.
///
/// `samples[i][alpha]` is the feature vector of view `alpha`; a label of
/// `None` marks the sample as unlabelled.
#[pyclass(frozen, skip_from_py_object, name = "Dataset")]
#[derive(Clone)]
struct Dataset(hlr::Dataset);

#[pymethods]
impl Dataset {
    #[new]
    fn new(samples: Vec<Vec<Vec<f64>>>, labels: Vec<Option<f64>>) -> PyResult<Self> {
        let samples = samples.into_iter().map(MultiViewSample::new).collect();
        Ok(Dataset(hlr::Dataset::from_optional_labels(samples, labels).py()?))
    }

    /// Reads a headerless or headed CSV whose columns are the concatenated views
    /// followed by the label when `labelled` is true.
    #[staticmethod]
    #[pyo3(signature = (path, view_dims, labelled = true))]
    fn load_csv(path: std::path::PathBuf, view_dims: Vec<usize>, labelled: bool) -> PyResult<Self> {
        Ok(Dataset(data::load_csv(path, &view_dims, labelled).py()?))
    }

    fn save_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        data::save_csv(&self.0, path).py()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn n_views(&self) -> usize {
        self.0.n_views()
    }

    #[getter]
    fn n_labelled(&self) -> usize {
        self.0.n_labelled()
    }

    #[getter]
    fn view_dims(&self) -> Vec<usize> {
        self.0.view_dims()
    }

    #[getter]
    fn labels(&self) -> Vec<Option<f64>> {
        self.0.optional_labels()
    }

    #[getter]
    fn samples(&self) -> Vec<Vec<Vec<f64>>> {
        self.0.samples().iter().map(|s| s.views.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.0.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, labelled={}, view_dims={:?})",
            self.0.n(),
            self.0.n_labelled(),
            self.0.view_dims()
        )
    }
}

/// A fitted Huber loss regressor.
#[pyclass(frozen, name = "Model")]
struct Model(hlr::HlrModel);

#[pymethods]
impl Model {
    /// Decision value for one sample given as a list of per-view vectors.
    fn predict(&self, views: Vec<Vec<f64>>) -> PyResult<f64> {
        self.0.predict(&MultiViewSample::new(views)).py()
    }

    fn predict_sign(&self, views: Vec<Vec<f64>>) -> PyResult<f64> {
        self.0.predict_sign(&MultiViewSample::new(views)).py()
    }

    fn predict_many(&self, samples: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<f64>> {
        let samples: Vec<MultiViewSample> = samples.into_iter().map(MultiViewSample::new).collect();
        self.0.predict_many(&samples).py()
    }

    #[getter]
    fn xi_history(&self) -> Vec<f64> {
        self.0.xi_history.clone()
    }

    #[getter]
    fn final_xi(&self) -> f64 {
        self.0.final_xi()
    }

    /// `(sample index, refinement number)` for every dropped label.
    #[getter]
    fn removed(&self) -> Vec<(usize, usize)> {
        self.0.removed.iter().map(|r| (r.index, r.refinement)).collect()
    }

    #[getter]
    fn termination(&self) -> Option<String> {
        self.0
            .termination
            .map(|t| serde_json::to_value(t).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
    }

    #[getter]
    fn view_weights(&self) -> Vec<f64> {
        self.0.view_weights.clone()
    }

    /// Coefficients as `n` rows of `m` entries.
    #[getter]
    fn coefficients(&self) -> Vec<Vec<f64>> {
        self.0.w.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        hlr::model_io::model_to_string(&self.0).py()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Model(hlr::model_io::model_from_str(text).py()?))
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        hlr::model_io::save_model(&self.0, path).py()
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Model(hlr::model_io::load_model(path).py()?))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n={}, views={}, removed={}, final_xi={})",
            self.0.support.len(),
            self.0.n_views(),
            self.0.removed.len(),
            self.0.final_xi()
        )
    }
}

/// Fits the multi-view manifold-regularised Huber regressor.
///
/// `manifold` is `"graph"` (k-nearest-neighbour Laplacian per view) or
/// `"zero"` (no manifold term). `refinements = 0` gives the squared-loss fit.
#[pyfunction]
#[pyo3(signature = (
    dataset, kernels, *, lambda_ = 1e-2, gamma = 1e-3, delta_xi = 0.1, refinements = 50,
    view_weights = None, manifold = "graph", neighbors = 6, bandwidth = None, normalized = true
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    dataset: &Dataset,
    kernels: Vec<PyRef<'_, Kernel>>,
    lambda_: f64,
    gamma: f64,
    delta_xi: f64,
    refinements: usize,
    view_weights: Option<Vec<f64>>,
    manifold: &str,
    neighbors: usize,
    bandwidth: Option<f64>,
    normalized: bool,
) -> PyResult<Model> {
    let ds = &dataset.0;
    let m = ds.n_views();
    let per_view = match manifold {
        "graph" => ViewManifold::Graph(AdjacencySpec { neighbors, bandwidth, normalized }),
        "zero" => ViewManifold::Zero,
        other => return Err(ConfigError::new_err(format!("unknown manifold {other:?}, expected \"graph\" or \"zero\""))),
    };
    let mut config = hlr::HlrConfig::new(lambda_, gamma, delta_xi, refinements, m);
    if let Some(c) = view_weights {
        config = config.with_view_weights(c);
    }
    let specs = specs(&kernels);
    py.detach(|| {
        let op = assemble_manifold(ds, &vec![per_view; m])?;
        hlr::fit(ds, &specs, &op, &config)
    })
    .py()
    .map(Model)
}

/// Single-view kernel ridge regression on the labelled samples.
#[pyclass(frozen, name = "RidgeModel")]
struct RidgeModel(hlr::baselines::RidgeModel);

#[pymethods]
impl RidgeModel {
    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        self.0.predict(&MultiViewSample::single(x)).py()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.0.alpha.iter().copied().collect()
    }
}

#[pyfunction]
#[pyo3(signature = (dataset, kernel, lambda_))]
fn kernel_ridge(dataset: &Dataset, kernel: &Kernel, lambda_: f64) -> PyResult<RidgeModel> {
    Ok(RidgeModel(hlr::baselines::kernel_ridge(&dataset.0, &kernel.0, lambda_).py()?))
}

#[pyfunction]
fn huber(xi: f64, y: f64) -> PyResult<f64> {
    hlr::loss::huber(hlr::HuberThreshold::new_or_infinite(xi).py()?, y).py()
}

#[pyfunction]
fn huber_deriv(xi: f64, y: f64) -> PyResult<f64> {
    hlr::loss::huber_deriv(hlr::HuberThreshold::new_or_infinite(xi).py()?, y).py()
}

#[pyfunction]
fn mae(truth: Vec<f64>, pred: Vec<f64>) -> PyResult<f64> {
    hlr::loss::mae(&truth, &pred).py()
}

#[pyfunction]
fn mse(truth: Vec<f64>, pred: Vec<f64>) -> PyResult<f64> {
    hlr::loss::mse(&truth, &pred).py()
}

#[pyfunction]
fn mre(truth: Vec<f64>, pred: Vec<f64>) -> PyResult<f64> {
    hlr::loss::mre(&truth, &pred).py()
}

#[pyfunction]
fn dice(corrupted: BTreeSet<usize>, removed: BTreeSet<usize>) -> f64 {
    hlr::loss::dice(&corrupted, &removed)
}

#[pyfunction]
#[pyo3(signature = (n, d, beta, noise_std, seed = 0))]
fn gen_linear_uniform(n: usize, d: usize, beta: Vec<f64>, noise_std: f64, seed: u64) -> PyResult<Dataset> {
    Ok(Dataset(data::gen_linear_uniform(n, d, &beta, noise_std, Seed(seed)).py()?))
}

#[pyfunction]
#[pyo3(signature = (d, seed = 0))]
fn random_direction(d: usize, seed: u64) -> Vec<f64> {
    data::random_direction(d, Seed(seed))
}

#[pyfunction]
#[pyo3(signature = (n, direction, seed = 0))]
fn gen_binary_separable(n: usize, direction: Vec<f64>, seed: u64) -> PyResult<Dataset> {
    Ok(Dataset(data::gen_binary_separable(n, &direction, Seed(seed)).py()?))
}

/// Negates `⌊rate·ℓ⌋` labels; returns the corrupted dataset and their indices.
#[pyfunction]
#[pyo3(signature = (dataset, rate, seed = 0))]
fn corrupt_sign_flip(dataset: &Dataset, rate: f64, seed: u64) -> PyResult<(Dataset, BTreeSet<usize>)> {
    let (ds, idx) = data::corrupt_sign_flip(&dataset.0, rate, Seed(seed)).py()?;
    Ok((Dataset(ds), idx))
}

#[pyfunction]
#[pyo3(signature = (dataset, rho_plus, rho_minus, seed = 0))]
fn flip_binary_labels(dataset: &Dataset, rho_plus: f64, rho_minus: f64, seed: u64) -> PyResult<Dataset> {
    Ok(Dataset(data::flip_binary_labels(&dataset.0, rho_plus, rho_minus, Seed(seed)).py()?))
}

#[pyfunction]
#[pyo3(signature = (dataset, fraction, seed = 0))]
fn mask_labels(dataset: &Dataset, fraction: f64, seed: u64) -> PyResult<Dataset> {
    Ok(Dataset(data::mask_labels(&dataset.0, &Keep::Fraction(fraction), Seed(seed)).py()?))
}

/// Runs an experiment from TOML text and returns the report as JSON text.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_toml: &str) -> PyResult<String> {
    let cfg = hlr::experiment::ExperimentConfig::from_toml(config_toml)
        .and_then(|c| c.resolve())
        .py()?;
    py.detach(|| hlr::experiment::run(&cfg).and_then(|r| r.to_json())).py()
}

#[pymodule]
fn pyhlr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("HlrError", py.get_type::<HlrError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("SolverError", py.get_type::<SolverError>())?;
    m.add_class::<Kernel>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_class::<RidgeModel>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_ridge, m)?)?;
    m.add_function(wrap_pyfunction!(huber, m)?)?;
    m.add_function(wrap_pyfunction!(huber_deriv, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(mre, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(gen_linear_uniform, m)?)?;
    m.add_function(wrap_pyfunction!(random_direction, m)?)?;
    m.add_function(wrap_pyfunction!(gen_binary_separable, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt_sign_flip, m)?)?;
    m.add_function(wrap_pyfunction!(flip_binary_labels, m)?)?;
    m.add_function(wrap_pyfunction!(mask_labels, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
