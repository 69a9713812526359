//! Multi-view manifold regularized regression with a Huber loss whose
//! threshold is lowered adaptively, dropping labels that stay outside it.
//!
//! The entry point is [`hlr::fit`]. [`experiment`] runs the end-to-end
//! protocols that the command-line tool exposes.

pub mod baselines;
pub mod data;
pub mod error;
pub mod experiment;
pub mod hlr;
pub mod kernels;
pub mod linalg;
pub mod loss;
pub mod manifold;
pub mod model_io;

pub use data::{Dataset, MultiViewSample, Seed};
pub use error::{HlrError, Result};
pub use hlr::{fit, HlrConfig, HlrModel};
pub use kernels::KernelSpec;
pub use loss::HuberThreshold;
pub use manifold::{ManifoldOperator, ViewManifold};
