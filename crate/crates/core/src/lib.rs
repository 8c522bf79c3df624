//! Privacy-preserving rating collection and recommendation.
//!
//! The crate has two halves. The user side perturbs ratings locally with a
//! bounded Laplace mechanism so that every value leaving the device already
//! carries a differential privacy guarantee and still lies inside the rating
//! scale. The service side never sees a true rating; it fits a matrix
//! factorization model whose residuals are explained by a zero-mean mixture
//! of Gaussians, which absorbs the injected noise instead of treating it as
//! signal.
//!
//! Modules, roughly in dependency order:
//!
//! * [`mechanism`]: rating domain, scale calibration, bounded Laplace
//!   sampling and density, noise distribution tables, privacy auditing.
//! * [`data`]: sparse rating matrices, dataset loaders, subsampling, a
//!   seeded synthetic generator.
//! * [`eval`]: RMSE, top-k confusion counts, F-score, cross-validation folds.
//! * [`mog`]: the mixture-of-Gaussians matrix factorization model and its
//!   EM fit, including the weighted low-rank solver.
//! * [`baseline`]: non-private matrix factorization (SGD) and an imputed
//!   truncated-SVD predictor, for comparison runs.
//! * [`pipeline`]: end-to-end private runs over CV folds plus communication
//!   cost accounting.
//!
//! Every stochastic operation takes an explicit seed or RNG; repeated runs
//! with the same inputs produce identical outputs.

pub mod baseline;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod mechanism;
pub mod model_io;
pub mod mog;
pub mod pipeline;
pub mod seeds;

pub use error::{Error, Result};
