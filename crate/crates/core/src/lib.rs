//! Variance-reduced Hamiltonian Monte Carlo.
//!
//! Samples `p*(x) ∝ exp(−f(x))` for smooth, strongly convex potentials
//! `f = Σ_i f_i` by running underdamped Langevin dynamics discretized exactly
//! with the gradient frozen over each step. The gradient comes from one of
//! six estimators: full, plain minibatch (SG), SAGA, SVRG, SARAH or SARGE.
//!
//! ```no_run
//! use vrhmc::{
//!     run_ensemble, Budget, DynamicsParams, EstimatorConfig, EstimatorKind, Potential,
//!     QuadraticPotential, SamplerConfig,
//! };
//!
//! let model = QuadraticPotential::generate(0, 1000, 5, 10.0, 1.0)?;
//! let config = SamplerConfig::new(
//!     EstimatorConfig::with_default_epoch(EstimatorKind::Svrg, model.n_components(), 1),
//!     DynamicsParams::new(2.0, 0.1, 0.01)?,
//!     Budget::Iterations(100_000),
//! );
//! let ensemble = run_ensemble(&config, &model)?;
//! println!("{:?}", ensemble.records[0].mean_potential());
//! # Ok::<(), vrhmc::Error>(())
//! ```

pub mod dataio;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod integrator;
pub mod metrics;
pub mod potential;
pub mod sampler;

pub use dataio::{parse_libsvm, read_libsvm, split, standardize, Dataset, LabelPolicy, Standardizer};
pub use error::{Error, Result};
pub use estimator::{
    conditional_mean_oracle, mseb_descriptor, q_metric, sample_batch, Draw, Estimator, EstimatorConfig, EstimatorKind,
    MsebDescriptor,
};
pub use integrator::{noise_coefficients, sample_noise, step, ChainState, DynamicsParams, NoiseCoefficients};
pub use metrics::{bures_w2, gradient_mse, potential_mse, test_nll, GaussianSummary, MomentAccumulator};
pub use potential::{LogisticPotential, Potential, QuadraticPotential};
pub use sampler::{
    chain_rng, pooled_moments, run_chain, run_ensemble, wasserstein_tracker, Budget, Diagnostics, Ensemble, RecordRow,
    RunRecord, SamplerConfig,
};
