//! Unbiased minimum-variance linear filters for scalar discrete-time systems
//! driven by fractional Gaussian noise.
//!
//! The crate evaluates the error covariance of a gain sequence two
//! independent ways, differentiates the weighted cost with respect to the
//! gain, minimizes it, and checks the result by simulation.

pub mod covariance;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod noise;
pub mod optimizer;
pub mod variation;

pub use covariance::{
    cost, covariance_report, error_covariance_closed, error_covariance_oracle, error_linear_map, CovarianceReport,
    ErrorLinearMap,
};
pub use error::{Error, Result, Violation};
pub use model::{
    derive_filter_coefficients, run_filter, validate_system, Coefficient, DerivedCoefficients, FilterGain, RawSystem,
    SystemSpec, WeightSpec,
};
pub use montecarlo::{simulate_ensemble, simulate_path, EnsembleStats, SamplePath};
pub use noise::{autocovariance, covariance_matrix, derive_stream, sample_fgn, AutocovarianceTable, NoiseModel};
pub use optimizer::example::{solve_two_step_example, ExampleRoot};
pub use optimizer::{
    greedy_white_noise_gain, multi_start, stationarity_certificate, OptimizationResult, OptimizerOptions,
    StationarityCertificate,
};
pub use variation::{fd_gradient, gradient, gradient_report, q_terms, GradientReport, Mode, QTable};
