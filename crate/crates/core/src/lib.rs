//! Tests for second-order dynamics (ARCH effects) in autoregressive series
//! whose unconditional variance changes deterministically over time.
//!
//! The crate provides
//! - a simulator for AR(p) series with a time-varying variance profile and
//!   optional ARCH contamination ([`model`]);
//! - leave-one-out kernel estimation of the variance path with
//!   cross-validated or rule-of-thumb bandwidths ([`kernelvar`]);
//! - OLS, GLS and adaptive (kernel-weighted) least squares ([`estimators`]);
//! - standard, GLS and adaptive ARCH-LM and portmanteau statistics with
//!   χ² p-values ([`stats`]);
//! - bootstrap and wild Monte Carlo p-values for the modified adaptive
//!   statistics plus bandwidth-constant calibration ([`resample`]);
//! - a seeded, parallel Monte Carlo experiment runner ([`harness`]).
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`.

// `!(x > 0)` is used on purpose so that NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod kernelvar;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod resample;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use estimators::{als_fit, gls_fit, ols_fit, ArFit, FitKind};
pub use kernelvar::{BandwidthRule, KernelSpec, VariancePathEstimate};
pub use model::{simulate, DgpSpec, InnovationSpec, ProfileScale, SeriesSample, VarianceProfile};
pub use resample::{bootstrap_pvalue, calibrate_gamma, mc_pvalue, CalibrationSpec};
pub use stats::{run_test, PvalueSource, TestFamily, TestReport, VarianceSource};

pub type VarianceProfile64 = model::VarianceProfile<f64>;
pub type DgpSpec64 = model::DgpSpec<f64>;
pub type SeriesSample64 = model::SeriesSample<f64>;
pub type ArFit64 = estimators::ArFit<f64>;
pub type VariancePathEstimate64 = kernelvar::VariancePathEstimate<f64>;
pub type MomentEstimates64 = stats::MomentEstimates<f64>;
pub type SigmaMatrix64 = stats::SigmaMatrix<f64>;
pub type TestReport64 = stats::TestReport<f64>;
pub type VarianceSource64 = stats::VarianceSource<f64>;
pub type TestConfig64 = harness::TestConfig<f64>;
pub type ExperimentSpec64 = harness::ExperimentSpec<f64>;

pub type VarianceProfile32 = model::VarianceProfile<f32>;
pub type SeriesSample32 = model::SeriesSample<f32>;
pub type TestReport32 = stats::TestReport<f32>;
