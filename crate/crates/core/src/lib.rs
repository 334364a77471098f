//! Simulation of a periodically rocked open bosonic dimer: Lindblad
//! propagation, quantum-jump trajectories, Husimi distributions, Floquet
//! spectra and the classical mean-field reference.
//!
//! Numerical kernels are generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

pub mod analysis;
pub mod band;
pub mod error;
pub mod floquet;
pub mod lindblad;
pub mod linalg;
pub mod mcwf;
pub mod meanfield;
pub mod model;
pub mod rk4;
pub mod scalar;

pub use error::{Error, Result};

pub type ModelParams64 = model::ModelParams<f64>;
pub type DimerOperators64 = model::DimerOperators<f64>;
pub type DensityMatrix64 = lindblad::DensityMatrix<f64>;
pub type IntegratorConfig64 = lindblad::IntegratorConfig<f64>;
pub type LindbladPropagator64 = lindblad::LindbladPropagator<f64>;
pub type TrajectoryState64 = mcwf::TrajectoryState<f64>;
pub type EnsembleConfig64 = mcwf::EnsembleConfig<f64>;
pub type MeanFieldState64 = meanfield::MeanFieldState<f64>;
pub type SpinState64 = meanfield::SpinState<f64>;
pub type FloquetMap64 = floquet::FloquetMap<f64>;
pub type FloquetConfig64 = floquet::FloquetConfig<f64>;

// Links the system BLAS/LAPACK backend that ndarray's matrix products use.
extern crate ndarray_linalg;
