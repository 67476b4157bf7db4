//! Estimation of the number of sample uniques that are also population uniques in
//! cross-classified microdata, with the accompanying risk bounds and a simulation harness.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod numeric;
pub mod polyapprox;
pub mod profile;
pub mod simulation;
pub mod smoothing;

pub use error::{Error, Result};
pub use estimators::{
    estimate, EstimateReport, EstimatorConfig, EstimatorKind, PoissonGammaFit, PoissonGammaProtocol, ThetaConvention,
};
pub use profile::{true_tau1, CellCounts, FrequencyProfile, PairedCounts};
pub use smoothing::{coefficients, SmoothingSpec};
