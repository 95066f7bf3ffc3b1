//! Figures of merit recovered from count records.

pub mod chsh;
pub mod correlation;
pub mod montecarlo;
pub mod tomography;
pub mod visibility;

pub use chsh::{chsh_e, chsh_s, ChshValue, PortCounts};
pub use correlation::cauchy_schwarz_r;
pub use montecarlo::{mc_error, EstimateWithError};
pub use tomography::{tomo_linear, tomo_mle, MleOptions, TomographySettingSet};
pub use visibility::{visibility_fit, FitWeighting, FringeFit};
