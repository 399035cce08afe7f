//! Discrete delay-Doppler WSSUS channels sounded by a J-periodic weighted
//! delta train, and recovery of their scattering function.
//!
//! The model lives on a circular time axis of `J·n_g` periods of length `T`,
//! so every Doppler frequency on the grid is a DFT frequency of the axis and
//! the identification identities hold exactly in floating point. The
//! pipeline is
//!
//! ```text
//! ScatteringFunction --true_acf--> TrueAcf --pi_from_acf--> PiTable
//!        |                                                    |
//!   sample_spreading + sound (L times) --pi_hat------------->-+
//!                                                             |
//!                              s_transform --> STable --reconstruct--> Reconstruction
//! ```
//!
//! `identify_oracle` runs the upper path from exact second-order statistics;
//! `estimate` runs the lower one from an ensemble of echoes.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod gabor;
pub mod grid;
pub mod ident;
pub mod io;
pub mod seed;

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;

pub use analysis::{monte_carlo, variance_bound, McConfig, McReport};
pub use channel::{
    sample_spreading, simulate_ensemble, sound, true_acf, Echo, EchoEnsemble, SpreadingRealization,
    TrueAcf,
};
pub use error::{Error, Result};
pub use gabor::{
    build_frame_matrices, gabor_vector, haar_check, random_weights, FrameMatrices, HaarReport,
    WeightSequence,
};
pub use grid::{
    assemble, build_cover, build_grid, extract_patches, Cover, Grid, ScatteringFunction,
};
pub use ident::{
    estimate, identify_oracle, pi_from_acf, pi_hat, pihat_covariance_exact, reconstruct,
    s_transform, Estimate, PiTable, Reconstruction, STable,
};
