//! Link-level workbench for downlink CSI prediction over a 3D
//! geometric-stochastic channel.
//!
//! The pipeline mirrors a TDD exchange:
//!
//! 1. [`channel3d`] draws spatially correlated large-scale parameters along a
//!    linear user path and turns them into per-frame channel frequency
//!    responses.
//! 2. [`linksim`] sends unit-energy QAM pilots over every subcarrier and adds
//!    receiver noise at a given pilot-symbol SNR (SSNR).
//! 3. [`estimation`] recovers the uplink response with LS or LS-MMSE.
//! 4. [`predictor`] forecasts the downlink response with linear
//!    interpolation or a single-layer LSTM in open-loop or closed-loop mode.
//! 5. [`metrics`] scores the forecast with the per-element normalized MSE.
//! 6. [`harness`] runs seeded sweeps end to end and writes CSV reports.

pub mod channel3d;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linksim;
pub mod metrics;
pub mod predictor;
pub mod rng;

pub use error::{Error, Result};
pub use num_complex::Complex64;
