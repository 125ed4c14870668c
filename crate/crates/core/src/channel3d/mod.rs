//! 3D geometric-stochastic channel for a user moving on a straight line in
//! an urban microcell.
//!
//! Large-scale parameters (delay spread, four angle spreads, shadow fading
//! and Ricean K-factor) are standard-normal deviates drawn as an exponentially
//! correlated field along the path, then cross-correlated by a 7x7 matrix.
//! Each decorrelation-distance segment of the path gets its own tap set;
//! within a segment every tap rotates with its own path length, which
//! produces the Doppler behaviour of the small-scale fading.
//!
//! Antennas are single-polarized and isotropic, so the antenna/polarization
//! product of the per-tap response is the scalar 1.

mod io;
mod lsp;
mod response;
mod taps;
mod trace;

pub use io::{read_trace, write_trace, TracePrecision};
pub use lsp::{draw_large_scale_field, CorrelationConfig, LargeScaleParams, N_LSP};
pub use response::{frequency_response, tap_response};
pub use taps::{generate_taps, LosBearing, LogNormalStat, Tap, TapDrawConfig, TapSet};
pub use trace::{trace_channel, ChannelRealization, ChannelTrace, Geometry, TraceParams};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
