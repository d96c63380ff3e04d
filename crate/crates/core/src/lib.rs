//! Intraday volatility toolkit: simulate noisy high-frequency price panels,
//! estimate spot variance curves with a jump-robust pre-averaging kernel
//! estimator, and predict the remaining intraday variance curve of the
//! current day by low-rank completion of the day × intraday variance matrix
//! (the SIP predictor), alongside simpler baselines and a full
//! loss/forecast-test/VaR backtesting harness.
//!
//! Layout:
//! - [`simulate`]: the synthetic data-generating process (HAR daily factor ×
//!   diurnal curve, jump diffusion, microstructure noise).
//! - [`spot_vol`]: pre-averaging spot-variance estimation from one day of
//!   noisy log prices.
//! - [`lowrank`]: the SIP block-completion predictor, rank selection, and the
//!   AVE / AR(1) / PC / HAR-D baselines.
//! - [`evaluation`]: MSPE/QLIKE, Diebold–Mariano comparison, BH adjustment,
//!   VaR construction and coverage tests (LRuc/LRcc/DQ), rolling backtest.
//! - [`io`]: CSV/JSON readers and writers for panels, matrices, and reports.
//!
//! All randomness flows from a single master seed through per-replication
//! ChaCha streams (see [`rng`]), so every pipeline is bit-reproducible
//! regardless of thread count.

pub mod error;
pub mod evaluation;
pub mod io;
pub mod lowrank;
pub mod rng;
pub mod simulate;
pub mod spot_vol;
mod stats;

pub use error::{Error, Result};
