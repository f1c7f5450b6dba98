//! Frame delivery ratio (FDR) prediction for Wi-Fi links.
//!
//! The crate turns a time-ordered sequence of binary transmission outcomes
//! (1 = the ACK came back, 0 = it did not) into a forecast of the fraction of
//! frames that will be delivered over the next `N_f` attempts. It covers the
//! whole pipeline:
//!
//! * [`trace`]: outcome traces, a Gilbert-Elliott channel simulator and the
//!   text/packed file formats;
//! * [`dataset`]: FDR targets, sliding windows and leakage-free chronological
//!   splits;
//! * [`nn`]: a small neural-network core (Conv1D, MaxPool1D, Dense, LSTM,
//!   Bi-LSTM, MSE, Adam) with hand-written gradients;
//! * [`models`]: the CNN / LSTM / Bi-LSTM regressors, their presets and the
//!   training loop;
//! * [`hpo`]: the epoch-averaged validation objective and hyperparameter
//!   selection;
//! * [`eval`]: error statistics and inference resource profiling.
//!
//! ```
//! use linkfdr::trace::{simulate_trace, GeChannelSpec};
//! use linkfdr::dataset::fdr_target;
//!
//! let trace = simulate_trace(&GeChannelSpec::calibrated(7), 5_000).unwrap();
//! let t = fdr_target(&trace, 100, 3600).unwrap();
//! assert!((0.0..=1.0).contains(&t));
//! ```

pub mod dataset;
pub mod error;
pub mod eval;
pub mod hpo;
pub mod models;
pub mod nn;
pub mod trace;

mod rng;

pub use error::{Error, Result};
