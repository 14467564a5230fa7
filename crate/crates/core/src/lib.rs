//! Design toolkit for grid-forming power converters.
//!
//! The converter and its grid connection are treated as a MIMO plant with
//! control inputs `(iu, ωu, Eu)`, outputs `(vdc, p, ωu, q, V)` and grid
//! disturbances `(ωg, Vg)`. Controllers are 3×5 control transfer matrices
//! acting on the error `Yref − y`. The crate provides
//!
//! * [`linsys`]: state-space kernel (composition, spectra, H∞ norm);
//! * [`plant`]: the nonlinear per-unit converter model, equilibria and
//!   exact linearization;
//! * [`controllers`]: element vocabulary, preset controllers and the
//!   structured MIMO controller with its gain vector;
//! * [`synthesis`]: weighted closed-loop channels and fixed-structure
//!   H∞ tuning of the gain vector;
//! * [`simkit`]: nonlinear closed-loop simulation, step-response metrics
//!   and CSV export;
//! * [`config`]: TOML documents for parameters, controllers and scenarios.

pub mod config;
pub mod error;
pub mod controllers;
pub mod linsys;
pub mod plant;
pub mod simkit;
pub mod synthesis;

pub use error::{GfmError, Result};
