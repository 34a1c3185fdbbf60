//! Upper functions for `L_p`-norms of kernel-smoothed Gaussian white noise
//! with variable bandwidth.
//!
//! The crate covers kernel construction and checks ([`kernel`]), bandwidth
//! classes and the smoothness-adaptive selector ([`bandwidth`]), field
//! simulation ([`field`]), the explicit constants and upper functions
//! ([`upper`]), metric-entropy estimation ([`entropy`]) and Monte Carlo
//! verification of the resulting probability bounds ([`verify`]).

pub mod bandwidth;
pub mod entropy;
pub mod error;
pub mod field;
pub mod grid;
pub mod kernel;
pub mod numerics;
mod par;
pub mod rng;
pub mod upper;
pub mod verify;

pub use error::{Error, Result};
