//! Numerical laboratory for the KdV and mKdV equations near solitons and kinks.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: periodic grids, spectral calculus, Sobolev norms
//! - [`profiles`]: closed-form solitons, kinks and weight functions
//! - [`miura`]: Miura maps, symmetries, kink-aware fields
//! - [`evolution`]: exponential time differencing for KdV, mKdV and the
//!   kink-frame perturbation equation
//! - [`schroedinger`]: ground states, Riccati shooting and inverse Miura maps
//! - [`quadform`]: coercivity of the quadratic forms controlling kink stability
//! - [`stability`]: modulation tracking and the stability experiments
//! - [`config`] and [`runio`]: experiment configuration and run directories

pub mod config;
pub mod error;
pub mod evolution;
mod fft;
pub mod grid;
mod linalg;
pub mod miura;
pub mod profiles;
pub mod quadform;
pub mod runio;
pub mod schroedinger;
pub mod stability;

pub use error::{Error, Result};
pub use grid::{Field, Grid, WindowSpec};
