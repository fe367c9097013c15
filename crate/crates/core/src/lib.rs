//! Conditional diffusion with a per-sample step count and a learned hybrid
//! noise schedule, built on a small reverse-mode autodiff engine.

pub mod checkpoint;
pub mod cli;
pub mod conditioning;
pub mod data;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod run;
pub mod schedule;

pub use error::{Error, Result};
pub use rng::Rng;
