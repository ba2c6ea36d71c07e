//! Reduced-basis approximation of conductivity-parametrized lead fields
//! `L(σ) = S H(σ)⁻¹ D(σ)`, with generators for desk-scale head models,
//! dipole-fit conductivity estimation and a polynomial baseline.

pub mod basis;
pub mod bench;
pub mod error;
pub mod estimation;
pub mod generators;
pub mod grid;
pub mod io;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod poly;

pub use error::{Error, Result};
pub use faer;
