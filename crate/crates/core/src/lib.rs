//! Fitting sphere-mesh skeletons to oriented point clouds.

pub mod cli;
pub mod driver;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod io;
pub mod skeleton;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
