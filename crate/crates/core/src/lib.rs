//! Voxel-grid radiance field renderer, sparse radiance warping, and a
//! trace-driven model of the memory system behind both.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod image;
pub mod memsim;
pub mod renderer;
pub mod scene;
pub mod sparw;

pub use error::{Error, Result};
