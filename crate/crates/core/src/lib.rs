#![no_std]
extern crate alloc;

pub mod error;
pub mod linalg;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use rng::StreamRng;
pub mod certificate;
pub mod geometry;
pub mod models;
pub mod sampling;
pub mod solver;
