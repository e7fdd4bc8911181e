pub mod backend;
pub mod conditioning;
pub mod data;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod mapper;
pub mod training;

pub use error::{Error, Result};
