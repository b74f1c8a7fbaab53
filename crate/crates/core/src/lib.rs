pub mod em;
pub mod error;
pub mod nets;
pub mod scene;
pub mod splat;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
