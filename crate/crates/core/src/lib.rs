pub mod bench;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod landscape;
pub mod linalg;
pub mod tracking;

pub use error::{Error, Result};
