pub mod certify;
pub mod cli_io;
pub mod dispersion;
pub mod eigen;
pub mod error;
pub mod fronts;
pub mod grid;
pub mod models;
pub mod sim;

pub use error::{Error, Result};
