pub mod bundle;
pub mod error;
pub mod families;
pub mod geometry;
pub mod grid;
pub mod identities;
pub mod linalg;
pub mod solver;
pub mod tau;

pub use error::{Error, Result};
pub use grid::{Chart, FdConfig, FdOrder, Norms, Slot, TensorField};
