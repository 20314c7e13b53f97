pub mod assembly;
pub mod cli;
pub mod contact;
pub mod error;
pub mod graph;
pub mod integrator;
pub mod krylov;
pub mod mesh;
pub mod models;
pub mod ndprecond;

pub use error::{Error, Result};
