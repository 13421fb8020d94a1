//! Model stratified spaces with conical singularities, their RCD(K, N) and
//! Alexandrov classification, and Monte Carlo / graph-Laplacian checks of the
//! comparison inequalities such spaces satisfy.

pub mod acceptance;
pub mod classifier;
pub mod comparison;
pub mod cone;
pub mod error;
pub mod fermi;
pub mod graph;
pub mod link;
pub mod measure;
pub mod model;
pub mod numeric;
pub mod report;
pub mod spectral;
pub mod suite;

pub use error::{Error, Result};
