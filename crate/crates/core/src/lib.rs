//! Selective rationalization at desk scale: a from-scratch transformer
//! encoder split into a token-pruning rationale generator and a
//! rationale-only predictor, the vanilla generator/predictor baseline,
//! training and evaluation loops, and the diagnostics used to study
//! rationalization degeneration and failure.

pub mod corpus;
pub mod diagnostics;
pub mod encoder;
pub mod objective;
pub mod params;
pub mod rationalizer;
pub mod tensor;
pub mod trainer;

pub use params::Params;
pub use tensor::{GradientMap, Tape, Tensor, TensorError, Var};
