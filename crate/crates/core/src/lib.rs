//! Dense reconstruction of sparsely sampled S-parameter frequency responses.
//!
//! The main method fits an untrained 1-D convolutional U-Net to the observed
//! frequency samples with stochastic gradient Langevin dynamics, a sparse
//! third-difference penalty and an FFT causality layer at the output. A
//! classical vector fitting baseline and a pole-residue ground-truth
//! generator are included for comparison and verification.

pub mod autodiff;
pub mod causality;
pub mod error;
pub mod experiment;
pub mod net;
pub mod regularizer;
pub mod rng;
pub mod sgld;
pub mod synth;
pub mod touchstone;
pub mod vector_fit;
pub mod sparam;

pub use error::{Error, Result};
