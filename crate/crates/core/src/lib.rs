//! Cloth-folding world models: a deterministic mass-spring cloth simulator,
//! a convolutional VAE, an MDN-RNN dynamics model, a CMA-ES trained
//! controller, and the iterative training procedure with its ablations.

pub mod cma;
pub mod env;
pub mod mdn;
pub mod nn;
pub mod policy;
pub mod vae;
pub mod trainer;
