//! Gaussian-mixture emissions and circular hidden Markov models.
//!
//! All probability arithmetic is in the natural-log domain. Training of the
//! second-order model runs ordinary Baum-Welch on the equivalent first-order
//! chain over ordered state pairs; see [`chain`] for the reduction.

mod chain;
pub mod chmm1;
pub mod chmm2;
pub mod gmm;
mod train;

pub use chmm1::{init_chmm1, init_ergodic, likelihood1, train_chmm1, viterbi1, Chmm1Model};
pub use chmm2::{
    backward2, circular_support, forward2, init_chmm2, likelihood2, slice_log_likelihood, train_chmm2, viterbi2,
    BackwardLattice, Chmm2Model, ForwardLattice,
};
pub use gmm::{gmm_fit, GaussianMixture, GmmFit, VARIANCE_FLOOR};
pub use train::{emissions_from_groups, EmissionInit, TrainConfig, TrainReport};

#[cfg(test)]
mod tests;
