//! First-order HMM with circular or ergodic topology.

use serde::{Deserialize, Serialize};

use super::chain::{Chain, ChainStats};
use super::chmm2::circular_support;
use super::gmm::GaussianMixture;
use super::train::{baum_welch, emission_table, initial_emissions, ChainModel, EmissionInit, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::frontend::ObservationSequence;
use crate::logmath::{log_sum_exp, safe_ln};

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chmm1Model {
    n_states: usize,
    pi: Vec<f64>,
    /// Row-major `a_ij`.
    trans: Vec<f64>,
    support: Vec<bool>,
    emissions: Vec<GaussianMixture>,
}

/// Circular initialization: uniform `π`, `a_ij = 1/3` for `j ∈ {i-1, i, i+1}`.
/// The resulting matrix is symmetric.
pub fn init_chmm1(n: usize, m: usize, dim: usize) -> Result<Chmm1Model> {
    if n < 3 {
        return Err(Error::InvalidModel(format!(
            "circular model needs at least 3 states, got {n}"
        )));
    }
    let support = circular_support(n);
    let trans = support.iter().map(|&s| if s { 1.0 / 3.0 } else { 0.0 }).collect();
    Chmm1Model::new(vec![1.0 / n as f64; n], trans, support, vec![GaussianMixture::uniform(m, dim); n])
}

/// Fully connected initialization with every `a_ij = 1/n`.
pub fn init_ergodic(n: usize, m: usize, dim: usize) -> Result<Chmm1Model> {
    if n == 0 || m == 0 || dim == 0 {
        return Err(Error::InvalidModel("state count, mixture count and dimension must be positive".into()));
    }
    let p = 1.0 / n as f64;
    Chmm1Model::new(vec![p; n], vec![p; n * n], vec![true; n * n], vec![GaussianMixture::uniform(m, dim); n])
}

impl Chmm1Model {
    pub fn new(pi: Vec<f64>, trans: Vec<f64>, support: Vec<bool>, emissions: Vec<GaussianMixture>) -> Result<Self> {
        let model = Self {
            n_states: emissions.len(),
            pi,
            trans,
            support,
            emissions,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states;
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if n == 0 {
            return bad("no states".into());
        }
        if self.pi.len() != n || self.trans.len() != n * n || self.support.len() != n * n {
            return bad("array sizes disagree with the state count".into());
        }
        let dim = self.emissions[0].dim();
        if self.emissions.iter().any(|g| g.dim() != dim) {
            return bad("emissions disagree on dimension".into());
        }
        if self.pi.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (self.pi.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE {
            return bad("initial distribution is not stochastic".into());
        }
        for i in 0..n {
            let row = &self.trans[i * n..(i + 1) * n];
            for (j, &a) in row.iter().enumerate() {
                if !(a.is_finite() && a >= 0.0) {
                    return bad(format!("invalid a[{i}][{j}] = {a}"));
                }
                if !self.support[i * n + j] && a != 0.0 {
                    return bad(format!("a[{i}][{j}] is off the topology support"));
                }
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_TOLERANCE {
                return bad(format!("row {i} sums to {total}"));
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn dim(&self) -> usize {
        self.emissions[0].dim()
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.trans[i * self.n_states + j]
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn transitions(&self) -> &[f64] {
        &self.trans
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub fn emissions(&self) -> &[GaussianMixture] {
        &self.emissions
    }

    pub fn with_emissions(mut self, emissions: Vec<GaussianMixture>) -> Result<Self> {
        if emissions.len() != self.n_states {
            return Err(Error::LengthMismatch {
                what: "emissions vs states",
                left: emissions.len(),
                right: self.n_states,
            });
        }
        self.emissions = emissions;
        self.validate()?;
        Ok(self)
    }

    pub fn initialize_emissions(
        &mut self,
        data: &[ObservationSequence],
        strategy: EmissionInit,
        seed: u64,
        floor: f64,
    ) -> Result<()> {
        let m = self.emissions[0].n_components();
        self.emissions = initial_emissions(self.n_states, m, data, strategy, seed, floor)?;
        Ok(())
    }

    /// Largest `|a_ij - a_ji|`; zero right after circular initialization.
    pub fn symmetry_deviation(&self) -> f64 {
        let n = self.n_states;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.a(i, j) - self.a(j, i)).abs());
            }
        }
        worst
    }

    /// `ln P(O | model)` by the forward algorithm.
    pub fn log_likelihood(&self, obs: &ObservationSequence) -> Result<f64> {
        let table = emission_table(&self.emissions, obs)?;
        let alpha = self.chain().forward(&table);
        Ok(log_sum_exp(&alpha[(obs.len() - 1) * self.n_states..]))
    }

    pub fn viterbi(&self, obs: &ObservationSequence) -> Result<(Vec<usize>, f64)> {
        let table = emission_table(&self.emissions, obs)?;
        Ok(self.chain().viterbi(&table))
    }
}

impl ChainModel for Chmm1Model {
    fn emissions(&self) -> &[GaussianMixture] {
        &self.emissions
    }

    fn set_emissions(&mut self, emissions: Vec<GaussianMixture>) {
        self.emissions = emissions;
    }

    fn chain(&self) -> Chain {
        let n = self.n_states;
        let edges = (0..n * n)
            .filter(|&p| self.trans[p] > 0.0)
            .map(|p| (p / n, p % n, self.trans[p], p))
            .collect();
        Chain::new(self.pi.iter().map(|&p| safe_ln(p)).collect(), (0..n).collect(), edges)
    }

    fn n_params(&self) -> usize {
        self.trans.len()
    }

    fn log_final(&self) -> f64 {
        0.0
    }

    fn min_len(&self) -> usize {
        1
    }

    fn reestimate(&mut self, stats: &ChainStats) {
        let n = self.n_states;
        let total: f64 = stats.init.iter().sum();
        if total > 0.0 {
            for (p, c) in self.pi.iter_mut().zip(&stats.init) {
                *p = c / total;
            }
        }
        for i in 0..n {
            let counts = &stats.edges[i * n..(i + 1) * n];
            let total: f64 = counts.iter().sum();
            if total > 0.0 {
                for j in 0..n {
                    self.trans[i * n + j] = counts[j] / total;
                }
            }
        }
    }
}

pub fn likelihood1(model: &Chmm1Model, obs: &ObservationSequence) -> Result<f64> {
    model.log_likelihood(obs)
}

pub fn viterbi1(model: &Chmm1Model, obs: &ObservationSequence) -> Result<(Vec<usize>, f64)> {
    model.viterbi(obs)
}

pub fn train_chmm1(
    init: &Chmm1Model,
    data: &[ObservationSequence],
    config: &TrainConfig,
) -> Result<(Chmm1Model, TrainReport)> {
    baum_welch(init, data, config)
}
