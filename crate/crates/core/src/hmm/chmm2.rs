//! Second-order circular HMM.
//!
//! State sequences start from a virtual state `q_0` that emits nothing:
//! `α_1(i, k) = v_k(i) b_k(O_1)` pairs it with the first emitting state. The
//! transition tensor `a_ijk = P(q_t = k | q_{t-2} = i, q_{t-1} = j)` is
//! restricted to the circular neighbourhood `k ∈ {j-1, j, j+1} (mod N)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::chain::Chain;
use super::gmm::GaussianMixture;
use super::train::{baum_welch, emission_table, initial_emissions, ChainModel, EmissionInit, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::frontend::ObservationSequence;
use crate::logmath::{log_sum_exp, safe_ln};

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chmm2Model {
    n_states: usize,
    /// `v[i·N + k] = v_k(i)`; each row `i` sums to one over `k`.
    v: Vec<f64>,
    /// `trans3[(i·N + j)·N + k] = a_ijk`.
    trans3: Vec<f64>,
    /// `support[j·N + k]`: whether `k` may follow `j`.
    support: Vec<bool>,
    emissions: Vec<GaussianMixture>,
}

/// `k ∈ {j-1, j, j+1} (mod n)` adjacency, row-major `n × n`.
pub fn circular_support(n: usize) -> Vec<bool> {
    let mut support = vec![false; n * n];
    for j in 0..n {
        for step in [n - 1, 0, 1] {
            support[j * n + (j + step) % n] = true;
        }
    }
    support
}

/// The fixed starting point for training: uniform pair-initial weights,
/// `1/3` on every circular successor, and equal mixture weights `1/m`.
pub fn init_chmm2(n: usize, m: usize, dim: usize) -> Result<Chmm2Model> {
    if n < 3 {
        return Err(Error::InvalidModel(format!(
            "circular second-order model needs at least 3 states, got {n}"
        )));
    }
    if m == 0 || dim == 0 {
        return Err(Error::InvalidModel("mixture count and dimension must be positive".into()));
    }
    let support = circular_support(n);
    let mut trans3 = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if support[j * n + k] {
                    trans3[(i * n + j) * n + k] = 1.0 / 3.0;
                }
            }
        }
    }
    Chmm2Model::new(
        vec![1.0 / n as f64; n * n],
        trans3,
        support,
        vec![GaussianMixture::uniform(m, dim); n],
    )
}

impl Chmm2Model {
    pub fn new(v: Vec<f64>, trans3: Vec<f64>, support: Vec<bool>, emissions: Vec<GaussianMixture>) -> Result<Self> {
        let model = Self {
            n_states: emissions.len(),
            v,
            trans3,
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
        if self.v.len() != n * n || self.trans3.len() != n * n * n || self.support.len() != n * n {
            return bad("array sizes disagree with the state count".into());
        }
        let dim = self.emissions[0].dim();
        if self.emissions.iter().any(|g| g.dim() != dim) {
            return bad("emissions disagree on dimension".into());
        }
        for i in 0..n {
            let row = &self.v[i * n..(i + 1) * n];
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return bad(format!("invalid initial weights in row {i}"));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_TOLERANCE {
                return bad(format!("initial row {i} sums to {total}"));
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut total = 0.0;
                for k in 0..n {
                    let a = self.a(i, j, k);
                    if !(a.is_finite() && a >= 0.0) {
                        return bad(format!("invalid a[{i}][{j}][{k}] = {a}"));
                    }
                    if !self.support[j * n + k] && a != 0.0 {
                        return bad(format!("a[{i}][{j}][{k}] is off the topology support"));
                    }
                    total += a;
                }
                if (total - 1.0).abs() > ROW_TOLERANCE {
                    return bad(format!("transitions from ({i}, {j}) sum to {total}"));
                }
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

    /// `a_ijk`.
    #[inline]
    pub fn a(&self, i: usize, j: usize, k: usize) -> f64 {
        self.trans3[(i * self.n_states + j) * self.n_states + k]
    }

    /// `v_k(i)`.
    pub fn v(&self, i: usize, k: usize) -> f64 {
        self.v[i * self.n_states + k]
    }

    pub fn trans3(&self) -> &[f64] {
        &self.trans3
    }

    pub fn initial(&self) -> &[f64] {
        &self.v
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub fn is_supported(&self, j: usize, k: usize) -> bool {
        self.support[j * self.n_states + k]
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

    /// Replaces the emissions with data-driven equal-weight mixtures, keeping
    /// each state's component count.
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

    fn check_obs(&self, obs: &ObservationSequence) -> Result<()> {
        if obs.len() < 2 {
            return Err(Error::SequenceTooShort(obs.len()));
        }
        Ok(())
    }

    pub fn forward(&self, obs: &ObservationSequence) -> Result<ForwardLattice> {
        self.check_obs(obs)?;
        let table = emission_table(&self.emissions, obs)?;
        Ok(ForwardLattice {
            n_states: self.n_states,
            frames: obs.len(),
            log_alpha: self.chain().forward(&table),
        })
    }

    pub fn backward(&self, obs: &ObservationSequence) -> Result<BackwardLattice> {
        self.check_obs(obs)?;
        let table = emission_table(&self.emissions, obs)?;
        Ok(BackwardLattice {
            n_states: self.n_states,
            frames: obs.len(),
            log_beta: self.chain().backward(&table, self.log_final()),
        })
    }

    /// `ln P(O | model) = ln Σ_{i,k} α_T(i, k)`.
    pub fn log_likelihood(&self, obs: &ObservationSequence) -> Result<f64> {
        Ok(self.forward(obs)?.log_likelihood())
    }

    /// Most likely emitting-state path `q_1..q_T` and its log-probability.
    pub fn viterbi(&self, obs: &ObservationSequence) -> Result<(Vec<usize>, f64)> {
        self.check_obs(obs)?;
        let table = emission_table(&self.emissions, obs)?;
        let (pairs, score) = self.chain().viterbi(&table);
        Ok((pairs.into_iter().map(|p| p % self.n_states).collect(), score))
    }

    /// Relabels states so that old state `s` becomes `perm[s]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_states;
        if perm.len() != n {
            return Err(Error::LengthMismatch {
                what: "permutation vs states",
                left: perm.len(),
                right: n,
            });
        }
        let mut v = vec![0.0; n * n];
        let mut trans3 = vec![0.0; n * n * n];
        let mut support = vec![false; n * n];
        let mut emissions = self.emissions.clone();
        for i in 0..n {
            emissions[perm[i]] = self.emissions[i].clone();
            for k in 0..n {
                v[perm[i] * n + perm[k]] = self.v(i, k);
                support[perm[i] * n + perm[k]] = self.support[i * n + k];
                for j in 0..n {
                    trans3[(perm[i] * n + perm[j]) * n + perm[k]] = self.a(i, j, k);
                }
            }
        }
        Self::new(v, trans3, support, emissions)
    }

    /// Draws a state path `q_1..q_T` and its observations. The virtual state
    /// `q_0` is uniform.
    pub fn sample<R: Rng>(&self, frames: usize, rng: &mut R) -> Result<(Vec<usize>, ObservationSequence)> {
        let n = self.n_states;
        let draw = |rng: &mut R, probs: &mut dyn Iterator<Item = f64>| -> usize {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last = 0;
            for (k, p) in probs.enumerate() {
                acc += p;
                if p > 0.0 {
                    last = k;
                }
                if u < acc {
                    return k;
                }
            }
            last
        };
        let q0 = rng.random_range(0..n);
        let mut states = Vec::with_capacity(frames);
        let mut prev2 = q0;
        let mut prev1 = draw(rng, &mut (0..n).map(|k| self.v(q0, k)));
        states.push(prev1);
        for _ in 1..frames {
            let k = draw(rng, &mut (0..n).map(|k| self.a(prev2, prev1, k)));
            states.push(k);
            prev2 = prev1;
            prev1 = k;
        }
        let mut data = Vec::with_capacity(frames * self.dim());
        for &s in &states {
            data.extend(self.emissions[s].sample(rng));
        }
        Ok((states, ObservationSequence::new(self.dim(), data)?))
    }
}

impl ChainModel for Chmm2Model {
    fn emissions(&self) -> &[GaussianMixture] {
        &self.emissions
    }

    fn set_emissions(&mut self, emissions: Vec<GaussianMixture>) {
        self.emissions = emissions;
    }

    fn chain(&self) -> Chain {
        let n = self.n_states;
        let log_init = self.v.iter().map(|&p| safe_ln(p)).collect();
        let emission_of = (0..n * n).map(|pair| pair % n).collect();
        let mut edges = Vec::with_capacity(n * n * 3);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let param = (i * n + j) * n + k;
                    let a = self.trans3[param];
                    if a > 0.0 {
                        edges.push((i * n + j, j * n + k, a, param));
                    }
                }
            }
        }
        Chain::new(log_init, emission_of, edges)
    }

    fn n_params(&self) -> usize {
        self.trans3.len()
    }

    /// `β_T(j, k) = 1/N`.
    fn log_final(&self) -> f64 {
        -(self.n_states as f64).ln()
    }

    fn min_len(&self) -> usize {
        2
    }

    fn reestimate(&mut self, stats: &super::chain::ChainStats) {
        let n = self.n_states;
        for i in 0..n {
            let row = &stats.init[i * n..(i + 1) * n];
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                for k in 0..n {
                    self.v[i * n + k] = row[k] / total;
                }
            }
        }
        for ij in 0..n * n {
            let counts = &stats.edges[ij * n..(ij + 1) * n];
            let total: f64 = counts.iter().sum();
            if total > 0.0 {
                for k in 0..n {
                    self.trans3[ij * n + k] = counts[k] / total;
                }
            }
        }
    }
}

/// Log-domain forward lattice: `alpha(t, j, k) = ln P(O_1..O_t, q_{t-1} = j, q_t = k)`.
#[derive(Debug, Clone)]
pub struct ForwardLattice {
    n_states: usize,
    frames: usize,
    log_alpha: Vec<f64>,
}

impl ForwardLattice {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn alpha(&self, t: usize, j: usize, k: usize) -> f64 {
        self.log_alpha[(t * self.n_states + j) * self.n_states + k]
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        let nn = self.n_states * self.n_states;
        &self.log_alpha[t * nn..(t + 1) * nn]
    }

    pub fn log_likelihood(&self) -> f64 {
        log_sum_exp(self.slice(self.frames - 1))
    }
}

/// Log-domain backward lattice, final slice `ln(1/N)`.
#[derive(Debug, Clone)]
pub struct BackwardLattice {
    n_states: usize,
    frames: usize,
    log_beta: Vec<f64>,
}

impl BackwardLattice {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn beta(&self, t: usize, j: usize, k: usize) -> f64 {
        self.log_beta[(t * self.n_states + j) * self.n_states + k]
    }

    pub fn slice(&self, t: usize) -> &[f64] {
        let nn = self.n_states * self.n_states;
        &self.log_beta[t * nn..(t + 1) * nn]
    }
}

/// Total log-likelihood recovered from time slice `t` of both lattices:
/// `ln Σ_{j,k} α_t(j,k) β_t(j,k) + ln N`. Equal to the forward total for every `t`.
pub fn slice_log_likelihood(forward: &ForwardLattice, backward: &BackwardLattice, t: usize) -> f64 {
    let terms: Vec<f64> = forward.slice(t).iter().zip(backward.slice(t)).map(|(a, b)| a + b).collect();
    log_sum_exp(&terms) + (forward.n_states as f64).ln()
}

pub fn forward2(model: &Chmm2Model, obs: &ObservationSequence) -> Result<ForwardLattice> {
    model.forward(obs)
}

pub fn backward2(model: &Chmm2Model, obs: &ObservationSequence) -> Result<BackwardLattice> {
    model.backward(obs)
}

pub fn likelihood2(model: &Chmm2Model, obs: &ObservationSequence) -> Result<f64> {
    model.log_likelihood(obs)
}

pub fn viterbi2(model: &Chmm2Model, obs: &ObservationSequence) -> Result<(Vec<usize>, f64)> {
    model.viterbi(obs)
}

/// Baum-Welch on the pair-state reduction. Emissions must already be
/// initialized (see [`Chmm2Model::initialize_emissions`]).
pub fn train_chmm2(
    init: &Chmm2Model,
    data: &[ObservationSequence],
    config: &TrainConfig,
) -> Result<(Chmm2Model, TrainReport)> {
    baum_welch(init, data, config)
}
