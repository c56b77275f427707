//! Shared Baum-Welch loop and data-driven emission initialization.

use serde::{Deserialize, Serialize};

use super::chain::{Chain, ChainStats, EmissionTable};
use super::gmm::{kmeans, mixture_from_clusters, GaussianMixture, GmmAccumulator, VARIANCE_FLOOR};
use crate::error::{Error, Result};
use crate::frontend::ObservationSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iter: usize,
    /// Training stops once an iteration gains less than this in total log-likelihood.
    pub tol: f64,
    pub variance_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-4,
            variance_floor: VARIANCE_FLOOR,
        }
    }
}

impl TrainConfig {
    /// Runs exactly `iterations` EM steps, never stopping early.
    pub fn fixed_iterations(iterations: usize) -> Self {
        Self {
            max_iter: iterations,
            tol: f64::NEG_INFINITY,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Total data log-likelihood of every parameter set visited, starting with the initial one.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

impl TrainReport {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihoods.last().expect("at least one evaluation")
    }

    pub fn iterations(&self) -> usize {
        self.log_likelihoods.len() - 1
    }
}

/// How initial emission densities are derived from training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EmissionInit {
    /// Split every sequence into `N` equal consecutive chunks, chunk `k` seeding state `k`.
    #[default]
    UniformSegmentation,
    /// k-means over all frames into `N` clusters, ordered by the first coordinate of the centroid.
    PooledKMeans,
}

pub(crate) trait ChainModel: Clone {
    fn emissions(&self) -> &[GaussianMixture];
    fn set_emissions(&mut self, emissions: Vec<GaussianMixture>);
    fn chain(&self) -> Chain;
    fn n_params(&self) -> usize;
    fn log_final(&self) -> f64;
    fn min_len(&self) -> usize;
    fn reestimate(&mut self, stats: &ChainStats);
}

pub(crate) fn emission_table(emissions: &[GaussianMixture], obs: &ObservationSequence) -> Result<EmissionTable> {
    let dim = emissions[0].dim();
    if obs.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: obs.dim(),
        });
    }
    let prepared: Vec<_> = emissions.iter().map(GaussianMixture::prepare).collect();
    let mut values = Vec::with_capacity(obs.len() * emissions.len());
    for x in obs.rows() {
        values.extend(prepared.iter().map(|p| p.eval(x)));
    }
    Ok(EmissionTable {
        frames: obs.len(),
        emissions: emissions.len(),
        values,
    })
}

pub(crate) fn check_data<M: ChainModel>(model: &M, data: &[ObservationSequence]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let dim = model.emissions()[0].dim();
    for obs in data {
        if obs.len() < model.min_len() {
            return Err(Error::SequenceTooShort(obs.len()));
        }
        if obs.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: obs.dim(),
            });
        }
    }
    Ok(())
}

/// One E-step over all sequences; returns the statistics, per-emission GMM
/// accumulators and the total log-likelihood.
fn expectation<M: ChainModel>(
    model: &M,
    data: &[ObservationSequence],
) -> Result<(ChainStats, Vec<GmmAccumulator>, f64)> {
    let chain = model.chain();
    let emissions = model.emissions();
    let prepared: Vec<_> = emissions.iter().map(GaussianMixture::prepare).collect();
    let mut stats = ChainStats::new(chain.n, model.n_params(), emissions.len());
    let mut accs: Vec<GmmAccumulator> = emissions
        .iter()
        .map(|g| GmmAccumulator::new(g.n_components(), g.dim()))
        .collect();
    let mut total = 0.0;
    for obs in data {
        let table = emission_table(emissions, obs)?;
        stats.reset_occupancy(obs.len());
        let ll = chain.accumulate(&table, model.log_final(), &mut stats);
        if !ll.is_finite() {
            return Err(Error::InvalidModel("training sequence has zero likelihood under the model".into()));
        }
        total += ll;
        for (t, x) in obs.rows().enumerate() {
            for (e, acc) in accs.iter_mut().enumerate() {
                acc.add(&prepared[e], x, stats.occupancy(t, e));
            }
        }
    }
    Ok((stats, accs, total))
}

pub(crate) fn baum_welch<M: ChainModel>(
    init: &M,
    data: &[ObservationSequence],
    config: &TrainConfig,
) -> Result<(M, TrainReport)> {
    check_data(init, data)?;
    let mut model = init.clone();
    let mut log_likelihoods = Vec::new();
    let mut converged = false;
    loop {
        let (stats, accs, ll) = expectation(&model, data)?;
        if let Some(prev) = log_likelihoods.last() {
            if ll - prev < config.tol {
                converged = true;
            }
        }
        log_likelihoods.push(ll);
        if converged || log_likelihoods.len() > config.max_iter {
            break;
        }
        model.reestimate(&stats);
        let emissions = model
            .emissions()
            .iter()
            .zip(&accs)
            .map(|(g, acc)| acc.finish(g, config.variance_floor))
            .collect();
        model.set_emissions(emissions);
    }
    Ok((
        model,
        TrainReport {
            log_likelihoods,
            converged,
        },
    ))
}

/// Builds `m`-component, equal-weight mixtures from per-state point groups.
/// States with no points borrow the pooled data; states with fewer points
/// than `m` get as many components as they have points.
pub fn emissions_from_groups(groups: &[Vec<&[f64]>], m: usize, seed: u64, floor: f64) -> Result<Vec<GaussianMixture>> {
    let pooled: Vec<&[f64]> = groups.iter().flatten().copied().collect();
    if pooled.is_empty() {
        return Err(Error::Empty("emission initialization data"));
    }
    groups
        .iter()
        .enumerate()
        .map(|(state, points)| {
            let points = if points.is_empty() { &pooled } else { points };
            let comps = m.min(points.len()).max(1);
            let state_seed = seed ^ (state as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            mixture_from_clusters(points, comps, state_seed, floor, true)
        })
        .collect()
}

pub(crate) fn initial_emissions(
    n_states: usize,
    m: usize,
    data: &[ObservationSequence],
    strategy: EmissionInit,
    seed: u64,
    floor: f64,
) -> Result<Vec<GaussianMixture>> {
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let mut groups: Vec<Vec<&[f64]>> = vec![Vec::new(); n_states];
    match strategy {
        EmissionInit::UniformSegmentation => {
            for obs in data {
                let len = obs.len();
                for (t, x) in obs.rows().enumerate() {
                    groups[t * n_states / len].push(x);
                }
            }
        }
        EmissionInit::PooledKMeans => {
            let points: Vec<&[f64]> = data.iter().flat_map(|o| o.rows()).collect();
            let k = n_states.min(points.len());
            let (centers, assign) = kmeans(&points, k, seed);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| centers[a][0].total_cmp(&centers[b][0]));
            let mut rank = vec![0; k];
            for (r, &c) in order.iter().enumerate() {
                rank[c] = r;
            }
            for (p, a) in points.iter().zip(&assign) {
                groups[rank[*a]].push(p);
            }
        }
    }
    emissions_from_groups(&groups, m, seed, floor)
}
