//! Log-domain forward/backward/Viterbi over a sparse first-order chain with
//! tied emissions.
//!
//! Both model types reduce to this: a first-order model maps state `i` to
//! chain state `i`; a second-order model maps the ordered pair
//! `(q_{t-1}, q_t) = (j, k)` to chain state `j·N + k`, with the edge
//! `(i, j) → (j, k)` carrying `a_ijk` and the pair emitting through state `k`.

use crate::logmath::log_sum_exp;

/// Sums below this fall back to an exact per-target log-sum-exp.
const UNDERFLOW_GUARD: f64 = 1e-250;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Edge {
    pub other: usize,
    pub prob: f64,
    pub log_prob: f64,
    /// Index of the transition parameter this edge realizes.
    pub param: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Chain {
    pub n: usize,
    pub log_init: Vec<f64>,
    pub emission_of: Vec<usize>,
    /// Incoming edges per target, sorted by source index.
    pub preds: Vec<Vec<Edge>>,
    /// Outgoing edges per source, sorted by target index.
    pub succs: Vec<Vec<Edge>>,
}

impl Chain {
    /// `edges` holds `(source, target, probability, param)`; zero-probability
    /// edges are dropped.
    pub fn new(log_init: Vec<f64>, emission_of: Vec<usize>, edges: Vec<(usize, usize, f64, usize)>) -> Self {
        let n = log_init.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for (from, to, prob, param) in edges {
            if prob <= 0.0 {
                continue;
            }
            let log_prob = prob.ln();
            preds[to].push(Edge { other: from, prob, log_prob, param });
            succs[from].push(Edge { other: to, prob, log_prob, param });
        }
        for p in preds.iter_mut().chain(succs.iter_mut()) {
            p.sort_by_key(|e| e.other);
        }
        Self {
            n,
            log_init,
            emission_of,
            preds,
            succs,
        }
    }

    /// Forward lattice, `T × n` row-major.
    pub fn forward(&self, log_b: &EmissionTable) -> Vec<f64> {
        let n = self.n;
        let t_len = log_b.frames;
        let mut alpha = vec![f64::NEG_INFINITY; t_len * n];
        for s in 0..n {
            alpha[s] = self.log_init[s] + log_b.get(0, self.emission_of[s]);
        }
        let mut scaled = vec![0.0; n];
        for t in 1..t_len {
            let (done, rest) = alpha.split_at_mut(t * n);
            let prev = &done[(t - 1) * n..];
            let cur = &mut rest[..n];
            let shift = max_of(prev);
            if shift == f64::NEG_INFINITY {
                break;
            }
            for (e, &a) in scaled.iter_mut().zip(prev) {
                *e = (a - shift).exp();
            }
            for s in 0..n {
                let preds = &self.preds[s];
                if preds.is_empty() {
                    continue;
                }
                let sum: f64 = preds.iter().map(|e| scaled[e.other] * e.prob).sum();
                let log_in = if sum > UNDERFLOW_GUARD {
                    shift + sum.ln()
                } else {
                    exact_log_sum(preds.iter().map(|e| prev[e.other] + e.log_prob))
                };
                cur[s] = log_in + log_b.get(t, self.emission_of[s]);
            }
        }
        alpha
    }

    /// Backward lattice with every final entry set to `log_final`.
    pub fn backward(&self, log_b: &EmissionTable, log_final: f64) -> Vec<f64> {
        let n = self.n;
        let t_len = log_b.frames;
        let mut beta = vec![f64::NEG_INFINITY; t_len * n];
        for v in &mut beta[(t_len - 1) * n..] {
            *v = log_final;
        }
        let mut u = vec![0.0; n];
        let mut scaled = vec![0.0; n];
        for t in (0..t_len - 1).rev() {
            let (head, tail) = beta.split_at_mut((t + 1) * n);
            let next = &tail[..n];
            let cur = &mut head[t * n..];
            for s in 0..n {
                u[s] = next[s] + log_b.get(t + 1, self.emission_of[s]);
            }
            let shift = max_of(&u);
            if shift == f64::NEG_INFINITY {
                continue;
            }
            for (e, &x) in scaled.iter_mut().zip(&u) {
                *e = (x - shift).exp();
            }
            for s in 0..n {
                let succs = &self.succs[s];
                if succs.is_empty() {
                    continue;
                }
                let sum: f64 = succs.iter().map(|e| scaled[e.other] * e.prob).sum();
                cur[s] = if sum > UNDERFLOW_GUARD {
                    shift + sum.ln()
                } else {
                    exact_log_sum(succs.iter().map(|e| u[e.other] + e.log_prob))
                };
            }
        }
        beta
    }

    /// Max-product decoding. Ties go to the lowest chain-state index, both for
    /// back-pointers and for the final state.
    pub fn viterbi(&self, log_b: &EmissionTable) -> (Vec<usize>, f64) {
        let n = self.n;
        let t_len = log_b.frames;
        let mut delta: Vec<f64> = (0..n).map(|s| self.log_init[s] + log_b.get(0, self.emission_of[s])).collect();
        let mut next = vec![f64::NEG_INFINITY; n];
        let mut back = vec![0u32; t_len * n];
        for t in 1..t_len {
            for s in 0..n {
                let mut best = f64::NEG_INFINITY;
                let mut arg = usize::MAX;
                for e in &self.preds[s] {
                    let v = delta[e.other] + e.log_prob;
                    if v > best {
                        best = v;
                        arg = e.other;
                    }
                }
                if arg == usize::MAX {
                    next[s] = f64::NEG_INFINITY;
                    back[t * n + s] = 0;
                } else {
                    next[s] = best + log_b.get(t, self.emission_of[s]);
                    back[t * n + s] = arg as u32;
                }
            }
            std::mem::swap(&mut delta, &mut next);
        }
        let mut last = 0;
        for s in 1..n {
            if delta[s] > delta[last] {
                last = s;
            }
        }
        let score = delta[last];
        let mut path = vec![0usize; t_len];
        path[t_len - 1] = last;
        for t in (1..t_len).rev() {
            path[t - 1] = back[t * n + path[t]] as usize;
        }
        (path, score)
    }

    /// E-step for one sequence: adds posterior counts into `stats` and returns
    /// the sequence log-likelihood `ln Σ_s α_T(s)`.
    pub fn accumulate(&self, log_b: &EmissionTable, log_final: f64, stats: &mut ChainStats) -> f64 {
        let n = self.n;
        let t_len = log_b.frames;
        let alpha = self.forward(log_b);
        let ll = log_sum_exp(&alpha[(t_len - 1) * n..]);
        if !ll.is_finite() {
            return ll;
        }
        let beta = self.backward(log_b, log_final);
        let log_z = ll + log_final;

        let mut gamma = vec![0.0; n];
        for t in 0..t_len {
            let a = &alpha[t * n..(t + 1) * n];
            let b = &beta[t * n..(t + 1) * n];
            for s in 0..n {
                gamma[s] = (a[s] + b[s] - log_z).exp();
            }
            if t == 0 {
                for s in 0..n {
                    stats.init[s] += gamma[s];
                }
            }
            let occ = &mut stats.emission_occupancy[t * stats.n_emissions..(t + 1) * stats.n_emissions];
            for s in 0..n {
                occ[self.emission_of[s]] += gamma[s];
            }
        }

        // ξ_t(s, s') = α_t(s) a(s, s') b(O_{t+1}) β_{t+1}(s') / Z, factored so
        // each time step costs 2n exponentials plus one multiply per edge.
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        let mut right_log = vec![0.0; n];
        for t in 0..t_len - 1 {
            let a = &alpha[t * n..(t + 1) * n];
            let b_next = &beta[(t + 1) * n..(t + 2) * n];
            let shift_a = max_of(a);
            for s in 0..n {
                right_log[s] = b_next[s] + log_b.get(t + 1, self.emission_of[s]);
            }
            let shift_r = max_of(&right_log);
            if shift_a == f64::NEG_INFINITY || shift_r == f64::NEG_INFINITY {
                continue;
            }
            let scale = (shift_a + shift_r - log_z).exp();
            if !scale.is_finite() {
                for s in 0..n {
                    for e in &self.succs[s] {
                        stats.edges[e.param] += (a[s] + e.log_prob + right_log[e.other] - log_z).exp();
                    }
                }
                continue;
            }
            for s in 0..n {
                left[s] = (a[s] - shift_a).exp();
                right[s] = (right_log[s] - shift_r).exp();
            }
            for s in 0..n {
                if left[s] == 0.0 {
                    continue;
                }
                let ls = left[s] * scale;
                for e in &self.succs[s] {
                    stats.edges[e.param] += ls * e.prob * right[e.other];
                }
            }
        }
        ll
    }
}

/// Posterior counts gathered by [`Chain::accumulate`].
#[derive(Debug, Clone)]
pub(crate) struct ChainStats {
    pub init: Vec<f64>,
    pub edges: Vec<f64>,
    pub n_emissions: usize,
    /// Per-frame state occupancy for the sequence currently being accumulated.
    pub emission_occupancy: Vec<f64>,
}

impl ChainStats {
    pub fn new(n: usize, n_params: usize, n_emissions: usize) -> Self {
        Self {
            init: vec![0.0; n],
            edges: vec![0.0; n_params],
            n_emissions,
            emission_occupancy: Vec::new(),
        }
    }

    pub fn reset_occupancy(&mut self, frames: usize) {
        self.emission_occupancy.clear();
        self.emission_occupancy.resize(frames * self.n_emissions, 0.0);
    }

    pub fn occupancy(&self, t: usize, e: usize) -> f64 {
        self.emission_occupancy[t * self.n_emissions + e]
    }
}

/// `ln b_e(O_t)` for every frame and emission, `T × E` row-major.
#[derive(Debug, Clone)]
pub(crate) struct EmissionTable {
    pub frames: usize,
    pub emissions: usize,
    pub values: Vec<f64>,
}

impl EmissionTable {
    #[inline]
    pub fn get(&self, t: usize, e: usize) -> f64 {
        self.values[t * self.emissions + e]
    }
}

#[inline]
fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn exact_log_sum(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|v| (v - max).exp()).sum::<f64>().ln()
}
