//! Diagonal-covariance Gaussian mixtures: density, k-means++ seeding and EM.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::ObservationSequence;
use crate::logmath::log_sum_exp;

/// Minimum per-dimension variance for acoustic models.
pub const VARIANCE_FLOOR: f64 = 1e-6;

const FIT_MAX_ITER: usize = 100;
const FIT_TOL: f64 = 1e-6;
const KMEANS_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::InvalidModel("mixture with no components".into()));
        }
        if means.len() != m || variances.len() != m {
            return Err(Error::InvalidModel("mixture arrays disagree on component count".into()));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().chain(&variances).any(|v| v.len() != dim) {
            return Err(Error::InvalidModel("mixture arrays disagree on dimension".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidModel("negative or non-finite mixture weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("mixture weights sum to {total}")));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite mixture mean".into()));
        }
        if variances.iter().flatten().any(|v| !(v.is_finite() && *v >= VARIANCE_FLOOR)) {
            return Err(Error::InvalidModel("variance below floor".into()));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    /// One component with the given mean and variance.
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    /// `m` equal-weight components at the origin with unit variance.
    pub fn uniform(m: usize, dim: usize) -> Self {
        Self {
            weights: vec![1.0 / m as f64; m],
            means: vec![vec![0.0; dim]; m],
            variances: vec![vec![1.0; dim]; m],
        }
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// `ln Σ_m w_m N(x; μ_m, diag σ_m²)`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.prepare().eval(x))
    }

    pub(crate) fn prepare(&self) -> PreparedGmm<'_> {
        let log_consts = self
            .weights
            .iter()
            .zip(&self.variances)
            .map(|(w, var)| {
                let log_det: f64 = var.iter().map(|v| (2.0 * PI * v).ln()).sum();
                crate::logmath::safe_ln(*w) - 0.5 * log_det
            })
            .collect();
        let inv_vars = self
            .variances
            .iter()
            .map(|var| var.iter().map(|v| 1.0 / v).collect())
            .collect();
        PreparedGmm {
            gmm: self,
            log_consts,
            inv_vars,
        }
    }

    /// Draws one vector.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = self.weights.len() - 1;
        for (m, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                comp = m;
                break;
            }
        }
        self.means[comp]
            .iter()
            .zip(&self.variances[comp])
            .map(|(&mu, &var)| Normal::new(mu, var.sqrt()).expect("positive variance").sample(rng))
            .collect()
    }

    /// Total log-likelihood of a set of points.
    pub fn data_log_likelihood(&self, data: &ObservationSequence) -> f64 {
        let p = self.prepare();
        data.rows().map(|x| p.eval(x)).sum()
    }
}

/// Per-component constants cached for repeated evaluation.
pub(crate) struct PreparedGmm<'a> {
    gmm: &'a GaussianMixture,
    log_consts: Vec<f64>,
    inv_vars: Vec<Vec<f64>>,
}

impl PreparedGmm<'_> {
    #[inline]
    fn component_log(&self, m: usize, x: &[f64]) -> f64 {
        let mean = &self.gmm.means[m];
        let inv = &self.inv_vars[m];
        let mut q = 0.0;
        for d in 0..x.len() {
            let diff = x[d] - mean[d];
            q += diff * diff * inv[d];
        }
        self.log_consts[m] - 0.5 * q
    }

    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        let m = self.log_consts.len();
        if m == 1 {
            return self.component_log(0, x);
        }
        let mut buf = [0.0f64; 16];
        if m <= buf.len() {
            for (c, b) in buf[..m].iter_mut().enumerate() {
                *b = self.component_log(c, x);
            }
            log_sum_exp(&buf[..m])
        } else {
            let logs: Vec<f64> = (0..m).map(|c| self.component_log(c, x)).collect();
            log_sum_exp(&logs)
        }
    }

    /// Component posteriors for `x` written into `out`; returns the log density.
    pub(crate) fn responsibilities(&self, x: &[f64], out: &mut [f64]) -> f64 {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.component_log(c, x);
        }
        let total = log_sum_exp(out);
        for o in out.iter_mut() {
            *o = if total == f64::NEG_INFINITY { 0.0 } else { (*o - total).exp() };
        }
        total
    }
}

/// Weighted sufficient statistics for one mixture's M-step.
#[derive(Debug, Clone)]
pub(crate) struct GmmAccumulator {
    occupancy: Vec<f64>,
    sum: Vec<Vec<f64>>,
    sum_sq: Vec<Vec<f64>>,
    resp: Vec<f64>,
}

impl GmmAccumulator {
    pub(crate) fn new(m: usize, dim: usize) -> Self {
        Self {
            occupancy: vec![0.0; m],
            sum: vec![vec![0.0; dim]; m],
            sum_sq: vec![vec![0.0; dim]; m],
            resp: vec![0.0; m],
        }
    }

    pub(crate) fn add(&mut self, prepared: &PreparedGmm<'_>, x: &[f64], weight: f64) {
        if weight <= 0.0 {
            return;
        }
        let mut resp = std::mem::take(&mut self.resp);
        prepared.responsibilities(x, &mut resp);
        for (c, r) in resp.iter().enumerate() {
            let g = weight * r;
            if g == 0.0 {
                continue;
            }
            self.occupancy[c] += g;
            for d in 0..x.len() {
                self.sum[c][d] += g * x[d];
                self.sum_sq[c][d] += g * x[d] * x[d];
            }
        }
        self.resp = resp;
    }

    /// Maximization step. Components (or whole mixtures) without support keep
    /// their previous parameters; starved components get zero weight.
    pub(crate) fn finish(&self, previous: &GaussianMixture, floor: f64) -> GaussianMixture {
        let total: f64 = self.occupancy.iter().sum();
        if !(total > 0.0) {
            return previous.clone();
        }
        let mut out = previous.clone();
        for c in 0..self.occupancy.len() {
            let occ = self.occupancy[c];
            out.weights[c] = occ / total;
            if !(occ > 1e-300) {
                continue;
            }
            for d in 0..self.sum[c].len() {
                let mean = self.sum[c][d] / occ;
                let var = self.sum_sq[c][d] / occ - mean * mean;
                out.means[c][d] = mean;
                out.variances[c][d] = var.max(floor);
            }
        }
        out
    }
}

/// Seeded k-means++ followed by Lloyd iterations. Returns centroids and assignments.
pub(crate) fn kmeans(points: &[&[f64]], k: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();

    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].to_vec()];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = points.len() - 1;
            for (i, d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[pick].to_vec());
        let c = centers.last().expect("just pushed");
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(dist2(p, c));
        }
    }

    let dim = points[0].len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (a, p) in assign.iter().zip(points) {
            counts[*a] += 1;
            for d in 0..dim {
                sums[*a][d] += p[d];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    (centers, assign)
}

/// Mixture whose components are k-means clusters of `points`. Component
/// weights are the cluster fractions, or `1/m` when `equal_weights` is set.
pub(crate) fn mixture_from_clusters(
    points: &[&[f64]],
    m: usize,
    seed: u64,
    floor: f64,
    equal_weights: bool,
) -> Result<GaussianMixture> {
    if points.len() < m || m == 0 {
        return Err(Error::TooFewPoints {
            points: points.len(),
            components: m,
        });
    }
    let dim = points[0].len();
    let global_var = variance_of(points.iter().copied(), dim, floor);
    let (centers, assign) = kmeans(points, m, seed);
    let mut weights = Vec::with_capacity(m);
    let mut variances = Vec::with_capacity(m);
    for c in 0..m {
        let members: Vec<&[f64]> = assign
            .iter()
            .zip(points)
            .filter(|(a, _)| **a == c)
            .map(|(_, p)| *p)
            .collect();
        weights.push(members.len() as f64 / points.len() as f64);
        if members.len() < 2 {
            variances.push(global_var.clone());
        } else {
            variances.push(variance_of(members.into_iter(), dim, floor));
        }
    }
    if equal_weights {
        weights = vec![1.0 / m as f64; m];
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GaussianMixture::new(weights, centers, variances)
}

pub(crate) fn variance_of<'a>(points: impl Iterator<Item = &'a [f64]> + Clone, dim: usize, floor: f64) -> Vec<f64> {
    let mut n = 0usize;
    let mut mean = vec![0.0; dim];
    for p in points.clone() {
        n += 1;
        for d in 0..dim {
            mean[d] += p[d];
        }
    }
    if n == 0 {
        return vec![1.0f64.max(floor); dim];
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for p in points {
        for d in 0..dim {
            var[d] += (p[d] - mean[d]).powi(2);
        }
    }
    var.iter().map(|v| (v / n as f64).max(floor)).collect()
}

/// Result of [`gmm_fit`], including the per-iteration data log-likelihood.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub mixture: GaussianMixture,
    pub log_likelihoods: Vec<f64>,
}

/// k-means++ initialization followed by EM until the log-likelihood gain drops
/// below `1e-6` or 100 iterations pass.
pub fn gmm_fit(data: &ObservationSequence, m: usize, seed: u64) -> Result<GmmFit> {
    let points: Vec<&[f64]> = data.rows().collect();
    let mut mixture = mixture_from_clusters(&points, m, seed, VARIANCE_FLOOR, false)?;
    let mut log_likelihoods = Vec::new();
    for _ in 0..FIT_MAX_ITER {
        let prepared = mixture.prepare();
        let mut acc = GmmAccumulator::new(m, data.dim());
        let mut ll = 0.0;
        for x in &points {
            ll += prepared.eval(x);
            acc.add(&prepared, x, 1.0);
        }
        let converged = log_likelihoods.last().is_some_and(|prev: &f64| ll - prev < FIT_TOL);
        log_likelihoods.push(ll);
        if converged {
            break;
        }
        mixture = acc.finish(&mixture, VARIANCE_FLOOR);
    }
    Ok(GmmFit {
        mixture,
        log_likelihoods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    #[test]
    fn unit_gaussian_at_its_mean() {
        let g = GaussianMixture::single(vec![0.3], vec![1.0]).unwrap();
        let v = g.log_density(&[0.3]).unwrap();
        assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn identical_components_sum_out() {
        let x = [1.0, -2.0];
        let one = GaussianMixture::single(vec![1.0, -2.0], vec![2.0, 0.5]).unwrap();
        let two = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![1.0, -2.0]; 2],
            vec![vec![2.0, 0.5]; 2],
        )
        .unwrap();
        assert!((one.log_density(&x).unwrap() - two.log_density(&x).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let dim = 4;
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / s).collect();
            let means: Vec<Vec<f64>> = (0..3).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let vars: Vec<Vec<f64>> = (0..3).map(|_| (0..dim).map(|_| rng.random_range(0.2..3.0)).collect()).collect();
            let g = GaussianMixture::new(weights.clone(), means.clone(), vars.clone()).unwrap();
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut direct = 0.0;
            for c in 0..3 {
                let mut p = weights[c];
                for d in 0..dim {
                    let z = x[d] - means[c][d];
                    p *= (-0.5 * z * z / vars[c][d]).exp() / (2.0 * PI * vars[c][d]).sqrt();
                }
                direct += p;
            }
            let got = g.log_density(&x).unwrap().exp();
            assert!(((got - direct) / direct).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = GaussianMixture::uniform(2, 3);
        assert!(matches!(
            g.log_density(&[0.0, 0.0]),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn constructor_enforces_invariants() {
        assert!(GaussianMixture::new(vec![0.6, 0.6], vec![vec![0.0]; 2], vec![vec![1.0]; 2]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![vec![1e-9]]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0, 1.0]], vec![vec![1.0]]).is_err());
    }

    fn two_clusters(seed: u64) -> ObservationSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for i in 0..400 {
            let c = if i % 2 == 0 { 10.0 } else { -10.0 };
            rows.push(vec![c + rng.sample::<f64, _>(StandardNormal), c + rng.sample::<f64, _>(StandardNormal)]);
        }
        ObservationSequence::from_rows(&rows).unwrap()
    }

    #[test]
    fn separates_two_clusters() {
        let fit = gmm_fit(&two_clusters(3), 2, 42).unwrap();
        let mut means: Vec<f64> = fit.mixture.means().iter().map(|m| m[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 10.0).abs() < 0.1 + 0.15, "{means:?}");
        assert!((means[1] - 10.0).abs() < 0.1 + 0.15, "{means:?}");
        for w in fit.mixture.weights() {
            assert!((w - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn means_track_sample_centroids() {
        let data = two_clusters(8);
        let fit = gmm_fit(&data, 2, 1).unwrap();
        let centroid = |sign: f64| {
            let pts: Vec<&[f64]> = data.rows().filter(|r| r[0].signum() == sign).collect();
            pts.iter().map(|r| r[0]).sum::<f64>() / pts.len() as f64
        };
        for m in fit.mixture.means() {
            let target = centroid(m[0].signum());
            assert!((m[0] - target).abs() < 0.1);
        }
    }

    #[test]
    fn identical_points_collapse_to_floor() {
        let data = ObservationSequence::from_rows(&vec![[2.5, -1.0]; 30]).unwrap();
        let fit = gmm_fit(&data, 1, 0).unwrap();
        assert_eq!(fit.mixture.means()[0], vec![2.5, -1.0]);
        assert_eq!(fit.mixture.variances()[0], vec![VARIANCE_FLOOR; 2]);
    }

    #[test]
    fn too_few_points() {
        let data = ObservationSequence::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(gmm_fit(&data, 3, 0), Err(Error::TooFewPoints { points: 2, components: 3 })));
    }

    #[test]
    fn em_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..10 {
            let rows: Vec<Vec<f64>> = (0..300)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0) * rng.random_range(0.5..3.0)).collect())
                .collect();
            let data = ObservationSequence::from_rows(&rows).unwrap();
            let fit = gmm_fit(&data, 4, seed).unwrap();
            for w in fit.log_likelihoods.windows(2) {
                assert!(w[1] - w[0] >= -1e-8, "{} -> {}", w[0], w[1]);
            }
        }
    }
}
