use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::frontend::ObservationSequence;

fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

fn random_emissions(rng: &mut ChaCha8Rng, n: usize) -> Vec<GaussianMixture> {
    (0..n)
        .map(|_| GaussianMixture::single(vec![rng.random_range(-2.0..2.0)], vec![rng.random_range(0.3..2.0)]).unwrap())
        .collect()
}

/// Fully connected 3-state second-order model (the circular support is full at N = 3).
fn random_chmm2(rng: &mut ChaCha8Rng) -> Chmm2Model {
    let n = 3;
    let v: Vec<f64> = (0..n).flat_map(|_| random_row(rng, n)).collect();
    let trans3: Vec<f64> = (0..n * n).flat_map(|_| random_row(rng, n)).collect();
    Chmm2Model::new(v, trans3, circular_support(n), random_emissions(rng, n)).unwrap()
}

fn random_chmm1(rng: &mut ChaCha8Rng, n: usize) -> Chmm1Model {
    let pi = random_row(rng, n);
    let trans: Vec<f64> = (0..n).flat_map(|_| random_row(rng, n)).collect();
    Chmm1Model::new(pi, trans, vec![true; n * n], random_emissions(rng, n)).unwrap()
}

fn random_obs(rng: &mut ChaCha8Rng, len: usize) -> ObservationSequence {
    ObservationSequence::new(1, (0..len).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
}

fn density(g: &GaussianMixture, x: f64) -> f64 {
    g.log_density(&[x]).unwrap().exp()
}

/// Every path `q_0..q_T` in the linear domain. Returns (total, best score, best q_1..q_T).
fn enumerate2(model: &Chmm2Model, obs: &ObservationSequence) -> (f64, f64, Vec<usize>) {
    let n = model.n_states();
    let t_len = obs.len();
    let mut total = 0.0;
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut path = vec![0usize; t_len + 1];
    let count = n.pow(t_len as u32 + 1);
    for code in 0..count {
        let mut c = code;
        for q in path.iter_mut() {
            *q = c % n;
            c /= n;
        }
        let mut p = model.v(path[0], path[1]);
        for t in 1..=t_len {
            if t >= 2 {
                p *= model.a(path[t - 2], path[t - 1], path[t]);
            }
            p *= density(&model.emissions()[path[t]], obs.row(t - 1)[0]);
        }
        total += p;
        if p.ln() > best.0 {
            best = (p.ln(), path[1..].to_vec());
        }
    }
    (total, best.0, best.1)
}

fn enumerate1(model: &Chmm1Model, obs: &ObservationSequence) -> (f64, f64, Vec<usize>) {
    let n = model.n_states();
    let t_len = obs.len();
    let mut total = 0.0;
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut path = vec![0usize; t_len];
    for code in 0..n.pow(t_len as u32) {
        let mut c = code;
        for q in path.iter_mut() {
            *q = c % n;
            c /= n;
        }
        let mut p = model.pi()[path[0]];
        for t in 0..t_len {
            if t >= 1 {
                p *= model.a(path[t - 1], path[t]);
            }
            p *= density(&model.emissions()[path[t]], obs.row(t)[0]);
        }
        total += p;
        if p.ln() > best.0 {
            best = (p.ln(), path.clone());
        }
    }
    (total, best.0, best.1)
}

#[test]
fn init_chmm2_is_exact() {
    let model = init_chmm2(9, 5, 12).unwrap();
    let n = 9;
    for i in 0..n {
        for k in 0..n {
            assert_eq!(model.v(i, k), 1.0 / 9.0);
        }
        for j in 0..n {
            let mut total = 0.0;
            for k in 0..n {
                let a = model.a(i, j, k);
                if model.is_supported(j, k) {
                    assert_eq!(a, 1.0 / 3.0);
                } else {
                    assert_eq!(a, 0.0);
                }
                total += a;
            }
            assert_eq!(total, 1.0);
        }
    }
    for g in model.emissions() {
        assert_eq!(g.weights(), &[0.2; 5]);
    }
    assert!(matches!(init_chmm2(2, 5, 12), Err(crate::Error::InvalidModel(_))));
}

#[test]
fn circular_support_has_three_successors() {
    let s = circular_support(9);
    for j in 0..9 {
        let succ: Vec<usize> = (0..9).filter(|&k| s[j * 9 + k]).collect();
        assert_eq!(succ.len(), 3);
        assert!(succ.contains(&((j + 8) % 9)) && succ.contains(&j) && succ.contains(&((j + 1) % 9)));
    }
}

#[test]
fn forward2_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for trial in 0..60 {
        let model = random_chmm2(&mut rng);
        let obs = random_obs(&mut rng, 4 + trial % 3);
        let (total, best, best_path) = enumerate2(&model, &obs);
        let ll = likelihood2(&model, &obs).unwrap();
        assert!((ll.exp() - total).abs() / total < 1e-10, "{} vs {}", ll.exp(), total);
        let (path, score) = viterbi2(&model, &obs).unwrap();
        assert!((score - best).abs() < 1e-10);
        assert_eq!(path, best_path);
        assert!(score <= ll);
    }
}

#[test]
fn backward2_final_slice_and_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let model = random_chmm2(&mut rng);
        let obs = random_obs(&mut rng, 4);
        let fwd = forward2(&model, &obs).unwrap();
        let bwd = backward2(&model, &obs).unwrap();
        assert!(bwd.slice(3).iter().all(|&b| b == (1.0f64 / 3.0).ln()));
        let total = fwd.log_likelihood();
        for t in 0..4 {
            let from_slice = slice_log_likelihood(&fwd, &bwd, t);
            assert!((from_slice - total).abs() <= 1e-10 * total.abs().max(1.0));
        }
    }
}

fn single_state_chmm2(mean: f64) -> Chmm2Model {
    let g = GaussianMixture::single(vec![mean], vec![1.5]).unwrap();
    Chmm2Model::new(vec![1.0], vec![1.0], vec![true], vec![g]).unwrap()
}

#[test]
fn single_state_collapses_to_emissions() {
    let model = single_state_chmm2(0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let obs = random_obs(&mut rng, 7);
    let g = &model.emissions()[0];
    let per_frame: Vec<f64> = obs.rows().map(|x| g.log_density(x).unwrap()).collect();
    let ll = likelihood2(&model, &obs).unwrap();
    assert!((ll - per_frame.iter().sum::<f64>()).abs() < 1e-12);
    let bwd = backward2(&model, &obs).unwrap();
    for t in 0..obs.len() {
        let tail: f64 = per_frame[t + 1..].iter().sum();
        assert!((bwd.beta(t, 0, 0) - tail).abs() < 1e-12);
    }
}

#[test]
fn identical_emissions_sum_out_transitions() {
    // With one shared density g, Σ over paths is Σ_{i,k} v_k(i) · Π g(O_t) = N · Π g(O_t).
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = GaussianMixture::single(vec![0.2], vec![0.7]).unwrap();
    let base = random_chmm2(&mut rng);
    let model = base.with_emissions(vec![g.clone(); 3]).unwrap();
    let obs = random_obs(&mut rng, 12);
    let expect = 3f64.ln() + obs.rows().map(|x| g.log_density(x).unwrap()).sum::<f64>();
    assert!((likelihood2(&model, &obs).unwrap() - expect).abs() < 1e-10);
}

#[test]
fn density_scaling_shifts_by_t_log_c() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = random_chmm2(&mut rng);
    let obs = random_obs(&mut rng, 9);
    let s: f64 = 2.5;
    let scaled_em: Vec<GaussianMixture> = model
        .emissions()
        .iter()
        .map(|g| GaussianMixture::single(vec![g.means()[0][0] * s], vec![g.variances()[0][0] * s * s]).unwrap())
        .collect();
    let scaled = model.clone().with_emissions(scaled_em).unwrap();
    let scaled_obs = ObservationSequence::new(1, obs.as_slice().iter().map(|x| x * s).collect()).unwrap();
    let shift = likelihood2(&scaled, &scaled_obs).unwrap() - likelihood2(&model, &obs).unwrap();
    assert!((shift - 9.0 * (1.0 / s).ln()).abs() < 1e-10);
}

#[test]
fn short_sequences_are_rejected() {
    let model = init_chmm2(3, 1, 1).unwrap();
    let obs = ObservationSequence::new(1, vec![0.0]).unwrap();
    assert!(matches!(forward2(&model, &obs), Err(crate::Error::SequenceTooShort(1))));
    assert!(matches!(viterbi2(&model, &obs), Err(crate::Error::SequenceTooShort(1))));
    assert!(matches!(
        train_chmm2(&model, &[], &TrainConfig::default()),
        Err(crate::Error::Empty(_))
    ));
    let wrong_dim = ObservationSequence::new(2, vec![0.0; 8]).unwrap();
    assert!(matches!(likelihood2(&model, &wrong_dim), Err(crate::Error::DimensionMismatch { .. })));
}

#[test]
fn viterbi_follows_forced_cycle() {
    // a_ijk = 1 for k = j + 1 (mod 3); sharp emissions centered at the state index.
    let n = 3;
    let mut trans3 = vec![0.0; 27];
    for i in 0..n {
        for j in 0..n {
            trans3[(i * n + j) * n + (j + 1) % n] = 1.0;
        }
    }
    let em: Vec<GaussianMixture> = (0..n)
        .map(|s| GaussianMixture::single(vec![s as f64 * 10.0], vec![0.01]).unwrap())
        .collect();
    let model = Chmm2Model::new(vec![1.0 / 3.0; 9], trans3, circular_support(3), em).unwrap();
    let obs = ObservationSequence::new(1, vec![10.0, 20.0, 0.0, 10.0, 20.0, 0.0, 10.0]).unwrap();
    let (path, _) = viterbi2(&model, &obs).unwrap();
    assert_eq!(path, vec![1, 2, 0, 1, 2, 0, 1]);
}

#[test]
fn training_preserves_stochasticity_and_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let truth = {
        let mut m = init_chmm2(5, 2, 2).unwrap();
        let em: Vec<GaussianMixture> = (0..5)
            .map(|s| GaussianMixture::single(vec![s as f64 * 3.0, -(s as f64)], vec![1.0, 1.0]).unwrap())
            .collect();
        m = m.with_emissions(em).unwrap();
        m
    };
    let data: Vec<ObservationSequence> = (0..15).map(|_| truth.sample(30, &mut rng).unwrap().1).collect();
    let mut init = init_chmm2(5, 2, 2).unwrap();
    init.initialize_emissions(&data, EmissionInit::UniformSegmentation, 3, VARIANCE_FLOOR).unwrap();
    let (trained, report) = train_chmm2(&init, &data, &TrainConfig::fixed_iterations(15)).unwrap();
    assert_eq!(report.log_likelihoods.len(), 16);
    for w in report.log_likelihoods.windows(2) {
        assert!(w[1] - w[0] >= -1e-8);
    }
    for i in 0..5 {
        assert!(((0..5).map(|k| trained.v(i, k)).sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..5 {
            let mut total = 0.0;
            for k in 0..5 {
                if !trained.is_supported(j, k) {
                    assert_eq!(trained.a(i, j, k), 0.0);
                }
                total += trained.a(i, j, k);
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn training_stops_at_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let truth = random_chmm2(&mut rng);
    let data: Vec<ObservationSequence> = (0..10).map(|_| truth.sample(20, &mut rng).unwrap().1).collect();
    let (_, report) = train_chmm2(&truth, &data, &TrainConfig::default()).unwrap();
    assert!(report.iterations() <= 50);
    let gains: Vec<f64> = report.log_likelihoods.windows(2).map(|w| w[1] - w[0]).collect();
    if report.converged {
        assert!(*gains.last().unwrap() < 1e-4);
    }
    // starting from the generating model the gains shrink toward zero
    assert!(gains.last().unwrap().abs() <= gains[0].abs() + 1e-12);
}

#[test]
fn chmm1_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..40 {
        let model = random_chmm1(&mut rng, 3);
        let obs = random_obs(&mut rng, 5);
        let (total, best, best_path) = enumerate1(&model, &obs);
        let ll = likelihood1(&model, &obs).unwrap();
        assert!((ll.exp() - total).abs() / total < 1e-10);
        let (path, score) = viterbi1(&model, &obs).unwrap();
        assert!((score - best).abs() < 1e-10);
        assert_eq!(path, best_path);
    }
}

#[test]
fn chmm1_circular_init_is_symmetric() {
    let model = init_chmm1(9, 2, 3).unwrap();
    assert_eq!(model.symmetry_deviation(), 0.0);
    for i in 0..9 {
        for j in 0..9 {
            assert_eq!(model.a(i, j), model.a(j, i));
        }
    }
    let ergodic = init_ergodic(3, 10, 3).unwrap();
    assert!(ergodic.transitions().iter().all(|&a| a == 1.0 / 3.0));
}

#[test]
fn chmm1_single_state_sums_emissions() {
    let g = GaussianMixture::single(vec![1.0], vec![0.5]).unwrap();
    let model = Chmm1Model::new(vec![1.0], vec![1.0], vec![true], vec![g.clone()]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let obs = random_obs(&mut rng, 6);
    let expect: f64 = obs.rows().map(|x| g.log_density(x).unwrap()).sum();
    assert!((likelihood1(&model, &obs).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn chmm1_training_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let data: Vec<ObservationSequence> = (0..8).map(|_| random_obs(&mut rng, 25)).collect();
    let mut init = init_chmm1(4, 2, 1).unwrap();
    init.initialize_emissions(&data, EmissionInit::PooledKMeans, 1, VARIANCE_FLOOR).unwrap();
    let (trained, report) = train_chmm1(&init, &data, &TrainConfig::fixed_iterations(20)).unwrap();
    for w in report.log_likelihoods.windows(2) {
        assert!(w[1] - w[0] >= -1e-8);
    }
    let support = trained.support();
    for (p, a) in trained.transitions().iter().enumerate() {
        if !support[p] {
            assert_eq!(*a, 0.0);
        }
    }
}

#[test]
fn model_json_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let model = random_chmm2(&mut rng);
    let text = serde_json::to_string(&model).unwrap();
    let back: Chmm2Model = serde_json::from_str(&text).unwrap();
    assert_eq!(back, model);
    for (a, b) in back.trans3().iter().zip(model.trans3()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn permuting_states_permutes_paths(seed in any::<u64>(), perm_idx in 0usize..6) {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let perm = perms[perm_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_chmm2(&mut rng);
        let obs = random_obs(&mut rng, 10);
        let relabeled = model.permuted(&perm).unwrap();
        let ll = likelihood2(&model, &obs).unwrap();
        let ll_p = likelihood2(&relabeled, &obs).unwrap();
        prop_assert!((ll - ll_p).abs() <= 1e-12 * ll.abs().max(1.0));
        let (path, _) = viterbi2(&model, &obs).unwrap();
        let (path_p, _) = viterbi2(&relabeled, &obs).unwrap();
        let mapped: Vec<usize> = path.iter().map(|&s| perm[s]).collect();
        prop_assert_eq!(mapped, path_p);
    }

    #[test]
    fn log_domain_matches_linear_forward(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_chmm1(&mut rng, 4);
        let obs = random_obs(&mut rng, 8);
        let n = 4;
        let b = |s: usize, t: usize| density(&model.emissions()[s], obs.row(t)[0]);
        let mut alpha: Vec<f64> = (0..n).map(|s| model.pi()[s] * b(s, 0)).collect();
        for t in 1..8 {
            alpha = (0..n)
                .map(|j| (0..n).map(|i| alpha[i] * model.a(i, j)).sum::<f64>() * b(j, t))
                .collect();
        }
        let linear: f64 = alpha.iter().sum();
        let ll = likelihood1(&model, &obs).unwrap();
        prop_assert!((ll.exp() - linear).abs() / linear < 1e-10);
    }
}
