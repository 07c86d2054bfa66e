use monattn::attn::{
    hard_step_from_probs, monotonic_alpha_recurrence, monotonic_alpha_scan, monotonic_context, AttentionWeights,
    FallOff, Memory, MonotonicConfig, MonotonicState, Selector,
};
use monattn::numkit::SeededRng;
use monattn::oracle::{
    enumerate_alpha_exact, monte_carlo_alpha, monte_carlo_alpha_sharded, SelectionProbMatrix, Semantics, ShardPlan,
};

fn recurrence_rows(p: &SelectionProbMatrix) -> Vec<Vec<f64>> {
    let mut prev = AttentionWeights::initial(p.t());
    p.rows()
        .iter()
        .map(|row| {
            prev = monotonic_alpha_recurrence(row, &prev).unwrap();
            prev.alpha.clone()
        })
        .collect()
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn recurrence_matches_enumeration() {
    let mut rng = SeededRng::new(11, 0);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let t = rng.int_range(1, 7);
        let u = rng.int_range(1, 5);
        let p = SelectionProbMatrix::random(u, t, 0.05, 0.95, &mut rng).unwrap();
        let exact = enumerate_alpha_exact(&p).unwrap();
        worst = worst.max(max_diff(&recurrence_rows(&p), &exact.alpha));
    }
    assert!(worst < 1e-10, "{worst:e}");
}

#[test]
fn enumeration_by_hand_two_by_two() {
    // p = [[a, b], [c, d]]: row 1 is [a, (1-a) b]; row 2 starts at j=1 with
    // mass a and at j=2 with mass (1-a) b.
    let (a, b, c, d) = (0.3, 0.6, 0.2, 0.9);
    let p = SelectionProbMatrix::new(vec![vec![a, b], vec![c, d]]).unwrap();
    let exact = enumerate_alpha_exact(&p).unwrap();
    let row2 = [a * c, a * (1.0 - c) * d + (1.0 - a) * b * d];
    assert!((exact.alpha[0][0] - a).abs() < 1e-15);
    assert!((exact.alpha[0][1] - (1.0 - a) * b).abs() < 1e-15);
    assert!((exact.alpha[1][0] - row2[0]).abs() < 1e-15);
    assert!((exact.alpha[1][1] - row2[1]).abs() < 1e-15);
}

#[test]
fn scan_matches_recurrence_long_memories() {
    let cfg = MonotonicConfig::default();
    let mut rng = SeededRng::new(12, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let t = rng.int_range(1, 65);
        let p: Vec<f64> = (0..t).map(|_| rng.uniform_range(0.01, 0.99)).collect();
        let mut prev_alpha: Vec<f64> = (0..t).map(|_| rng.uniform()).collect();
        let total: f64 = prev_alpha.iter().sum();
        prev_alpha.iter_mut().for_each(|a| *a /= total);
        let prev = AttentionWeights {
            alpha: prev_alpha,
            row_index: 1,
        };
        let a = monotonic_alpha_recurrence(&p, &prev).unwrap();
        let b = monotonic_alpha_scan(&p, &prev, &cfg).unwrap();
        worst = worst.max(max_diff(&[a.alpha], &[b.alpha]));
    }
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn monte_carlo_agrees_with_exact() {
    let mut rng = SeededRng::new(13, 0);
    let mut mc_rng = SeededRng::new(13, 1);
    for _ in 0..5 {
        let t = rng.int_range(1, 7);
        let u = rng.int_range(1, 5);
        let p = SelectionProbMatrix::random(u, t, 0.05, 0.95, &mut rng).unwrap();
        let exact = enumerate_alpha_exact(&p).unwrap();
        let mc = monte_carlo_alpha(&p, 20_000, &mut mc_rng, Semantics::Absorbing).unwrap();
        for i in 0..u {
            for j in 0..t {
                let err = (mc.alpha[i][j] - exact.alpha[i][j]).abs();
                assert!(err <= 4.0 * mc.stderr[i][j] || err <= 0.01, "({i},{j}): {err}");
            }
        }
    }
}

#[test]
fn rescanning_differs_from_absorbing() {
    // Row 1 falls off with probability 0.81; under rescanning row 2 still
    // gets a chance at entry 1. Only a row-1 pick of entry 2 (0.09) rules it
    // out, so the marginal is (0.1 + 0.81) * 0.9.
    let p = SelectionProbMatrix::new(vec![vec![0.1, 0.1], vec![0.9, 0.9]]).unwrap();
    let exact = enumerate_alpha_exact(&p).unwrap();
    let mut rng = SeededRng::new(14, 0);
    let mc = monte_carlo_alpha(&p, 50_000, &mut rng, Semantics::Rescanning).unwrap();
    assert!((exact.alpha[1][0] - 0.09).abs() < 1e-12);
    assert!((mc.alpha[1][0] - 0.819).abs() < 0.01);
}

#[test]
fn sharded_monte_carlo_is_reproducible_and_thread_independent() {
    let mut rng = SeededRng::new(15, 0);
    let p = SelectionProbMatrix::random(3, 5, 0.1, 0.9, &mut rng).unwrap();
    let plan = ShardPlan { seed: 99, shards: 4 };
    let serial = monte_carlo_alpha_sharded(&p, 10_001, plan, Semantics::Absorbing, false).unwrap();
    let parallel = monte_carlo_alpha_sharded(&p, 10_001, plan, Semantics::Absorbing, true).unwrap();
    assert_eq!(serial, parallel);
    assert_eq!(serial.n_samples, 10_001);
}

#[test]
fn binary_probabilities_make_hard_and_soft_contexts_equal() {
    let cfg = MonotonicConfig::default();
    let mut rng = SeededRng::new(16, 0);
    for _ in 0..100 {
        let t = rng.int_range(1, 10);
        let u = rng.int_range(1, 8);
        let density = rng.uniform_range(0.1, 0.9);
        let p = SelectionProbMatrix::random_binary(u, t, density, &mut rng).unwrap();
        let entries: Vec<Vec<f64>> = (0..t).map(|_| (0..3).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).collect();
        let memory = Memory::new(&entries).unwrap();
        let mut state = MonotonicState::start();
        let mut alpha = AttentionWeights::initial(t);
        for row in p.rows() {
            let hard = hard_step_from_probs(row, &memory, state, FallOff::Absorb, Selector::Threshold(0.5)).unwrap();
            state = hard.state;
            alpha = monotonic_alpha_scan(row, &alpha, &cfg).unwrap();
            let soft = monotonic_context(&alpha, &memory).unwrap();
            assert_eq!(hard.context, soft);
        }
    }
}
