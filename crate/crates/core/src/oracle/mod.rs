//! Ground truth for the monotonic attention marginals `P(c_i = h_j)`.
//!
//! Nothing here calls the expectation recurrence: [`enumerate_alpha_exact`]
//! sums over explicit selection paths and [`monte_carlo_alpha`] runs the hard
//! process in sampling mode.

use crate::attn::{hard_scan, FallOff, MonotonicState, Selector};
use crate::error::{domain, Result};
use crate::numkit::SeededRng;

/// Largest memory length accepted by [`enumerate_alpha_exact`].
pub const MAX_EXACT_T: usize = 8;
/// Largest number of output steps accepted by [`enumerate_alpha_exact`].
pub const MAX_EXACT_U: usize = 6;

/// Selection probabilities `p[i][j]` for `U` output steps over `T` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionProbMatrix {
    rows: Vec<Vec<f64>>,
    t: usize,
}

impl SelectionProbMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let t = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || t == 0 {
            return domain("selection matrix must be non-empty");
        }
        if rows.iter().any(|r| r.len() != t) {
            return domain("selection matrix rows have different lengths");
        }
        if rows.iter().flatten().any(|x| !(0.0..=1.0).contains(x)) {
            return domain("selection probabilities must lie in [0, 1]");
        }
        Ok(Self { rows, t })
    }

    /// Entries i.i.d. uniform on `[lo, hi)`.
    pub fn random(u: usize, t: usize, lo: f64, hi: f64, rng: &mut SeededRng) -> Result<Self> {
        let rows = (0..u)
            .map(|_| (0..t).map(|_| rng.uniform_range(lo, hi)).collect())
            .collect();
        Self::new(rows)
    }

    /// Entries i.i.d. from `{0, 1}` with `P(1) = density`.
    pub fn random_binary(u: usize, t: usize, density: f64, rng: &mut SeededRng) -> Result<Self> {
        let rows = (0..u)
            .map(|_| {
                (0..t)
                    .map(|_| if rng.uniform() < density { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        Self::new(rows)
    }

    pub fn u(&self) -> usize {
        self.rows.len()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Row `i` (0-based output step).
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaEstimate {
    pub alpha: Vec<Vec<f64>>,
    /// Standard error per entry; zero for exact methods.
    pub stderr: Vec<Vec<f64>>,
    /// Number of simulated runs; zero for exact methods.
    pub n_samples: u64,
}

impl AlphaEstimate {
    pub fn residuals(&self) -> Vec<f64> {
        self.alpha.iter().map(|r| residual_mass(r)).collect()
    }
}

/// What happens to the later steps of a run once a step falls off the end of
/// the memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Semantics {
    /// Every later step also yields the zero context.
    Absorbing,
    /// Later steps scan again from the last selected index.
    Rescanning,
}

impl Semantics {
    fn fall_off(self) -> FallOff {
        match self {
            Semantics::Absorbing => FallOff::Absorb,
            Semantics::Rescanning => FallOff::Rescan,
        }
    }
}

/// Exact marginals under absorbing fall-off, by summing the probability of
/// every monotonic selection path `t_1 <= t_2 <= ...`.
pub fn enumerate_alpha_exact(p: &SelectionProbMatrix) -> Result<AlphaEstimate> {
    if p.t() > MAX_EXACT_T || p.u() > MAX_EXACT_U {
        return domain(format!(
            "exact enumeration limited to T <= {MAX_EXACT_T}, U <= {MAX_EXACT_U}; got T = {}, U = {}",
            p.t(),
            p.u()
        ));
    }
    let mut alpha = vec![vec![0.0; p.t()]; p.u()];
    extend_paths(p, 0, 0, 1.0, &mut alpha);
    Ok(AlphaEstimate {
        stderr: vec![vec![0.0; p.t()]; p.u()],
        alpha,
        n_samples: 0,
    })
}

/// Adds the probability of every continuation of a path that reached output
/// step `step` with previous choice `start` (0-based) and probability `prob`.
/// Falling off ends the path, contributing nothing further.
fn extend_paths(p: &SelectionProbMatrix, step: usize, start: usize, prob: f64, alpha: &mut [Vec<f64>]) {
    if step == p.u() || prob == 0.0 {
        return;
    }
    let row = p.row(step);
    let mut skipped = 1.0;
    for j in start..p.t() {
        let path = prob * skipped * row[j];
        alpha[step][j] += path;
        extend_paths(p, step + 1, j, path, alpha);
        skipped *= 1.0 - row[j];
    }
}

/// Empirical marginals from `n` runs of the hard process with
/// `z ~ Bernoulli(p)`.
pub fn monte_carlo_alpha(
    p: &SelectionProbMatrix,
    n: u64,
    rng: &mut SeededRng,
    semantics: Semantics,
) -> Result<AlphaEstimate> {
    if n == 0 {
        return domain("monte carlo needs at least one sample");
    }
    let counts = simulate_counts(p, n, rng, semantics)?;
    Ok(estimate_from_counts(&counts, n))
}

fn simulate_counts(
    p: &SelectionProbMatrix,
    n: u64,
    rng: &mut SeededRng,
    semantics: Semantics,
) -> Result<Vec<Vec<u64>>> {
    let mut counts = vec![vec![0u64; p.t()]; p.u()];
    let fall_off = semantics.fall_off();
    for _ in 0..n {
        let mut state = MonotonicState::start();
        for (i, row) in p.rows().iter().enumerate() {
            let mut selector = Selector::Sample(rng);
            let (selected, next, _) = hard_scan(state, p.t(), fall_off, &mut selector, |j| Ok(row[j - 1]))?;
            if let Some(j) = selected {
                counts[i][j - 1] += 1;
            }
            state = next;
        }
    }
    Ok(counts)
}

fn estimate_from_counts(counts: &[Vec<u64>], n: u64) -> AlphaEstimate {
    let nf = n as f64;
    let alpha: Vec<Vec<f64>> = counts
        .iter()
        .map(|r| r.iter().map(|&c| c as f64 / nf).collect())
        .collect();
    let stderr = alpha
        .iter()
        .map(|r| r.iter().map(|a| (a * (1.0 - a) / nf).sqrt()).collect())
        .collect();
    AlphaEstimate {
        alpha,
        stderr,
        n_samples: n,
    }
}

/// How a Monte-Carlo run is split: shard `k` draws from stream `k` of `seed`
/// and runs `n / shards` samples (the first `n % shards` shards run one
/// extra).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShardPlan {
    pub seed: u64,
    pub shards: u64,
}

impl ShardPlan {
    fn sizes(&self, n: u64) -> Vec<u64> {
        (0..self.shards)
            .map(|k| n / self.shards + u64::from(k < n % self.shards))
            .collect()
    }
}

/// Monte-Carlo estimate split across independent streams. With
/// `parallel = true` shards run on scoped threads; the result is identical to
/// the sequential run for the same plan.
pub fn monte_carlo_alpha_sharded(
    p: &SelectionProbMatrix,
    n: u64,
    plan: ShardPlan,
    semantics: Semantics,
    parallel: bool,
) -> Result<AlphaEstimate> {
    if n == 0 || plan.shards == 0 {
        return domain("monte carlo needs at least one sample and one shard");
    }
    let run = |k: u64, size: u64| {
        let mut rng = SeededRng::new(plan.seed, k);
        simulate_counts(p, size, &mut rng, semantics)
    };
    let sizes = plan.sizes(n);
    let per_shard: Vec<Result<Vec<Vec<u64>>>> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = sizes
                .iter()
                .enumerate()
                .map(|(k, &size)| scope.spawn(move || run(k as u64, size)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("monte carlo shard panicked"))
                .collect()
        })
    } else {
        sizes.iter().enumerate().map(|(k, &size)| run(k as u64, size)).collect()
    };
    let mut total = vec![vec![0u64; p.t()]; p.u()];
    for shard in per_shard {
        for (acc, row) in total.iter_mut().zip(shard?) {
            for (a, c) in acc.iter_mut().zip(row) {
                *a += c;
            }
        }
    }
    Ok(estimate_from_counts(&total, n))
}

/// Probability that a row selects nothing: `1 - sum(alpha_row)`, clamped to
/// `[0, 1]`.
pub fn residual_mass(alpha_row: &[f64]) -> f64 {
    (1.0 - alpha_row.iter().sum::<f64>()).clamp(0.0, 1.0)
}
