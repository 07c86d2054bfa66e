use super::{EnergyKernel, EnergyParams, FallOff, Memory, MonotonicConfig, MonotonicState};
use crate::error::{domain, Result};
use crate::numkit::{draw_bernoulli, sigmoid, SeededRng};

/// How the hard process turns a selection probability into a decision.
pub enum Selector<'a> {
    /// Deterministic `p > tau` (strict; a tie does not select).
    Threshold(f64),
    /// `z ~ Bernoulli(p)`.
    Sample(&'a mut SeededRng),
}

impl Selector<'_> {
    fn select(&mut self, p: f64) -> Result<bool> {
        match self {
            Selector::Threshold(tau) => Ok(p > *tau),
            Selector::Sample(rng) => draw_bernoulli(rng, p),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HardStep {
    pub context: Vec<f64>,
    pub state: MonotonicState,
    /// Chosen memory index (1-based), or `None` when the scan fell off the end.
    pub selected: Option<usize>,
    /// Number of selection probabilities (energies) evaluated.
    pub energy_evals: usize,
}

/// One output step of the hard monotonic process over a memory of length
/// `t`. `prob(j)` is evaluated lazily for `j = t_prev, t_prev + 1, ...`
/// (1-based) and the scan stops at the first selected entry.
///
/// Returns the selected index, the next state and the number of `prob`
/// calls.
pub fn hard_scan(
    state: MonotonicState,
    t: usize,
    fall_off: FallOff,
    selector: &mut Selector<'_>,
    mut prob: impl FnMut(usize) -> Result<f64>,
) -> Result<(Option<usize>, MonotonicState, usize)> {
    if state.t_prev < 1 || state.t_prev > t {
        return domain(format!("t_prev = {} outside 1..={t}", state.t_prev));
    }
    if state.exhausted && fall_off == FallOff::Absorb {
        return Ok((None, state, 0));
    }
    let mut evals = 0;
    for j in state.t_prev..=t {
        evals += 1;
        if selector.select(prob(j)?)? {
            let next = MonotonicState {
                t_prev: j,
                exhausted: false,
            };
            return Ok((Some(j), next, evals));
        }
    }
    let next = MonotonicState {
        t_prev: state.t_prev,
        exhausted: true,
    };
    Ok((None, next, evals))
}

fn context_for(memory: &Memory, selected: Option<usize>) -> Vec<f64> {
    match selected {
        Some(j) => memory.entry(j).to_vec(),
        None => vec![0.0; memory.dim()],
    }
}

fn hard_step_with(
    params: &EnergyParams,
    s_prev: &[f64],
    memory: &Memory,
    state: MonotonicState,
    fall_off: FallOff,
    mut selector: Selector<'_>,
) -> Result<HardStep> {
    let kernel = params.kernel()?;
    kernel.check_shapes(s_prev, memory.row(0))?;
    let mut query: Option<Vec<f64>> = None;
    let (selected, state, energy_evals) = hard_scan(state, memory.len(), fall_off, &mut selector, |j| {
        let q = query.get_or_insert_with(|| kernel.query(s_prev));
        Ok(sigmoid(kernel.score(q, &kernel.key(memory.entry(j)))))
    })?;
    Ok(HardStep {
        context: context_for(memory, selected),
        state,
        selected,
        energy_evals,
    })
}

/// Deterministic hard monotonic step (`p > cfg.tau`, no noise). Inspects
/// memory entries from `state.t_prev` onward, one energy per inspected entry,
/// and never reads entries before `t_prev`.
pub fn hard_monotonic_step(
    params: &EnergyParams,
    s_prev: &[f64],
    memory: &Memory,
    state: MonotonicState,
    cfg: &MonotonicConfig,
) -> Result<HardStep> {
    hard_step_with(params, s_prev, memory, state, cfg.fall_off, Selector::Threshold(cfg.tau))
}

/// Hard monotonic step that samples `z ~ Bernoulli(p)` instead of
/// thresholding.
pub fn hard_monotonic_step_sampled(
    params: &EnergyParams,
    s_prev: &[f64],
    memory: &Memory,
    state: MonotonicState,
    cfg: &MonotonicConfig,
    rng: &mut SeededRng,
) -> Result<HardStep> {
    hard_step_with(params, s_prev, memory, state, cfg.fall_off, Selector::Sample(rng))
}

/// Hard step driven by a precomputed row of selection probabilities.
pub fn hard_step_from_probs(
    p_row: &[f64],
    memory: &Memory,
    state: MonotonicState,
    fall_off: FallOff,
    mut selector: Selector<'_>,
) -> Result<HardStep> {
    if p_row.len() != memory.len() {
        return domain(format!(
            "p row has {} entries for a memory of {}",
            p_row.len(),
            memory.len()
        ));
    }
    super::check_probs(p_row)?;
    let (selected, state, energy_evals) =
        hard_scan(state, memory.len(), fall_off, &mut selector, |j| Ok(p_row[j - 1]))?;
    Ok(HardStep {
        context: context_for(memory, selected),
        state,
        selected,
        energy_evals,
    })
}

/// Stateful online decoder-side attention. Memory keys are projected lazily,
/// the first time the scan reaches them, so entry `j` is never touched before
/// the process gets there.
pub struct HardMonotonicAttention<'a> {
    kernel: EnergyKernel<'a>,
    memory: &'a Memory,
    keys: Vec<f64>,
    keys_ready: usize,
    state: MonotonicState,
    tau: f64,
    fall_off: FallOff,
    energy_evals: usize,
}

impl<'a> HardMonotonicAttention<'a> {
    pub fn new(params: &'a EnergyParams, memory: &'a Memory, cfg: &MonotonicConfig) -> Result<Self> {
        cfg.validate()?;
        let kernel = params.kernel()?;
        if memory.dim() != params.d_h() {
            return domain("memory dimension does not match energy parameters");
        }
        Ok(Self {
            kernel,
            memory,
            keys: Vec::with_capacity(memory.len() * kernel.key_dim()),
            keys_ready: 0,
            state: MonotonicState::start(),
            tau: cfg.tau,
            fall_off: cfg.fall_off,
            energy_evals: 0,
        })
    }

    pub fn state(&self) -> MonotonicState {
        self.state
    }

    /// Total energies evaluated so far.
    pub fn energy_evals(&self) -> usize {
        self.energy_evals
    }

    /// Number of memory entries whose key has been projected.
    pub fn keys_ready(&self) -> usize {
        self.keys_ready
    }

    pub fn step(&mut self, s_prev: &[f64]) -> Result<HardStep> {
        self.step_with_offset(s_prev, |_| 0.0)
    }

    /// As [`step`](Self::step), adding `offset(j)` (1-based `j`) to each
    /// energy before the sigmoid.
    pub fn step_with_offset(&mut self, s_prev: &[f64], offset: impl Fn(usize) -> f64) -> Result<HardStep> {
        if s_prev.len() != self.kernel.params().d_s() {
            return domain("decoder state dimension does not match energy parameters");
        }
        let kernel = self.kernel;
        let memory = self.memory;
        let kd = kernel.key_dim();
        let keys = &mut self.keys;
        let keys_ready = &mut self.keys_ready;
        let mut query: Option<Vec<f64>> = None;
        let mut selector = Selector::Threshold(self.tau);
        let (selected, state, evals) = hard_scan(self.state, memory.len(), self.fall_off, &mut selector, |j| {
            while *keys_ready < j {
                let start = keys.len();
                keys.resize(start + kd, 0.0);
                kernel.key_into(memory.row(*keys_ready), &mut keys[start..]);
                *keys_ready += 1;
            }
            let q = query.get_or_insert_with(|| kernel.query(s_prev));
            let key = &keys[(j - 1) * kd..j * kd];
            Ok(sigmoid(kernel.score(q, key) + offset(j)))
        })?;
        self.state = state;
        self.energy_evals += evals;
        Ok(HardStep {
            context: context_for(memory, selected),
            state,
            selected,
            energy_evals: evals,
        })
    }
}
