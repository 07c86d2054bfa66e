//! Attention mechanisms: energy functions, softmax attention, soft
//! (expected-value) monotonic attention and the hard online monotonic step.
//!
//! Memory indices exposed through [`MonotonicState`] and
//! [`HardStep::selected`] are 1-based; slices are ordinary 0-based Rust
//! slices.

mod energy;
mod hard;
pub(crate) mod soft;

pub use energy::{
    energy_bahdanau, energy_dot, energy_modified, DotEnergyParams, EnergyKernel, EnergyKind,
    EnergyParams, MonotonicEnergyParams,
};
pub use hard::{
    hard_monotonic_step, hard_monotonic_step_sampled, hard_scan, hard_step_from_probs, HardMonotonicAttention,
    HardStep, Selector,
};
pub use soft::{
    alpha_recurrence_raw, monotonic_alpha_recurrence, monotonic_alpha_scan, monotonic_alpha_scan_single_pass,
    monotonic_context, scan_segments,
    soft_monotonic_step, softmax_attention, Noise, SoftStep, SoftmaxAttention,
};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numkit::Matrix;

/// The encoder hidden states `h_1..h_T`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Memory {
    states: Matrix,
}

impl Memory {
    pub fn new(entries: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(Matrix::from_rows(entries)?)
    }

    pub fn from_matrix(states: Matrix) -> Result<Self> {
        if states.rows() == 0 {
            return domain("memory must hold at least one entry");
        }
        if states.cols() == 0 {
            return domain("memory entries must have positive dimension");
        }
        if !states.is_finite() {
            return domain("memory contains non-finite entries");
        }
        Ok(Self { states })
    }

    /// Number of entries `T`.
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }

    /// Entry `k` (0-based).
    pub fn row(&self, k: usize) -> &[f64] {
        self.states.row(k)
    }

    /// Entry `j` (1-based, as in [`MonotonicState`]).
    pub fn entry(&self, j: usize) -> &[f64] {
        self.states.row(j - 1)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.states
    }

    /// `sum_j weights[j] * h_j`
    pub fn weighted_sum(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (k, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                crate::numkit::axpy(w, self.row(k), &mut out);
            }
        }
        out
    }
}

/// One row of attention weights over the memory.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub alpha: Vec<f64>,
    /// Output timestep this row belongs to; 0 for the initial row.
    pub row_index: usize,
}

impl AttentionWeights {
    /// The initial row `alpha_0 = delta_1`: all mass on the first entry.
    pub fn initial(t: usize) -> Self {
        let mut alpha = vec![0.0; t];
        if t > 0 {
            alpha[0] = 1.0;
        }
        Self {
            alpha,
            row_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.alpha.iter().sum()
    }
}

/// Denominator handling for the cumulative-product form of the recurrence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenomMode {
    /// Clamp the exclusive cumulative product to `[eps, 1]`.
    Clamped,
    /// Replace the denominator by 1.
    Unit,
}

/// What the hard process does after scanning to the end of the memory
/// without selecting anything.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FallOff {
    /// The memory is exhausted: every later step yields the zero context
    /// without evaluating any energy. This is the process whose marginals the
    /// expectation recurrence computes.
    Absorb,
    /// Keep `t_prev` and scan again from it at the next step.
    Rescan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicConfig {
    /// Std of the pre-sigmoid Gaussian noise used in training mode.
    pub noise_std: f64,
    /// Selection threshold for deterministic hard decoding.
    pub tau: f64,
    /// Denominator clamp for the scan form.
    pub eps: f64,
    pub denom_mode: DenomMode,
    pub fall_off: FallOff,
    pub seed: u64,
}

impl Default for MonotonicConfig {
    fn default() -> Self {
        Self {
            noise_std: 1.0,
            tau: 0.5,
            eps: 1e-10,
            denom_mode: DenomMode::Clamped,
            fall_off: FallOff::Absorb,
            seed: 0,
        }
    }
}

impl MonotonicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return domain(format!("noise_std {} must be >= 0", self.noise_std));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return domain(format!("tau {} outside (0, 1)", self.tau));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return domain(format!("eps {} outside (0, 1)", self.eps));
        }
        Ok(())
    }
}

/// Position of the hard monotonic process between output steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MonotonicState {
    /// Memory index (1-based) chosen at the previous output step.
    pub t_prev: usize,
    /// Set once a scan has run off the end of the memory.
    pub exhausted: bool,
}

impl MonotonicState {
    pub fn start() -> Self {
        Self {
            t_prev: 1,
            exhausted: false,
        }
    }
}

impl Default for MonotonicState {
    fn default() -> Self {
        Self::start()
    }
}

pub(crate) fn check_probs(p: &[f64]) -> Result<()> {
    match p.iter().position(|x| !(0.0..=1.0).contains(x)) {
        Some(k) => domain(format!("selection probability p[{k}] = {} outside [0, 1]", p[k])),
        None => Ok(()),
    }
}
