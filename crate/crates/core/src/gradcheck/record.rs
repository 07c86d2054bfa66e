use super::backward::{backward_context, backward_monotonic_alpha, key_backward, query_backward, score_backward, sigmoid_backward};
use crate::attn::{
    monotonic_alpha_recurrence, monotonic_context, AttentionWeights, EnergyParams, Memory, MonotonicConfig, Noise,
    SoftStep,
};
use crate::error::{domain, Result};
use crate::numkit::{draw_gaussian, sigmoid, Matrix};

/// Forward trace of one soft monotonic step: its inputs, the noise that was
/// drawn, and every intermediate the backward pass reads.
#[derive(Clone, Debug, PartialEq)]
pub struct ComputationRecord {
    pub s_prev: Vec<f64>,
    pub alpha_prev: AttentionWeights,
    pub query: Vec<f64>,
    /// One projected key per memory entry.
    pub keys: Matrix,
    pub step: SoftStep,
}

impl ComputationRecord {
    /// Runs a soft step exactly as [`crate::attn::soft_monotonic_step`] does
    /// and keeps the trace.
    pub fn forward(
        params: &EnergyParams,
        s_prev: &[f64],
        memory: &Memory,
        alpha_prev: &AttentionWeights,
        cfg: &MonotonicConfig,
        noise: Noise<'_>,
    ) -> Result<Self> {
        let noise = match noise {
            Noise::Off => vec![0.0; memory.len()],
            Noise::Train(rng) => draw_gaussian(rng, memory.len(), cfg.noise_std)?,
        };
        Self::forward_with_noise(params, s_prev, memory, alpha_prev, noise)
    }

    /// Forward pass with the pre-sigmoid noise given explicitly.
    pub fn forward_with_noise(
        params: &EnergyParams,
        s_prev: &[f64],
        memory: &Memory,
        alpha_prev: &AttentionWeights,
        noise: Vec<f64>,
    ) -> Result<Self> {
        let t = memory.len();
        if alpha_prev.len() != t || noise.len() != t {
            return domain(format!(
                "step record: memory of {t} entries, previous attention {}, noise {}",
                alpha_prev.len(),
                noise.len()
            ));
        }
        let kernel = params.kernel()?;
        kernel.check_shapes(s_prev, memory.row(0))?;
        let query = kernel.query(s_prev);
        let mut keys = Matrix::zeros(t, kernel.key_dim());
        let kd = kernel.key_dim();
        for k in 0..t {
            kernel.key_into(memory.row(k), &mut keys.data_mut()[k * kd..(k + 1) * kd]);
        }
        let energies: Vec<f64> = (0..t).map(|k| kernel.score(&query, keys.row(k))).collect();
        let p: Vec<f64> = energies.iter().zip(&noise).map(|(e, n)| sigmoid(e + n)).collect();
        let alpha = monotonic_alpha_recurrence(&p, alpha_prev)?;
        let context = monotonic_context(&alpha, memory)?;
        Ok(Self {
            s_prev: s_prev.to_vec(),
            alpha_prev: alpha_prev.clone(),
            query,
            keys,
            step: SoftStep {
                energies,
                noise,
                p,
                alpha,
                context,
            },
        })
    }

    /// Recomputes the forward pass from the recorded inputs and noise.
    pub fn replay(&self, params: &EnergyParams, memory: &Memory) -> Result<Self> {
        Self::forward_with_noise(params, &self.s_prev, memory, &self.alpha_prev, self.step.noise.clone())
    }
}

/// Gradients of one soft step with respect to everything it reads.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGrads {
    pub params: EnergyParams,
    pub s_prev: Vec<f64>,
    /// Row-major `T x d_h`.
    pub memory: Vec<f64>,
    pub alpha_prev: Vec<f64>,
}

/// Backward through context, recurrence, sigmoid and energy for a recorded
/// step. `dalpha` is an optional extra upstream sensitivity on the attention
/// row itself (from later steps).
pub fn backward_full_step(
    params: &EnergyParams,
    memory: &Memory,
    record: &ComputationRecord,
    dcontext: &[f64],
    dalpha: Option<&[f64]>,
) -> Result<StepGrads> {
    let t = memory.len();
    let d_h = memory.dim();
    if let Some(extra) = dalpha {
        if extra.len() != t {
            return domain("full-step backward: upstream alpha has the wrong length");
        }
    }
    let kernel = params.kernel()?;
    let mut dmemory = vec![0.0; t * d_h];
    let mut da = backward_context(&record.step.alpha.alpha, memory, dcontext, &mut dmemory)?;
    if let Some(extra) = dalpha {
        for (a, e) in da.iter_mut().zip(extra) {
            *a += e;
        }
    }
    let (dp, dalpha_prev) = backward_monotonic_alpha(&record.step.p, &record.alpha_prev.alpha, &da)?;
    let mut dparams = params.zeros_like();
    let mut dquery = vec![0.0; record.query.len()];
    let mut dkey = vec![0.0; kernel.key_dim()];
    for k in 0..t {
        let de = sigmoid_backward(record.step.p[k], dp[k]);
        dkey.iter_mut().for_each(|x| *x = 0.0);
        score_backward(&kernel, &record.query, record.keys.row(k), de, &mut dparams, &mut dquery, &mut dkey);
        key_backward(params, memory.row(k), &dkey, &mut dparams, &mut dmemory[k * d_h..(k + 1) * d_h]);
    }
    let mut ds = vec![0.0; record.s_prev.len()];
    query_backward(params, &record.s_prev, &dquery, &mut dparams, &mut ds);
    Ok(StepGrads {
        params: dparams,
        s_prev: ds,
        memory: dmemory,
        alpha_prev: dalpha_prev,
    })
}
