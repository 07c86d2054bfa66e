use super::{check_probs, AttentionWeights, DenomMode, EnergyKernel, EnergyParams, Memory, MonotonicConfig};
use crate::error::{domain, Result};
use crate::numkit::{cumsum, exclusive_cumprod_stable, sigmoid, softmax, Matrix, SeededRng, LOG_FLOOR};

/// Softmax attention over the whole memory.
pub fn softmax_attention(energies: &[f64], memory: &Memory) -> Result<(AttentionWeights, Vec<f64>)> {
    if energies.len() != memory.len() {
        return domain(format!(
            "{} energies for a memory of {} entries",
            energies.len(),
            memory.len()
        ));
    }
    let alpha = softmax(energies)?;
    let context = memory.weighted_sum(&alpha);
    Ok((AttentionWeights { alpha, row_index: 0 }, context))
}

/// Division-free recurrence on bare slices:
/// `q_j = (1 - p_{j-1}) q_{j-1} + alpha_prev_j`, `alpha_j = p_j q_j`, with
/// `q_0 = p_0 = 0`. Returns `(alpha, q)`. Inputs are not validated.
pub fn alpha_recurrence_raw(p: &[f64], alpha_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut alpha = Vec::with_capacity(p.len());
    let mut q = Vec::with_capacity(p.len());
    let mut q_prev = 0.0;
    let mut p_prev = 0.0;
    for (&pj, &aj) in p.iter().zip(alpha_prev) {
        let qj = (1.0 - p_prev) * q_prev + aj;
        q.push(qj);
        alpha.push(pj * qj);
        q_prev = qj;
        p_prev = pj;
    }
    (alpha, q)
}

fn check_row(p: &[f64], alpha_prev: &AttentionWeights) -> Result<()> {
    if p.len() != alpha_prev.len() {
        return domain(format!(
            "p row has {} entries but previous attention has {}",
            p.len(),
            alpha_prev.len()
        ));
    }
    check_probs(p)
}

/// Expected attention row of the hard monotonic process, computed
/// sequentially in the `q` form (never divides by `p`).
pub fn monotonic_alpha_recurrence(p: &[f64], alpha_prev: &AttentionWeights) -> Result<AttentionWeights> {
    check_row(p, alpha_prev)?;
    let (alpha, _) = alpha_recurrence_raw(p, &alpha_prev.alpha);
    Ok(AttentionWeights {
        alpha,
        row_index: alpha_prev.row_index + 1,
    })
}

/// Splits `0..p.len()` into segments for the clamped scan. A new segment
/// starts at `j` whenever the product of `1 - p` from the current segment
/// start up to `j - 1` has dropped below `eps`, i.e. exactly where the
/// clamped denominator would otherwise distort the result.
pub fn scan_segments(p: &[f64], eps: f64) -> Vec<std::ops::Range<usize>> {
    let mut segments = Vec::new();
    let mut start = 0;
    let mut log_prod = 0.0_f64;
    for j in 0..p.len() {
        if j > start && (p[j - 1] >= 1.0 || log_prod.exp() < eps) {
            segments.push(start..j);
            start = j;
            log_prod = 0.0;
        }
        log_prod += (1.0 - p[j]).max(LOG_FLOOR).ln();
    }
    if !p.is_empty() {
        segments.push(start..p.len());
    }
    segments
}

/// The same row computed in closed form with prefix operations.
///
/// `Clamped`: within each segment from [`scan_segments`],
/// `q = P * (carry + cumsum(alpha_prev / max(P, eps)))` where `P` is the
/// segment's exclusive cumulative product of `1 - p` (log space) and `carry`
/// is `(1 - p) q` handed over from the previous segment. Segments are solved
/// independently given their carries.
///
/// `Unit`: one segment with the denominator replaced by 1,
/// `q = P * cumsum(alpha_prev)`. Exact when `p` is `{0, 1}`-valued and no
/// entry before the support of `alpha_prev` has `p = 1` (in particular for
/// the first row), approximate otherwise.
pub fn monotonic_alpha_scan(
    p: &[f64],
    alpha_prev: &AttentionWeights,
    cfg: &MonotonicConfig,
) -> Result<AttentionWeights> {
    check_row(p, alpha_prev)?;
    let alpha = match cfg.denom_mode {
        DenomMode::Clamped => {
            let (q, _) = segmented_q(p, &alpha_prev.alpha, cfg.eps)?;
            p.iter().zip(&q).map(|(pj, qj)| pj * qj).collect()
        }
        DenomMode::Unit => {
            let one_minus: Vec<f64> = p.iter().map(|x| 1.0 - x).collect();
            let cp = exclusive_cumprod_stable(&one_minus, LOG_FLOOR)?;
            cumsum(&alpha_prev.alpha)
                .iter()
                .zip(&cp)
                .zip(p)
                .map(|((s, c), pj)| pj * (c * s))
                .collect()
        }
    };
    Ok(AttentionWeights {
        alpha,
        row_index: alpha_prev.row_index + 1,
    })
}

/// `q` for the clamped scan along with the carry entering each segment.
pub(crate) fn segmented_q(p: &[f64], alpha_prev: &[f64], eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut q = Vec::with_capacity(p.len());
    let mut carries = Vec::new();
    for seg in scan_segments(p, eps) {
        let carry = match seg.start {
            0 => 0.0,
            s => (1.0 - p[s - 1]) * q[s - 1],
        };
        carries.push(carry);
        let one_minus: Vec<f64> = p[seg.clone()].iter().map(|x| 1.0 - x).collect();
        let cp = exclusive_cumprod_stable(&one_minus, LOG_FLOOR)?;
        let scaled: Vec<f64> = alpha_prev[seg].iter().zip(&cp).map(|(a, d)| a / d.max(eps)).collect();
        q.extend(cumsum(&scaled).iter().zip(&cp).map(|(s, c)| c * (carry + s)));
    }
    Ok((q, carries))
}

/// Single-pass closed form over the whole row,
/// `q = P * cumsum(alpha_prev / max(P, eps))`, with no segmenting. Once `P`
/// falls below `eps` while `alpha_prev` still has mass there the result is
/// wrong; kept for comparison with [`monotonic_alpha_scan`].
pub fn monotonic_alpha_scan_single_pass(
    p: &[f64],
    alpha_prev: &AttentionWeights,
    eps: f64,
) -> Result<AttentionWeights> {
    check_row(p, alpha_prev)?;
    let one_minus: Vec<f64> = p.iter().map(|x| 1.0 - x).collect();
    let cp = exclusive_cumprod_stable(&one_minus, LOG_FLOOR)?;
    let scaled: Vec<f64> = alpha_prev.alpha.iter().zip(&cp).map(|(a, d)| a / d.max(eps)).collect();
    let alpha = cumsum(&scaled)
        .iter()
        .zip(&cp)
        .zip(p)
        .map(|((s, c), pj)| pj * (c * s))
        .collect();
    Ok(AttentionWeights {
        alpha,
        row_index: alpha_prev.row_index + 1,
    })
}

/// `sum_j alpha_j h_j`; any residual mass contributes the zero vector.
pub fn monotonic_context(alpha: &AttentionWeights, memory: &Memory) -> Result<Vec<f64>> {
    if alpha.len() != memory.len() {
        return domain(format!(
            "attention row has {} entries for a memory of {}",
            alpha.len(),
            memory.len()
        ));
    }
    Ok(memory.weighted_sum(&alpha.alpha))
}

/// Whether the soft step perturbs energies before the sigmoid.
pub enum Noise<'a> {
    Off,
    Train(&'a mut SeededRng),
}

/// Everything computed by one soft monotonic step. Together with the inputs
/// this is the record the backward pass needs.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftStep {
    /// Noise-free energies.
    pub energies: Vec<f64>,
    /// Pre-sigmoid noise actually added (zeros when noise is off).
    pub noise: Vec<f64>,
    pub p: Vec<f64>,
    pub alpha: AttentionWeights,
    pub context: Vec<f64>,
}

/// One output step of soft (expected-value) monotonic attention: energies,
/// optional pre-sigmoid noise, sigmoid, the `q` recurrence and the context.
pub fn soft_monotonic_step(
    params: &EnergyParams,
    s_prev: &[f64],
    memory: &Memory,
    alpha_prev: &AttentionWeights,
    cfg: &MonotonicConfig,
    noise: Noise<'_>,
) -> Result<SoftStep> {
    let t = memory.len();
    if alpha_prev.len() != t {
        return domain(format!(
            "previous attention has {} entries for a memory of {t}",
            alpha_prev.len()
        ));
    }
    let kernel = params.kernel()?;
    kernel.check_shapes(s_prev, memory.row(0))?;
    let query = kernel.query(s_prev);
    let energies: Vec<f64> = (0..t)
        .map(|k| kernel.score(&query, &kernel.key(memory.row(k))))
        .collect();
    let noise = match noise {
        Noise::Off => vec![0.0; t],
        Noise::Train(rng) => crate::numkit::draw_gaussian(rng, t, cfg.noise_std)?,
    };
    let p: Vec<f64> = energies.iter().zip(&noise).map(|(e, n)| sigmoid(e + n)).collect();
    let alpha = monotonic_alpha_recurrence(&p, alpha_prev)?;
    let context = monotonic_context(&alpha, memory)?;
    Ok(SoftStep {
        energies,
        noise,
        p,
        alpha,
        context,
    })
}

/// Softmax attention with keys projected once per memory; used as the
/// quadratic-time baseline by the benchmark.
pub struct SoftmaxAttention<'a> {
    kernel: EnergyKernel<'a>,
    memory: &'a Memory,
    keys: Matrix,
    energy_evals: usize,
}

impl<'a> SoftmaxAttention<'a> {
    pub fn new(params: &'a EnergyParams, memory: &'a Memory) -> Result<Self> {
        let kernel = params.kernel()?;
        if memory.dim() != params.d_h() {
            return domain("memory dimension does not match energy parameters");
        }
        let mut keys = Matrix::zeros(memory.len(), kernel.key_dim());
        let kd = kernel.key_dim();
        for k in 0..memory.len() {
            kernel.key_into(memory.row(k), &mut keys.data_mut()[k * kd..(k + 1) * kd]);
        }
        Ok(Self {
            kernel,
            memory,
            keys,
            energy_evals: 0,
        })
    }

    /// Context for one output step. `offset(j)` (1-based `j`) is added to
    /// each energy.
    pub fn step_with_offset(&mut self, s_prev: &[f64], offset: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
        if s_prev.len() != self.kernel.params().d_s() {
            return domain("decoder state dimension does not match energy parameters");
        }
        let query = self.kernel.query(s_prev);
        let energies: Vec<f64> = (0..self.memory.len())
            .map(|k| self.kernel.score(&query, self.keys.row(k)) + offset(k + 1))
            .collect();
        self.energy_evals += energies.len();
        let alpha = softmax(&energies)?;
        Ok(self.memory.weighted_sum(&alpha))
    }

    pub fn step(&mut self, s_prev: &[f64]) -> Result<Vec<f64>> {
        self.step_with_offset(s_prev, |_| 0.0)
    }

    pub fn energy_evals(&self) -> usize {
        self.energy_evals
    }
}
