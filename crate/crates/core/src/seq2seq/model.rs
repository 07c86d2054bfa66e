use serde::{Deserialize, Serialize};

use super::gru::{Gru, GruCache};
use super::task::TaskSpec;
use crate::attn::{
    monotonic_alpha_recurrence, AttentionWeights, DotEnergyParams, EnergyKind, EnergyParams, HardMonotonicAttention,
    Memory, MonotonicConfig, MonotonicEnergyParams,
};
use crate::error::{domain, Result};
use crate::gradcheck::{backward_monotonic_alpha, key_backward, query_backward, score_backward, sigmoid_backward};
use crate::numkit::{argmax, draw_gaussian, log_sum_exp, sigmoid, Matrix, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub d_emb: usize,
    /// Encoder hidden size (memory entry dimension).
    pub d_h: usize,
    /// Decoder hidden size.
    pub d_s: usize,
    /// Attention hidden size (modified energy only).
    pub d_a: usize,
    pub energy: EnergyKind,
}

impl ModelDims {
    pub fn n_tokens(&self) -> usize {
        self.vocab_size + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || [self.d_emb, self.d_h, self.d_s, self.d_a].contains(&0) {
            return domain(format!("invalid model dimensions {self:?}"));
        }
        Ok(())
    }
}

/// Encoder and decoder weights. The decoder consumes
/// `[embedding(y_{i-1}); c_i]` and the output layer maps `[s_i; c_i]` to
/// logits over symbols and both special tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// `V x d_emb`
    pub emb_in: Matrix,
    pub encoder: Gru,
    /// `(V + 2) x d_emb`
    pub emb_out: Matrix,
    pub decoder: Gru,
    pub attn: EnergyParams,
    /// `(V + 2) x (d_s + d_h)`
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

impl ModelParams {
    /// Uniform `[-0.1, 0.1]` weights; the energy uses `g = 1/sqrt(d)` and
    /// offset `r`.
    pub fn init(dims: ModelDims, r: f64, rng: &mut SeededRng) -> Result<Self> {
        dims.validate()?;
        let attn = match dims.energy {
            EnergyKind::Modified => {
                EnergyParams::Modified(MonotonicEnergyParams::init(dims.d_s, dims.d_h, dims.d_a, r, rng))
            }
            EnergyKind::Dot => EnergyParams::Dot(DotEnergyParams::init(dims.d_s, dims.d_h, r, rng)),
        };
        Ok(Self {
            dims,
            emb_in: Matrix::uniform(dims.vocab_size, dims.d_emb, -0.1, 0.1, rng),
            encoder: Gru::init(dims.d_emb, dims.d_h, rng),
            emb_out: Matrix::uniform(dims.n_tokens(), dims.d_emb, -0.1, 0.1, rng),
            decoder: Gru::init(dims.d_emb + dims.d_h, dims.d_s, rng),
            attn,
            w_out: Matrix::uniform(dims.n_tokens(), dims.d_s + dims.d_h, -0.1, 0.1, rng),
            b_out: (0..dims.n_tokens()).map(|_| rng.uniform_range(-0.1, 0.1)).collect(),
        })
    }

    /// All-zero parameters of the given shape (a gradient accumulator, or
    /// a blank to fill from a checkpoint).
    pub fn zeros(dims: ModelDims) -> Self {
        let d = dims;
        let attn = match d.energy {
            EnergyKind::Modified => EnergyParams::Modified(MonotonicEnergyParams {
                w: Matrix::zeros(d.d_a, d.d_s),
                v_proj: Matrix::zeros(d.d_a, d.d_h),
                b: vec![0.0; d.d_a],
                v: vec![0.0; d.d_a],
                g: 0.0,
                r: 0.0,
            }),
            EnergyKind::Dot => EnergyParams::Dot(DotEnergyParams {
                w: Matrix::zeros(d.d_s, d.d_h),
                g: 0.0,
                r: 0.0,
            }),
        };
        Self {
            dims: d,
            emb_in: Matrix::zeros(d.vocab_size, d.d_emb),
            encoder: Gru::zeros(d.d_emb, d.d_h),
            emb_out: Matrix::zeros(d.n_tokens(), d.d_emb),
            decoder: Gru::zeros(d.d_emb + d.d_h, d.d_s),
            attn,
            w_out: Matrix::zeros(d.n_tokens(), d.d_s + d.d_h),
            b_out: vec![0.0; d.n_tokens()],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims)
    }

    /// Named flat views of every trainable array, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let [ei, eh, ebi, ebh] = self.encoder.tensors();
        let [di, dh, dbi, dbh] = self.decoder.tensors();
        let mut out = vec![
            ("emb_in", self.emb_in.data()),
            ("enc.w_ih", ei),
            ("enc.w_hh", eh),
            ("enc.b_ih", ebi),
            ("enc.b_hh", ebh),
            ("emb_out", self.emb_out.data()),
            ("dec.w_ih", di),
            ("dec.w_hh", dh),
            ("dec.b_ih", dbi),
            ("dec.b_hh", dbh),
        ];
        out.extend(self.attn.tensors());
        out.push(("out.w", self.w_out.data()));
        out.push(("out.b", &self.b_out));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let [ei, eh, ebi, ebh] = self.encoder.tensors_mut();
        let [di, dh, dbi, dbh] = self.decoder.tensors_mut();
        let mut out = vec![
            ("emb_in", self.emb_in.data_mut()),
            ("enc.w_ih", ei),
            ("enc.w_hh", eh),
            ("enc.b_ih", ebi),
            ("enc.b_hh", ebh),
            ("emb_out", self.emb_out.data_mut()),
            ("dec.w_ih", di),
            ("dec.w_hh", dh),
            ("dec.b_ih", dbi),
            ("dec.b_hh", dbh),
        ];
        out.extend(self.attn.tensors_mut());
        out.push(("out.w", self.w_out.data_mut()));
        out.push(("out.b", &mut self.b_out));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    fn check_tokens(&self, tokens: &[usize], limit: usize, what: &str) -> Result<()> {
        match tokens.iter().find(|&&t| t >= limit) {
            Some(t) => domain(format!("{what} token {t} outside vocabulary of {limit}")),
            None => Ok(()),
        }
    }
}

struct EncoderTrace {
    h_prev: Vec<Vec<f64>>,
    caches: Vec<GruCache>,
}

fn encode_traced(params: &ModelParams, input: &[usize]) -> Result<(Memory, EncoderTrace)> {
    if input.is_empty() {
        return domain("cannot encode an empty input");
    }
    params.check_tokens(input, params.dims.vocab_size, "input")?;
    let mut h = vec![0.0; params.dims.d_h];
    let mut states = Vec::with_capacity(input.len());
    let mut trace = EncoderTrace {
        h_prev: Vec::with_capacity(input.len()),
        caches: Vec::with_capacity(input.len()),
    };
    for &tok in input {
        let (next, cache) = params.encoder.step(&h, params.emb_in.row(tok));
        trace.h_prev.push(std::mem::replace(&mut h, next.clone()));
        trace.caches.push(cache);
        states.push(next);
    }
    Ok((Memory::new(&states)?, trace))
}

/// One hidden state per input token, computed left to right.
pub fn encode(params: &ModelParams, input: &[usize]) -> Result<Memory> {
    Ok(encode_traced(params, input)?.0)
}

fn decoder_input(params: &ModelParams, y_prev: usize, context: &[f64]) -> Vec<f64> {
    let mut x = params.emb_out.row(y_prev).to_vec();
    x.extend_from_slice(context);
    x
}

fn logits(params: &ModelParams, s: &[f64], context: &[f64]) -> Vec<f64> {
    let mut z = s.to_vec();
    z.extend_from_slice(context);
    let mut out = params.w_out.matvec(&z);
    for (o, b) in out.iter_mut().zip(&params.b_out) {
        *o += b;
    }
    out
}

/// Greedy choice among emittable tokens (everything but the start token).
fn greedy(task_sos: usize, logits: &[f64]) -> usize {
    let mut masked = logits.to_vec();
    masked[task_sos] = f64::NEG_INFINITY;
    argmax(&masked)
}

struct DecoderStepTrace {
    s_prev: Vec<f64>,
    query: Vec<f64>,
    p: Vec<f64>,
    context: Vec<f64>,
    x: Vec<f64>,
    cache: GruCache,
    s: Vec<f64>,
    probs: Vec<f64>,
}

/// Teacher-forced loss of one pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace {
    /// Mean per-token cross-entropy.
    pub loss: f64,
    /// One attention row per target token.
    pub alphas: Vec<Vec<f64>>,
}

struct Forward {
    memory: Memory,
    enc: EncoderTrace,
    keys: Matrix,
    steps: Vec<DecoderStepTrace>,
    alphas: Vec<AttentionWeights>,
    loss: f64,
}

fn forward(
    params: &ModelParams,
    input: &[usize],
    target: &[usize],
    cfg: &MonotonicConfig,
    mut noise: Option<&mut SeededRng>,
) -> Result<Forward> {
    let d = params.dims;
    let eos = d.vocab_size + 1;
    if target.last() != Some(&eos) {
        return domain("target must end with the end token");
    }
    params.check_tokens(target, d.n_tokens(), "target")?;
    let (memory, enc) = encode_traced(params, input)?;
    let t = memory.len();
    let kernel = params.attn.kernel()?;
    let kd = kernel.key_dim();
    let mut keys = Matrix::zeros(t, kd);
    for k in 0..t {
        kernel.key_into(memory.row(k), &mut keys.data_mut()[k * kd..(k + 1) * kd]);
    }
    let mut s = vec![0.0; d.d_s];
    let mut alpha = AttentionWeights::initial(t);
    let mut alphas = Vec::with_capacity(target.len());
    let mut steps = Vec::with_capacity(target.len());
    let mut loss = 0.0;
    let mut y_prev = d.vocab_size;
    for &y in target {
        let query = kernel.query(&s);
        let eps_noise = match noise.as_deref_mut() {
            Some(rng) => draw_gaussian(rng, t, cfg.noise_std)?,
            None => vec![0.0; t],
        };
        let p: Vec<f64> = (0..t)
            .map(|k| sigmoid(kernel.score(&query, keys.row(k)) + eps_noise[k]))
            .collect();
        alpha = monotonic_alpha_recurrence(&p, &alpha)?;
        let context = memory.weighted_sum(&alpha.alpha);
        let x = decoder_input(params, y_prev, &context);
        let (s_next, cache) = params.decoder.step(&s, &x);
        let lg = logits(params, &s_next, &context);
        let lse = log_sum_exp(&lg);
        loss += lse - lg[y];
        let probs = lg.iter().map(|l| (l - lse).exp()).collect();
        steps.push(DecoderStepTrace {
            s_prev: std::mem::replace(&mut s, s_next.clone()),
            query,
            p,
            context,
            x,
            cache,
            s: s_next,
            probs,
        });
        alphas.push(alpha.clone());
        y_prev = y;
    }
    loss /= target.len() as f64;
    if !loss.is_finite() {
        return Err(crate::Error::Divergence { step: 0, loss });
    }
    Ok(Forward {
        memory,
        enc,
        keys,
        steps,
        alphas,
        loss,
    })
}

/// Teacher-forced soft monotonic decoding. With `noise` set, pre-sigmoid
/// Gaussian noise of std `cfg.noise_std` is drawn for every (step, entry).
pub fn decode_train(
    params: &ModelParams,
    input: &[usize],
    target: &[usize],
    cfg: &MonotonicConfig,
    noise: Option<&mut SeededRng>,
) -> Result<TrainTrace> {
    let f = forward(params, input, target, cfg, noise)?;
    Ok(TrainTrace {
        loss: f.loss,
        alphas: f.alphas.into_iter().map(|a| a.alpha).collect(),
    })
}

/// Loss of one pair, with `weight * d(loss)` added into `grad`.
pub fn accumulate_gradient(
    params: &ModelParams,
    input: &[usize],
    target: &[usize],
    cfg: &MonotonicConfig,
    noise: Option<&mut SeededRng>,
    weight: f64,
    grad: &mut ModelParams,
) -> Result<f64> {
    let f = forward(params, input, target, cfg, noise)?;
    let d = params.dims;
    let t = f.memory.len();
    let kernel = params.attn.kernel()?;
    let kd = kernel.key_dim();
    let scale = weight / target.len() as f64;
    let mut dmemory = vec![0.0; t * d.d_h];
    let mut dkeys = vec![0.0; t * kd];
    let mut ds = vec![0.0; d.d_s];
    let mut dalpha_next = vec![0.0; t];
    let initial = AttentionWeights::initial(t);
    for i in (0..f.steps.len()).rev() {
        let st = &f.steps[i];
        let y = target[i];
        let y_prev = if i == 0 { d.vocab_size } else { target[i - 1] };
        // output layer
        let mut dlogits: Vec<f64> = st.probs.iter().map(|p| p * scale).collect();
        dlogits[y] -= scale;
        let mut z = st.s.clone();
        z.extend_from_slice(&st.context);
        grad.w_out.add_outer(&dlogits, &z);
        for (g, dl) in grad.b_out.iter_mut().zip(&dlogits) {
            *g += dl;
        }
        let dz = params.w_out.matvec_t(&dlogits);
        for (a, b) in ds.iter_mut().zip(&dz[..d.d_s]) {
            *a += b;
        }
        let mut dcontext = dz[d.d_s..].to_vec();
        // decoder cell
        let mut dx = vec![0.0; st.x.len()];
        let ds_prev = params.decoder.backward(&st.s_prev, &st.x, &st.cache, &ds, &mut grad.decoder, &mut dx);
        ds = ds_prev;
        let emb = &mut grad.emb_out.data_mut()[y_prev * d.d_emb..(y_prev + 1) * d.d_emb];
        for (g, v) in emb.iter_mut().zip(&dx[..d.d_emb]) {
            *g += v;
        }
        for (a, b) in dcontext.iter_mut().zip(&dx[d.d_emb..]) {
            *a += b;
        }
        // context and recurrence
        let alpha = &f.alphas[i].alpha;
        let mut dalpha = dalpha_next;
        for k in 0..t {
            let h = f.memory.row(k);
            dalpha[k] += h.iter().zip(&dcontext).map(|(a, b)| a * b).sum::<f64>();
            if alpha[k] != 0.0 {
                for (m, c) in dmemory[k * d.d_h..(k + 1) * d.d_h].iter_mut().zip(&dcontext) {
                    *m += alpha[k] * c;
                }
            }
        }
        let prev = if i == 0 { &initial.alpha } else { &f.alphas[i - 1].alpha };
        let (dp, da_prev) = backward_monotonic_alpha(&st.p, prev, &dalpha)?;
        dalpha_next = da_prev;
        // energies
        let mut dquery = vec![0.0; st.query.len()];
        for k in 0..t {
            let de = sigmoid_backward(st.p[k], dp[k]);
            if de != 0.0 {
                score_backward(
                    &kernel,
                    &st.query,
                    f.keys.row(k),
                    de,
                    &mut grad.attn,
                    &mut dquery,
                    &mut dkeys[k * kd..(k + 1) * kd],
                );
            }
        }
        query_backward(&params.attn, &st.s_prev, &dquery, &mut grad.attn, &mut ds);
    }
    for k in 0..t {
        key_backward(
            &params.attn,
            f.memory.row(k),
            &dkeys[k * kd..(k + 1) * kd],
            &mut grad.attn,
            &mut dmemory[k * d.d_h..(k + 1) * d.d_h],
        );
    }
    // encoder, back through time
    let mut dh = vec![0.0; d.d_h];
    for k in (0..t).rev() {
        for (a, b) in dh.iter_mut().zip(&dmemory[k * d.d_h..(k + 1) * d.d_h]) {
            *a += b;
        }
        let tok = input[k];
        let mut dx = vec![0.0; d.d_emb];
        dh = params.encoder.backward(
            &f.enc.h_prev[k],
            params.emb_in.row(tok),
            &f.enc.caches[k],
            &dh,
            &mut grad.encoder,
            &mut dx,
        );
        let emb = &mut grad.emb_in.data_mut()[tok * d.d_emb..(tok + 1) * d.d_emb];
        for (g, v) in emb.iter_mut().zip(&dx) {
            *g += v;
        }
    }
    Ok(f.loss)
}

/// Output of a greedy soft decode.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftDecode {
    /// Emitted tokens, end token excluded.
    pub tokens: Vec<usize>,
    /// Attention row per emitted step, including the one that emitted the
    /// end token.
    pub alphas: Vec<Vec<f64>>,
}

/// Output of a greedy hard decode.
#[derive(Clone, Debug, PartialEq)]
pub struct HardDecode {
    /// Emitted tokens, end token excluded.
    pub tokens: Vec<usize>,
    /// Selected memory index (1-based) per step; `None` on fall-off.
    pub path: Vec<Option<usize>>,
    pub energy_evals: usize,
}

fn check_max_len(max_len: usize) -> Result<()> {
    if max_len == 0 {
        return domain("max_len must be at least 1");
    }
    Ok(())
}

/// Greedy decoding with noise-free soft (expected) monotonic attention.
pub fn decode_greedy_soft(params: &ModelParams, memory: &Memory, max_len: usize) -> Result<SoftDecode> {
    check_max_len(max_len)?;
    let d = params.dims;
    let kernel = params.attn.kernel()?;
    let keys: Vec<Vec<f64>> = (0..memory.len()).map(|k| kernel.key(memory.row(k))).collect();
    let mut s = vec![0.0; d.d_s];
    let mut alpha = AttentionWeights::initial(memory.len());
    let mut y_prev = d.vocab_size;
    let mut out = SoftDecode {
        tokens: Vec::new(),
        alphas: Vec::new(),
    };
    for _ in 0..max_len {
        let query = kernel.query(&s);
        let p: Vec<f64> = keys.iter().map(|k| sigmoid(kernel.score(&query, k))).collect();
        alpha = monotonic_alpha_recurrence(&p, &alpha)?;
        let context = memory.weighted_sum(&alpha.alpha);
        let (s_next, _) = params.decoder.step(&s, &decoder_input(params, y_prev, &context));
        s = s_next;
        let y = greedy(d.vocab_size, &logits(params, &s, &context));
        out.alphas.push(alpha.alpha.clone());
        if y == d.vocab_size + 1 {
            break;
        }
        out.tokens.push(y);
        y_prev = y;
    }
    Ok(out)
}

/// Greedy decoding with hard monotonic attention (threshold `cfg.tau`, no
/// noise). Asserts the linear-time bound `energy_evals <= T + steps`.
pub fn decode_greedy_hard(params: &ModelParams, memory: &Memory, max_len: usize, cfg: &MonotonicConfig) -> Result<HardDecode> {
    check_max_len(max_len)?;
    let d = params.dims;
    let mut attn = HardMonotonicAttention::new(&params.attn, memory, cfg)?;
    let mut s = vec![0.0; d.d_s];
    let mut y_prev = d.vocab_size;
    let mut out = HardDecode {
        tokens: Vec::new(),
        path: Vec::new(),
        energy_evals: 0,
    };
    for _ in 0..max_len {
        let step = attn.step(&s)?;
        let (s_next, _) = params.decoder.step(&s, &decoder_input(params, y_prev, &step.context));
        s = s_next;
        let y = greedy(d.vocab_size, &logits(params, &s, &step.context));
        out.path.push(step.selected);
        if y == d.vocab_size + 1 {
            break;
        }
        out.tokens.push(y);
        y_prev = y;
    }
    out.energy_evals = attn.energy_evals();
    assert!(
        out.energy_evals <= memory.len() + out.path.len(),
        "hard decode used {} energy evaluations for T = {}, U = {}",
        out.energy_evals,
        memory.len(),
        out.path.len()
    );
    Ok(out)
}

/// Decoding length cap used by evaluation: twice the input plus slack.
pub fn default_max_len(input_len: usize) -> usize {
    2 * input_len + 2
}

/// Convenience for callers holding a task.
pub fn task_dims(task: &TaskSpec, d: usize, energy: EnergyKind) -> ModelDims {
    ModelDims {
        vocab_size: task.vocab_size,
        d_emb: d,
        d_h: d,
        d_s: d,
        d_a: d,
        energy,
    }
}
