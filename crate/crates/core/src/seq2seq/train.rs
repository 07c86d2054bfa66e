use std::io::Write;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::model::{
    accumulate_gradient, decode_greedy_hard, decode_greedy_soft, default_max_len, encode, ModelDims, ModelParams,
};
use super::task::{generate_task, sample_pair, TaskSpec};
use crate::attn::{EnergyKind, MonotonicConfig};
use crate::checkpoint::ModelCheckpoint;
use crate::error::{domain, Error, Result};
use crate::numkit::SeededRng;

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task_seed: u64,
    pub vocab_size: usize,
    pub len_min: usize,
    pub len_max: usize,
    /// Shared width of embeddings, both GRUs and the attention layer.
    pub d_model: usize,
    pub energy: EnergyKind,
    /// Initial energy offset `r`.
    pub r_init: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    pub eval_interval: u64,
    pub eval_examples: usize,
    pub attn: MonotonicConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task_seed: 0,
            vocab_size: 20,
            len_min: 5,
            len_max: 20,
            d_model: 64,
            energy: EnergyKind::Modified,
            r_init: -2.0,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            clip_norm: 2.0,
            batch_size: 16,
            max_steps: 2000,
            eval_interval: 250,
            eval_examples: 200,
            attn: MonotonicConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return domain(format!("learning rate {} must be > 0", self.lr));
        }
        if !(self.clip_norm > 0.0) {
            return domain(format!("clip norm {} must be > 0", self.clip_norm));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps_adam > 0.0) {
            return domain("Adam parameters must satisfy 0 <= beta < 1 and eps > 0");
        }
        if self.batch_size == 0 || self.eval_interval == 0 || self.eval_examples == 0 {
            return domain("batch size, eval interval and eval examples must be positive");
        }
        if self.len_min < 1 || self.len_max > 64 || self.len_min > self.len_max {
            return domain(format!("length range {}..={} must lie within 1..=64", self.len_min, self.len_max));
        }
        self.dims().validate()?;
        self.attn.validate()
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab_size: self.vocab_size,
            d_emb: self.d_model,
            d_h: self.d_model,
            d_s: self.d_model,
            d_a: self.d_model,
            energy: self.energy,
        }
    }

    pub fn task(&self) -> Result<TaskSpec> {
        generate_task(self.task_seed, self.vocab_size)
    }
}

/// Adam over every tensor of a [`ModelParams`].
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: &ModelParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((_, p), (_, g)), (m, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                p[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Global L2 norm of all gradient tensors.
pub fn global_norm(grad: &ModelParams) -> f64 {
    grad.tensors()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grad` so its global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grad: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = global_norm(grad);
    if norm > max_norm {
        let s = max_norm / norm;
        for (_, t) in grad.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub token_accuracy_soft: f64,
    pub token_accuracy_hard: f64,
    /// Fraction of examples whose hard decode equals the target exactly.
    pub sequence_accuracy: f64,
    /// Fraction of examples where hard and soft decodes are identical.
    pub hard_soft_agreement: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    /// Mean training loss over the batches since the previous row.
    pub loss: f64,
    pub metrics: EvalMetrics,
}

pub const METRICS_HEADER: &str = "step,loss,token_acc_soft,token_acc_hard,seq_acc,agreement";

impl MetricsRow {
    pub fn csv(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{},{}",
            self.step, self.loss, m.token_accuracy_soft, m.token_accuracy_hard, m.sequence_accuracy, m.hard_soft_agreement
        )
    }
}

/// Writes the metrics history as CSV.
pub fn write_metrics_csv(path: &std::path::Path, rows: &[MetricsRow]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.csv());
        text.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Matches between a decode and the target, counted over the target length
/// including the end token. A decode that stopped on the end token is
/// compared as `tokens ++ [EOS]`.
pub fn token_matches(decoded: &[usize], stopped: bool, target: &[usize], eos: usize) -> usize {
    let mut padded = decoded.to_vec();
    if stopped {
        padded.push(eos);
    }
    target.iter().zip(&padded).filter(|(a, b)| a == b).count()
}

/// Decodes `n_examples` fresh pairs drawn from `rng` in both modes.
pub fn evaluate_params(
    task: &TaskSpec,
    params: &ModelParams,
    cfg: &TrainConfig,
    n_examples: usize,
    rng: &mut SeededRng,
) -> Result<EvalMetrics> {
    if n_examples == 0 {
        return domain("evaluation needs at least one example");
    }
    let eos = task.eos();
    let (mut soft_ok, mut hard_ok, mut total) = (0usize, 0usize, 0usize);
    let (mut seq_ok, mut agree) = (0usize, 0usize);
    for _ in 0..n_examples {
        let (input, target) = sample_pair(task, rng, cfg.len_min..=cfg.len_max)?;
        let memory = encode(params, &input)?;
        let max_len = default_max_len(input.len());
        let soft = decode_greedy_soft(params, &memory, max_len)?;
        let hard = decode_greedy_hard(params, &memory, max_len, &cfg.attn)?;
        let soft_stopped = soft.alphas.len() > soft.tokens.len();
        let hard_stopped = hard.path.len() > hard.tokens.len();
        soft_ok += token_matches(&soft.tokens, soft_stopped, &target, eos);
        hard_ok += token_matches(&hard.tokens, hard_stopped, &target, eos);
        total += target.len();
        if hard_stopped && hard.tokens[..] == target[..target.len() - 1] {
            seq_ok += 1;
        }
        if hard.tokens == soft.tokens && hard_stopped == soft_stopped {
            agree += 1;
        }
    }
    let n = n_examples as f64;
    Ok(EvalMetrics {
        token_accuracy_soft: soft_ok as f64 / total as f64,
        token_accuracy_hard: hard_ok as f64 / total as f64,
        sequence_accuracy: seq_ok as f64 / n,
        hard_soft_agreement: agree as f64 / n,
    })
}

/// Metrics of a checkpoint on `n_examples` pairs drawn from `rng`.
pub fn evaluate(task: &TaskSpec, checkpoint: &ModelCheckpoint, n_examples: usize, rng: &mut SeededRng) -> Result<EvalMetrics> {
    evaluate_params(task, &checkpoint.params, &checkpoint.config, n_examples, rng)
}

/// Streams used by a training run, all derived from `cfg.seed`.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const DATA: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const EVAL: u64 = 3;
}

/// Teacher-forced training with Adam and global-norm clipping, evaluating
/// every `eval_interval` steps on held-out pairs from a separate stream.
pub fn train_loop(task: &TaskSpec, cfg: &TrainConfig) -> Result<(ModelCheckpoint, Vec<MetricsRow>)> {
    cfg.validate()?;
    if task.vocab_size != cfg.vocab_size {
        return domain("task vocabulary differs from the configured one");
    }
    let mut params = ModelParams::init(cfg.dims(), cfg.r_init, &mut SeededRng::new(cfg.seed, streams::INIT))?;
    let mut adam = Adam::new(&params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_adam);
    let mut data_rng = SeededRng::new(cfg.seed, streams::DATA);
    let mut noise_rng = SeededRng::new(cfg.seed, streams::NOISE);
    let mut history = Vec::new();
    let mut loss_acc = 0.0;
    let mut loss_count = 0u64;
    let weight = 1.0 / cfg.batch_size as f64;
    info!(
        "training: {} parameters, {} steps, batch {}",
        params.n_params(),
        cfg.max_steps,
        cfg.batch_size
    );
    for step in 1..=cfg.max_steps {
        let mut grad = params.zeros_like();
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            let (input, target) = sample_pair(task, &mut data_rng, cfg.len_min..=cfg.len_max)?;
            let loss = accumulate_gradient(&params, &input, &target, &cfg.attn, Some(&mut noise_rng), weight, &mut grad)
                .map_err(|e| match e {
                    Error::Divergence { loss, .. } => Error::Divergence { step, loss },
                    other => other,
                })?;
            batch_loss += loss * weight;
        }
        if !batch_loss.is_finite() {
            return Err(Error::Divergence { step, loss: batch_loss });
        }
        let norm = clip_global_norm(&mut grad, cfg.clip_norm);
        adam.step(&mut params, &grad);
        if !params.is_finite() {
            return Err(Error::Divergence { step, loss: f64::NAN });
        }
        debug!("step {step}: loss {batch_loss:.5}, grad norm {norm:.4}");
        loss_acc += batch_loss;
        loss_count += 1;
        if step % cfg.eval_interval == 0 || step == cfg.max_steps {
            let mut eval_rng = SeededRng::new(cfg.seed, streams::EVAL);
            let metrics = evaluate_params(task, &params, cfg, cfg.eval_examples, &mut eval_rng)?;
            let row = MetricsRow {
                step,
                loss: loss_acc / loss_count as f64,
                metrics,
            };
            info!(
                "step {step}: loss {:.4}, token acc soft {:.4} hard {:.4}, seq acc {:.3}, agreement {:.3}",
                row.loss,
                metrics.token_accuracy_soft,
                metrics.token_accuracy_hard,
                metrics.sequence_accuracy,
                metrics.hard_soft_agreement
            );
            history.push(row);
            loss_acc = 0.0;
            loss_count = 0;
        }
    }
    let checkpoint = ModelCheckpoint {
        params,
        task_hash: task.hash(),
        config: cfg.clone(),
        step: cfg.max_steps,
        rng: vec![data_rng.state(), noise_rng.state()],
    };
    Ok((checkpoint, history))
}
