use super::backward::*;
use super::record::{backward_full_step, ComputationRecord};
use super::{check_gradients, finite_difference};
use crate::attn::{
    alpha_recurrence_raw, energy_bahdanau, monotonic_alpha_scan, AttentionWeights, DenomMode, DotEnergyParams,
    EnergyParams, Memory, MonotonicConfig, MonotonicEnergyParams,
};
use crate::error::{domain, Result};
use crate::numkit::{dot, sigmoid, softmax, Matrix, SeededRng};

/// Every operation covered by the gradient suite, in run order.
pub const SUITE_OPS: &[&str] = &[
    "sigmoid",
    "softmax",
    "energy_bahdanau",
    "energy_modified",
    "energy_dot",
    "monotonic_alpha",
    "monotonic_alpha_scan",
    "monotonic_context",
    "full_step_modified",
    "full_step_dot",
    "gru_cell",
    "output_layer",
    "seq2seq_loss",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteConfig {
    pub h: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub instances: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            h: 1e-6,
            rel_tol: 1e-5,
            abs_tol: 1e-8,
            instances: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamReport {
    pub name: String,
    /// Worst relative error among entries above the absolute floor.
    pub max_rel: f64,
    pub max_abs: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpReport {
    pub op: String,
    pub instances: usize,
    pub params: Vec<ParamReport>,
    pub passed: bool,
}

impl OpReport {
    pub fn worst_rel(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel).fold(0.0, f64::max)
    }
}

type Objective = Box<dyn Fn(&[f64]) -> Result<f64>>;

/// One random test point: a flat input made of named blocks, a scalar
/// objective of it and the analytic gradient at that point.
pub(crate) struct Instance {
    pub x: Vec<f64>,
    pub blocks: Vec<(String, usize)>,
    pub f: Objective,
    pub grad: Vec<f64>,
}

/// Builds a flat input from named blocks.
#[derive(Default)]
pub(crate) struct Packer {
    pub x: Vec<f64>,
    pub blocks: Vec<(String, usize)>,
}

impl Packer {
    pub fn push(&mut self, name: &str, values: &[f64]) {
        self.x.extend_from_slice(values);
        self.blocks.push((name.to_string(), values.len()));
    }

    pub fn push_params(&mut self, params: &EnergyParams) {
        for (name, values) in params.tensors() {
            self.push(name, values);
        }
    }
}

/// Reads consecutive blocks back out of a flat input.
pub(crate) struct Reader<'a> {
    x: &'a [f64],
    at: usize,
}

impl<'a> Reader<'a> {
    pub fn new(x: &'a [f64]) -> Self {
        Self { x, at: 0 }
    }

    pub fn take(&mut self, n: usize) -> &'a [f64] {
        let out = &self.x[self.at..self.at + n];
        self.at += n;
        out
    }

    pub fn fill_params(&mut self, params: &mut EnergyParams) {
        for (_, dst) in params.tensors_mut() {
            let n = dst.len();
            dst.copy_from_slice(self.take(n));
        }
    }
}

pub(crate) fn flat_params(params: &EnergyParams) -> Vec<f64> {
    params.tensors().into_iter().flat_map(|(_, v)| v.to_vec()).collect()
}

pub(crate) fn uniform_vec(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_range(lo, hi)).collect()
}

fn random_memory(rng: &mut SeededRng, t: usize, d: usize) -> Memory {
    Memory::from_matrix(Matrix::uniform(t, d, -1.0, 1.0, rng)).expect("non-empty finite memory")
}

/// A sub-stochastic row with total mass in `[0.5, 1]`.
fn random_alpha_row(rng: &mut SeededRng, t: usize) -> Vec<f64> {
    let raw = uniform_vec(rng, t, 0.0, 1.0);
    let total: f64 = raw.iter().sum();
    let mass = rng.uniform_range(0.5, 1.0);
    raw.iter().map(|x| x * mass / total).collect()
}

fn random_energy_params(rng: &mut SeededRng, modified: bool, d_s: usize, d_h: usize, d_a: usize) -> EnergyParams {
    if modified {
        EnergyParams::Modified(MonotonicEnergyParams {
            w: Matrix::uniform(d_a, d_s, -0.8, 0.8, rng),
            v_proj: Matrix::uniform(d_a, d_h, -0.8, 0.8, rng),
            b: uniform_vec(rng, d_a, -0.5, 0.5),
            v: uniform_vec(rng, d_a, -1.0, 1.0),
            g: rng.uniform_range(0.5, 2.0),
            r: rng.uniform_range(-1.0, 1.0),
        })
    } else {
        EnergyParams::Dot(DotEnergyParams {
            w: Matrix::uniform(d_s, d_h, -0.8, 0.8, rng),
            g: rng.uniform_range(0.5, 2.0),
            r: rng.uniform_range(-1.0, 1.0),
        })
    }
}

fn build_instance(op: &str, rng: &mut SeededRng) -> Result<Instance> {
    match op {
        "sigmoid" => {
            let n = rng.int_range(1, 8);
            let x = uniform_vec(rng, n, -4.0, 4.0);
            let w = uniform_vec(rng, n, -1.0, 1.0);
            let grad = x.iter().zip(&w).map(|(xi, wi)| sigmoid_backward(sigmoid(*xi), *wi)).collect();
            let f = move |x: &[f64]| Ok(x.iter().zip(&w).map(|(xi, wi)| wi * sigmoid(*xi)).sum());
            Ok(single_block("x", x, Box::new(f), grad))
        }
        "softmax" => {
            let n = rng.int_range(1, 8);
            let x = uniform_vec(rng, n, -3.0, 3.0);
            let w = uniform_vec(rng, n, -1.0, 1.0);
            let grad = softmax_backward(&softmax(&x)?, &w)?;
            let f = move |x: &[f64]| Ok(dot(&softmax(x)?, &w));
            Ok(single_block("x", x, Box::new(f), grad))
        }
        "energy_bahdanau" => energy_bahdanau_instance(rng),
        "energy_modified" => energy_instance(rng, true),
        "energy_dot" => energy_instance(rng, false),
        "monotonic_alpha" => alpha_instance(rng, false),
        "monotonic_alpha_scan" => alpha_instance(rng, true),
        "monotonic_context" => {
            let t = rng.int_range(1, 8);
            let d = rng.int_range(1, 4);
            let alpha = random_alpha_row(rng, t);
            let memory = random_memory(rng, t, d);
            let w = uniform_vec(rng, d, -1.0, 1.0);
            let mut dmem = vec![0.0; t * d];
            let da = backward_context(&alpha, &memory, &w, &mut dmem)?;
            let mut pk = Packer::default();
            pk.push("alpha", &alpha);
            pk.push("memory", memory.as_matrix().data());
            let grad = [da, dmem].concat();
            let f = move |x: &[f64]| {
                let mut r = Reader::new(x);
                let alpha = r.take(t);
                let mem = Memory::from_matrix(Matrix::from_vec(t, d, r.take(t * d).to_vec())?)?;
                Ok(dot(&mem.weighted_sum(alpha), &w))
            };
            Ok(Instance {
                x: pk.x,
                blocks: pk.blocks,
                f: Box::new(f),
                grad,
            })
        }
        "full_step_modified" => full_step_instance(rng, true),
        "full_step_dot" => full_step_instance(rng, false),
        "gru_cell" | "output_layer" | "seq2seq_loss" => crate::seq2seq::gradcheck_instance(op, rng),
        other => domain(format!("unknown gradient-check op '{other}'")),
    }
}

fn single_block(name: &str, x: Vec<f64>, f: Objective, grad: Vec<f64>) -> Instance {
    Instance {
        blocks: vec![(name.to_string(), x.len())],
        x,
        f,
        grad,
    }
}

fn energy_bahdanau_instance(rng: &mut SeededRng) -> Result<Instance> {
    let (d_s, d_h, d_a) = (rng.int_range(1, 4), rng.int_range(1, 4), rng.int_range(1, 5));
    let w = Matrix::uniform(d_a, d_s, -0.8, 0.8, rng);
    let vp = Matrix::uniform(d_a, d_h, -0.8, 0.8, rng);
    let b = uniform_vec(rng, d_a, -0.5, 0.5);
    let v = uniform_vec(rng, d_a, -1.0, 1.0);
    let s = uniform_vec(rng, d_s, -1.0, 1.0);
    let h = uniform_vec(rng, d_h, -1.0, 1.0);
    let (dw, dvp, db, dv, ds, dh) = energy_bahdanau_backward(&w, &vp, &b, &v, &s, &h, 1.0);
    let mut pk = Packer::default();
    pk.push("w", w.data());
    pk.push("v_proj", vp.data());
    pk.push("b", &b);
    pk.push("v", &v);
    pk.push("s_prev", &s);
    pk.push("h", &h);
    let f = move |x: &[f64]| {
        let mut r = Reader::new(x);
        let w = Matrix::from_vec(d_a, d_s, r.take(d_a * d_s).to_vec())?;
        let vp = Matrix::from_vec(d_a, d_h, r.take(d_a * d_h).to_vec())?;
        let (b, v, s, h) = (r.take(d_a), r.take(d_a), r.take(d_s), r.take(d_h));
        energy_bahdanau(&w, &vp, b, v, s, h)
    };
    Ok(Instance {
        x: pk.x,
        blocks: pk.blocks,
        f: Box::new(f),
        grad: [dw, dvp, db, dv, ds, dh].concat(),
    })
}

fn energy_instance(rng: &mut SeededRng, modified: bool) -> Result<Instance> {
    let (d_s, d_h, d_a) = (rng.int_range(1, 4), rng.int_range(1, 4), rng.int_range(1, 5));
    let params = random_energy_params(rng, modified, d_s, d_h, d_a);
    let s = uniform_vec(rng, d_s, -1.0, 1.0);
    let h = uniform_vec(rng, d_h, -1.0, 1.0);
    let kernel = params.kernel()?;
    let query = kernel.query(&s);
    let key = kernel.key(&h);
    let mut dparams = params.zeros_like();
    let mut dquery = vec![0.0; query.len()];
    let mut dkey = vec![0.0; key.len()];
    score_backward(&kernel, &query, &key, 1.0, &mut dparams, &mut dquery, &mut dkey);
    let mut ds = vec![0.0; d_s];
    let mut dh = vec![0.0; d_h];
    query_backward(&params, &s, &dquery, &mut dparams, &mut ds);
    key_backward(&params, &h, &dkey, &mut dparams, &mut dh);
    let mut pk = Packer::default();
    pk.push_params(&params);
    pk.push("s_prev", &s);
    pk.push("h", &h);
    let grad = [flat_params(&dparams), ds, dh].concat();
    let f = move |x: &[f64]| {
        let mut p = params.clone();
        let mut r = Reader::new(x);
        r.fill_params(&mut p);
        p.energy(r.take(d_s), r.take(d_h))
    };
    Ok(Instance {
        x: pk.x,
        blocks: pk.blocks,
        f: Box::new(f),
        grad,
    })
}

fn alpha_instance(rng: &mut SeededRng, scan: bool) -> Result<Instance> {
    let t = rng.int_range(1, 8);
    let p = uniform_vec(rng, t, 0.01, 0.99);
    let alpha_prev = random_alpha_row(rng, t);
    let w = uniform_vec(rng, t, -1.0, 1.0);
    let cfg = MonotonicConfig {
        denom_mode: DenomMode::Clamped,
        ..MonotonicConfig::default()
    };
    let (dp, da) = if scan {
        backward_monotonic_alpha_scan(&p, &alpha_prev, &w, cfg.eps)?
    } else {
        backward_monotonic_alpha(&p, &alpha_prev, &w)?
    };
    let mut pk = Packer::default();
    pk.push("p", &p);
    pk.push("alpha_prev", &alpha_prev);
    let f = move |x: &[f64]| {
        let (p, a) = x.split_at(t);
        let alpha = if scan {
            let prev = AttentionWeights {
                alpha: a.to_vec(),
                row_index: 0,
            };
            monotonic_alpha_scan(p, &prev, &cfg)?.alpha
        } else {
            alpha_recurrence_raw(p, a).0
        };
        Ok(dot(&alpha, &w))
    };
    Ok(Instance {
        x: pk.x,
        blocks: pk.blocks,
        f: Box::new(f),
        grad: [dp, da].concat(),
    })
}

fn full_step_instance(rng: &mut SeededRng, modified: bool) -> Result<Instance> {
    let t = rng.int_range(1, 6);
    let (d_s, d_h, d_a) = (rng.int_range(1, 4), rng.int_range(1, 4), rng.int_range(1, 5));
    let params = random_energy_params(rng, modified, d_s, d_h, d_a);
    let s = uniform_vec(rng, d_s, -1.0, 1.0);
    let memory = random_memory(rng, t, d_h);
    let alpha_prev = AttentionWeights {
        alpha: random_alpha_row(rng, t),
        row_index: 1,
    };
    let noise = uniform_vec(rng, t, -1.0, 1.0);
    let wc = uniform_vec(rng, d_h, -1.0, 1.0);
    let wa = uniform_vec(rng, t, -1.0, 1.0);
    let record = ComputationRecord::forward_with_noise(&params, &s, &memory, &alpha_prev, noise.clone())?;
    let grads = backward_full_step(&params, &memory, &record, &wc, Some(&wa))?;
    let mut pk = Packer::default();
    pk.push_params(&params);
    pk.push("s_prev", &s);
    pk.push("memory", memory.as_matrix().data());
    pk.push("alpha_prev", &alpha_prev.alpha);
    let grad = [flat_params(&grads.params), grads.s_prev, grads.memory, grads.alpha_prev].concat();
    let f = move |x: &[f64]| {
        let mut p = params.clone();
        let mut r = Reader::new(x);
        r.fill_params(&mut p);
        let s = r.take(d_s);
        let mem = Memory::from_matrix(Matrix::from_vec(t, d_h, r.take(t * d_h).to_vec())?)?;
        let prev = AttentionWeights {
            alpha: r.take(t).to_vec(),
            row_index: 1,
        };
        let rec = ComputationRecord::forward_with_noise(&p, s, &mem, &prev, noise.clone())?;
        Ok(dot(&rec.step.context, &wc) + dot(&rec.step.alpha.alpha, &wa))
    };
    Ok(Instance {
        x: pk.x,
        blocks: pk.blocks,
        f: Box::new(f),
        grad,
    })
}

/// Checks one op on `cfg.instances` random instances.
pub fn run_op(op: &str, cfg: &SuiteConfig) -> Result<OpReport> {
    let index = SUITE_OPS
        .iter()
        .position(|o| *o == op)
        .ok_or_else(|| crate::Error::Domain(format!("unknown gradient-check op '{op}'")))?;
    let mut rng = SeededRng::new(cfg.seed, index as u64);
    let mut params: Vec<ParamReport> = Vec::new();
    for _ in 0..cfg.instances {
        let inst = build_instance(op, &mut rng)?;
        let numeric = finite_difference(|x| (inst.f)(x).unwrap_or(f64::NAN), &inst.x, cfg.h);
        let mut at = 0;
        for (name, len) in &inst.blocks {
            let range = at..at + len;
            at += len;
            let rep = check_gradients(&inst.grad[range.clone()], &numeric[range], cfg.rel_tol, cfg.abs_tol)?;
            match params.iter_mut().find(|p| &p.name == name) {
                Some(p) => {
                    p.max_rel = p.max_rel.max(rep.max_rel_above_floor);
                    p.max_abs = p.max_abs.max(rep.max_abs);
                    p.passed &= rep.passed;
                }
                None => params.push(ParamReport {
                    name: name.clone(),
                    max_rel: rep.max_rel_above_floor,
                    max_abs: rep.max_abs,
                    passed: rep.passed,
                }),
            }
        }
    }
    Ok(OpReport {
        op: op.to_string(),
        instances: cfg.instances,
        passed: params.iter().all(|p| p.passed),
        params,
    })
}

/// Runs the listed ops, or all of [`SUITE_OPS`].
pub fn run_suite(ops: Option<&[&str]>, cfg: &SuiteConfig) -> Result<Vec<OpReport>> {
    ops.unwrap_or(SUITE_OPS).iter().map(|op| run_op(op, cfg)).collect()
}

