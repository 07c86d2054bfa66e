//! Gradient-check instances for the model's own layers.

use super::gru::Gru;
use super::model::{accumulate_gradient, decode_train, ModelDims, ModelParams};
use super::task::{generate_task, sample_pair};
use crate::attn::{EnergyKind, MonotonicConfig};
use crate::error::{domain, Result};
use crate::gradcheck::{Instance, Packer, Reader};
use crate::numkit::{dot, log_sum_exp, softmax, Matrix, SeededRng};

fn uniform_vec(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_range(lo, hi)).collect()
}

fn random_gru(rng: &mut SeededRng, input: usize, hidden: usize) -> Gru {
    Gru {
        w_ih: Matrix::uniform(3 * hidden, input, -0.8, 0.8, rng),
        w_hh: Matrix::uniform(3 * hidden, hidden, -0.8, 0.8, rng),
        b_ih: uniform_vec(rng, 3 * hidden, -0.5, 0.5),
        b_hh: uniform_vec(rng, 3 * hidden, -0.5, 0.5),
    }
}

fn load_gru(r: &mut Reader<'_>, input: usize, hidden: usize) -> Result<Gru> {
    Ok(Gru {
        w_ih: Matrix::from_vec(3 * hidden, input, r.take(3 * hidden * input).to_vec())?,
        w_hh: Matrix::from_vec(3 * hidden, hidden, r.take(3 * hidden * hidden).to_vec())?,
        b_ih: r.take(3 * hidden).to_vec(),
        b_hh: r.take(3 * hidden).to_vec(),
    })
}

pub(crate) fn gradcheck_instance(op: &str, rng: &mut SeededRng) -> Result<Instance> {
    match op {
        "gru_cell" => gru_instance(rng),
        "output_layer" => output_instance(rng),
        "seq2seq_loss" => loss_instance(rng),
        other => domain(format!("unknown gradient-check op '{other}'")),
    }
}

fn gru_instance(rng: &mut SeededRng) -> Result<Instance> {
    let (input, hidden) = (rng.int_range(1, 4), rng.int_range(1, 4));
    let gru = random_gru(rng, input, hidden);
    let h = uniform_vec(rng, hidden, -1.0, 1.0);
    let x = uniform_vec(rng, input, -1.0, 1.0);
    let w = uniform_vec(rng, hidden, -1.0, 1.0);
    let (_, cache) = gru.step(&h, &x);
    let mut grad = Gru::zeros(input, hidden);
    let mut dx = vec![0.0; input];
    let dh = gru.backward(&h, &x, &cache, &w, &mut grad, &mut dx);
    let mut pk = Packer::default();
    for (name, t) in ["w_ih", "w_hh", "b_ih", "b_hh"].iter().zip(gru.tensors()) {
        pk.push(name, t);
    }
    pk.push("h", &h);
    pk.push("x", &x);
    let g = grad.tensors();
    let analytic = [g[0], g[1], g[2], g[3], &dh, &dx].concat();
    let f = move |v: &[f64]| {
        let mut r = Reader::new(v);
        let gru = load_gru(&mut r, input, hidden)?;
        let (out, _) = gru.step(r.take(hidden), r.take(input));
        Ok(dot(&out, &w))
    };
    Ok(Instance {
        x: pk.x,
        blocks: pk.blocks,
        f: Box::new(f),
        grad: analytic,
    })
}

/// Cross-entropy of `softmax(W z + b)` against a fixed class.
fn output_instance(rng: &mut SeededRng) -> Result<Instance> {
    let (classes, dim) = (rng.int_range(2, 6), rng.int_range(1, 5));
    let w = Matrix::uniform(classes, dim, -1.0, 1.0, rng);
    let b = uniform_vec(rng, classes, -0.5, 0.5);
    let z = uniform_vec(rng, dim, -1.0, 1.0);
    let y = rng.int_range(0, classes - 1);
    let forward = move |w: &Matrix, b: &[f64], z: &[f64]| -> Vec<f64> {
        w.matvec(z).iter().zip(b).map(|(a, c)| a + c).collect()
    };
    let logits = forward(&w, &b, &z);
    let mut dl = softmax(&logits)?;
    dl[y] -= 1.0;
    let mut dw = Matrix::zeros(classes, dim);
    dw.add_outer(&dl, &z);
    let dz = w.matvec_t(&dl);
    let mut pk = Packer::default();
    pk.push("out.w", w.data());
    pk.push("out.b", &b);
    pk.push("z", &z);
    let analytic = [dw.data(), &dl, &dz].concat();
    let f = move |v: &[f64]| {
        let mut r = Reader::new(v);
        let w = Matrix::from_vec(classes, dim, r.take(classes * dim).to_vec())?;
        let lg = forward(&w, r.take(classes), r.take(dim));
        Ok(log_sum_exp(&lg) - lg[y])
    };
    Ok(Instance {
        x: pk.x,
        blocks: pk.blocks,
        f: Box::new(f),
        grad: analytic,
    })
}

/// The whole teacher-forced loss of a tiny model, with training noise drawn
/// from a fixed stream (the same draws at every evaluation).
fn loss_instance(rng: &mut SeededRng) -> Result<Instance> {
    let energy = if rng.uniform() < 0.5 {
        EnergyKind::Modified
    } else {
        EnergyKind::Dot
    };
    let dims = ModelDims {
        vocab_size: rng.int_range(2, 4),
        d_emb: rng.int_range(1, 3),
        d_h: rng.int_range(1, 3),
        d_s: rng.int_range(1, 3),
        d_a: rng.int_range(1, 3),
        energy,
    };
    let mut params = ModelParams::init(dims, rng.uniform_range(-1.0, 1.0), rng)?;
    // larger weights than the training init so every nonlinearity is exercised
    for (_, t) in params.tensors_mut() {
        for x in t.iter_mut() {
            *x *= 6.0;
        }
    }
    let task = generate_task(rng.int_range(0, 1000) as u64, dims.vocab_size)?;
    let (input, target) = sample_pair(&task, rng, 1..=4)?;
    let cfg = MonotonicConfig::default();
    let stream = 1_000_000 + rng.int_range(0, 1_000_000) as u64;
    let noise = rng.fork(stream);
    let mut grad = params.zeros_like();
    let mut n1 = noise.clone();
    accumulate_gradient(&params, &input, &target, &cfg, Some(&mut n1), 1.0, &mut grad)?;
    let mut pk = Packer::default();
    for (name, t) in params.tensors() {
        pk.push(name, t);
    }
    let analytic: Vec<f64> = grad.tensors().into_iter().flat_map(|(_, t)| t.to_vec()).collect();
    let f = move |v: &[f64]| {
        let mut p = params.clone();
        let mut r = Reader::new(v);
        for (_, t) in p.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(r.take(n));
        }
        let mut n2 = noise.clone();
        Ok(decode_train(&p, &input, &target, &cfg, Some(&mut n2))?.loss)
    };
    Ok(Instance {
        x: pk.x,
        blocks: pk.blocks,
        f: Box::new(f),
        grad: analytic,
    })
}
