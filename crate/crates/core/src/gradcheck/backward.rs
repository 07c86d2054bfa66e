//! Reverse-mode derivatives of the attention operations. Every function takes
//! the upstream sensitivity of a scalar loss with respect to the op's output
//! and returns (or accumulates) the sensitivities of its inputs.

use crate::attn::{scan_segments, soft::segmented_q, EnergyKernel, EnergyParams, Memory};
use crate::error::{domain, Result};
use crate::numkit::{dot, exclusive_cumprod_stable, norm, LOG_FLOOR};

/// `dx` for `p = sigmoid(x)` given the forward output `p`.
pub fn sigmoid_backward(p: f64, dp: f64) -> f64 {
    dp * p * (1.0 - p)
}

/// `dx` for `y = softmax(x)` given the forward output `y`.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Result<Vec<f64>> {
    if y.len() != dy.len() {
        return domain("softmax backward: shape mismatch");
    }
    let inner = dot(y, dy);
    Ok(y.iter().zip(dy).map(|(yi, di)| yi * (di - inner)).collect())
}

fn check_alpha_shapes(p: &[f64], alpha_prev: &[f64], dalpha: &[f64]) -> Result<()> {
    if p.len() != alpha_prev.len() || p.len() != dalpha.len() {
        return domain(format!(
            "alpha backward: p has {} entries, alpha_prev {}, upstream {}",
            p.len(),
            alpha_prev.len(),
            dalpha.len()
        ));
    }
    Ok(())
}

/// Gradients of the sequential `q` recurrence. Returns `(d_p, d_alpha_prev)`.
pub fn backward_monotonic_alpha(p: &[f64], alpha_prev: &[f64], dalpha: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_alpha_shapes(p, alpha_prev, dalpha)?;
    let t = p.len();
    let mut q = Vec::with_capacity(t);
    let mut q_prev = 0.0;
    let mut p_prev = 0.0;
    for j in 0..t {
        let qj = (1.0 - p_prev) * q_prev + alpha_prev[j];
        q.push(qj);
        q_prev = qj;
        p_prev = p[j];
    }
    let mut dp = vec![0.0; t];
    let mut da = vec![0.0; t];
    // sensitivity of q_{j+1}
    let mut dq_next = 0.0;
    for j in (0..t).rev() {
        let dq = dalpha[j] * p[j] + dq_next * (1.0 - p[j]);
        dp[j] = dalpha[j] * q[j] - dq_next * q[j];
        da[j] = dq;
        dq_next = dq;
    }
    Ok((dp, da))
}

/// Gradients of the clamped, segmented closed form. Mirrors its forward
/// operations (cumulative products, clamp, division, cumulative sum, carry
/// between segments); the clamp passes no gradient where it is active.
pub fn backward_monotonic_alpha_scan(
    p: &[f64],
    alpha_prev: &[f64],
    dalpha: &[f64],
    eps: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_alpha_shapes(p, alpha_prev, dalpha)?;
    let (q, carries) = segmented_q(p, alpha_prev, eps)?;
    let segments = scan_segments(p, eps);
    let mut dp: Vec<f64> = dalpha.iter().zip(&q).map(|(d, qj)| d * qj).collect();
    let mut dq: Vec<f64> = dalpha.iter().zip(p).map(|(d, pj)| d * pj).collect();
    let mut da = vec![0.0; p.len()];
    for (seg, &carry) in segments.iter().zip(&carries).rev() {
        let one_minus: Vec<f64> = p[seg.clone()].iter().map(|x| 1.0 - x).collect();
        let cp = exclusive_cumprod_stable(&one_minus, LOG_FLOOR)?;
        let a = &alpha_prev[seg.clone()];
        let n = cp.len();
        let mut sums = Vec::with_capacity(n);
        let mut acc = 0.0;
        for k in 0..n {
            acc += a[k] / cp[k].max(eps);
            sums.push(acc);
        }
        let dq_seg = dq[seg.clone()].to_vec();
        let mut dcp: Vec<f64> = (0..n).map(|k| dq_seg[k] * (carry + sums[k])).collect();
        let mut dcarry = 0.0;
        let mut dsum_tail = 0.0;
        for k in (0..n).rev() {
            dcarry += dq_seg[k] * cp[k];
            dsum_tail += dq_seg[k] * cp[k];
            let denom = cp[k].max(eps);
            da[seg.start + k] = dsum_tail / denom;
            if cp[k] >= eps {
                dcp[k] -= dsum_tail * a[k] / (denom * denom);
            }
        }
        // cp[k] = prod_{l<k} (1 - p_l); division-free reverse accumulation of
        // sum_{j>k} dcp[j] * prod_{k<l<j} (1 - p_l).
        let mut tail = 0.0;
        for k in (0..n.saturating_sub(1)).rev() {
            tail = dcp[k + 1] + one_minus[k + 1] * tail;
            dp[seg.start + k] -= cp[k] * tail;
        }
        if seg.start > 0 {
            let s = seg.start;
            dp[s - 1] -= dcarry * q[s - 1];
            dq[s - 1] += dcarry * (1.0 - p[s - 1]);
        }
    }
    Ok((dp, da))
}

/// Gradients of `context = sum_j alpha_j h_j`: returns `d_alpha` and adds
/// `alpha_j * d_context` into row `j` of `dmemory` (row-major `T x d_h`).
pub fn backward_context(alpha: &[f64], memory: &Memory, dcontext: &[f64], dmemory: &mut [f64]) -> Result<Vec<f64>> {
    let d = memory.dim();
    if alpha.len() != memory.len() || dcontext.len() != d || dmemory.len() != memory.len() * d {
        return domain("context backward: shape mismatch");
    }
    let mut dalpha = Vec::with_capacity(alpha.len());
    for (k, &a) in alpha.iter().enumerate() {
        dalpha.push(dot(memory.row(k), dcontext));
        for (dm, dc) in dmemory[k * d..(k + 1) * d].iter_mut().zip(dcontext) {
            *dm += a * dc;
        }
    }
    Ok(dalpha)
}

/// Backward of [`EnergyKernel::score`]: accumulates into the scalar and
/// vector parameters of `dparams` (everything except the projection
/// matrices), into `dquery` and into `dkey`.
pub fn score_backward(
    kernel: &EnergyKernel<'_>,
    query: &[f64],
    key: &[f64],
    de: f64,
    dparams: &mut EnergyParams,
    dquery: &mut [f64],
    dkey: &mut [f64],
) {
    match (kernel.params(), dparams) {
        (EnergyParams::Modified(p), EnergyParams::Modified(dp)) => {
            let n = norm(&p.v);
            let scale = kernel.scale();
            let mut vu = 0.0;
            let mut u = Vec::with_capacity(p.v.len());
            for ((vk, qk), kk) in p.v.iter().zip(query).zip(key) {
                let uk = (qk + kk).tanh();
                vu += vk * uk;
                u.push(uk);
            }
            dp.r += de;
            dp.g += de * vu / n;
            let c = p.g * vu / (n * n * n);
            for (k, uk) in u.iter().enumerate() {
                dp.v[k] += de * (p.g * uk / n - c * p.v[k]);
                let dz = de * scale * p.v[k] * (1.0 - uk * uk);
                dquery[k] += dz;
                dkey[k] += dz;
            }
        }
        (EnergyParams::Dot(p), EnergyParams::Dot(dp)) => {
            dp.r += de;
            dp.g += de * dot(query, key);
            for k in 0..query.len() {
                dquery[k] += de * p.g * key[k];
                dkey[k] += de * p.g * query[k];
            }
        }
        _ => unreachable!("gradient accumulator built for a different energy kind"),
    }
}

/// Backward of [`EnergyKernel::query`]: accumulates into the state-side
/// projection and into `ds`.
pub fn query_backward(params: &EnergyParams, s_prev: &[f64], dquery: &[f64], dparams: &mut EnergyParams, ds: &mut [f64]) {
    match (params, dparams) {
        (EnergyParams::Modified(p), EnergyParams::Modified(dp)) => {
            dp.w.add_outer(dquery, s_prev);
            p.w.matvec_t_acc(dquery, ds);
        }
        (EnergyParams::Dot(p), EnergyParams::Dot(dp)) => {
            dp.w.add_outer(s_prev, dquery);
            for (r, d) in ds.iter_mut().enumerate() {
                *d += dot(p.w.row(r), dquery);
            }
        }
        _ => unreachable!("gradient accumulator built for a different energy kind"),
    }
}

/// Backward of [`EnergyKernel::key`]: accumulates into the memory-side
/// projection and bias and into `dh`.
pub fn key_backward(params: &EnergyParams, h: &[f64], dkey: &[f64], dparams: &mut EnergyParams, dh: &mut [f64]) {
    match (params, dparams) {
        (EnergyParams::Modified(p), EnergyParams::Modified(dp)) => {
            dp.v_proj.add_outer(dkey, h);
            for (db, dk) in dp.b.iter_mut().zip(dkey) {
                *db += dk;
            }
            p.v_proj.matvec_t_acc(dkey, dh);
        }
        (EnergyParams::Dot(_), EnergyParams::Dot(_)) => {
            for (d, dk) in dh.iter_mut().zip(dkey) {
                *d += dk;
            }
        }
        _ => unreachable!("gradient accumulator built for a different energy kind"),
    }
}

/// Gradients of the bare additive energy `v . tanh(W s + V h + b)`, in the
/// order `(dW, dV, db, dv, ds, dh)` with matrices row-major.
#[allow(clippy::type_complexity)]
pub fn energy_bahdanau_backward(
    w: &crate::numkit::Matrix,
    v_proj: &crate::numkit::Matrix,
    b: &[f64],
    v: &[f64],
    s_prev: &[f64],
    h: &[f64],
    de: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut z = w.matvec(s_prev);
    let vh = v_proj.matvec(h);
    for ((zk, vk), bk) in z.iter_mut().zip(&vh).zip(b) {
        *zk += vk + bk;
    }
    let u: Vec<f64> = z.iter().map(|x| x.tanh()).collect();
    let dv: Vec<f64> = u.iter().map(|uk| de * uk).collect();
    let dz: Vec<f64> = v.iter().zip(&u).map(|(vk, uk)| de * vk * (1.0 - uk * uk)).collect();
    let mut dw = crate::numkit::Matrix::zeros(w.rows(), w.cols());
    dw.add_outer(&dz, s_prev);
    let mut dvp = crate::numkit::Matrix::zeros(v_proj.rows(), v_proj.cols());
    dvp.add_outer(&dz, h);
    let ds = w.matvec_t(&dz);
    let dh = v_proj.matvec_t(&dz);
    (dw.data().to_vec(), dvp.data().to_vec(), dz, dv, ds, dh)
}

