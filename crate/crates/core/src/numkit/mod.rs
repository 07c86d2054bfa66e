//! Deterministic numeric primitives shared by the rest of the crate.
//!
//! Everything here is a pure function of its inputs. Randomness is threaded
//! through an explicit [`SeededRng`].

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::{RngState, SeededRng};

use crate::error::{domain, Result};

/// Floor applied inside `ln` by [`exclusive_cumprod_stable`] so that a zero
/// factor produces a vanishing product instead of `-inf`.
pub const LOG_FLOOR: f64 = 1e-300;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(e: &[f64]) -> Result<Vec<f64>> {
    if e.is_empty() {
        return domain("softmax of an empty vector");
    }
    if e.iter().any(|x| !x.is_finite()) {
        return domain("softmax input contains non-finite entries");
    }
    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = e.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for x in &mut out {
        *x /= total;
    }
    Ok(out)
}

/// Logistic sigmoid.
///
/// Evaluated on the branch that never exponentiates a positive argument. For
/// very negative inputs the result is floored at the smallest positive normal
/// number instead of underflowing to zero; for `x` above roughly 37 it rounds
/// to exactly 1.0.
pub fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let ex = x.exp();
        ex / (1.0 + ex)
    };
    y.max(f64::MIN_POSITIVE)
}

/// Inclusive prefix sum.
pub fn cumsum(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Inclusive suffix sum: `out[k] = sum(v[k..])`.
pub fn reverse_cumsum(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    let mut acc = 0.0;
    for k in (0..v.len()).rev() {
        acc += v[k];
        out[k] = acc;
    }
    out
}

fn check_unit_interval(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !(0.0..=1.0).contains(x)) {
        Some(k) => domain(format!("entry {k} = {} outside [0, 1]", v[k])),
        None => Ok(()),
    }
}

/// Exclusive cumulative product, `out[0] = 1`, `out[k] = prod(v[..k])`,
/// multiplied directly.
pub fn exclusive_cumprod_exact(v: &[f64]) -> Result<Vec<f64>> {
    check_unit_interval(v)?;
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 1.0;
    for &x in v {
        out.push(acc);
        acc *= x;
    }
    Ok(out)
}

/// Exclusive cumulative product computed in log space:
/// `out[k] = exp(sum_{i<k} ln(max(v[i], floor)))`.
///
/// `floor` keeps `ln` finite for tiny factors; [`LOG_FLOOR`] is the usual
/// choice. Positions after an exact zero factor are exactly zero. Entries of
/// `v` must lie in `[0, 1]`.
pub fn exclusive_cumprod_stable(v: &[f64], floor: f64) -> Result<Vec<f64>> {
    check_unit_interval(v)?;
    if !(floor > 0.0 && floor < 1.0) {
        return domain(format!("log floor {floor} outside (0, 1)"));
    }
    let mut out = Vec::with_capacity(v.len());
    let mut log_acc = 0.0_f64;
    // An exact zero factor annihilates the rest of the product exactly.
    let mut annihilated = false;
    for &x in v {
        out.push(if annihilated { 0.0 } else { log_acc.exp() });
        annihilated |= x == 0.0;
        log_acc += x.max(floor).ln();
    }
    Ok(out)
}

/// `n` i.i.d. draws from `N(0, std^2)`. A zero `std` returns zeros without
/// consuming randomness.
pub fn draw_gaussian(rng: &mut SeededRng, n: usize, std: f64) -> Result<Vec<f64>> {
    if !(std >= 0.0 && std.is_finite()) {
        return domain(format!("gaussian std {std} must be finite and >= 0"));
    }
    if std == 0.0 {
        return Ok(vec![0.0; n]);
    }
    Ok((0..n).map(|_| std * rng.standard_normal()).collect())
}

pub fn draw_bernoulli(rng: &mut SeededRng, p: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("bernoulli probability {p} outside [0, 1]"));
    }
    Ok(rng.uniform() < p)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += scale * x`
pub fn axpy(scale: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += scale * xi;
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// `ln(sum(exp(v)))` with max subtraction.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_sums_to_one(e in prop::collection::vec(-700.0f64..700.0, 1..64)) {
            let out = softmax(&e).unwrap();
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(out.iter().all(|x| x.is_finite() && *x >= 0.0));
        }

        #[test]
        fn softmax_offset_invariant(
            e in prop::collection::vec(-50.0f64..50.0, 1..32),
            r in -100.0f64..100.0,
        ) {
            let a = softmax(&e).unwrap();
            let shifted: Vec<f64> = e.iter().map(|x| x + r).collect();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-14);
            }
        }

        #[test]
        fn sigmoid_monotone(start in -60.0f64..60.0, step in 1e-3f64..1.0) {
            let mut prev = sigmoid(start);
            for k in 1..50 {
                let y = sigmoid(start + step * k as f64);
                prop_assert!(y >= prev);
                prev = y;
            }
        }

        #[test]
        fn stable_cumprod_tracks_exact(v in prop::collection::vec(1e-6f64..=1.0, 0..64)) {
            let out = exclusive_cumprod_stable(&v, LOG_FLOOR).unwrap();
            for k in 0..v.len().saturating_sub(1) {
                prop_assert!((out[k + 1] - out[k] * v[k]).abs() < 1e-12);
            }
            let exact = exclusive_cumprod_exact(&v).unwrap();
            for (x, y) in out.iter().zip(&exact) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn rng_streams_reproduce(seed in any::<u64>(), stream in any::<u64>()) {
            let mut a = SeededRng::new(seed, stream);
            let mut b = SeededRng::new(seed, stream);
            for _ in 0..8 {
                prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
                prop_assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
            }
        }
    }
}
