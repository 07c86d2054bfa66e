use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numkit::{dot, norm, Matrix, SeededRng};

/// Parameters of the weight-normalised additive energy
/// `g * (v / |v|) . tanh(W s + V h + b) + r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicEnergyParams {
    /// `d_a x d_s`, applied to the decoder state.
    pub w: Matrix,
    /// `d_a x d_h`, applied to the memory entry.
    pub v_proj: Matrix,
    pub b: Vec<f64>,
    pub v: Vec<f64>,
    pub g: f64,
    pub r: f64,
}

/// Parameters of the bilinear energy `g * (s^T W h) + r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DotEnergyParams {
    /// `d_s x d_h`
    pub w: Matrix,
    pub g: f64,
    pub r: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyKind {
    Modified,
    Dot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyParams {
    Modified(MonotonicEnergyParams),
    Dot(DotEnergyParams),
}

impl MonotonicEnergyParams {
    pub fn new(w: Matrix, v_proj: Matrix, b: Vec<f64>, v: Vec<f64>, g: f64, r: f64) -> Result<Self> {
        let d_a = w.rows();
        if v_proj.rows() != d_a || b.len() != d_a || v.len() != d_a {
            return domain(format!(
                "energy dimensions disagree: W {}x{}, V {}x{}, b {}, v {}",
                w.rows(),
                w.cols(),
                v_proj.rows(),
                v_proj.cols(),
                b.len(),
                v.len()
            ));
        }
        if !(norm(&v) > 0.0) {
            return domain("energy vector v must have nonzero norm");
        }
        Ok(Self {
            w,
            v_proj,
            b,
            v,
            g,
            r,
        })
    }

    /// Uniform `[-0.1, 0.1]` weights, `g = 1/sqrt(d_a)` and the given `r`.
    pub fn init(d_s: usize, d_h: usize, d_a: usize, r: f64, rng: &mut SeededRng) -> Self {
        let w = Matrix::uniform(d_a, d_s, -0.1, 0.1, rng);
        let v_proj = Matrix::uniform(d_a, d_h, -0.1, 0.1, rng);
        let b = (0..d_a).map(|_| rng.uniform_range(-0.1, 0.1)).collect();
        let v = (0..d_a).map(|_| rng.uniform_range(-0.1, 0.1)).collect();
        Self {
            w,
            v_proj,
            b,
            v,
            g: 1.0 / (d_a as f64).sqrt(),
            r,
        }
    }

    pub fn d_a(&self) -> usize {
        self.w.rows()
    }
}

impl DotEnergyParams {
    pub fn init(d_s: usize, d_h: usize, r: f64, rng: &mut SeededRng) -> Self {
        Self {
            w: Matrix::uniform(d_s, d_h, -0.1, 0.1, rng),
            g: 1.0 / (d_h as f64).sqrt(),
            r,
        }
    }
}

impl EnergyParams {
    pub fn kind(&self) -> EnergyKind {
        match self {
            EnergyParams::Modified(_) => EnergyKind::Modified,
            EnergyParams::Dot(_) => EnergyKind::Dot,
        }
    }

    pub fn d_s(&self) -> usize {
        match self {
            EnergyParams::Modified(p) => p.w.cols(),
            EnergyParams::Dot(p) => p.w.rows(),
        }
    }

    pub fn d_h(&self) -> usize {
        match self {
            EnergyParams::Modified(p) => p.v_proj.cols(),
            EnergyParams::Dot(p) => p.w.cols(),
        }
    }

    /// Same shape, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        match self {
            EnergyParams::Modified(p) => EnergyParams::Modified(MonotonicEnergyParams {
                w: Matrix::zeros(p.w.rows(), p.w.cols()),
                v_proj: Matrix::zeros(p.v_proj.rows(), p.v_proj.cols()),
                b: vec![0.0; p.b.len()],
                v: vec![0.0; p.v.len()],
                g: 0.0,
                r: 0.0,
            }),
            EnergyParams::Dot(p) => EnergyParams::Dot(DotEnergyParams {
                w: Matrix::zeros(p.w.rows(), p.w.cols()),
                g: 0.0,
                r: 0.0,
            }),
        }
    }

    /// Named flat views of every trainable array.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            EnergyParams::Modified(p) => vec![
                ("attn.w", p.w.data()),
                ("attn.v_proj", p.v_proj.data()),
                ("attn.b", &p.b),
                ("attn.v", &p.v),
                ("attn.g", std::slice::from_ref(&p.g)),
                ("attn.r", std::slice::from_ref(&p.r)),
            ],
            EnergyParams::Dot(p) => vec![
                ("attn.w", p.w.data()),
                ("attn.g", std::slice::from_ref(&p.g)),
                ("attn.r", std::slice::from_ref(&p.r)),
            ],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        match self {
            EnergyParams::Modified(p) => vec![
                ("attn.w", p.w.data_mut()),
                ("attn.v_proj", p.v_proj.data_mut()),
                ("attn.b", &mut p.b),
                ("attn.v", &mut p.v),
                ("attn.g", std::slice::from_mut(&mut p.g)),
                ("attn.r", std::slice::from_mut(&mut p.r)),
            ],
            EnergyParams::Dot(p) => vec![
                ("attn.w", p.w.data_mut()),
                ("attn.g", std::slice::from_mut(&mut p.g)),
                ("attn.r", std::slice::from_mut(&mut p.r)),
            ],
        }
    }

    /// Validates the parameters and caches the output scale.
    pub fn kernel(&self) -> Result<EnergyKernel<'_>> {
        let scale = match self {
            EnergyParams::Modified(p) => {
                let n = norm(&p.v);
                if !(n > 0.0) {
                    return domain("energy vector v must have nonzero norm");
                }
                p.g / n
            }
            EnergyParams::Dot(p) => p.g,
        };
        Ok(EnergyKernel {
            params: self,
            scale,
        })
    }

    /// Energy of one (decoder state, memory entry) pair.
    pub fn energy(&self, s_prev: &[f64], h: &[f64]) -> Result<f64> {
        let kernel = self.kernel()?;
        kernel.check_shapes(s_prev, h)?;
        Ok(kernel.score(&kernel.query(s_prev), &kernel.key(h)))
    }
}

/// An energy function split into a per-output-step query, a per-memory-entry
/// key and a cheap pairwise score, so that decoders can cache the
/// projections. Every energy evaluation in the crate goes through
/// [`EnergyKernel::score`].
#[derive(Clone, Copy, Debug)]
pub struct EnergyKernel<'a> {
    params: &'a EnergyParams,
    scale: f64,
}

impl<'a> EnergyKernel<'a> {
    pub fn params(&self) -> &'a EnergyParams {
        self.params
    }

    /// `g / |v|` for the modified energy, `g` for the dot energy.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn check_shapes(&self, s_prev: &[f64], h: &[f64]) -> Result<()> {
        let (d_s, d_h) = (self.params.d_s(), self.params.d_h());
        if s_prev.len() != d_s || h.len() != d_h {
            return domain(format!(
                "energy expects state of dim {d_s} and memory entry of dim {d_h}, got {} and {}",
                s_prev.len(),
                h.len()
            ));
        }
        Ok(())
    }

    /// `W s` (modified) or `W^T s` (dot).
    pub fn query(&self, s_prev: &[f64]) -> Vec<f64> {
        match self.params {
            EnergyParams::Modified(p) => p.w.matvec(s_prev),
            EnergyParams::Dot(p) => p.w.matvec_t(s_prev),
        }
    }

    /// `V h + b` (modified) or `h` (dot).
    pub fn key(&self, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.key_dim()];
        self.key_into(h, &mut out);
        out
    }

    pub fn key_into(&self, h: &[f64], out: &mut [f64]) {
        match self.params {
            EnergyParams::Modified(p) => {
                p.v_proj.matvec_into(h, out);
                for (o, b) in out.iter_mut().zip(&p.b) {
                    *o += b;
                }
            }
            EnergyParams::Dot(_) => out.copy_from_slice(h),
        }
    }

    pub fn key_dim(&self) -> usize {
        match self.params {
            EnergyParams::Modified(p) => p.d_a(),
            EnergyParams::Dot(p) => p.w.cols(),
        }
    }

    pub fn score(&self, query: &[f64], key: &[f64]) -> f64 {
        match self.params {
            EnergyParams::Modified(p) => {
                let mut acc = 0.0;
                for ((vk, qk), kk) in p.v.iter().zip(query).zip(key) {
                    acc += vk * (qk + kk).tanh();
                }
                self.scale * acc + p.r
            }
            EnergyParams::Dot(p) => self.scale * dot(query, key) + p.r,
        }
    }
}

/// The standard additive energy `v . tanh(W s + V h + b)`.
pub fn energy_bahdanau(
    w: &Matrix,
    v_proj: &Matrix,
    b: &[f64],
    v: &[f64],
    s_prev: &[f64],
    h: &[f64],
) -> Result<f64> {
    let d_a = v.len();
    if w.rows() != d_a || v_proj.rows() != d_a || b.len() != d_a {
        return domain("energy parameter dimensions disagree");
    }
    if w.cols() != s_prev.len() || v_proj.cols() != h.len() {
        return domain(format!(
            "energy expects state of dim {} and memory entry of dim {}, got {} and {}",
            w.cols(),
            v_proj.cols(),
            s_prev.len(),
            h.len()
        ));
    }
    let ws = w.matvec(s_prev);
    let vh = v_proj.matvec(h);
    Ok((0..d_a).map(|k| v[k] * (ws[k] + vh[k] + b[k]).tanh()).sum())
}

/// `g * (v / |v|) . tanh(W s + V h + b) + r`
pub fn energy_modified(params: &MonotonicEnergyParams, s_prev: &[f64], h: &[f64]) -> Result<f64> {
    let n = norm(&params.v);
    if !(n > 0.0) {
        return domain("energy vector v must have nonzero norm");
    }
    let raw = energy_bahdanau(&params.w, &params.v_proj, &params.b, &params.v, s_prev, h)?;
    Ok(params.g * raw / n + params.r)
}

/// `g * (s^T W h) + r`
pub fn energy_dot(params: &DotEnergyParams, s_prev: &[f64], h: &[f64]) -> Result<f64> {
    if params.w.rows() != s_prev.len() || params.w.cols() != h.len() {
        return domain(format!(
            "dot energy W is {}x{}, got state {} and entry {}",
            params.w.rows(),
            params.w.cols(),
            s_prev.len(),
            h.len()
        ));
    }
    Ok(params.g * dot(s_prev, &params.w.matvec(h)) + params.r)
}
