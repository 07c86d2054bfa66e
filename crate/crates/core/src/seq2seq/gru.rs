use serde::{Deserialize, Serialize};

use crate::numkit::{sigmoid, Matrix, SeededRng};

/// Single-layer GRU. Gate rows are stacked in the order reset, update,
/// candidate:
/// `r = sig(Wr x + br + Ur h + cr)`, `z = sig(Wz x + bz + Uz h + cz)`,
/// `n = tanh(Wn x + bn + r * (Un h + cn))`, `h' = (1 - z) n + z h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    /// `3H x input`
    pub w_ih: Matrix,
    /// `3H x H`
    pub w_hh: Matrix,
    pub b_ih: Vec<f64>,
    pub b_hh: Vec<f64>,
}

/// Intermediates of one GRU step kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GruCache {
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    /// `Un h + cn`
    pub hn: Vec<f64>,
}

impl Gru {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Matrix::zeros(3 * hidden, input),
            w_hh: Matrix::zeros(3 * hidden, hidden),
            b_ih: vec![0.0; 3 * hidden],
            b_hh: vec![0.0; 3 * hidden],
        }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        Self {
            w_ih: Matrix::uniform(3 * hidden, input, -0.1, 0.1, rng),
            w_hh: Matrix::uniform(3 * hidden, hidden, -0.1, 0.1, rng),
            b_ih: (0..3 * hidden).map(|_| rng.uniform_range(-0.1, 0.1)).collect(),
            b_hh: (0..3 * hidden).map(|_| rng.uniform_range(-0.1, 0.1)).collect(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols()
    }

    pub fn input(&self) -> usize {
        self.w_ih.cols()
    }

    pub fn step(&self, h: &[f64], x: &[f64]) -> (Vec<f64>, GruCache) {
        let hd = self.hidden();
        let mut gi = self.w_ih.matvec(x);
        let mut gh = self.w_hh.matvec(h);
        for (g, b) in gi.iter_mut().zip(&self.b_ih) {
            *g += b;
        }
        for (g, b) in gh.iter_mut().zip(&self.b_hh) {
            *g += b;
        }
        let r: Vec<f64> = (0..hd).map(|k| sigmoid(gi[k] + gh[k])).collect();
        let z: Vec<f64> = (0..hd).map(|k| sigmoid(gi[hd + k] + gh[hd + k])).collect();
        let hn = gh[2 * hd..].to_vec();
        let n: Vec<f64> = (0..hd).map(|k| (gi[2 * hd + k] + r[k] * hn[k]).tanh()).collect();
        let out = (0..hd).map(|k| (1.0 - z[k]) * n[k] + z[k] * h[k]).collect();
        (out, GruCache { r, z, n, hn })
    }

    /// Accumulates parameter gradients into `grad`, adds the input gradient
    /// into `dx` and returns the gradient with respect to `h`.
    pub fn backward(&self, h: &[f64], x: &[f64], cache: &GruCache, dout: &[f64], grad: &mut Gru, dx: &mut [f64]) -> Vec<f64> {
        let hd = self.hidden();
        let GruCache { r, z, n, hn } = cache;
        let mut dh: Vec<f64> = (0..hd).map(|k| dout[k] * z[k]).collect();
        let mut d_gi = vec![0.0; 3 * hd];
        let mut d_gh = vec![0.0; 3 * hd];
        for k in 0..hd {
            let dn = dout[k] * (1.0 - z[k]);
            let dz = dout[k] * (h[k] - n[k]);
            let dpre_n = dn * (1.0 - n[k] * n[k]);
            let dr = dpre_n * hn[k];
            let dpre_r = dr * r[k] * (1.0 - r[k]);
            let dpre_z = dz * z[k] * (1.0 - z[k]);
            d_gi[k] = dpre_r;
            d_gi[hd + k] = dpre_z;
            d_gi[2 * hd + k] = dpre_n;
            d_gh[k] = dpre_r;
            d_gh[hd + k] = dpre_z;
            d_gh[2 * hd + k] = dpre_n * r[k];
        }
        grad.w_ih.add_outer(&d_gi, x);
        grad.w_hh.add_outer(&d_gh, h);
        for (g, d) in grad.b_ih.iter_mut().zip(&d_gi) {
            *g += d;
        }
        for (g, d) in grad.b_hh.iter_mut().zip(&d_gh) {
            *g += d;
        }
        self.w_ih.matvec_t_acc(&d_gi, dx);
        self.w_hh.matvec_t_acc(&d_gh, &mut dh);
        dh
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [self.w_ih.data(), self.w_hh.data(), &self.b_ih, &self.b_hh]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [self.w_ih.data_mut(), self.w_hh.data_mut(), &mut self.b_ih, &mut self.b_hh]
    }
}
