//! Wall-clock comparison of softmax attention and hard monotonic attention
//! producing the contexts of a whole output sequence.
//!
//! Both paths use the same [`EnergyKernel`](crate::attn::EnergyKernel) and
//! the same random inputs in every trial. Decoder states and memory entries
//! are uniform on `[-1, 1]`; the energy weights use the usual small uniform
//! init with `r = 0`. Selection on the hard path is steered by adding
//! `+50`/`-50` to the energies (see [`Saturation`]); the same offsets are
//! added on the softmax path.

use std::fmt::Write as _;
use std::hint::black_box;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::attn::{
    EnergyParams, HardMonotonicAttention, Memory, MonotonicConfig, MonotonicEnergyParams, SoftmaxAttention,
};
use crate::error::{domain, Error, Result};
use crate::numkit::{Matrix, SeededRng};

/// Energy offset magnitude used to pin selection probabilities near 0 or 1.
pub const OFFSET: f64 = 50.0;

/// How the hard path's selection probabilities are generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Saturation {
    /// Output step `i` selects entry `ceil(i * T / U)`: offset `+50` for
    /// `j >= ceil(i T / U)`, `-50` before, so attention sweeps the whole
    /// memory at an average advance of `T / U` per step.
    Schedule,
    /// Offset `+50` everywhere: every step selects where the previous one
    /// stopped.
    Immediate,
}

impl Saturation {
    fn offset(self, i: usize, t: usize, u: usize) -> impl Fn(usize) -> f64 {
        let target = match self {
            Saturation::Schedule => (i * t).div_ceil(u),
            Saturation::Immediate => 0,
        };
        move |j| if j >= target { OFFSET } else { -OFFSET }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Saturation::Schedule => "energy offset +50 for j >= ceil(i*T/U), -50 otherwise (both paths)",
            Saturation::Immediate => "energy offset +50 everywhere (both paths)",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchConfig {
    pub t_values: Vec<usize>,
    pub u_values: Vec<usize>,
    pub d_h: usize,
    pub d_s: usize,
    pub d_a: usize,
    pub trials: usize,
    pub warmup: usize,
    pub seed: u64,
    pub saturation: Saturation,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            t_values: vec![50, 100, 200, 400],
            u_values: vec![50, 100, 200, 400, 1000],
            d_h: 256,
            d_s: 256,
            d_a: 256,
            trials: 10,
            warmup: 2,
            seed: 0,
            saturation: Saturation::Schedule,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 10 {
            return domain(format!("at least 10 trials per cell required, got {}", self.trials));
        }
        if [self.d_h, self.d_s, self.d_a].contains(&0) {
            return domain("benchmark dimensions must be positive");
        }
        if self.t_values.is_empty() || self.u_values.is_empty() || self.t_values.contains(&0) || self.u_values.contains(&0) {
            return domain("T and U lists must be non-empty and positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchCell {
    pub t: usize,
    pub u: usize,
    pub softmax_mean_s: f64,
    pub hard_mean_s: f64,
    pub softmax_median_s: f64,
    pub hard_median_s: f64,
    /// `softmax_mean_s / hard_mean_s`
    pub speedup: f64,
    /// `softmax_median_s / hard_median_s`
    pub median_speedup: f64,
    /// Largest per-trial count on the hard path.
    pub hard_energy_evals: usize,
    pub softmax_energy_evals: usize,
}

/// Mean and median of per-trial times.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub mean_s: f64,
    pub median_s: f64,
}

impl Timing {
    fn from_samples(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let median = if n % 2 == 1 {
            samples[n / 2]
        } else {
            0.5 * (samples[n / 2 - 1] + samples[n / 2])
        };
        Self {
            mean_s: samples.iter().sum::<f64>() / n as f64,
            median_s: median,
        }
    }
}

/// Random inputs of one trial: energy weights, memory and `U` decoder
/// states.
pub struct TrialInputs {
    pub params: EnergyParams,
    pub memory: Memory,
    pub states: Vec<Vec<f64>>,
}

impl TrialInputs {
    pub fn generate(t: usize, u: usize, d_h: usize, d_s: usize, d_a: usize, rng: &mut SeededRng) -> Result<Self> {
        let params = EnergyParams::Modified(MonotonicEnergyParams::init(d_s, d_h, d_a, 0.0, rng));
        let memory = Memory::from_matrix(Matrix::uniform(t, d_h, -1.0, 1.0, rng))?;
        let states = (0..u)
            .map(|_| (0..d_s).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
            .collect();
        Ok(Self { params, memory, states })
    }
}

/// All `U` softmax contexts; returns the number of energy evaluations.
pub fn run_softmax(inputs: &TrialInputs, saturation: Saturation) -> Result<usize> {
    let (t, u) = (inputs.memory.len(), inputs.states.len());
    let mut attn = SoftmaxAttention::new(&inputs.params, &inputs.memory)?;
    for (i, s) in inputs.states.iter().enumerate() {
        black_box(attn.step_with_offset(s, saturation.offset(i + 1, t, u))?);
    }
    Ok(attn.energy_evals())
}

/// All `U` hard monotonic contexts; returns the number of energy
/// evaluations, which is asserted to be at most `T + U`.
pub fn run_hard(inputs: &TrialInputs, saturation: Saturation) -> Result<usize> {
    let (t, u) = (inputs.memory.len(), inputs.states.len());
    let mut attn = HardMonotonicAttention::new(&inputs.params, &inputs.memory, &MonotonicConfig::default())?;
    for (i, s) in inputs.states.iter().enumerate() {
        black_box(attn.step_with_offset(s, saturation.offset(i + 1, t, u))?);
    }
    let evals = attn.energy_evals();
    assert!(evals <= t + u, "hard path used {evals} energy evaluations for T = {t}, U = {u}");
    Ok(evals)
}

fn time<T>(f: impl FnOnce() -> Result<T>) -> Result<(f64, T)> {
    let start = Instant::now();
    let out = f()?;
    Ok((start.elapsed().as_secs_f64().max(1e-9), out))
}

/// Times both paths on identical inputs for one `(T, U)` cell.
pub fn bench_cell(t: usize, u: usize, cfg: &BenchConfig, rng: &mut SeededRng) -> Result<BenchCell> {
    let mut soft_times = Vec::with_capacity(cfg.trials);
    let mut hard_times = Vec::with_capacity(cfg.trials);
    let (mut hard_evals, mut soft_evals) = (0, 0);
    for trial in 0..cfg.warmup + cfg.trials {
        let inputs = TrialInputs::generate(t, u, cfg.d_h, cfg.d_s, cfg.d_a, rng)?;
        let (ts, es) = time(|| run_softmax(&inputs, cfg.saturation))?;
        let (th, eh) = time(|| run_hard(&inputs, cfg.saturation))?;
        if trial >= cfg.warmup {
            soft_times.push(ts);
            hard_times.push(th);
            soft_evals = soft_evals.max(es);
            hard_evals = hard_evals.max(eh);
        }
    }
    let soft = Timing::from_samples(soft_times);
    let hard = Timing::from_samples(hard_times);
    Ok(BenchCell {
        t,
        u,
        softmax_mean_s: soft.mean_s,
        hard_mean_s: hard.mean_s,
        softmax_median_s: soft.median_s,
        hard_median_s: hard.median_s,
        speedup: soft.mean_s / hard.mean_s,
        median_speedup: soft.median_s / hard.median_s,
        hard_energy_evals: hard_evals,
        softmax_energy_evals: soft_evals,
    })
}

fn single_cell_cfg(trials: usize, d: (usize, usize, usize), saturation: Saturation) -> BenchConfig {
    BenchConfig {
        d_h: d.0,
        d_s: d.1,
        d_a: d.2,
        trials,
        saturation,
        ..BenchConfig::default()
    }
}

/// Softmax path alone: mean seconds over `trials` after one warmup trial.
/// `dims` is `(d_h, d_s, d_a)`.
pub fn bench_softmax(t: usize, u: usize, dims: (usize, usize, usize), trials: usize, rng: &mut SeededRng) -> Result<Timing> {
    let cfg = single_cell_cfg(trials, dims, Saturation::Schedule);
    let mut samples = Vec::with_capacity(trials);
    for trial in 0..=trials {
        let inputs = TrialInputs::generate(t, u, cfg.d_h, cfg.d_s, cfg.d_a, rng)?;
        let (s, _) = time(|| run_softmax(&inputs, cfg.saturation))?;
        if trial > 0 {
            samples.push(s);
        }
    }
    Ok(Timing::from_samples(samples))
}

/// Hard path alone: timing and the largest per-trial energy-evaluation
/// count.
pub fn bench_hard(
    t: usize,
    u: usize,
    dims: (usize, usize, usize),
    trials: usize,
    rng: &mut SeededRng,
    saturation: Saturation,
) -> Result<(Timing, usize)> {
    let cfg = single_cell_cfg(trials, dims, saturation);
    let mut samples = Vec::with_capacity(trials);
    let mut evals = 0;
    for trial in 0..=trials {
        let inputs = TrialInputs::generate(t, u, cfg.d_h, cfg.d_s, cfg.d_a, rng)?;
        let (s, e) = time(|| run_hard(&inputs, saturation))?;
        if trial > 0 {
            samples.push(s);
            evals = evals.max(e);
        }
    }
    Ok((Timing::from_samples(samples), evals))
}

/// One cell per `(T, U)` pair, `T` outer, cells run sequentially.
pub fn speedup_grid(cfg: &BenchConfig) -> Result<Vec<BenchCell>> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed, 0);
    let mut cells = Vec::new();
    for &t in &cfg.t_values {
        for &u in &cfg.u_values {
            let cell = bench_cell(t, u, cfg, &mut rng)?;
            log::info!(
                "T={t} U={u}: softmax {:.3e}s hard {:.3e}s speedup {:.2}",
                cell.softmax_mean_s,
                cell.hard_mean_s,
                cell.speedup
            );
            cells.push(cell);
        }
    }
    Ok(cells)
}

pub const CSV_HEADER: &str = "T,U,softmax_s,hard_s,speedup,hard_energy_evals";

/// Metadata block (`#`-prefixed lines), header and one row per cell.
pub fn grid_csv(cfg: &BenchConfig, cells: &[BenchCell], timestamp_unix: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# run timestamp_unix={timestamp_unix} seed={}", cfg.seed);
    let _ = writeln!(
        out,
        "# config t_values={:?} u_values={:?} d_h={} d_s={} d_a={} trials={} warmup={}",
        cfg.t_values, cfg.u_values, cfg.d_h, cfg.d_s, cfg.d_a, cfg.trials, cfg.warmup
    );
    let _ = writeln!(out, "# hard path p-generation: {}", cfg.saturation.describe());
    let _ = writeln!(out, "# inputs uniform in [-1, 1]; times are means over trials in seconds");
    let _ = writeln!(out, "{CSV_HEADER}");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{:.6e},{:.6e},{:.4},{}",
            c.t, c.u, c.softmax_mean_s, c.hard_mean_s, c.speedup, c.hard_energy_evals
        );
    }
    out
}

/// Appends a run (metadata, header and rows) to `path`.
pub fn append_grid_csv(path: &Path, cfg: &BenchConfig, cells: &[BenchCell]) -> Result<()> {
    let ts = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(grid_csv(cfg, cells, ts).as_bytes()).map_err(|e| Error::io(path, e))
}

/// The same cells as a JSON document.
pub fn grid_json(cfg: &BenchConfig, cells: &[BenchCell]) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a BenchConfig,
        p_generation: &'static str,
        cells: &'a [BenchCell],
    }
    serde_json::to_string_pretty(&Doc {
        config: cfg,
        p_generation: cfg.saturation.describe(),
        cells,
    })
    .map_err(|e| Error::Domain(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(saturation: Saturation) -> BenchConfig {
        BenchConfig {
            t_values: vec![3, 7],
            u_values: vec![1, 5, 12],
            d_h: 4,
            d_s: 3,
            d_a: 5,
            trials: 10,
            warmup: 1,
            seed: 1,
            saturation,
        }
    }

    #[test]
    fn hard_evals_within_contract() {
        let cells = speedup_grid(&tiny(Saturation::Schedule)).unwrap();
        assert_eq!(cells.len(), 6);
        for c in &cells {
            assert!(c.hard_energy_evals <= c.t + c.u, "{c:?}");
            assert_eq!(c.softmax_energy_evals, c.t * c.u);
            assert!(c.softmax_mean_s > 0.0 && c.hard_mean_s > 0.0);
        }
    }

    #[test]
    fn immediate_selection_costs_one_eval_per_step() {
        let mut rng = SeededRng::new(0, 0);
        let (_, evals) = bench_hard(5, 9, (4, 3, 2), 10, &mut rng, Saturation::Immediate).unwrap();
        assert_eq!(evals, 9);
    }

    #[test]
    fn schedule_visits_whole_memory() {
        let mut rng = SeededRng::new(0, 0);
        let inputs = TrialInputs::generate(100, 1000, 4, 4, 4, &mut rng).unwrap();
        let evals = run_hard(&inputs, Saturation::Schedule).unwrap();
        assert!(evals <= 1100);
        // one evaluation per step plus one per skipped entry
        assert_eq!(evals, 1000 + 99);
    }

    #[test]
    fn single_cell_runs() {
        let mut rng = SeededRng::new(0, 0);
        assert!(bench_softmax(1, 1, (2, 2, 2), 10, &mut rng).unwrap().mean_s > 0.0);
    }

    #[test]
    fn csv_layout() {
        let cfg = tiny(Saturation::Schedule);
        let cells = speedup_grid(&cfg).unwrap();
        let text = grid_csv(&cfg, &cells, 0);
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 7);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 6));
        assert!(grid_json(&cfg, &cells).unwrap().contains("\"cells\""));
    }

    #[test]
    fn appends_rather_than_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.csv");
        let cfg = BenchConfig {
            t_values: vec![2],
            u_values: vec![2],
            ..tiny(Saturation::Schedule)
        };
        let cells = speedup_grid(&cfg).unwrap();
        append_grid_csv(&path, &cfg, &cells).unwrap();
        append_grid_csv(&path, &cfg, &cells).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches(CSV_HEADER).count(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(BenchConfig { trials: 5, ..BenchConfig::default() }.validate().is_err());
        assert!(BenchConfig { t_values: vec![], ..BenchConfig::default() }.validate().is_err());
        assert!(BenchConfig::default().validate().is_ok());
    }
}
