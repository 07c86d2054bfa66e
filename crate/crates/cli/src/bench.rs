use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use monattn::bench::{append_grid_csv, grid_json, speedup_grid, BenchCell, BenchConfig, Saturation};

use crate::config::List;
use crate::{resolve_enum, CliError, Common};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SaturationArg {
    Schedule,
    Immediate,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Output file; CSV rows are appended, JSON overwrites.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    /// Comma-separated memory lengths.
    #[arg(long)]
    t_values: Option<List>,
    /// Comma-separated output lengths.
    #[arg(long)]
    u_values: Option<List>,
    /// Sets d_h = d_s = d_a.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_enum)]
    saturation: Option<SaturationArg>,
}

pub fn run(a: BenchArgs) -> Result<ExitCode, CliError> {
    let mut r = a.common.resolver()?;
    let d = BenchConfig::default();
    let json = r.switch("json", a.json)?;
    let out: PathBuf = r
        .value(
            "out",
            a.out.map(|p| p.display().to_string()),
            if json { "bench.json" } else { "bench.csv" }.to_string(),
        )?
        .into();
    let dim = r.value("d", a.d, d.d_h)?;
    let saturation = match resolve_enum(&mut r, "saturation", a.saturation, "schedule")? {
        SaturationArg::Schedule => Saturation::Schedule,
        SaturationArg::Immediate => Saturation::Immediate,
    };
    let cfg = BenchConfig {
        seed: r.value("seed", a.common.seed, d.seed)?,
        trials: r.value("trials", a.trials, d.trials)?,
        warmup: r.value("warmup", a.warmup, d.warmup)?,
        t_values: r.value("t_values", a.t_values, List(d.t_values.clone()))?.0,
        u_values: r.value("u_values", a.u_values, List(d.u_values.clone()))?.0,
        d_h: dim,
        d_s: dim,
        d_a: dim,
        saturation,
    };
    r.finish()?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let cells = speedup_grid(&cfg)?;
    if json {
        let text = grid_json(&cfg, &cells)?;
        std::fs::write(&out, text + "\n")
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", out.display())))?;
    } else {
        append_grid_csv(&out, &cfg, &cells)?;
    }
    let range = |f: fn(&BenchCell) -> f64| {
        cells
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)))
    };
    let (min, max) = range(|c| c.speedup);
    let (med_min, med_max) = range(|c| c.median_speedup);
    println!(
        "{} cells written to {}; speedup min {min:.2}x max {max:.2}x (median-based min {med_min:.2}x max {med_max:.2}x)",
        cells.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}
