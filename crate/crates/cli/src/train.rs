use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use monattn::attn::EnergyKind;
use monattn::seq2seq::{train_loop, write_metrics_csv, TrainConfig};

use crate::{resolve_enum, CliError, Common};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EnergyArg {
    Modified,
    Dot,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metrics CSV to write (default: next to the checkpoint).
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, value_enum)]
    energy: Option<EnergyArg>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    task_seed: Option<u64>,
    #[arg(long)]
    len_min: Option<usize>,
    #[arg(long)]
    len_max: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    r_init: Option<f64>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long)]
    eval_examples: Option<usize>,
}

fn default_metrics_path(out: &std::path::Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.metrics.csv"))
}

pub fn run(a: TrainArgs) -> Result<ExitCode, CliError> {
    let mut r = a.common.resolver()?;
    let d = TrainConfig::default();
    let seed = r.value("seed", a.common.seed, 0)?;
    let out: PathBuf = r
        .optional("out", a.out.map(|p| p.display().to_string()))?
        .map(PathBuf::from)
        .ok_or_else(|| CliError::Usage("train requires --out <checkpoint path>".into()))?;
    let metrics: PathBuf = r
        .value(
            "metrics",
            a.metrics.map(|p| p.display().to_string()),
            default_metrics_path(&out).display().to_string(),
        )?
        .into();
    let energy = match resolve_enum(&mut r, "energy", a.energy, "modified")? {
        EnergyArg::Modified => EnergyKind::Modified,
        EnergyArg::Dot => EnergyKind::Dot,
    };
    let mut cfg = TrainConfig {
        seed,
        energy,
        max_steps: r.value("steps", a.steps, d.max_steps)?,
        vocab_size: r.value("vocab", a.vocab, d.vocab_size)?,
        task_seed: r.value("task_seed", a.task_seed, d.task_seed)?,
        len_min: r.value("len_min", a.len_min, d.len_min)?,
        len_max: r.value("len_max", a.len_max, d.len_max)?,
        d_model: r.value("d_model", a.d_model, d.d_model)?,
        batch_size: r.value("batch_size", a.batch_size, d.batch_size)?,
        lr: r.value("lr", a.lr, d.lr)?,
        clip_norm: r.value("clip_norm", a.clip_norm, d.clip_norm)?,
        r_init: r.value("r_init", a.r_init, d.r_init)?,
        eval_interval: r.value("eval_interval", a.eval_interval, d.eval_interval)?,
        eval_examples: r.value("eval_examples", a.eval_examples, d.eval_examples)?,
        ..d
    };
    cfg.attn.noise_std = r.value("noise_std", a.noise_std, cfg.attn.noise_std)?;
    cfg.attn.seed = seed;
    r.finish()?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let task = cfg.task()?;
    let (checkpoint, history) = train_loop(&task, &cfg)?;
    checkpoint.save(&out)?;
    write_metrics_csv(&metrics, &history)?;
    if let Some(last) = history.last() {
        let m = last.metrics;
        println!(
            "step {} loss {:.6} token_acc_soft {:.4} token_acc_hard {:.4} seq_acc {:.4} agreement {:.4}",
            last.step, last.loss, m.token_accuracy_soft, m.token_accuracy_hard, m.sequence_accuracy, m.hard_soft_agreement
        );
    }
    println!("checkpoint written to {}", out.display());
    println!("metrics written to {}", metrics.display());
    Ok(ExitCode::SUCCESS)
}
