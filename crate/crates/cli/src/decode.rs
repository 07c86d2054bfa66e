use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use monattn::checkpoint::ModelCheckpoint;
use monattn::numkit::SeededRng;
use monattn::seq2seq::{decode_greedy_hard, decode_greedy_soft, default_max_len, encode, sample_pair, streams};

use crate::{resolve_enum, CliError, Common};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Hard,
    Soft,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Input tokens, space or comma separated; without it, held-out pairs
    /// are sampled from the checkpoint's task.
    #[arg(long)]
    input: Option<String>,
    /// Number of sampled pairs when no --input is given.
    #[arg(long)]
    examples: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Print attention rows as CSV (soft) or the selected-index path (hard).
    #[arg(long)]
    dump_alpha: bool,
}

fn parse_tokens(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| CliError::Usage(format!("bad input token `{s}`: {e}"))))
        .collect()
}

fn join(tokens: &[usize]) -> String {
    tokens.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn run(a: DecodeArgs) -> Result<ExitCode, CliError> {
    let mut r = a.common.resolver()?;
    let seed = r.value("seed", a.common.seed, 0)?;
    let path: PathBuf = r
        .optional("checkpoint", a.checkpoint.map(|p| p.display().to_string()))?
        .map(PathBuf::from)
        .ok_or_else(|| CliError::Usage("decode requires --checkpoint <path>".into()))?;
    let mode = resolve_enum(&mut r, "mode", a.mode, "hard")?;
    let input = r.optional("input", a.input)?;
    let examples = r.value("examples", a.examples, 1)?;
    let max_len = r.optional("max_len", a.max_len)?;
    let dump_alpha = r.switch("dump_alpha", a.dump_alpha)?;
    r.finish()?;
    if max_len == Some(0) {
        return Err(CliError::Usage("--max-len must be at least 1".into()));
    }

    let ck = ModelCheckpoint::load(&path)?;
    let task = ck.config.task()?;
    if task.hash() != ck.task_hash {
        return Err(CliError::Runtime(format!(
            "{}: task hash mismatch (checkpoint {}, regenerated {})",
            path.display(),
            ck.task_hash,
            task.hash()
        )));
    }

    let pairs: Vec<(Vec<usize>, Option<Vec<usize>>)> = match input {
        Some(text) => vec![(parse_tokens(&text)?, None)],
        None => {
            let mut rng = SeededRng::new(seed, streams::EVAL);
            (0..examples)
                .map(|_| {
                    sample_pair(&task, &mut rng, ck.config.len_min..=ck.config.len_max).map(|(x, y)| (x, Some(y)))
                })
                .collect::<Result<_, _>>()?
        }
    };

    for (input, target) in pairs {
        let memory = encode(&ck.params, &input)?;
        let limit = max_len.unwrap_or_else(|| default_max_len(input.len()));
        println!("input: {}", join(&input));
        if let Some(target) = target {
            // Target includes the end token.
            println!("target: {}", join(&target[..target.len() - 1]));
        }
        match mode {
            Mode::Soft => {
                let out = decode_greedy_soft(&ck.params, &memory, limit)?;
                println!("output: {}", join(&out.tokens));
                if dump_alpha {
                    println!("alpha:");
                    for row in &out.alphas {
                        let cells: Vec<String> = row.iter().map(|a| format!("{a:e}")).collect();
                        println!("{}", cells.join(","));
                    }
                }
            }
            Mode::Hard => {
                let out = decode_greedy_hard(&ck.params, &memory, limit, &ck.config.attn)?;
                println!("output: {}", join(&out.tokens));
                if dump_alpha {
                    let path: Vec<String> = out
                        .path
                        .iter()
                        .map(|j| j.map_or_else(|| "-".to_string(), |j| j.to_string()))
                        .collect();
                    println!("path: {}", path.join(" "));
                    println!("energy_evals: {}", out.energy_evals);
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
