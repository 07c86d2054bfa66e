use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, Result};
use crate::numkit::SeededRng;

/// A synthetic transduction task: every input symbol expands to one or two
/// output symbols, so the input/output alignment is monotonic by
/// construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub vocab_size: usize,
    /// `expansions[s]` is the output string for input symbol `s`.
    pub expansions: Vec<Vec<usize>>,
    pub seed: u64,
}

impl TaskSpec {
    /// Decoder start token (input side only).
    pub fn sos(&self) -> usize {
        self.vocab_size
    }

    pub fn eos(&self) -> usize {
        self.vocab_size + 1
    }

    /// Size of the decoder token space: symbols plus both specials.
    pub fn n_tokens(&self) -> usize {
        self.vocab_size + 2
    }

    /// Concatenated expansions of `input`, without the end token.
    pub fn expand(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(2 * input.len());
        for &s in input {
            match self.expansions.get(s) {
                Some(e) => out.extend_from_slice(e),
                None => return domain(format!("input symbol {s} outside vocabulary of {}", self.vocab_size)),
            }
        }
        Ok(out)
    }

    /// Hex SHA-256 of the table's canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("task serializes");
        hex::encode(Sha256::digest(&json))
    }
}

pub fn generate_task(seed: u64, vocab_size: usize) -> Result<TaskSpec> {
    if vocab_size < 2 {
        return domain(format!("vocabulary size must be at least 2, got {vocab_size}"));
    }
    let mut rng = SeededRng::new(seed, 0);
    let expansions = (0..vocab_size)
        .map(|_| {
            let len = if rng.uniform() < 0.5 { 1 } else { 2 };
            (0..len).map(|_| rng.int_range(0, vocab_size - 1)).collect()
        })
        .collect();
    Ok(TaskSpec {
        vocab_size,
        expansions,
        seed,
    })
}

/// A random input of length drawn from `len_range` and its target,
/// terminated by the end token.
pub fn sample_pair(task: &TaskSpec, rng: &mut SeededRng, len_range: RangeInclusive<usize>) -> Result<(Vec<usize>, Vec<usize>)> {
    let (lo, hi) = (*len_range.start(), *len_range.end());
    if lo < 1 || hi > 64 || lo > hi {
        return domain(format!("length range {lo}..={hi} must lie within 1..=64"));
    }
    let len = rng.int_range(lo, hi);
    let input: Vec<usize> = (0..len).map(|_| rng.int_range(0, task.vocab_size - 1)).collect();
    let mut target = task.expand(&input)?;
    target.push(task.eos());
    Ok((input, target))
}
