//! Tokenization, present/absent partitioning, BIXO labels, target masking
//! and assembly of the joint input sequence.

mod assemble;
mod labels;
mod sample;
mod target;
mod vocab;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use assemble::{assemble, assemble_decode, AttentionMask, EncodedInput, MASKED_LOGIT};
pub use labels::{label_bixo, Label};
pub use sample::{find_matches, is_present, partition_keyphrases, RawSample, Sample};
pub use target::{build_target, MaskedTarget};
pub use vocab::{TokenId, Vocabulary, CLS, DELIM, MASK, PAD, SEP, SPECIALS, UNK};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary size {0} cannot hold the special tokens")]
    VocabTooSmall(usize),
    #[error("invalid vocabulary: {0}")]
    BadVocab(String),
    #[error("present keyphrase '{0}' does not occur in the document")]
    UnmatchedPhrase(String),
    #[error("sample {id}: target needs {len} positions but max_len is {max_len}")]
    TargetTooLong { id: String, len: usize, max_len: usize },
    #[error("document is empty")]
    EmptyDocument,
    #[error("mask probability {0} must be in (0, 1]")]
    BadMaskProb(f64),
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercases and splits text into alphanumeric words; everything else is
/// a separator.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Deterministic per-sample generator derived from `(seed, epoch, id)`, so
/// samples can be encoded in any order or in parallel.
pub fn sample_rng(seed: u64, epoch: u64, id: &str) -> ChaCha8Rng {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mixed = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(epoch.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        ^ h;
    ChaCha8Rng::seed_from_u64(mixed)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RawSample>, DataError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| DataError::Json {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<S: serde::Serialize>(path: &Path, rows: &[S]) -> Result<(), DataError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(|source| DataError::Json {
            path: path.display().to_string(),
            line: 0,
            source,
        })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
