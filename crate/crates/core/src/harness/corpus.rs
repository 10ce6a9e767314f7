//! Synthetic corpora with planted present phrases and derivable absent
//! phrases.
//!
//! Each document belongs to one family. Its present keyphrases are
//! two-word technique phrases, a modifier followed by a head word, both
//! drawn from that family's technique words and planted as contiguous
//! spans among shared filler words. Its absent
//! keyphrases are the family's area and task phrases, whose words never
//! occur in any document, so generating them requires recognizing the
//! family from the planted techniques.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kv::{parse_value, read_kv};
use super::HarnessError;
use crate::datapipe::{write_jsonl, RawSample};
use crate::evaluation::stem_key;

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    /// Total distinct words across all roles.
    pub vocab_size: usize,
    pub docs: usize,
    pub doc_len_min: usize,
    pub doc_len_max: usize,
    pub phrases_min: usize,
    pub phrases_max: usize,
    pub families: usize,
    pub technique_words: usize,
    /// Words per absent phrase (area and task).
    pub absent_len: usize,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            vocab_size: 200,
            docs: 2000,
            doc_len_min: 36,
            doc_len_max: 44,
            phrases_min: 4,
            phrases_max: 6,
            families: 8,
            technique_words: 10,
            absent_len: 2,
            valid_frac: 0.1,
            test_frac: 0.1,
            seed: 7,
        }
    }
}

impl CorpusSpec {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "vocab_size" => self.vocab_size = parse_value(key, value)?,
            "docs" => self.docs = parse_value(key, value)?,
            "doc_len_min" => self.doc_len_min = parse_value(key, value)?,
            "doc_len_max" => self.doc_len_max = parse_value(key, value)?,
            "phrases_min" => self.phrases_min = parse_value(key, value)?,
            "phrases_max" => self.phrases_max = parse_value(key, value)?,
            "families" => self.families = parse_value(key, value)?,
            "technique_words" => self.technique_words = parse_value(key, value)?,
            "absent_len" => self.absent_len = parse_value(key, value)?,
            "valid_frac" => self.valid_frac = parse_value(key, value)?,
            "test_frac" => self.test_frac = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut spec = Self::default();
        for (line, k, v) in read_kv(path)? {
            spec.set(&k, &v).map_err(|msg| HarnessError::Config {
                origin: path.display().to_string(),
                line,
                msg,
            })?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("vocab_size", self.vocab_size.to_string()),
            ("docs", self.docs.to_string()),
            ("doc_len_min", self.doc_len_min.to_string()),
            ("doc_len_max", self.doc_len_max.to_string()),
            ("phrases_min", self.phrases_min.to_string()),
            ("phrases_max", self.phrases_max.to_string()),
            ("families", self.families.to_string()),
            ("technique_words", self.technique_words.to_string()),
            ("absent_len", self.absent_len.to_string()),
            ("valid_frac", self.valid_frac.to_string()),
            ("test_frac", self.test_frac.to_string()),
            ("seed", self.seed.to_string()),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    fn filler_words(&self) -> usize {
        self.vocab_size
            .saturating_sub(self.families * (self.technique_words + 2 * self.absent_len))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| {
            Err(HarnessError::Config {
                origin: "corpus spec".into(),
                line: 0,
                msg,
            })
        };
        if self.docs == 0 || self.families == 0 || self.absent_len == 0 {
            return bad("docs, families and absent_len must be positive".into());
        }
        if self.phrases_min == 0 || self.phrases_min > self.phrases_max {
            return bad("need 1 <= phrases_min <= phrases_max".into());
        }
        let modifiers = self.technique_words / 2;
        if modifiers * (self.technique_words - modifiers) < self.phrases_max {
            return bad(format!("{} technique words cannot form {} distinct phrases", self.technique_words, self.phrases_max));
        }
        if self.doc_len_min > self.doc_len_max || self.doc_len_min < 3 * self.phrases_max {
            return bad("doc_len_min must fit the phrases with filler gaps (>= 3 * phrases_max)".into());
        }
        if self.filler_words() < 8 {
            return bad(format!("vocab_size {} leaves fewer than 8 filler words", self.vocab_size));
        }
        if !(self.valid_frac >= 0.0 && self.test_frac >= 0.0 && self.valid_frac + self.test_frac < 1.0) {
            return bad("valid_frac + test_frac must be below 1".into());
        }
        Ok(())
    }
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Distinct pronounceable words whose stems are distinct as well, so stem
/// matching at evaluation never merges two of them.
fn pseudo_words(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut words = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    let mut stems = HashSet::new();
    while words.len() < n {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(NUCLEI.choose(rng).unwrap());
        }
        if rng.gen_bool(0.3) {
            w.push_str(["n", "r", "s", "x"].choose(rng).unwrap());
        }
        let stem = stem_key(&w);
        if seen.contains(&w) || stems.contains(&stem) {
            continue;
        }
        seen.insert(w.clone());
        stems.insert(stem);
        words.push(w);
    }
    words
}

struct Family {
    modifiers: Vec<String>,
    heads: Vec<String>,
    area: String,
    task: String,
}

/// The three splits of a generated corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<RawSample>,
    pub valid: Vec<RawSample>,
    pub test: Vec<RawSample>,
}

pub fn gen_corpus(spec: &CorpusSpec) -> Result<Corpus, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let words = pseudo_words(spec.vocab_size, &mut rng);
    let mut it = words.into_iter();
    let mut take = |k: usize| -> Vec<String> { it.by_ref().take(k).collect() };
    let families: Vec<Family> = (0..spec.families)
        .map(|_| Family {
            modifiers: take(spec.technique_words / 2),
            heads: take(spec.technique_words - spec.technique_words / 2),
            area: take(spec.absent_len).join(" "),
            task: take(spec.absent_len).join(" "),
        })
        .collect();
    let filler = take(spec.filler_words());

    let mut samples = Vec::with_capacity(spec.docs);
    for i in 0..spec.docs {
        let fam = &families[rng.gen_range(0..families.len())];
        let k = rng.gen_range(spec.phrases_min..=spec.phrases_max);
        let mut phrases: Vec<String> = Vec::with_capacity(k);
        while phrases.len() < k {
            let a = fam.modifiers.choose(&mut rng).unwrap();
            let b = fam.heads.choose(&mut rng).unwrap();
            let p = format!("{a} {b}");
            if !phrases.contains(&p) {
                phrases.push(p);
            }
        }
        let len = rng.gen_range(spec.doc_len_min..=spec.doc_len_max);
        let n_fill = len - 2 * k;
        let mut slots: Vec<usize> = (0..=n_fill).collect();
        slots.shuffle(&mut rng);
        let mut slots = slots[..k].to_vec();
        slots.sort_unstable();
        // distinct insertion points keep at least one filler between phrases
        let mut doc: Vec<String> = Vec::with_capacity(len);
        let mut planted = Vec::with_capacity(k);
        let mut next = 0;
        for f in 0..=n_fill {
            while next < k && slots[next] == f {
                planted.push(phrases[next].clone());
                doc.push(phrases[next].clone());
                next += 1;
            }
            if f < n_fill {
                doc.push(filler.choose(&mut rng).unwrap().clone());
            }
        }
        let mut keyphrases = planted;
        keyphrases.push(fam.area.clone());
        keyphrases.push(fam.task.clone());
        samples.push(RawSample {
            id: format!("doc{i:05}"),
            document: doc.join(" "),
            keyphrases,
        });
    }

    let n_test = (spec.docs as f64 * spec.test_frac).round() as usize;
    let n_valid = (spec.docs as f64 * spec.valid_frac).round() as usize;
    let test = samples.split_off(spec.docs - n_test);
    let valid = samples.split_off(spec.docs - n_test - n_valid);
    Ok(Corpus {
        train: samples,
        valid,
        test,
    })
}

/// Writes `train.jsonl`, `valid.jsonl`, `test.jsonl` and the spec itself.
pub fn write_corpus(corpus: &Corpus, spec: &CorpusSpec, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_jsonl(&dir.join("train.jsonl"), &corpus.train)?;
    write_jsonl(&dir.join("valid.jsonl"), &corpus.valid)?;
    write_jsonl(&dir.join("test.jsonl"), &corpus.test)?;
    std::fs::write(dir.join("corpus.spec"), spec.to_kv())?;
    Ok(())
}
