//! F1@5 / F1@M under stemming and deduplication, prediction counts, the
//! bag-of-words error and stream distances.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use rand::Rng;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::datapipe::{normalize_words, EncodedInput, RawSample};
use crate::inference::PredictionRecord;
use crate::model::{ModelError, UniKeyphrase};

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

/// Matching key for a phrase: normalized words, each Porter2-stemmed.
pub fn stem_key(phrase: &str) -> String {
    normalize_words(phrase)
        .iter()
        .map(|w| stemmer().stem(w).into_owned())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Stem keys in first-seen order with duplicates and empties removed.
pub fn dedup_stemmed<S: AsRef<str>>(phrases: &[S]) -> Vec<String> {
    let mut seen = HashSet::new();
    phrases
        .iter()
        .map(|p| stem_key(p.as_ref()))
        .filter(|k| !k.is_empty() && seen.insert(k.clone()))
        .collect()
}

fn f1(matches: usize, n_pred: usize, n_gold: usize) -> f64 {
    if matches == 0 || n_pred == 0 || n_gold == 0 {
        return 0.0;
    }
    let p = matches as f64 / n_pred as f64;
    let r = matches as f64 / n_gold as f64;
    2.0 * p * r / (p + r)
}

fn count_matches(preds: &[String], gold: &[String]) -> usize {
    let gold: HashSet<&String> = gold.iter().collect();
    preds.iter().filter(|p| gold.contains(p)).count()
}

/// F1 over the top `k` ranked predictions; short lists are padded with
/// non-matching entries so the precision denominator is always `k`.
/// `None` when there is no gold phrase.
pub fn f1_at_k<S: AsRef<str>, G: AsRef<str>>(preds: &[S], gold: &[G], k: usize) -> Option<f64> {
    let gold = dedup_stemmed(gold);
    if gold.is_empty() {
        return None;
    }
    let mut preds = dedup_stemmed(preds);
    preds.truncate(k);
    Some(f1(count_matches(&preds, &gold), k, gold.len()))
}

pub fn f1_at_5<S: AsRef<str>, G: AsRef<str>>(preds: &[S], gold: &[G]) -> Option<f64> {
    f1_at_k(preds, gold, 5)
}

/// F1 over all predictions, no padding.
pub fn f1_at_m<S: AsRef<str>, G: AsRef<str>>(preds: &[S], gold: &[G]) -> Option<f64> {
    let gold = dedup_stemmed(gold);
    if gold.is_empty() {
        return None;
    }
    let preds = dedup_stemmed(preds);
    Some(f1(count_matches(&preds, &gold), preds.len(), gold.len()))
}

/// Mean of the defined scores; 0 when none is defined.
pub fn macro_average(scores: impl IntoIterator<Item = Option<f64>>) -> f64 {
    let (sum, n) = scores
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean unique present and absent predictions per document.
pub fn count_stats(preds: &[PredictionRecord]) -> (f64, f64) {
    if preds.is_empty() {
        return (0.0, 0.0);
    }
    let n = preds.len() as f64;
    let pk: usize = preds.iter().map(|p| dedup_stemmed(&p.present_phrases()).len()).sum();
    let ak: usize = preds.iter().map(|p| dedup_stemmed(&p.absent).len()).sum();
    (pk as f64 / n, ak as f64 / n)
}

fn word_bag<S: AsRef<str>>(phrases: &[S]) -> BTreeMap<String, i64> {
    let mut bag = BTreeMap::new();
    for p in phrases {
        for w in normalize_words(p.as_ref()) {
            *bag.entry(w).or_insert(0) += 1;
        }
    }
    bag
}

/// L1 distance between the word bags of predicted and gold phrases.
pub fn bow_error<S: AsRef<str>, G: AsRef<str>>(preds: &[S], gold: &[G]) -> f64 {
    let p = word_bag(preds);
    let g = word_bag(gold);
    let keys: HashSet<&String> = p.keys().chain(g.keys()).collect();
    keys.into_iter()
        .map(|k| (p.get(k).unwrap_or(&0) - g.get(k).unwrap_or(&0)).abs())
        .sum::<i64>() as f64
}

/// Present/absent split of gold phrases at word level: a phrase is present
/// when its normalized words occur contiguously in the document.
pub fn split_gold(sample: &RawSample) -> (Vec<String>, Vec<String>) {
    let doc = normalize_words(&sample.document);
    let mut present = Vec::new();
    let mut absent = Vec::new();
    for k in &sample.keyphrases {
        let words = normalize_words(k);
        if words.is_empty() {
            continue;
        }
        if doc.windows(words.len()).any(|w| w == words.as_slice()) {
            present.push(k.clone());
        } else {
            absent.push(k.clone());
        }
    }
    (present, absent)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub pairs: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub distances: Vec<f64>,
}

impl DistanceSummary {
    pub fn from_distances(distances: Vec<f64>) -> Self {
        if distances.is_empty() {
            return Self::default();
        }
        let n = distances.len();
        Self {
            pairs: n,
            mean: distances.iter().sum::<f64>() / n as f64,
            min: distances.iter().copied().fold(f64::INFINITY, f64::min),
            max: distances.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            distances,
        }
    }
}

/// Euclidean distance between the final extraction and generation vectors
/// at `n_pairs` randomly chosen (sample, position) pairs.
pub fn srl_distance<R: Rng + ?Sized>(
    model: &UniKeyphrase,
    inputs: &[EncodedInput],
    n_pairs: usize,
    rng: &mut R,
) -> Result<DistanceSummary, ModelError> {
    if n_pairs == 0 || inputs.is_empty() {
        return Ok(DistanceSummary::default());
    }
    let mut picks: Vec<(usize, usize)> = (0..n_pairs)
        .map(|_| {
            let s = rng.gen_range(0..inputs.len());
            (s, rng.gen_range(0..inputs[s].len()))
        })
        .collect();
    picks.sort_unstable();
    let d = model.config.d_model;
    let mut out = Vec::with_capacity(n_pairs);
    let mut cached: Option<(usize, crate::model::Inference)> = None;
    for (s, pos) in picks {
        if cached.as_ref().map(|c| c.0) != Some(s) {
            cached = Some((s, model.infer(&inputs[s])?));
        }
        let inf = &cached.as_ref().unwrap().1;
        let p = &inf.p.data()[pos * d..(pos + 1) * d];
        let a = &inf.a.data()[pos * d..(pos + 1) * d];
        let dist = p
            .iter()
            .zip(a)
            .map(|(x, y)| f64::from(x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        out.push(dist);
    }
    Ok(DistanceSummary::from_distances(out))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub documents: usize,
    pub present_f1_at_5: f64,
    pub present_f1_at_m: f64,
    pub absent_f1_at_5: f64,
    pub absent_f1_at_m: f64,
    /// All predictions against all gold phrases.
    pub total_f1_at_m: f64,
    pub avg_present: f64,
    pub avg_absent: f64,
    pub bow_error: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub srl_distance: Option<DistanceSummary>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "documents,present_f1_at_5,present_f1_at_m,absent_f1_at_5,absent_f1_at_m,total_f1_at_m,avg_present,avg_absent,bow_error";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4}",
            self.documents,
            self.present_f1_at_5,
            self.present_f1_at_m,
            self.absent_f1_at_5,
            self.absent_f1_at_m,
            self.total_f1_at_m,
            self.avg_present,
            self.avg_absent,
            self.bow_error
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no prediction for document '{0}'")]
    MissingPrediction(String),
}

/// Scores predictions against a gold corpus; predictions are matched by id
/// and every gold document must have one.
pub fn evaluate(gold: &[RawSample], preds: &[PredictionRecord]) -> Result<EvalReport, EvalError> {
    let by_id: BTreeMap<&str, &PredictionRecord> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut matched = Vec::with_capacity(gold.len());
    for g in gold {
        let p = by_id.get(g.id.as_str()).ok_or_else(|| EvalError::MissingPrediction(g.id.clone()))?;
        matched.push((g, *p));
    }
    let mut present_5 = Vec::new();
    let mut present_m = Vec::new();
    let mut absent_5 = Vec::new();
    let mut absent_m = Vec::new();
    let mut total_m = Vec::new();
    let mut bow = 0.0;
    for (g, p) in &matched {
        let (gp, ga) = split_gold(g);
        let pp = p.present_phrases();
        present_5.push(f1_at_5(&pp, &gp));
        present_m.push(f1_at_m(&pp, &gp));
        absent_5.push(f1_at_5(&p.absent, &ga));
        absent_m.push(f1_at_m(&p.absent, &ga));
        let all: Vec<String> = pp.iter().chain(&p.absent).cloned().collect();
        total_m.push(f1_at_m(&all, &g.keyphrases));
        bow += bow_error(&all, &g.keyphrases);
    }
    let n = matched.len();
    let records: Vec<PredictionRecord> = matched.iter().map(|(_, p)| (*p).clone()).collect();
    let (avg_present, avg_absent) = count_stats(&records);
    Ok(EvalReport {
        documents: n,
        present_f1_at_5: macro_average(present_5),
        present_f1_at_m: macro_average(present_m),
        absent_f1_at_5: macro_average(absent_5),
        absent_f1_at_m: macro_average(absent_m),
        total_f1_at_m: macro_average(total_m),
        avg_present,
        avg_absent,
        bow_error: if n == 0 { 0.0 } else { bow / n as f64 },
        srl_distance: None,
    })
}
