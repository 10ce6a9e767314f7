//! Fixtures shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod prims;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unikp::datapipe::{assemble, partition_keyphrases, AttentionMask, EncodedInput, RawSample, Vocabulary, SPECIALS};
use unikp::model::{forward, Layout, ModelConfig, SrlLayer};
use unikp::numerics::{GradCheckConfig, Graph, NumericsError, Objective, ParameterStore, Real, Tensor, Var};
use unikp::objective::{batch_loss, bwc_weight, LossConfig, ObjectiveError, Schedule};

pub const WORDS: [&str; 10] = ["alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa", "zeta", "theta", "lambda"];

pub fn tiny_vocab() -> Vocabulary {
    let mut t: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    t.extend(WORDS.iter().map(|s| s.to_string()));
    Vocabulary::from_tokens(t).unwrap()
}

pub fn tiny_config(vocab: usize, srl_layers: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        ff_width: 12,
        dropout: 0.0,
        max_len: 32,
        srl_layers,
    }
}

/// Two short documents with one present and one absent phrase each.
pub fn fixture_batch(vocab: &Vocabulary) -> Vec<EncodedInput> {
    let raws = [
        RawSample {
            id: "a".into(),
            document: "alpha beta gamma delta beta".into(),
            keyphrases: vec!["beta gamma".into(), "omega sigma".into()],
        },
        RawSample {
            id: "b".into(),
            document: "kappa zeta alpha theta".into(),
            keyphrases: vec!["zeta".into(), "lambda".into()],
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    raws.iter()
        .map(|r| assemble(&partition_keyphrases(r, vocab).unwrap(), vocab, 0.7, 32, &mut rng).unwrap())
        .collect()
}

fn fixed_matrix(rows: usize, cols: usize, seed: u64, scale: f64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows * cols).map(|_| (rng.gen_range(-1.0..1.0) * scale) as f32).collect()
}

/// Random input `h` and one relation layer; the scalar is a fixed random
/// projection of both output streams.
pub struct SrlObjective {
    pub layer: SrlLayer,
    pub h: unikp::numerics::ParamId,
    pub rows: usize,
    pub source: usize,
    pub d: usize,
}

impl SrlObjective {
    pub fn new(rows: usize, source: usize, d: usize, seed: u64) -> (Self, ParameterStore<f32>) {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = store
            .insert("h", Tensor::matrix(rows, d, fixed_matrix(rows, d, seed + 1, 1.0)).unwrap())
            .unwrap();
        let layer = SrlLayer::init(&mut store, "srl.0", d, &mut rng).unwrap();
        // non-trivial norm gains and biases so their gradients are exercised
        for (id, p) in store.iter().map(|(id, p)| (id, p.name().to_string())).collect::<Vec<_>>() {
            if p.contains("ln") {
                let n = store.get(id).value().len();
                let v = fixed_matrix(1, n, seed + id.index() as u64 + 7, 0.5)
                    .into_iter()
                    .map(|x| x + if p.ends_with("gain") { 1.0 } else { 0.0 })
                    .collect();
                store.set_value(id, Tensor::vector(v).unwrap()).unwrap();
            }
        }
        (Self { layer, h, rows, source, d }, store)
    }
}

impl Objective for SrlObjective {
    type Error = NumericsError;

    fn build<T: Real>(&self, g: &mut Graph<T>, s: &ParameterStore<T>) -> Result<Var, NumericsError> {
        let mask = g.constant(AttentionMask::seq2seq(self.rows, self.source).additive())?;
        let h = g.param(s, self.h)?;
        let (p, a) = unikp::model::srl_specialize(g, s, &self.layer, h, h)?;
        let (p, a) = unikp::model::srl_coattend(g, s, &self.layer, p, a, Some(mask))?;
        let cp = g.constant(Tensor::matrix(self.rows, self.d, fixed_matrix(self.rows, self.d, 91, 1.0)).unwrap().cast())?;
        let ca = g.constant(Tensor::matrix(self.rows, self.d, fixed_matrix(self.rows, self.d, 92, 1.0)).unwrap().cast())?;
        let p = g.mul(p, cp)?;
        let a = g.mul(a, ca)?;
        let sp = g.sum(p)?;
        let sa = g.sum(a)?;
        g.add(sp, sa)
    }
}

/// The full training objective of a tiny model on a fixed two-sample batch,
/// with the bag-of-words weight taken from the schedule at step `t`.
pub struct CompositeObjective {
    pub cfg: ModelConfig,
    pub layout: Layout,
    pub batch: Vec<EncodedInput>,
    pub loss: LossConfig,
    pub w_bow: f64,
}

impl CompositeObjective {
    pub fn new(srl_layers: usize, seed: u64) -> (Self, ParameterStore<f32>) {
        let vocab = tiny_vocab();
        let cfg = tiny_config(vocab.len(), srl_layers);
        let mut store = ParameterStore::new();
        let layout = Layout::init(&cfg, &mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let schedule = Schedule::new(1.0, 100).unwrap();
        let w_bow = bwc_weight(40, &schedule).unwrap();
        let obj = Self {
            cfg,
            layout,
            batch: fixture_batch(&vocab),
            loss: LossConfig::default(),
            w_bow,
        };
        (obj, store)
    }
}

impl Objective for CompositeObjective {
    type Error = ObjectiveError;

    fn build<T: Real>(&self, g: &mut Graph<T>, s: &ParameterStore<T>) -> Result<Var, ObjectiveError> {
        Ok(batch_loss(g, &self.cfg, &self.layout, s, &self.batch, &self.loss, self.w_bow, None)?.0)
    }
}

/// Plain forward used by persistence checks.
pub fn logits_of(cfg: &ModelConfig, layout: &Layout, store: &ParameterStore<f32>, input: &EncodedInput) -> Vec<f32> {
    let mut g = Graph::new();
    let f = forward(cfg, layout, store, &mut g, input, None).unwrap();
    g.value(f.pke_logits).data().to_vec()
}

/// A random document with phrases planted between filler runs, plus the
/// exact token sequences of every planted occurrence.
pub struct Planted {
    pub vocab: Vocabulary,
    pub raw: RawSample,
    pub occurrences: Vec<Vec<unikp::datapipe::TokenId>>,
}

/// Phrase words come from one stem set and filler from another, with
/// optional `##` suffix pieces, so occurrences never collide with filler.
pub fn planted_doc(rng: &mut ChaCha8Rng) -> Planted {
    const PHRASE: [&str; 4] = ["pa", "po", "pu", "pe"];
    const FILLER: [&str; 4] = ["fa", "fo", "fu", "fe"];
    const ABSENT: [&str; 2] = ["qa", "qo"];
    const SUFFIX: [&str; 2] = ["ri", "ro"];
    let mut t: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    t.extend(PHRASE.iter().chain(&FILLER).chain(&ABSENT).map(|s| s.to_string()));
    t.extend(SUFFIX.iter().map(|s| format!("##{s}")));
    let vocab = Vocabulary::from_tokens(t).unwrap();

    let word = |rng: &mut ChaCha8Rng, stems: &[&str]| {
        let mut w = stems[rng.gen_range(0..stems.len())].to_string();
        for _ in 0..rng.gen_range(0..3) {
            w.push_str(SUFFIX[rng.gen_range(0..2)]);
        }
        w
    };
    let mut phrases: Vec<String> = Vec::new();
    let n_phrases = rng.gen_range(1..=4);
    while phrases.len() < n_phrases {
        let p = (0..rng.gen_range(1..=3)).map(|_| word(rng, &PHRASE)).collect::<Vec<_>>().join(" ");
        if !phrases.contains(&p) {
            phrases.push(p);
        }
    }
    let mut plants: Vec<usize> = Vec::new();
    for i in 0..phrases.len() {
        for _ in 0..rng.gen_range(1..=2) {
            plants.push(i);
        }
    }
    for i in (1..plants.len()).rev() {
        plants.swap(i, rng.gen_range(0..=i));
    }
    let mut words: Vec<String> = Vec::new();
    let mut occurrences = Vec::new();
    for &p in &plants {
        for _ in 0..rng.gen_range(1..=3) {
            words.push(word(rng, &FILLER));
        }
        words.push(phrases[p].clone());
        occurrences.push(vocab.tokenize(&phrases[p]));
    }
    words.push(word(rng, &FILLER));
    let mut keyphrases = phrases.clone();
    keyphrases.push(format!("{} {}", word(rng, &ABSENT), word(rng, &ABSENT)));
    Planted {
        raw: RawSample {
            id: format!("p{}", rng.gen::<u32>()),
            document: words.join(" "),
            keyphrases,
        },
        vocab,
        occurrences,
    }
}

/// Checks BIXO labels of a planted document: tags agree with word
/// boundaries, every span starts with B, and the multiset of labeled spans
/// equals the multiset of planted occurrences.
pub fn check_bixo(p: &Planted) -> Result<(), String> {
    use unikp::datapipe::{label_bixo, Label};
    let s = partition_keyphrases(&p.raw, &p.vocab).map_err(|e| e.to_string())?;
    let labels = label_bixo(&s.document, &s.present, &p.vocab).map_err(|e| e.to_string())?;
    if labels.len() != s.document.len() {
        return Err("label count differs from token count".into());
    }
    let mut spans: Vec<Vec<unikp::datapipe::TokenId>> = Vec::new();
    for (i, (&tok, &l)) in s.document.iter().zip(&labels).enumerate() {
        let cont = p.vocab.is_continuation(tok);
        match l {
            Label::X if !cont => return Err(format!("X on word-initial token at {i}")),
            Label::B | Label::I if cont => return Err(format!("{l:?} on continuation at {i}")),
            Label::I | Label::X if i == 0 || labels[i - 1] == Label::O => {
                return Err(format!("span without B at {i}"))
            }
            _ => {}
        }
        match l {
            Label::B => spans.push(vec![tok]),
            Label::I | Label::X => spans.last_mut().unwrap().push(tok),
            Label::O => {}
        }
    }
    let mut want = p.occurrences.clone();
    want.sort();
    spans.sort();
    if spans != want {
        return Err(format!("spans {spans:?} != planted {want:?}"));
    }
    Ok(())
}

/// Outcome of one small decoding problem.
pub struct BeamTrial {
    pub beam: f64,
    pub greedy: f64,
    /// Width 64 never prunes for 8 emittable tokens and length <= 3.
    pub wide: f64,
    pub best: f64,
    /// The optimum starts with a token outside the first step's top 5.
    pub first_token_pruned: bool,
    pub max_target_len: usize,
}

impl BeamTrial {
    /// Beam result is the global optimum, up to float ties.
    pub fn optimal(&self) -> bool {
        self.beam >= self.best - 1e-9
    }
}

/// A randomly initialized model with vocabulary size in 7..=12, a random
/// document, and beam, greedy, wide and exhaustive decodes of its target.
pub fn beam_trial(seed: u64) -> BeamTrial {
    use unikp::inference::{beam_search, exhaustive_best, BeamConfig, ModelScorer, NextTokenScorer};
    use unikp::model::UniKeyphrase;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = rng.gen_range(7..=12);
    let cfg = ModelConfig {
        vocab_size: vocab,
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        ff_width: 16,
        dropout: 0.0,
        max_len: 24,
        srl_layers: rng.gen_range(0..=2),
    };
    let model = UniKeyphrase::init(cfg, seed).unwrap();
    let doc: Vec<u32> = (0..rng.gen_range(2..8)).map(|_| rng.gen_range(6..vocab as u32)).collect();
    let max_target_len = rng.gen_range(1..=3);
    let scorer = ModelScorer::new(&model, &doc);
    let run = |beam_size| beam_search(&scorer, &BeamConfig { beam_size, max_target_len }).unwrap().log_prob;
    let best = exhaustive_best(&scorer, max_target_len).unwrap();
    let first = scorer.log_probs(&[]).unwrap();
    let rank = (0..vocab)
        .filter(|&t| !matches!(t as u32, unikp::datapipe::PAD | unikp::datapipe::UNK | unikp::datapipe::CLS | unikp::datapipe::MASK))
        .filter(|&t| first[t] > first[best.tokens[0] as usize])
        .count();
    BeamTrial {
        beam: run(5),
        greedy: run(1),
        wide: run(64),
        best: best.log_prob,
        first_token_pruned: rank >= 5,
        max_target_len,
    }
}

/// A random metric instance: ranked predictions and gold phrases drawn from
/// a pool with inflectional variants so stemming and dedup matter.
pub fn metric_instance(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<String>) {
    const POOL: [&str; 14] = [
        "model", "models", "modeling", "graph", "graphs", "network", "networks", "learn", "learning", "neural",
        "search", "searching", "Search", "beam",
    ];
    let phrase = |rng: &mut ChaCha8Rng| {
        (0..rng.gen_range(1..=2)).map(|_| POOL[rng.gen_range(0..POOL.len())]).collect::<Vec<_>>().join(" ")
    };
    let preds = (0..rng.gen_range(0..9)).map(|_| phrase(rng)).collect();
    let gold = (0..rng.gen_range(0..6)).map(|_| phrase(rng)).collect();
    (preds, gold)
}

fn reference_key(phrase: &str) -> String {
    let stemmer = rust_stemmers::Stemmer::create(rust_stemmers::Algorithm::English);
    phrase
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| stemmer.stem(w).into_owned())
        .collect::<Vec<_>>()
        .join(" ")
}

fn reference_unique(phrases: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for p in phrases {
        let k = reference_key(p);
        if !k.is_empty() && !out.iter().any(|o| *o == k) {
            out.push(k);
        }
    }
    out
}

/// Brute-force F1 with an explicit precision denominator.
fn reference_f1(preds: &[String], gold: &[String], denom: usize) -> f64 {
    let mut matches = 0usize;
    for p in preds {
        if gold.iter().any(|g| g == p) {
            matches += 1;
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let p = matches as f64 / denom as f64;
    let r = matches as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Reference `(F1@5, F1@M)`, `None` without gold.
pub fn reference_metrics(preds: &[String], gold: &[String]) -> Option<(f64, f64)> {
    let gold = reference_unique(gold);
    if gold.is_empty() {
        return None;
    }
    let preds = reference_unique(preds);
    let top: Vec<String> = preds.iter().take(5).cloned().collect();
    Some((reference_f1(&top, &gold, 5), reference_f1(&preds, &gold, preds.len())))
}

/// Writes a generated corpus of `docs` documents under `dir` and returns a
/// config pointing at it with `ckpt_dir = dir/ckpt`.
pub fn prepared_run(dir: &std::path::Path, docs: usize, epochs: usize) -> unikp::harness::RunConfig {
    use unikp::harness::{gen_corpus, write_corpus, CorpusSpec, RunConfig};
    let spec = CorpusSpec {
        docs,
        ..CorpusSpec::default()
    };
    let data = dir.join("data");
    write_corpus(&gen_corpus(&spec).unwrap(), &spec, &data).unwrap();
    RunConfig {
        epochs,
        train: data.join("train.jsonl"),
        valid: data.join("valid.jsonl"),
        test: data.join("test.jsonl"),
        ckpt_dir: dir.join("ckpt"),
        deterministic: true,
        ..RunConfig::default()
    }
}

/// A deliberately small model for fast end-to-end checks.
pub fn shrink(cfg: &mut unikp::harness::RunConfig) {
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.ff_width = 32;
    cfg.batch_size = 4;
    cfg.val_limit = 10;
}

/// Settings for the 64-bit checks of whole networks. The floor keeps
/// key-bias coordinates, whose true gradient is exactly zero under softmax
/// shift invariance, from being judged on pure rounding noise.
pub fn f64_config() -> GradCheckConfig {
    GradCheckConfig {
        step: 1e-4,
        floor: 1e-6,
        ..Default::default()
    }
}

/// 32-bit analytic gradients against 64-bit differences.
pub fn shadow_config() -> GradCheckConfig {
    GradCheckConfig {
        step: 1e-4,
        floor: 1e-4,
        ..Default::default()
    }
}
