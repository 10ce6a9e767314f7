use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{HarnessError, RunConfig};
use crate::datapipe::{assemble, partition_keyphrases, read_jsonl, sample_rng, EncodedInput, RawSample, Sample, Vocabulary};
use crate::evaluation::{evaluate, EvalReport};
use crate::inference::{predict, BeamConfig, PredictionRecord};
use crate::model::UniKeyphrase;
use crate::numerics::{warmup_lr, Adam, Graph, NumericsError};
use crate::objective::{batch_loss, bwc_weight, ObjectiveError, Schedule};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const CONFIG_FILE: &str = "run.cfg";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const EVAL_LOG: &str = "eval_log.csv";
pub const BEST_CKPT: &str = "best.ukpc";

pub fn epoch_ckpt(epoch: usize) -> String {
    format!("epoch_{epoch:03}.ukpc")
}

/// One optimizer step of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub l_pke: f64,
    pub l_akg: f64,
    pub l_bow: f64,
    pub w_bow: f64,
    pub total: f64,
}

impl LogRow {
    pub const HEADER: &'static str = "step,L_PKE,L_AKG,L_BoW,w_BoW,total";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.l_pke, self.l_akg, self.l_bow, self.w_bow, self.total
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return None;
        }
        Some(Self {
            step: f[0].parse().ok()?,
            l_pke: f[1].parse().ok()?,
            l_akg: f[2].parse().ok()?,
            l_bow: f[3].parse().ok()?,
            w_bow: f[4].parse().ok()?,
            total: f[5].parse().ok()?,
        })
    }
}

/// Validation metrics after an epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub epoch: usize,
    pub step: usize,
    pub report: EvalReport,
}

impl EvalRow {
    pub fn header() -> String {
        format!("epoch,step,{}", EvalReport::CSV_HEADER)
    }

    pub fn csv(&self) -> String {
        format!("{},{},{}", self.epoch, self.step, self.report.csv_row())
    }
}

pub struct TrainOutcome {
    pub best: UniKeyphrase,
    pub last: UniKeyphrase,
    pub vocab: Vocabulary,
    pub log: Vec<LogRow>,
    pub evals: Vec<EvalRow>,
    pub best_epoch: usize,
    pub best_score: f64,
    pub ckpt_dir: PathBuf,
}

/// Decodes every document, in parallel unless `deterministic`. Output order
/// follows input order either way.
pub fn predict_corpus(
    model: &UniKeyphrase,
    vocab: &Vocabulary,
    docs: &[RawSample],
    beam: &BeamConfig,
    deterministic: bool,
) -> Result<Vec<PredictionRecord>, HarnessError> {
    let one = |d: &RawSample| -> Result<PredictionRecord, HarnessError> {
        Ok(predict(model, vocab, &d.document, beam)?.record(&d.id))
    };
    if deterministic {
        docs.iter().map(one).collect()
    } else {
        docs.par_iter().map(one).collect()
    }
}

pub fn encode_batch(
    samples: &[&Sample],
    vocab: &Vocabulary,
    cfg: &RunConfig,
    epoch: usize,
) -> Result<Vec<EncodedInput>, HarnessError> {
    let one = |s: &&Sample| -> Result<EncodedInput, HarnessError> {
        let mut rng = sample_rng(cfg.seed, epoch as u64, &s.id);
        Ok(assemble(s, vocab, cfg.mask_prob, cfg.max_len, &mut rng)?)
    };
    if cfg.deterministic {
        samples.iter().map(one).collect()
    } else {
        samples.par_iter().map(one).collect()
    }
}

fn write_lines(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<(), HarnessError> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn dump_nonfinite(dir: &Path, step: usize, ids: &[&str], lr: f64, w_bow: f64, err: &dyn std::fmt::Display) -> PathBuf {
    let path = dir.join(format!("nonfinite_step{step}.txt"));
    let mut s = String::new();
    let _ = writeln!(s, "step = {step}\nlr = {lr}\nw_bow = {w_bow}\nerror = {err}\nbatch = {}", ids.join(" "));
    let _ = std::fs::write(&path, s);
    path
}

/// Trains on `cfg.train`, selecting the checkpoint with the best total
/// F1@M on (a prefix of) `cfg.valid`.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let raw_train = read_jsonl(&cfg.train)?;
    let mut raw_valid = read_jsonl(&cfg.valid)?;
    if cfg.val_limit > 0 {
        raw_valid.truncate(cfg.val_limit);
    }
    let vocab = Vocabulary::build(&raw_train, cfg.vocab_max)?;
    let samples: Vec<Sample> = raw_train
        .iter()
        .map(|r| partition_keyphrases(r, &vocab))
        .collect::<Result<_, _>>()?;

    let dir = &cfg.ckpt_dir;
    std::fs::create_dir_all(dir)?;
    vocab.save(&dir.join(VOCAB_FILE))?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_kv())?;

    let mut model = UniKeyphrase::init(cfg.model_config(vocab.len()), cfg.seed)?;
    let adam = Adam::default();
    let steps_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let t_total = (steps_per_epoch * cfg.epochs).max(1);
    let schedule = Schedule::new(cfg.w_m, t_total)?;
    let loss_cfg = cfg.loss_config();
    let beam = cfg.beam();
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd5);

    let mut log = Vec::with_capacity(t_total);
    let mut evals = Vec::new();
    let mut best: Option<(usize, f64, UniKeyphrase)> = None;
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut sample_rng(cfg.seed, epoch as u64, "\u{0}shuffle"));
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let inputs = encode_batch(&batch, &vocab, cfg, epoch)?;
            let w_bow = if cfg.bwc { bwc_weight(step + 1, &schedule)? } else { 0.0 };
            let lr = warmup_lr(cfg.lr, step, t_total, cfg.warmup);
            let mut g = Graph::<f32>::new();
            let result = batch_loss(
                &mut g,
                &model.config,
                &model.layout,
                &model.params,
                &inputs,
                &loss_cfg,
                w_bow,
                Some(&mut dropout_rng),
            )
            .and_then(|(loss, vals)| {
                g.backward(loss, &mut model.params)?;
                if !vals.total.is_finite() {
                    return Err(NumericsError::NonFinite { op: "loss" }.into());
                }
                Ok(vals)
            });
            let vals = match result {
                Ok(v) => v,
                Err(e @ (ObjectiveError::Numerics(NumericsError::NonFinite { .. })
                | ObjectiveError::Model(crate::model::ModelError::Numerics(NumericsError::NonFinite { .. })))) => {
                    let ids: Vec<&str> = batch.iter().map(|s| s.id.as_str()).collect();
                    let dump = dump_nonfinite(dir, step + 1, &ids, lr, w_bow, &e);
                    return Err(HarnessError::NonFinite {
                        step: step + 1,
                        dump,
                        detail: e.to_string(),
                    });
                }
                Err(e) => return Err(e.into()),
            };
            adam.step(&mut model.params, lr)?;
            step += 1;
            log.push(LogRow {
                step,
                l_pke: vals.pke,
                l_akg: vals.akg,
                l_bow: vals.bow,
                w_bow,
                total: vals.total,
            });
        }
        model.save(&dir.join(epoch_ckpt(epoch)))?;
        write_lines(&dir.join(TRAIN_LOG), LogRow::HEADER, log.iter().map(LogRow::csv))?;

        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let preds = predict_corpus(&model, &vocab, &raw_valid, &beam, cfg.deterministic)?;
            let report = evaluate(&raw_valid, &preds)?;
            let score = report.total_f1_at_m;
            evals.push(EvalRow { epoch, step, report });
            write_lines(&dir.join(EVAL_LOG), &EvalRow::header(), evals.iter().map(EvalRow::csv))?;
            if best.as_ref().is_none_or(|b| score > b.1) {
                model.save(&dir.join(BEST_CKPT))?;
                best = Some((epoch, score, model.clone()));
            }
        }
    }
    let (best_epoch, best_score, best_model) = best.expect("the last epoch is always evaluated");
    Ok(TrainOutcome {
        best: best_model,
        last: model,
        vocab,
        log,
        evals,
        best_epoch,
        best_score,
        ckpt_dir: dir.clone(),
    })
}

/// Loads a checkpoint file together with the vocabulary and run config
/// stored next to it.
pub fn load_checkpoint(path: &Path) -> Result<(UniKeyphrase, Vocabulary, RunConfig), HarnessError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
    let mut cfg = RunConfig::default();
    for (line, k, v) in super::kv::read_kv(&dir.join(CONFIG_FILE))? {
        cfg.set(&k, &v).map_err(|msg| HarnessError::Config {
            origin: dir.join(CONFIG_FILE).display().to_string(),
            line,
            msg,
        })?;
    }
    let model = UniKeyphrase::load(cfg.model_config(vocab.len()), path)?;
    Ok((model, vocab, cfg))
}

/// Reads a `train_log.csv`.
pub fn read_train_log(path: &Path) -> Result<Vec<LogRow>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .enumerate()
        .map(|(i, l)| {
            LogRow::parse(l).ok_or_else(|| HarnessError::Config {
                origin: path.display().to_string(),
                line: i + 2,
                msg: "malformed log row".into(),
            })
        })
        .collect()
}
