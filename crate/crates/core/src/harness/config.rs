use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::kv::{parse_bool, parse_value, read_kv};
use super::HarnessError;
use crate::inference::BeamConfig;
use crate::model::ModelConfig;
use crate::objective::LossConfig;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "UKP_SEED";

/// Everything a training run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ff_width: usize,
    pub srl_layers: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub mask_prob: f64,
    pub w_c: f64,
    pub w_m: f64,
    /// Off gives the vanilla objective (zero bag-of-words weight).
    pub bwc: bool,
    pub bow_dynamic_vocab: bool,
    pub beam_size: usize,
    pub max_target_len: usize,
    pub lr: f64,
    pub warmup: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub vocab_max: usize,
    /// Evaluate on the validation split every this many epochs (and after
    /// the last one).
    pub eval_every: usize,
    /// Validation documents used for model selection; 0 means all.
    pub val_limit: usize,
    pub deterministic: bool,
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub ckpt_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            ff_width: 128,
            srl_layers: 2,
            dropout: 0.5,
            max_len: 96,
            mask_prob: 0.7,
            w_c: 5.0,
            w_m: 1.0,
            bwc: true,
            bow_dynamic_vocab: true,
            beam_size: 5,
            max_target_len: 12,
            lr: 1e-3,
            warmup: 0.1,
            epochs: 30,
            batch_size: 16,
            seed: 42,
            vocab_max: 4000,
            eval_every: 1,
            val_limit: 100,
            deterministic: false,
            train: PathBuf::from("data/train.jsonl"),
            valid: PathBuf::from("data/valid.jsonl"),
            test: PathBuf::from("data/test.jsonl"),
            ckpt_dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "d_model" => self.d_model = parse_value(key, value)?,
            "n_heads" => self.n_heads = parse_value(key, value)?,
            "n_layers" => self.n_layers = parse_value(key, value)?,
            "ff_width" => self.ff_width = parse_value(key, value)?,
            "srl_layers" => self.srl_layers = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "max_len" => self.max_len = parse_value(key, value)?,
            "mask_prob" => self.mask_prob = parse_value(key, value)?,
            "w_c" => self.w_c = parse_value(key, value)?,
            "w_m" => self.w_m = parse_value(key, value)?,
            "bwc" => self.bwc = parse_bool(key, value)?,
            "bow_dynamic_vocab" => self.bow_dynamic_vocab = parse_bool(key, value)?,
            "beam_size" => self.beam_size = parse_value(key, value)?,
            "max_target_len" => self.max_target_len = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "warmup" => self.warmup = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "vocab_max" => self.vocab_max = parse_value(key, value)?,
            "eval_every" => self.eval_every = parse_value(key, value)?,
            "val_limit" => self.val_limit = parse_value(key, value)?,
            "deterministic" => self.deterministic = parse_bool(key, value)?,
            "train" => self.train = PathBuf::from(value),
            "valid" => self.valid = PathBuf::from(value),
            "test" => self.test = PathBuf::from(value),
            "ckpt_dir" => self.ckpt_dir = PathBuf::from(value),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory; `UKP_SEED` overrides `seed`.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        for (line, k, v) in read_kv(path)? {
            cfg.set(&k, &v).map_err(|msg| HarnessError::Config {
                origin: path.display().to_string(),
                line,
                msg,
            })?;
        }
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.train, &mut cfg.valid, &mut cfg.test, &mut cfg.ckpt_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<(), HarnessError> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.seed = s.trim().parse().map_err(|_| HarnessError::Config {
                origin: SEED_ENV.to_string(),
                line: 0,
                msg: format!("bad seed `{s}`"),
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| {
            Err(HarnessError::Config {
                origin: "config".into(),
                line: 0,
                msg: msg.to_string(),
            })
        };
        if [self.epochs, self.batch_size, self.beam_size, self.max_target_len, self.eval_every, self.vocab_max]
            .contains(&0)
        {
            return bad("epochs, batch_size, beam_size, max_target_len, eval_every and vocab_max must be positive");
        }
        if !(self.mask_prob > 0.0 && self.mask_prob <= 1.0) {
            return bad("mask_prob must be in (0, 1]");
        }
        if !(self.w_c > 0.0 && self.w_m > 0.0 && self.lr > 0.0) {
            return bad("w_c, w_m and lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.warmup) {
            return bad("warmup must be a proportion in [0, 1]");
        }
        if self.srl_layers > 4 {
            return bad("srl_layers must be in 0..=4");
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            ff_width: self.ff_width,
            dropout: self.dropout,
            max_len: self.max_len,
            srl_layers: self.srl_layers,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            w_c: self.w_c,
            dynamic_vocab: self.bow_dynamic_vocab,
        }
    }

    pub fn beam(&self) -> BeamConfig {
        BeamConfig {
            beam_size: self.beam_size,
            max_target_len: self.max_target_len,
        }
    }

    /// Serializes every key, so the file round-trips through [`Self::set`].
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("d_model", self.d_model.to_string());
        put("n_heads", self.n_heads.to_string());
        put("n_layers", self.n_layers.to_string());
        put("ff_width", self.ff_width.to_string());
        put("srl_layers", self.srl_layers.to_string());
        put("dropout", self.dropout.to_string());
        put("max_len", self.max_len.to_string());
        put("mask_prob", self.mask_prob.to_string());
        put("w_c", self.w_c.to_string());
        put("w_m", self.w_m.to_string());
        put("bwc", self.bwc.to_string());
        put("bow_dynamic_vocab", self.bow_dynamic_vocab.to_string());
        put("beam_size", self.beam_size.to_string());
        put("max_target_len", self.max_target_len.to_string());
        put("lr", self.lr.to_string());
        put("warmup", self.warmup.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("seed", self.seed.to_string());
        put("vocab_max", self.vocab_max.to_string());
        put("eval_every", self.eval_every.to_string());
        put("val_limit", self.val_limit.to_string());
        put("deterministic", self.deterministic.to_string());
        put("train", self.train.display().to_string());
        put("valid", self.valid.display().to_string());
        put("test", self.test.display().to_string());
        put("ckpt_dir", self.ckpt_dir.display().to_string());
        s
    }
}
