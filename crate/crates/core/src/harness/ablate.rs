use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{encode_batch, predict_corpus, train, HarnessError, RunConfig};
use crate::datapipe::{partition_keyphrases, read_jsonl, RawSample, Sample};
use crate::evaluation::{evaluate, srl_distance, EvalReport};

/// One named configuration variant.
#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    pub name: String,
    pub overrides: Vec<(String, String)>,
}

/// Arms crossed with seeds. File format: `seeds = 1, 2, 3` plus one
/// `arm.NAME = key=value key=value` line per arm (empty for the base).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub arms: Vec<Arm>,
    /// Empty means "the base config's seed".
    pub seeds: Vec<u64>,
}

impl Grid {
    /// Full model, no relation layers, no bag-of-words weight, and the
    /// remaining relation depths up to 3.
    pub fn standard(seeds: Vec<u64>) -> Self {
        let arm = |name: &str, o: &[(&str, &str)]| Arm {
            name: name.to_string(),
            overrides: o.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        };
        Self {
            arms: vec![
                arm("full", &[]),
                arm("no_srl", &[("srl_layers", "0")]),
                arm("no_bwc", &[("bwc", "off")]),
                arm("srl_1", &[("srl_layers", "1")]),
                arm("srl_3", &[("srl_layers", "3")]),
            ],
            seeds,
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, HarnessError> {
        let err = |line: usize, msg: String| HarnessError::Config {
            origin: origin.to_string(),
            line,
            msg,
        };
        let mut arms: Vec<Arm> = Vec::new();
        let mut seeds = Vec::new();
        for (line, k, v) in super::kv::parse_kv(text, origin)? {
            if k == "seeds" {
                seeds = v
                    .split(',')
                    .map(|s| s.trim().parse::<u64>().map_err(|_| err(line, format!("bad seed `{s}`"))))
                    .collect::<Result<_, _>>()?;
            } else if let Some(name) = k.strip_prefix("arm.") {
                if name.is_empty() || arms.iter().any(|a| a.name == name) {
                    return Err(err(line, format!("missing or duplicate arm name `{name}`")));
                }
                let mut overrides = Vec::new();
                for pair in v.split_whitespace() {
                    let (ok, ov) = pair
                        .split_once('=')
                        .ok_or_else(|| err(line, format!("expected key=value, got `{pair}`")))?;
                    overrides.push((ok.to_string(), ov.to_string()));
                }
                // reject bad overrides now rather than halfway through the sweep
                let mut probe = RunConfig::default();
                for (ok, ov) in &overrides {
                    probe.set(ok, ov).map_err(|m| err(line, m))?;
                }
                arms.push(Arm {
                    name: name.to_string(),
                    overrides,
                });
            } else {
                return Err(err(line, format!("unknown key `{k}`")));
            }
        }
        if arms.is_empty() {
            return Err(err(0, "grid defines no arms".into()));
        }
        Ok(Self { arms, seeds })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    /// Base config with one arm's overrides and a seed applied.
    pub fn config_for(&self, base: &RunConfig, arm: &Arm, seed: u64, out_dir: &Path) -> Result<RunConfig, HarnessError> {
        let mut cfg = base.clone();
        for (k, v) in &arm.overrides {
            cfg.set(k, v).map_err(|msg| HarnessError::Config {
                origin: format!("arm {}", arm.name),
                line: 0,
                msg,
            })?;
        }
        cfg.seed = seed;
        cfg.ckpt_dir = out_dir.join(&arm.name).join(format!("seed{seed}"));
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Test-split results of one (arm, seed) run.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub arm: String,
    pub seed: u64,
    pub srl_layers: usize,
    pub bwc: bool,
    pub best_epoch: usize,
    pub report: EvalReport,
    pub final_pke: f64,
    pub final_akg: f64,
    pub final_bow: f64,
    pub srl_distance_mean: f64,
    /// Validation bag-of-words error at the last training step.
    pub final_bow_error: f64,
    pub ckpt_dir: PathBuf,
}

const ROW_HEADER: &str = "arm,seed,srl_layers,bwc,best_epoch,present_f1_at_5,present_f1_at_m,absent_f1_at_5,absent_f1_at_m,total_f1_at_m,avg_present,avg_absent,bow_error,final_L_PKE,final_L_AKG,final_L_BoW,srl_distance_mean,final_bow_error";

impl AblationRow {
    fn csv(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{},{},{},{:.6},{:.4}",
            self.arm,
            self.seed,
            self.srl_layers,
            self.bwc,
            self.best_epoch,
            r.present_f1_at_5,
            r.present_f1_at_m,
            r.absent_f1_at_5,
            r.absent_f1_at_m,
            r.total_f1_at_m,
            r.avg_present,
            r.avg_absent,
            r.bow_error,
            self.final_pke,
            self.final_akg,
            self.final_bow,
            self.srl_distance_mean,
            self.final_bow_error
        )
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn arms(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.arm.as_str()) {
                names.push(&r.arm);
            }
        }
        names
    }

    /// Median over seeds of `f` for one arm.
    pub fn median_of(&self, arm: &str, f: impl Fn(&AblationRow) -> f64) -> f64 {
        let mut v: Vec<f64> = self.rows.iter().filter(|r| r.arm == arm).map(f).collect();
        median(&mut v)
    }

    pub fn rows_csv(&self) -> String {
        let mut s = format!("{ROW_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.csv());
        }
        s
    }

    /// One line per arm with seed medians.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "arm,seeds,present_f1_at_5,present_f1_at_m,absent_f1_at_5,absent_f1_at_m,total_f1_at_m,bow_error,srl_distance_mean,final_bow_error\n",
        );
        for arm in self.arms() {
            let n = self.rows.iter().filter(|r| r.arm == arm).count();
            let _ = writeln!(
                s,
                "{arm},{n},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.6},{:.4}",
                self.median_of(arm, |r| r.report.present_f1_at_5),
                self.median_of(arm, |r| r.report.present_f1_at_m),
                self.median_of(arm, |r| r.report.absent_f1_at_5),
                self.median_of(arm, |r| r.report.absent_f1_at_m),
                self.median_of(arm, |r| r.report.total_f1_at_m),
                self.median_of(arm, |r| r.report.bow_error),
                self.median_of(arm, |r| r.srl_distance_mean),
                self.median_of(arm, |r| r.final_bow_error),
            );
        }
        s
    }

    /// One line per relation depth, over arms that keep the bag-of-words
    /// term on, with seed medians.
    pub fn depth_csv(&self) -> String {
        let mut depths: Vec<usize> = self.rows.iter().filter(|r| r.bwc).map(|r| r.srl_layers).collect();
        depths.sort_unstable();
        depths.dedup();
        let mut s = String::from("srl_layers,runs,present_f1_at_5,present_f1_at_m,absent_f1_at_5,absent_f1_at_m,total_f1_at_m\n");
        for d in depths {
            let pick = |f: &dyn Fn(&AblationRow) -> f64| {
                let mut v: Vec<f64> = self.rows.iter().filter(|r| r.bwc && r.srl_layers == d).map(f).collect();
                median(&mut v)
            };
            let runs = self.rows.iter().filter(|r| r.bwc && r.srl_layers == d).count();
            let _ = writeln!(
                s,
                "{d},{runs},{:.6},{:.6},{:.6},{:.6},{:.6}",
                pick(&|r| r.report.present_f1_at_5),
                pick(&|r| r.report.present_f1_at_m),
                pick(&|r| r.report.absent_f1_at_5),
                pick(&|r| r.report.absent_f1_at_m),
                pick(&|r| r.report.total_f1_at_m),
            );
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("ablation.csv"), self.rows_csv())?;
        std::fs::write(dir.join("ablation_summary.csv"), self.summary_csv())?;
        std::fs::write(dir.join("depth_sweep.csv"), self.depth_csv())?;
        Ok(())
    }
}

/// Encoded samples (with the run's own masking draw) for distance probes.
pub fn probe_inputs(cfg: &RunConfig, vocab: &crate::datapipe::Vocabulary, docs: &[RawSample]) -> Result<Vec<crate::datapipe::EncodedInput>, HarnessError> {
    let samples: Vec<Sample> = docs
        .iter()
        .map(|r| partition_keyphrases(r, vocab))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&Sample> = samples.iter().collect();
    encode_batch(&refs, vocab, cfg, 0)
}

/// Number of random (sample, position) pairs for stream distances.
pub const DISTANCE_PAIRS: usize = 2000;

/// Trains every arm for every seed on identical data, scoring the selected
/// checkpoint on the test split. `progress` is called after each run.
pub fn ablate(
    base: &RunConfig,
    grid: &Grid,
    out_dir: &Path,
    mut progress: impl FnMut(&AblationRow),
) -> Result<AblationReport, HarnessError> {
    let test = read_jsonl(&base.test)?;
    let seeds = if grid.seeds.is_empty() { vec![base.seed] } else { grid.seeds.clone() };
    let mut rows = Vec::new();
    for arm in &grid.arms {
        for &seed in &seeds {
            let cfg = grid.config_for(base, arm, seed, out_dir)?;
            let out = train(&cfg)?;
            let preds = predict_corpus(&out.best, &out.vocab, &test, &cfg.beam(), cfg.deterministic)?;
            let report = evaluate(&test, &preds)?;
            let probes = probe_inputs(&cfg, &out.vocab, &test)?;
            let dist = srl_distance(&out.best, &probes, DISTANCE_PAIRS, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let last = out.log.last().copied().unwrap_or(super::LogRow {
                step: 0,
                l_pke: f64::NAN,
                l_akg: f64::NAN,
                l_bow: f64::NAN,
                w_bow: 0.0,
                total: f64::NAN,
            });
            let row = AblationRow {
                arm: arm.name.clone(),
                seed,
                srl_layers: cfg.srl_layers,
                bwc: cfg.bwc,
                best_epoch: out.best_epoch,
                report,
                final_pke: last.l_pke,
                final_akg: last.l_akg,
                final_bow: last.l_bow,
                srl_distance_mean: dist.mean,
                final_bow_error: out.evals.last().map_or(f64::NAN, |e| e.report.bow_error),
                ckpt_dir: cfg.ckpt_dir.clone(),
            };
            progress(&row);
            rows.push(row);
        }
    }
    let report = AblationReport { rows };
    report.write(out_dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = Grid::parse("seeds = 1, 2,3\narm.full =\narm.no_srl = srl_layers=0 dropout=0.1\n", "g").unwrap();
        assert_eq!(g.seeds, vec![1, 2, 3]);
        assert_eq!(g.arms.len(), 2);
        assert_eq!(g.arms[1].overrides.len(), 2);
        assert!(Grid::parse("arm.x = nope=1\n", "g").is_err());
        assert!(Grid::parse("arm.x =\narm.x =\n", "g").is_err());
        assert!(Grid::parse("seeds = 1\n", "g").is_err());
        assert!(Grid::parse("colour = red\n", "g").is_err());
    }

    #[test]
    fn arm_config_applies_overrides() {
        let g = Grid::standard(vec![5]);
        let base = RunConfig::default();
        let out = Path::new("/tmp/abl");
        let c = g.config_for(&base, &g.arms[1], 5, out).unwrap();
        assert_eq!((c.srl_layers, c.seed), (0, 5));
        assert_eq!(c.ckpt_dir, out.join("no_srl").join("seed5"));
        let c = g.config_for(&base, &g.arms[2], 5, out).unwrap();
        assert!(!c.bwc);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
