use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ablate::{probe_inputs, DISTANCE_PAIRS};
use super::{load_checkpoint, predict_corpus, read_train_log, HarnessError, EVAL_LOG, TRAIN_LOG};
use crate::datapipe::read_jsonl;
use crate::evaluation::{evaluate, srl_distance, DistanceSummary};

/// Label for a checkpoint: `<run dir>/<file stem>`.
pub fn run_label(ckpt: &Path) -> String {
    let stem = ckpt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = ckpt
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{dir}/{stem}")
}

pub struct DiagOutput {
    pub distances: Vec<(String, DistanceSummary)>,
    pub files: Vec<PathBuf>,
}

/// Writes plotting series for each checkpoint: training loss curves,
/// validation bag-of-words error over time, final bag-of-words error on
/// `data`, and stream distances. `data` defaults to each run's test split.
pub fn diag(ckpts: &[PathBuf], data: Option<&Path>, out_dir: &Path) -> Result<DiagOutput, HarnessError> {
    if ckpts.is_empty() {
        return Err(HarnessError::Config {
            origin: "diag".into(),
            line: 0,
            msg: "need at least one checkpoint".into(),
        });
    }
    std::fs::create_dir_all(out_dir)?;
    let mut losses = String::from("run,step,L_PKE,L_AKG,L_BoW,w_BoW,total\n");
    let mut bow_series = String::from("run,epoch,step,bow_error\n");
    let mut bow_final = String::from("run,documents,bow_error,total_f1_at_m\n");
    let mut dist_rows = String::from("run,pair,distance\n");
    let mut dist_summary = String::from("run,pairs,mean,min,max\n");
    let mut distances = Vec::new();

    for ckpt in ckpts {
        let label = run_label(ckpt);
        let dir = ckpt.parent().unwrap_or(Path::new("."));
        let (model, vocab, cfg) = load_checkpoint(ckpt)?;

        let log_path = dir.join(TRAIN_LOG);
        if log_path.exists() {
            for r in read_train_log(&log_path)? {
                let _ = writeln!(losses, "{label},{}", r.csv());
            }
        }
        let eval_path = dir.join(EVAL_LOG);
        if eval_path.exists() {
            let text = std::fs::read_to_string(&eval_path)?;
            let mut lines = text.lines();
            let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
            let col = header.iter().position(|h| *h == "bow_error");
            for l in lines {
                let f: Vec<&str> = l.split(',').collect();
                if let (Some(c), true) = (col, f.len() == header.len()) {
                    let _ = writeln!(bow_series, "{label},{},{},{}", f[0], f[1], f[c]);
                }
            }
        }

        let docs = read_jsonl(data.unwrap_or(&cfg.test))?;
        let preds = predict_corpus(&model, &vocab, &docs, &cfg.beam(), cfg.deterministic)?;
        let report = evaluate(&docs, &preds)?;
        let _ = writeln!(bow_final, "{label},{},{:.6},{:.6}", report.documents, report.bow_error, report.total_f1_at_m);

        let probes = probe_inputs(&cfg, &vocab, &docs)?;
        let summary = srl_distance(&model, &probes, DISTANCE_PAIRS, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
        for (i, d) in summary.distances.iter().enumerate() {
            let _ = writeln!(dist_rows, "{label},{i},{d}");
        }
        let _ = writeln!(
            dist_summary,
            "{label},{},{},{},{}",
            summary.pairs, summary.mean, summary.min, summary.max
        );
        distances.push((label, summary));
    }

    let mut files = Vec::new();
    for (name, body) in [
        ("loss_curves.csv", losses),
        ("bow_error_series.csv", bow_series),
        ("bow_error_final.csv", bow_final),
        ("srl_distance.csv", dist_rows),
        ("srl_distance_summary.csv", dist_summary),
    ] {
        let p = out_dir.join(name);
        std::fs::write(&p, body)?;
        files.push(p);
    }
    Ok(DiagOutput { distances, files })
}
