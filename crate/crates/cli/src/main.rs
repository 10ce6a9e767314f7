use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use unikp::datapipe::{read_jsonl, write_jsonl};
use unikp::evaluation::evaluate;
use unikp::harness::{
    ablate, diag, gen_corpus, load_checkpoint, predict_corpus, train, write_corpus, CorpusSpec, Grid, RunConfig,
};
use unikp::inference::PredictionRecord;

#[derive(Parser)]
#[command(name = "unikp", version, about = "Joint present/absent keyphrase prediction")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus (train/valid/test JSONL).
    GenData {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; checkpoints and logs go to the config's ckpt_dir.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Force serial execution for bit-exact logs.
        #[arg(long)]
        deterministic: bool,
    },
    /// Predict keyphrases for every document of a JSONL corpus.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        beam_size: Option<usize>,
        #[arg(long)]
        deterministic: bool,
    },
    /// Score predictions against a gold corpus.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Pretty JSON report; a one-row CSV is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every grid arm for every seed; writes ablation CSVs to --out.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Grid file; omitted means full / no_srl / no_bwc / srl_1 / srl_3.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Seeds for the built-in grid.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Loss curves, bag-of-words error and stream-distance series for plots.
    Diag {
        #[arg(long, num_args = 1.., required = true)]
        ckpt: Vec<PathBuf>,
        /// Documents to probe; defaults to each run's test split.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::GenData { spec, out } => {
            let spec = match spec {
                Some(p) => CorpusSpec::load(&p)?,
                None => CorpusSpec::default(),
            };
            let corpus = gen_corpus(&spec)?;
            write_corpus(&corpus, &spec, &out)?;
            println!(
                "wrote {} train / {} valid / {} test documents to {}",
                corpus.train.len(),
                corpus.valid.len(),
                corpus.test.len(),
                out.display()
            );
        }
        Cmd::Train { config, deterministic } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.deterministic |= deterministic;
            let t0 = Instant::now();
            let out = train(&cfg)?;
            for e in &out.evals {
                println!(
                    "epoch {:>3}  present F1@5 {:.4}  absent F1@M {:.4}  total F1@M {:.4}",
                    e.epoch, e.report.present_f1_at_5, e.report.absent_f1_at_m, e.report.total_f1_at_m
                );
            }
            println!(
                "best epoch {} (validation total F1@M {:.4}); {} steps in {:.1}s; checkpoints in {}",
                out.best_epoch,
                out.best_score,
                out.log.len(),
                t0.elapsed().as_secs_f64(),
                out.ckpt_dir.display()
            );
        }
        Cmd::Predict {
            ckpt,
            input,
            out,
            beam_size,
            deterministic,
        } => {
            let (model, vocab, cfg) = load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let mut beam = cfg.beam();
            if let Some(b) = beam_size {
                beam.beam_size = b;
            }
            let docs = read_jsonl(&input)?;
            let preds = predict_corpus(&model, &vocab, &docs, &beam, deterministic || cfg.deterministic)?;
            write_jsonl(&out, &preds)?;
            println!("wrote {} predictions to {}", preds.len(), out.display());
        }
        Cmd::Eval { gold, pred, out } => {
            let gold = read_jsonl(&gold)?;
            let text = std::fs::read_to_string(&pred)?;
            let preds: Vec<PredictionRecord> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .enumerate()
                .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", pred.display(), i + 1)))
                .collect::<Result<_>>()?;
            if preds.is_empty() {
                bail!("{} holds no predictions", pred.display());
            }
            let report = evaluate(&gold, &preds)?;
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            let csv = out.with_extension("csv");
            std::fs::write(&csv, format!("{}\n{}\n", unikp::evaluation::EvalReport::CSV_HEADER, report.csv_row()))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Ablate {
            config,
            grid,
            seeds,
            out,
        } => {
            let base = RunConfig::load(&config)?;
            let grid = match grid {
                Some(p) => Grid::load(&p)?,
                None => Grid::standard(seeds),
            };
            let report = ablate(&base, &grid, &out, |r| {
                println!(
                    "{:<10} seed {:<4} total F1@M {:.4}  present F1@5 {:.4}  absent F1@M {:.4}  BoW error {:.3}",
                    r.arm,
                    r.seed,
                    r.report.total_f1_at_m,
                    r.report.present_f1_at_5,
                    r.report.absent_f1_at_m,
                    r.report.bow_error
                )
            })?;
            print!("{}", report.summary_csv());
            println!("wrote ablation.csv, ablation_summary.csv, depth_sweep.csv to {}", out.display());
        }
        Cmd::Diag { ckpt, data, out } => {
            let res = diag(&ckpt, data.as_deref(), &out)?;
            for (label, d) in &res.distances {
                println!("{label}: mean stream distance {:.6} over {} pairs", d.mean, d.pairs);
            }
            for f in &res.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}
