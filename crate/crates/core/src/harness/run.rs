use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{ExtendedExample, Vocabulary};
use crate::decoding::DecodeConfig;
use crate::error::{Error, Result};
use crate::harness::config::TrainConfig;
use crate::harness::dataset::{corpus_vocab, default_decode_len, load_split, to_examples};
use crate::harness::evaluate::{
    check_vocab, evaluate_examples, metrics_csv, write_attention_dumps, Evaluation, MetricsRow,
};
use crate::harness::train::{train, TrainOutcome};
use crate::model::{load_checkpoint, save_checkpoint, Checkpoint};

pub const PRETRAIN_CHECKPOINT: &str = "pretrain.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// A corpus directory loaded against its train-split vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub train: Vec<ExtendedExample>,
    pub valid: Vec<ExtendedExample>,
    pub test: Vec<ExtendedExample>,
}

impl Corpus {
    pub fn load(dir: &Path, vocab_size: usize) -> Result<Self> {
        let vocab = corpus_vocab(dir, vocab_size)?;
        let split = |name: &str| -> Result<Vec<ExtendedExample>> {
            let pairs = match load_split(dir, name) {
                Ok(p) => p,
                Err(_) if name == "valid" => Vec::new(),
                Err(e) => return Err(e),
            };
            Ok(to_examples(&pairs, &vocab))
        };
        Ok(Self {
            train: split("train")?,
            valid: split("valid")?,
            test: split("test")?,
            vocab,
        })
    }

    pub fn split(&self, name: &str) -> Result<&[ExtendedExample]> {
        match name {
            "train" => Ok(&self.train),
            "valid" => Ok(&self.valid),
            "test" => Ok(&self.test),
            _ => Err(Error::Config(format!("unknown split {name:?}"))),
        }
    }

    pub fn decode_len(&self, configured: usize) -> usize {
        if configured > 0 {
            configured
        } else {
            default_decode_len(&self.train)
        }
    }
}

pub fn decode_config(cfg: &TrainConfig, corpus: &Corpus) -> DecodeConfig {
    DecodeConfig::new(cfg.beam_size, corpus.decode_len(cfg.max_decode_len), cfg.block_trigrams)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub outcome: TrainOutcome,
    pub evaluation: Evaluation,
}

impl RunSummary {
    pub fn metrics(&self) -> &MetricsRow {
        &self.evaluation.row
    }
}

/// Trains one seed and writes `config.echo`, `run.log`, both checkpoints,
/// test-split `metrics.csv` and `decoded.txt`, attention dumps for the
/// first `dump_examples` test examples, and `timing.txt`.
pub fn train_run(cfg: &TrainConfig, seed: u64, corpus: &Corpus, out: &Path, model: &str) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let started = Instant::now();
    let dcfg = decode_config(cfg, corpus);
    let echo = format!(
        "{}seed={seed}\nmodel={model}\nresolved_max_decode_len={}\n",
        cfg.echo(),
        dcfg.max_len
    );
    fs::write(out.join("config.echo"), echo)?;

    let outcome = train(cfg, seed, &corpus.vocab, &corpus.train, &corpus.valid, dcfg.max_len)?;
    save_checkpoint(
        &out.join(PRETRAIN_CHECKPOINT),
        &Checkpoint {
            params: outcome.pretrained.clone(),
            vocab: corpus.vocab.clone(),
        },
    )?;
    save_checkpoint(
        &out.join(FINAL_CHECKPOINT),
        &Checkpoint {
            params: outcome.params.clone(),
            vocab: corpus.vocab.clone(),
        },
    )?;
    fs::write(out.join("run.log"), outcome.log.to_csv())?;
    let trained = started.elapsed().as_secs_f64();

    let evaluation = evaluate_examples(&outcome.params, &corpus.vocab, &corpus.test, &dcfg, model, "test")?;
    fs::write(out.join("metrics.csv"), metrics_csv(std::slice::from_ref(&evaluation.row)))?;
    fs::write(out.join("decoded.txt"), evaluation.decoded_text())?;
    let n = cfg.dump_examples.min(evaluation.decoded.len());
    write_attention_dumps(out, &evaluation.decoded[..n])?;
    fs::write(
        out.join("timing.txt"),
        format!(
            "train_seconds={trained:.3}\ntotal_seconds={:.3}\nfallback_steps={}\n",
            started.elapsed().as_secs_f64(),
            evaluation.fallback_steps()
        ),
    )?;
    Ok(RunSummary {
        dir: out.to_path_buf(),
        outcome,
        evaluation,
    })
}

/// Loads a checkpoint and the corpus, failing when the checkpoint's
/// vocabulary is not the one the corpus produces.
pub fn load_for_eval(checkpoint: &Path, corpus_dir: &Path) -> Result<(Checkpoint, Corpus)> {
    let ck = load_checkpoint(checkpoint)?;
    let corpus = Corpus::load(corpus_dir, ck.params.config.vocab_size)?;
    check_vocab(&ck.vocab, &corpus.vocab)?;
    Ok((ck, corpus))
}

/// Evaluates a checkpoint on a split, writing `metrics.csv` and
/// `decoded.txt` into `out`.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    corpus_dir: &Path,
    split: &str,
    cfg: &TrainConfig,
    model: &str,
    out: &Path,
) -> Result<Evaluation> {
    let (ck, corpus) = load_for_eval(checkpoint, corpus_dir)?;
    let dcfg = decode_config(cfg, &corpus);
    let eval = evaluate_examples(&ck.params, &ck.vocab, corpus.split(split)?, &dcfg, model, split)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("metrics.csv"), metrics_csv(std::slice::from_ref(&eval.row)))?;
    fs::write(out.join("decoded.txt"), eval.decoded_text())?;
    Ok(eval)
}

/// Decodes a split and writes attention dumps for its first `limit`
/// examples (all when `None`) into `out`.
pub fn analyze_checkpoint(
    checkpoint: &Path,
    corpus_dir: &Path,
    split: &str,
    cfg: &TrainConfig,
    limit: Option<usize>,
    out: &Path,
) -> Result<Evaluation> {
    let (ck, corpus) = load_for_eval(checkpoint, corpus_dir)?;
    let dcfg = decode_config(cfg, &corpus);
    let examples = corpus.split(split)?;
    let examples = &examples[..limit.unwrap_or(examples.len()).min(examples.len())];
    let eval = evaluate_examples(&ck.params, &ck.vocab, examples, &dcfg, "analysis", split)?;
    write_attention_dumps(out, &eval.decoded)?;
    Ok(eval)
}
