use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::autodiff::Graph;
use crate::data::{render, ExtendedExample, Vocabulary};
use crate::decoding::{beam_search, DecodeConfig, ModelStepper};
use crate::error::{Error, Result};
use crate::losses::DecodeTrace;
use crate::metrics::{attention_stats, duplication_rate, mean, rouge_l, rouge_n, AttentionStats};
use crate::model::{force_decode, AttentionRecord, ModelParams};

pub const METRICS_HEADER: &str =
    "model,split,rouge1,rouge2,rougeL,dup1,dup2,dup3,dup4,mean_local_variance,mean_global_g";

/// One line of a metrics report. Every value is a mean over examples.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub model: String,
    pub split: String,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub dup: [f64; 4],
    pub mean_local_variance: f64,
    pub mean_global_g: f64,
}

impl MetricsRow {
    fn values(&self) -> [f64; 9] {
        let d = self.dup;
        [
            self.rouge1,
            self.rouge2,
            self.rouge_l,
            d[0],
            d[1],
            d[2],
            d[3],
            self.mean_local_variance,
            self.mean_global_g,
        ]
    }

    pub fn csv_fields(&self) -> String {
        self.values()
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn csv_line(&self) -> String {
        format!("{},{},{}", self.model, self.split, self.csv_fields())
    }

    /// Field-wise mean of `rows`.
    pub fn average(rows: &[&MetricsRow], model: &str, split: &str) -> Self {
        let col = |f: &dyn Fn(&MetricsRow) -> f64| mean(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
        Self {
            model: model.to_string(),
            split: split.to_string(),
            rouge1: col(&|r| r.rouge1),
            rouge2: col(&|r| r.rouge2),
            rouge_l: col(&|r| r.rouge_l),
            dup: [0, 1, 2, 3].map(|i| col(&|r| r.dup[i])),
            mean_local_variance: col(&|r| r.mean_local_variance),
            mean_global_g: col(&|r| r.mean_global_g),
        }
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

/// Decoding result for one example.
#[derive(Debug, Clone)]
pub struct DecodedExample {
    /// extended ids without EOS
    pub ids: Vec<usize>,
    pub words: Vec<String>,
    /// attention of the model re-run over the decoded sequence (EOS
    /// included when it was emitted)
    pub records: Vec<AttentionRecord>,
    pub fallbacks: usize,
}

impl DecodedExample {
    pub fn stats(&self) -> Result<AttentionStats> {
        let trace = DecodeTrace::from_attention(self.records.iter().map(|r| r.refined.clone()).collect())?;
        let gates: Vec<Vec<f64>> = self.records.iter().map(|r| r.gate.clone()).collect();
        attention_stats(&trace, &gates)
    }
}

pub fn decode_one(params: &ModelParams, vocab: &Vocabulary, example: &ExtendedExample, cfg: &DecodeConfig) -> Result<DecodedExample> {
    let mut stepper = ModelStepper::new(params, example)?;
    let outcome = beam_search(&mut stepper, cfg)?;
    let full = outcome.best.tokens.clone();
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let pass = force_decode(&mut g, &bound, &params.config, example, &full)?;
    let ids = outcome.best.output(cfg.eos).to_vec();
    Ok(DecodedExample {
        words: render(&ids, vocab, &example.source.oovs),
        ids,
        records: pass.records(&g),
        fallbacks: outcome.fallback_steps.len(),
    })
}

pub fn decode_all(
    params: &ModelParams,
    vocab: &Vocabulary,
    examples: &[ExtendedExample],
    cfg: &DecodeConfig,
) -> Result<Vec<DecodedExample>> {
    examples
        .par_iter()
        .map(|e| decode_one(params, vocab, e, cfg))
        .collect()
}

/// Scores candidate token sequences against references. Attention
/// summaries are taken from `stats` when given, and are zero otherwise.
pub fn score(
    model: &str,
    split: &str,
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    stats: Option<&[AttentionStats]>,
) -> MetricsRow {
    assert_eq!(candidates.len(), references.len(), "one candidate per reference");
    let per = |f: &dyn Fn(&[String], &[String]) -> f64| {
        mean(
            &candidates
                .iter()
                .zip(references)
                .map(|(c, r)| f(c, r))
                .collect::<Vec<_>>(),
        )
    };
    let (lv, gg) = match stats {
        Some(s) => (
            mean(&s.iter().map(AttentionStats::mean_step_variance).collect::<Vec<_>>()),
            mean(&s.iter().map(AttentionStats::mean_gap).collect::<Vec<_>>()),
        ),
        None => (0.0, 0.0),
    };
    MetricsRow {
        model: model.to_string(),
        split: split.to_string(),
        rouge1: per(&|c, r| rouge_n(c, r, 1).f1),
        rouge2: per(&|c, r| rouge_n(c, r, 2).f1),
        rouge_l: per(&|c, r| rouge_l(c, r).f1),
        dup: [1, 2, 3, 4].map(|n| per(&|c, _| duplication_rate(c, n))),
        mean_local_variance: lv,
        mean_global_g: gg,
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub row: MetricsRow,
    pub decoded: Vec<DecodedExample>,
}

impl Evaluation {
    pub fn decoded_text(&self) -> String {
        let mut s = String::new();
        for d in &self.decoded {
            s.push_str(&d.words.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn fallback_steps(&self) -> usize {
        self.decoded.iter().map(|d| d.fallbacks).sum()
    }
}

pub fn evaluate_examples(
    params: &ModelParams,
    vocab: &Vocabulary,
    examples: &[ExtendedExample],
    cfg: &DecodeConfig,
    model: &str,
    split: &str,
) -> Result<Evaluation> {
    let decoded = decode_all(params, vocab, examples, cfg)?;
    let stats: Vec<AttentionStats> = decoded.iter().map(DecodedExample::stats).collect::<Result<_>>()?;
    let cands: Vec<Vec<String>> = decoded.iter().map(|d| d.words.clone()).collect();
    let refs: Vec<Vec<String>> = examples.iter().map(|e| e.target_tokens.clone()).collect();
    Ok(Evaluation {
        row: score(model, split, &cands, &refs, Some(&stats)),
        decoded,
    })
}

pub fn check_vocab(checkpoint: &Vocabulary, corpus: &Vocabulary) -> Result<()> {
    if checkpoint != corpus {
        let first = checkpoint
            .tokens()
            .iter()
            .zip(corpus.tokens())
            .position(|(a, b)| a != b);
        let detail = match first {
            Some(i) => format!("first difference at id {i}"),
            None => format!("sizes {} vs {}", checkpoint.len(), corpus.len()),
        };
        return Err(Error::VocabMismatch(format!(
            "checkpoint vocabulary differs from the corpus vocabulary ({detail})"
        )));
    }
    Ok(())
}

const DUMP_BLOCKS: [&str; 4] = ["attention", "gate", "refined", "normalized"];

/// Text dump of one example's attention: a `steps source_len` header, then
/// for each of attention, gate, refined, normalized a name line followed by
/// one row of values per decoder step.
pub fn attention_dump(records: &[AttentionRecord]) -> String {
    let width = records.first().map_or(0, |r| r.attention.len());
    let mut s = format!("{} {}\n", records.len(), width);
    for name in DUMP_BLOCKS {
        s.push_str(name);
        s.push('\n');
        for r in records {
            let row = match name {
                "attention" => &r.attention,
                "gate" => &r.gate,
                "refined" => &r.refined,
                _ => &r.normalized,
            };
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
    }
    s
}

pub fn parse_attention_dump(text: &str) -> Result<Vec<AttentionRecord>> {
    let bad = |m: &str| Error::Parse(format!("attention dump: {m}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad header")))
        .collect::<Result<_>>()?;
    let [steps, width] = dims[..] else {
        return Err(bad("header needs two numbers"));
    };
    let mut blocks: Vec<Vec<Vec<f64>>> = Vec::new();
    for name in DUMP_BLOCKS {
        if lines.next() != Some(name) {
            return Err(bad(&format!("expected block {name}")));
        }
        let mut rows = Vec::with_capacity(steps);
        for _ in 0..steps {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad value")))
                .collect::<Result<_>>()?;
            if row.len() != width {
                return Err(bad("row width differs from header"));
            }
            rows.push(row);
        }
        blocks.push(rows);
    }
    let [a, r, ar, n]: [Vec<Vec<f64>>; 4] = blocks.try_into().expect("four blocks");
    Ok((0..steps)
        .map(|t| AttentionRecord {
            attention: a[t].clone(),
            gate: r[t].clone(),
            refined: ar[t].clone(),
            normalized: n[t].clone(),
        })
        .collect())
}

pub const ATTENTION_STATS_HEADER: &str = "example,steps,source_len,mean_step_variance,mean_gate,mean_gap,max_accumulated";

pub fn attention_stats_line(index: usize, s: &AttentionStats) -> String {
    let max_acc = s.accumulated.iter().copied().fold(0.0, f64::max);
    format!(
        "{index},{},{},{:e},{:e},{:e},{:e}",
        s.step_variance.len(),
        s.accumulated.len(),
        s.mean_step_variance(),
        mean(&s.gate_mean),
        s.mean_gap(),
        max_acc
    )
}

/// Writes `attention/NNNNN.txt` per example plus `attention_stats.csv`.
pub fn write_attention_dumps(dir: &Path, decoded: &[DecodedExample]) -> Result<()> {
    let adir = dir.join("attention");
    fs::create_dir_all(&adir)?;
    let mut report = format!("{ATTENTION_STATS_HEADER}\n");
    for (i, d) in decoded.iter().enumerate() {
        fs::write(adir.join(format!("{i:05}.txt")), attention_dump(&d.records))?;
        let _ = writeln!(report, "{}", attention_stats_line(i, &d.stats()?));
    }
    fs::write(dir.join("attention_stats.csv"), report)?;
    Ok(())
}
