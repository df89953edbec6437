use rayon::prelude::*;

use crate::autodiff::Graph;
use crate::data::{make_batches, render, ExtendedExample, Vocabulary, BOS, EOS};
use crate::decoding::{greedy_decode, ModelStepper};
use crate::error::{Error, Result};
use crate::harness::config::TrainConfig;
use crate::losses::{mixed_node, LossBreakdown};
use crate::metrics::{mean, rouge_n};
use crate::model::{teacher_force, ModelParams, ParamGrads};

/// Adagrad with a per-value accumulator.
#[derive(Debug, Clone)]
pub struct Adagrad {
    pub learning_rate: f64,
    accum: Vec<Vec<f64>>,
}

impl Adagrad {
    pub fn new(params: &ModelParams, learning_rate: f64, init: f64) -> Self {
        Self {
            learning_rate,
            accum: params.tensors().iter().map(|t| vec![init; t.len()]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ParamGrads) {
        for ((t, acc), g) in params.tensors_mut().iter_mut().zip(&mut self.accum).zip(&grads.grads) {
            for ((w, a), &d) in t.data_mut().iter_mut().zip(acc.iter_mut()).zip(g) {
                *a += d * d;
                *w -= self.learning_rate * d / a.sqrt();
            }
        }
    }
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut ParamGrads, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub phase: Phase,
    pub iteration: usize,
    pub loss: LossBreakdown,
    pub grad_norm: f64,
    pub val_mle: Option<f64>,
    pub val_rouge1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub seed: u64,
    pub rows: Vec<LogRow>,
}

pub const RUN_LOG_HEADER: &str =
    "phase,iteration,mle,local,global,total,lambda_local,lambda_global,grad_norm,val_mle,val_rouge1";

impl RunLog {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.8}")).unwrap_or_default();
        let mut s = format!("{RUN_LOG_HEADER}\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.8},{:.8},{:.8},{:.8},{},{},{:.8},{},{}\n",
                r.phase.as_str(),
                r.iteration,
                r.loss.mle,
                r.loss.local,
                r.loss.global,
                r.loss.total,
                r.loss.lambda_local,
                r.loss.lambda_global,
                r.grad_norm,
                opt(r.val_mle),
                opt(r.val_rouge1),
            ));
        }
        s
    }

    fn phase_rows(&self, phase: Phase) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(move |r| r.phase == phase)
    }

    /// Mean training loss over the first and last `k` rows of the run.
    pub fn loss_trend(&self, k: usize) -> (f64, f64) {
        let totals: Vec<f64> = self.rows.iter().map(|r| r.loss.total).collect();
        let k = k.min(totals.len());
        (mean(&totals[..k]), mean(&totals[totals.len() - k..]))
    }

    pub fn iterations(&self, phase: Phase) -> usize {
        self.phase_rows(phase).count()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub pretrained: ModelParams,
    pub params: ModelParams,
    pub log: RunLog,
    /// fingerprint of the parameters the first fine-tune iteration started from
    pub finetune_start: u64,
}

/// Loss breakdown and parameter gradients of one teacher-forced example.
pub fn example_gradients(
    params: &ModelParams,
    example: &ExtendedExample,
    lambda_local: f64,
    lambda_global: f64,
    eps: f64,
) -> Result<(ParamGrads, LossBreakdown)> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let pass = teacher_force(&mut g, &bound, &params.config, example)?;
    let nodes = mixed_node(&mut g, &pass.gold_log_probs, &pass.refined_rows(), lambda_local, lambda_global, eps)?;
    let grads = g.backward(nodes.total)?;
    let mut out = ParamGrads::zeros_like(params);
    out.accumulate(&bound, &grads, 1.0);
    Ok((out, nodes.breakdown(&g, lambda_local, lambda_global)))
}

/// Teacher-forced MLE of one example, forward only.
pub fn example_mle(params: &ModelParams, example: &ExtendedExample) -> Result<f64> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let pass = teacher_force(&mut g, &bound, &params.config, example)?;
    let lps: Vec<f64> = pass.gold_log_probs.iter().map(|&n| g.value(n).item()).collect();
    Ok(-mean(&lps))
}

pub fn mean_mle(params: &ModelParams, examples: &[ExtendedExample]) -> Result<f64> {
    let v: Vec<f64> = examples
        .par_iter()
        .map(|e| example_mle(params, e))
        .collect::<Result<_>>()?;
    Ok(mean(&v))
}

/// Mean ROUGE-1 F1 of greedy outputs, compared as surface tokens.
pub fn greedy_rouge1(params: &ModelParams, vocab: &Vocabulary, examples: &[ExtendedExample], max_len: usize) -> Result<f64> {
    let scores: Vec<f64> = examples
        .par_iter()
        .map(|e| {
            let mut m = ModelStepper::new(params, e)?;
            let mut ids = greedy_decode(&mut m, BOS, EOS, max_len)?;
            if ids.last() == Some(&EOS) {
                ids.pop();
            }
            let words = render(&ids, vocab, &e.source.oovs);
            Ok(rouge_n(&words, &e.target_tokens, 1).f1)
        })
        .collect::<Result<_>>()?;
    Ok(mean(&scores))
}

/// Averaged gradients and losses of a batch. Per-example work runs in
/// parallel; the reduction is sequential in batch order.
fn batch_gradients(
    params: &ModelParams,
    batch: &[&ExtendedExample],
    lambda_local: f64,
    lambda_global: f64,
    eps: f64,
) -> Result<(ParamGrads, LossBreakdown)> {
    let parts: Vec<(ParamGrads, LossBreakdown)> = batch
        .par_iter()
        .map(|e| example_gradients(params, e, lambda_local, lambda_global, eps))
        .collect::<Result<_>>()?;
    let n = parts.len() as f64;
    let mut grads = ParamGrads::zeros_like(params);
    let mut loss = LossBreakdown {
        mle: 0.0,
        local: 0.0,
        global: 0.0,
        total: 0.0,
        lambda_local,
        lambda_global,
    };
    for (g, l) in &parts {
        grads.add(g);
        loss.mle += l.mle / n;
        loss.local += l.local / n;
        loss.global += l.global / n;
        loss.total += l.total / n;
    }
    grads.scale(1.0 / n);
    Ok((grads, loss))
}

/// Endless seeded epochs of shuffled batches.
struct BatchStream<'a> {
    examples: &'a [ExtendedExample],
    batch_size: usize,
    seed: u64,
    epoch: u64,
    queue: std::vec::IntoIter<Vec<usize>>,
}

impl<'a> BatchStream<'a> {
    fn new(examples: &'a [ExtendedExample], batch_size: usize, seed: u64) -> Self {
        Self {
            examples,
            batch_size,
            seed,
            epoch: 0,
            queue: Vec::new().into_iter(),
        }
    }

    fn next_batch(&mut self) -> Vec<&'a ExtendedExample> {
        loop {
            if let Some(idx) = self.queue.next() {
                return idx.iter().map(|&i| &self.examples[i]).collect();
            }
            let epoch_seed = self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(self.epoch);
            self.epoch += 1;
            let batches: Vec<Vec<usize>> = make_batches(self.examples, self.batch_size, epoch_seed)
                .into_iter()
                .map(|b| b.indices)
                .collect();
            self.queue = batches.into_iter();
        }
    }
}

struct EarlyStop {
    best: f64,
    stale: usize,
    patience: usize,
}

impl EarlyStop {
    fn new(patience: usize) -> Self {
        Self {
            best: f64::INFINITY,
            stale: 0,
            patience,
        }
    }

    /// Records a validation loss; true when the phase should stop.
    fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}

/// Runs both phases: MLE pretraining, then fine-tuning on the mixed loss
/// from the pretrained parameters. `max_decode_len` bounds the greedy
/// decoding used for the logged validation ROUGE.
pub fn train(
    cfg: &TrainConfig,
    seed: u64,
    vocab: &Vocabulary,
    train_set: &[ExtendedExample],
    valid_set: &[ExtendedExample],
    max_decode_len: usize,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if vocab.len() != cfg.vocab_size {
        return Err(Error::VocabMismatch(format!(
            "vocabulary has {} tokens, config says {}",
            vocab.len(),
            cfg.vocab_size
        )));
    }
    let mut params = ModelParams::init(cfg.model_config(), seed);
    let mut opt = Adagrad::new(&params, cfg.learning_rate, cfg.accumulator_init);
    let mut stream = BatchStream::new(train_set, cfg.batch_size, seed);
    let rouge_set = &valid_set[..cfg.val_rouge_examples.min(valid_set.len())];
    let mut log = RunLog { seed, rows: Vec::new() };
    let mut iteration = 0;
    let mut pretrained = None;
    let mut finetune_start = 0;

    let schedule = [
        (Phase::Pretrain, cfg.pretrain_iterations, 0.0, 0.0),
        (Phase::Finetune, cfg.finetune_iterations, cfg.lambda_local, cfg.lambda_global),
    ];
    for (phase, budget, l1, l2) in schedule {
        if phase == Phase::Finetune {
            pretrained = Some(params.clone());
            finetune_start = params.fingerprint();
        }
        let mut stop = EarlyStop::new(cfg.patience);
        for step in 1..=budget {
            iteration += 1;
            let batch = stream.next_batch();
            let (mut grads, loss) = batch_gradients(&params, &batch, l1, l2, cfg.epsilon)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration,
                    mle: loss.mle,
                    local: loss.local,
                    global: loss.global,
                    total: loss.total,
                });
            }
            let grad_norm = clip_global_norm(&mut grads, cfg.clip_norm);
            opt.step(&mut params, &grads);

            let evaluate = cfg.eval_every > 0 && !valid_set.is_empty() && (step % cfg.eval_every == 0 || step == budget);
            let (val_mle, val_rouge1) = if evaluate {
                let m = mean_mle(&params, valid_set)?;
                let r = if rouge_set.is_empty() {
                    None
                } else {
                    Some(greedy_rouge1(&params, vocab, rouge_set, max_decode_len)?)
                };
                (Some(m), r)
            } else {
                (None, None)
            };
            log.rows.push(LogRow {
                phase,
                iteration,
                loss,
                grad_norm,
                val_mle,
                val_rouge1,
            });
            if let Some(m) = val_mle {
                if stop.observe(m) {
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome {
        pretrained: pretrained.expect("schedule has a fine-tune phase"),
        params,
        log,
        finetune_start,
    })
}
