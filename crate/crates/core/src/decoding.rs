//! Greedy and beam-search decoding with optional trigram blocking.
//!
//! Decoders are written against [`StepModel`] so they can run both the
//! pointer-generator ([`ModelStepper`]) and small synthetic distributions
//! ([`ToyModel`]).

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ExtendedExample, BOS, EOS};
use crate::error::{Error, Result};
use crate::model::{DecoderSession, LstmState, ModelParams};

/// Something that produces a next-token distribution from the previous
/// token and a recurrent state.
pub trait StepModel {
    type State: Clone;

    fn initial_state(&self) -> Self::State;

    /// Probabilities over output ids (they need not be normalized exactly)
    /// and the successor state.
    fn step(&mut self, prev: usize, state: &Self::State) -> Result<(Vec<f64>, Self::State)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub max_len: usize,
    pub block_trigrams: bool,
    pub bos: usize,
    pub eos: usize,
}

impl DecodeConfig {
    pub fn new(beam_size: usize, max_len: usize, block_trigrams: bool) -> Self {
        Self {
            beam_size,
            max_len,
            block_trigrams,
            bos: BOS,
            eos: EOS,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max decode length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Hypothesis<S> {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: S,
    pub trigrams: HashSet<[usize; 3]>,
    pub finished: bool,
}

impl<S> Hypothesis<S> {
    fn root(state: S) -> Self {
        Self {
            tokens: Vec::new(),
            log_prob: 0.0,
            state,
            trigrams: HashSet::new(),
            finished: false,
        }
    }

    pub fn last(&self) -> Option<usize> {
        self.tokens.last().copied()
    }

    /// Cumulative log-probability divided by the token count.
    pub fn normalized_score(&self) -> f64 {
        if self.tokens.is_empty() {
            self.log_prob
        } else {
            self.log_prob / self.tokens.len() as f64
        }
    }

    /// Tokens without a trailing EOS.
    pub fn output(&self, eos: usize) -> &[usize] {
        match self.tokens.split_last() {
            Some((&last, rest)) if last == eos => rest,
            _ => &self.tokens,
        }
    }

    fn extend(&self, token: usize, log_prob: f64, state: S, finished: bool) -> Self {
        let mut tokens = self.tokens.clone();
        tokens.push(token);
        let mut trigrams = self.trigrams.clone();
        if let [.., a, b, c] = tokens[..] {
            trigrams.insert([a, b, c]);
        }
        Self {
            tokens,
            log_prob,
            state,
            trigrams,
            finished,
        }
    }
}

/// True when appending `candidate` would repeat a trigram already in `hyp`.
pub fn trigram_blocked<S>(hyp: &Hypothesis<S>, candidate: usize) -> bool {
    match hyp.tokens[..] {
        [.., a, b] => hyp.trigrams.contains(&[a, b, candidate]),
        _ => false,
    }
}

#[derive(Debug, Clone)]
pub struct BeamOutcome<S> {
    pub best: Hypothesis<S>,
    /// Steps at which every candidate was blocked and the search fell back
    /// to the most probable blocked one.
    pub fallback_steps: Vec<usize>,
    /// Steps at which a hypothesis was dropped because its refinement gate
    /// collapsed.
    pub collapsed_steps: Vec<usize>,
}

struct Candidate {
    parent: usize,
    token: usize,
    log_prob: f64,
    blocked: bool,
}

fn by_score_desc(a: &Candidate, b: &Candidate) -> Ordering {
    b.log_prob.total_cmp(&a.log_prob)
}

/// Beam search ranked by cumulative log-probability. At every step the
/// top `beam_size` candidates survive; the ones ending in EOS finish. Live
/// hypotheses are finished when `max_len` is reached. Returns the finished
/// hypothesis with the best length-normalized score. A hypothesis whose
/// step reports a collapsed refinement gate is dropped; the error surfaces
/// only if nothing finished.
pub fn beam_search<M: StepModel>(model: &mut M, cfg: &DecodeConfig) -> Result<BeamOutcome<M::State>> {
    cfg.validate()?;
    let mut live = vec![Hypothesis::root(model.initial_state())];
    let mut finished: Vec<Hypothesis<M::State>> = Vec::new();
    let mut fallback_steps = Vec::new();
    let mut collapsed_steps = Vec::new();
    let mut collapse = None;

    for step in 0..cfg.max_len {
        if live.is_empty() {
            break;
        }
        let mut candidates = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (parent, hyp) in live.iter().enumerate() {
            let prev = hyp.last().unwrap_or(cfg.bos);
            let (dist, state) = match model.step(prev, &hyp.state) {
                Ok(v) => v,
                // a hypothesis whose gate closes on every position is dropped
                Err(e @ Error::DegenerateGate { .. }) => {
                    collapsed_steps.push(step);
                    collapse.get_or_insert(e);
                    next_states.push(hyp.state.clone());
                    continue;
                }
                Err(e) => return Err(e),
            };
            next_states.push(state);
            for (token, &p) in dist.iter().enumerate() {
                candidates.push(Candidate {
                    parent,
                    token,
                    log_prob: hyp.log_prob + p.ln(),
                    blocked: cfg.block_trigrams && trigram_blocked(hyp, token),
                });
            }
        }
        if candidates.is_empty() {
            break;
        }
        // stable sort: ties keep parent order, then lower token id
        candidates.sort_by(by_score_desc);
        let mut chosen: Vec<&Candidate> = candidates
            .iter()
            .filter(|c| !c.blocked && c.log_prob > f64::NEG_INFINITY)
            .take(cfg.beam_size)
            .collect();
        if chosen.is_empty() {
            fallback_steps.push(step);
            chosen = candidates.iter().take(1).collect();
        }

        let last_step = step + 1 == cfg.max_len;
        let mut next_live = Vec::with_capacity(chosen.len());
        for c in chosen {
            let parent = &live[c.parent];
            let done = c.token == cfg.eos || last_step;
            let hyp = parent.extend(c.token, c.log_prob, next_states[c.parent].clone(), done);
            if done {
                finished.push(hyp);
            } else {
                next_live.push(hyp);
            }
        }
        live = next_live;
    }

    let mut best: Option<Hypothesis<M::State>> = None;
    for h in finished {
        if best
            .as_ref()
            .map_or(true, |b| h.normalized_score() > b.normalized_score())
        {
            best = Some(h);
        }
    }
    let best = match (best, collapse) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e),
        (None, None) => return Err(Error::Config("beam search produced no hypothesis".into())),
    };
    Ok(BeamOutcome {
        best,
        fallback_steps,
        collapsed_steps,
    })
}

/// Argmax decoding; ties go to the lowest token id. Stops after EOS (which
/// is included) or `max_len` tokens.
pub fn greedy_decode<M: StepModel>(model: &mut M, bos: usize, eos: usize, max_len: usize) -> Result<Vec<usize>> {
    if max_len == 0 {
        return Err(Error::Config("max decode length must be at least 1".into()));
    }
    let mut state = model.initial_state();
    let mut prev = bos;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let (dist, next) = model.step(prev, &state)?;
        let mut best = 0;
        for (i, &p) in dist.iter().enumerate() {
            if p > dist[best] {
                best = i;
            }
        }
        out.push(best);
        if best == eos {
            break;
        }
        state = next;
        prev = best;
    }
    Ok(out)
}

/// [`StepModel`] over the pointer-generator for one source example.
pub struct ModelStepper<'a> {
    session: DecoderSession<'a>,
}

impl<'a> ModelStepper<'a> {
    pub fn new(params: &'a ModelParams, example: &ExtendedExample) -> Result<Self> {
        Ok(Self {
            session: DecoderSession::new(params, example)?,
        })
    }
}

impl StepModel for ModelStepper<'_> {
    type State = LstmState;

    fn initial_state(&self) -> LstmState {
        self.session.initial_state()
    }

    fn step(&mut self, prev: usize, state: &LstmState) -> Result<(Vec<f64>, LstmState)> {
        let out = self.session.step(prev, *state)?;
        Ok((out.final_dist, out.state))
    }
}

/// Beam search over the model for one example; returns the output ids
/// (extended vocabulary, no EOS) and the number of fallback steps.
pub fn decode_example(params: &ModelParams, example: &ExtendedExample, cfg: &DecodeConfig) -> Result<(Vec<usize>, usize)> {
    let mut stepper = ModelStepper::new(params, example)?;
    let outcome = beam_search(&mut stepper, cfg)?;
    Ok((outcome.best.output(cfg.eos).to_vec(), outcome.fallback_steps.len()))
}

/// Synthetic step model whose distribution depends on the whole prefix,
/// drawn deterministically from `seed`. `sharpness` scales the random
/// logits.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub vocab: usize,
    pub seed: u64,
    pub sharpness: f64,
}

impl ToyModel {
    pub fn new(vocab: usize, seed: u64, sharpness: f64) -> Self {
        Self { vocab, seed, sharpness }
    }

    /// Next-token distribution after `prefix`.
    pub fn distribution(&self, prefix: &[usize]) -> Vec<f64> {
        // FNV-1a over the prefix selects an independent stream
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &t in prefix {
            h ^= t as u64 + 1;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        h ^= prefix.len() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(h);
        let logits: Vec<f64> = (0..self.vocab)
            .map(|_| self.sharpness * rng.gen_range(-1.0..1.0))
            .collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|x| x / z).collect()
    }

    /// Best length-normalized score over every sequence that ends in `eos`
    /// or reaches `max_len`, by brute-force enumeration.
    pub fn exhaustive_best(&self, eos: usize, max_len: usize) -> (Vec<usize>, f64) {
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        let mut stack = vec![(Vec::<usize>::new(), 0.0f64)];
        while let Some((prefix, lp)) = stack.pop() {
            let dist = self.distribution(&prefix);
            for (t, &p) in dist.iter().enumerate() {
                let mut seq = prefix.clone();
                seq.push(t);
                let total = lp + p.ln();
                if t == eos || seq.len() == max_len {
                    let score = total / seq.len() as f64;
                    if score > best.1 {
                        best = (seq, score);
                    }
                } else {
                    stack.push((seq, total));
                }
            }
        }
        best
    }
}

/// Extends the prefix carried as state; `None` marks the root, where
/// `prev` is the start symbol rather than an emitted token.
fn advance_prefix(prev: usize, state: &Option<Vec<usize>>) -> Vec<usize> {
    match state {
        None => Vec::new(),
        Some(p) => {
            let mut p = p.clone();
            p.push(prev);
            p
        }
    }
}

impl StepModel for ToyModel {
    type State = Option<Vec<usize>>;

    fn initial_state(&self) -> Self::State {
        None
    }

    fn step(&mut self, prev: usize, state: &Self::State) -> Result<(Vec<f64>, Self::State)> {
        let prefix = advance_prefix(prev, state);
        Ok((self.distribution(&prefix), Some(prefix)))
    }
}
