//! Pointer-generator encoder-decoder with an attention refinement gate.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, MAGIC};
pub use forward::{
    apply_gate, attention_step, context_vector, decode_step, encode, mix_distributions, refine_attention,
    refinement_gate, AttentionNodes, Encoded, LstmState, StepNodes, MIN_REFINED_MASS,
};
pub use params::{BoundParams, GateForm, ModelConfig, ModelParams, Param, ParamGrads, FORGET_BIAS, INIT_RANGE};

use crate::autodiff::{Graph, NodeId};
use crate::data::{ExtendedExample, BOS};
use crate::error::Result;

/// Gold-token probabilities below this are clamped before the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Plain-value attention quantities of one decoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub attention: Vec<f64>,
    pub gate: Vec<f64>,
    pub refined: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl AttentionRecord {
    /// Reads the values of `nodes`; a missing gate is recorded as all ones.
    pub fn from_nodes(g: &Graph, nodes: &AttentionNodes) -> Self {
        let attention = g.value(nodes.attention).data().to_vec();
        let gate = match nodes.gate {
            Some(r) => g.value(r).data().to_vec(),
            None => vec![1.0; attention.len()],
        };
        Self {
            gate,
            refined: g.value(nodes.refined).data().to_vec(),
            normalized: g.value(nodes.normalized).data().to_vec(),
            attention,
        }
    }
}

/// Teacher-forced pass over one example, kept in the graph for training.
#[derive(Debug, Clone)]
pub struct ForcedPass {
    pub steps: Vec<StepNodes>,
    /// `log p(y_t*)` per step, clamped at [`PROB_FLOOR`]
    pub gold_log_probs: Vec<NodeId>,
}

impl ForcedPass {
    pub fn refined_rows(&self) -> Vec<NodeId> {
        self.steps.iter().map(|s| s.attn.refined).collect()
    }

    pub fn records(&self, g: &Graph) -> Vec<AttentionRecord> {
        self.steps
            .iter()
            .map(|s| AttentionRecord::from_nodes(g, &s.attn))
            .collect()
    }
}

/// Runs the decoder over `outputs`, feeding BOS and then each previous
/// output. Used both for training on gold targets and for re-scoring
/// decoded sequences.
pub fn force_decode(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    example: &ExtendedExample,
    outputs: &[usize],
) -> Result<ForcedPass> {
    let (enc, mut state) = encode(g, p, cfg, &example.source.ids)?;
    let ext_size = example.extended_size(cfg.vocab_size);
    let mut prev = BOS;
    let mut steps = Vec::with_capacity(outputs.len());
    let mut gold_log_probs = Vec::with_capacity(outputs.len());
    for &gold in outputs {
        let step = decode_step(g, p, cfg, &enc, prev, state, &example.source.ext_ids, ext_size)?;
        let prob = g.index(step.final_dist, gold)?;
        gold_log_probs.push(g.log_clamped(prob, PROB_FLOOR));
        state = step.state;
        steps.push(step);
        prev = gold;
    }
    Ok(ForcedPass { steps, gold_log_probs })
}

/// Teacher-forced pass over the example's gold target.
pub fn teacher_force(g: &mut Graph, p: &BoundParams, cfg: &ModelConfig, example: &ExtendedExample) -> Result<ForcedPass> {
    force_decode(g, p, cfg, example, &example.target_ids)
}

/// Incremental decoding of one source against a parameter snapshot.
pub struct DecoderSession<'a> {
    params: &'a ModelParams,
    graph: Graph,
    bound: BoundParams,
    enc: Encoded,
    source_ext: Vec<usize>,
    ext_size: usize,
    initial: LstmState,
}

/// Result of one incremental step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: LstmState,
    pub final_dist: Vec<f64>,
    pub p_gen: f64,
    pub record: AttentionRecord,
}

impl<'a> DecoderSession<'a> {
    pub fn new(params: &'a ModelParams, example: &ExtendedExample) -> Result<Self> {
        let mut graph = Graph::new();
        let bound = params.bind(&mut graph);
        let (enc, initial) = encode(&mut graph, &bound, &params.config, &example.source.ids)?;
        Ok(Self {
            params,
            graph,
            bound,
            enc,
            source_ext: example.source.ext_ids.clone(),
            ext_size: example.extended_size(params.config.vocab_size),
            initial,
        })
    }

    pub fn initial_state(&self) -> LstmState {
        self.initial
    }

    pub fn ext_size(&self) -> usize {
        self.ext_size
    }

    pub fn step(&mut self, prev_token: usize, state: LstmState) -> Result<StepOutput> {
        let nodes = decode_step(
            &mut self.graph,
            &self.bound,
            &self.params.config,
            &self.enc,
            prev_token,
            state,
            &self.source_ext,
            self.ext_size,
        )?;
        Ok(StepOutput {
            state: nodes.state,
            final_dist: self.graph.value(nodes.final_dist).data().to_vec(),
            p_gen: self.graph.value(nodes.p_gen).item(),
            record: AttentionRecord::from_nodes(&self.graph, &nodes.attn),
        })
    }
}
