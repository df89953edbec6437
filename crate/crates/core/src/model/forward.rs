//! Encoder, attention, refinement gate, and pointer-generator decoder step.

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::data::UNK;
use crate::error::{Error, Result};
use crate::model::params::{BoundParams, GateForm, ModelConfig, Param};

/// Minimum total refined attention before the gate counts as collapsed.
pub const MIN_REFINED_MASS: f64 = 1e-12;

/// Bi-LSTM encoder output for one source sequence.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// `[|D|, 2H]`, forward and backward states concatenated per position
    pub states: NodeId,
    /// `[|D|, H]`, `W_h h_i` for every position
    pub features: NodeId,
    pub len: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

/// Graph handles for the attention quantities of one decoder step.
#[derive(Debug, Clone, Copy)]
pub struct AttentionNodes {
    pub logits: NodeId,
    /// raw attention `a_t`
    pub attention: NodeId,
    /// gate `r_t`; `None` when refinement is off
    pub gate: Option<NodeId>,
    /// `r_t ⊙ a_t` (equals `a_t` when refinement is off)
    pub refined: NodeId,
    /// refined attention rescaled to sum to one
    pub normalized: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct StepNodes {
    pub state: LstmState,
    pub attn: AttentionNodes,
    pub context: NodeId,
    pub p_gen: NodeId,
    pub vocab_dist: NodeId,
    /// distribution over the extended vocabulary
    pub final_dist: NodeId,
}

fn lstm_cell(g: &mut Graph, w: NodeId, b: NodeId, x: NodeId, prev: LstmState, hidden: usize) -> Result<LstmState> {
    let xh = g.concat(&[x, prev.h])?;
    let z = g.matvec(w, xh)?;
    let z = g.add(z, b)?;
    let zi = g.slice(z, 0, hidden)?;
    let zf = g.slice(z, hidden, hidden)?;
    let zg = g.slice(z, 2 * hidden, hidden)?;
    let zo = g.slice(z, 3 * hidden, hidden)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let keep = g.mul(f, prev.c)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(LstmState { h, c })
}

fn zero_state(g: &mut Graph, hidden: usize) -> LstmState {
    let h = g.leaf(Tensor::zeros(&[hidden]));
    let c = g.leaf(Tensor::zeros(&[hidden]));
    LstmState { h, c }
}

fn check_ids(ids: &[usize], cfg: &ModelConfig) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::EmptySource);
    }
    if ids.len() > cfg.max_source_len {
        return Err(Error::SourceTooLong {
            len: ids.len(),
            max: cfg.max_source_len,
        });
    }
    if let Some(&id) = ids.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id,
            size: cfg.vocab_size,
        });
    }
    Ok(())
}

/// Runs the bidirectional encoder and projects the final states into the
/// decoder's initial state.
pub fn encode(g: &mut Graph, p: &BoundParams, cfg: &ModelConfig, source: &[usize]) -> Result<(Encoded, LstmState)> {
    check_ids(source, cfg)?;
    let hidden = cfg.hidden;
    let n = source.len();
    let emb = p.get(Param::Embedding);
    let inputs: Vec<NodeId> = source.iter().map(|&id| g.row(emb, id)).collect::<Result<_>>()?;

    let mut fwd = Vec::with_capacity(n);
    let mut state = zero_state(g, hidden);
    for &x in &inputs {
        state = lstm_cell(g, p.get(Param::EncFwdW), p.get(Param::EncFwdB), x, state, hidden)?;
        fwd.push(state);
    }
    let mut bwd = vec![state; n];
    let mut state = zero_state(g, hidden);
    for i in (0..n).rev() {
        state = lstm_cell(g, p.get(Param::EncBwdW), p.get(Param::EncBwdB), inputs[i], state, hidden)?;
        bwd[i] = state;
    }

    let rows: Vec<NodeId> = (0..n)
        .map(|i| g.concat(&[fwd[i].h, bwd[i].h]))
        .collect::<Result<_>>()?;
    let states = g.stack(&rows)?;
    let features = g.matmul(states, p.get(Param::AttnWh))?;

    let last_h = g.concat(&[fwd[n - 1].h, bwd[0].h])?;
    let last_c = g.concat(&[fwd[n - 1].c, bwd[0].c])?;
    let h = g.matvec(p.get(Param::ReduceHW), last_h)?;
    let h = g.add(h, p.get(Param::ReduceHB))?;
    let h = g.tanh(h);
    let c = g.matvec(p.get(Param::ReduceCW), last_c)?;
    let c = g.add(c, p.get(Param::ReduceCB))?;
    let c = g.tanh(c);
    Ok((
        Encoded {
            states,
            features,
            len: n,
        },
        LstmState { h, c },
    ))
}

/// `e_ti = v . tanh(W_h h_i + W_s s_t + b)`, `a_t = softmax(e_t)`.
/// Positions with `mask[i] == false` get zero attention.
pub fn attention_step(
    g: &mut Graph,
    p: &BoundParams,
    enc: &Encoded,
    s: NodeId,
    mask: Option<&[bool]>,
) -> Result<(NodeId, NodeId)> {
    let dec = g.matvec(p.get(Param::AttnWs), s)?;
    let dec = g.add(dec, p.get(Param::AttnB))?;
    let pre = g.add(enc.features, dec)?;
    let act = g.tanh(pre);
    let logits = g.matvec(act, p.get(Param::AttnV))?;
    let attention = match mask {
        Some(m) => g.softmax_masked(logits, m)?,
        None => g.softmax(logits),
    };
    Ok((logits, attention))
}

/// Refinement gate `r_t` for the given form.
pub fn refinement_gate(
    g: &mut Graph,
    p: &BoundParams,
    enc: &Encoded,
    s: NodeId,
    attention: NodeId,
    form: GateForm,
) -> Result<NodeId> {
    let weighted = g.mul(attention, p.get(Param::GateWa))?;
    let with_bias = g.add(weighted, p.get(Param::GateB))?;
    let z = match form {
        GateForm::Content => {
            let q = g.matvec(p.get(Param::GateWr), s)?;
            let content = g.matvec(enc.states, q)?;
            g.add(content, with_bias)?
        }
        GateForm::Broadcast => {
            let shared = g.dot(p.get(Param::GateWs), s)?;
            g.add(with_bias, shared)?
        }
    };
    Ok(g.sigmoid(z))
}

/// `a^r = r ⊙ a` and its renormalization. Fails when the refined mass
/// collapses below [`MIN_REFINED_MASS`].
pub fn apply_gate(g: &mut Graph, gate: NodeId, attention: NodeId) -> Result<(NodeId, NodeId)> {
    let refined = g.mul(gate, attention)?;
    let total = g.sum(refined);
    let mass = g.value(total).item();
    if !(mass >= MIN_REFINED_MASS) {
        return Err(Error::DegenerateGate { mass });
    }
    let inv = g.recip(total);
    let normalized = g.mul(refined, inv)?;
    Ok((refined, normalized))
}

/// Attention plus (optional) refinement for one decoder state.
pub fn refine_attention(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    enc: &Encoded,
    s: NodeId,
    mask: Option<&[bool]>,
) -> Result<AttentionNodes> {
    let (logits, attention) = attention_step(g, p, enc, s, mask)?;
    if !cfg.use_refinement {
        return Ok(AttentionNodes {
            logits,
            attention,
            gate: None,
            refined: attention,
            normalized: attention,
        });
    }
    let gate = refinement_gate(g, p, enc, s, attention, cfg.gate_form)?;
    let (refined, normalized) = apply_gate(g, gate, attention)?;
    Ok(AttentionNodes {
        logits,
        attention,
        gate: Some(gate),
        refined,
        normalized,
    })
}

/// `c_t = sum_i w_i h_i`
pub fn context_vector(g: &mut Graph, weights: NodeId, enc: &Encoded) -> Result<NodeId> {
    g.vecmat(weights, enc.states)
}

/// `p_gen * P_vocab (zero-padded) + (1 - p_gen) * copy`, where the copy
/// distribution scatters `weights` onto the extended ids of the source.
pub fn mix_distributions(
    g: &mut Graph,
    vocab_dist: NodeId,
    weights: NodeId,
    p_gen: NodeId,
    source_ext: &[usize],
    ext_size: usize,
) -> Result<NodeId> {
    let padded = g.pad(vocab_dist, ext_size)?;
    let generate = g.mul(padded, p_gen)?;
    let copy = g.scatter_add(weights, source_ext, ext_size)?;
    let p_copy = g.one_minus(p_gen);
    let copy = g.mul(copy, p_copy)?;
    g.add(generate, copy)
}

/// One decoder step: LSTM cell on the previous token, attention,
/// refinement, context, and the pointer-generator output distribution.
#[allow(clippy::too_many_arguments)]
pub fn decode_step(
    g: &mut Graph,
    p: &BoundParams,
    cfg: &ModelConfig,
    enc: &Encoded,
    prev_token: usize,
    prev: LstmState,
    source_ext: &[usize],
    ext_size: usize,
) -> Result<StepNodes> {
    if prev_token >= ext_size {
        return Err(Error::TokenOutOfRange {
            id: prev_token,
            size: ext_size,
        });
    }
    if source_ext.len() != enc.len {
        return Err(Error::ShapeMismatch {
            op: "decode_step",
            lhs: vec![enc.len],
            rhs: vec![source_ext.len()],
        });
    }
    let input_id = if prev_token >= cfg.vocab_size { UNK } else { prev_token };
    let x = g.row(p.get(Param::Embedding), input_id)?;
    let state = lstm_cell(g, p.get(Param::DecW), p.get(Param::DecB), x, prev, cfg.hidden)?;
    let attn = refine_attention(g, p, cfg, enc, state.h, None)?;
    let context = context_vector(g, attn.normalized, enc)?;

    let sc = g.concat(&[state.h, context])?;
    let logits = g.matvec(p.get(Param::OutW), sc)?;
    let logits = g.add(logits, p.get(Param::OutB))?;
    let vocab_dist = g.softmax(logits);

    let ptr_in = g.concat(&[context, state.h, x])?;
    let z = g.dot(p.get(Param::PtrW), ptr_in)?;
    let z = g.add(z, p.get(Param::PtrB))?;
    let p_gen = g.sigmoid(z);

    let final_dist = mix_distributions(g, vocab_dist, attn.normalized, p_gen, source_ext, ext_size)?;
    Ok(StepNodes {
        state,
        attn,
        context,
        p_gen,
        vocab_dist,
        final_dist,
    })
}
