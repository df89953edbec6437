use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// How the refinement gate sees the decoder state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateForm {
    /// `sigmoid(h_i . (W_r s_t) + w_a a_ti + b_r)`
    Content,
    /// `sigmoid(w_s . s_t + w_a a_ti + b_r)`, state term shared by all positions
    Broadcast,
}

impl GateForm {
    pub fn as_str(self) -> &'static str {
        match self {
            GateForm::Content => "content",
            GateForm::Broadcast => "broadcast",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "content" => Ok(GateForm::Content),
            "broadcast" => Ok(GateForm::Broadcast),
            other => Err(Error::Config(format!("unknown gate form {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub max_source_len: usize,
    /// Whether the refinement gate is applied at all (off = plain PGN).
    pub use_refinement: bool,
    pub gate_form: GateForm,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 200,
            embed_dim: 32,
            hidden: 32,
            max_source_len: 400,
            use_refinement: true,
            gate_form: GateForm::Content,
        }
    }
}

impl ModelConfig {
    pub fn echo(&self) -> String {
        format!(
            "vocab_size={}\nembed_dim={}\nhidden={}\nmax_source_len={}\nuse_refinement={}\ngate_form={}\n",
            self.vocab_size,
            self.embed_dim,
            self.hidden,
            self.max_source_len,
            self.use_refinement,
            self.gate_form.as_str()
        )
    }

    pub fn parse_echo(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        let num = |k: &str, v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("{k}: bad integer {v:?}")))
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad line {line:?}")))?;
            match k {
                "vocab_size" => cfg.vocab_size = num(k, v)?,
                "embed_dim" => cfg.embed_dim = num(k, v)?,
                "hidden" => cfg.hidden = num(k, v)?,
                "max_source_len" => cfg.max_source_len = num(k, v)?,
                "use_refinement" => {
                    cfg.use_refinement = v
                        .parse()
                        .map_err(|_| Error::Config(format!("{k}: bad bool {v:?}")))?
                }
                "gate_form" => cfg.gate_form = GateForm::parse(v)?,
                other => return Err(Error::Config(format!("unknown model key {other:?}"))),
            }
        }
        Ok(cfg)
    }
}

macro_rules! params {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Named parameter groups, in checkpoint order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum Param { $($variant),* }

        impl Param {
            pub const ALL: &'static [Param] = &[$(Param::$variant),*];

            pub fn name(self) -> &'static str {
                match self { $(Param::$variant => $name),* }
            }
        }
    };
}

params! {
    Embedding => "embedding",
    EncFwdW => "encoder.fwd.weight",
    EncFwdB => "encoder.fwd.bias",
    EncBwdW => "encoder.bwd.weight",
    EncBwdB => "encoder.bwd.bias",
    ReduceHW => "reduce.h.weight",
    ReduceHB => "reduce.h.bias",
    ReduceCW => "reduce.c.weight",
    ReduceCB => "reduce.c.bias",
    DecW => "decoder.weight",
    DecB => "decoder.bias",
    AttnWh => "attention.w_h",
    AttnWs => "attention.w_s",
    AttnB => "attention.bias",
    AttnV => "attention.v",
    GateWr => "refine.w_r",
    GateWs => "refine.w_s",
    GateWa => "refine.w_a",
    GateB => "refine.bias",
    PtrW => "pointer.weight",
    PtrB => "pointer.bias",
    OutW => "output.weight",
    OutB => "output.bias",
}

impl Param {
    pub fn shape(self, c: &ModelConfig) -> Vec<usize> {
        let (v, e, h) = (c.vocab_size, c.embed_dim, c.hidden);
        match self {
            Param::Embedding => vec![v, e],
            Param::EncFwdW | Param::EncBwdW | Param::DecW => vec![4 * h, e + h],
            Param::EncFwdB | Param::EncBwdB | Param::DecB => vec![4 * h],
            Param::ReduceHW | Param::ReduceCW => vec![h, 2 * h],
            Param::ReduceHB | Param::ReduceCB => vec![h],
            Param::AttnWh => vec![2 * h, h],
            Param::AttnWs => vec![h, h],
            Param::AttnB | Param::AttnV => vec![h],
            Param::GateWr => vec![2 * h, h],
            Param::GateWs => vec![h],
            Param::GateWa | Param::GateB | Param::PtrB => vec![1],
            Param::PtrW => vec![2 * h + h + e],
            Param::OutW => vec![v, 3 * h],
            Param::OutB => vec![v],
        }
    }

    fn is_lstm_bias(self) -> bool {
        matches!(self, Param::EncFwdB | Param::EncBwdB | Param::DecB)
    }

    /// Belongs to the refinement gate (untouched when refinement is off).
    pub fn is_gate(self) -> bool {
        matches!(self, Param::GateWr | Param::GateWs | Param::GateWa | Param::GateB)
    }
}

pub const INIT_RANGE: f64 = 0.05;
pub const FORGET_BIAS: f64 = 1.0;

/// All learnable weights, indexed by [`Param`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Uniform(-0.05, 0.05) weights from a seeded stream; LSTM forget-gate
    /// biases start at 1.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        let tensors = Param::ALL
            .iter()
            .map(|&p| {
                let shape = p.shape(&config);
                let n: usize = shape.iter().product();
                let mut data: Vec<f64> = (0..n).map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE)).collect();
                if p.is_lstm_bias() {
                    data[h..2 * h].fill(FORGET_BIAS);
                }
                Tensor::new(shape, data).expect("parameter shape")
            })
            .collect();
        Self { config, tensors }
    }

    pub fn zeros(config: ModelConfig) -> Self {
        let tensors = Param::ALL.iter().map(|p| Tensor::zeros(&p.shape(&config))).collect();
        Self { config, tensors }
    }

    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != Param::ALL.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter blocks, found {}",
                Param::ALL.len(),
                tensors.len()
            )));
        }
        for (&p, t) in Param::ALL.iter().zip(&tensors) {
            let want = p.shape(&config);
            if t.shape() != want.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: p.name(),
                    lhs: want,
                    rhs: t.shape().to_vec(),
                });
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn get(&self, p: Param) -> &Tensor {
        &self.tensors[p as usize]
    }

    pub fn get_mut(&mut self, p: Param) -> &mut Tensor {
        &mut self.tensors[p as usize]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Registers every parameter as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        BoundParams {
            ids: self.tensors.iter().map(|t| g.leaf(t.clone())).collect(),
        }
    }

    /// FNV-1a over the raw bit patterns; equal hashes mean bit-identical
    /// parameters for all practical purposes.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tensors {
            for v in t.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Graph handles for a bound [`ModelParams`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    ids: Vec<NodeId>,
}

impl BoundParams {
    /// Wraps leaf ids created in [`Param::ALL`] order.
    pub fn from_ids(ids: Vec<NodeId>) -> Self {
        assert_eq!(ids.len(), Param::ALL.len(), "one id per parameter");
        Self { ids }
    }

    pub fn get(&self, p: Param) -> NodeId {
        self.ids[p as usize]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

/// Gradient buffers matching a [`ModelParams`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub grads: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(p: &ModelParams) -> Self {
        Self {
            grads: p.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Adds `scale * d(root)/d(param)` for every bound parameter.
    pub fn accumulate(&mut self, bound: &BoundParams, grads: &crate::autodiff::Gradients, scale: f64) {
        for (buf, &id) in self.grads.iter_mut().zip(bound.ids()) {
            if let Some(g) = grads.get(id) {
                for (b, v) in buf.iter_mut().zip(g) {
                    *b += scale * v;
                }
            }
        }
    }

    pub fn add(&mut self, other: &ParamGrads) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v *= c;
            }
        }
    }
}
