use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{GateForm, ModelConfig};

/// Training and evaluation settings, read from and echoed as flat
/// `key=value` text. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub embed: usize,
    pub vocab_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub accumulator_init: f64,
    pub pretrain_iterations: usize,
    pub finetune_iterations: usize,
    pub lambda_local: f64,
    pub lambda_global: f64,
    pub epsilon: f64,
    pub use_refinement: bool,
    pub gate_form: GateForm,
    pub beam_size: usize,
    pub block_trigrams: bool,
    /// 0 means twice the mean training target length
    pub max_decode_len: usize,
    pub max_source_len: usize,
    pub seeds: Vec<u64>,
    pub clip_norm: f64,
    /// iterations between validation passes; 0 disables them
    pub eval_every: usize,
    /// validation passes without improvement before a phase stops early
    pub patience: usize,
    /// validation examples decoded greedily for the logged ROUGE-1
    pub val_rouge_examples: usize,
    /// attention dumps written by `train` after evaluation
    pub dump_examples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            embed: 32,
            vocab_size: 200,
            batch_size: 8,
            learning_rate: 0.15,
            accumulator_init: 0.1,
            pretrain_iterations: 1500,
            finetune_iterations: 500,
            lambda_local: 0.3,
            lambda_global: 0.1,
            epsilon: 1e-6,
            use_refinement: true,
            gate_form: GateForm::Content,
            beam_size: 4,
            block_trigrams: true,
            max_decode_len: 0,
            max_source_len: 400,
            seeds: vec![1, 2, 3],
            clip_norm: 2.0,
            eval_every: 100,
            patience: 5,
            val_rouge_examples: 50,
            dump_examples: 5,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got {v:?}"))),
    }
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {line:?}")))?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, k: &str, v: &str) -> Result<()> {
        match k {
            "hidden" => self.hidden = parse(k, v)?,
            "embed" => self.embed = parse(k, v)?,
            "vocab_size" => self.vocab_size = parse(k, v)?,
            "batch_size" => self.batch_size = parse(k, v)?,
            "learning_rate" => self.learning_rate = parse(k, v)?,
            "accumulator_init" => self.accumulator_init = parse(k, v)?,
            "pretrain_iterations" => self.pretrain_iterations = parse(k, v)?,
            "finetune_iterations" => self.finetune_iterations = parse(k, v)?,
            "lambda_local" => self.lambda_local = parse(k, v)?,
            "lambda_global" => self.lambda_global = parse(k, v)?,
            "epsilon" => self.epsilon = parse(k, v)?,
            "use_refinement" => self.use_refinement = parse_bool(k, v)?,
            "gate_form" => self.gate_form = GateForm::parse(v)?,
            "beam_size" => self.beam_size = parse(k, v)?,
            "block_trigrams" => self.block_trigrams = parse_bool(k, v)?,
            "max_decode_len" => self.max_decode_len = parse(k, v)?,
            "max_source_len" => self.max_source_len = parse(k, v)?,
            "seeds" => {
                self.seeds = v
                    .split(',')
                    .map(|s| parse(k, s.trim()))
                    .collect::<Result<_>>()?
            }
            "clip_norm" => self.clip_norm = parse(k, v)?,
            "eval_every" => self.eval_every = parse(k, v)?,
            "patience" => self.patience = parse(k, v)?,
            "val_rouge_examples" => self.val_rouge_examples = parse(k, v)?,
            "dump_examples" => self.dump_examples = parse(k, v)?,
            _ => return Err(Error::Config(format!("unknown key {k:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("embed", self.embed),
            ("batch_size", self.batch_size),
            ("beam_size", self.beam_size),
            ("max_source_len", self.max_source_len),
            ("patience", self.patience),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if self.vocab_size <= 4 {
            return Err(Error::Config("vocab_size must exceed the 4 reserved ids".into()));
        }
        for (k, v) in [
            ("learning_rate", self.learning_rate),
            ("accumulator_init", self.accumulator_init),
            ("epsilon", self.epsilon),
            ("clip_norm", self.clip_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        for (k, v) in [("lambda_local", self.lambda_local), ("lambda_global", self.lambda_global)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be non-negative")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            vocab_size: self.vocab_size,
            embed_dim: self.embed,
            hidden: self.hidden,
            max_source_len: self.max_source_len,
            use_refinement: self.use_refinement,
            gate_form: self.gate_form,
        }
    }

    /// Every key, one per line, in a fixed order; `parse(echo())` is the
    /// identity.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = write!(
            s,
            "hidden={}\nembed={}\nvocab_size={}\nbatch_size={}\nlearning_rate={}\naccumulator_init={}\n\
             pretrain_iterations={}\nfinetune_iterations={}\nlambda_local={}\nlambda_global={}\nepsilon={}\n\
             use_refinement={}\ngate_form={}\nbeam_size={}\nblock_trigrams={}\nmax_decode_len={}\n\
             max_source_len={}\nseeds={}\nclip_norm={}\neval_every={}\npatience={}\nval_rouge_examples={}\n\
             dump_examples={}\n",
            self.hidden,
            self.embed,
            self.vocab_size,
            self.batch_size,
            self.learning_rate,
            self.accumulator_init,
            self.pretrain_iterations,
            self.finetune_iterations,
            self.lambda_local,
            self.lambda_global,
            self.epsilon,
            self.use_refinement,
            self.gate_form.as_str(),
            self.beam_size,
            self.block_trigrams,
            self.max_decode_len,
            self.max_source_len,
            seeds.join(","),
            self.clip_norm,
            self.eval_every,
            self.patience,
            self.val_rouge_examples,
            self.dump_examples,
        );
        s
    }
}
