//! Vocabulary, extended-vocabulary OOV mapping, batching, and the
//! synthetic salient-copy task.

mod batch;
mod corpus;
mod example;
mod synth;
mod vocab;

pub use batch::{make_batches, Batch};
pub use corpus::{read_corpus, task_config_echo, write_corpus};
pub use example::{encode_source, encode_target, render, ExtendedExample, SourceEncoding};
pub use synth::{generate_example, synth_task_generate, SynthPair, TaskConfig, SALIENT_CLOSE, SALIENT_OPEN};
pub use vocab::{Vocabulary, BOS, EOS, PAD, RESERVED, UNK};
