use std::collections::HashMap;

use crate::data::vocab::{Vocabulary, BOS, EOS, UNK};

/// Source side of an example under the extended vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceEncoding {
    /// Encoder inputs; OOVs are mapped to UNK.
    pub ids: Vec<usize>,
    /// Copy targets; the k-th distinct OOV gets id `V + k`.
    pub ext_ids: Vec<usize>,
    pub oovs: Vec<String>,
}

pub fn encode_source(tokens: &[String], vocab: &Vocabulary) -> SourceEncoding {
    let mut oov_ids: HashMap<&str, usize> = HashMap::new();
    let mut oovs = Vec::new();
    let mut ids = Vec::with_capacity(tokens.len());
    let mut ext_ids = Vec::with_capacity(tokens.len());
    for t in tokens {
        match vocab.id(t) {
            Some(id) => {
                ids.push(id);
                ext_ids.push(id);
            }
            None => {
                let ext = *oov_ids.entry(t.as_str()).or_insert_with(|| {
                    oovs.push(t.clone());
                    vocab.len() + oovs.len() - 1
                });
                ids.push(UNK);
                ext_ids.push(ext);
            }
        }
    }
    SourceEncoding { ids, ext_ids, oovs }
}

/// Target tokens in extended ids: OOVs present in the source take the
/// source's extended id, others become UNK.
pub fn encode_target(tokens: &[String], vocab: &Vocabulary, oovs: &[String]) -> Vec<usize> {
    tokens
        .iter()
        .map(|t| match vocab.id(t) {
            Some(id) => id,
            None => oovs
                .iter()
                .position(|o| o == t)
                .map_or(UNK, |k| vocab.len() + k),
        })
        .collect()
}

/// Renders extended ids back to surface tokens.
pub fn render(ids: &[usize], vocab: &Vocabulary, oovs: &[String]) -> Vec<String> {
    ids.iter()
        .map(|&id| match vocab.token(id) {
            Some(t) => t.to_string(),
            None => oovs
                .get(id - vocab.len())
                .cloned()
                .unwrap_or_else(|| "<unk>".to_string()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedExample {
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
    pub source: SourceEncoding,
    /// Gold decoder outputs in extended ids, terminated by EOS.
    pub target_ids: Vec<usize>,
}

impl ExtendedExample {
    pub fn new(source_tokens: Vec<String>, target_tokens: Vec<String>, vocab: &Vocabulary) -> Self {
        let source = encode_source(&source_tokens, vocab);
        let mut target_ids = encode_target(&target_tokens, vocab, &source.oovs);
        target_ids.push(EOS);
        Self {
            source_tokens,
            target_tokens,
            source,
            target_ids,
        }
    }

    /// Teacher-forcing inputs: BOS followed by the gold outputs except the
    /// last, with extended ids mapped to UNK.
    pub fn decoder_inputs(&self, vocab_size: usize) -> Vec<usize> {
        std::iter::once(BOS)
            .chain(self.target_ids[..self.target_ids.len() - 1].iter().map(|&id| {
                if id >= vocab_size {
                    UNK
                } else {
                    id
                }
            }))
            .collect()
    }

    pub fn extended_size(&self, vocab_size: usize) -> usize {
        vocab_size + self.source.oovs.len()
    }
}
