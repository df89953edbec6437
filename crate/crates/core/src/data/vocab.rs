use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Fixed token/id map with the four reserved ids at the front.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps the `size - 4` most frequent tokens; equal counts are ordered
    /// lexicographically.
    pub fn build<'a, I, S>(sentences: I, size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        if size <= RESERVED.len() {
            return Err(Error::Config(format!("vocabulary size {size} must exceed 4")));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in sentences {
            for t in s.as_ref() {
                if !RESERVED.contains(&t.as_str()) {
                    *counts.entry(t.as_str()).or_default() += 1;
                }
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(size - RESERVED.len());
        Self::from_tokens(
            RESERVED
                .iter()
                .map(|s| s.to_string())
                .chain(ranked.into_iter().map(|(t, _)| t.to_string()))
                .collect(),
        )
    }

    /// Rebuilds from an id-ordered token list that starts with the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::VocabMismatch("reserved tokens missing".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::VocabMismatch(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn small_corpus_fits_entirely() {
        let corpus = vec![sent("a b c a")];
        let v = Vocabulary::build(&corpus, 10).unwrap();
        assert_eq!(v.len(), 7);
        for t in ["a", "b", "c"] {
            assert!(v.id(t).is_some());
        }
        assert_eq!(v.id("<eos>"), Some(EOS));
    }

    #[test]
    fn ties_break_lexicographically() {
        let corpus = vec![sent("zeta alpha")];
        let v = Vocabulary::build(&corpus, 10).unwrap();
        assert!(v.id("alpha").unwrap() < v.id("zeta").unwrap());
    }

    #[test]
    fn ids_follow_descending_frequency() {
        let corpus = vec![sent("c c c b b a d d d d")];
        let v = Vocabulary::build(&corpus, 10).unwrap();
        let ids: Vec<usize> = ["d", "c", "b", "a"].iter().map(|t| v.id(t).unwrap()).collect();
        assert_eq!(ids, vec![4, 5, 6, 7]);
        let v = Vocabulary::build(&corpus, 6).unwrap();
        assert_eq!(v.id("b"), None);
        assert_eq!(v.id_or_unk("b"), UNK);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let corpus: Vec<Vec<String>> = vec![vec![]];
        assert!(matches!(Vocabulary::build(&corpus, 10), Err(Error::EmptyCorpus)));
        assert!(Vocabulary::build(&[sent("a")], 4).is_err());
    }
}
