//! Corpus directories: `train.tsv`, `valid.tsv`, `test.tsv`, each with a
//! `.meta` sidecar describing how it was generated.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{
    read_corpus, synth_task_generate, task_config_echo, write_corpus, ExtendedExample, SynthPair, TaskConfig,
    Vocabulary,
};
use crate::error::{Error, Result};

pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 2000,
            valid: 200,
            test: 200,
        }
    }
}

pub fn split_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.tsv"))
}

/// Generates `train + valid + test` examples from one task config and
/// partitions them by index, in that order.
pub fn generate_corpus(dir: &Path, task: &TaskConfig, sizes: SplitSizes) -> Result<()> {
    let total = sizes.train + sizes.valid + sizes.test;
    if sizes.train == 0 || sizes.test == 0 {
        return Err(Error::Config("train and test splits must be non-empty".into()));
    }
    let cfg = TaskConfig {
        examples: total,
        ..task.clone()
    };
    let pairs = synth_task_generate(&cfg)?;
    fs::create_dir_all(dir)?;
    let mut start = 0;
    for (split, n) in SPLITS.iter().zip([sizes.train, sizes.valid, sizes.test]) {
        let range = start..start + n;
        write_corpus(&split_path(dir, split), &pairs[range.clone()])?;
        let meta = format!("{}index_range={}..{}\n", task_config_echo(&cfg, split), range.start, range.end);
        fs::write(dir.join(format!("{split}.meta")), meta)?;
        start = range.end;
    }
    Ok(())
}

pub fn load_split(dir: &Path, split: &str) -> Result<Vec<SynthPair>> {
    let path = split_path(dir, split);
    if !path.exists() {
        return Err(Error::Config(format!("missing corpus split {}", path.display())));
    }
    read_corpus(&path)
}

/// Vocabulary over the source and target tokens of a corpus's train split.
pub fn corpus_vocab(dir: &Path, size: usize) -> Result<Vocabulary> {
    let train = load_split(dir, "train")?;
    Vocabulary::build(train.iter().flat_map(|p| [&p.source, &p.target]), size)
}

pub fn to_examples(pairs: &[SynthPair], vocab: &Vocabulary) -> Vec<ExtendedExample> {
    pairs
        .iter()
        .map(|p| ExtendedExample::new(p.source.clone(), p.target.clone(), vocab))
        .collect()
}

/// `2 x` mean target length (EOS included), rounded up.
pub fn default_decode_len(examples: &[ExtendedExample]) -> usize {
    if examples.is_empty() {
        return 1;
    }
    let total: usize = examples.iter().map(|e| e.target_ids.len()).sum();
    (2 * total).div_ceil(examples.len()).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_partition_one_generated_stream() {
        let dir = tempfile::tempdir().unwrap();
        let task = TaskConfig::default();
        let sizes = SplitSizes {
            train: 20,
            valid: 5,
            test: 7,
        };
        generate_corpus(dir.path(), &task, sizes).unwrap();
        let all = synth_task_generate(&TaskConfig {
            examples: 32,
            ..task
        })
        .unwrap();
        let train = load_split(dir.path(), "train").unwrap();
        let valid = load_split(dir.path(), "valid").unwrap();
        let test = load_split(dir.path(), "test").unwrap();
        assert_eq!(train, all[..20]);
        assert_eq!(valid, all[20..25]);
        assert_eq!(test, all[25..]);
        let meta = fs::read_to_string(dir.path().join("test.meta")).unwrap();
        assert!(meta.contains("seed=1") && meta.contains("index_range=25..32"));
    }

    #[test]
    fn vocab_comes_from_train_only() {
        let dir = tempfile::tempdir().unwrap();
        generate_corpus(
            dir.path(),
            &TaskConfig::default(),
            SplitSizes {
                train: 10,
                valid: 0,
                test: 3,
            },
        )
        .unwrap();
        let v = corpus_vocab(dir.path(), 200).unwrap();
        let train = load_split(dir.path(), "train").unwrap();
        let rebuilt = Vocabulary::build(train.iter().flat_map(|p| [&p.source, &p.target]), 200).unwrap();
        assert_eq!(v, rebuilt);
        assert!(load_split(dir.path(), "nope").is_err());
    }
}
