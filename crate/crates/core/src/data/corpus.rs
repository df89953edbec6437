//! Corpus files: one example per line, `source<TAB>target`, tokens
//! separated by single spaces.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::data::synth::{SynthPair, TaskConfig};
use crate::error::{Error, Result};

pub fn write_corpus(path: &Path, pairs: &[SynthPair]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for p in pairs {
        writeln!(out, "{}\t{}", p.source.join(" "), p.target.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<SynthPair>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut pairs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (src, tgt) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("{}:{}: missing tab", path.display(), n + 1)))?;
        let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        let pair = SynthPair {
            source: split(src),
            target: split(tgt),
        };
        if pair.source.is_empty() {
            return Err(Error::Parse(format!("{}:{}: empty source", path.display(), n + 1)));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Sidecar `key=value` lines describing how a corpus was generated.
pub fn task_config_echo(cfg: &TaskConfig, split: &str) -> String {
    format!(
        "split={split}\nseed={}\nexamples={}\nsource_len={}-{}\nsegment_len={}-{}\ntarget_len={}-{}\nsalient_fraction={}\noov_rate={}\ndistractor_rate={}\nword_pool={}\n",
        cfg.seed,
        cfg.examples,
        cfg.source_len.0,
        cfg.source_len.1,
        cfg.segment_len.0,
        cfg.segment_len.1,
        cfg.target_len.0,
        cfg.target_len.1,
        cfg.salient_fraction,
        cfg.oov_rate,
        cfg.distractor_rate,
        cfg.word_pool,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        let pairs = crate::data::synth_task_generate(&TaskConfig {
            examples: 5,
            ..TaskConfig::default()
        })
        .unwrap();
        write_corpus(&path, &pairs).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), pairs);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().all(|l| l.matches('\t').count() == 1));
    }

    #[test]
    fn missing_tab_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        fs::write(&path, "a b c\n").unwrap();
        assert!(matches!(read_corpus(&path), Err(Error::Parse(_))));
    }
}
