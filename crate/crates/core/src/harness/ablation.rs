use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::Result;
use crate::harness::config::TrainConfig;
use crate::harness::evaluate::{MetricsRow, METRICS_HEADER};
use crate::harness::run::{train_run, Corpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Pgn,
    Aru,
    AruLocal,
    AruLocalGlobal,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Pgn, Variant::Aru, Variant::AruLocal, Variant::AruLocalGlobal];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pgn => "pgn",
            Variant::Aru => "pgn+aru",
            Variant::AruLocal => "pgn+aru+local",
            Variant::AruLocalGlobal => "pgn+aru+local+global",
        }
    }

    /// The base config with refinement and loss weights set for this
    /// variant. Enabled losses keep the base weights.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let (aru, local, global) = match self {
            Variant::Pgn => (false, false, false),
            Variant::Aru => (true, false, false),
            Variant::AruLocal => (true, true, false),
            Variant::AruLocalGlobal => (true, true, true),
        };
        TrainConfig {
            use_refinement: aru,
            lambda_local: if local { base.lambda_local } else { 0.0 },
            lambda_global: if global { base.lambda_global } else { 0.0 },
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: Variant,
    /// `None` on mean rows
    pub seed: Option<u64>,
    pub metrics: MetricsRow,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn mean(&self, v: Variant) -> &MetricsRow {
        &self
            .rows
            .iter()
            .find(|r| r.variant == v && r.seed.is_none())
            .expect("mean row for every variant")
            .metrics
    }

    pub fn per_seed(&self, v: Variant) -> impl Iterator<Item = &AblationRow> {
        self.rows.iter().filter(move |r| r.variant == v && r.seed.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("seed,{METRICS_HEADER}\n");
        for r in &self.rows {
            let seed = r.seed.map_or_else(|| "mean".to_string(), |v| v.to_string());
            s.push_str(&format!("{seed},{}\n", r.metrics.csv_line()));
        }
        s
    }
}

/// Trains every variant for every configured seed (runs execute in
/// parallel), evaluates on the test split, and writes `ablation.csv`.
/// Per-run artifacts go to `out/<variant>/seed-<n>/`.
pub fn run_ablation(base: &TrainConfig, corpus: &Corpus, out: &Path) -> Result<AblationTable> {
    base.validate()?;
    let jobs: Vec<(Variant, u64)> = Variant::ALL
        .iter()
        .flat_map(|&v| base.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<MetricsRow> = jobs
        .par_iter()
        .map(|&(v, seed)| {
            let dir = out.join(v.name()).join(format!("seed-{seed}"));
            train_run(&v.apply(base), seed, corpus, &dir, v.name()).map(|r| r.evaluation.row)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(jobs.len() + Variant::ALL.len());
    for v in Variant::ALL {
        let mine: Vec<(u64, &MetricsRow)> = jobs
            .iter()
            .zip(&results)
            .filter(|((jv, _), _)| *jv == v)
            .map(|((_, s), m)| (*s, m))
            .collect();
        for (seed, m) in &mine {
            rows.push(AblationRow {
                variant: v,
                seed: Some(*seed),
                metrics: (*m).clone(),
            });
        }
        let refs: Vec<&MetricsRow> = mine.iter().map(|(_, m)| *m).collect();
        rows.push(AblationRow {
            variant: v,
            seed: None,
            metrics: MetricsRow::average(&refs, v.name(), "test"),
        });
    }
    let table = AblationTable { rows };
    fs::create_dir_all(out)?;
    fs::write(out.join("ablation.csv"), table.to_csv())?;
    Ok(table)
}
