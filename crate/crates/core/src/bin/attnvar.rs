use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use attnvar::data::TaskConfig;
use attnvar::harness::{
    analyze_checkpoint, evaluate_checkpoint, generate_corpus, run_ablation, train_run, Corpus, SplitSizes,
    TrainConfig,
};

#[derive(Parser)]
#[command(name = "attnvar", version, about = "Pointer-generator with attention refinement and variance losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic salient-copy corpus
    GenData(GenData),
    /// Train one seed (both phases) and evaluate it on the test split
    Train(Train),
    /// Decode a split with a checkpoint and write metrics.csv + decoded.txt
    Evaluate(Eval),
    /// Decode a split and write only decoded.txt
    Decode(Eval),
    /// Write attention dumps and per-example attention statistics
    Analyze(Analyze),
    /// Train and evaluate the four ablation variants over all seeds
    Ablation(Ablation),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    train: usize,
    #[arg(long, default_value_t = 200)]
    valid: usize,
    #[arg(long, default_value_t = 200)]
    test: usize,
    #[arg(long, default_value_t = 0.3)]
    salient_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    oov_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    distractor_rate: f64,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file; defaults are used for missing keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value overrides, applied after the file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
            None => TrainConfig::default(),
        };
        for o in &self.overrides {
            let Some((k, v)) = o.split_once('=') else {
                bail!("override {o:?} is not key=value");
            };
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the first configured seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "model")]
    name: String,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "model")]
    name: String,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct Analyze {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    out: PathBuf,
    /// Only the first N examples
    #[arg(long)]
    limit: Option<usize>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct Ablation {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

fn print_file(path: &Path) -> Result<()> {
    print!("{}", fs::read_to_string(path)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData(a) => {
            let task = TaskConfig {
                seed: a.seed,
                salient_fraction: a.salient_fraction,
                oov_rate: a.oov_rate,
                distractor_rate: a.distractor_rate,
                ..TaskConfig::default()
            };
            let sizes = SplitSizes {
                train: a.train,
                valid: a.valid,
                test: a.test,
            };
            generate_corpus(&a.out, &task, sizes)?;
            eprintln!("wrote corpus to {}", a.out.display());
        }
        Command::Train(a) => {
            let cfg = a.cfg.load()?;
            let seed = a.seed.unwrap_or(cfg.seeds[0]);
            let corpus = Corpus::load(&a.corpus, cfg.vocab_size)?;
            let run = train_run(&cfg, seed, &corpus, &a.out, &a.name)?;
            print_file(&run.dir.join("metrics.csv"))?;
        }
        Command::Evaluate(a) => {
            let cfg = a.cfg.load()?;
            evaluate_checkpoint(&a.checkpoint, &a.corpus, &a.split, &cfg, &a.name, &a.out)?;
            print_file(&a.out.join("metrics.csv"))?;
        }
        Command::Decode(a) => {
            let cfg = a.cfg.load()?;
            let eval = evaluate_checkpoint(&a.checkpoint, &a.corpus, &a.split, &cfg, &a.name, &a.out)?;
            fs::remove_file(a.out.join("metrics.csv"))?;
            eprintln!(
                "decoded {} examples to {}",
                eval.decoded.len(),
                a.out.join("decoded.txt").display()
            );
        }
        Command::Analyze(a) => {
            let cfg = a.cfg.load()?;
            let eval = analyze_checkpoint(&a.checkpoint, &a.corpus, &a.split, &cfg, a.limit, &a.out)?;
            eprintln!("wrote {} attention dumps under {}", eval.decoded.len(), a.out.display());
        }
        Command::Ablation(a) => {
            let cfg = a.cfg.load()?;
            let corpus = Corpus::load(&a.corpus, cfg.vocab_size)?;
            let table = run_ablation(&cfg, &corpus, &a.out)?;
            print!("{}", table.to_csv());
        }
    }
    Ok(())
}
