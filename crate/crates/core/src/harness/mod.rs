//! Training, evaluation, attention analysis and ablation runs.

mod ablation;
mod config;
mod dataset;
mod evaluate;
mod run;
mod train;

pub use ablation::{run_ablation, AblationRow, AblationTable, Variant};
pub use config::TrainConfig;
pub use dataset::{
    corpus_vocab, default_decode_len, generate_corpus, load_split, split_path, to_examples, SplitSizes, SPLITS,
};
pub use evaluate::{
    attention_dump, attention_stats_line, check_vocab, decode_all, decode_one, evaluate_examples, metrics_csv,
    parse_attention_dump, score, write_attention_dumps, DecodedExample, Evaluation, MetricsRow,
    ATTENTION_STATS_HEADER, METRICS_HEADER,
};
pub use run::{
    analyze_checkpoint, decode_config, evaluate_checkpoint, load_for_eval, train_run, Corpus, RunSummary,
    FINAL_CHECKPOINT, PRETRAIN_CHECKPOINT,
};
pub use train::{
    clip_global_norm, example_gradients, example_mle, greedy_rouge1, mean_mle, train, Adagrad, LogRow, Phase,
    RunLog, TrainOutcome, RUN_LOG_HEADER,
};
