//! Evaluation harness: synthetic corpora, noise mixing, training-data
//! assembly, drive pairing and precision/recall sweeps.

pub mod corpus;
pub mod drive;
pub mod io;
pub mod metrics;
pub mod train;

pub use corpus::{
    add_noise, synthesize_corpus, CorpusSpec, Segment, TestCorpus, Utterance, UtteranceLabel,
    Variant,
};
pub use drive::{pair_with_drive, DrivePlan};
pub use metrics::{
    double_grid, evaluate, score_corpus, single_grid, summarize, sweep_double, sweep_single,
    Metrics, ScoredUtterance, SweepRow, SweepSummary, VarianceKind,
};
pub use train::{train_models, TrainedModels, TrainingConfig};
