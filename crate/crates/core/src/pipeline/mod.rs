//! Stage orchestration: configuration, the offline clustering stage,
//! training, evaluation and artifact export.

mod config;
mod metrics;
mod run;

pub use config::RunConfig;
pub use metrics::{
    evaluate, inter_class_distance, intra_class_distance, read_metrics, CurriculumSnapshot, MetricsRecord,
    MetricsWriter,
};
pub use run::{
    anchor_plans, cmd_cluster, cmd_eval, cmd_export_repr, cmd_graph, cmd_synth, cmd_train, load_datasets, offline,
    run_in_memory, split_datasets, stratified_split, Datasets, EvalReport, RunOutcome, Trainer,
};
