//! Adam with a plateau schedule, early stopping on validation accuracy,
//! evaluation, run directories and grid search.

mod batch;
mod grid;
mod optim;
mod report;
mod trainer;

pub use batch::{batch_pad, batch_pad_tokens, PaddedBatch, PaddedTokens};
pub use grid::{grid_search, Grid, GridPoint, GridResult};
pub use optim::{early_stop, Adam, Scheduler, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, PLATEAU_FACTOR, PLATEAU_PATIENCE};
pub use report::{
    accuracy_table, aggregate, feature_label, mean_std, report_runs, Evaluation, RunRecord, RunReport, REPORT_FILE,
};
pub use trainer::{
    evaluate_checkpoint, evaluate_examples, example_loss_grad, load_trained, log_tsv, model_config_for, prepare,
    run_training, train, EpochLog, Example, RunOutcome, TrainConfig, TrainOutcome, CHECKPOINT_DIR, CONFIG_FILE,
    LOG_FILE,
};
