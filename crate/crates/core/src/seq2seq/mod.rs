//! A small GRU encoder-decoder with monotonic attention, trained on a
//! synthetic monotonic transduction task.

mod gradcheck_ops;
mod gru;
mod model;
mod task;
mod train;

pub(crate) use gradcheck_ops::gradcheck_instance;
pub use gru::{Gru, GruCache};
pub use model::{
    accumulate_gradient, decode_greedy_hard, decode_greedy_soft, decode_train, default_max_len, encode, task_dims,
    HardDecode, ModelDims, ModelParams, SoftDecode, TrainTrace,
};
pub use task::{generate_task, sample_pair, TaskSpec};
pub use train::{
    clip_global_norm, evaluate, evaluate_params, global_norm, streams, token_matches, train_loop, write_metrics_csv,
    Adam, EvalMetrics, MetricsRow, TrainConfig, METRICS_HEADER,
};
