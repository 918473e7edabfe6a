//! Run configuration, training loop, evaluation, comparison and analysis.

mod analyze;
mod compare;
mod config;
mod eval;
mod train;

use std::sync::OnceLock;

use rayon::prelude::*;

pub use analyze::{cmd_analyze, read_grids, AnalysisReport, DumpedGrids, ANALYSIS_FILE, GRIDS_FILE};
pub use compare::{cmd_compare, Better, Column, Comparison, Row};
pub use config::{DataSource, RunConfig};
pub use eval::{cmd_evaluate, evaluate, utterance_grids, CheckpointEval, EvalReport, PathMetrics, ShiftSummary, UtteranceGrids};
pub use train::{
    cmd_train, read_final, read_records, train_with, utterance_gradients, FinalReport, RunInputs, RunRecord,
    TrainLosses, TrainOptions, TrainOutcome, CONFIG_FILE, FINAL_FILE, METRICS_FILE, MODEL_FILE, STATE_FILE,
    STUDENT_FILE,
};

use crate::data::{save_dataset, Split};
use crate::error::Result;

pub const THREADS_ENV: &str = "CTCLAB_THREADS";

static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();

/// Worker count: `CTCLAB_THREADS` if set, else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Ordered parallel map; output order always follows `items`.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    let pool = POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(thread_count())
            .build()
            .expect("thread pool")
    });
    if pool.current_num_threads() == 1 {
        return items.iter().map(f).collect();
    }
    pool.install(|| items.par_iter().map(f).collect())
}

/// Writes `train/`, `dev/` and `test/` datasets for `source` under `out`.
pub fn cmd_gen_data(source: &DataSource, out: &std::path::Path) -> Result<()> {
    for split in Split::ALL {
        save_dataset(&source.load(split)?, &out.join(split.name()))?;
    }
    Ok(())
}
