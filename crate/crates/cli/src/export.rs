use std::fs::{self, OpenOptions};
use std::path::Path;

use anyhow::{Context, Result};
use coembed::elbo::ElboBreakdown;
use coembed::eval::Metrics;
use coembed::trainer::TrainHistory;

pub const TRAIN_LOG_FILE: &str = "training_log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const RESULTS_FILE: &str = "results.csv";

/// `epoch` followed by every breakdown field.
pub fn write_training_log(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("{}", path.display()))?;
    let mut header = vec!["epoch"];
    header.extend(ElboBreakdown::FIELDS);
    w.write_record(&header)?;
    for (e, b) in history.breakdowns.iter().enumerate() {
        let mut row = vec![e.to_string()];
        row.extend(b.values().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics(path: &Path, m: &Metrics) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(m)? + "\n").with_context(|| format!("{}", path.display()))
}

/// Append `run_id, task, metric, value` rows, writing a header for a new file.
pub fn append_results(path: &Path, run_id: &str, task: &str, m: &Metrics) -> Result<()> {
    let fresh = !path.exists();
    let f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("{}", path.display()))?;
    let mut w = csv::Writer::from_writer(f);
    if fresh {
        w.write_record(["run_id", "task", "metric", "value"])?;
    }
    for (k, v) in &m.0 {
        w.write_record([run_id, task, k, &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
