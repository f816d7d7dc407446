//! Aggregation across trials and the CSV results file.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::trial::TrialResult;

/// One CSV row. Field order is the column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub threads: usize,
    pub range: u64,
    pub mix: String,
    pub trial: usize,
    pub ops: u64,
    pub secs: f64,
    pub throughput: f64,
}

pub const HEADER: &str = "threads,range,mix,trial,ops,secs,throughput";

impl From<&TrialResult> for Row {
    fn from(r: &TrialResult) -> Row {
        Row {
            threads: r.threads,
            range: r.range,
            mix: r.mix.to_string(),
            trial: r.trial,
            ops: r.ops(),
            secs: r.secs,
            throughput: r.throughput,
        }
    }
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

pub fn write_csv_to(out: impl io::Write, rows: &[Row]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and spread of throughput for one (threads, range, mix) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub threads: usize,
    pub range: u64,
    pub mix: String,
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` with fewer than two trials.
    pub stddev: Option<f64>,
}

pub fn mean_stddev(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// Groups rows by cell in first-seen order.
pub fn summarize(rows: &[Row]) -> Vec<Summary> {
    let mut cells: Vec<(usize, u64, &str, Vec<f64>)> = Vec::new();
    for r in rows {
        match cells
            .iter_mut()
            .find(|c| c.0 == r.threads && c.1 == r.range && c.2 == r.mix)
        {
            Some(c) => c.3.push(r.throughput),
            None => cells.push((r.threads, r.range, &r.mix, vec![r.throughput])),
        }
    }
    cells
        .into_iter()
        .map(|(threads, range, mix, xs)| {
            let (mean, stddev) = mean_stddev(&xs);
            Summary {
                threads,
                range,
                mix: mix.to_string(),
                trials: xs.len(),
                mean,
                stddev,
            }
        })
        .collect()
}
