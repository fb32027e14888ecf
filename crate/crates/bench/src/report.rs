use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::load::{BenchRun, MetricsReport, Sample};
use crate::BenchError;

pub const CSV_HEADER: &str = "scenario,n_requests,mode,rampup_s,min_ms,max_ms,avg_ms,stddev,throughput_rps,errors";

/// One raw sample line, tagged with the 1-based CSV row it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleLine {
    pub run: usize,
    #[serde(flatten)]
    pub sample: Sample,
}

/// `results.csv` keeps its samples in `results.samples.jsonl`.
pub fn samples_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("samples.jsonl")
}

fn io(e: impl std::fmt::Display) -> BenchError {
    BenchError::Io(e.to_string())
}

/// Appends one row, writing the header first into an empty file, and
/// appends the run's raw samples next to it. Returns the row number.
pub fn export(run: &BenchRun, path: &Path) -> Result<usize, BenchError> {
    let existing = if path.exists() { read_reports(path)?.len() } else { 0 };
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let fresh = file.metadata().map_err(io)?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(&run.report).map_err(io)?;
    w.flush().map_err(io)?;

    let row = existing + 1;
    let mut samples = OpenOptions::new()
        .create(true)
        .append(true)
        .open(samples_path(path))
        .map_err(io)?;
    for s in &run.samples {
        let line = SampleLine { run: row, sample: s.clone() };
        writeln!(samples, "{}", serde_json::to_string(&line).map_err(io)?).map_err(io)?;
    }
    Ok(row)
}

pub fn read_reports(path: &Path) -> Result<Vec<MetricsReport>, BenchError> {
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let header: Vec<&str> = r.headers().map_err(io)?.iter().collect();
    if header.join(",") != CSV_HEADER {
        return Err(BenchError::Io(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(io)).collect()
}

pub fn read_samples(csv_path: &Path) -> Result<Vec<SampleLine>, BenchError> {
    let file = File::open(samples_path(csv_path)).map_err(io)?;
    BufReader::new(file)
        .lines()
        .map(|line| serde_json::from_str(&line.map_err(io)?).map_err(io))
        .collect()
}

/// Fixed-width table for terminals.
pub fn table(reports: &[MetricsReport]) -> String {
    let mut out = format!(
        "{:<22} {:>6} {:<10} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>6}\n",
        "scenario", "n", "mode", "rampup", "min_ms", "max_ms", "avg_ms", "stddev", "rps", "errors"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<22} {:>6} {:<10} {:>6} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>6}\n",
            r.scenario.name(),
            r.n_requests,
            r.mode.to_string(),
            r.rampup_s,
            r.min_ms,
            r.max_ms,
            r.avg_ms,
            r.stddev,
            r.throughput_rps,
            r.errors
        ));
    }
    out
}
