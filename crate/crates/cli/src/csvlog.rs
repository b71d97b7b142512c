//! Per-epoch CSV logs and column extraction for downstream commands.

use crate::error::{CliError, Result};
use riskgrad::algorithms::EpochReport;
use std::fs::File;
use std::path::{Path, PathBuf};

/// Bumped whenever [`COLUMNS`] changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: [&str; 16] = [
    "epoch",
    "env_steps",
    "ep_reward_mean",
    "ep_reward_std",
    "ep_cost_mean",
    "ep_utility_mean",
    "objective_est",
    "entropy",
    "trunc_entropy",
    "lambda",
    "kl_stop",
    "steps_taken",
    "clip_frac",
    "vloss_u",
    "vloss_c",
    "wall_s",
];

pub struct CsvLog {
    path: PathBuf,
    writer: csv::Writer<File>,
    record_wall_time: bool,
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

impl CsvLog {
    pub fn create(path: &Path, record_wall_time: bool) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        writer.write_record(COLUMNS).map_err(|e| csv_err(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
            record_wall_time,
        })
    }

    pub fn write(&mut self, report: &EpochReport) -> Result<()> {
        let mut r = report.clone();
        if !self.record_wall_time {
            r.wall_s = 0.0;
        }
        self.writer.serialize(&r).map_err(|e| csv_err(&self.path, e))?;
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// A whole CSV file as a header plus numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| CliError::Csv {
                        path: path.to_path_buf(),
                        message: format!("row {}: '{s}' is not a number", line + 1),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name).ok_or_else(|| CliError::Csv {
            path: self.path.clone(),
            message: format!("missing column '{name}'"),
        })?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}
