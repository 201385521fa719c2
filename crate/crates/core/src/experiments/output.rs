//! CSV tables, gnuplot scripts and the run manifest.
//!
//! Column layouts are fixed per [`CSV_SCHEMA_VERSION`] and recorded in the
//! `manifest.toml` written next to every batch of tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CostRow, DetectionRow, QuantizationRow};
use crate::protocol::PeriodTrace;
use crate::Error;

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the default output directory.
pub const OUT_DIR_ENV: &str = "POWERTALK_OUT_DIR";

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Error> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Error> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotCsvRow {
    pub slot: usize,
    pub subphase: usize,
    pub offset: u32,
    pub receiver: usize,
    pub observation: f64,
    pub cancelled: f64,
    pub theta_hat: usize,
    pub theta_true: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerCsvRow {
    pub der: usize,
    pub der_type: usize,
    pub capacity: f64,
    pub word_index: u64,
    pub quantized: f64,
    /// Believed aggregates of types `0..=der_type`, separated by `;`.
    pub believed_aggregates: String,
    pub policy: f64,
    pub operating_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCsvRow {
    pub schema_version: u32,
    pub seed: u64,
    pub amplitude: f64,
    pub sigma: f64,
    pub demand: f64,
    pub base_cost: f64,
    pub deficit: f64,
    pub surplus: f64,
    pub penalty: f64,
    pub omega: f64,
    pub operating_cost: f64,
    pub overhead: f64,
    pub period_cost: f64,
    pub optimum_omega: f64,
    pub detection_errors: usize,
    pub detections: usize,
}

pub fn trace_tables(trace: &PeriodTrace) -> (Vec<SlotCsvRow>, Vec<DerCsvRow>, SummaryCsvRow) {
    let slots = trace
        .slots
        .iter()
        .flat_map(|s| {
            s.detections.iter().map(move |d| SlotCsvRow {
                slot: s.index,
                subphase: s.subphase,
                offset: s.offset,
                receiver: d.receiver,
                observation: s.observations[d.receiver],
                cancelled: d.cancelled,
                theta_hat: d.theta_hat,
                theta_true: d.theta_true,
            })
        })
        .collect();
    let ders = trace
        .ders
        .iter()
        .map(|d| DerCsvRow {
            der: d.der,
            der_type: d.der_type,
            capacity: d.capacity,
            word_index: d.word_index,
            quantized: d.quantized,
            believed_aggregates: d
                .believed_aggregates
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(";"),
            policy: d.policy,
            operating_power: d.operating_power,
        })
        .collect();
    let o = &trace.outcome;
    let summary = SummaryCsvRow {
        schema_version: CSV_SCHEMA_VERSION,
        seed: trace.seed.unwrap_or_default(),
        amplitude: trace.amplitude,
        sigma: trace.sigma,
        demand: trace.demand,
        base_cost: o.base_cost,
        deficit: o.imbalance.deficit,
        surplus: o.imbalance.surplus,
        penalty: o.imbalance.penalty,
        omega: o.omega,
        operating_cost: trace.operating_cost,
        overhead: trace.overhead,
        period_cost: trace.period_cost,
        optimum_omega: trace.optimum.omega,
        detection_errors: trace.detection_errors(),
        detections: trace.detection_count(),
    };
    (slots, ders, summary)
}

/// Writes `slots.csv`, `ders.csv` and `summary.csv`.
pub fn write_trace(dir: &Path, trace: &PeriodTrace) -> Result<Vec<PathBuf>, Error> {
    fs::create_dir_all(dir)?;
    let (slots, ders, summary) = trace_tables(trace);
    let files = [dir.join("slots.csv"), dir.join("ders.csv"), dir.join("summary.csv")];
    write_csv(&files[0], &slots)?;
    write_csv(&files[1], &ders)?;
    write_csv(&files[2], &[summary])?;
    Ok(files.to_vec())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    csv_schema_version: u32,
    experiment: &'a str,
    scenario: &'a str,
    seed: u64,
    trials: usize,
    files: Vec<String>,
}

pub fn write_manifest(
    dir: &Path,
    experiment: &str,
    scenario: &str,
    seed: u64,
    trials: usize,
    files: &[PathBuf],
) -> Result<PathBuf, Error> {
    let manifest = Manifest {
        csv_schema_version: CSV_SCHEMA_VERSION,
        experiment,
        scenario,
        seed,
        trials,
        files: files
            .iter()
            .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    let text = toml::to_string(&manifest).expect("manifest serializes");
    let path = dir.join("manifest.toml");
    fs::write(&path, text)?;
    Ok(path)
}

fn write_script(dir: &Path, name: &str, body: &str) -> Result<PathBuf, Error> {
    let path = dir.join(name);
    fs::write(&path, body)?;
    Ok(path)
}

pub fn write_quantization(dir: &Path, rows: &[QuantizationRow]) -> Result<Vec<PathBuf>, Error> {
    fs::create_dir_all(dir)?;
    let csv = dir.join("quantization.csv");
    write_csv(&csv, rows)?;
    let gp = write_script(
        dir,
        "quantization.gp",
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'bits per word Q'\n\
         set ylabel 'mean cost'\n\
         plot 'quantization.csv' using 1:2 with linespoints title 'quantized dispatch', \\\n\
         \x20    '' using 1:3 with lines title 'exact dispatch'\n",
    )?;
    Ok(vec![csv, gp])
}

pub fn write_detection(dir: &Path, rows: &[DetectionRow]) -> Result<Vec<PathBuf>, Error> {
    fs::create_dir_all(dir)?;
    let csv = dir.join("detection.csv");
    write_csv(&csv, rows)?;
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.transmitters).collect();
    sizes.dedup();
    let series: Vec<String> = sizes
        .iter()
        .map(|n| {
            format!("'detection.csv' using ($2=={n} ? $1 : 1/0):7 with linespoints title '{n} transmitters'")
        })
        .collect();
    let gp = write_script(
        dir,
        "detection.gp",
        &format!(
            "set datafile separator ','\n\
             set logscale y\n\
             set xlabel 'power deviation budget [W]'\n\
             set ylabel 'P_E'\n\
             plot {}\n",
            series.join(", \\\n     ")
        ),
    )?;
    Ok(vec![csv, gp])
}

pub fn write_cost(dir: &Path, rows: &[CostRow]) -> Result<Vec<PathBuf>, Error> {
    fs::create_dir_all(dir)?;
    let csv = dir.join("cost.csv");
    write_csv(&csv, rows)?;
    let mut durations: Vec<f64> = rows.iter().map(|r| r.slot_duration).collect();
    durations.dedup();
    let series: Vec<String> = durations
        .iter()
        .map(|ts| {
            format!(
                "'cost.csv' using ($1=={ts} ? $2 : 1/0):5 with linespoints title 'T_S = {} ms'",
                ts * 1000.0
            )
        })
        .collect();
    let gp = write_script(
        dir,
        "cost.gp",
        &format!(
            "set datafile separator ','\n\
             set xlabel 'bits per word Q'\n\
             set ylabel 'mean period cost'\n\
             plot {}\n",
            series.join(", \\\n     ")
        ),
    )?;
    Ok(vec![csv, gp])
}
