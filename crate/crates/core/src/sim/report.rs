//! CSV outputs. Every file starts with a `#` schema line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::episode::EpisodeRecord;
use super::monte_carlo::MonteCarloSummary;
use crate::ekf::Matrix6;
use crate::ins::NavState;

pub const EPISODE_SCHEMA: &str = "# terranav episode schema v1";
pub const VISION_SCHEMA: &str = "# terranav vision schema v1";
pub const MC_SCHEMA: &str = "# terranav mc schema v1";
pub const MATRIX_SCHEMA: &str = "# terranav matrix6 schema v1";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("matrix file: {0}")]
    Matrix(String),
}

fn nav_header(prefix: &str) -> impl Iterator<Item = String> + '_ {
    ["x", "y", "z", "vx", "vy", "vz", "phi", "theta", "psi"]
        .into_iter()
        .map(move |c| format!("{prefix}_{c}"))
}

fn nav_fields(s: &NavState) -> [f64; 9] {
    let a = s.attitude;
    [
        s.position.x,
        s.position.y,
        s.position.z,
        s.velocity.x,
        s.velocity.y,
        s.velocity.z,
        a.roll,
        a.pitch,
        a.yaw,
    ]
}

fn csv_writer<W: Write>(mut out: W, schema: &str) -> io::Result<csv::Writer<W>> {
    writeln!(out, "{schema}")?;
    Ok(csv::Writer::from_writer(out))
}

pub fn write_episode<W: Write>(out: W, record: &EpisodeRecord) -> Result<(), ReportError> {
    let mut w = csv_writer(out, EPISODE_SCHEMA)?;
    let mut header = vec!["t".to_string()];
    header.extend(nav_header("true"));
    header.extend(nav_header("drift"));
    header.extend(nav_header("corrected"));
    header.extend((1..=15).map(|i| format!("P_diag_{i}")));
    w.write_record(&header)?;
    for s in &record.steps {
        let mut row = vec![s.t.to_string()];
        for state in [&s.truth, &s.drift, &s.corrected] {
            row.extend(nav_fields(state).iter().map(f64::to_string));
        }
        row.extend(s.p_diag.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn optional6(v: &Option<nalgebra::SVector<f64, 6>>) -> Vec<String> {
    match v {
        Some(v) => v.iter().map(f64::to_string).collect(),
        None => vec![String::new(); 6],
    }
}

pub fn write_vision<W: Write>(out: W, record: &EpisodeRecord) -> Result<(), ReportError> {
    let mut w = csv_writer(out, VISION_SCHEMA)?;
    let mut header: Vec<String> = ["t", "iterations", "residual_norm", "converged", "rank", "used"]
        .into_iter()
        .map(String::from)
        .collect();
    header.extend((1..=6).map(|i| format!("innovation_{i}")));
    header.extend(["err_x", "err_y", "err_z", "err_phi", "err_theta", "err_psi"].map(String::from));
    header.push("note".into());
    w.write_record(&header)?;
    for v in &record.vision {
        let mut row = vec![
            v.t.to_string(),
            v.iterations.to_string(),
            v.residual_norm.to_string(),
            v.converged.to_string(),
            v.rank.to_string(),
            v.used.to_string(),
        ];
        row.extend(optional6(&v.innovation));
        row.extend(optional6(&v.vision_error));
        row.push(v.note.clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_monte_carlo<W: Write>(out: W, summary: &MonteCarloSummary) -> Result<(), ReportError> {
    let mut w = csv_writer(out, MC_SCHEMA)?;
    w.write_record(["t", "rms_drift_pos", "rms_corrected_pos", "rms_drift_vel", "rms_corrected_vel"])?;
    for i in 0..summary.times.len() {
        w.write_record([
            summary.times[i].to_string(),
            summary.rms_drift_pos[i].to_string(),
            summary.rms_corrected_pos[i].to_string(),
            summary.rms_drift_vel[i].to_string(),
            summary.rms_corrected_vel[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix6<W: Write>(out: W, m: &Matrix6) -> Result<(), ReportError> {
    let mut w = csv_writer(out, MATRIX_SCHEMA)?;
    w.write_record((1..=6).map(|i| format!("c{i}")))?;
    for r in 0..6 {
        w.write_record((0..6).map(|c| m[(r, c)].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix6(text: &str) -> Result<Matrix6, ReportError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let mut m = Matrix6::zeros();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if r >= 6 || record.len() != 6 {
            return Err(ReportError::Matrix("expected 6 rows of 6 values".into()));
        }
        for (c, field) in record.iter().enumerate() {
            m[(r, c)] = field
                .trim()
                .parse()
                .map_err(|_| ReportError::Matrix(format!("row {}, column {}: not a number: {field:?}", r + 1, c + 1)))?;
        }
        rows += 1;
    }
    if rows != 6 {
        return Err(ReportError::Matrix(format!("expected 6 rows, found {rows}")));
    }
    Ok(m)
}

pub fn load_matrix6(path: impl AsRef<Path>) -> Result<Matrix6, ReportError> {
    read_matrix6(&std::fs::read_to_string(path)?)
}

/// Writes `episode.csv` and `vision.csv` into `dir`.
pub fn write_episode_files(dir: impl AsRef<Path>, record: &EpisodeRecord) -> Result<(), ReportError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_episode(BufWriter::new(File::create(dir.join("episode.csv"))?), record)?;
    write_vision(BufWriter::new(File::create(dir.join("vision.csv"))?), record)?;
    Ok(())
}
