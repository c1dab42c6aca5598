//! On-disk formats: session specs, scenarios, points tables, datasets and
//! run outputs.
//!
//! A dataset directory holds one subdirectory per session:
//!
//! ```text
//! <data>/<session>/spec.json        SessionSpec
//! <data>/<session>/surveys.json     { "allow_over_budget": bool, "responses": [SurveyResponse] }
//! <data>/<session>/csi_roster.json  Roster
//! <data>/<session>/points.csv       option_id,points
//! ```

use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{read_log, write_log, Event, LogError};
use crate::analytics::{AnalyticsReport, PointsTable, SessionDataset, SurveyResponse};
use crate::model::{validate_session, OptionId, Roster, SessionSpec, SpecError, ValidatedSession};
use crate::sim::{ScenarioConfig, SimulationReport};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    Csv { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Spec {
        path: PathBuf,
        #[source]
        source: SpecError,
    },
    #[error("{path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: LogError,
    },
    #[error("{path}: {reason}")]
    Layout { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FileError + '_ {
    move |source| FileError::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| FileError::Json {
        path: path.to_owned(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Reads and validates a session spec.
pub fn load_session_spec(path: &Path) -> Result<ValidatedSession, FileError> {
    let spec: SessionSpec = read_json(path)?;
    validate_session(spec).map_err(|source| FileError::Spec {
        path: path.to_owned(),
        source,
    })
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, FileError> {
    read_json(path)
}

#[derive(Debug, Serialize, Deserialize)]
struct PointsRow {
    option_id: OptionId,
    points: f64,
}

pub fn parse_points_csv<R: Read>(input: R, path: &Path) -> Result<PointsTable, FileError> {
    let csv_err = |reason: String| FileError::Csv {
        path: path.to_owned(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut table = PointsTable::default();
    for (i, row) in reader.deserialize::<PointsRow>().enumerate() {
        let row = row.map_err(|e| csv_err(e.to_string()))?;
        if !row.points.is_finite() {
            return Err(csv_err(format!("row {}: points must be finite", i + 1)));
        }
        if table.0.insert(row.option_id.clone(), row.points).is_some() {
            return Err(csv_err(format!("row {}: duplicate option {}", i + 1, row.option_id)));
        }
    }
    Ok(table)
}

pub fn read_points_csv(path: &Path) -> Result<PointsTable, FileError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    parse_points_csv(file, path)
}

pub fn write_points_csv(path: &Path, points: &PointsTable) -> Result<(), FileError> {
    let csv_err = |e: csv::Error| FileError::Csv {
        path: path.to_owned(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for (option_id, &points) in &points.0 {
        w.serialize(PointsRow {
            option_id: option_id.clone(),
            points,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct SurveyFile {
    #[serde(default)]
    allow_over_budget: bool,
    responses: Vec<SurveyResponse>,
}

pub fn load_session_dataset(dir: &Path) -> Result<SessionDataset, FileError> {
    let spec = load_session_spec(&dir.join("spec.json"))?;
    let surveys: SurveyFile = read_json(&dir.join("surveys.json"))?;
    let csi_roster: Roster = read_json(&dir.join("csi_roster.json"))?;
    let points = read_points_csv(&dir.join("points.csv"))?;
    Ok(SessionDataset {
        spec,
        surveys: surveys.responses,
        csi_roster,
        points,
        allow_over_budget_surveys: surveys.allow_over_budget,
    })
}

/// Loads every session subdirectory, in name order.
pub fn load_dataset(dir: &Path) -> Result<Vec<SessionDataset>, FileError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(FileError::Layout {
            path: dir.to_owned(),
            reason: "no session directories".into(),
        });
    }
    dirs.iter().map(|d| load_session_dataset(d)).collect()
}

pub fn write_dataset(dir: &Path, sessions: &[SessionDataset]) -> Result<(), FileError> {
    for s in sessions {
        let d = dir.join(&s.spec.session_id);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
        write_json(&d.join("spec.json"), s.spec.spec())?;
        write_json(
            &d.join("surveys.json"),
            &SurveyFile {
                allow_over_budget: s.allow_over_budget_surveys,
                responses: s.surveys.clone(),
            },
        )?;
        write_json(&d.join("csi_roster.json"), &s.csi_roster)?;
        write_points_csv(&d.join("points.csv"), &s.points)?;
    }
    Ok(())
}

/// Writes `path` as JSON and a rendered table next to it with a `.txt`
/// extension.
pub fn write_report(path: &Path, report: &AnalyticsReport) -> Result<PathBuf, FileError> {
    write_json(path, report)?;
    let table = path.with_extension("txt");
    fs::write(&table, report.render_table()).map_err(io_err(&table))?;
    Ok(table)
}

pub fn write_event_log(path: &Path, events: &[Event]) -> Result<(), FileError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    write_log(&mut w, events).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_event_log(path: &Path) -> Result<Vec<Event>, FileError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_log(BufReader::new(file)).map_err(|source| FileError::Log {
        path: path.to_owned(),
        source,
    })
}

/// `<out>/events.ndjson` and `<out>/report.json`.
pub fn write_simulation(out: &Path, events: &[Event], report: &SimulationReport) -> Result<(), FileError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_event_log(&out.join("events.ndjson"), events)?;
    write_json(&out.join("report.json"), report)
}
