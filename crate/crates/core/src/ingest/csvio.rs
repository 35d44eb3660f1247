//! CSV readers and writers.
//!
//! Conventions: UTF-8, comma separated, mandatory header row, empty cell means
//! missing. Numbers are written with the shortest representation that parses
//! back to the same `f64`.

use std::collections::HashSet;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::manifest::SourceSpec;
use crate::dataset::{
    ColumnKind, ColumnSpec, Dataset, FeatureTable, RecordKey, Row, StageRecord, DATE_COLUMN,
    PARTICIPANT_COLUMN,
};
use crate::error::{ForgeError, Result};

pub const TIMESTAMP_COLUMN: &str = "timestamp";
const TABLE_FORMAT: &str = "stressforge-table";
const TABLE_VERSION: u32 = 1;
const DATASET_FORMAT: &str = "stressforge-dataset";
const DATASET_VERSION: u32 = 1;
const LABEL_COLUMN: &str = "stress";

pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").ok()
}

/// Accepts `YYYY-MM-DDTHH:MM:SS`, the same with a space, or a bare date, and
/// truncates to the day.
pub fn parse_timestamp_day(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
        .map(|dt| dt.date())
        .or_else(|| parse_date(raw))
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(ForgeError::Cell {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

pub(crate) fn format_cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

/// Loads one source file declared in the manifest.
///
/// The header must list the declared columns by name and order. Rows are
/// keyed by participant and day; a second row for the same key is rejected
/// because sub-daily data has to be aggregated beforehand. Row numbers in
/// errors count data records from 1, header excluded.
pub fn load_source(path: &Path, spec: &SourceSpec) -> Result<FeatureTable> {
    let file_label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| ForgeError::csv(path, e))?;
    let header = reader.headers().map_err(|e| ForgeError::csv(path, e))?.clone();

    let declared = spec.columns.len().max(header.len());
    for position in 0..declared {
        let expected = spec.columns.get(position).map(|c| c.name.as_str());
        let found = header.get(position);
        if expected != found {
            return Err(ForgeError::Schema {
                file: file_label,
                position,
                expected: expected.unwrap_or("<end of header>").to_string(),
                found: found.unwrap_or("<end of header>").to_string(),
            });
        }
    }

    let key_pos = |name: &str| {
        spec.columns
            .iter()
            .position(|c| c.kind == ColumnKind::Key && c.name == name)
    };
    let participant_pos = key_pos(PARTICIPANT_COLUMN).ok_or_else(|| {
        ForgeError::Config(format!("source {} declares no participant_id key", spec.name))
    })?;
    let date_pos = key_pos(DATE_COLUMN);
    let timestamp_pos = key_pos(TIMESTAMP_COLUMN);
    if date_pos.is_none() && timestamp_pos.is_none() {
        return Err(ForgeError::Config(format!(
            "source {} declares neither a date nor a timestamp key",
            spec.name
        )));
    }
    let data_pos: Vec<usize> = spec
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind != ColumnKind::Key)
        .map(|(i, _)| i)
        .collect();

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| ForgeError::csv(path, e))?;
        let participant = record[participant_pos].trim().to_string();
        if participant.is_empty() {
            return Err(ForgeError::Key {
                row: row_no,
                reason: "empty participant id".into(),
            });
        }
        let date = match (date_pos, timestamp_pos) {
            (Some(p), _) => parse_date(&record[p]),
            (None, Some(p)) => parse_timestamp_day(&record[p]),
            (None, None) => unreachable!(),
        }
        .ok_or_else(|| ForgeError::Key {
            row: row_no,
            reason: "unparseable date".into(),
        })?;
        let key = RecordKey::new(participant, date);
        if !seen.insert(key.clone()) {
            return Err(ForgeError::SubDaily {
                file: file_label,
                participant: key.participant_id,
                date: key.date.to_string(),
            });
        }
        let cells = data_pos
            .iter()
            .map(|&p| parse_cell(&record[p], row_no, &spec.columns[p].name))
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row::from_cells(key, cells));
    }
    Ok(FeatureTable::new_unchecked(spec.column_specs(), rows))
}

/// Writes a source file in the layout the manifest declares. Redundant key
/// columns are synthesised: `timestamp` as midnight of the row's day, any
/// other key as the day's ordinal within the participant's rows.
pub fn write_source(path: &Path, spec: &SourceSpec, table: &FeatureTable) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| ForgeError::csv(path, e))?;
    writer
        .write_record(spec.columns.iter().map(|c| c.name.as_str()))
        .map_err(|e| ForgeError::csv(path, e))?;
    let data_index: Vec<Option<usize>> = {
        let mut next = 0;
        spec.columns
            .iter()
            .map(|c| {
                (c.kind != ColumnKind::Key).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    let mut ordinal = 0usize;
    let mut last_participant: Option<&str> = None;
    for row in table.rows() {
        if last_participant != Some(row.key.participant_id.as_str()) {
            ordinal = 0;
            last_participant = Some(row.key.participant_id.as_str());
        }
        ordinal += 1;
        let record: Vec<String> = spec
            .columns
            .iter()
            .zip(&data_index)
            .map(|(c, idx)| match idx {
                Some(j) => format_cell(row.get(*j)),
                None => match c.name.as_str() {
                    PARTICIPANT_COLUMN => row.key.participant_id.clone(),
                    DATE_COLUMN => row.key.date.to_string(),
                    TIMESTAMP_COLUMN => format!("{}T00:00:00", row.key.date),
                    _ => ordinal.to_string(),
                },
            })
            .collect();
        writer
            .write_record(&record)
            .map_err(|e| ForgeError::csv(path, e))?;
    }
    writer.flush().map_err(|e| ForgeError::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct TableSchema {
    format: String,
    version: u32,
    columns: Vec<ColumnSpec>,
    #[serde(default)]
    provenance: Vec<StageRecord>,
}

/// Path of the JSON schema file written next to a table CSV.
pub fn schema_path(table_path: &Path) -> PathBuf {
    let mut name = table_path.as_os_str().to_owned();
    name.push(".schema.json");
    PathBuf::from(name)
}

/// Writes a table as CSV plus a `.schema.json` companion holding column
/// metadata and provenance.
pub fn write_table(path: &Path, table: &FeatureTable) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| ForgeError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| ForgeError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let header: Vec<&str> = [PARTICIPANT_COLUMN, DATE_COLUMN]
        .into_iter()
        .chain(table.columns().iter().map(|c| c.name.as_str()))
        .collect();
    writer
        .write_record(&header)
        .map_err(|e| ForgeError::csv(path, e))?;
    for row in table.rows() {
        let record: Vec<String> = [row.key.participant_id.clone(), row.key.date.to_string()]
            .into_iter()
            .chain(row.cells().map(format_cell))
            .collect();
        writer
            .write_record(&record)
            .map_err(|e| ForgeError::csv(path, e))?;
    }
    writer.flush().map_err(|e| ForgeError::io(path, e))?;

    let schema = TableSchema {
        format: TABLE_FORMAT.into(),
        version: TABLE_VERSION,
        columns: table.columns().to_vec(),
        provenance: table.provenance().to_vec(),
    };
    let sp = schema_path(path);
    let text = serde_json::to_string_pretty(&schema).map_err(|e| ForgeError::json(&sp, e))?;
    fs::write(&sp, text + "\n").map_err(|e| ForgeError::io(&sp, e))
}

pub fn read_table(path: &Path) -> Result<FeatureTable> {
    let sp = schema_path(path);
    let text = fs::read_to_string(&sp).map_err(|e| ForgeError::io(&sp, e))?;
    let schema: TableSchema = serde_json::from_str(&text).map_err(|e| ForgeError::json(&sp, e))?;
    if schema.format != TABLE_FORMAT || schema.version != TABLE_VERSION {
        return Err(ForgeError::ModelFormat {
            format: schema.format,
            version: schema.version,
        });
    }

    let mut reader = csv::Reader::from_path(path).map_err(|e| ForgeError::csv(path, e))?;
    let header = reader.headers().map_err(|e| ForgeError::csv(path, e))?.clone();
    let expected: Vec<&str> = [PARTICIPANT_COLUMN, DATE_COLUMN]
        .into_iter()
        .chain(schema.columns.iter().map(|c| c.name.as_str()))
        .collect();
    for position in 0..expected.len().max(header.len()) {
        let (e, f) = (expected.get(position).copied(), header.get(position));
        if e != f {
            return Err(ForgeError::Schema {
                file: path.display().to_string(),
                position,
                expected: e.unwrap_or("<end of header>").to_string(),
                found: f.unwrap_or("<end of header>").to_string(),
            });
        }
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| ForgeError::csv(path, e))?;
        let date = parse_date(&record[1]).ok_or_else(|| ForgeError::Key {
            row: row_no,
            reason: "unparseable date".into(),
        })?;
        let cells = schema
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| parse_cell(&record[j + 2], row_no, &c.name))
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row::from_cells(RecordKey::new(&record[0], date), cells));
    }
    Ok(FeatureTable::new_unchecked(schema.columns, rows).with_provenance(schema.provenance))
}

#[derive(Serialize, Deserialize)]
struct DatasetSchema {
    format: String,
    version: u32,
    features: Vec<ColumnSpec>,
}

#[derive(Deserialize)]
struct FormatProbe {
    format: String,
}

fn header_matches(path: &Path, header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    for position in 0..expected.len().max(header.len()) {
        let (e, f) = (expected.get(position).copied(), header.get(position));
        if e != f {
            return Err(ForgeError::Schema {
                file: path.display().to_string(),
                position,
                expected: e.unwrap_or("<end of header>").to_string(),
                found: f.unwrap_or("<end of header>").to_string(),
            });
        }
    }
    Ok(())
}

/// Writes a model-ready dataset (no keys, label last as `stress`) plus a
/// `.schema.json` companion with feature modalities. Used for data that
/// contains synthetic rows, which have no participant or date.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| ForgeError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| ForgeError::io(path, e))?;
    let mut writer = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let header: Vec<&str> = data
        .feature_names
        .iter()
        .map(String::as_str)
        .chain([LABEL_COLUMN])
        .collect();
    writer
        .write_record(&header)
        .map_err(|e| ForgeError::csv(path, e))?;
    for (row, label) in data.features.rows().into_iter().zip(&data.labels) {
        let record: Vec<String> = row
            .iter()
            .map(|v| format_cell(Some(*v)))
            .chain([label.to_string()])
            .collect();
        writer
            .write_record(&record)
            .map_err(|e| ForgeError::csv(path, e))?;
    }
    writer.flush().map_err(|e| ForgeError::io(path, e))?;

    let schema = DatasetSchema {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        features: data
            .feature_names
            .iter()
            .zip(&data.modalities)
            .map(|(n, m)| ColumnSpec::feature(n.clone(), *m))
            .collect(),
    };
    let sp = schema_path(path);
    let text = serde_json::to_string_pretty(&schema).map_err(|e| ForgeError::json(&sp, e))?;
    fs::write(&sp, text + "\n").map_err(|e| ForgeError::io(&sp, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let sp = schema_path(path);
    let text = fs::read_to_string(&sp).map_err(|e| ForgeError::io(&sp, e))?;
    let schema: DatasetSchema = serde_json::from_str(&text).map_err(|e| ForgeError::json(&sp, e))?;
    if schema.format != DATASET_FORMAT || schema.version != DATASET_VERSION {
        return Err(ForgeError::ModelFormat {
            format: schema.format,
            version: schema.version,
        });
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| ForgeError::csv(path, e))?;
    let header = reader.headers().map_err(|e| ForgeError::csv(path, e))?.clone();
    let expected: Vec<&str> = schema
        .features
        .iter()
        .map(|c| c.name.as_str())
        .chain([LABEL_COLUMN])
        .collect();
    header_matches(path, &header, &expected)?;

    let p = schema.features.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| ForgeError::csv(path, e))?;
        for (j, c) in schema.features.iter().enumerate() {
            let v = parse_cell(&record[j], row_no, &c.name)?
                .ok_or(ForgeError::NonFinite { row: i, column: j })?;
            values.push(v);
        }
        let raw = parse_cell(&record[p], row_no, LABEL_COLUMN)?.unwrap_or(f64::NAN);
        let label = crate::dataset::StressLabel::from_value(raw)
            .ok_or(ForgeError::InvalidLabel { row: i, value: raw })?;
        labels.push(label.class() as u32);
    }
    let features = ndarray::Array2::from_shape_vec((labels.len(), p), values)
        .map_err(|_| ForgeError::Arity { expected: p, found: 0 })?;
    Dataset::new(
        schema.features.iter().map(|c| c.name.clone()).collect(),
        schema.features.iter().map(|c| c.modality).collect(),
        features,
        labels,
    )
}

/// Reads either a keyed table (converted with [`Dataset::from_table`]) or a
/// dataset file, deciding by the companion schema's format.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let sp = schema_path(path);
    let text = fs::read_to_string(&sp).map_err(|e| ForgeError::io(&sp, e))?;
    let probe: FormatProbe = serde_json::from_str(&text).map_err(|e| ForgeError::json(&sp, e))?;
    if probe.format == TABLE_FORMAT {
        Dataset::from_table(&read_table(path)?)
    } else {
        read_dataset(path)
    }
}
