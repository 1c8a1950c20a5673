//! File formats.
//!
//! Counts are stored as CSV with the header `bin_index,n_hh,n_hv,n_vh,n_vv`
//! next to a JSON sidecar `<stem>.meta.json` carrying [`RunMetadata`].
//! Estimates are JSON lines, curves and tables are CSV with unit-suffixed
//! column names.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{CoincidenceSet, RunMetadata};

pub const COUNTS_HEADER: [&str; 5] = ["bin_index", "n_hh", "n_hv", "n_vh", "n_vv"];

/// `dir/run.csv` → `dir/run.meta.json`
pub fn sidecar_path(counts: &Path) -> PathBuf {
    let stem = counts
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    counts.with_file_name(format!("{stem}.meta.json"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Input(format!("{}: {other:?}", path.display())),
    }
}

/// Writes the counts CSV and its metadata sidecar; returns the sidecar path.
pub fn write_counts(path: &Path, set: &CoincidenceSet) -> Result<PathBuf> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(COUNTS_HEADER).map_err(|e| csv_error(path, e))?;
    for (i, b) in set.bins().iter().enumerate() {
        w.write_record([i.to_string(), b[0].to_string(), b[1].to_string(), b[2].to_string(), b[3].to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let sidecar = sidecar_path(path);
    write_json(&sidecar, set.metadata())?;
    Ok(sidecar)
}

/// Reads a counts CSV and its sidecar. Every rejection names the file and
/// the offending field.
pub fn read_counts(path: &Path) -> Result<CoincidenceSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let name = path.display().to_string();
    let schema = |field: &str, message: String| Error::Schema {
        path: name.clone(),
        field: field.to_string(),
        message,
    };
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Input(format!("{name}: empty counts file")));
    }
    for (i, expected) in COUNTS_HEADER.iter().enumerate() {
        match headers.get(i) {
            Some(h) if h.trim() == *expected => {}
            Some(h) => return Err(schema(expected, format!("expected column `{expected}` at position {}, found `{h}`", i + 1))),
            None => return Err(schema(expected, "missing column".into())),
        }
    }
    if headers.len() > COUNTS_HEADER.len() {
        return Err(schema(&headers[COUNTS_HEADER.len()], "unexpected extra column".into()));
    }

    let mut bins = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = row + 2;
        let mut values = [0u64; 5];
        for (k, field) in COUNTS_HEADER.iter().enumerate() {
            let raw = record.get(k).ok_or_else(|| schema(field, format!("line {line}: missing value")))?;
            values[k] = raw
                .trim()
                .parse()
                .map_err(|_| schema(field, format!("line {line}: `{raw}` is not a non-negative integer")))?;
        }
        if values[0] != row as u64 {
            return Err(schema(
                "bin_index",
                format!("line {line}: expected bin {row}, found {}", values[0]),
            ));
        }
        bins.push([values[1], values[2], values[3], values[4]]);
    }
    if bins.is_empty() {
        return Err(Error::Input(format!("{name}: counts file has no bins")));
    }
    let metadata = read_metadata(&sidecar_path(path))?;
    CoincidenceSet::new(bins, metadata).map_err(|e| match e {
        Error::Input(m) => Error::Input(format!("{name}: {m}")),
        other => other,
    })
}

/// Pulls the field name out of serde's "missing field `x`" style messages.
fn field_from_message(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

pub fn read_metadata(path: &Path) -> Result<RunMetadata> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta: RunMetadata = serde_json::from_str(&text).map_err(|e| {
        let message = e.to_string();
        Error::Schema {
            path: path.display().to_string(),
            field: field_from_message(&message).unwrap_or_else(|| "metadata".into()),
            message,
        }
    })?;
    let schema = |field: &str, message: String| Error::Schema {
        path: path.display().to_string(),
        field: field.into(),
        message,
    };
    if !(meta.visibility > 0.0 && meta.visibility <= 1.0) {
        return Err(schema("visibility", format!("must lie in (0, 1], got {}", meta.visibility)));
    }
    if !(meta.bin_duration_s > 0.0) {
        return Err(schema("bin_duration_s", format!("must be positive, got {}", meta.bin_duration_s)));
    }
    if !meta.bias_phase_rad.is_finite() {
        return Err(schema("bias_phase_rad", "must be finite".into()));
    }
    Ok(meta)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        let message = e.to_string();
        Error::Schema {
            path: path.display().to_string(),
            field: field_from_message(&message).unwrap_or_else(|| "document".into()),
            message,
        }
    })
}

/// One compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Schema {
            path: path.display().to_string(),
            field: field_from_message(&e.to_string()).unwrap_or_else(|| format!("line {}", i + 1)),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Header taken from the field names of `T`.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}
