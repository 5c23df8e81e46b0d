use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::OutputFormat;
use crate::experiments::Record;

/// Streams records to `<dir>/<stem>.csv` or `<dir>/<stem>.jsonl`, flushing
/// after every record so partial runs leave usable files.
pub enum RecordWriter {
    Csv(csv::Writer<File>),
    Json(BufWriter<File>),
}

impl RecordWriter {
    pub fn create(dir: &Path, stem: &str, format: OutputFormat) -> std::io::Result<(Self, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        Ok(match format {
            OutputFormat::Csv => {
                let path = dir.join(format!("{stem}.csv"));
                (RecordWriter::Csv(csv::Writer::from_path(&path).map_err(csv_io)?), path)
            }
            OutputFormat::Json => {
                let path = dir.join(format!("{stem}.jsonl"));
                (RecordWriter::Json(BufWriter::new(File::create(&path)?)), path)
            }
        })
    }

    pub fn write(&mut self, record: &Record) -> std::io::Result<()> {
        match self {
            RecordWriter::Csv(w) => {
                w.serialize(record).map_err(csv_io)?;
                w.flush()
            }
            RecordWriter::Json(w) => {
                serde_json::to_writer(&mut *w, record)?;
                w.write_all(b"\n")?;
                w.flush()
            }
        }
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::Other, e)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()
}

/// Reads two numeric columns from a CSV file with headers.
pub fn read_columns(path: &Path, x: &str, y: &str) -> anyhow::Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow::anyhow!("{} has no column {name:?}", path.display()))
    };
    let (ix, iy) = (find(x)?, find(y)?);
    let mut out = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let parse = |i: usize| -> anyhow::Result<f64> {
            row[i].parse().map_err(|e| anyhow::anyhow!("row {}: {:?} is not a number: {e}", line + 2, &row[i]))
        };
        out.push((parse(ix)?, parse(iy)?));
    }
    Ok(out)
}
