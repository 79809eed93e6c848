//! Line-delimited record IO shared by every stage: JSON lines or CSV with a
//! header row. Readers skip and count malformed records; only stream-level
//! failures are fatal.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown format `{0}` (expected `jsonl` or `csv`)")]
    UnknownFormat(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogFormat {
    #[default]
    Jsonl,
    Csv,
}

impl LogFormat {
    pub fn extension(self) -> &'static str {
        match self {
            LogFormat::Jsonl => "jsonl",
            LogFormat::Csv => "csv",
        }
    }

    /// Guess from a file extension, defaulting to JSON lines.
    pub fn from_path(path: &std::path::Path) -> LogFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => LogFormat::Csv,
            _ => LogFormat::Jsonl,
        }
    }
}

impl FromStr for LogFormat {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Ok(LogFormat::Jsonl),
            "csv" => Ok(LogFormat::Csv),
            other => Err(IoError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for LogFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// A flat, serializable record with a fixed column order.
pub trait Row: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

/// Records parsed from a stream plus the malformed-line tally.
#[derive(Debug, Clone, Default)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub malformed: usize,
    /// First few `(line number, reason)` pairs for diagnostics.
    pub errors: Vec<(usize, String)>,
}

const MAX_REPORTED_ERRORS: usize = 10;

impl<T> Parsed<T> {
    fn reject(&mut self, line: usize, reason: String) {
        self.malformed += 1;
        if self.errors.len() < MAX_REPORTED_ERRORS {
            self.errors.push((line, reason));
        }
    }
}

/// Read rows and convert each with `validate`; rows failing either step are
/// counted as malformed.
pub fn read_validated<R, T, U, F>(reader: R, format: LogFormat, mut validate: F) -> Result<Parsed<U>, IoError>
where
    R: BufRead,
    T: DeserializeOwned,
    F: FnMut(T) -> Result<U, String>,
{
    let mut out = Parsed { items: Vec::new(), malformed: 0, errors: Vec::new() };
    match format {
        LogFormat::Jsonl => {
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                let trimmed = line.trim();
                if trimmed.is_empty() {
                    continue;
                }
                match serde_json::from_str::<T>(trimmed) {
                    Ok(row) => match validate(row) {
                        Ok(v) => out.items.push(v),
                        Err(e) => out.reject(i + 1, e),
                    },
                    Err(e) => out.reject(i + 1, e.to_string()),
                }
            }
        }
        LogFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
            for (i, rec) in rdr.deserialize::<T>().enumerate() {
                match rec {
                    Ok(row) => match validate(row) {
                        Ok(v) => out.items.push(v),
                        Err(e) => out.reject(i + 2, e),
                    },
                    Err(e) if e.is_io_error() => return Err(e.into()),
                    Err(e) => out.reject(i + 2, e.to_string()),
                }
            }
        }
    }
    Ok(out)
}

/// Write rows in the given format. CSV always carries the header, even for an
/// empty table; JSON lines omit `null` fields.
pub fn write_rows<W, T, I>(writer: W, format: LogFormat, rows: I) -> Result<(), IoError>
where
    W: Write,
    T: Row,
    I: IntoIterator<Item = T>,
{
    match format {
        LogFormat::Jsonl => {
            let mut w = std::io::BufWriter::new(writer);
            for row in rows {
                let mut value = serde_json::to_value(&row)?;
                if let serde_json::Value::Object(map) = &mut value {
                    map.retain(|_, v| !v.is_null());
                }
                serde_json::to_writer(&mut w, &value)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        LogFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
            w.write_record(T::HEADER)?;
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Pair {
        a: i64,
        b: Option<String>,
    }

    impl Row for Pair {
        const HEADER: &'static [&'static str] = &["a", "b"];
    }

    #[test]
    fn unknown_format_is_config_error() {
        assert!(matches!("parquet".parse::<LogFormat>(), Err(IoError::UnknownFormat(_))));
        assert_eq!("CSV".parse::<LogFormat>().unwrap(), LogFormat::Csv);
    }

    #[test]
    fn jsonl_skips_corrupt_lines() {
        let data = "{\"a\":1}\n{not json\n{\"a\":3,\"b\":\"x\"}\n";
        let p = read_validated::<_, Pair, _, _>(data.as_bytes(), LogFormat::Jsonl, Ok).unwrap();
        assert_eq!(p.items.len(), 2);
        assert_eq!(p.malformed, 1);
        assert_eq!(p.errors[0].0, 2);
    }

    #[test]
    fn csv_round_trip_with_empty_optional() {
        let rows = vec![Pair { a: 1, b: None }, Pair { a: 2, b: Some("y".into()) }];
        let mut buf = Vec::new();
        write_rows(&mut buf, LogFormat::Csv, rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("a,b\n1,\n"));
        let p = read_validated::<_, Pair, _, _>(&buf[..], LogFormat::Csv, Ok).unwrap();
        assert_eq!(p.items, vec![Pair { a: 1, b: None }, Pair { a: 2, b: Some("y".into()) }]);
    }

    #[test]
    fn empty_csv_still_has_header() {
        let mut buf = Vec::new();
        write_rows::<_, Pair, _>(&mut buf, LogFormat::Csv, Vec::new()).unwrap();
        assert_eq!(buf, b"a,b\n");
    }

    #[test]
    fn jsonl_drops_nulls() {
        let mut buf = Vec::new();
        write_rows(&mut buf, LogFormat::Jsonl, vec![Pair { a: 5, b: None }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "{\"a\":5}\n");
    }
}
