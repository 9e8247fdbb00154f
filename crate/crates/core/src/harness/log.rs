//! JSON-lines episode logs and LF-terminated CSV tables.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::episode::EpisodeRecord;
use crate::world::Tolerances;
use crate::{Error, Result};

pub const LOG_FORMAT: &str = "grasp-ssl/episodes";
pub const LOG_VERSION: u32 = 1;
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const CURVE_FILE: &str = "curve.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub samples: usize,
    pub epochs: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub pretrain: PretrainSummary,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Header(LogHeader),
    Episode(EpisodeRecord),
}

pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, line: &LogLine) -> Result<()> {
        serde_json::to_writer(&mut self.out, line).map_err(|e| Error::Log {
            path: self.path.clone(),
            message: e.to_string(),
        })?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Parse a log written by [`JsonlWriter`]: one header followed by episodes.
pub fn read_log(path: &Path) -> Result<(LogHeader, Vec<EpisodeRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Log {
        path: path.to_path_buf(),
        message,
    };
    let mut header = None;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
        match parsed {
            LogLine::Header(h) if header.is_none() && records.is_empty() => header = Some(h),
            LogLine::Header(_) => return Err(bad(format!("line {}: unexpected header", n + 1))),
            LogLine::Episode(r) => {
                if header.is_none() {
                    return Err(bad("episode before header".into()));
                }
                records.push(r)
            }
        }
    }
    let header = header.ok_or_else(|| bad("missing header".into()))?;
    if header.format != LOG_FORMAT || header.version != LOG_VERSION {
        return Err(bad(format!("unsupported format {} v{}", header.format, header.version)));
    }
    if records.windows(2).any(|w| w[1].index <= w[0].index) {
        return Err(bad("episode indices are not strictly increasing".into()));
    }
    Ok((header, records))
}

/// Write rows of pre-formatted cells with LF line endings.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Log {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Log {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_lf() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, &["a", "b"], &[vec!["1".into(), "x,y".into()]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,\"x,y\"\n");
    }

    #[test]
    fn missing_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(read_log(&path), Err(Error::Log { .. })));
        std::fs::write(&path, "{\"type\":\"nonsense\"}\n").unwrap();
        assert!(matches!(read_log(&path), Err(Error::Log { .. })));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        assert!(matches!(ensure_dir(&blocker.join("sub")), Err(Error::Io { .. })));
        assert!(matches!(
            JsonlWriter::create(&blocker.join("a.jsonl")),
            Err(Error::Io { .. })
        ));
    }
}
