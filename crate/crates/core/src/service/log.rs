//! Append-only line logs with gapless `seq=` numbering.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::wire::{parse_fields, Fields};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("corrupt log at sequence {sequence}: {message}")]
pub struct CorruptLog {
    pub sequence: u64,
    pub message: String,
}

/// Parses every record of a log, checking that sequence numbers start at 1
/// and have no gaps. A final line without its newline counts as truncated.
pub fn read_records(text: &str) -> Result<Vec<Fields>, CorruptLog> {
    let mut out = Vec::new();
    let mut expected = 1u64;
    let mut rest = text;
    while !rest.is_empty() {
        let (line, terminated) = match rest.find('\n') {
            Some(i) => {
                let line = &rest[..i];
                rest = &rest[i + 1..];
                (line, true)
            }
            None => {
                let line = rest;
                rest = "";
                (line, false)
            }
        };
        if line.trim().is_empty() && terminated {
            continue;
        }
        let corrupt = |message: &str| CorruptLog {
            sequence: expected,
            message: message.to_string(),
        };
        if !terminated {
            return Err(corrupt("truncated record"));
        }
        let fields = parse_fields(line).map_err(|e| corrupt(&e.to_string()))?;
        match fields.get("seq").map(str::parse::<u64>) {
            Some(Ok(n)) if n == expected => {}
            Some(Ok(n)) => return Err(corrupt(&format!("found sequence {n}"))),
            _ => return Err(corrupt("missing or malformed seq")),
        }
        out.push(fields);
        expected += 1;
    }
    Ok(out)
}

/// Optional file sink; each line is flushed as it is written.
#[derive(Debug)]
pub struct LogFile {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl LogFile {
    pub fn open(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(LogFile {
            path: path.to_path_buf(),
            writer: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, line: &str) -> io::Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }
}

pub fn read_if_exists(path: &Path) -> io::Result<String> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(String::new()),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gapless_sequences() {
        assert!(read_records("").unwrap().is_empty());
        assert_eq!(read_records("seq=1 a=x\nseq=2 a=y\n").unwrap().len(), 2);
        let err = read_records("seq=1 a=x\nseq=3 a=y\n").unwrap_err();
        assert_eq!(err.sequence, 2);
        let err = read_records("seq=1 a=x\nseq=2 a=\"y").unwrap_err();
        assert_eq!(err.sequence, 2);
        let err = read_records("seq=1 a=x\nseq=2 a=y").unwrap_err();
        assert_eq!(err, CorruptLog { sequence: 2, message: "truncated record".into() });
    }

    #[test]
    fn file_sink_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/log.txt");
        let mut log = LogFile::open(&path).unwrap();
        log.append("seq=1 a=x").unwrap();
        drop(log);
        let mut log = LogFile::open(&path).unwrap();
        log.append("seq=2 a=y").unwrap();
        assert_eq!(read_records(&read_if_exists(&path).unwrap()).unwrap().len(), 2);
        assert_eq!(read_if_exists(&dir.path().join("absent")).unwrap(), "");
    }
}
