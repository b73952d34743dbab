//! Line-delimited record files and JSON documents.
//!
//! Record files start with a header line
//! `{"format": <name>, "format_version": <n>, "count": <records>}` followed by
//! one JSON record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    format_version: u32,
    count: usize,
}

pub fn write_records<T: Serialize>(
    path: impl AsRef<Path>,
    format: &str,
    version: u32,
    records: &[T],
) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let header = Header {
        format: format.to_string(),
        format_version: version,
        count: records.len(),
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::parse(format, e))?;
    w.write_all(b"\n").map_err(io)?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::parse(format, e))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_records<T: DeserializeOwned>(
    path: impl AsRef<Path>,
    format: &'static str,
    version: u32,
) -> Result<Vec<T>> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::parse(path.display().to_string(), "empty file"))?
        .map_err(io)?;
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| Error::parse(path.display().to_string(), format!("bad header: {e}")))?;
    if header.format != format {
        return Err(Error::parse(
            path.display().to_string(),
            format!("expected a {format} file, found {}", header.format),
        ));
    }
    if header.format_version != version {
        return Err(Error::FormatVersion {
            format,
            found: header.format_version,
            supported: version,
        });
    }
    let mut out = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            Error::parse(path.display().to_string(), format!("line {}: {e}", i + 2))
        })?;
        out.push(rec);
    }
    if out.len() != header.count {
        return Err(Error::parse(
            path.display().to_string(),
            format!("header announces {} records, found {}", header.count, out.len()),
        ));
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse("json", e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

/// `corpus.jsonl` -> `corpus.manifest.json`
pub fn manifest_path(path: &Path) -> std::path::PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.manifest.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Rec {
        a: u32,
    }

    #[test]
    fn records_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let recs = vec![Rec { a: 1 }, Rec { a: 2 }];
        write_records(&p, "test", 1, &recs).unwrap();
        let back: Vec<Rec> = read_records(&p, "test", 1).unwrap();
        assert_eq!(back, recs);
        assert!(matches!(
            read_records::<Rec>(&p, "test", 2),
            Err(Error::FormatVersion { found: 1, .. })
        ));
        assert!(read_records::<Rec>(&p, "other", 1).is_err());
    }

    #[test]
    fn manifest_sits_next_to_file() {
        let p = manifest_path(Path::new("/tmp/x/corpus.jsonl"));
        assert_eq!(p, Path::new("/tmp/x/corpus.manifest.json"));
    }
}
