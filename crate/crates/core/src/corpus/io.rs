use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{check_unique_ids, ProvenanceRecord, RawDocument};
use crate::error::{Error, Result};

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::format(format!("{}:{}", path.display(), i + 1), e))?;
        out.push(rec);
    }
    Ok(out)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::format(path.display().to_string(), e))?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads newline-delimited `{"id", "text", "labels"}` records.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<RawDocument>> {
    let docs: Vec<RawDocument> = read_jsonl(path.as_ref())?;
    check_unique_ids(&docs)?;
    Ok(docs
        .into_iter()
        .map(|d| RawDocument::new(d.id, d.text, d.labels))
        .collect())
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[RawDocument]) -> Result<()> {
    write_jsonl(path.as_ref(), docs)
}

pub fn read_provenance(path: impl AsRef<Path>) -> Result<Vec<ProvenanceRecord>> {
    read_jsonl(path.as_ref())
}

pub fn write_provenance(path: impl AsRef<Path>, records: &[ProvenanceRecord]) -> Result<()> {
    write_jsonl(path.as_ref(), records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_roundtrip_and_field_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let docs = vec![
            RawDocument::new("a", "Hello there.", ["y2", "y1"]),
            RawDocument::new("b", "", Vec::<String>::new()),
        ];
        write_corpus(&path, &docs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"id":"a","text":"Hello there.","labels":["y1","y2"]}"#
        );
        assert_eq!(read_corpus(&path).unwrap(), docs);
    }

    #[test]
    fn malformed_line_names_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, "{\"id\":\"a\",\"text\":\"x\",\"labels\":[]}\n{\"id\":1}\n").unwrap();
        let err = read_corpus(&path).unwrap_err().to_string();
        assert!(err.contains(":2"), "{err}");
    }
}
