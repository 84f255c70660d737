//! JSONL persistence for utterances and plain-text gazetteer files.
//!
//! One record per line: `{"id": ..., "tokens": [...], "tags": [...]}` with
//! `tags` optional for unlabeled data. Reading checks structure (field
//! presence, token shape, tag names, length agreement) but not BIO validity,
//! since stored model predictions may legitimately contain invalid
//! transitions.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::LabeledUtterance;

/// Reads a JSONL utterance file, reporting the line number of the first
/// malformed record.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<LabeledUtterance>> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let utt: LabeledUtterance = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        utt.validate().map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        out.push(utt);
    }
    Ok(out)
}

/// Writes utterances as JSONL, one record per line.
pub fn write_jsonl(utterances: &[LabeledUtterance], path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut writer = BufWriter::new(file);
    for utt in utterances {
        serde_json::to_writer(&mut writer, utt)
            .map_err(|e| Error::Validation(format!("serialize {:?}: {e}", utt.id)))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a gazetteer: plain text, one entry per line, blank lines and `#`
/// comments skipped.
pub fn read_gazetteer_file(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut entries = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let entry = line.trim();
        if entry.is_empty() || entry.starts_with('#') {
            continue;
        }
        entries.push(entry.to_string());
    }
    Ok(entries)
}
