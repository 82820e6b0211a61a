//! JSONL interchange for datasets and embedding tables.
//!
//! Dataset lines carry exactly the keys `x, y, y_prime, eta, mass, delta`;
//! embedding lines carry `id, vec`. Files are UTF-8 with `\n` terminators.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DataError, EmbeddingTable, PreferenceDataset, PreferenceExample};

/// Loads a dataset, merging duplicate `(x, y, y')` lines with a warning.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<PreferenceDataset, DataError> {
    let text = fs::read_to_string(path.as_ref())?;
    let mut examples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: PreferenceExample =
            serde_json::from_str(line).map_err(|e| classify_json_error(idx + 1, line, e))?;
        ex.validate().map_err(|e| DataError::Schema {
            line: idx + 1,
            message: e.to_string(),
        })?;
        examples.push(ex);
    }
    let (dataset, merged) = PreferenceDataset::from_examples(examples)?;
    if merged > 0 {
        log::warn!(
            "{}: merged {merged} duplicate (x, y, y') line(s) by mass addition",
            path.as_ref().display()
        );
    }
    Ok(dataset)
}

/// Distinguishes malformed JSON from schema violations so errors carry the
/// right line number and, for schema errors, the offending field.
fn classify_json_error(line: usize, raw: &str, err: serde_json::Error) -> DataError {
    if serde_json::from_str::<serde_json::Value>(raw).is_err() {
        DataError::Parse {
            line,
            message: err.to_string(),
        }
    } else {
        DataError::Schema {
            line,
            message: err.to_string(),
        }
    }
}

/// Writes one JSON object per example, in dataset order.
pub fn save_jsonl(dataset: &PreferenceDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = Vec::new();
    for ex in dataset.examples() {
        serde_json::to_writer(&mut out, ex).expect("serializing an example cannot fail");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path.as_ref())?;
    file.write_all(&out)?;
    Ok(())
}

/// Loads an embedding table from JSONL lines `{"id": ..., "vec": [...]}`.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, DataError> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Line {
        id: String,
        vec: Vec<f64>,
    }

    let text = fs::read_to_string(path.as_ref())?;
    let mut table = EmbeddingTable::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line =
            serde_json::from_str(line).map_err(|e| classify_json_error(idx + 1, line, e))?;
        table.insert(parsed.id, parsed.vec)?;
    }
    Ok(table)
}
