//! Line-oriented upload files: one JSON object per line, `{"id": "...",
//! "label": 3}` for datasets and `{"id": "...", "pred": 3}` for predictions.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::io::BufRead;

use serde::Deserialize;
use thiserror::Error;

use super::dataset::LabelMap;

#[derive(Debug, Error)]
pub enum UploadError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate id `{id}` (first seen on line {first})")]
    DuplicateId { line: usize, first: usize, id: String },
    #[error("upload contains no records")]
    Empty,
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy)]
pub enum RecordKind {
    Label,
    Prediction,
}

impl RecordKind {
    fn field(self) -> &'static str {
        match self {
            RecordKind::Label => "label",
            RecordKind::Prediction => "pred",
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelLine {
    id: String,
    label: i64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredLine {
    id: String,
    pred: i64,
}

/// Parse an upload. Blank lines are skipped; line numbers are 1-based.
pub fn parse_records(reader: impl BufRead, kind: RecordKind) -> Result<LabelMap, UploadError> {
    let mut items = LabelMap::new();
    let mut first_line: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, value) = match kind {
            RecordKind::Label => serde_json::from_str::<LabelLine>(&line).map(|r| (r.id, r.label)),
            RecordKind::Prediction => serde_json::from_str::<PredLine>(&line).map(|r| (r.id, r.pred)),
        }
        .map_err(|e| UploadError::Malformed {
            line: line_no,
            reason: format!("expected {{\"id\": string, \"{}\": integer}}: {e}", kind.field()),
        })?;
        if id.is_empty() {
            return Err(UploadError::Malformed {
                line: line_no,
                reason: "id must be nonempty".into(),
            });
        }
        match first_line.entry(id.clone()) {
            Entry::Occupied(seen) => {
                return Err(UploadError::DuplicateId {
                    line: line_no,
                    first: *seen.get(),
                    id,
                })
            }
            Entry::Vacant(slot) => {
                slot.insert(line_no);
            }
        }
        items.insert(id, value);
    }
    if items.is_empty() {
        return Err(UploadError::Empty);
    }
    Ok(items)
}

/// Render records in the upload format.
pub fn write_records(items: &LabelMap, kind: RecordKind) -> String {
    let mut out = String::new();
    for (id, value) in items {
        let line = serde_json::json!({ "id": id, kind.field(): value });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}
