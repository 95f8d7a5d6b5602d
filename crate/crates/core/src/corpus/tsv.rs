use std::path::Path;

use super::{CorpusError, Dataset, Example, Split, TaskSpec};

/// Columns tried, in order, for a stable example id. Falls back to the
/// zero-based data row number.
pub(crate) const ID_COLUMNS: [&str; 2] = ["index", "id"];

/// Load a GLUE-style TSV file: a header row, then one tab-separated row per
/// example. No quoting is recognised.
pub fn load_tsv(path: impl AsRef<Path>, task: &TaskSpec, split: Split) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tsv(&bytes, task, split)
}

pub(crate) fn parse_tsv(bytes: &[u8], task: &TaskSpec, split: Split) -> Result<Dataset, CorpusError> {
    let mut lines = bytes.split(|&b| b == b'\n').enumerate().map(|(i, raw)| {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        std::str::from_utf8(raw)
            .map(|s| (i + 1, s))
            .map_err(|_| CorpusError::Encoding(i + 1))
    });

    let (_, header) = match lines.next() {
        Some(h) => h?,
        None => return Dataset::new(task.clone(), split, Vec::new()),
    };
    if header.is_empty() {
        return Err(CorpusError::MissingColumn(task.fields.a.clone()));
    }
    let columns: Vec<&str> = header.split('\t').collect();
    let find = |name: &str| columns.iter().position(|c| *c == name);
    let col_a = find(&task.fields.a).ok_or_else(|| CorpusError::MissingColumn(task.fields.a.clone()))?;
    let col_b = find(&task.fields.b).ok_or_else(|| CorpusError::MissingColumn(task.fields.b.clone()))?;
    let col_label = find(&task.fields.label);
    if col_label.is_none() && split.requires_labels() {
        return Err(CorpusError::MissingColumn(task.fields.label.clone()));
    }
    let col_id = ID_COLUMNS.iter().find_map(|c| find(c));

    let mut examples = Vec::new();
    let mut pending_blank = None;
    for line in lines {
        let (line_no, text) = line?;
        if text.is_empty() {
            // only acceptable as the final terminator
            pending_blank.get_or_insert(line_no);
            continue;
        }
        if let Some(blank) = pending_blank {
            return Err(CorpusError::MalformedRow(blank));
        }
        let cells: Vec<&str> = text.split('\t').collect();
        if cells.len() != columns.len() {
            return Err(CorpusError::MalformedRow(line_no));
        }
        let id = match col_id {
            Some(c) => cells[c].to_string(),
            None => examples.len().to_string(),
        };
        let gold = match col_label.map(|c| cells[c].trim()) {
            Some("") | None => {
                if split.requires_labels() {
                    return Err(CorpusError::MissingLabel { row: line_no });
                }
                None
            }
            Some(raw) => Some(
                task.resolve_label(raw)
                    .ok_or_else(|| CorpusError::BadLabel {
                        row: line_no,
                        value: raw.to_string(),
                    })?
                    .to_string(),
            ),
        };
        let ex = Example::new(id, cells[col_a], cells[col_b], gold)
            .map_err(|reason| CorpusError::InvalidExample { row: line_no, reason })?;
        examples.push(ex);
    }
    Dataset::new(task.clone(), split, examples)
}
