use std::path::Path;

use serde_json::{Map, Value};

use super::{CorpusError, Dataset, Example, Split, TaskSpec};

const ID_KEYS: [&str; 3] = ["id", "idx", "index"];

/// Load one JSON object per line. Blank lines are skipped.
pub fn load_jsonl(path: impl AsRef<Path>, task: &TaskSpec, split: Split) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_jsonl(&bytes, task, split)
}

pub(crate) fn parse_jsonl(bytes: &[u8], task: &TaskSpec, split: Split) -> Result<Dataset, CorpusError> {
    let mut examples = Vec::new();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = i + 1;
        let text = std::str::from_utf8(raw).map_err(|_| CorpusError::Encoding(line_no))?;
        if text.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> = match serde_json::from_str(text) {
            Ok(Value::Object(m)) => m,
            _ => return Err(CorpusError::MalformedRow(line_no)),
        };
        let text_field = |name: &str| -> Result<String, CorpusError> {
            match obj.get(name) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(CorpusError::MalformedRow(line_no)),
                None => Err(CorpusError::MissingColumn(name.to_string())),
            }
        };
        let a = text_field(&task.fields.a)?;
        let b = text_field(&task.fields.b)?;
        let raw_label = match obj.get(&task.fields.label) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) if s.trim().is_empty() => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(Value::Number(n)) => Some(n.to_string()),
            Some(_) => return Err(CorpusError::MalformedRow(line_no)),
        };
        let gold = match raw_label {
            None if split.requires_labels() => return Err(CorpusError::MissingLabel { row: line_no }),
            None => None,
            Some(raw) => Some(
                task.resolve_label(&raw)
                    .ok_or(CorpusError::BadLabel {
                        row: line_no,
                        value: raw.clone(),
                    })?
                    .to_string(),
            ),
        };
        let id = ID_KEYS
            .iter()
            .find_map(|k| match obj.get(*k) {
                Some(Value::String(s)) => Some(s.clone()),
                Some(Value::Number(n)) => Some(n.to_string()),
                _ => None,
            })
            .unwrap_or_else(|| examples.len().to_string());
        let ex = Example::new(id, a, b, gold).map_err(|reason| CorpusError::InvalidExample { row: line_no, reason })?;
        examples.push(ex);
    }
    Dataset::new(task.clone(), split, examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TaskRegistry;

    fn mrpc_jsonl() -> TaskSpec {
        let mut reg = TaskRegistry::builtin();
        reg.apply_overrides_json(
            r#"{"mrpc": {"indicator_a": "Sentence1", "indicator_b": "Sentence2",
                "labels": ["equivalent", "not_equivalent"], "task_type": "STS", "seq2seq_prefix": "mrpc",
                "label_aliases": {"1": "equivalent", "0": "not_equivalent"}}}"#,
        )
        .unwrap();
        reg.get("mrpc").unwrap().clone()
    }

    #[test]
    fn one_object() {
        let d = parse_jsonl(br#"{"sentence1":"a","sentence2":"b","label":"equivalent"}"#, &mrpc_jsonl(), Split::Train).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.examples()[0].gold.as_deref(), Some("equivalent"));
    }

    #[test]
    fn non_object_line() {
        let err = parse_jsonl(b"{\"sentence1\":\"a\",\"sentence2\":\"b\",\"label\":\"equivalent\"}\n[1,2]\n", &mrpc_jsonl(), Split::Train)
            .unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRow(2)));
        assert!(matches!(
            parse_jsonl(b"not json", &mrpc_jsonl(), Split::Train),
            Err(CorpusError::MalformedRow(1))
        ));
    }

    #[test]
    fn empty_file() {
        assert!(parse_jsonl(b"", &mrpc_jsonl(), Split::Train).unwrap().is_empty());
    }

    #[test]
    fn numeric_labels_and_ids() {
        let d = parse_jsonl(
            b"{\"idx\": 4, \"sentence1\":\"a\",\"sentence2\":\"b\",\"label\":1}\n\n{\"idx\": 5, \"sentence1\":\"c\",\"sentence2\":\"d\",\"label\":0}\n",
            &mrpc_jsonl(),
            Split::Validation,
        )
        .unwrap();
        let ids: Vec<_> = d.examples().iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["4", "5"]);
        assert_eq!(d.examples()[1].gold.as_deref(), Some("not_equivalent"));
    }

    #[test]
    fn bad_label_and_missing_key() {
        let err = parse_jsonl(br#"{"sentence1":"a","sentence2":"b","label":"maybe"}"#, &mrpc_jsonl(), Split::Train).unwrap_err();
        assert!(matches!(err, CorpusError::BadLabel { row: 1, .. }));
        let err = parse_jsonl(br#"{"sentence1":"a","label":"equivalent"}"#, &mrpc_jsonl(), Split::Train).unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn(c) if c == "sentence2"));
    }

    #[test]
    fn unlabeled_rows_only_in_test() {
        let line = br#"{"sentence1":"a","sentence2":"b"}"#;
        assert!(parse_jsonl(line, &mrpc_jsonl(), Split::Test).is_ok());
        assert!(matches!(
            parse_jsonl(line, &mrpc_jsonl(), Split::Train),
            Err(CorpusError::MissingLabel { row: 1 })
        ));
    }
}
