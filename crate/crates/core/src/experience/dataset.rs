use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{ChatTurn, Speaker};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Schema {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// One fine-tuning record: `{"messages":[system, user, assistant]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRecord {
    pub messages: Vec<ChatTurn>,
}

impl ChatRecord {
    pub fn new(system: &str, user: &str, assistant: &str) -> Self {
        Self {
            messages: vec![
                ChatTurn::system(system),
                ChatTurn::user(user),
                ChatTurn::assistant(assistant),
            ],
        }
    }

    /// Exactly three turns ordered system, user, assistant; the assistant
    /// turn must carry text.
    pub fn validate(&self) -> Result<(), String> {
        let roles: Vec<Speaker> = self.messages.iter().map(|m| m.speaker_role).collect();
        if roles != [Speaker::System, Speaker::User, Speaker::Assistant] {
            let names: Vec<&str> = roles.iter().map(Speaker::as_str).collect();
            return Err(format!("expected roles [system, user, assistant], got {names:?}"));
        }
        if self.messages[2].content.trim().is_empty() {
            return Err("empty assistant turn".into());
        }
        Ok(())
    }

    pub fn triple(&self) -> (&str, &str, &str) {
        (
            &self.messages[0].content,
            &self.messages[1].content,
            &self.messages[2].content,
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes records as JSON Lines, creating parent directories. Returns the count.
pub fn write_chat_jsonl<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a ChatRecord>,
) -> Result<usize, DatasetError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(path))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut n = 0;
    for r in records {
        let line = serde_json::to_string(r).expect("chat records always serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
        n += 1;
    }
    w.flush().map_err(io_err(path))?;
    Ok(n)
}

/// Reads and schema-checks a chat JSON Lines file. Blank lines are skipped.
pub fn read_chat_jsonl(path: &Path) -> Result<Vec<ChatRecord>, DatasetError> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ChatRecord = serde_json::from_str(&line).map_err(|source| DatasetError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        record.validate().map_err(|reason| DatasetError::Schema {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Record count of a valid dataset file.
pub fn validate_chat_jsonl(path: &Path) -> Result<usize, DatasetError> {
    read_chat_jsonl(path).map(|r| r.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format() {
        let r = ChatRecord::new("sys", "usr", "asst");
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"messages":[{"role":"system","content":"sys"},{"role":"user","content":"usr"},{"role":"assistant","content":"asst"}]}"#
        );
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.jsonl");
        let records = vec![ChatRecord::new("s", "u1", "a1"), ChatRecord::new("s", "u2\nline", "a2")];
        assert_eq!(write_chat_jsonl(&path, &records).unwrap(), 2);
        assert_eq!(read_chat_jsonl(&path).unwrap(), records);
    }

    #[test]
    fn schema_violations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            r#"{"messages":[{"role":"user","content":"u"},{"role":"system","content":"s"},{"role":"assistant","content":"a"}]}"#,
        )
        .unwrap();
        assert!(matches!(read_chat_jsonl(&path), Err(DatasetError::Schema { line: 1, .. })));

        std::fs::write(&path, "{\"messages\":[]}\nnot json\n").unwrap();
        assert!(matches!(read_chat_jsonl(&path), Err(DatasetError::Schema { line: 1, .. })));

        std::fs::write(&path, "\nnot json\n").unwrap();
        assert!(matches!(read_chat_jsonl(&path), Err(DatasetError::Json { line: 2, .. })));

        let blank = ChatRecord::new("s", "u", "  ");
        assert!(blank.validate().is_err());
    }
}
