use std::collections::HashSet;
use std::path::Path;

use super::TrainError;
use crate::topology::ProblemInstance;

/// Reads a task file: one `{id, question, context?, gold, task_kind}` object
/// per line. Ids must be unique and gold answers non-empty.
pub fn load_problems(path: &Path) -> Result<Vec<ProblemInstance>, TrainError> {
    let text = std::fs::read_to_string(path).map_err(TrainError::io(path))?;
    let bad = |line: usize, reason: String| TrainError::TaskFile {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: ProblemInstance = serde_json::from_str(line).map_err(|e| bad(i + 1, e.to_string()))?;
        if p.gold_answer.trim().is_empty() {
            return Err(bad(i + 1, format!("problem {} has an empty gold answer", p.problem_id)));
        }
        if !seen.insert(p.problem_id.clone()) {
            return Err(bad(i + 1, format!("duplicate problem id {}", p.problem_id)));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn write_problems(path: &Path, problems: &[ProblemInstance]) -> Result<(), TrainError> {
    let mut body = String::new();
    for p in problems {
        body.push_str(&serde_json::to_string(p).map_err(TrainError::json(path))?);
        body.push('\n');
    }
    std::fs::write(path, body).map_err(TrainError::io(path))
}
