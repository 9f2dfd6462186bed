use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{write_chat_jsonl, ChatRecord};
use super::trajectory::{Provenance, StepRecord, Trajectory};
use super::ExperienceError;
use crate::augmentation::AugmentationNote;
use crate::model::AgentId;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A (system, user, assistant) triple plus where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub agent_id: AgentId,
    pub problem_id: String,
    pub iteration: u32,
    pub system_prompt: String,
    pub user_prompt: String,
    pub output: String,
    pub provenance: Provenance,
    /// Reward of the source trajectory for this agent.
    pub reward: f64,
    pub prompt_hash: String,
    pub output_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<AugmentationNote>,
}

impl TrainingExample {
    pub fn from_step(step: &StepRecord, problem_id: &str, reward: f64) -> Self {
        let mut prompt = step.system_prompt.clone().into_bytes();
        prompt.push(0);
        prompt.extend_from_slice(step.rendered_prompt.as_bytes());
        Self {
            agent_id: step.agent_id.clone(),
            problem_id: problem_id.to_string(),
            iteration: step.iteration,
            system_prompt: step.system_prompt.clone(),
            user_prompt: step.rendered_prompt.clone(),
            output: step.output.clone(),
            provenance: step.provenance,
            reward,
            prompt_hash: sha256_hex(&prompt),
            output_hash: sha256_hex(step.output.as_bytes()),
            note: step.note.clone(),
        }
    }

    pub fn key(&self) -> (AgentId, String, String) {
        (
            self.agent_id.clone(),
            self.prompt_hash.clone(),
            self.output_hash.clone(),
        )
    }

    pub fn chat_record(&self) -> ChatRecord {
        ChatRecord::new(&self.system_prompt, &self.user_prompt, &self.output)
    }
}

/// Examples of `agent` from trajectories whose reward for it is strictly above
/// `epsilon`, in input order, with content duplicates dropped.
pub fn filter_good(trajs: &[Trajectory], agent: &AgentId, epsilon: f64) -> Vec<TrainingExample> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in trajs {
        let Some(r) = t.reward(agent) else { continue };
        if r <= epsilon {
            continue;
        }
        for step in t.trainable_steps(agent) {
            let ex = TrainingExample::from_step(step, &t.problem_id, r);
            if seen.insert(ex.key()) {
                out.push(ex);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LibraryStats {
    pub direct_count: usize,
    pub augmented_count: usize,
    /// augmented / direct as a percentage; absent when there is no direct data.
    pub augmentation_ratio: Option<f64>,
}

impl fmt::Display for LibraryStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "direct {} augmented {} ratio ", self.direct_count, self.augmented_count)?;
        match self.augmentation_ratio {
            Some(r) => write!(f, "{r:.2}%"),
            None => write!(f, "n/a"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentManifest {
    pub count: usize,
    pub direct: usize,
    pub augmented: usize,
    /// sha256 of the agent's dataset file.
    pub dataset_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationManifest {
    pub iteration: u32,
    pub epsilon: f64,
    pub agents: BTreeMap<AgentId, AgentManifest>,
    pub records_sha256: String,
}

const RECORDS_FILE: &str = "records.jsonl";
const NOTES_FILE: &str = "notes.jsonl";
const MANIFEST_FILE: &str = "manifest.json";

pub fn iteration_dir(root: &Path, iteration: u32) -> PathBuf {
    root.join(format!("iter_{iteration:03}"))
}

pub fn dataset_file(root: &Path, iteration: u32, agent: &AgentId) -> PathBuf {
    iteration_dir(root, iteration).join(format!("{agent}.jsonl"))
}

/// Per-iteration, per-agent store of good training examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceLibrary {
    epsilon: f64,
    entries: BTreeMap<u32, BTreeMap<AgentId, Vec<TrainingExample>>>,
    index: HashSet<(u32, AgentId, String, String)>,
}

impl ExperienceLibrary {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            entries: BTreeMap::new(),
            index: HashSet::new(),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Stores `ex` under its iteration. Returns false for a content duplicate.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn insert(&mut self, ex: TrainingExample) -> Result<bool, ExperienceError> {
        // Negated so NaN rewards are refused too.
        if !(ex.reward > self.epsilon) {
            return Err(ExperienceError::BelowThreshold {
                agent: ex.agent_id,
                reward: ex.reward,
                epsilon: self.epsilon,
            });
        }
        if ex.provenance == Provenance::Augmented && ex.note.is_none() {
            return Err(ExperienceError::MissingNote(ex.agent_id));
        }
        let (agent, ph, oh) = ex.key();
        if !self.index.insert((ex.iteration, agent.clone(), ph, oh)) {
            return Ok(false);
        }
        self.entries
            .entry(ex.iteration)
            .or_default()
            .entry(agent)
            .or_default()
            .push(ex);
        Ok(true)
    }

    /// Inserts every example, returning how many were new.
    pub fn extend(
        &mut self,
        examples: impl IntoIterator<Item = TrainingExample>,
    ) -> Result<usize, ExperienceError> {
        let mut n = 0;
        for ex in examples {
            n += usize::from(self.insert(ex)?);
        }
        Ok(n)
    }

    pub fn examples(&self, iteration: u32, agent: &AgentId) -> &[TrainingExample] {
        self.entries
            .get(&iteration)
            .and_then(|m| m.get(agent))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Drops every example of `iteration`.
    pub fn remove_iteration(&mut self, iteration: u32) {
        self.entries.remove(&iteration);
        self.index.retain(|(t, ..)| *t != iteration);
    }

    pub fn iterations(&self) -> Vec<u32> {
        self.entries.keys().copied().collect()
    }

    pub fn agents(&self, iteration: u32) -> Vec<AgentId> {
        self.entries
            .get(&iteration)
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainingExample> {
        self.entries.values().flat_map(|m| m.values()).flatten()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn stats(&self, iteration: u32, agent: &AgentId) -> LibraryStats {
        library_stats(self, iteration, agent)
    }

    /// Writes one directory per iteration holding a chat dataset per agent,
    /// the full example records, augmentation notes and a manifest.
    pub fn save(&self, root: &Path) -> Result<(), ExperienceError> {
        for (&iteration, agents) in &self.entries {
            self.save_iteration(root, iteration, agents)?;
        }
        Ok(())
    }

    fn save_iteration(
        &self,
        root: &Path,
        iteration: u32,
        agents: &BTreeMap<AgentId, Vec<TrainingExample>>,
    ) -> Result<(), ExperienceError> {
        let dir = iteration_dir(root, iteration);
        std::fs::create_dir_all(&dir).map_err(ExperienceError::io(&dir))?;
        let mut manifest = IterationManifest {
            iteration,
            epsilon: self.epsilon,
            agents: BTreeMap::new(),
            records_sha256: String::new(),
        };
        let mut records = Vec::new();
        let mut notes = Vec::new();
        for (agent, examples) in agents {
            let path = dataset_file(root, iteration, agent);
            write_chat_jsonl(&path, &examples.iter().map(TrainingExample::chat_record).collect::<Vec<_>>())?;
            let direct = examples
                .iter()
                .filter(|e| e.provenance == Provenance::Direct)
                .count();
            manifest.agents.insert(
                agent.clone(),
                AgentManifest {
                    count: examples.len(),
                    direct,
                    augmented: examples.len() - direct,
                    dataset_sha256: file_sha256(&path)?,
                },
            );
            for e in examples {
                records.push(serde_json::to_string(e).map_err(ExperienceError::json(&dir))?);
                if let Some(n) = &e.note {
                    notes.push(serde_json::to_string(&NoteRecord { agent_id: agent, problem_id: &e.problem_id, note: n })
                        .map_err(ExperienceError::json(&dir))?);
                }
            }
        }
        let records_path = dir.join(RECORDS_FILE);
        write_lines(&records_path, &records)?;
        write_lines(&dir.join(NOTES_FILE), &notes)?;
        manifest.records_sha256 = file_sha256(&records_path)?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let body = serde_json::to_string_pretty(&manifest).map_err(ExperienceError::json(&manifest_path))?;
        std::fs::write(&manifest_path, body).map_err(ExperienceError::io(&manifest_path))
    }

    /// Loads a library saved by [`save`](Self::save), checking every hash in
    /// the manifests and the threshold of every record.
    pub fn load(root: &Path) -> Result<Self, ExperienceError> {
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
            .map_err(ExperienceError::io(root))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.join(MANIFEST_FILE).is_file())
            .collect();
        dirs.sort();
        let mut lib: Option<Self> = None;
        for dir in dirs {
            let manifest_path = dir.join(MANIFEST_FILE);
            let text = std::fs::read_to_string(&manifest_path).map_err(ExperienceError::io(&manifest_path))?;
            let manifest: IterationManifest =
                serde_json::from_str(&text).map_err(ExperienceError::json(&manifest_path))?;
            let lib = lib.get_or_insert_with(|| Self::new(manifest.epsilon));
            if lib.epsilon != manifest.epsilon {
                return Err(ExperienceError::corrupt(&manifest_path, "epsilon differs between iterations"));
            }
            let records_path = dir.join(RECORDS_FILE);
            if file_sha256(&records_path)? != manifest.records_sha256 {
                return Err(ExperienceError::corrupt(&records_path, "hash does not match manifest"));
            }
            let reader = BufReader::new(File::open(&records_path).map_err(ExperienceError::io(&records_path))?);
            let mut counts: BTreeMap<AgentId, usize> = BTreeMap::new();
            for line in reader.lines() {
                let line = line.map_err(ExperienceError::io(&records_path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let ex: TrainingExample =
                    serde_json::from_str(&line).map_err(ExperienceError::json(&records_path))?;
                if ex.iteration != manifest.iteration {
                    return Err(ExperienceError::corrupt(&records_path, "record from another iteration"));
                }
                *counts.entry(ex.agent_id.clone()).or_default() += 1;
                lib.insert(ex)?;
            }
            for (agent, m) in &manifest.agents {
                let path = dataset_file(root, manifest.iteration, agent);
                if counts.get(agent).copied().unwrap_or(0) != m.count || file_sha256(&path)? != m.dataset_sha256 {
                    return Err(ExperienceError::corrupt(&path, "does not match manifest"));
                }
            }
        }
        Ok(lib.unwrap_or_else(|| Self::new(super::DEFAULT_EPSILON)))
    }
}

#[derive(Serialize)]
struct NoteRecord<'a> {
    agent_id: &'a AgentId,
    problem_id: &'a str,
    note: &'a AugmentationNote,
}

fn write_lines(path: &Path, lines: &[String]) -> Result<(), ExperienceError> {
    let mut w = BufWriter::new(File::create(path).map_err(ExperienceError::io(path))?);
    for l in lines {
        writeln!(w, "{l}").map_err(ExperienceError::io(path))?;
    }
    w.flush().map_err(ExperienceError::io(path))
}

pub fn file_sha256(path: &Path) -> Result<String, ExperienceError> {
    let bytes = std::fs::read(path).map_err(ExperienceError::io(path))?;
    Ok(sha256_hex(&bytes))
}

/// Writes the chat dataset of `agent` at `iteration` to `path`; returns the
/// record count. An empty dataset is still written and logged as a warning.
pub fn export_dataset(
    lib: &ExperienceLibrary,
    iteration: u32,
    agent: &AgentId,
    path: &Path,
) -> Result<usize, ExperienceError> {
    let records: Vec<ChatRecord> = lib
        .examples(iteration, agent)
        .iter()
        .map(TrainingExample::chat_record)
        .collect();
    let n = write_chat_jsonl(path, &records)?;
    if n == 0 {
        tracing::warn!(%agent, iteration, path = %path.display(), "{}", ExperienceError::EmptyDataset(agent.clone()));
    }
    Ok(n)
}

/// Pools every agent's examples at `iteration` into one dataset.
pub fn export_pooled(lib: &ExperienceLibrary, iteration: u32, path: &Path) -> Result<usize, ExperienceError> {
    let mut seen = BTreeSet::new();
    let records: Vec<ChatRecord> = lib
        .agents(iteration)
        .iter()
        .flat_map(|a| lib.examples(iteration, a))
        .map(TrainingExample::chat_record)
        .filter(|r| {
            let (s, u, a) = r.triple();
            seen.insert((s.to_string(), u.to_string(), a.to_string()))
        })
        .collect();
    let n = write_chat_jsonl(path, &records)?;
    if n == 0 {
        tracing::warn!(iteration, path = %path.display(), "empty pooled dataset");
    }
    Ok(n)
}

pub fn library_stats(lib: &ExperienceLibrary, iteration: u32, agent: &AgentId) -> LibraryStats {
    let examples = lib.examples(iteration, agent);
    let direct_count = examples
        .iter()
        .filter(|e| e.provenance == Provenance::Direct)
        .count();
    let augmented_count = examples.len() - direct_count;
    LibraryStats {
        direct_count,
        augmented_count,
        augmentation_ratio: (direct_count > 0)
            .then(|| augmented_count as f64 / direct_count as f64 * 100.0),
    }
}
