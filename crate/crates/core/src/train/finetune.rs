use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::TrainError;
use crate::experience::{validate_chat_jsonl, ExperienceError};
use crate::model::{AgentId, ModelRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Submitted,
    Running,
    Succeeded,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobStatus::Succeeded | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneJob {
    pub agent_id: AgentId,
    pub dataset: PathBuf,
    pub base_model: ModelRef,
    pub status: JobStatus,
    /// Set once the job succeeded.
    pub result_model: Option<String>,
    #[serde(default)]
    pub records: usize,
    #[serde(default)]
    pub provider_job_id: Option<String>,
    #[serde(default)]
    pub message: Option<String>,
}

impl FineTuneJob {
    pub fn new(agent_id: impl Into<AgentId>, dataset: impl Into<PathBuf>, base_model: ModelRef) -> Self {
        Self {
            agent_id: agent_id.into(),
            dataset: dataset.into(),
            base_model,
            status: JobStatus::Submitted,
            result_model: None,
            records: 0,
            provider_job_id: None,
            message: None,
        }
    }

    /// The fine-tuned model with the base model's backend and decoding.
    pub fn resulting_model(&self) -> Option<ModelRef> {
        match (self.status, &self.result_model) {
            (JobStatus::Succeeded, Some(name)) => Some(self.base_model.with_model_name(name.clone())),
            _ => None,
        }
    }
}

/// A fine-tuning service. `run` drives one job to a terminal status.
pub trait FineTuneProvider: Send + Sync {
    fn name(&self) -> &'static str;

    fn run(&self, job: FineTuneJob) -> Result<FineTuneJob, TrainError>;
}

/// Checks the dataset and hands the job to `provider`.
pub fn submit_finetune(provider: &dyn FineTuneProvider, mut job: FineTuneJob) -> Result<FineTuneJob, TrainError> {
    let records = validate_chat_jsonl(&job.dataset).map_err(ExperienceError::from)?;
    if records == 0 {
        return Err(TrainError::EmptyDataset(job.dataset.clone()));
    }
    job.records = records;
    let job = provider.run(job)?;
    if !job.status.is_terminal() {
        return Err(TrainError::Provider(format!(
            "{} returned job for {} in non-terminal status {:?}",
            provider.name(),
            job.agent_id,
            job.status
        )));
    }
    if job.status == JobStatus::Succeeded && job.result_model.is_none() {
        return Err(TrainError::Provider(format!(
            "{} reported success for {} without a model name",
            provider.name(),
            job.agent_id
        )));
    }
    Ok(job)
}

/// Dry run: every job succeeds at once and returns the base model unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullProvider;

impl FineTuneProvider for NullProvider {
    fn name(&self) -> &'static str {
        "null"
    }

    fn run(&self, mut job: FineTuneJob) -> Result<FineTuneJob, TrainError> {
        job.status = JobStatus::Succeeded;
        job.result_model = Some(job.base_model.model_name.clone());
        Ok(job)
    }
}

/// One canned job. `result_model` may use `{base}` and `{agent}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedJob {
    /// Matches any agent when absent.
    #[serde(default)]
    pub agent_id: Option<AgentId>,
    pub statuses: Vec<JobStatus>,
    #[serde(default)]
    pub result_model: Option<String>,
    #[serde(default)]
    pub message: Option<String>,
}

impl RecordedJob {
    pub fn succeed(agent: impl Into<AgentId>, result_model: impl Into<String>) -> Self {
        Self {
            agent_id: Some(agent.into()),
            statuses: vec![JobStatus::Submitted, JobStatus::Running, JobStatus::Succeeded],
            result_model: Some(result_model.into()),
            message: None,
        }
    }

    pub fn fail(agent: impl Into<AgentId>, message: impl Into<String>) -> Self {
        Self {
            agent_id: Some(agent.into()),
            statuses: vec![JobStatus::Submitted, JobStatus::Running, JobStatus::Failed],
            result_model: None,
            message: Some(message.into()),
        }
    }
}

/// Replays canned status transitions, one recorded job per submission, in order.
#[derive(Debug)]
pub struct RecordedProvider {
    jobs: Mutex<Vec<(RecordedJob, bool)>>,
}

impl RecordedProvider {
    pub fn new(jobs: Vec<RecordedJob>) -> Self {
        Self {
            jobs: Mutex::new(jobs.into_iter().map(|j| (j, false)).collect()),
        }
    }

    /// Reads a JSON array of recorded jobs.
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(TrainError::io(path))?;
        let jobs: Vec<RecordedJob> = serde_json::from_str(&text).map_err(TrainError::json(path))?;
        Ok(Self::new(jobs))
    }

    pub fn remaining(&self) -> usize {
        self.jobs.lock().expect("recorded jobs poisoned").iter().filter(|(_, used)| !used).count()
    }
}

impl FineTuneProvider for RecordedProvider {
    fn name(&self) -> &'static str {
        "recorded"
    }

    fn run(&self, mut job: FineTuneJob) -> Result<FineTuneJob, TrainError> {
        let recorded = {
            let mut jobs = self.jobs.lock().expect("recorded jobs poisoned");
            let slot = jobs
                .iter_mut()
                .find(|(r, used)| !used && r.agent_id.as_ref().is_none_or(|a| *a == job.agent_id))
                .ok_or_else(|| TrainError::Provider(format!("no recorded job left for {}", job.agent_id)))?;
            slot.1 = true;
            slot.0.clone()
        };
        for status in &recorded.statuses {
            tracing::debug!(agent = %job.agent_id, ?status, "recorded fine-tune transition");
            job.status = *status;
        }
        if !job.status.is_terminal() {
            return Err(TrainError::Provider(format!(
                "recorded job for {} never reaches a terminal status",
                job.agent_id
            )));
        }
        job.message = recorded.message;
        if job.status == JobStatus::Succeeded {
            job.result_model = recorded.result_model.map(|m| {
                m.replace("{base}", &job.base_model.model_name)
                    .replace("{agent}", job.agent_id.as_str())
            });
        }
        Ok(job)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteProviderConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub poll_interval: Duration,
    pub max_polls: u32,
    pub timeout: Duration,
}

impl RemoteProviderConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            poll_interval: Duration::from_secs(10),
            max_polls: 720,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn from_env() -> Option<Self> {
        let mut cfg = Self::new(std::env::var(crate::model::ENV_BASE_URL).ok()?);
        cfg.api_key = std::env::var(crate::model::ENV_API_KEY).ok();
        Some(cfg)
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.base_url.trim_end_matches('/'))
    }
}

/// Fine-tuning over an OpenAI-style HTTP API: upload the dataset, create a
/// job, poll it until it finishes.
pub struct RemoteProvider {
    cfg: RemoteProviderConfig,
    client: reqwest::blocking::Client,
}

impl RemoteProvider {
    pub fn new(cfg: RemoteProviderConfig) -> Result<Self, TrainError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| TrainError::Provider(e.to_string()))?;
        Ok(Self { cfg, client })
    }

    fn auth(&self, req: reqwest::blocking::RequestBuilder) -> reqwest::blocking::RequestBuilder {
        match &self.cfg.api_key {
            Some(k) => req.bearer_auth(k),
            None => req,
        }
    }

    fn send(&self, req: reqwest::blocking::RequestBuilder) -> Result<Value, TrainError> {
        let resp = self.auth(req).send().map_err(|e| TrainError::Provider(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| TrainError::Provider(e.to_string()))?;
        if !status.is_success() {
            return Err(TrainError::Provider(format!("HTTP {}: {body}", status.as_u16())));
        }
        serde_json::from_str(&body).map_err(|e| TrainError::Provider(format!("{e}: {body}")))
    }

    fn field(v: &Value, name: &str) -> Result<String, TrainError> {
        v.get(name)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TrainError::Provider(format!("response lacks {name:?}: {v}")))
    }
}

fn map_status(s: &str) -> JobStatus {
    match s {
        "succeeded" => JobStatus::Succeeded,
        "failed" | "cancelled" => JobStatus::Failed,
        "running" => JobStatus::Running,
        _ => JobStatus::Submitted,
    }
}

impl FineTuneProvider for RemoteProvider {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn run(&self, mut job: FineTuneJob) -> Result<FineTuneJob, TrainError> {
        let bytes = std::fs::read(&job.dataset).map_err(TrainError::io(&job.dataset))?;
        let file_name = job
            .dataset
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset.jsonl".into());
        let form = reqwest::blocking::multipart::Form::new()
            .text("purpose", "fine-tune")
            .part("file", reqwest::blocking::multipart::Part::bytes(bytes).file_name(file_name));
        let file = self.send(self.client.post(self.cfg.url("files")).multipart(form))?;
        let file_id = Self::field(&file, "id")?;

        let body = serde_json::json!({"training_file": file_id, "model": job.base_model.model_name});
        let created = self.send(self.client.post(self.cfg.url("fine_tuning/jobs")).json(&body))?;
        let id = Self::field(&created, "id")?;
        job.provider_job_id = Some(id.clone());
        job.status = map_status(created.get("status").and_then(Value::as_str).unwrap_or(""));

        let mut polls = 0;
        let mut latest = created;
        while !job.status.is_terminal() {
            if polls >= self.cfg.max_polls {
                return Err(TrainError::Provider(format!("job {id} still {:?} after {polls} polls", job.status)));
            }
            std::thread::sleep(self.cfg.poll_interval);
            latest = self.send(self.client.get(self.cfg.url(&format!("fine_tuning/jobs/{id}"))))?;
            job.status = map_status(latest.get("status").and_then(Value::as_str).unwrap_or(""));
            polls += 1;
        }
        match job.status {
            JobStatus::Succeeded => job.result_model = Some(Self::field(&latest, "fine_tuned_model")?),
            _ => {
                job.message = latest
                    .pointer("/error/message")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .or_else(|| Some(format!("job {id} ended as {}", latest["status"])));
            }
        }
        Ok(job)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experience::{write_chat_jsonl, ChatRecord};

    fn dataset(dir: &Path, n: usize) -> PathBuf {
        let path = dir.join("a.jsonl");
        let records: Vec<ChatRecord> = (0..n).map(|i| ChatRecord::new("s", &format!("u{i}"), "a")).collect();
        write_chat_jsonl(&path, &records).unwrap();
        path
    }

    #[test]
    fn null_provider_keeps_the_model() {
        let dir = tempfile::tempdir().unwrap();
        let job = FineTuneJob::new("a", dataset(dir.path(), 2), ModelRef::scripted("base"));
        let done = submit_finetune(&NullProvider, job).unwrap();
        assert_eq!(done.status, JobStatus::Succeeded);
        assert_eq!(done.resulting_model(), Some(ModelRef::scripted("base")));
        assert_eq!(done.records, 2);
    }

    #[test]
    fn empty_dataset_is_rejected_before_submission() {
        let dir = tempfile::tempdir().unwrap();
        let provider = RecordedProvider::new(vec![RecordedJob::succeed("a", "ft")]);
        let job = FineTuneJob::new("a", dataset(dir.path(), 0), ModelRef::scripted("base"));
        assert!(matches!(submit_finetune(&provider, job), Err(TrainError::EmptyDataset(_))));
        assert_eq!(provider.remaining(), 1);
    }

    #[test]
    fn recorded_provider_replays() {
        let dir = tempfile::tempdir().unwrap();
        let provider = RecordedProvider::new(vec![
            RecordedJob::fail("a", "quota exceeded"),
            RecordedJob::succeed("a", "{base}-ft-{agent}"),
        ]);
        let job = FineTuneJob::new("a", dataset(dir.path(), 1), ModelRef::scripted("base"));
        let failed = submit_finetune(&provider, job.clone()).unwrap();
        assert_eq!(failed.status, JobStatus::Failed);
        assert_eq!(failed.message.as_deref(), Some("quota exceeded"));
        assert_eq!(failed.resulting_model(), None);
        let ok = submit_finetune(&provider, job.clone()).unwrap();
        assert_eq!(ok.result_model.as_deref(), Some("base-ft-a"));
        assert!(matches!(submit_finetune(&provider, job), Err(TrainError::Provider(_))));
    }
}
