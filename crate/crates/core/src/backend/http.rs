//! Blocking client for external predictors speaking the JSON protocol.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::corpus::TaskSpec;
use crate::perturb::{seq2seq_from_rendered, RenderedInput};

use super::protocol::{
    ClassifyRequest, ClassifyResponse, ErrorBody, GenerateRequest, GenerateResponse, HealthResponse, PairInput,
    TextInput, CLASSIFY_PATH, GENERATE_PATH, HEALTH_PATH,
};
use super::{parse_generated_label, Backend, BackendError, PredictionOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub attempts: u32,
    /// Wait before the second attempt; doubled after each further failure.
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HttpMode {
    Classifier,
    Generator,
}

#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: Client,
    endpoint: String,
    model: String,
    mode: HttpMode,
    retry: RetryPolicy,
}

enum Failure {
    Transient(String),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(
        endpoint: &str,
        model: &str,
        mode: HttpMode,
        retry: RetryPolicy,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Descriptor(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            mode,
            retry,
        })
    }

    pub fn health(&self) -> Result<HealthResponse, BackendError> {
        self.with_retry(|| {
            let resp = self
                .client
                .get(format!("{}{HEALTH_PATH}", self.endpoint))
                .send()
                .map_err(|e| Failure::Transient(e.to_string()))?;
            decode(resp)
        })
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, BackendError> {
        let url = format!("{}{path}", self.endpoint);
        self.with_retry(|| {
            let resp = self
                .client
                .post(&url)
                .json(body)
                .send()
                .map_err(|e| Failure::Transient(e.to_string()))?;
            decode(resp)
        })
    }

    fn with_retry<T>(&self, mut call: impl FnMut() -> Result<T, Failure>) -> Result<T, BackendError> {
        let attempts = self.retry.attempts.max(1);
        let mut backoff = self.retry.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match call() {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) => {
                    log::warn!("attempt {attempt}/{attempts} to {} failed: {msg}", self.endpoint);
                    last = msg;
                    if attempt < attempts {
                        thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(BackendError::Transport {
            attempts,
            message: last,
        })
    }
}

fn decode<T: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T, Failure> {
    let status = resp.status();
    let body = resp.text().map_err(|e| Failure::Transient(e.to_string()))?;
    if status.is_success() {
        return serde_json::from_str(&body)
            .map_err(|e| Failure::Fatal(BackendError::Protocol(format!("bad response body: {e}"))));
    }
    let message = serde_json::from_str::<ErrorBody>(&body)
        .map(|b| b.error)
        .unwrap_or(body);
    if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
        Err(Failure::Transient(format!("{status}: {message}")))
    } else {
        Err(Failure::Fatal(BackendError::Protocol(format!("{status}: {message}"))))
    }
}

fn check_len(got: usize, want: usize) -> Result<(), BackendError> {
    if got == want {
        Ok(())
    } else {
        Err(BackendError::Protocol(format!("expected {want} results, got {got}")))
    }
}

impl Backend for HttpBackend {
    fn classify_batch(&self, task: &TaskSpec, inputs: &[RenderedInput]) -> Result<Vec<PredictionOutcome>, BackendError> {
        match self.mode {
            HttpMode::Classifier => {
                let req = ClassifyRequest {
                    task: task.task_id.clone(),
                    model: self.model.clone(),
                    inputs: inputs
                        .iter()
                        .map(|i| PairInput {
                            segment_a: i.segment_a.clone(),
                            segment_b: i.segment_b.clone(),
                        })
                        .collect(),
                };
                let resp: ClassifyResponse = self.post(CLASSIFY_PATH, &req)?;
                check_len(resp.predictions.len(), inputs.len())?;
                resp.predictions
                    .into_iter()
                    .map(|p| match task.resolve_label(&p) {
                        Some(l) => Ok(PredictionOutcome::Label(l.to_string())),
                        None => Err(BackendError::LabelOutOfSet {
                            label: p,
                            task: task.task_id.clone(),
                        }),
                    })
                    .collect()
            }
            HttpMode::Generator => {
                let texts = inputs
                    .iter()
                    .map(|i| seq2seq_from_rendered(i, task).map(|text| TextInput { text }))
                    .collect::<Result<Vec<_>, _>>()?;
                let req = GenerateRequest {
                    task: task.task_id.clone(),
                    model: self.model.clone(),
                    inputs: texts,
                };
                let resp: GenerateResponse = self.post(GENERATE_PATH, &req)?;
                check_len(resp.generations.len(), inputs.len())?;
                Ok(resp
                    .generations
                    .iter()
                    .map(|g| parse_generated_label(g, task))
                    .collect())
            }
        }
    }
}
