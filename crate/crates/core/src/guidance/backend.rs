use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::oracle::{oracle_guidance, oracle_packet, oracle_status};
use super::schema::schema_for;
use super::{GuidanceError, GuidanceNote, PipelineInput, Stage, StatusCheck};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub stage: Stage,
    pub prompt_id: String,
    /// Prompt template with the retrieved context filled in.
    pub system_prompt: String,
    pub context: String,
    pub snapshot: StageSnapshot,
    pub schema_id: String,
}

/// Structured user message for a stage: the tick input plus the outputs of
/// earlier stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSnapshot {
    pub input: PipelineInput,
    #[serde(default)]
    pub status: Option<StatusCheck>,
    #[serde(default)]
    pub guidance: Option<GuidanceNote>,
    #[serde(default)]
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub raw: String,
    /// `raw` parsed as JSON; `None` when it does not parse.
    pub payload: Option<Value>,
    pub latency_ms: f64,
    pub backend_id: String,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    /// Answers one stage. `budget` is the time left before the tick
    /// deadline.
    fn complete(&self, request: &BackendRequest, budget: Duration) -> Result<BackendResponse, GuidanceError>;
}

/// Deterministic rule-table backend. `delay` is slept per call and reported
/// as the call latency.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleBackend {
    pub delay: Duration,
}

impl OracleBackend {
    pub fn new() -> Self {
        OracleBackend::default()
    }

    pub fn with_delay(delay: Duration) -> Self {
        OracleBackend { delay }
    }
}

impl Backend for OracleBackend {
    fn id(&self) -> String {
        "oracle".to_string()
    }

    fn complete(&self, request: &BackendRequest, budget: Duration) -> Result<BackendResponse, GuidanceError> {
        if self.delay > budget {
            thread::sleep(budget);
            return Err(GuidanceError::BackendTimeout { stage: request.stage, deadline_ms: budget.as_millis() as u64 });
        }
        if !self.delay.is_zero() {
            thread::sleep(self.delay);
        }
        let s = &request.snapshot;
        let payload = match request.stage {
            Stage::StatusCheck => serde_json::to_value(oracle_status(&s.input)),
            Stage::Guidance => {
                let status = s.status.clone().unwrap_or_else(|| oracle_status(&s.input));
                serde_json::to_value(oracle_guidance(&s.input, &status))
            }
            Stage::Format => {
                let note = match &s.guidance {
                    Some(n) => n.clone(),
                    None => oracle_guidance(&s.input, &oracle_status(&s.input)),
                };
                serde_json::to_value(oracle_packet(&s.input, &note, &s.provenance))
            }
        }
        .expect("oracle payloads serialize");
        Ok(BackendResponse {
            raw: payload.to_string(),
            payload: Some(payload),
            latency_ms: self.delay.as_secs_f64() * 1000.0,
            backend_id: self.id(),
        })
    }
}

/// Client for an OpenAI-style `/chat/completions` endpoint with a JSON
/// schema response format.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Extra attempts after a transport failure.
    pub max_retries: u32,
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        RemoteBackend { base_url: base_url.into(), model: model.into(), api_key, max_retries: 2 }
    }

    fn body(&self, request: &BackendRequest) -> Value {
        json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                { "role": "system", "content": request.system_prompt },
                { "role": "user", "content": serde_json::to_string(&request.snapshot).unwrap_or_default() }
            ],
            "response_format": {
                "type": "json_schema",
                "json_schema": {
                    "name": request.schema_id.replace('.', "_"),
                    "schema": schema_for(request.stage),
                }
            }
        })
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn complete(&self, request: &BackendRequest, budget: Duration) -> Result<BackendResponse, GuidanceError> {
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let body = self.body(request);
        let start = Instant::now();
        let timeout = || GuidanceError::BackendTimeout { stage: request.stage, deadline_ms: budget.as_millis() as u64 };
        let mut last_err = String::new();
        for _ in 0..=self.max_retries {
            let left = budget.checked_sub(start.elapsed()).filter(|d| !d.is_zero()).ok_or_else(timeout)?;
            let mut req = ureq::post(&url).timeout(left);
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            match req.send_json(&body) {
                Ok(resp) => {
                    let v: Value = resp.into_json().map_err(|e| GuidanceError::MalformedResponse {
                        stage: request.stage,
                        reason: format!("response body: {e}"),
                    })?;
                    let raw = v["choices"][0]["message"]["content"]
                        .as_str()
                        .ok_or_else(|| GuidanceError::MalformedResponse {
                            stage: request.stage,
                            reason: "no choices[0].message.content".into(),
                        })?
                        .to_string();
                    return Ok(BackendResponse {
                        payload: serde_json::from_str(&raw).ok(),
                        raw,
                        latency_ms: start.elapsed().as_secs_f64() * 1000.0,
                        backend_id: self.id(),
                    });
                }
                Err(ureq::Error::Status(code, _)) if code < 500 => {
                    return Err(GuidanceError::ProviderUnavailable { reason: format!("HTTP {code}") });
                }
                Err(e) => last_err = e.to_string(),
            }
            if start.elapsed() >= budget {
                return Err(timeout());
            }
        }
        Err(GuidanceError::ProviderUnavailable { reason: last_err })
    }
}
