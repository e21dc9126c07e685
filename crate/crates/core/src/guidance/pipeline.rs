use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::backend::{Backend, BackendRequest, BackendResponse, StageSnapshot};
use super::schema::validate_payload;
use super::{GuidanceError, GuidanceNote, GuidancePacket, PipelineInput, Stage, StatusCheck};
use crate::knowledge_base::{build_context, pipeline_query, Context, KnowledgeBase, SearchFilter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Budget for the three backend stages together.
    pub deadline_ms: u64,
    pub top_k: usize,
    pub context_chars: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { deadline_ms: 800, top_k: 3, context_chars: 1500 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignRecord {
    pub query: String,
    pub provenance: Vec<String>,
    pub context_chars: usize,
    /// Retrieval failed and the chain ran without context.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub completed: bool,
    pub latency_ms: f64,
    /// Backend reply as received, kept for schema re-checks.
    pub raw: Option<String>,
    pub error: Option<GuidanceError>,
}

/// Outputs of one tick's chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub backend_id: String,
    pub align: AlignRecord,
    pub stages: Vec<StageRecord>,
    pub status_check: Option<StatusCheck>,
    pub guidance: Option<GuidanceNote>,
    pub packet: Option<GuidancePacket>,
}

impl ChainRecord {
    pub fn completed(&self) -> bool {
        self.stages.len() == 3 && self.stages.iter().all(|s| s.completed)
    }

    pub fn latency_ms(&self) -> f64 {
        self.stages.iter().map(|s| s.latency_ms).sum()
    }

    pub fn error(&self) -> Option<&GuidanceError> {
        self.stages.iter().find_map(|s| s.error.as_ref())
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

/// Retrieval and the three backend stages for one tick.
#[derive(Clone)]
pub struct Pipeline {
    backend: Arc<dyn Backend>,
    kb: Option<Arc<KnowledgeBase>>,
    config: PipelineConfig,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("backend", &self.backend.id()).field("config", &self.config).finish()
    }
}

fn parse<T: DeserializeOwned>(stage: Stage, tick: u64, resp: &BackendResponse) -> Result<T, GuidanceError> {
    let malformed = |reason: String| GuidanceError::MalformedResponse { stage, reason };
    let payload = resp.payload.as_ref().ok_or_else(|| malformed("reply is not JSON".into()))?;
    validate_payload(stage, payload).map_err(|e| malformed(e.join("; ")))?;
    if payload["tick"].as_u64() != Some(tick) {
        return Err(malformed(format!("reply is for tick {}, not {tick}", payload["tick"])));
    }
    serde_json::from_value(payload.clone()).map_err(|e| malformed(e.to_string()))
}

impl Pipeline {
    pub fn new(backend: Arc<dyn Backend>, kb: Option<Arc<KnowledgeBase>>, config: PipelineConfig) -> Self {
        Pipeline { backend, kb, config }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    /// Retrieval for the tick. Index errors give an empty, degraded context.
    pub fn stage_align(&self, input: &PipelineInput) -> (AlignRecord, Context) {
        let query = pipeline_query(input.task, &input.report);
        let hits = match &self.kb {
            Some(kb) => kb.search(&query, self.config.top_k, &SearchFilter::for_task(input.task.as_str())),
            None => Err(crate::knowledge_base::KbError::EmptyIndex),
        };
        match hits {
            Ok(hits) => {
                let ctx = build_context(&hits, self.config.context_chars);
                let rec = AlignRecord {
                    query,
                    provenance: ctx.provenance.clone(),
                    context_chars: ctx.text.chars().count(),
                    degraded: false,
                };
                (rec, ctx)
            }
            Err(e) => {
                tracing::debug!(tick = input.tick, error = %e, "align degraded");
                (AlignRecord { query, degraded: true, ..AlignRecord::default() }, Context::default())
            }
        }
    }

    pub fn run(&self, input: &PipelineInput) -> ChainRecord {
        let (align, ctx) = self.stage_align(input);
        let mut rec = ChainRecord {
            backend_id: self.backend.id(),
            align,
            stages: Vec::with_capacity(3),
            status_check: None,
            guidance: None,
            packet: None,
        };
        let mut snapshot =
            StageSnapshot { input: input.clone(), status: None, guidance: None, provenance: ctx.provenance.clone() };
        let deadline = self.config.deadline_ms as f64;
        let mut used_ms = 0.0;
        for stage in Stage::ALL {
            let left_ms = deadline - used_ms;
            let mut srec = StageRecord { stage, completed: false, latency_ms: 0.0, raw: None, error: None };
            let timeout = GuidanceError::BackendTimeout { stage, deadline_ms: self.config.deadline_ms };
            if left_ms <= 0.0 {
                srec.error = Some(timeout);
                rec.stages.push(srec);
                break;
            }
            let request = BackendRequest {
                stage,
                prompt_id: stage.prompt_id().to_string(),
                system_prompt: stage.prompt_template().replace("{context}", &ctx.text),
                context: ctx.text.clone(),
                snapshot: snapshot.clone(),
                schema_id: stage.schema_id().to_string(),
            };
            let result = self.backend.complete(&request, Duration::from_secs_f64(left_ms / 1000.0));
            let outcome = result.and_then(|resp| {
                srec.latency_ms = resp.latency_ms;
                srec.raw = Some(resp.raw.clone());
                if used_ms + resp.latency_ms > deadline {
                    return Err(timeout.clone());
                }
                match stage {
                    Stage::StatusCheck => parse(stage, input.tick, &resp).map(|s| snapshot.status = Some(s)),
                    Stage::Guidance => parse(stage, input.tick, &resp).map(|g| snapshot.guidance = Some(g)),
                    Stage::Format => parse::<GuidancePacket>(stage, input.tick, &resp).and_then(|p| {
                        p.check_invariants()?;
                        rec.packet = Some(p);
                        Ok(())
                    }),
                }
            });
            used_ms += srec.latency_ms;
            match outcome {
                Ok(()) => {
                    srec.completed = true;
                    rec.stages.push(srec);
                }
                Err(e) => {
                    if let GuidanceError::BackendTimeout { .. } = e {
                        srec.error = Some(timeout);
                        srec.latency_ms = srec.latency_ms.max(left_ms);
                    } else {
                        srec.error = Some(e);
                    }
                    rec.stages.push(srec);
                    break;
                }
            }
        }
        rec.status_check = snapshot.status;
        rec.guidance = snapshot.guidance;
        rec
    }
}
