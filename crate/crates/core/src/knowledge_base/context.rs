use serde::{Deserialize, Serialize};

use super::index::RetrievalHit;
use crate::task_standards::{DeviationReport, TaskId};

pub const CONTEXT_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub text: String,
    /// chunk_ids of the included hits, in rank order.
    pub provenance: Vec<String>,
}

impl Context {
    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }
}

/// Joins hit texts in rank order. Stops at the first hit that would push the
/// text past `char_budget` characters.
pub fn build_context(hits: &[RetrievalHit], char_budget: usize) -> Context {
    let mut ctx = Context::default();
    let mut used = 0;
    for hit in hits {
        let sep = if ctx.provenance.is_empty() { 0 } else { CONTEXT_SEPARATOR.len() };
        let n = hit.chunk.text.chars().count();
        if used + sep + n > char_budget {
            break;
        }
        if sep > 0 {
            ctx.text.push_str(CONTEXT_SEPARATOR);
        }
        ctx.text.push_str(&hit.chunk.text);
        ctx.provenance.push(hit.chunk.chunk_id.clone());
        used += sep + n;
    }
    ctx
}

/// Retrieval query for one tick: task, phase and worst metric, or
/// "maintain" when everything is in band.
pub fn pipeline_query(task: TaskId, report: &DeviationReport) -> String {
    let focus = match report.worst {
        Some(m) if !report.all_in_band() => m.display_name().to_string(),
        _ => "maintain".to_string(),
    };
    format!("{} {} {}", task.display_name(), report.phase.replace('_', " "), focus)
}
