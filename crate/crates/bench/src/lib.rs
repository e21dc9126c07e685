//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use kinetrain_core::knowledge_base::{ChunkParams, HashEmbedder, KnowledgeBase, KnowledgeDoc, Tier};

const WORDS: [&str; 16] = [
    "bank", "pitch", "altitude", "heading", "airspeed", "trim", "rudder", "aileron", "elevator", "flare", "glide",
    "climb", "turn", "level", "descent", "power",
];

/// A corpus of `n` single-paragraph documents, about one chunk each.
pub fn synthetic_kb(n: usize) -> KnowledgeBase {
    let docs: Vec<KnowledgeDoc> = (0..n)
        .map(|i| {
            let body: Vec<&str> = (0..24).map(|j| WORDS[(i * 7 + j * 3 + i / 16) % WORDS.len()]).collect();
            KnowledgeDoc {
                doc_id: format!("doc-{i:04}"),
                tier: Tier::ALL[i % Tier::ALL.len()],
                title: format!("Doc {i}"),
                body: body.join(" "),
                tags: Vec::new(),
            }
        })
        .collect();
    KnowledgeBase::build(&docs, Arc::new(HashEmbedder::default()), &ChunkParams::default()).expect("corpus")
}
