use serde::{Deserialize, Serialize};

use super::{KbError, KnowledgeDoc, Tier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub max_chunk_chars: usize,
    /// Optional cap on paragraphs per chunk.
    pub max_paragraphs: Option<usize>,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams { max_chunk_chars: 600, max_paragraphs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub tier: Tier,
    pub title: String,
    pub tags: Vec<String>,
    pub position: usize,
    pub text: String,
}

/// Byte spans of the non-blank paragraphs in `body`.
fn paragraph_spans(body: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut end = 0;
    let mut offset = 0;
    for line in body.split_inclusive('\n') {
        let content = line.trim_end_matches(['\n', '\r']);
        if content.trim().is_empty() {
            if let Some(s) = start.take() {
                spans.push((s, end));
            }
        } else {
            if start.is_none() {
                start = Some(offset + (content.len() - content.trim_start().len()));
            }
            end = offset + content.trim_end().len();
        }
        offset += line.len();
    }
    if let Some(s) = start {
        spans.push((s, end));
    }
    spans
}

/// Splits an over-long span at whitespace so every piece fits `max`.
fn split_long(body: &str, (s, e): (usize, usize), max: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = s;
    while e - start > max {
        let window = &body[start..start + floor_char_boundary(&body[start..], max)];
        let cut = window.rfind(char::is_whitespace).filter(|&i| i > 0).unwrap_or(window.len());
        let piece_end = start + body[start..start + cut].trim_end().len();
        out.push((start, piece_end.max(start + 1)));
        let rest = &body[start + cut..e];
        start = start + cut + (rest.len() - rest.trim_start().len());
    }
    if start < e {
        out.push((start, e));
    }
    out
}

fn floor_char_boundary(s: &str, i: usize) -> usize {
    let mut i = i.min(s.len());
    while !s.is_char_boundary(i) {
        i -= 1;
    }
    i.max(s.chars().next().map_or(0, char::len_utf8))
}

/// Packs paragraphs into chunks of at most `max_chunk_chars` bytes.
/// Chunks are slices of the body in order; only inter-paragraph whitespace
/// falls between them.
pub fn ingest(doc: &KnowledgeDoc, params: &ChunkParams) -> Result<Vec<Chunk>, KbError> {
    if doc.body.trim().is_empty() {
        return Err(KbError::EmptyDocument(doc.doc_id.clone()));
    }
    let max = params.max_chunk_chars.max(1);
    let pieces: Vec<(usize, usize)> =
        paragraph_spans(&doc.body).into_iter().flat_map(|span| split_long(&doc.body, span, max)).collect();

    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut count = 0;
    for (s, e) in pieces {
        match groups.last_mut() {
            Some(g) if e - g.0 <= max && params.max_paragraphs.map_or(true, |m| count < m) => {
                g.1 = e;
                count += 1;
            }
            _ => {
                groups.push((s, e));
                count = 1;
            }
        }
    }

    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(position, (s, e))| Chunk {
            chunk_id: format!("{}#{position:04}", doc.doc_id),
            doc_id: doc.doc_id.clone(),
            tier: doc.tier,
            title: doc.title.clone(),
            tags: doc.tags.clone(),
            position,
            text: doc.body[s..e].to_string(),
        })
        .collect())
}
