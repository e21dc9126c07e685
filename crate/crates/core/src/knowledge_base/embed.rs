use std::hash::Hasher;
use std::time::Duration;

use fnv::FnvHasher;
use serde_json::json;

use super::KbError;

/// Text to unit vector.
pub trait Embedder: Send + Sync {
    /// Stable identifier stored in index files.
    fn id(&self) -> String;
    fn embed(&self, text: &str) -> Result<Vec<f64>, KbError>;
}

pub fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, KbError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(KbError::NonFiniteVector);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(KbError::EmptyText);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "is", "it", "of", "on", "or", "the", "to",
    "with",
];

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
}

/// Offline embedder: signed feature hashing of lower-cased tokens.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 256 }
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> String {
        format!("hash-fnv1a-{}", self.dim)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, KbError> {
        let mut v = vec![0.0; self.dim];
        for tok in tokens(text) {
            let mut h = FnvHasher::default();
            h.write(tok.as_bytes());
            let h = h.finish();
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        normalize(v)
    }
}

/// Client for an OpenAI-style `/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote-{}", self.model)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, KbError> {
        let url = format!("{}/embeddings", self.base_url.trim_end_matches('/'));
        let mut req = ureq::post(&url).timeout(self.timeout);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp: serde_json::Value = req
            .send_json(json!({ "model": self.model, "input": text }))
            .map_err(|e| KbError::ProviderUnavailable(e.to_string()))?
            .into_json()
            .map_err(|e| KbError::ProviderUnavailable(e.to_string()))?;
        let vec = resp["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| KbError::ProviderUnavailable("response has no data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or(KbError::NonFiniteVector))
            .collect::<Result<Vec<f64>, _>>()?;
        normalize(vec)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}
