use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chunk::Chunk;
use super::embed::cosine;
use super::{KbError, Tier};

const MAGIC: &[u8; 4] = b"KTIX";
const VERSION: u32 = 1;

/// Restricts which chunks a search may return.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchFilter {
    /// Allowed tiers; empty allows all.
    pub tiers: BTreeSet<Tier>,
    /// Every one of these tags must be present.
    pub require_tags: Vec<String>,
    /// Chunks tagged for a task (`task:<id>`) must name this task.
    /// Untagged chunks always pass.
    pub task: Option<String>,
}

impl SearchFilter {
    pub fn for_task(task: &str) -> Self {
        SearchFilter { task: Some(task.to_string()), ..SearchFilter::default() }
    }

    pub fn accepts(&self, chunk: &Chunk) -> bool {
        if !self.tiers.is_empty() && !self.tiers.contains(&chunk.tier) {
            return false;
        }
        if !self.require_tags.iter().all(|t| chunk.tags.contains(t)) {
            return false;
        }
        match &self.task {
            Some(task) => {
                let mut task_tags = chunk.tags.iter().filter_map(|t| t.strip_prefix("task:")).peekable();
                task_tags.peek().is_none() || task_tags.any(|t| t == task)
            }
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk: Chunk,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Exact cosine index over a flat list of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    embedder_id: String,
    chunks: Vec<Chunk>,
    vectors: Vec<Vec<f64>>,
}

impl VectorIndex {
    pub fn new(dim: usize, embedder_id: impl Into<String>) -> Self {
        VectorIndex { dim, embedder_id: embedder_id.into(), chunks: Vec::new(), vectors: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn add(&mut self, chunk: Chunk, vector: Vec<f64>) -> Result<(), KbError> {
        if vector.len() != self.dim {
            return Err(KbError::DimensionMismatch { expected: self.dim, got: vector.len() });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(KbError::NonFiniteVector);
        }
        self.chunks.push(chunk);
        self.vectors.push(vector);
        Ok(())
    }

    /// Top `k` chunks by cosine similarity. Equal scores order by chunk id.
    pub fn search(&self, query: &[f64], k: usize, filter: &SearchFilter) -> Result<Vec<RetrievalHit>, KbError> {
        if self.is_empty() {
            return Err(KbError::EmptyIndex);
        }
        if query.len() != self.dim {
            return Err(KbError::DimensionMismatch { expected: self.dim, got: query.len() });
        }
        let mut scored: Vec<(f64, usize)> = self
            .chunks
            .iter()
            .enumerate()
            .filter(|(_, c)| filter.accepts(c))
            .map(|(i, _)| (cosine(query, &self.vectors[i]), i))
            .collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0).then_with(|| self.chunks[a.1].chunk_id.cmp(&self.chunks[b.1].chunk_id))
        });
        Ok(scored
            .into_iter()
            .take(k.max(1))
            .enumerate()
            .map(|(r, (score, i))| RetrievalHit { chunk: self.chunks[i].clone(), score, rank: r + 1 })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), KbError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.chunks.len() as u64).to_le_bytes())?;
        write_bytes(&mut w, self.embedder_id.as_bytes())?;
        for (chunk, vector) in self.chunks.iter().zip(&self.vectors) {
            let json = serde_json::to_vec(chunk).map_err(|e| KbError::CorruptIndex(e.to_string()))?;
            write_bytes(&mut w, &json)?;
            for x in vector {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<VectorIndex, KbError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(corrupt)?;
        if &magic != MAGIC {
            return Err(KbError::CorruptIndex("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(KbError::CorruptIndex(format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let mut count = [0u8; 8];
        r.read_exact(&mut count).map_err(corrupt)?;
        let count = u64::from_le_bytes(count);
        let embedder_id = String::from_utf8(read_bytes(&mut r)?).map_err(|e| KbError::CorruptIndex(e.to_string()))?;
        let mut index = VectorIndex::new(dim, embedder_id);
        for _ in 0..count {
            let chunk: Chunk =
                serde_json::from_slice(&read_bytes(&mut r)?).map_err(|e| KbError::CorruptIndex(e.to_string()))?;
            let mut vector = Vec::with_capacity(dim);
            let mut buf = [0u8; 8];
            for _ in 0..dim {
                r.read_exact(&mut buf).map_err(corrupt)?;
                vector.push(f64::from_le_bytes(buf));
            }
            index.add(chunk, vector)?;
        }
        Ok(index)
    }
}

fn corrupt(e: std::io::Error) -> KbError {
    KbError::CorruptIndex(e.to_string())
}

fn write_bytes(w: &mut impl Write, b: &[u8]) -> std::io::Result<()> {
    w.write_all(&(b.len() as u32).to_le_bytes())?;
    w.write_all(b)
}

fn read_u32(r: &mut impl Read) -> Result<u32, KbError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(corrupt)?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes(r: &mut impl Read) -> Result<Vec<u8>, KbError> {
    let n = read_u32(r)? as usize;
    if n > 64 << 20 {
        return Err(KbError::CorruptIndex(format!("record length {n}")));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(corrupt)?;
    Ok(b)
}
