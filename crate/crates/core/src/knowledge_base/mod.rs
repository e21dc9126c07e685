//! Tiered flight-knowledge store with exact cosine retrieval.

mod chunk;
mod context;
mod embed;
mod index;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{ingest, Chunk, ChunkParams};
pub use context::{build_context, pipeline_query, Context, CONTEXT_SEPARATOR};
pub use embed::{cosine, normalize, tokens, Embedder, HashEmbedder, RemoteEmbedder};
pub use index::{RetrievalHit, SearchFilter, VectorIndex};

#[derive(Debug, Error)]
pub enum KbError {
    #[error("document {0} has an empty body")]
    EmptyDocument(String),
    #[error("text has no indexable tokens")]
    EmptyText,
    #[error("embedding has non-finite entries")]
    NonFiniteVector,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("invalid document {0}")]
    InvalidDoc(String),
    #[error("index was built with embedder {index}, not {embedder}")]
    EmbedderMismatch { index: String, embedder: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Basic,
    AircraftType,
    MissionSpecific,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Basic, Tier::AircraftType, Tier::MissionSpecific];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Basic => "basic",
            Tier::AircraftType => "aircraft_type",
            Tier::MissionSpecific => "mission_specific",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tier::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| KbError::InvalidDoc(format!("unknown tier {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeDoc {
    pub doc_id: String,
    pub tier: Tier,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrontMatter {
    tier: Tier,
    title: String,
    #[serde(default)]
    tags: Vec<String>,
    doc_id: Option<String>,
}

impl KnowledgeDoc {
    /// Parses a document with a `+++` delimited TOML header:
    ///
    /// ```text
    /// +++
    /// tier = "basic"
    /// title = "Bank and turn rate"
    /// tags = ["task:steep_turn", "attitude indicator"]
    /// +++
    /// Body paragraphs...
    /// ```
    ///
    /// `doc_id` defaults to `default_id` when the header has none.
    pub fn parse(text: &str, default_id: &str) -> Result<KnowledgeDoc, KbError> {
        let bad = |m: String| KbError::InvalidDoc(format!("{default_id}: {m}"));
        let rest = text
            .trim_start_matches('\u{feff}')
            .strip_prefix("+++")
            .ok_or_else(|| bad("missing +++ front matter".into()))?;
        let end = rest.find("\n+++").ok_or_else(|| bad("unterminated front matter".into()))?;
        let fm: FrontMatter = toml::from_str(&rest[..end]).map_err(|e| bad(e.to_string()))?;
        let body = rest[end + 4..].trim_start_matches(['\r', '\n']).trim_end().to_string();
        let doc = KnowledgeDoc {
            doc_id: fm.doc_id.unwrap_or_else(|| default_id.to_string()),
            tier: fm.tier,
            title: fm.title,
            body,
            tags: fm.tags,
        };
        if doc.body.trim().is_empty() {
            return Err(KbError::EmptyDocument(doc.doc_id));
        }
        Ok(doc)
    }
}

/// Reads every `.md` and `.txt` file in `dir`, sorted by file name.
pub fn load_corpus(dir: &Path) -> Result<Vec<KnowledgeDoc>, KbError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("md" | "txt")))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("doc");
            KnowledgeDoc::parse(&std::fs::read_to_string(p)?, stem)
        })
        .collect()
}

macro_rules! corpus_files {
    ($($name:literal),* $(,)?) => {
        [$(($name, include_str!(concat!("../../resources/corpus/", $name, ".md")))),*]
    };
}

const BUILTIN_CORPUS: [(&str, &str); 12] = corpus_files![
    "attitude_flying",
    "trim_and_pitch",
    "turn_dynamics",
    "energy_management",
    "airframe_handling",
    "airframe_limits",
    "landing_gear",
    "straight_level_procedure",
    "takeoff_climb_procedure",
    "steep_turn_procedure",
    "deadstick_procedure",
    "instrument_scan",
];

/// The fixture corpus shipped with the crate.
pub fn builtin_corpus() -> Vec<KnowledgeDoc> {
    BUILTIN_CORPUS.iter().map(|(id, text)| KnowledgeDoc::parse(text, id).expect("builtin corpus parses")).collect()
}

/// Text embedded for a chunk: title, tags and body.
pub fn embedding_text(chunk: &Chunk) -> String {
    format!("{}\n{}\n{}", chunk.title, chunk.tags.join(" "), chunk.text)
}

/// Embedder plus index. Reads are `&self` and may run concurrently.
#[derive(Clone)]
pub struct KnowledgeBase {
    embedder: Arc<dyn Embedder>,
    index: VectorIndex,
}

impl fmt::Debug for KnowledgeBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeBase")
            .field("embedder", &self.embedder.id())
            .field("chunks", &self.index.len())
            .finish()
    }
}

impl KnowledgeBase {
    /// An index with no chunks; every search returns `EmptyIndex`.
    pub fn empty(embedder: Arc<dyn Embedder>, dim: usize) -> Self {
        let index = VectorIndex::new(dim, embedder.id());
        KnowledgeBase { embedder, index }
    }

    pub fn build(docs: &[KnowledgeDoc], embedder: Arc<dyn Embedder>, params: &ChunkParams) -> Result<Self, KbError> {
        let mut index: Option<VectorIndex> = None;
        for doc in docs {
            for chunk in ingest(doc, params)? {
                let v = embedder.embed(&embedding_text(&chunk))?;
                let idx = index.get_or_insert_with(|| VectorIndex::new(v.len(), embedder.id()));
                idx.add(chunk, v)?;
            }
        }
        let index = index.ok_or(KbError::EmptyIndex)?;
        Ok(KnowledgeBase { embedder, index })
    }

    /// Builtin corpus under the hashing embedder.
    pub fn builtin() -> Self {
        KnowledgeBase::build(&builtin_corpus(), Arc::new(HashEmbedder::default()), &ChunkParams::default())
            .expect("builtin corpus indexes")
    }

    /// Loads an index file; the embedder must be the one it was built with.
    pub fn load(path: &Path, embedder: Arc<dyn Embedder>) -> Result<Self, KbError> {
        let index = VectorIndex::load(path)?;
        if index.embedder_id() != embedder.id() {
            return Err(KbError::EmbedderMismatch { index: index.embedder_id().to_string(), embedder: embedder.id() });
        }
        Ok(KnowledgeBase { embedder, index })
    }

    pub fn save(&self, path: &Path) -> Result<(), KbError> {
        self.index.save(path)
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn search(&self, query: &str, k: usize, filter: &SearchFilter) -> Result<Vec<RetrievalHit>, KbError> {
        if self.index.is_empty() {
            return Err(KbError::EmptyIndex);
        }
        let q = self.embedder.embed(query)?;
        self.index.search(&q, k, filter)
    }
}
