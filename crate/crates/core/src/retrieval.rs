//! Chunk embedding, the immutable retrieval index, and top-k cosine search.
//!
//! The default embedder is a deterministic feature-hashing model: each
//! lowercased alphanumeric token is hashed with 64-bit FNV-1a and counted in
//! bucket `hash % 256`; the count vector is then L2-normalized. Any other
//! embedder can be plugged in through [`Embedder`] as long as it produces
//! unit-norm vectors of the same dimension.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Chunk;
use crate::text::tokenize;

pub const EMBEDDING_DIM: usize = 256;

/// Snippets retrieved for lessons and chat when the caller does not say.
pub const DEFAULT_TOP_K: usize = 4;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("text contains no alphanumeric tokens")]
    EmptyText,
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no embeddable chunks; index would be empty")]
    EmptyIndex,
    #[error("the retrieval index is empty")]
    EmptyIndexQueried,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("duplicate chunk id `{0}`")]
    DuplicateChunk(String),
}

/// 64-bit FNV-1a over the UTF-8 bytes of `token`.
pub fn fnv1a_64(token: &str) -> u64 {
    token.bytes().fold(FNV_OFFSET_BASIS, |hash, b| (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `raw` to unit length. Fails on the zero vector.
    pub fn normalized(raw: Vec<f64>) -> Result<Self, RetrievalError> {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(RetrievalError::EmptyText);
        }
        Ok(Self(raw.into_iter().map(|v| v / norm).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;
}

/// Deterministic feature-hashing embedder; needs no model or network.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        embed_text(text)
    }
}

pub fn embed_text(text: &str) -> Result<EmbeddingVector, RetrievalError> {
    let mut raw = vec![0.0; EMBEDDING_DIM];
    let mut any = false;
    for token in tokenize(text) {
        raw[(fnv1a_64(&token) % EMBEDDING_DIM as u64) as usize] += 1.0;
        any = true;
    }
    if !any {
        return Err(RetrievalError::EmptyText);
    }
    EmbeddingVector::normalized(raw)
}

/// Dot product of two unit vectors.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if a.dim() != b.dim() {
        return Err(RetrievalError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub embedding: EmbeddingVector,
}

/// Immutable set of embedded chunks. Rebuild to change it.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    entries: Vec<IndexEntry>,
    skipped_count: usize,
    built_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSnippet {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    pub score: f64,
    pub rank: usize,
}

pub fn build_index(chunks: &[Chunk]) -> Result<RetrievalIndex, RetrievalError> {
    RetrievalIndex::build(chunks, &HashEmbedder)
}

impl RetrievalIndex {
    /// Embeds every chunk, skipping (and counting) those without tokens.
    pub fn build(chunks: &[Chunk], embedder: &dyn Embedder) -> Result<Self, RetrievalError> {
        let mut entries = Vec::with_capacity(chunks.len());
        let mut seen = std::collections::HashSet::new();
        let mut skipped_count = 0;
        for chunk in chunks {
            if !seen.insert(chunk.chunk_id.as_str()) {
                return Err(RetrievalError::DuplicateChunk(chunk.chunk_id.clone()));
            }
            match embedder.embed(&chunk.text) {
                Ok(embedding) => entries.push(IndexEntry {
                    chunk_id: chunk.chunk_id.clone(),
                    doc_id: chunk.doc_id.clone(),
                    text: chunk.text.clone(),
                    embedding,
                }),
                Err(RetrievalError::EmptyText) => skipped_count += 1,
                Err(e) => return Err(e),
            }
        }
        if entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        Ok(Self { entries, skipped_count, built_at: Utc::now() })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn skipped_count(&self) -> usize {
        self.skipped_count
    }

    pub fn built_at(&self) -> DateTime<Utc> {
        self.built_at
    }

    pub fn contains(&self, chunk_id: &str) -> bool {
        self.entries.iter().any(|e| e.chunk_id == chunk_id)
    }

    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<RetrievedSnippet>, RetrievalError> {
        self.retrieve_with(query, k, &HashEmbedder)
    }

    /// Top-k entries by (score desc, chunk_id asc), selected with a bounded heap.
    pub fn retrieve_with(
        &self,
        query: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<RetrievedSnippet>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        let q = embedder.embed(query)?;
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyIndexQueried);
        }

        // Max-heap on "worseness": the heap top is the weakest kept candidate.
        let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k + 1);
        for entry in &self.entries {
            let score = cosine_similarity(&q, &entry.embedding)?;
            let cand = Candidate { score, entry };
            if heap.len() < k {
                heap.push(cand);
            } else if let Some(worst) = heap.peek() {
                if cand < *worst {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }

        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .enumerate()
            .map(|(i, c)| RetrievedSnippet {
                chunk_id: c.entry.chunk_id.clone(),
                doc_id: c.entry.doc_id.clone(),
                text: c.entry.text.clone(),
                score: c.score,
                rank: i + 1,
            })
            .collect())
    }
}

/// Orders candidates best-first: `a < b` means `a` ranks ahead of `b`.
struct Candidate<'a> {
    score: f64,
    entry: &'a IndexEntry,
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then_with(|| self.entry.chunk_id.cmp(&other.entry.chunk_id))
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}
