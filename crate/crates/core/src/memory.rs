//! Data carried between pipeline steps: the raw memory, its prepared index,
//! relevancy scores and the retrieved subset.

use std::fmt;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::kernels::bm25::InvertedIndex;

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix data",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // chunks_exact panics on 0; an empty-width matrix still has `rows` rows
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "matrix row",
                expected: self.cols,
                actual: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoreKind {
    TokenKeys,
    Corpus,
    MemoryEmbeddings,
}

impl fmt::Display for StoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoreKind::TokenKeys => "TokenKeys",
            StoreKind::Corpus => "Corpus",
            StoreKind::MemoryEmbeddings => "MemoryEmbeddings",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Entries {
    Vectors(Matrix),
    Documents(Vec<String>),
}

/// The raw memory: token keys, a document corpus, or memory embeddings.
///
/// Entry ids are the insertion positions, so they are dense and start at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    kind: StoreKind,
    entries: Entries,
}

impl MemoryStore {
    pub fn token_keys(entry_dim: usize) -> Self {
        Self::empty_vectors(StoreKind::TokenKeys, entry_dim)
    }

    pub fn memory_embeddings(entry_dim: usize) -> Self {
        Self::empty_vectors(StoreKind::MemoryEmbeddings, entry_dim)
    }

    fn empty_vectors(kind: StoreKind, entry_dim: usize) -> Self {
        Self {
            kind,
            entries: Entries::Vectors(Matrix::zeros(0, entry_dim)),
        }
    }

    pub fn corpus() -> Self {
        Self {
            kind: StoreKind::Corpus,
            entries: Entries::Documents(Vec::new()),
        }
    }

    /// Builds a vector store from a matrix, one entry per row.
    pub fn from_matrix(kind: StoreKind, m: Matrix) -> Result<Self> {
        if kind == StoreKind::Corpus {
            return Err(Error::IncompatibleStore {
                store: kind.to_string(),
                method: "vector entries".into(),
            });
        }
        if m.cols() == 0 {
            return Err(Error::hyper("entry_dim", "must be positive"));
        }
        Ok(Self {
            kind,
            entries: Entries::Vectors(m),
        })
    }

    pub fn from_documents<I, S>(docs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            kind: StoreKind::Corpus,
            entries: Entries::Documents(docs.into_iter().map(Into::into).collect()),
        }
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    pub fn entry_count(&self) -> usize {
        match &self.entries {
            Entries::Vectors(m) => m.rows(),
            Entries::Documents(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entry_count() == 0
    }

    /// Embedding width; 0 for a corpus.
    pub fn entry_dim(&self) -> usize {
        match &self.entries {
            Entries::Vectors(m) => m.cols(),
            Entries::Documents(_) => 0,
        }
    }

    pub fn vectors(&self) -> Option<&Matrix> {
        match &self.entries {
            Entries::Vectors(m) => Some(m),
            Entries::Documents(_) => None,
        }
    }

    pub fn documents(&self) -> Option<&[String]> {
        match &self.entries {
            Entries::Documents(d) => Some(d),
            Entries::Vectors(_) => None,
        }
    }

    /// Appends a vector entry and returns its id.
    pub fn push_vector(&mut self, v: &[f32]) -> Result<usize> {
        match &mut self.entries {
            Entries::Vectors(m) => {
                m.push_row(v)?;
                Ok(m.rows() - 1)
            }
            Entries::Documents(_) => Err(Error::IncompatibleStore {
                store: self.kind.to_string(),
                method: "vector entries".into(),
            }),
        }
    }

    pub fn push_document(&mut self, doc: impl Into<String>) -> Result<usize> {
        match &mut self.entries {
            Entries::Documents(d) => {
                d.push(doc.into());
                Ok(d.len() - 1)
            }
            Entries::Vectors(_) => Err(Error::IncompatibleStore {
                store: self.kind.to_string(),
                method: "document entries".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    IndexerVectors,
    BlockPools,
    PageMinMax,
    InvertedIndex,
    Identity,
}

impl IndexKind {
    pub fn name(self) -> &'static str {
        match self {
            IndexKind::IndexerVectors => "IndexerVectors",
            IndexKind::BlockPools => "BlockPools",
            IndexKind::PageMinMax => "PageMinMax",
            IndexKind::InvertedIndex => "InvertedIndex",
            IndexKind::Identity => "Identity",
        }
    }
}

/// Per-logical-page channel extremes.
#[derive(Debug, Clone, PartialEq)]
pub struct PageBounds {
    pub logical_page_size: usize,
    pub mins: Matrix,
    pub maxs: Matrix,
}

/// The prepared form of a [`MemoryStore`].
#[derive(Debug, Clone, PartialEq)]
pub enum IndexPayload {
    /// One key indexing vector per token.
    IndexerVectors(Matrix),
    /// Mean-pooled vector per block of `block_size` tokens.
    BlockPools {
        block_size: usize,
        pools: Matrix,
    },
    PageMinMax(PageBounds),
    InvertedIndex(InvertedIndex),
    /// The store itself serves as the index.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryIndex {
    pub payload: IndexPayload,
    pub source_entry_count: usize,
}

impl MemoryIndex {
    pub fn kind(&self) -> IndexKind {
        match self.payload {
            IndexPayload::IndexerVectors(_) => IndexKind::IndexerVectors,
            IndexPayload::BlockPools { .. } => IndexKind::BlockPools,
            IndexPayload::PageMinMax(_) => IndexKind::PageMinMax,
            IndexPayload::InvertedIndex(_) => IndexKind::InvertedIndex,
            IndexPayload::Identity => IndexKind::Identity,
        }
    }

    pub(crate) fn wrong_kind(&self, expected: IndexKind) -> Error {
        Error::WrongIndexKind {
            expected: expected.name(),
            actual: self.kind().name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Token,
    Block,
    Page,
    Document,
    Memory,
}

/// Scores produced by Compute Relevancy; higher means more relevant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelevancyScores {
    pub scores: Vec<(usize, f32)>,
    pub granularity: Option<Granularity>,
}

impl RelevancyScores {
    pub fn new(granularity: Granularity, scores: Vec<(usize, f32)>) -> Self {
        Self {
            scores,
            granularity: Some(granularity),
        }
    }

    /// Scores indexed densely by entry id.
    pub fn dense(granularity: Granularity, values: impl IntoIterator<Item = f32>) -> Self {
        Self::new(granularity, values.into_iter().enumerate().collect())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.scores.iter().all(|(_, s)| s.is_finite())
    }
}

/// Entries selected by Retrieval, optionally with their (combined) vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievedSet {
    pub ids: Vec<usize>,
    pub embeddings: Option<Matrix>,
}

impl RetrievedSet {
    pub fn from_ids(ids: Vec<usize>) -> Self {
        Self {
            ids,
            embeddings: None,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Current input `x_t`: either per-head query vectors or lexical terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Query {
    pub vectors: Option<Matrix>,
    pub head_weights: Option<Vec<f32>>,
    pub terms: Option<Vec<String>>,
}

impl Query {
    pub fn vectors(vectors: Matrix) -> Self {
        Self {
            vectors: Some(vectors),
            ..Self::default()
        }
    }

    pub fn single(v: Vec<f32>) -> Self {
        let n = v.len();
        Self::vectors(Matrix {
            rows: 1,
            cols: n,
            data: v,
        })
    }

    pub fn with_head_weights(mut self, w: Vec<f32>) -> Self {
        self.head_weights = Some(w);
        self
    }

    pub fn terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            terms: Some(terms.into_iter().map(Into::into).collect()),
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match (&self.vectors, &self.terms) {
            (Some(_), Some(_)) => return Err(Error::QueryMode("both vectors and terms are set")),
            (None, None) => return Err(Error::QueryMode("query is empty")),
            _ => {}
        }
        if let (Some(v), Some(w)) = (&self.vectors, &self.head_weights) {
            if v.rows() != w.len() {
                return Err(Error::DimensionMismatch {
                    context: "head weights",
                    expected: v.rows(),
                    actual: w.len(),
                });
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::hyper(
                    "head_weights",
                    "must be finite and non-negative",
                ));
            }
        }
        Ok(())
    }
}

/// Work counters for one executed step. Counters add across sub-operations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepCounters {
    pub flops: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub wall_time_seconds: f64,
}

impl StepCounters {
    pub fn new(flops: u64, bytes_read: u64, bytes_written: u64) -> Self {
        Self {
            flops,
            bytes_read,
            bytes_written,
            wall_time_seconds: 0.0,
        }
    }

    pub fn bytes(&self) -> u64 {
        self.bytes_read + self.bytes_written
    }

    /// Same counters without the wall-clock field, for determinism checks.
    pub fn work(&self) -> (u64, u64, u64) {
        (self.flops, self.bytes_read, self.bytes_written)
    }
}

impl Add for StepCounters {
    type Output = StepCounters;

    fn add(self, rhs: Self) -> Self {
        Self {
            flops: self.flops + rhs.flops,
            bytes_read: self.bytes_read + rhs.bytes_read,
            bytes_written: self.bytes_written + rhs.bytes_written,
            wall_time_seconds: self.wall_time_seconds + rhs.wall_time_seconds,
        }
    }
}

impl AddAssign for StepCounters {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}
