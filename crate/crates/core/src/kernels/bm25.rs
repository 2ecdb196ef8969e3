//! Okapi BM25 over an in-memory inverted index.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::memory::{
    Granularity, IndexPayload, MemoryIndex, MemoryStore, Query, RelevancyScores, StoreKind,
};

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc_id: usize,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lens: Vec<u32>,
}

impl InvertedIndex {
    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn posting_count(&self) -> usize {
        self.postings.values().map(Vec::len).sum()
    }

    pub fn doc_len(&self, doc_id: usize) -> u32 {
        self.doc_lens[doc_id]
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lens.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.doc_lens.is_empty() {
            return 0.0;
        }
        self.doc_lens.iter().map(|&l| l as f64).sum::<f64>() / self.doc_lens.len() as f64
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub avg_doc_len: f64,
    pub doc_count: usize,
}

impl Bm25Params {
    pub const DEFAULT_K1: f64 = 1.5;
    pub const DEFAULT_B: f64 = 0.75;

    /// Default `k1`/`b` with corpus statistics taken from `index`.
    pub fn for_index(index: &InvertedIndex) -> Self {
        Self::with(Self::DEFAULT_K1, Self::DEFAULT_B, index)
    }

    pub fn with(k1: f64, b: f64, index: &InvertedIndex) -> Self {
        Self {
            k1,
            b,
            avg_doc_len: index.avg_doc_len(),
            doc_count: index.doc_count(),
        }
    }

    fn check(&self, index: &InvertedIndex) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 > 0.0) {
            return Err(Error::hyper("k1", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::hyper("b", "must lie in [0, 1]"));
        }
        if self.doc_count != index.doc_count() {
            return Err(Error::hyper("doc_count", "does not match the index"));
        }
        let actual = index.avg_doc_len();
        if (self.avg_doc_len - actual).abs() > 1e-6 * actual.max(f64::MIN_POSITIVE) {
            return Err(Error::hyper("avg_doc_len", "does not match the index"));
        }
        Ok(())
    }
}

pub fn bm25_build_docs<S: AsRef<str>>(docs: &[S]) -> Result<InvertedIndex> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lens = Vec::with_capacity(docs.len());
    for (doc_id, doc) in docs.iter().enumerate() {
        let mut hist: BTreeMap<String, u32> = BTreeMap::new();
        let mut len = 0u32;
        for tok in tokenize(doc.as_ref()) {
            *hist.entry(tok).or_default() += 1;
            len += 1;
        }
        doc_lens.push(len);
        // doc ids arrive in increasing order, so each list stays sorted
        for (term, tf) in hist {
            postings
                .entry(term)
                .or_default()
                .push(Posting { doc_id, tf });
        }
    }
    Ok(InvertedIndex { postings, doc_lens })
}

pub fn bm25_build(corpus: &MemoryStore) -> Result<MemoryIndex> {
    let docs = match (corpus.kind(), corpus.documents()) {
        (StoreKind::Corpus, Some(d)) => d,
        _ => {
            return Err(Error::IncompatibleStore {
                store: corpus.kind().to_string(),
                method: "BM25".into(),
            })
        }
    };
    let index = bm25_build_docs(docs)?;
    Ok(MemoryIndex {
        source_entry_count: index.doc_count(),
        payload: IndexPayload::InvertedIndex(index),
    })
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
pub fn idf(doc_count: usize, df: usize) -> f64 {
    let (n, df) = (doc_count as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

pub fn bm25_score_terms<S: AsRef<str>>(
    terms: &[S],
    index: &InvertedIndex,
    params: &Bm25Params,
) -> Result<RelevancyScores> {
    params.check(index)?;
    let unique: BTreeSet<String> = terms.iter().flat_map(|t| tokenize(t.as_ref())).collect();
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for term in &unique {
        let list = index.postings(term);
        if list.is_empty() {
            continue;
        }
        let w = idf(params.doc_count, list.len());
        for p in list {
            let tf = p.tf as f64;
            let norm =
                1.0 - params.b + params.b * index.doc_len(p.doc_id) as f64 / params.avg_doc_len;
            *acc.entry(p.doc_id).or_default() +=
                w * tf * (params.k1 + 1.0) / (tf + params.k1 * norm);
        }
    }
    let scores = acc
        .into_iter()
        .filter(|(_, s)| *s != 0.0)
        .map(|(d, s)| (d, s as f32))
        .collect();
    Ok(RelevancyScores::new(Granularity::Document, scores))
}

pub fn bm25_score(q: &Query, index: &MemoryIndex, params: &Bm25Params) -> Result<RelevancyScores> {
    let inv = match &index.payload {
        IndexPayload::InvertedIndex(inv) => inv,
        _ => return Err(Error::UnbuiltIndex),
    };
    let terms = q
        .terms
        .as_ref()
        .ok_or(Error::QueryMode("BM25 needs query terms"))?;
    bm25_score_terms(terms, inv, params)
}
