//! Retrieval over stored memory embeddings.

use crate::error::{Error, Result};
use crate::kernels::dot;
use crate::kernels::topk::RunningTopK;
use crate::memory::{Granularity, Matrix, MemoryStore, RelevancyScores, RetrievedSet, StoreKind};

fn embeddings<'a>(memories: &'a MemoryStore, what: &str) -> Result<&'a Matrix> {
    if memories.kind() != StoreKind::MemoryEmbeddings {
        return Err(Error::IncompatibleStore {
            store: memories.kind().to_string(),
            method: what.into(),
        });
    }
    let m = memories.vectors().expect("embedding stores hold vectors");
    if m.rows() == 0 {
        return Err(Error::EmptyStore);
    }
    Ok(m)
}

/// Softmax over the `k` best `q . m_i`, returned as one weighted-sum embedding.
///
/// `ids` lists the contributing entries best first; `embeddings` is `1 x dim`.
pub fn cross_attention_retrieve(
    q: &[f32],
    memories: &MemoryStore,
    k: usize,
) -> Result<RetrievedSet> {
    if k == 0 {
        return Err(Error::hyper("k", "must be positive"));
    }
    let logits = memory_scores(q, memories)?;
    softmax_weighted_sum(&logits, memories, k)
}

/// Inner product of `q` with every stored memory.
pub fn memory_scores(q: &[f32], memories: &MemoryStore) -> Result<RelevancyScores> {
    let m = embeddings(memories, "memory scoring")?;
    if m.cols() != q.len() {
        return Err(Error::DimensionMismatch {
            context: "memory embedding",
            expected: m.cols(),
            actual: q.len(),
        });
    }
    Ok(RelevancyScores::dense(
        Granularity::Memory,
        m.iter_rows().map(|r| dot(q, r) as f32),
    ))
}

/// Top-`k` of `logits`, softmax-normalised, as a weighted sum of the memories.
pub fn softmax_weighted_sum(
    logits: &RelevancyScores,
    memories: &MemoryStore,
    k: usize,
) -> Result<RetrievedSet> {
    if k == 0 {
        return Err(Error::hyper("k", "must be positive"));
    }
    let m = embeddings(memories, "weighted-sum retrieval")?;
    let mut top = RunningTopK::new(k);
    for &(i, s) in &logits.scores {
        if i >= m.rows() {
            return Err(Error::DimensionMismatch {
                context: "memory id",
                expected: m.rows(),
                actual: i,
            });
        }
        top.push(i, s);
    }
    let picked = top.into_sorted();
    let max = picked
        .iter()
        .map(|p| p.1 as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = picked.iter().map(|p| (p.1 as f64 - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut out = vec![0f64; m.cols()];
    for ((i, _), w) in picked.iter().zip(&weights) {
        for (o, x) in out.iter_mut().zip(m.row(*i)) {
            *o += w / z * *x as f64;
        }
    }
    let out = Matrix::new(1, m.cols(), out.into_iter().map(|x| x as f32).collect())?;
    Ok(RetrievedSet {
        ids: picked.into_iter().map(|p| p.0).collect(),
        embeddings: Some(out),
    })
}

/// The most recently appended entry.
pub fn nearest_segment_retrieve(memories: &MemoryStore) -> Result<RetrievedSet> {
    let m = embeddings(memories, "nearest-segment retrieval")?;
    let last = m.rows() - 1;
    Ok(RetrievedSet {
        ids: vec![last],
        embeddings: Some(Matrix::new(1, m.cols(), m.row(last).to_vec())?),
    })
}
