//! Multi-head lightning-indexer scoring over key indexing vectors.

use crate::error::{Error, Result};
use crate::kernels::dot;
use crate::memory::{
    Granularity, IndexKind, IndexPayload, Matrix, MemoryIndex, Query, RelevancyScores,
};

/// `score(t) = sum_h w_h * (q_h . k_t)` for every token `t`.
pub fn lightning_indexer_score(q: &Query, index: &MemoryIndex) -> Result<RelevancyScores> {
    let keys = match &index.payload {
        IndexPayload::IndexerVectors(m) => m,
        _ => return Err(index.wrong_kind(IndexKind::IndexerVectors)),
    };
    let heads = q
        .vectors
        .as_ref()
        .ok_or(Error::QueryMode("indexer needs query vectors"))?;
    let weights = q.head_weights.as_ref().ok_or(Error::MissingHeadWeights)?;
    score_heads(heads, weights, keys)
}

pub(crate) fn score_heads(
    heads: &Matrix,
    weights: &[f32],
    keys: &Matrix,
) -> Result<RelevancyScores> {
    if weights.len() != heads.rows() {
        return Err(Error::DimensionMismatch {
            context: "head weights",
            expected: heads.rows(),
            actual: weights.len(),
        });
    }
    if keys.rows() > 0 && keys.cols() != heads.cols() {
        return Err(Error::DimensionMismatch {
            context: "indexer head_dim",
            expected: keys.cols(),
            actual: heads.cols(),
        });
    }
    let scores = keys.iter_rows().map(|k| {
        heads
            .iter_rows()
            .zip(weights)
            .map(|(qh, &w)| w as f64 * dot(qh, k))
            .sum::<f64>() as f32
    });
    Ok(RelevancyScores::dense(Granularity::Token, scores))
}
