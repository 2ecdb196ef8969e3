//! Block-sparse selection: average-pooled keys scored against a pooled query.

use crate::error::{Error, Result};
use crate::kernels::dot;
use crate::memory::{
    Granularity, IndexKind, IndexPayload, Matrix, MemoryIndex, MemoryStore, RelevancyScores,
    StoreKind,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockSelection {
    /// Token budget; converted to `ceil(budget_tokens / block_size)` blocks.
    TopK { budget_tokens: usize },
    /// Keep blocks whose normalized score exceeds `theta`.
    Threshold { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockPoolConfig {
    pub block_size: usize,
    pub selection: BlockSelection,
}

impl BlockPoolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::hyper("block_size", "must be positive"));
        }
        if let BlockSelection::Threshold { theta } = self.selection {
            if !theta.is_finite() {
                return Err(Error::hyper("theta", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn block_budget(&self) -> Option<usize> {
        match self.selection {
            BlockSelection::TopK { budget_tokens } => Some(budget_tokens.div_ceil(self.block_size)),
            BlockSelection::Threshold { .. } => None,
        }
    }
}

fn key_matrix(keys: &MemoryStore) -> Result<&Matrix> {
    if keys.kind() != StoreKind::TokenKeys {
        return Err(Error::IncompatibleStore {
            store: keys.kind().to_string(),
            method: "key pooling".into(),
        });
    }
    let m = keys.vectors().expect("token-key stores hold vectors");
    if m.rows() == 0 {
        return Err(Error::EmptyStore);
    }
    Ok(m)
}

/// Mean of the keys in each block; the last block divides by its occupancy.
pub fn block_pool_prepare(keys: &MemoryStore, cfg: &BlockPoolConfig) -> Result<MemoryIndex> {
    cfg.validate()?;
    let m = key_matrix(keys)?;
    let dim = m.cols();
    let n_blocks = m.rows().div_ceil(cfg.block_size);
    let mut pools = Vec::with_capacity(n_blocks * dim);
    let mut acc = vec![0f64; dim];
    for b in 0..n_blocks {
        let start = b * cfg.block_size;
        let end = (start + cfg.block_size).min(m.rows());
        acc.iter_mut().for_each(|a| *a = 0.0);
        for t in start..end {
            for (a, x) in acc.iter_mut().zip(m.row(t)) {
                *a += *x as f64;
            }
        }
        let occupancy = (end - start) as f64;
        pools.extend(acc.iter().map(|a| (a / occupancy) as f32));
    }
    Ok(MemoryIndex {
        payload: IndexPayload::BlockPools {
            block_size: cfg.block_size,
            pools: Matrix::new(n_blocks, dim, pools)?,
        },
        source_entry_count: m.rows(),
    })
}

/// `score(j) = q_pooled . b_j`.
pub fn block_pool_score(q_pooled: &[f32], index: &MemoryIndex) -> Result<RelevancyScores> {
    let pools = match &index.payload {
        IndexPayload::BlockPools { pools, .. } => pools,
        _ => return Err(index.wrong_kind(IndexKind::BlockPools)),
    };
    if pools.rows() > 0 && pools.cols() != q_pooled.len() {
        return Err(Error::DimensionMismatch {
            context: "pooled query",
            expected: pools.cols(),
            actual: q_pooled.len(),
        });
    }
    let scores = pools.iter_rows().map(|b| dot(q_pooled, b) as f32);
    Ok(RelevancyScores::dense(Granularity::Block, scores))
}

/// Mean of the query heads, the single vector a block gate scores with.
pub fn pool_query(heads: &Matrix) -> Vec<f32> {
    let n = heads.rows().max(1) as f64;
    (0..heads.cols())
        .map(|c| (heads.iter_rows().map(|r| r[c] as f64).sum::<f64>() / n) as f32)
        .collect()
}
