//! Reference kernels for every prepare / score / select computation.

pub mod attention;
pub mod block_pool;
pub mod bm25;
pub mod fixture;
pub mod indexer;
pub mod page;
pub mod rope;
pub mod topk;

pub use attention::{
    cross_attention_retrieve, memory_scores, nearest_segment_retrieve, softmax_weighted_sum,
};
pub use block_pool::{
    block_pool_prepare, block_pool_score, pool_query, BlockPoolConfig, BlockSelection,
};
pub use bm25::{bm25_build, bm25_score, Bm25Params, InvertedIndex};
pub use indexer::lightning_indexer_score;
pub use page::{page_minmax_prepare, page_minmax_score, PageConfig, PageScoreMode};
pub use rope::{rope_apply, IndexerConfig};
pub use topk::{streaming_topk, threshold_select, RunningTopK};

/// Inner product with 64-bit accumulation.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}
