//! The four-step memory-processing pipeline and its executor.
//!
//! Every pipeline has exactly four slots, run in the order prep, comp, ret,
//! apply. A method that skips a step holds [`Slot::NoOp`] there. Steps that
//! would run a full model (MemAgent decoding, the memory-as-context forward
//! pass, every apply step) are work-accounting stubs: they move the data the
//! step consumes and record counters, but do not evaluate a network.

use std::fmt;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::kernels::{
    self, bm25::bm25_score_terms, rope::rope_apply_in_place, BlockPoolConfig, BlockSelection,
    Bm25Params, IndexerConfig, PageConfig,
};
use crate::memory::{
    IndexPayload, Matrix, MemoryIndex, MemoryStore, Query, RelevancyScores, RetrievedSet,
    StepCounters, StoreKind,
};
use crate::method::{MethodConfig, MethodKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Step {
    Prep,
    Comp,
    Ret,
    Apply,
}

impl Step {
    pub const ALL: [Step; 4] = [Step::Prep, Step::Comp, Step::Ret, Step::Apply];

    pub fn name(self) -> &'static str {
        match self {
            Step::Prep => "prep",
            Step::Comp => "comp",
            Step::Ret => "ret",
            Step::Apply => "apply",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Step::Prep => "Prepare Memory",
            Step::Comp => "Compute Relevancy",
            Step::Ret => "Retrieval",
            Step::Apply => "Apply to Inference",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Slot<T> {
    Active(T),
    NoOp,
}

impl<T> Slot<T> {
    pub fn is_noop(&self) -> bool {
        matches!(self, Slot::NoOp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrepStage {
    /// Partial RoPE over stored key indexing vectors, each at its own position.
    ProjectRope(IndexerConfig),
    BlockPool(BlockPoolConfig),
    PageMinMax(PageConfig),
    /// Tokenize the corpus and build the inverted index.
    Tokenize,
    ForwardPassStub,
    ModelDecodeStub,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompStage {
    /// Query heads get RoPE at the current position, then the indexer score.
    MultiHeadInnerProduct(IndexerConfig),
    /// Query heads are mean-pooled, then scored against block pools.
    PooledInnerProduct,
    PageInnerProductMax(PageConfig),
    Bm25 {
        k1: f64,
        b: f64,
    },
    MemoryInnerProduct,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RetStage {
    TopK {
        k: usize,
    },
    /// Softmax over block scores, then keep probabilities above `theta`.
    SoftmaxThreshold {
        theta: f64,
    },
    /// First-stage top-`candidates`, cut to `k` by the reranker stand-in.
    RerankTopK {
        candidates: usize,
        k: usize,
    },
    WeightedSum {
        k: usize,
    },
    Nearest,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ApplyStage {
    FineGrainSparseAttention,
    /// Retrieved ids are groups of `tokens_per_entry` tokens.
    BlockSparseAttention {
        tokens_per_entry: usize,
    },
    AppendToQuery,
    AppendToSegment,
    ModelPrefill,
}

impl PrepStage {
    pub fn name(&self) -> &'static str {
        match self {
            PrepStage::ProjectRope(_) => "linear-projection+rope",
            PrepStage::BlockPool(_) => "linear-projection+pooling",
            PrepStage::PageMinMax(_) => "page-minmax-pooling",
            PrepStage::Tokenize => "tokenization",
            PrepStage::ForwardPassStub => "forward-pass",
            PrepStage::ModelDecodeStub => "model-decoding",
        }
    }
}

impl CompStage {
    pub fn name(&self) -> &'static str {
        match self {
            CompStage::MultiHeadInnerProduct(_) => "multi-head-inner-product",
            CompStage::PooledInnerProduct => "inner-product",
            CompStage::PageInnerProductMax(_) => "inner-product+max-reduction",
            CompStage::Bm25 { .. } => "bm25",
            CompStage::MemoryInnerProduct => "linear-projection+inner-product",
        }
    }
}

impl RetStage {
    pub fn name(&self) -> &'static str {
        match self {
            RetStage::TopK { .. } => "top-k",
            RetStage::SoftmaxThreshold { .. } => "threshold",
            RetStage::RerankTopK { .. } => "top-k+rerank",
            RetStage::WeightedSum { .. } => "top-k+weighted-sum",
            RetStage::Nearest => "nearest",
        }
    }
}

impl ApplyStage {
    pub fn name(&self) -> &'static str {
        match self {
            ApplyStage::FineGrainSparseAttention => "fine-grain-sparse-attention",
            ApplyStage::BlockSparseAttention { .. } => "block-sparse-attention",
            ApplyStage::AppendToQuery => "append-to-query",
            ApplyStage::AppendToSegment => "append-to-segment",
            ApplyStage::ModelPrefill => "model-prefill",
        }
    }
}

fn slot_name<T>(s: &Slot<T>, f: impl Fn(&T) -> &'static str) -> &'static str {
    match s {
        Slot::Active(t) => f(t),
        Slot::NoOp => "no-op",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum QueryMode {
    Vectors,
    Terms,
    Either,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub method: MethodConfig,
    pub prep: Slot<PrepStage>,
    pub comp: Slot<CompStage>,
    pub ret: Slot<RetStage>,
    pub apply: Slot<ApplyStage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub retrieved: RetrievedSet,
    /// Indexed by [`Step::index`]; a no-op slot records zeros.
    pub counters: [StepCounters; 4],
}

pub fn build_pipeline(method: &MethodConfig) -> Result<Pipeline> {
    method.validate()?;
    use Slot::{Active, NoOp};
    let (prep, comp, ret, apply) = match *method {
        MethodConfig::DeepSeekAttention { indexer, k } => (
            Active(PrepStage::ProjectRope(indexer)),
            Active(CompStage::MultiHeadInnerProduct(indexer)),
            Active(RetStage::TopK { k }),
            Active(ApplyStage::FineGrainSparseAttention),
        ),
        MethodConfig::SeerAttentionRTopK {
            block_size,
            budget_tokens,
        } => {
            let cfg = BlockPoolConfig {
                block_size,
                selection: BlockSelection::TopK { budget_tokens },
            };
            (
                Active(PrepStage::BlockPool(cfg)),
                Active(CompStage::PooledInnerProduct),
                Active(RetStage::TopK {
                    k: cfg.block_budget().expect("top-k selection"),
                }),
                Active(ApplyStage::BlockSparseAttention {
                    tokens_per_entry: block_size,
                }),
            )
        }
        MethodConfig::SeerAttentionRThreshold { block_size, theta } => (
            Active(PrepStage::BlockPool(BlockPoolConfig {
                block_size,
                selection: BlockSelection::Threshold { theta },
            })),
            Active(CompStage::PooledInnerProduct),
            Active(RetStage::SoftmaxThreshold { theta }),
            Active(ApplyStage::BlockSparseAttention {
                tokens_per_entry: block_size,
            }),
        ),
        MethodConfig::LServe {
            logical_page_size,
            logical_pages_per_physical,
            score_mode,
            budget_tokens,
        } => {
            let cfg = PageConfig {
                logical_page_size,
                logical_pages_per_physical,
                score_mode,
            };
            let physical = cfg.physical_page_size();
            (
                Active(PrepStage::PageMinMax(cfg)),
                Active(CompStage::PageInnerProductMax(cfg)),
                Active(RetStage::TopK {
                    k: budget_tokens.div_ceil(physical),
                }),
                Active(ApplyStage::BlockSparseAttention {
                    tokens_per_entry: physical,
                }),
            )
        }
        MethodConfig::SingleStageRag { k1, b, k } => (
            Active(PrepStage::Tokenize),
            Active(CompStage::Bm25 { k1, b }),
            Active(RetStage::TopK { k }),
            Active(ApplyStage::AppendToQuery),
        ),
        MethodConfig::TwoStageRag {
            k1,
            b,
            candidates,
            k,
        } => (
            Active(PrepStage::Tokenize),
            Active(CompStage::Bm25 { k1, b }),
            Active(RetStage::RerankTopK { candidates, k }),
            Active(ApplyStage::AppendToQuery),
        ),
        MethodConfig::MemoryAsContext { k } => (
            Active(PrepStage::ForwardPassStub),
            Active(CompStage::MemoryInnerProduct),
            Active(RetStage::WeightedSum { k }),
            Active(ApplyStage::AppendToSegment),
        ),
        MethodConfig::MemAgent {} => (
            Active(PrepStage::ModelDecodeStub),
            NoOp,
            Active(RetStage::Nearest),
            Active(ApplyStage::ModelPrefill),
        ),
    };
    Ok(Pipeline {
        method: method.clone(),
        prep,
        comp,
        ret,
        apply,
    })
}

const F32: u64 = 4;
const ID: u64 = 4;

impl Pipeline {
    pub fn kind(&self) -> MethodKind {
        self.method.kind()
    }

    pub fn stage_name(&self, step: Step) -> &'static str {
        match step {
            Step::Prep => slot_name(&self.prep, PrepStage::name),
            Step::Comp => slot_name(&self.comp, CompStage::name),
            Step::Ret => slot_name(&self.ret, RetStage::name),
            Step::Apply => slot_name(&self.apply, ApplyStage::name),
        }
    }

    pub fn is_noop(&self, step: Step) -> bool {
        match step {
            Step::Prep => self.prep.is_noop(),
            Step::Comp => self.comp.is_noop(),
            Step::Ret => self.ret.is_noop(),
            Step::Apply => self.apply.is_noop(),
        }
    }

    pub fn store_kind(&self) -> StoreKind {
        match self.kind().family() {
            crate::method::Family::Rag => StoreKind::Corpus,
            crate::method::Family::SparseAttention => StoreKind::TokenKeys,
            _ => StoreKind::MemoryEmbeddings,
        }
    }

    fn query_mode(&self) -> QueryMode {
        match self.store_kind() {
            StoreKind::Corpus => QueryMode::Terms,
            StoreKind::TokenKeys => QueryMode::Vectors,
            StoreKind::MemoryEmbeddings if self.kind() == MethodKind::MemAgent => QueryMode::Either,
            StoreKind::MemoryEmbeddings => QueryMode::Vectors,
        }
    }

    fn check_inputs(&self, store: &MemoryStore, q: &Query) -> Result<()> {
        if store.kind() != self.store_kind() {
            return Err(Error::IncompatibleStore {
                store: store.kind().to_string(),
                method: self.kind().name().into(),
            });
        }
        q.validate()?;
        match (self.query_mode(), q.vectors.is_some()) {
            (QueryMode::Terms, true) => Err(Error::QueryMode("this method takes query terms")),
            (QueryMode::Vectors, false) => Err(Error::QueryMode("this method takes query vectors")),
            _ => Ok(()),
        }
    }

    /// Runs prep, comp, ret and apply in order.
    ///
    /// An empty store yields an empty set and all-zero counters.
    pub fn run(&self, store: &MemoryStore, q: &Query) -> Result<PipelineRun> {
        self.check_inputs(store, q)?;
        let mut counters = [StepCounters::default(); 4];
        if store.is_empty() {
            return Ok(PipelineRun {
                retrieved: RetrievedSet::default(),
                counters,
            });
        }

        let t = Instant::now();
        let index = match &self.prep {
            Slot::Active(s) => Some(self.prep_step(s, store, &mut counters[0])?),
            Slot::NoOp => None,
        };
        counters[0].wall_time_seconds = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let scores = match (&self.comp, &index) {
            (Slot::Active(s), Some(idx)) => {
                Some(self.comp_step(s, idx, store, q, &mut counters[1])?)
            }
            (Slot::Active(_), None) => return Err(Error::UnbuiltIndex),
            (Slot::NoOp, _) => None,
        };
        counters[1].wall_time_seconds = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let retrieved = match &self.ret {
            Slot::Active(s) => self.ret_step(s, scores.as_ref(), store, &mut counters[2])?,
            Slot::NoOp => RetrievedSet::default(),
        };
        counters[2].wall_time_seconds = t.elapsed().as_secs_f64();

        let t = Instant::now();
        if let Slot::Active(s) = &self.apply {
            counters[3] = apply_counters(s, &retrieved, store, q);
        }
        counters[3].wall_time_seconds = t.elapsed().as_secs_f64();

        Ok(PipelineRun {
            retrieved,
            counters,
        })
    }

    fn prep_step(
        &self,
        s: &PrepStage,
        store: &MemoryStore,
        c: &mut StepCounters,
    ) -> Result<MemoryIndex> {
        let n = store.entry_count() as u64;
        let d = store.entry_dim() as u64;
        match s {
            PrepStage::ProjectRope(cfg) => {
                cfg.validate()?;
                let keys = store.vectors().expect("token keys");
                if keys.cols() != cfg.head_dim {
                    return Err(Error::DimensionMismatch {
                        context: "indexer key",
                        expected: cfg.head_dim,
                        actual: keys.cols(),
                    });
                }
                let mut out = keys.clone();
                for t in 0..out.rows() {
                    rope_apply_in_place(out.row_mut(t), t, cfg)?;
                }
                // 4 multiplies + 2 adds per rotated pair
                *c = StepCounters::new(n * 3 * cfg.rope_dims() as u64, n * d * F32, n * d * F32);
                Ok(MemoryIndex {
                    payload: IndexPayload::IndexerVectors(out),
                    source_entry_count: store.entry_count(),
                })
            }
            PrepStage::BlockPool(cfg) => {
                let idx = kernels::block_pool_prepare(store, cfg)?;
                let blocks = n.div_ceil(cfg.block_size as u64);
                *c = StepCounters::new(n * d + blocks * d, n * d * F32, blocks * d * F32);
                Ok(idx)
            }
            PrepStage::PageMinMax(cfg) => {
                let idx = kernels::page_minmax_prepare(store, cfg)?;
                let pages = n.div_ceil(cfg.logical_page_size as u64);
                *c = StepCounters::new(2 * n * d, n * d * F32, 2 * pages * d * F32);
                Ok(idx)
            }
            PrepStage::Tokenize => {
                let idx = kernels::bm25_build(store)?;
                let text: u64 = store
                    .documents()
                    .unwrap()
                    .iter()
                    .map(|d| d.len() as u64)
                    .sum();
                let IndexPayload::InvertedIndex(inv) = &idx.payload else {
                    unreachable!()
                };
                let postings = inv.posting_count() as u64;
                // one classify per byte, one hash update per posting
                *c = StepCounters::new(text + postings, text, postings * (ID + 4) + n * 4);
                Ok(idx)
            }
            PrepStage::ForwardPassStub | PrepStage::ModelDecodeStub => {
                *c = StepCounters::new(0, n * d * F32, 0);
                Ok(MemoryIndex {
                    payload: IndexPayload::Identity,
                    source_entry_count: store.entry_count(),
                })
            }
        }
    }

    fn comp_step(
        &self,
        s: &CompStage,
        idx: &MemoryIndex,
        store: &MemoryStore,
        q: &Query,
        c: &mut StepCounters,
    ) -> Result<RelevancyScores> {
        let n = idx.source_entry_count as u64;
        let d = store.entry_dim() as u64;
        let scores = match s {
            CompStage::MultiHeadInnerProduct(cfg) => {
                let heads = q.vectors.as_ref().unwrap();
                if heads.rows() != cfg.n_heads {
                    return Err(Error::DimensionMismatch {
                        context: "indexer heads",
                        expected: cfg.n_heads,
                        actual: heads.rows(),
                    });
                }
                let weights = q.head_weights.as_ref().ok_or(Error::MissingHeadWeights)?;
                let mut rotated = heads.clone();
                for h in 0..rotated.rows() {
                    rope_apply_in_place(rotated.row_mut(h), idx.source_entry_count, cfg)?;
                }
                let h = heads.rows() as u64;
                let rq = Query::vectors(rotated).with_head_weights(weights.clone());
                let out = kernels::lightning_indexer_score(&rq, idx)?;
                *c = StepCounters::new(
                    n * h * (2 * d + 2) + h * 3 * cfg.rope_dims() as u64,
                    n * d * F32 + h * (d + 1) * F32,
                    n * F32,
                );
                out
            }
            CompStage::PooledInnerProduct => {
                let heads = q.vectors.as_ref().unwrap();
                let pooled = kernels::pool_query(heads);
                let out = kernels::block_pool_score(&pooled, idx)?;
                let blocks = out.len() as u64;
                let h = heads.rows() as u64;
                *c = StepCounters::new(
                    h * d + 2 * blocks * d,
                    blocks * d * F32 + h * d * F32,
                    blocks * F32,
                );
                out
            }
            CompStage::PageInnerProductMax(cfg) => {
                let heads = q.vectors.as_ref().unwrap();
                let pooled = kernels::pool_query(heads);
                let out = kernels::page_minmax_score(&pooled, idx, cfg)?;
                let pages = n.div_ceil(cfg.logical_page_size as u64);
                let h = heads.rows() as u64;
                *c = StepCounters::new(
                    h * d + 4 * pages * d + pages,
                    2 * pages * d * F32 + h * d * F32,
                    out.len() as u64 * F32,
                );
                out
            }
            CompStage::Bm25 { k1, b } => {
                let IndexPayload::InvertedIndex(inv) = &idx.payload else {
                    return Err(Error::UnbuiltIndex);
                };
                let terms = q.terms.as_ref().unwrap();
                let params = Bm25Params::with(*k1, *b, inv);
                let out = bm25_score_terms(terms, inv, &params)?;
                let mut unique: Vec<String> = terms
                    .iter()
                    .flat_map(|t| kernels::bm25::tokenize(t))
                    .collect();
                unique.sort();
                unique.dedup();
                let postings: u64 = unique.iter().map(|t| inv.doc_freq(t) as u64).sum();
                // per posting: length lookup, normalisation, saturation, accumulate
                *c = StepCounters::new(
                    12 * postings + unique.len() as u64 * 4,
                    postings * (ID + 4 + 4),
                    out.len() as u64 * (ID + F32),
                );
                out
            }
            CompStage::MemoryInnerProduct => {
                let v = q.vectors.as_ref().unwrap();
                if v.rows() != 1 {
                    return Err(Error::DimensionMismatch {
                        context: "segment query rows",
                        expected: 1,
                        actual: v.rows(),
                    });
                }
                let out = kernels::memory_scores(v.row(0), store)?;
                *c = StepCounters::new(2 * n * d, n * d * F32 + d * F32, n * F32);
                out
            }
        };
        debug_assert!(scores.all_finite());
        Ok(scores)
    }

    fn ret_step(
        &self,
        s: &RetStage,
        scores: Option<&RelevancyScores>,
        store: &MemoryStore,
        c: &mut StepCounters,
    ) -> Result<RetrievedSet> {
        let need = || scores.ok_or(Error::UnbuiltIndex);
        match s {
            RetStage::TopK { k } => {
                let sc = need()?;
                let out = kernels::streaming_topk(sc.scores.iter().copied(), *k);
                *c = topk_counters(sc.len() as u64, out.len() as u64);
                Ok(out)
            }
            RetStage::SoftmaxThreshold { theta } => {
                let sc = need()?;
                let probs = softmax(sc);
                let out = kernels::threshold_select(&probs, *theta);
                let n = sc.len() as u64;
                *c = StepCounters::new(5 * n + n, n * (ID + F32), out.len() as u64 * ID);
                Ok(out)
            }
            RetStage::RerankTopK { candidates, k } => {
                let sc = need()?;
                let mut first = kernels::streaming_topk(sc.scores.iter().copied(), *candidates);
                // the reranker model is not executed; first-stage order stands in for it
                first.ids.truncate(*k);
                *c = topk_counters(sc.len() as u64, (*candidates).min(sc.len()) as u64);
                Ok(first)
            }
            RetStage::WeightedSum { k } => {
                let sc = need()?;
                let out = kernels::softmax_weighted_sum(sc, store, *k)?;
                let (n, kk, d) = (sc.len() as u64, out.len() as u64, store.entry_dim() as u64);
                *c = StepCounters::new(
                    n + 5 * kk + 2 * kk * d,
                    n * (ID + F32) + kk * d * F32,
                    d * F32,
                );
                Ok(out)
            }
            RetStage::Nearest => {
                let out = kernels::nearest_segment_retrieve(store)?;
                let d = store.entry_dim() as u64;
                *c = StepCounters::new(0, d * F32, d * F32);
                Ok(out)
            }
        }
    }
}

fn topk_counters(n: u64, kept: u64) -> StepCounters {
    StepCounters::new(n, n * (ID + F32), kept * ID)
}

fn softmax(sc: &RelevancyScores) -> RelevancyScores {
    let max = sc
        .scores
        .iter()
        .map(|s| s.1 as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = sc.scores.iter().map(|s| (s.1 as f64 - max).exp()).collect();
    let z: f64 = e.iter().sum();
    RelevancyScores {
        scores: sc
            .scores
            .iter()
            .zip(e)
            .map(|(s, e)| (s.0, (e / z) as f32))
            .collect(),
        granularity: sc.granularity,
    }
}

/// Work an apply step would do over the retrieved set; nothing is executed.
fn apply_counters(
    s: &ApplyStage,
    r: &RetrievedSet,
    store: &MemoryStore,
    q: &Query,
) -> StepCounters {
    let d = store.entry_dim() as u64;
    let n = store.entry_count() as u64;
    let heads = q.vectors.as_ref().map_or(1, Matrix::rows) as u64;
    let attend = |tokens: u64| {
        // QK and AV per head, K and V gathered once
        StepCounters::new(
            heads * tokens * 4 * d,
            2 * tokens * d * F32 + heads * d * F32,
            heads * d * F32,
        )
    };
    match s {
        ApplyStage::FineGrainSparseAttention => attend(r.len() as u64),
        ApplyStage::BlockSparseAttention { tokens_per_entry } => {
            let per = *tokens_per_entry as u64;
            let tokens: u64 = r
                .ids
                .iter()
                .map(|&i| per.min(n.saturating_sub(i as u64 * per)))
                .sum();
            attend(tokens)
        }
        ApplyStage::AppendToQuery => {
            let docs = store.documents().unwrap_or_default();
            let bytes: u64 = r.ids.iter().map(|&i| docs[i].len() as u64).sum();
            StepCounters::new(0, bytes, bytes)
        }
        ApplyStage::AppendToSegment | ApplyStage::ModelPrefill => {
            let rows = r.embeddings.as_ref().map_or(0, Matrix::rows) as u64;
            StepCounters::new(0, rows * d * F32, rows * d * F32)
        }
    }
}

pub fn run_pipeline(p: &Pipeline, store: &MemoryStore, q: &Query) -> Result<PipelineRun> {
    p.run(store, q)
}

/// Pipeline time over pipeline plus rest-of-model time.
pub fn memory_processing_fraction(
    counters: &[StepCounters],
    rest_of_llm: &StepCounters,
) -> Result<f64> {
    let pipeline: f64 = counters.iter().map(|c| c.wall_time_seconds).sum();
    let total = pipeline + rest_of_llm.wall_time_seconds;
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ZeroTotalTime);
    }
    Ok((pipeline / total).clamp(0.0, 1.0))
}
