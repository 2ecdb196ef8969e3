//! Analytic work model of each method.
//!
//! Two views are produced from one [`WorkloadConfig`]:
//!
//! * [`step_work`] and [`rest_of_llm_work`]: one invocation of a step, used
//!   for arithmetic-intensity classification.
//! * [`request_profile`]: every work item and data hand-off of one request,
//!   with repeat counts, used by the scheduler and the trend sweeps.
//!
//! Counting conventions: a multiply-add is two operations; a step's output is
//! charged as a read to the step that consumes it; intermediates written and
//! re-read inside a step are spill bytes.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::device::{arithmetic_intensity, AccessPattern, DeviceSpec, StepWork};
use crate::error::{Error, Result};
use crate::method::{Family, MethodKind};
use crate::pipeline::Step;

/// Model, corpus and request dimensions of one workload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub method: MethodKind,
    /// Context length in tokens (total input length for segment methods).
    pub seq_len: u64,
    pub batch_size: u64,
    pub output_tokens: u64,
    /// Bytes per activation, cache entry and memory-module weight.
    pub dtype_bytes: u64,
    /// Bits per LLM weight.
    pub weight_bits: u64,
    pub hidden_dim: u64,
    pub n_layers: u64,
    pub n_heads: u64,
    pub n_kv_heads: u64,
    pub head_dim: u64,
    pub ffn_dim: u64,
    pub indexer_heads: u64,
    pub indexer_dim: u64,
    pub rope_dims: u64,
    pub kv_latent_dim: u64,
    pub q_latent_dim: u64,
    pub block_size: u64,
    pub page_size: u64,
    pub pages_per_physical: u64,
    /// Retrieved tokens, documents or memories.
    pub k_budget: u64,
    pub doc_count: u64,
    pub doc_len: u64,
    pub query_terms: u64,
    /// A query term occurs in `doc_count / df_divisor` documents.
    pub df_divisor: u64,
    /// Distinct terms per document as a percentage of its length.
    pub unique_term_pct: u64,
    pub text_bytes_per_token: u64,
    /// Queries over which the one-time corpus index build is amortized.
    pub queries_per_index: u64,
    pub candidates: u64,
    pub embed_dim: u64,
    pub embed_params: u64,
    pub reranker_params: u64,
    pub reranker_tokens: u64,
    pub segment_len: u64,
    pub memory_tokens: u64,
}

const COMMON_FIELDS: &[&str] = &[
    "method",
    "seq_len",
    "batch_size",
    "output_tokens",
    "dtype_bytes",
    "weight_bits",
    "hidden_dim",
    "n_layers",
    "n_heads",
    "n_kv_heads",
    "head_dim",
    "ffn_dim",
];

const RAG_FIELDS: &[&str] = &[
    "k_budget",
    "doc_count",
    "doc_len",
    "query_terms",
    "df_divisor",
    "unique_term_pct",
    "text_bytes_per_token",
    "queries_per_index",
];

fn method_fields(kind: MethodKind) -> Vec<&'static str> {
    let extra: &[&str] = match kind {
        MethodKind::DeepSeekAttention => &[
            "indexer_heads",
            "indexer_dim",
            "rope_dims",
            "kv_latent_dim",
            "q_latent_dim",
            "k_budget",
        ],
        MethodKind::SeerAttentionRTopK | MethodKind::SeerAttentionRThreshold => {
            &["block_size", "k_budget"]
        }
        MethodKind::LServe => &["page_size", "pages_per_physical", "k_budget"],
        MethodKind::SingleStageRag => RAG_FIELDS,
        MethodKind::TwoStageRag => &[
            "candidates",
            "embed_dim",
            "embed_params",
            "reranker_params",
            "reranker_tokens",
        ],
        MethodKind::MemoryAsContext => &["segment_len", "k_budget"],
        MethodKind::MemAgent => &["segment_len", "memory_tokens"],
        MethodKind::Lact => &["segment_len"],
    };
    let mut v: Vec<_> = COMMON_FIELDS.to_vec();
    if kind == MethodKind::TwoStageRag {
        v.extend_from_slice(RAG_FIELDS);
    }
    v.extend_from_slice(extra);
    v
}

const FIXTURES: [(MethodKind, &str); 9] = [
    (
        MethodKind::DeepSeekAttention,
        include_str!("../methods/dsa.toml"),
    ),
    (
        MethodKind::SeerAttentionRTopK,
        include_str!("../methods/sar_topk.toml"),
    ),
    (
        MethodKind::SeerAttentionRThreshold,
        include_str!("../methods/sar_threshold.toml"),
    ),
    (MethodKind::LServe, include_str!("../methods/lserve.toml")),
    (
        MethodKind::SingleStageRag,
        include_str!("../methods/rag_single.toml"),
    ),
    (
        MethodKind::TwoStageRag,
        include_str!("../methods/rag_two_stage.toml"),
    ),
    (
        MethodKind::MemoryAsContext,
        include_str!("../methods/mac.toml"),
    ),
    (
        MethodKind::MemAgent,
        include_str!("../methods/memagent.toml"),
    ),
    (MethodKind::Lact, include_str!("../methods/lact.toml")),
];

/// The shipped default fixture of a method: a `[workload]` table and, for
/// executable methods, a `[pipeline]` table.
pub fn method_fixture(kind: MethodKind) -> &'static str {
    FIXTURES
        .iter()
        .find(|(k, _)| *k == kind)
        .map(|(_, t)| *t)
        .expect("every method ships a fixture")
}

fn fixture_section(kind: MethodKind, section: &str) -> Result<toml::Table> {
    let table: toml::Table = method_fixture(kind).parse()?;
    match table.get(section) {
        Some(toml::Value::Table(t)) => Ok(t.clone()),
        Some(_) => Err(Error::Parse(format!(
            "fixture section [{section}] is not a table"
        ))),
        None => Ok(toml::Table::new()),
    }
}

fn to_table(cfg: &WorkloadConfig) -> toml::Table {
    match toml::Value::try_from(cfg) {
        Ok(toml::Value::Table(t)) => t,
        _ => unreachable!("workload config serializes to a table"),
    }
}

impl WorkloadConfig {
    /// Llama-2-7B-class values; fixtures override what each method uses.
    fn base(method: MethodKind) -> Self {
        Self {
            method,
            seq_len: 65536,
            batch_size: 1,
            output_tokens: 32,
            dtype_bytes: 2,
            weight_bits: 4,
            hidden_dim: 4096,
            n_layers: 32,
            n_heads: 32,
            n_kv_heads: 32,
            head_dim: 128,
            ffn_dim: 11008,
            indexer_heads: 64,
            indexer_dim: 128,
            rope_dims: 64,
            kv_latent_dim: 576,
            q_latent_dim: 1536,
            block_size: 64,
            page_size: 16,
            pages_per_physical: 4,
            k_budget: 2048,
            doc_count: 1_000_000,
            doc_len: 100,
            query_terms: 32,
            df_divisor: 4,
            unique_term_pct: 60,
            text_bytes_per_token: 6,
            queries_per_index: 1000,
            candidates: 64,
            embed_dim: 1024,
            embed_params: 335_000_000,
            reranker_params: 560_000_000,
            reranker_tokens: 512,
            segment_len: 1024,
            memory_tokens: 1024,
        }
    }

    pub fn defaults(kind: MethodKind) -> Result<Self> {
        let mut table = to_table(&Self::base(kind));
        for (k, v) in fixture_section(kind, "workload")? {
            table.insert(k, v);
        }
        let cfg: WorkloadConfig = toml::Value::Table(table).try_into()?;
        if cfg.method != kind {
            return Err(Error::Parse(format!(
                "fixture for {kind} names {}",
                cfg.method
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Method defaults overlaid with `table`, which must name the method.
    /// Returns warnings for keys the method does not use.
    pub fn from_table(table: &toml::Table) -> Result<(Self, Vec<String>)> {
        let name = table
            .get("method")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Parse("workload config needs a string `method` key".into()))?;
        let kind: MethodKind = name.parse()?;
        Self::defaults(kind)?.with_overrides(table)
    }

    pub fn from_toml(text: &str) -> Result<(Self, Vec<String>)> {
        Self::from_table(&text.parse()?)
    }

    pub fn with_overrides(&self, overrides: &toml::Table) -> Result<(Self, Vec<String>)> {
        let mut table = to_table(self);
        let mut warnings = Vec::new();
        let method = match overrides.get("method").and_then(|v| v.as_str()) {
            Some(m) => m.parse()?,
            None => self.method,
        };
        let relevant = method_fields(method);
        for (k, v) in overrides {
            if k == "method" {
                table.insert(k.clone(), toml::Value::String(method.name().into()));
                continue;
            }
            if !table.contains_key(k) {
                return Err(Error::Parse(format!("unknown workload field `{k}`")));
            }
            if !relevant.contains(&k.as_str()) {
                warnings.push(format!("{method} ignores workload field `{k}`"));
            }
            table.insert(k.clone(), v.clone());
        }
        let cfg: WorkloadConfig = toml::Value::Table(table).try_into()?;
        cfg.validate()?;
        Ok((cfg, warnings))
    }

    /// Fields the method's model reads.
    pub fn relevant_fields(&self) -> Vec<&'static str> {
        method_fields(self.method)
    }

    pub fn validate(&self) -> Result<()> {
        let t = to_table(self);
        for (k, v) in &t {
            if k == "method" {
                continue;
            }
            if v.as_integer() == Some(0) && k != "unique_term_pct" {
                return Err(Error::hyper(k, "must be positive"));
            }
        }
        if self.unique_term_pct == 0 || self.unique_term_pct > 100 {
            return Err(Error::hyper("unique_term_pct", "must lie in 1..=100"));
        }
        if self.weight_bits > 32 {
            return Err(Error::hyper("weight_bits", "at most 32"));
        }
        if self.rope_dims > self.indexer_dim || self.rope_dims > self.kv_latent_dim {
            return Err(Error::hyper(
                "rope_dims",
                "exceeds the rotated vector width",
            ));
        }
        Ok(())
    }
}

/// Measured arithmetic-intensity band, edges at half decades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AiBand {
    /// No operations at all.
    Zero,
    BelowOne,
    One,
    OneToTen,
    TenToHundred,
    OverHundred,
}

const HALF_DECADE: f64 = 0.5;

impl AiBand {
    pub fn of(flops: f64, ai: f64) -> Self {
        if flops == 0.0 {
            return AiBand::Zero;
        }
        let l = ai.log10();
        if l < -HALF_DECADE {
            AiBand::BelowOne
        } else if l < HALF_DECADE {
            AiBand::One
        } else if l < 1.0 + HALF_DECADE {
            AiBand::OneToTen
        } else if l < 2.0 + HALF_DECADE {
            AiBand::TenToHundred
        } else {
            AiBand::OverHundred
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AiBand::Zero => "0",
            AiBand::BelowOne => "<1",
            AiBand::One => "1",
            AiBand::OneToTen => "1-10",
            AiBand::TenToHundred => "10-100",
            AiBand::OverHundred => ">100",
        }
    }
}

impl fmt::Display for AiBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Published band for a step of a method family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExpectedBand {
    Zero,
    One,
    OneToTen,
    TenToHundred,
    /// Union of `1-10` and `10-100`.
    OneToHundred,
    OverHundred,
    NotApplicable,
}

impl ExpectedBand {
    pub fn admits(self, band: AiBand) -> bool {
        match self {
            ExpectedBand::Zero => band == AiBand::Zero,
            ExpectedBand::One => band == AiBand::One,
            ExpectedBand::OneToTen => band == AiBand::OneToTen,
            ExpectedBand::TenToHundred => band == AiBand::TenToHundred,
            ExpectedBand::OneToHundred => matches!(band, AiBand::OneToTen | AiBand::TenToHundred),
            ExpectedBand::OverHundred => band == AiBand::OverHundred,
            ExpectedBand::NotApplicable => false,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ExpectedBand::Zero => "0",
            ExpectedBand::One => "1",
            ExpectedBand::OneToTen => "1-10",
            ExpectedBand::TenToHundred => "10-100",
            ExpectedBand::OneToHundred => "1-100",
            ExpectedBand::OverHundred => ">100",
            ExpectedBand::NotApplicable => "N/A",
        }
    }
}

/// A pipeline step or the rest of the LLM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Step(Step),
    /// Everything outside the four steps; it always runs on the host GPU,
    /// which also holds the raw memory (KV cache, corpus text, segments).
    Rest,
}

impl Node {
    pub const ALL: [Node; 5] = [
        Node::Step(Step::Prep),
        Node::Step(Step::Comp),
        Node::Step(Step::Ret),
        Node::Step(Step::Apply),
        Node::Rest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Node::Step(s) => s.name(),
            Node::Rest => "rest",
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn expected_band(family: Family, node: Node) -> ExpectedBand {
    use ExpectedBand::*;
    let row: [ExpectedBand; 5] = match family {
        Family::SparseAttention => [TenToHundred, OneToTen, One, TenToHundred, OneToTen],
        Family::Rag => [OneToHundred, OneToTen, One, Zero, OverHundred],
        Family::SynthesizedMemory => [OneToTen, NotApplicable, Zero, OverHundred, OverHundred],
        Family::MemoryAsContext => [OverHundred, OneToTen, One, Zero, OverHundred],
        Family::TestTimeTraining => [
            OverHundred,
            OneToTen,
            NotApplicable,
            OverHundred,
            OverHundred,
        ],
    };
    match node {
        Node::Step(s) => row[s.index()],
        Node::Rest => row[4],
    }
}

/// The method whose bands stand for its family in the classification check.
pub fn is_band_representative(kind: MethodKind) -> bool {
    matches!(
        kind,
        MethodKind::DeepSeekAttention
            | MethodKind::SingleStageRag
            | MethodKind::MemAgent
            | MethodKind::MemoryAsContext
            | MethodKind::Lact
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundedness {
    ComputeBound,
    MemoryBound,
}

impl Boundedness {
    pub fn label(self) -> &'static str {
        match self {
            Boundedness::ComputeBound => "compute-bound",
            Boundedness::MemoryBound => "memory-bound",
        }
    }
}

/// Band of a step plus whether it sits above `dev`'s ridge point.
pub fn classify_step(w: &StepWork, dev: &DeviceSpec) -> Result<(AiBand, Boundedness)> {
    let ai = arithmetic_intensity(w)?;
    let bound = if ai > dev.ridge_point() {
        Boundedness::ComputeBound
    } else {
        Boundedness::MemoryBound
    };
    Ok((AiBand::of(w.flops, ai), bound))
}

/// Integer operation and byte counts; converted to [`StepWork`] at the end.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    flops: u128,
    bytes: u128,
    spill: u128,
    ws: u128,
}

impl Counts {
    fn new(flops: u128, bytes: u128, ws: u128) -> Self {
        Self {
            flops,
            bytes,
            spill: 0,
            ws,
        }
    }

    fn spill(mut self, s: u128) -> Self {
        self.spill += s;
        self
    }

    fn plus(self, o: Counts) -> Self {
        Self {
            flops: self.flops + o.flops,
            bytes: self.bytes + o.bytes,
            spill: self.spill + o.spill,
            ws: self.ws.max(o.ws),
        }
    }

    fn times(self, n: u128) -> Self {
        Self {
            flops: self.flops * n,
            bytes: self.bytes * n,
            spill: self.spill * n,
            ws: self.ws,
        }
    }

    fn work(self, tag: String, pattern: AccessPattern) -> StepWork {
        let mut w = StepWork::new(self.flops as f64, self.bytes as f64, self.ws as f64, tag)
            .with_spill(self.spill as f64);
        w.pattern = pattern;
        w
    }
}

fn ceil_div(a: u128, b: u128) -> u128 {
    a.div_ceil(b)
}

/// Comparisons per element of a streaming top-k, at least one.
fn log2_ceil(k: u128) -> u128 {
    if k <= 2 {
        1
    } else {
        128 - u128::from((k - 1).leading_zeros())
    }
}

/// Shorthand for the dimensions, widened to `u128`.
struct Dims {
    b: u128,
    batch: u128,
    h: u128,
    layers: u128,
    heads: u128,
    kv: u128,
    d: u128,
    ffn: u128,
    n: u128,
}

fn dims(c: &WorkloadConfig) -> Dims {
    Dims {
        b: c.dtype_bytes.into(),
        batch: c.batch_size.into(),
        h: c.hidden_dim.into(),
        layers: c.n_layers.into(),
        heads: c.n_heads.into(),
        kv: c.n_kv_heads.into(),
        d: c.head_dim.into(),
        ffn: c.ffn_dim.into(),
        n: c.seq_len.into(),
    }
}

/// Dense-path parameters of one layer. The DeepSeek configuration uses the
/// dense equivalent of its active parameters (about 37 B over 61 layers).
fn params_per_layer(c: &WorkloadConfig) -> u128 {
    let m = dims(c);
    match c.method {
        MethodKind::DeepSeekAttention => 4 * m.h * m.h + 3 * m.h * m.ffn,
        _ => 2 * m.h * m.heads * m.d + 2 * m.h * m.kv * m.d + 3 * m.h * m.ffn,
    }
}

fn weight_bytes(c: &WorkloadConfig, params: u128) -> u128 {
    (params * u128::from(c.weight_bits)).div_ceil(8)
}

fn kv_bytes_per_token(c: &WorkloadConfig) -> u128 {
    let m = dims(c);
    m.layers * 2 * m.kv * m.d * m.b
}

/// One decoded token for every sequence of the batch; attention over `ctx`
/// cached tokens is included when `attention` is set.
fn decode_token(c: &WorkloadConfig, ctx: u128, attention: bool) -> Counts {
    let m = dims(c);
    let wb = weight_bytes(c, params_per_layer(c) * m.layers);
    let mut flops = m.batch * 2 * params_per_layer(c) * m.layers;
    let mut bytes = wb + m.batch * m.layers * 2 * m.h * m.b;
    let mut ws = wb;
    if attention {
        let kv = m.batch * kv_bytes_per_token(c) * ctx;
        flops += m.batch * m.layers * 4 * m.heads * m.d * ctx;
        bytes += kv;
        ws += kv;
    }
    Counts::new(flops, bytes, ws)
}

/// `tokens` new tokens after `past` cached ones, causal attention included.
fn prefill(c: &WorkloadConfig, tokens: u128, past: u128) -> Counts {
    let m = dims(c);
    let wb = weight_bytes(c, params_per_layer(c) * m.layers);
    let pairs = tokens * past + tokens * (tokens + 1) / 2;
    let flops = m.batch
        * (2 * params_per_layer(c) * m.layers * tokens + m.layers * 4 * m.heads * m.d * pairs);
    let kv = m.batch * kv_bytes_per_token(c) * (tokens + past);
    let bytes = wb + m.batch * m.layers * 2 * tokens * m.h * m.b + kv;
    Counts::new(flops, bytes, wb + kv)
}

/// Work items of one method in both views.
#[derive(Debug, Clone, Default)]
struct Model {
    /// One invocation of each step and of the rest, for classification.
    classify: [Option<(Counts, AccessPattern)>; 5],
    items: Vec<WorkItem>,
    edges: Vec<Edge>,
    iterations: f64,
}

/// When a work item or transfer happens within a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Once per request before decoding (building the index over the context).
    Prefill,
    /// A one-time cost shared by many requests, already divided down.
    Amortized,
    /// Repeated `iterations` times (per layer and token, per segment, per query).
    Iteration,
    /// Once per request after the last iteration.
    Final,
}

/// One unit of work placed wherever its node is placed.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkItem {
    pub node: Node,
    pub phase: Phase,
    pub label: &'static str,
    pub work: StepWork,
    /// Invocations per request; each pays the device's launch overhead.
    pub count: f64,
    /// Runs on the host whatever its node's placement.
    pub pinned_to_host: bool,
    /// Bytes read from the previous step's output that disappear when both
    /// run fused on a streaming-dataflow device.
    pub fusable_input_bytes: f64,
}

/// Data handed from one node to another; it crosses the link only when the
/// two nodes sit on different devices.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: Node,
    pub to: Node,
    pub phase: Phase,
    pub what: &'static str,
    pub bytes: f64,
    pub count: f64,
}

/// Everything the scheduler needs to cost one request.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestProfile {
    pub method: MethodKind,
    pub items: Vec<WorkItem>,
    pub edges: Vec<Edge>,
    pub iterations: f64,
    /// Steps with any work; the others are no-ops wherever placed.
    pub active_steps: BTreeSet<Step>,
}

impl RequestProfile {
    /// Sum of one node's work across the request, counts applied.
    pub fn total_work(&self, node: Node) -> Option<StepWork> {
        self.items
            .iter()
            .filter(|i| i.node == node)
            .map(|i| i.work.scaled(i.count))
            .reduce(|a, b| a.then(&b))
    }
}

fn tag(c: &WorkloadConfig, node: Node) -> String {
    format!("{}.{}", c.method.power_tag(), node.name())
}

impl Model {
    fn set_class(&mut self, node: Node, counts: Counts, pattern: AccessPattern) {
        let i = match node {
            Node::Step(s) => s.index(),
            Node::Rest => 4,
        };
        self.classify[i] = Some((counts, pattern));
    }

    #[allow(clippy::too_many_arguments)]
    fn item(
        &mut self,
        c: &WorkloadConfig,
        node: Node,
        phase: Phase,
        label: &'static str,
        counts: Counts,
        pattern: AccessPattern,
        count: f64,
    ) -> &mut WorkItem {
        self.items.push(WorkItem {
            node,
            phase,
            label,
            work: counts.work(tag(c, node), pattern),
            count,
            pinned_to_host: false,
            fusable_input_bytes: 0.0,
        });
        self.items.last_mut().unwrap()
    }

    fn edge(
        &mut self,
        from: Node,
        to: Node,
        phase: Phase,
        what: &'static str,
        bytes: u128,
        count: f64,
    ) {
        self.edges.push(Edge {
            from,
            to,
            phase,
            what,
            bytes: bytes as f64,
            count,
        });
    }
}

const PREP: Node = Node::Step(Step::Prep);
const COMP: Node = Node::Step(Step::Comp);
const RET: Node = Node::Step(Step::Ret);
const APPLY: Node = Node::Step(Step::Apply);
const REST: Node = Node::Rest;
use AccessPattern::{Irregular, Regular};

fn sparse_attention(c: &WorkloadConfig) -> Model {
    let m = dims(c);
    let mut md = Model::default();
    let tokens_out = u128::from(c.output_tokens);
    let iters = (m.layers * tokens_out) as f64;
    md.iterations = iters;
    let budget = u128::from(c.k_budget);
    let (prep_full, prep_inc, comp, ret, apply);
    // bytes of: prepared memory per layer, raw keys per layer, the per-token
    // prep input, prep output, score vector, selection, selected KV
    let (index_bytes, raw_bytes, prep_in, prep_out, scores, selection, selected_kv);
    match c.method {
        MethodKind::DeepSeekAttention => {
            let (hi, di, r, kvl, ql) = (
                u128::from(c.indexer_heads),
                u128::from(c.indexer_dim),
                u128::from(c.rope_dims),
                u128::from(c.kv_latent_dim),
                u128::from(c.q_latent_dim),
            );
            let k = budget.min(m.n);
            prep_full = Counts::new(
                m.n * (2 * m.h * di + 3 * r),
                m.h * di * m.b + m.n * (m.h + di) * m.b,
                m.h * di * m.b + m.n * (m.h + di) * m.b,
            );
            let pw = ql * hi * di + m.h * di + m.h * hi;
            prep_in = m.batch * (m.h + ql) * m.b;
            prep_out = m.batch * (hi * di + di + hi) * m.b;
            prep_inc = Counts::new(
                m.batch * (2 * pw + 3 * r * (hi + 1)),
                pw * m.b + prep_in + prep_out,
                pw * m.b * m.layers,
            );
            comp = Counts::new(
                m.batch * m.n * hi * (2 * di + 2),
                m.batch * (m.n * di * m.b + hi * di * m.b + hi * 4),
                m.batch * m.n * di * m.b,
            )
            .spill(m.batch * m.n * hi * 4 * 2);
            scores = m.batch * m.n * 4;
            selection = m.batch * k * 4;
            ret = Counts::new(m.batch * m.n * log2_ceil(k), scores + selection, scores);
            apply = Counts::new(
                m.batch * k * m.heads * (2 * kvl + 2 * (kvl - r)),
                m.batch * k * (kvl * m.b + 4),
                m.batch * m.n * kvl * m.b,
            )
            .spill(m.batch * k * m.heads * 4 * 2);
            index_bytes = m.n * di * m.b;
            raw_bytes = m.n * m.h * m.b;
            selected_kv = m.batch * k * kvl * m.b;
        }
        MethodKind::SeerAttentionRTopK | MethodKind::SeerAttentionRThreshold => {
            let bs = u128::from(c.block_size);
            let nb = ceil_div(m.n, bs);
            let kb = ceil_div(budget, bs).min(nb);
            let t = (kb * bs).min(m.n);
            prep_full = Counts::new(
                m.n * m.kv * (2 * m.d * m.d + m.d),
                m.kv * m.d * m.d * m.b + (m.n + nb) * m.kv * m.d * m.b,
                m.kv * m.d * m.d * m.b + (m.n + nb) * m.kv * m.d * m.b,
            );
            let gw = 2 * m.kv * m.d * m.d;
            prep_in = m.batch * (m.heads + m.kv) * m.d * m.b;
            prep_out = m.batch * 2 * m.kv * m.d * m.b;
            prep_inc = Counts::new(
                m.batch * (2 * gw + m.heads * m.d),
                gw * m.b + prep_in + prep_out,
                gw * m.b * m.layers,
            );
            comp = Counts::new(
                m.batch * nb * (m.heads * 2 * m.d + m.heads),
                m.batch * (nb * m.kv * m.d * m.b + m.kv * m.d * m.b),
                m.batch * nb * m.kv * m.d * m.b,
            )
            .spill(m.batch * nb * m.heads * 4 * 2);
            scores = m.batch * m.kv * nb * 4;
            selection = m.batch * m.kv * kb * 4;
            let per = if c.method == MethodKind::SeerAttentionRTopK {
                5 + log2_ceil(kb)
            } else {
                5 + 1
            };
            ret = Counts::new(m.batch * m.kv * nb * per, scores + selection, scores);
            apply = Counts::new(
                m.batch * m.heads * t * 4 * m.d,
                m.batch * m.kv * t * 2 * m.d * m.b + selection,
                m.batch * m.n * m.kv * 2 * m.d * m.b,
            );
            index_bytes = nb * m.kv * m.d * m.b;
            raw_bytes = m.n * m.kv * m.d * m.b;
            selected_kv = m.batch * m.kv * t * 2 * m.d * m.b;
        }
        MethodKind::LServe => {
            let lp = u128::from(c.page_size);
            let np = ceil_div(m.n, lp);
            let npp = ceil_div(np, u128::from(c.pages_per_physical));
            let phys = lp * u128::from(c.pages_per_physical);
            let kp = ceil_div(budget, phys).min(npp);
            let t = (kp * phys).min(m.n);
            let bounds = 2 * np * m.kv * m.d * m.b;
            prep_full = Counts::new(
                2 * m.n * m.kv * m.d,
                m.n * m.kv * m.d * m.b + bounds,
                m.n * m.kv * m.d * m.b + bounds,
            );
            prep_in = m.batch * (m.heads + m.kv) * m.d * m.b;
            prep_out = m.batch * (m.heads + 2 * m.kv) * m.d * m.b;
            prep_inc = Counts::new(
                m.batch * 2 * m.kv * m.d,
                prep_in + m.batch * 4 * m.kv * m.d * m.b + prep_out,
                m.batch * 4 * m.kv * m.d * m.b,
            );
            comp = Counts::new(
                m.batch * np * (m.heads * 4 * m.d + m.heads),
                m.batch * (bounds + m.heads * m.d * m.b),
                m.batch * bounds,
            )
            .spill(m.batch * np * m.kv * 4 * 2);
            scores = m.batch * m.kv * npp * 4;
            selection = m.batch * m.kv * kp * 4;
            ret = Counts::new(
                m.batch * m.kv * npp * log2_ceil(kp),
                scores + selection,
                scores,
            );
            apply = Counts::new(
                m.batch * m.heads * t * 4 * m.d,
                m.batch * m.kv * t * 2 * m.d * m.b + selection,
                m.batch * m.n * m.kv * 2 * m.d * m.b,
            );
            index_bytes = bounds;
            raw_bytes = m.n * m.kv * m.d * m.b;
            selected_kv = m.batch * m.kv * t * 2 * m.d * m.b;
        }
        _ => unreachable!("sparse attention family"),
    }
    let rest = decode_token(c, 0, false);
    md.set_class(PREP, prep_full, Regular);
    md.set_class(COMP, comp, Regular);
    md.set_class(RET, ret, Irregular);
    md.set_class(APPLY, apply, Irregular);
    md.set_class(REST, rest, Regular);

    let layers = m.layers as f64;
    md.item(
        c,
        PREP,
        Phase::Prefill,
        "index build",
        prep_full,
        Regular,
        layers,
    );
    md.edge(
        REST,
        PREP,
        Phase::Prefill,
        "context keys",
        raw_bytes,
        layers,
    );
    md.edge(
        PREP,
        COMP,
        Phase::Prefill,
        "prepared index",
        index_bytes,
        layers,
    );
    md.item(
        c,
        PREP,
        Phase::Iteration,
        "index update",
        prep_inc,
        Regular,
        iters,
    );
    md.item(
        c,
        COMP,
        Phase::Iteration,
        "relevancy scores",
        comp,
        Regular,
        iters,
    );
    md.item(c, RET, Phase::Iteration, "selection", ret, Irregular, iters)
        .fusable_input_bytes = scores as f64;
    md.item(
        c,
        APPLY,
        Phase::Iteration,
        "sparse attention",
        apply,
        Irregular,
        iters,
    );
    md.item(
        c,
        REST,
        Phase::Iteration,
        "dense decode",
        rest,
        Regular,
        tokens_out as f64,
    );
    md.edge(
        REST,
        PREP,
        Phase::Iteration,
        "query and key",
        prep_in,
        iters,
    );
    md.edge(
        PREP,
        COMP,
        Phase::Iteration,
        "indexing vectors",
        prep_out,
        iters,
    );
    md.edge(COMP, RET, Phase::Iteration, "scores", scores, iters);
    md.edge(
        RET,
        APPLY,
        Phase::Iteration,
        "selected indices",
        selection,
        iters,
    );
    md.edge(
        REST,
        APPLY,
        Phase::Iteration,
        "selected KV",
        selected_kv,
        iters,
    );
    md.edge(
        APPLY,
        REST,
        Phase::Iteration,
        "attention output",
        m.batch * m.h * m.b,
        iters,
    );
    md
}

/// Per-token cost of tokenizing and inverting text.
const TOKENIZE_OPS: u128 = 52;
const POSTING_BYTES: u128 = 6;
const BM25_OPS_PER_POSTING: u128 = 24;

fn rag(c: &WorkloadConfig) -> Model {
    let m = dims(c);
    let mut md = Model {
        iterations: 1.0,
        ..Model::default()
    };
    let docs = u128::from(c.doc_count);
    let dl = u128::from(c.doc_len);
    let q = u128::from(c.query_terms);
    let tb = u128::from(c.text_bytes_per_token);
    let k = u128::from(c.k_budget).min(docs);
    let tokens = docs * dl;
    let index_bytes = tokens * u128::from(c.unique_term_pct) * POSTING_BYTES / 100;
    let two_stage = c.method == MethodKind::TwoStageRag;

    let mut prep_full = Counts::new(
        TOKENIZE_OPS * tokens,
        (tb + 8) * tokens,
        tokens * tb + index_bytes,
    );
    let mut prep_q = Counts::new(TOKENIZE_OPS * q, (tb + 8) * q, (tb + 8) * q);
    let postings = q * ceil_div(docs, u128::from(c.df_divisor));
    let mut comp = Counts::new(
        BM25_OPS_PER_POSTING * postings,
        POSTING_BYTES * postings,
        POSTING_BYTES * postings + docs * 4,
    );
    let scored = docs.min(postings);
    let scores = scored * 4;
    let first_k = if two_stage {
        u128::from(c.candidates).min(docs)
    } else {
        k
    };
    let mut ret = Counts::new(scored * log2_ceil(first_k), scores + first_k * 4, docs * 4);
    if two_stage {
        let e = u128::from(c.embed_dim);
        let pe = u128::from(c.embed_params);
        prep_full = prep_full.plus(Counts::new(
            2 * pe * tokens,
            pe * m.b + tokens * e * m.b,
            pe * m.b + docs * e * m.b,
        ));
        prep_q = prep_q.plus(Counts::new(2 * pe * q, pe * m.b + e * m.b, pe * m.b));
        comp = comp.plus(Counts::new(
            2 * docs * e,
            docs * e * m.b + e * m.b,
            docs * e * m.b,
        ));
        ret = ret.plus(Counts::new(
            first_k * log2_ceil(k),
            first_k * 4 + k * 4,
            first_k * 4,
        ));
    }
    let prompt = k * dl + q;
    let apply = Counts::new(0, k * dl * 4 + prompt * 4, k * dl * 4 + prompt * 4);
    let rest_class = prefill(c, prompt, 0);
    let out = u128::from(c.output_tokens);
    let rest = rest_class.plus(decode_token(c, prompt + out / 2, true).times(out));

    md.set_class(PREP, prep_full, Irregular);
    md.set_class(COMP, comp, Irregular);
    md.set_class(RET, ret, Irregular);
    md.set_class(APPLY, apply, Regular);
    md.set_class(REST, rest_class, Regular);

    let share = 1.0 / c.queries_per_index as f64;
    md.item(
        c,
        PREP,
        Phase::Amortized,
        "corpus index build",
        prep_full,
        Irregular,
        share,
    );
    md.edge(
        REST,
        PREP,
        Phase::Amortized,
        "corpus text",
        tokens * tb,
        share,
    );
    md.edge(
        PREP,
        COMP,
        Phase::Amortized,
        "inverted index",
        index_bytes,
        share,
    );
    md.item(
        c,
        PREP,
        Phase::Iteration,
        "query tokenization",
        prep_q,
        Irregular,
        1.0,
    );
    md.item(
        c,
        COMP,
        Phase::Iteration,
        "first-stage scoring",
        comp,
        Irregular,
        1.0,
    );
    md.item(c, RET, Phase::Iteration, "top-k", ret, Irregular, 1.0)
        .fusable_input_bytes = scores as f64;
    if two_stage {
        let pr = u128::from(c.reranker_params);
        let rt = u128::from(c.reranker_tokens);
        let cands = first_k;
        let rerank = Counts::new(2 * pr * cands * rt, pr * m.b + cands * rt * 4, pr * m.b);
        md.item(c, COMP, Phase::Iteration, "reranker", rerank, Regular, 1.0)
            .pinned_to_host = true;
        md.edge(RET, REST, Phase::Iteration, "candidate ids", cands * 4, 1.0);
        md.edge(
            REST,
            RET,
            Phase::Iteration,
            "reranker scores",
            cands * 4,
            1.0,
        );
    }
    md.item(
        c,
        APPLY,
        Phase::Iteration,
        "append to query",
        apply,
        Regular,
        1.0,
    );
    md.item(
        c,
        REST,
        Phase::Final,
        "prefill and decode",
        rest,
        Regular,
        1.0,
    );
    md.edge(REST, PREP, Phase::Iteration, "query text", q * tb, 1.0);
    md.edge(PREP, COMP, Phase::Iteration, "query term ids", q * 4, 1.0);
    md.edge(COMP, RET, Phase::Iteration, "scores", scores, 1.0);
    md.edge(RET, APPLY, Phase::Iteration, "document ids", k * 4, 1.0);
    md.edge(
        REST,
        APPLY,
        Phase::Iteration,
        "document text",
        k * dl * tb,
        1.0,
    );
    md.edge(
        APPLY,
        REST,
        Phase::Iteration,
        "prompt token ids",
        prompt * 4,
        1.0,
    );
    md
}

fn segments(c: &WorkloadConfig) -> u128 {
    ceil_div(c.seq_len.into(), c.segment_len.into())
}

fn memagent(c: &WorkloadConfig) -> Model {
    let m = dims(c);
    let mut md = Model::default();
    let seg = u128::from(c.segment_len);
    let mem = u128::from(c.memory_tokens);
    let nseg = segments(c);
    let iters = nseg as f64;
    md.iterations = iters;
    let ctx = seg + mem;
    let mut prep = decode_token(c, ctx + mem / 2, true).times(mem);
    prep.ws = decode_token(c, ctx + mem, true).ws;
    let ret = Counts::new(0, m.batch * mem * 4 * 2, m.batch * mem * 4);
    let apply = prefill(c, ctx, 0);
    let out = u128::from(c.output_tokens);
    let rest_class = prefill(c, mem, 0);
    let rest = rest_class.plus(decode_token(c, mem + out / 2, true).times(out));

    md.set_class(PREP, prep, Regular);
    md.set_class(RET, ret, Regular);
    md.set_class(APPLY, apply, Regular);
    md.set_class(REST, rest_class, Regular);

    md.item(
        c,
        PREP,
        Phase::Iteration,
        "memory decoding",
        prep,
        Regular,
        iters,
    );
    md.item(
        c,
        RET,
        Phase::Iteration,
        "latest memory",
        ret,
        Regular,
        iters,
    );
    md.item(
        c,
        APPLY,
        Phase::Iteration,
        "segment prefill",
        apply,
        Regular,
        iters,
    );
    md.item(
        c,
        REST,
        Phase::Final,
        "answer generation",
        rest,
        Regular,
        1.0,
    );
    md.edge(
        APPLY,
        PREP,
        Phase::Iteration,
        "segment KV cache",
        m.batch * kv_bytes_per_token(c) * ctx,
        iters,
    );
    md.edge(
        PREP,
        RET,
        Phase::Iteration,
        "memory token ids",
        m.batch * mem * 4,
        iters,
    );
    md.edge(
        RET,
        APPLY,
        Phase::Iteration,
        "memory token ids",
        m.batch * mem * 4,
        iters,
    );
    md.edge(
        REST,
        APPLY,
        Phase::Iteration,
        "segment token ids",
        m.batch * seg * 4,
        iters,
    );
    md.edge(
        RET,
        REST,
        Phase::Final,
        "final memory ids",
        m.batch * mem * 4,
        1.0,
    );
    md
}

fn memory_as_context(c: &WorkloadConfig) -> Model {
    let m = dims(c);
    let mut md = Model::default();
    let seg = u128::from(c.segment_len);
    let nseg = segments(c);
    let iters = nseg as f64;
    md.iterations = iters;
    let mems = nseg;
    let k = u128::from(c.k_budget).min(mems);
    let fwd = prefill(c, seg, 0);
    let prep = fwd.plus(Counts::new(m.batch * seg * m.h, m.batch * m.h * m.b, 0));
    let comp = Counts::new(
        m.batch * (2 * m.h * m.h + 2 * m.h * m.h * mems + 2 * mems * m.h),
        2 * m.h * m.h * m.b + m.batch * (m.h * m.b + mems * m.h * m.b),
        2 * m.h * m.h * m.b + m.batch * mems * m.h * m.b,
    );
    let scores = m.batch * mems * 4;
    let ret = Counts::new(
        m.batch * (5 * mems + 2 * k * m.h),
        m.batch * (k * m.h * m.b + m.h * m.b) + scores,
        m.batch * mems * m.h * m.b,
    );
    let augmented = m.batch * (seg + 1) * m.h * m.b;
    let apply = Counts::new(0, 2 * augmented, augmented);
    let rest_iter = prefill(c, seg + 1, 0);
    let out = u128::from(c.output_tokens);
    let rest_final = decode_token(c, seg + out / 2, true).times(out);

    md.set_class(PREP, prep, Regular);
    md.set_class(COMP, comp, Regular);
    md.set_class(RET, ret, Irregular);
    md.set_class(APPLY, apply, Regular);
    md.set_class(REST, rest_iter, Regular);

    md.item(
        c,
        PREP,
        Phase::Iteration,
        "memory generation",
        prep,
        Regular,
        iters,
    );
    md.item(
        c,
        COMP,
        Phase::Iteration,
        "memory scores",
        comp,
        Regular,
        iters,
    );
    md.item(
        c,
        RET,
        Phase::Iteration,
        "weighted sum",
        ret,
        Irregular,
        iters,
    )
    .fusable_input_bytes = scores as f64;
    md.item(
        c,
        APPLY,
        Phase::Iteration,
        "append to segment",
        apply,
        Regular,
        iters,
    );
    md.item(
        c,
        REST,
        Phase::Iteration,
        "segment prefill",
        rest_iter,
        Regular,
        iters,
    );
    md.item(
        c,
        REST,
        Phase::Final,
        "answer decode",
        rest_final,
        Regular,
        1.0,
    );
    md.edge(
        REST,
        PREP,
        Phase::Iteration,
        "segment embeddings",
        m.batch * seg * m.h * m.b,
        iters,
    );
    md.edge(
        PREP,
        COMP,
        Phase::Iteration,
        "segment and new memory",
        m.batch * 2 * m.h * m.b,
        iters,
    );
    md.edge(COMP, RET, Phase::Iteration, "scores", scores, iters);
    md.edge(
        RET,
        APPLY,
        Phase::Iteration,
        "retrieved memory",
        m.batch * m.h * m.b,
        iters,
    );
    md.edge(
        APPLY,
        REST,
        Phase::Iteration,
        "augmented segment",
        augmented,
        iters,
    );
    md
}

/// Fast weights of the test-time-trained layer are fp32.
const FAST_WEIGHT_BYTES: u128 = 4;
const LOSS_OPS_PER_ELEMENT: u128 = 16;

fn lact(c: &WorkloadConfig) -> Model {
    let m = dims(c);
    let mut md = Model::default();
    let s = u128::from(c.segment_len);
    let fw = 3 * m.h * m.h;
    let elems = m.batch * s * m.h;
    let prep = Counts::new(
        2 * 2 * fw * s * m.batch,
        2 * fw * FAST_WEIGHT_BYTES + 3 * elems * m.b,
        fw * FAST_WEIGHT_BYTES,
    );
    let comp = Counts::new(
        LOSS_OPS_PER_ELEMENT * elems,
        FAST_WEIGHT_BYTES * elems,
        FAST_WEIGHT_BYTES * elems,
    );
    let apply = Counts::new(
        2 * fw * s * m.batch,
        fw * FAST_WEIGHT_BYTES + 2 * elems * m.b,
        fw * FAST_WEIGHT_BYTES,
    );
    md.set_class(PREP, prep, Regular);
    md.set_class(COMP, comp, Regular);
    md.set_class(APPLY, apply, Regular);
    md.set_class(REST, prefill(c, s, 0), Regular);
    md
}

fn model(c: &WorkloadConfig) -> Model {
    match c.method.family() {
        Family::SparseAttention => sparse_attention(c),
        Family::Rag => rag(c),
        Family::SynthesizedMemory => memagent(c),
        Family::MemoryAsContext => memory_as_context(c),
        Family::TestTimeTraining => lact(c),
    }
}

/// One invocation of `step`, for classification.
pub fn step_work(c: &WorkloadConfig, step: Step) -> Result<StepWork> {
    match model(c).classify[step.index()] {
        Some((counts, pattern)) => Ok(counts.work(tag(c, Node::Step(step)), pattern)),
        None => Err(Error::StepNotApplicable {
            method: c.method.name().into(),
            step: step.title().into(),
        }),
    }
}

/// One invocation of the rest of the LLM: a decoded token for sparse
/// attention, the prefill that consumes the memory otherwise.
pub fn rest_of_llm_work(c: &WorkloadConfig) -> StepWork {
    let (counts, pattern) = model(c).classify[4].expect("every method has a rest");
    counts.work(tag(c, Node::Rest), pattern)
}

pub fn request_profile(c: &WorkloadConfig) -> Result<RequestProfile> {
    if c.method == MethodKind::Lact {
        return Err(Error::ClassificationOnly(c.method.name().into()));
    }
    let md = model(c);
    let active_steps = md
        .items
        .iter()
        .filter_map(|i| match i.node {
            Node::Step(s) => Some(s),
            Node::Rest => None,
        })
        .collect();
    Ok(RequestProfile {
        method: c.method,
        items: md.items,
        edges: md.edges,
        iterations: md.iterations,
        active_steps,
    })
}
