//! Memory-processing share of decoding time across a size sweep.

use crate::device::DeviceClass;
use crate::error::{Error, Result};
use crate::method::Family;
use crate::pipeline::Step;
use crate::scheduler::{evaluate, Assignment, DeviceSet, PlacementPlan};
use crate::workloads::{request_profile, Node, WorkloadConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrendPoint {
    pub x: u64,
    pub memory_processing_s: f64,
    pub rest_s: f64,
    pub fraction: f64,
    /// Prepare-memory time over all four steps.
    pub prep_share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendTable {
    pub method: crate::method::MethodKind,
    /// `seq_len` or `doc_count`.
    pub axis: &'static str,
    pub baseline: [String; 4],
    pub points: Vec<TrendPoint>,
    /// Checked only for families whose share is expected to grow.
    pub monotone: Option<bool>,
}

/// The measured baselines: sparse attention runs on the GPU alone, RAG scores
/// and selects on the CPU, everything else stays on the GPU.
pub fn baseline_assignment(cfg: &WorkloadConfig, set: &DeviceSet) -> Result<Assignment> {
    let mut a = [set.host; 4];
    if cfg.method.family() == Family::Rag {
        let cpu = set
            .devices
            .iter()
            .position(|d| d.class == DeviceClass::Cpu)
            .ok_or_else(|| Error::NoFeasiblePlan("the RAG baseline needs a CPU device".into()))?;
        a[Step::Comp.index()] = cpu;
        a[Step::Ret.index()] = cpu;
    }
    Ok(a)
}

pub fn sweep_axis(cfg: &WorkloadConfig) -> &'static str {
    match cfg.method.family() {
        Family::Rag => "doc_count",
        _ => "seq_len",
    }
}

fn with_x(cfg: &WorkloadConfig, x: u64) -> WorkloadConfig {
    let mut c = cfg.clone();
    match sweep_axis(cfg) {
        "doc_count" => c.doc_count = x,
        _ => c.seq_len = x,
    }
    c
}

pub fn trend_point(plan: &PlacementPlan, x: u64) -> Result<TrendPoint> {
    let mp = plan.memory_processing_decode_s();
    let rest = plan.rest_decode_s();
    let steps: f64 = Step::ALL
        .iter()
        .map(|s| plan.row(Node::Step(*s)).decode_latency_s)
        .sum();
    let prep = plan.row(Node::Step(Step::Prep)).decode_latency_s;
    Ok(TrendPoint {
        x,
        memory_processing_s: mp,
        rest_s: rest,
        fraction: plan.memory_processing_fraction()?,
        prep_share: if steps > 0.0 { prep / steps } else { 0.0 },
    })
}

pub fn trend_suite(
    template: &WorkloadConfig,
    sweep: &[u64],
    set: &DeviceSet,
) -> Result<TrendTable> {
    let a = baseline_assignment(template, set)?;
    let mut points = Vec::with_capacity(sweep.len());
    for &x in sweep {
        let c = with_x(template, x);
        c.validate()?;
        let plan = evaluate(&request_profile(&c)?, &a, set)?;
        points.push(trend_point(&plan, x)?);
    }
    let monotone = matches!(
        template.method.family(),
        Family::SparseAttention | Family::Rag
    )
    .then(|| points.windows(2).all(|w| w[1].fraction >= w[0].fraction));
    Ok(TrendTable {
        method: template.method,
        axis: sweep_axis(template),
        baseline: a.map(|d| set.devices[d].name.clone()),
        points,
        monotone,
    })
}

/// Powers of two from 4 Ki to 1 Mi tokens.
pub fn default_seq_sweep() -> Vec<u64> {
    (12..=20).map(|p| 1u64 << p).collect()
}

pub fn default_doc_sweep() -> Vec<u64> {
    vec![100_000, 1_000_000, 5_000_000, 10_000_000, 20_000_000]
}
