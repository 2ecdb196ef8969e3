//! The four run modes behind the `memproc` binary.

use std::path::PathBuf;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Format, Mode, RunSpec};
use crate::error::{Error, Result};
use crate::memory::{Matrix, MemoryStore, Query, StoreKind};
use crate::method::{MethodConfig, MethodKind};
use crate::pipeline::{build_pipeline, Step};
use crate::report::{num, opt_num, Report};
use crate::scheduler::{select_plan, PlacementPlan};
use crate::trend::{default_doc_sweep, default_seq_sweep, sweep_axis, trend_suite};
use crate::workloads::{
    classify_step, expected_band, is_band_representative, rest_of_llm_work, step_work, AiBand,
    ExpectedBand, Node, WorkloadConfig,
};

#[derive(Debug, Clone, Parser)]
#[command(
    name = "memproc",
    version,
    about = "Memory-processing pipeline kernels, cost model and planner"
)]
pub struct Args {
    /// Run specification (TOML).
    #[arg(long)]
    pub spec: PathBuf,
    /// Dotted override, e.g. workload.seq_len=262144. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A finished run: the report plus any failed assertions.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }
}

/// Loads the spec with command-line flags taking precedence.
pub fn load_spec(args: &Args) -> Result<RunSpec> {
    let mut spec = RunSpec::from_path(&args.spec, &args.set)?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(f) = args.format {
        spec.format = f;
    }
    if args.out.is_some() {
        spec.output = args.out.clone();
    }
    Ok(spec)
}

pub fn execute(spec: &RunSpec) -> Result<Outcome> {
    match spec.mode {
        Mode::AiTable => ai_table(spec),
        Mode::Plan => plan(spec),
        Mode::TrendSweep => trend_sweep(spec),
        Mode::KernelBench => kernel_bench(spec),
    }
}

/// Parses, runs and writes the report. Returns the process exit code:
/// 0 when every assertion passed, 1 when one failed, 2 on error.
pub fn run(args: &Args) -> i32 {
    let result = load_spec(args).and_then(|spec| {
        for w in &spec.warnings {
            eprintln!("warning: {w}");
        }
        let out = execute(&spec)?;
        out.report.emit(spec.format, spec.output.as_deref())?;
        Ok(out)
    });
    match result {
        Ok(out) => {
            for f in &out.failures {
                eprintln!("assertion failed: {f}");
            }
            out.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn workload(spec: &RunSpec) -> &WorkloadConfig {
    spec.workload.as_ref().expect("validated by RunSpec")
}

pub fn ai_table(spec: &RunSpec) -> Result<Outcome> {
    let set = spec.device_set()?;
    let dev = &set.devices[0];
    let mut report = Report::new([
        "seed",
        "method",
        "family",
        "node",
        "flops",
        "bytes",
        "ai",
        "band",
        "expected",
        "boundedness",
        "device",
        "asserted",
        "verdict",
    ]);
    let mut failures = Vec::new();
    for &kind in &spec.ai_methods {
        let cfg = WorkloadConfig::defaults(kind)?;
        let asserted = is_band_representative(kind);
        for node in Node::ALL {
            let expected = expected_band(kind.family(), node);
            let work = match node {
                Node::Step(s) => step_work(&cfg, s),
                Node::Rest => Ok(rest_of_llm_work(&cfg)),
            };
            let (flops, bytes, ai, band, bound, ok) = match work {
                Ok(w) => {
                    let (band, bound) = match classify_step(&w, dev) {
                        Ok((b, k)) => (b, k.label()),
                        Err(Error::ZeroBytes) => (AiBand::of(w.flops, 0.0), ""),
                        Err(e) => return Err(e),
                    };
                    let ai = if w.bytes_moved > 0.0 {
                        num(w.flops / w.bytes_moved)
                    } else {
                        String::new()
                    };
                    (
                        num(w.flops),
                        num(w.bytes_moved),
                        ai,
                        band.label(),
                        bound,
                        expected.admits(band),
                    )
                }
                Err(Error::StepNotApplicable { .. }) => (
                    String::new(),
                    String::new(),
                    String::new(),
                    "N/A",
                    "",
                    expected == ExpectedBand::NotApplicable,
                ),
                Err(e) => return Err(e),
            };
            let verdict = match (asserted, ok) {
                (false, _) => "info",
                (true, true) => "pass",
                (true, false) => "fail",
            };
            if verdict == "fail" {
                failures.push(format!(
                    "{kind} {node}: band {band}, expected {}",
                    expected.label()
                ));
            }
            report.push([
                spec.seed.to_string(),
                kind.name().into(),
                kind.family().name().into(),
                node.name().into(),
                flops,
                bytes,
                ai,
                band.into(),
                expected.label().into(),
                bound.into(),
                dev.name.clone(),
                asserted.to_string(),
                verdict.into(),
            ]);
        }
    }
    Ok(Outcome { report, failures })
}

pub const PLAN_COLUMNS: [&str; 12] = [
    "seed",
    "method",
    "kind",
    "name",
    "device",
    "active",
    "latency_s",
    "decode_latency_s",
    "energy_j",
    "bytes",
    "fraction",
    "detail",
];

/// One row per node and transfer, then a total row.
pub fn plan_report(plan: &PlacementPlan, seed: u64) -> Result<Report> {
    let mut r = Report::new(PLAN_COLUMNS);
    let m = plan.method.name();
    for row in &plan.rows {
        let kind = if row.node == Node::Rest {
            "rest"
        } else {
            "step"
        };
        r.push([
            seed.to_string(),
            m.into(),
            kind.into(),
            row.node.name().into(),
            row.device.clone(),
            row.active.to_string(),
            num(row.latency_s),
            num(row.decode_latency_s),
            opt_num(row.energy_j),
            String::new(),
            String::new(),
            String::new(),
        ]);
    }
    for t in &plan.transfers {
        r.push([
            seed.to_string(),
            m.into(),
            "transfer".into(),
            format!("{}->{}", t.from, t.to),
            format!("{}->{}", t.from_device, t.to_device),
            "true".into(),
            num(t.latency_s),
            num(t.decode_latency_s),
            String::new(),
            num(t.bytes),
            String::new(),
            t.what.join(";"),
        ]);
    }
    let mut detail = vec![format!("memory={}", plan.memory_home)];
    detail.extend(plan.notes.iter().cloned());
    r.push([
        seed.to_string(),
        m.into(),
        "total".into(),
        "plan".into(),
        plan.devices.join(";"),
        "true".into(),
        num(plan.predicted_latency_s),
        num(plan.memory_processing_decode_s() + plan.rest_decode_s()),
        opt_num(plan.predicted_energy_j),
        num(plan.transfers.iter().map(|t| t.bytes).sum()),
        num(plan.memory_processing_fraction()?),
        detail.join(";"),
    ]);
    Ok(r)
}

pub fn plan(spec: &RunSpec) -> Result<Outcome> {
    let set = spec.device_set()?;
    let p = select_plan(workload(spec), &set, &spec.policy)?;
    let mut failures = Vec::new();
    if let Some(want) = &spec.expect.devices {
        if want.as_slice() != p.devices.as_slice() {
            failures.push(format!("placement {:?}, expected {:?}", p.devices, want));
        }
    }
    Ok(Outcome {
        report: plan_report(&p, spec.seed)?,
        failures,
    })
}

pub fn trend_sweep(spec: &RunSpec) -> Result<Outcome> {
    let set = spec.device_set()?;
    let w = workload(spec);
    let sweep = match &spec.trend.sweep {
        Some(s) => s.clone(),
        None if sweep_axis(w) == "doc_count" => default_doc_sweep(),
        None => default_seq_sweep(),
    };
    let t = trend_suite(w, &sweep, &set)?;
    let mut report = Report::new([
        "seed",
        "method",
        "axis",
        "x",
        "baseline",
        "memory_processing_s",
        "rest_s",
        "fraction",
        "prep_share",
    ]);
    for p in &t.points {
        report.push([
            spec.seed.to_string(),
            t.method.name().into(),
            t.axis.into(),
            p.x.to_string(),
            t.baseline.join(";"),
            num(p.memory_processing_s),
            num(p.rest_s),
            num(p.fraction),
            num(p.prep_share),
        ]);
    }
    let mut failures = Vec::new();
    if t.monotone == Some(false) {
        failures.push(format!(
            "{} fraction is not monotone over the sweep",
            t.method
        ));
    }
    let last = t.points.last().expect("sweep is non-empty").fraction;
    if let Some(lo) = spec.expect.fraction_min {
        if last < lo {
            failures.push(format!("final fraction {last} below {lo}"));
        }
    }
    if let Some(hi) = spec.expect.fraction_max {
        if last > hi {
            failures.push(format!("final fraction {last} above {hi}"));
        }
    }
    Ok(Outcome { report, failures })
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect();
    Matrix::new(rows, cols, data).expect("shape matches data")
}

/// Skewed word ids so that document frequencies vary.
fn random_words(rng: &mut ChaCha8Rng, vocab: usize, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            format!("w{}", ((u * u) * vocab as f64) as usize)
        })
        .collect()
}

fn random_store(
    method: &MethodConfig,
    spec: &RunSpec,
    kind: StoreKind,
    rng: &mut ChaCha8Rng,
) -> Result<MemoryStore> {
    let kb = &spec.kernel_bench;
    match kind {
        StoreKind::Corpus => {
            Ok(MemoryStore::from_documents((0..kb.entries).map(|_| {
                random_words(rng, kb.vocab, kb.doc_len).join(" ")
            })))
        }
        _ => {
            let dim = match method {
                MethodConfig::DeepSeekAttention { indexer, .. } => indexer.head_dim,
                _ => kb.dim,
            };
            MemoryStore::from_matrix(kind, random_matrix(rng, kb.entries, dim))
        }
    }
}

fn random_query(
    method: &MethodConfig,
    spec: &RunSpec,
    kind: StoreKind,
    rng: &mut ChaCha8Rng,
) -> Query {
    let kb = &spec.kernel_bench;
    match (method, kind) {
        (_, StoreKind::Corpus) => Query::terms(random_words(rng, kb.vocab, kb.query_terms)),
        (MethodConfig::DeepSeekAttention { indexer, .. }, _) => {
            let heads = random_matrix(rng, indexer.n_heads, indexer.head_dim);
            let w = (0..indexer.n_heads)
                .map(|_| rng.gen_range(0.0f32..1.0))
                .collect();
            Query::vectors(heads).with_head_weights(w)
        }
        (_, StoreKind::TokenKeys) => Query::vectors(random_matrix(rng, kb.heads, kb.dim)),
        (_, StoreKind::MemoryEmbeddings) => Query::vectors(random_matrix(rng, 1, kb.dim)),
    }
}

/// Runs the reference pipeline on seeded random inputs and reports work
/// counters. Wall time is left out so the output is reproducible.
pub fn kernel_bench(spec: &RunSpec) -> Result<Outcome> {
    let method = spec.pipeline.as_ref().expect("validated by RunSpec");
    let kind: MethodKind = method.kind();
    let pipe = build_pipeline(method)?;
    let store_kind = pipe.store_kind();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let store = random_store(method, spec, store_kind, &mut rng)?;
    let mut report = Report::new([
        "seed",
        "method",
        "query",
        "step",
        "flops",
        "bytes_read",
        "bytes_written",
        "retrieved",
        "ids",
    ]);
    for qi in 0..spec.kernel_bench.queries {
        let q = random_query(method, spec, store_kind, &mut rng);
        let run = pipe.run(&store, &q)?;
        for step in Step::ALL {
            let c = run.counters[step.index()];
            let (flops, read, written) = c.work();
            let ids = if step == Step::Ret {
                run.retrieved
                    .ids
                    .iter()
                    .take(8)
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            } else {
                String::new()
            };
            report.push([
                spec.seed.to_string(),
                kind.name().into(),
                qi.to_string(),
                step.name().into(),
                flops.to_string(),
                read.to_string(),
                written.to_string(),
                run.retrieved.ids.len().to_string(),
                ids,
            ]);
        }
    }
    Ok(Outcome {
        report,
        failures: Vec::new(),
    })
}
