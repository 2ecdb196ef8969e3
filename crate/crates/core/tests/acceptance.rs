//! Acceptance criteria 1-14. Each criterion prints one PASS/FAIL line; the
//! test fails if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use memproc::device::{
    effective_bandwidth, link_latency, shipped_device, shipped_link, step_energy, step_latency,
    StepWork, TierPlacement,
};
use memproc::kernels::bm25::{bm25_build_docs, bm25_score_terms, Bm25Params};
use memproc::kernels::fixture::read_corpus;
use memproc::kernels::page::logical_page_scores;
use memproc::kernels::{
    cross_attention_retrieve, lightning_indexer_score, page_minmax_prepare, page_minmax_score,
    rope_apply, streaming_topk, IndexerConfig, PageConfig, PageScoreMode,
};
use memproc::memory::{IndexPayload, Matrix, MemoryIndex, MemoryStore, Query, StoreKind};
use memproc::method::{Family, MethodKind};
use memproc::pipeline::Step;
use memproc::scheduler::{select_plan, DeviceSet, SchedulerPolicy};
use memproc::trend::{default_seq_sweep, trend_suite};
use memproc::workloads::{
    classify_step, expected_band, is_band_representative, rest_of_llm_work, step_work,
    ExpectedBand, Node, WorkloadConfig,
};
use memproc::Error;

const TOPK_INSTANCES: usize = 500;
const PAGE_INSTANCES: usize = 200;
const BM25_QUERIES: usize = 20;
const BM25_ABS_TOL: f64 = 1e-6;
const INDEXER_HEADS: usize = 64;
const INDEXER_INSTANCES: usize = 50;
const INDEXER_REL_TOL: f64 = 1e-4;
const ATTN_INSTANCES: usize = 100;
const ATTN_REL_TOL: f64 = 1e-5;
const ROPE_VECTORS: usize = 1000;
const ROPE_NORM_TOL: f64 = 1e-5;
const FALLBACK_SEQ_LEN: u64 = 1 << 20;
const SPARSE_FRACTION: (f64, f64) = (0.22, 0.81);
const RAG_FRACTION: (f64, f64) = (0.40, 0.61);
const RAG_DOCS: u64 = 20_000_000;
const LINK_1KB_S: (f64, f64) = (8.0e-6, 10.0e-6);
const ONCHIP_WS_BYTES: f64 = 40.0 * 1024.0 * 1024.0;
const BANDWIDTH_RATIO: f64 = 5.0;

type Check = Result<String, String>;

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed_0000 + tag)
}

fn uniform(r: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| r.gen_range(-1.0f32..1.0)).collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- oracles

/// Full sort by descending score, ties to the smaller id.
fn oracle_topk(scores: &[f32], k: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids.truncate(k);
    ids
}

fn oracle_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Okapi BM25 evaluated term by term from the raw text.
fn oracle_bm25(docs: &[String], query: &[&str], k1: f64, b: f64) -> Vec<f64> {
    let toks: Vec<Vec<String>> = docs.iter().map(|d| oracle_tokenize(d)).collect();
    let n = docs.len() as f64;
    let avg = toks.iter().map(|t| t.len() as f64).sum::<f64>() / n;
    let mut terms: Vec<String> = query.iter().flat_map(|q| oracle_tokenize(q)).collect();
    terms.sort();
    terms.dedup();
    let mut scores = vec![0.0; docs.len()];
    for t in &terms {
        let df = toks.iter().filter(|d| d.contains(t)).count() as f64;
        if df == 0.0 {
            continue;
        }
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        for (i, d) in toks.iter().enumerate() {
            let tf = d.iter().filter(|w| *w == t).count() as f64;
            if tf > 0.0 {
                let len = d.len() as f64;
                scores[i] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
            }
        }
    }
    scores
}

/// `sum_h w_h sum_c q_hc k_tc` by explicit loops.
fn oracle_indexer(heads: &[Vec<f32>], weights: &[f32], keys: &[Vec<f32>]) -> Vec<f64> {
    let mut out = vec![0.0; keys.len()];
    for (t, key) in keys.iter().enumerate() {
        for (h, q) in heads.iter().enumerate() {
            let mut s = 0.0;
            for c in 0..key.len() {
                s += q[c] as f64 * key[c] as f64;
            }
            out[t] += weights[h] as f64 * s;
        }
    }
    out
}

/// Softmax over the listed memories, then the weighted sum.
fn oracle_attention(q: &[f32], mems: &[Vec<f32>], ids: &[usize]) -> Vec<f64> {
    let logits: Vec<f64> = ids
        .iter()
        .map(|&i| {
            q.iter()
                .zip(&mems[i])
                .map(|(a, b)| *a as f64 * *b as f64)
                .sum()
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    let mut out = vec![0.0; q.len()];
    for (w, &i) in e.iter().zip(ids) {
        for (o, x) in out.iter_mut().zip(&mems[i]) {
            *o += w / z * *x as f64;
        }
    }
    out
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------- criteria

fn c1_topk() -> Check {
    let mut r = rng(1);
    let mut checked = 0;
    while checked < TOPK_INSTANCES {
        let n = r.gen_range(1..=10_000usize);
        // a narrow integer range forces many ties
        let tied = r.gen_bool(0.5);
        let scores: Vec<f32> = (0..n)
            .map(|_| {
                if tied {
                    r.gen_range(0..20) as f32
                } else {
                    r.gen_range(-1e3f32..1e3)
                }
            })
            .collect();
        for k in [0, 1, 8, n / 2, n] {
            let got = streaming_topk(scores.iter().copied().enumerate(), k).ids;
            let want = oracle_topk(&scores, k);
            ensure(got == want, || format!("n={n} k={k}: ids differ"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} instances equal"))
}

fn c2_page_bound() -> Check {
    let mut r = rng(2);
    for i in 0..PAGE_INSTANCES {
        let cfg = PageConfig {
            logical_page_size: r.gen_range(1..=16),
            logical_pages_per_physical: r.gen_range(1..=4),
            score_mode: PageScoreMode::ChannelWise,
        };
        let dim = r.gen_range(1..=64);
        let tokens = r.gen_range(1..=cfg.physical_page_size());
        let keys: Vec<Vec<f32>> = (0..tokens).map(|_| uniform(&mut r, dim)).collect();
        let q = uniform(&mut r, dim);
        let store =
            MemoryStore::from_matrix(StoreKind::TokenKeys, Matrix::from_rows(&keys).unwrap())
                .map_err(err)?;
        let idx = page_minmax_prepare(&store, &cfg).map_err(err)?;
        let IndexPayload::PageMinMax(bounds) = &idx.payload else {
            return Err("page index has the wrong payload".into());
        };
        let exact = keys
            .iter()
            .map(|k| {
                q.iter()
                    .zip(k)
                    .map(|(a, b)| *a as f64 * *b as f64)
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let bound = logical_page_scores(&q, bounds, cfg.score_mode)
            .map_err(err)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        ensure(bound >= exact, || {
            format!("instance {i}: bound {bound} < exact {exact}")
        })?;
        let physical = page_minmax_score(&q, &idx, &cfg).map_err(err)?;
        ensure(physical.scores.len() == 1, || {
            format!("instance {i}: expected one physical page")
        })?;
        let s = physical.scores[0].1;
        ensure(s >= exact as f32, || {
            format!("instance {i}: f32 score {s} < exact {exact}")
        })?;
    }
    Ok(format!("{PAGE_INSTANCES} pages bounded"))
}

fn c3_bm25() -> Check {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus10.txt");
    let docs = read_corpus(&path).map_err(err)?;
    ensure(docs.len() == 10, || {
        format!("fixture has {} documents", docs.len())
    })?;
    let index = bm25_build_docs(&docs).map_err(err)?;
    let params = Bm25Params::for_index(&index);
    ensure(params.k1 == 1.5 && params.b == 0.75, || {
        "default k1/b changed".into()
    })?;
    let vocab: Vec<String> = {
        let mut v: Vec<String> = docs.iter().flat_map(|d| oracle_tokenize(d)).collect();
        v.sort();
        v.dedup();
        v
    };
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for qi in 0..BM25_QUERIES {
        let n_terms = r.gen_range(1..=4);
        let mut q: Vec<String> = (0..n_terms)
            .map(|_| vocab[r.gen_range(0..vocab.len())].clone())
            .collect();
        if qi % 5 == 0 {
            q.push("absentterm".into());
            q.push(q[0].to_uppercase());
        }
        let terms: Vec<&str> = q.iter().map(String::as_str).collect();
        let want = oracle_bm25(&docs, &terms, 1.5, 0.75);
        let got: BTreeMap<usize, f32> = bm25_score_terms(&terms, &index, &params)
            .map_err(err)?
            .scores
            .into_iter()
            .collect();
        for (d, w) in want.iter().enumerate() {
            let g = got.get(&d).copied().unwrap_or(0.0) as f64;
            worst = worst.max((g - w).abs());
            ensure((g - w).abs() <= BM25_ABS_TOL, || {
                format!("query {qi} doc {d}: {g} vs {w}")
            })?;
        }
    }
    Ok(format!("{BM25_QUERIES} queries, max abs error {worst:.1e}"))
}

fn c4_indexer() -> Check {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for i in 0..INDEXER_INSTANCES {
        let dim = [16, 32, 64, 128][r.gen_range(0..4)];
        let tokens = r.gen_range(1..=256);
        let heads: Vec<Vec<f32>> = (0..INDEXER_HEADS).map(|_| uniform(&mut r, dim)).collect();
        let weights: Vec<f32> = (0..INDEXER_HEADS)
            .map(|_| r.gen_range(0.0f32..1.0))
            .collect();
        let keys: Vec<Vec<f32>> = (0..tokens).map(|_| uniform(&mut r, dim)).collect();
        let index = MemoryIndex {
            payload: IndexPayload::IndexerVectors(Matrix::from_rows(&keys).unwrap()),
            source_entry_count: tokens,
        };
        let q =
            Query::vectors(Matrix::from_rows(&heads).unwrap()).with_head_weights(weights.clone());
        let got = lightning_indexer_score(&q, &index).map_err(err)?;
        let want = oracle_indexer(&heads, &weights, &keys);
        ensure(got.scores.len() == tokens, || {
            format!("instance {i}: score count")
        })?;
        for (t, s) in got.scores {
            let w = want[t];
            let rel = (s as f64 - w).abs() / w.abs().max(1e-6);
            worst = worst.max(rel);
            ensure(rel <= INDEXER_REL_TOL, || {
                format!("instance {i} token {t}: {s} vs {w}")
            })?;
        }
    }
    Ok(format!(
        "{INDEXER_INSTANCES} instances with {INDEXER_HEADS} heads, max rel error {worst:.1e}"
    ))
}

fn c5_attention() -> Check {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for i in 0..ATTN_INSTANCES {
        let dim = r.gen_range(1..=64);
        let n = r.gen_range(1..=64);
        let mems: Vec<Vec<f32>> = (0..n).map(|_| uniform(&mut r, dim)).collect();
        let scale = 1.0 / (dim as f32).sqrt();
        let q: Vec<f32> = uniform(&mut r, dim)
            .into_iter()
            .map(|x| x * 4.0 * scale)
            .collect();
        let store = MemoryStore::from_matrix(
            StoreKind::MemoryEmbeddings,
            Matrix::from_rows(&mems).unwrap(),
        )
        .map_err(err)?;
        // dense softmax over every memory, then a top-k subset
        for k in [n, r.gen_range(1..=n)] {
            let got = cross_attention_retrieve(&q, &store, k).map_err(err)?;
            let out = got
                .embeddings
                .as_ref()
                .ok_or("no embedding")?
                .row(0)
                .to_vec();
            let want = oracle_attention(&q, &mems, &got.ids);
            if k == n {
                let mut ids = got.ids.clone();
                ids.sort();
                ensure(ids == (0..n).collect::<Vec<_>>(), || {
                    format!("instance {i}: dense set incomplete")
                })?;
            }
            let scale = want.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
            let e = out
                .iter()
                .zip(&want)
                .map(|(a, b)| (*a as f64 - b).abs())
                .fold(0.0, f64::max)
                / scale;
            worst = worst.max(e);
            ensure(e <= ATTN_REL_TOL, || {
                format!("instance {i} k={k}: rel error {e}")
            })?;
            for c in 0..dim {
                let lo = got
                    .ids
                    .iter()
                    .map(|&m| mems[m][c])
                    .fold(f32::INFINITY, f32::min);
                let hi = got
                    .ids
                    .iter()
                    .map(|&m| mems[m][c])
                    .fold(f32::NEG_INFINITY, f32::max);
                ensure(lo <= out[c] && out[c] <= hi, || {
                    format!("instance {i} channel {c} outside hull")
                })?;
            }
        }
    }
    Ok(format!(
        "{ATTN_INSTANCES} instances, max rel error {worst:.1e}, hull holds"
    ))
}

fn c6_rope() -> Check {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for i in 0..ROPE_VECTORS {
        let head_dim = 2 * r.gen_range(1..=64);
        let cfg = IndexerConfig {
            n_heads: 1,
            head_dim,
            rope_fraction: [0.25, 0.5, 1.0][r.gen_range(0..3)],
            rope_base: 10_000.0,
        };
        let v = uniform(&mut r, head_dim);
        let same = rope_apply(&v, 0, &cfg).map_err(err)?;
        ensure(same == v, || {
            format!("vector {i}: position 0 changed the vector")
        })?;
        let pos = r.gen_range(1..=1usize << 20);
        let out = rope_apply(&v, pos, &cfg).map_err(err)?;
        let rel = (norm(&out) - norm(&v)).abs() / norm(&v).max(1e-30);
        worst = worst.max(rel);
        ensure(rel <= ROPE_NORM_TOL, || {
            format!("vector {i} at {pos}: norm drift {rel}")
        })?;
    }
    Ok(format!(
        "{ROPE_VECTORS} vectors, max norm drift {worst:.1e}"
    ))
}

fn c7_bands() -> Check {
    let mi210 = shipped_device("mi210").map_err(err)?;
    let mut cells = 0;
    for kind in MethodKind::ALL {
        if !is_band_representative(kind) {
            continue;
        }
        let cfg = WorkloadConfig::defaults(kind).map_err(err)?;
        for node in Node::ALL {
            let want = expected_band(kind.family(), node);
            let work = match node {
                Node::Step(s) => step_work(&cfg, s),
                Node::Rest => Ok(rest_of_llm_work(&cfg)),
            };
            match (want, work) {
                (ExpectedBand::NotApplicable, Err(Error::StepNotApplicable { .. })) => {}
                (ExpectedBand::NotApplicable, other) => {
                    return Err(format!("{kind} {node}: expected N/A, got {other:?}"))
                }
                (_, Err(e)) => return Err(format!("{kind} {node}: {e}")),
                (ExpectedBand::Zero, Ok(w)) => ensure(w.flops == 0.0, || {
                    format!("{kind} {node}: {} flops in a zero cell", w.flops)
                })?,
                (band, Ok(w)) => {
                    let (got, _) = classify_step(&w, &mi210).map_err(err)?;
                    ensure(band.admits(got), || {
                        format!(
                            "{kind} {node}: AI {} in band {got}, expected {}",
                            w.flops / w.bytes_moved,
                            band.label()
                        )
                    })?;
                }
            }
            cells += 1;
        }
    }
    Ok(format!("{cells} cells over the family representatives"))
}

fn hybrid_set() -> DeviceSet {
    DeviceSet::new(
        vec![
            shipped_device("mi210").unwrap(),
            shipped_device("u55c").unwrap(),
        ],
        shipped_link("pcie3-p2p").unwrap(),
    )
    .unwrap()
}

fn with(kind: MethodKind, f: impl FnOnce(&mut WorkloadConfig)) -> WorkloadConfig {
    let mut c = WorkloadConfig::defaults(kind).unwrap();
    f(&mut c);
    c
}

fn c8_placement() -> Check {
    let set = hybrid_set();
    let policy = SchedulerPolicy::default();
    let general = ["mi210", "u55c", "u55c", "mi210"];
    let cases = [
        with(MethodKind::DeepSeekAttention, |c| c.seq_len = 262_144),
        with(MethodKind::SeerAttentionRTopK, |c| c.seq_len = 262_144),
        with(MethodKind::SeerAttentionRThreshold, |c| c.seq_len = 262_144),
        with(MethodKind::LServe, |c| c.seq_len = 131_072),
        with(MethodKind::SingleStageRag, |c| c.doc_count = 1_000_000),
    ];
    for c in &cases {
        let p = select_plan(c, &set, &policy).map_err(err)?;
        ensure(p.devices == general, || {
            format!("{} picked {:?}", c.method, p.devices)
        })?;
        let into_apply = p
            .transfers
            .iter()
            .find(|t| t.to == Node::Step(Step::Apply))
            .ok_or_else(|| format!("{}: nothing is sent back to the GPU", c.method))?;
        ensure(into_apply.from == Node::Step(Step::Ret), || {
            format!("{}: apply is fed by {}", c.method, into_apply.from)
        })?;
        ensure(
            !p.transfers
                .iter()
                .any(|t| t.from == Node::Step(Step::Comp) || t.to == Node::Step(Step::Ret)),
            || format!("{}: relevancy scores cross the link", c.method),
        )?;
        if c.method == MethodKind::DeepSeekAttention {
            ensure(p.transfers.len() == 2, || {
                format!("DSA has {} transfer rows", p.transfers.len())
            })?;
        }
    }
    let ma = select_plan(
        &with(MethodKind::MemAgent, |c| c.batch_size = 1),
        &set,
        &policy,
    )
    .map_err(err)?;
    ensure(ma.devices == ["u55c", "mi210", "mi210", "mi210"], || {
        format!("MemAgent picked {:?}", ma.devices)
    })?;
    let mac = select_plan(
        &WorkloadConfig::defaults(MethodKind::MemoryAsContext).unwrap(),
        &set,
        &policy,
    )
    .map_err(err)?;
    ensure(
        mac.device_of(Step::Comp) == "u55c"
            && mac.device_of(Step::Ret) == "u55c"
            && mac.memory_home == "u55c",
        || {
            format!(
                "MaC picked {:?} with memory on {}",
                mac.devices, mac.memory_home
            )
        },
    )?;
    Ok("general setup for 5 methods, MemAgent prefill/decode split, MaC memory on the FPGA".into())
}

fn c9_policy() -> Check {
    let set = hybrid_set();
    let policy = SchedulerPolicy::default();
    ensure(
        policy.fallback_seq_len == FALLBACK_SEQ_LEN && policy.memagent_batch_switch == 2,
        || "default policy thresholds changed".into(),
    )?;
    for kind in [
        MethodKind::DeepSeekAttention,
        MethodKind::SeerAttentionRTopK,
        MethodKind::SeerAttentionRThreshold,
        MethodKind::LServe,
    ] {
        for n in [FALLBACK_SEQ_LEN + 1, 2 * FALLBACK_SEQ_LEN] {
            let p = select_plan(&with(kind, |c| c.seq_len = n), &set, &policy).map_err(err)?;
            ensure(
                p.is_single_device() && p.devices.iter().all(|d| d == "mi210"),
                || format!("{kind} at {n} picked {:?}", p.devices),
            )?;
            ensure(p.notes.iter().any(|n| n == "seq-len fallback"), || {
                format!("{kind}: no fallback note")
            })?;
        }
        let p = select_plan(&with(kind, |c| c.seq_len = FALLBACK_SEQ_LEN), &set, &policy)
            .map_err(err)?;
        ensure(p.notes.is_empty(), || {
            format!("{kind} at the threshold got notes {:?}", p.notes)
        })?;
    }
    for b in [3, 4, 8] {
        let p = select_plan(
            &with(MethodKind::MemAgent, |c| c.batch_size = b),
            &set,
            &policy,
        )
        .map_err(err)?;
        ensure(p.devices.iter().all(|d| d == "mi210"), || {
            format!("MemAgent batch {b} picked {:?}", p.devices)
        })?;
        ensure(p.notes.iter().any(|n| n == "batch switch"), || {
            format!("batch {b}: no switch note")
        })?;
    }
    let p = select_plan(
        &with(MethodKind::MemAgent, |c| c.batch_size = 2),
        &set,
        &policy,
    )
    .map_err(err)?;
    ensure(p.notes.is_empty(), || "MemAgent batch 2 switched".into())?;
    Ok("seq-len fallback above 2^20 tokens, batch switch above 2".into())
}

fn c10_trend() -> Check {
    let gpu = DeviceSet::new(
        vec![shipped_device("mi210").unwrap()],
        shipped_link("pcie3-p2p").unwrap(),
    )
    .unwrap();
    let mut summary = Vec::new();
    for kind in MethodKind::ALL
        .into_iter()
        .filter(|k| k.family() == Family::SparseAttention)
    {
        let t = trend_suite(
            &WorkloadConfig::defaults(kind).unwrap(),
            &default_seq_sweep(),
            &gpu,
        )
        .map_err(err)?;
        let f: Vec<f64> = t.points.iter().map(|p| p.fraction).collect();
        ensure(f.windows(2).all(|w| w[1] > w[0]), || {
            format!("{kind} not increasing: {f:?}")
        })?;
        let last = *f.last().unwrap();
        ensure(t.points.last().unwrap().x == 1 << 20, || {
            "sweep does not end at 1M".into()
        })?;
        ensure(
            (SPARSE_FRACTION.0..=SPARSE_FRACTION.1).contains(&last),
            || format!("{kind} at 1M: {last}"),
        )?;
        summary.push(format!("{}={last:.3}", kind.slug()));
    }
    let cpu = DeviceSet::new(
        vec![
            shipped_device("mi210").unwrap(),
            shipped_device("epyc7v13").unwrap(),
        ],
        shipped_link("pcie3-p2p").unwrap(),
    )
    .unwrap();
    let rag = WorkloadConfig::defaults(MethodKind::SingleStageRag).unwrap();
    let t = trend_suite(&rag, &[1_000_000, 5_000_000, 10_000_000, RAG_DOCS], &cpu).map_err(err)?;
    ensure(t.monotone == Some(true), || {
        "RAG fraction not monotone".into()
    })?;
    let last = t.points.last().unwrap().fraction;
    ensure((RAG_FRACTION.0..=RAG_FRACTION.1).contains(&last), || {
        format!("RAG at 20M docs: {last}")
    })?;
    summary.push(format!("rag@20M={last:.3}"));
    Ok(summary.join(" "))
}

fn c11_link() -> Check {
    let link = shipped_link("pcie3-p2p").map_err(err)?;
    let t = link_latency(1024.0, &link);
    ensure((LINK_1KB_S.0..=LINK_1KB_S.1).contains(&t), || {
        format!("1 KB takes {t} s")
    })?;
    let sizes: Vec<f64> = (0..10).map(|i| 512.0 * 3f64.powi(i)).collect();
    let base = link_latency(0.0, &link);
    let slope = (link_latency(sizes[9], &link) - base) / sizes[9];
    for s in &sizes {
        let affine = base + slope * s;
        let got = link_latency(*s, &link);
        ensure((got - affine).abs() <= 1e-12 * got.max(1.0), || {
            format!("{s} bytes: {got} vs affine {affine}")
        })?;
    }
    Ok(format!("1 KB in {:.2} us, affine over 10 sizes", t * 1e6))
}

fn c12_energy() -> Check {
    let listed: [(&str, f64, f64); 7] = [
        ("dsa", 26.4, 55.0),
        ("sar_threshold", 24.9, 45.0),
        ("sar_topk", 25.3, 46.0),
        ("lserve", 26.2, 47.0),
        ("rag", 29.7, 106.0),
        ("memagent", 44.2, 99.0),
        ("mac", 42.6, 94.0),
    ];
    let u55c = shipped_device("u55c").map_err(err)?;
    let mi210 = shipped_device("mi210").map_err(err)?;
    let epyc = shipped_device("epyc7v13").map_err(err)?;
    ensure(epyc.power("rag").map_err(err)? == 34.0, || {
        "EPYC RAG power".into()
    })?;
    let w = StepWork::new(3.0e9, 7.0e8, 1.0e6, "x");
    for (tag, pu, pg) in listed {
        ensure(u55c.power(tag).map_err(err)? == pu, || {
            format!("u55c {tag}")
        })?;
        ensure(mi210.power(tag).map_err(err)? == pg, || {
            format!("mi210 {tag}")
        })?;
        for (dev, p) in [(&u55c, pu), (&mi210, pg)] {
            let lat = step_latency(&w, dev).map_err(err)?;
            let e = step_energy(lat, dev, &format!("{tag}.comp")).map_err(err)?;
            ensure(e == p * lat, || {
                format!("{} {tag}: {e} != {p} * {lat}", dev.name)
            })?;
        }
    }
    Ok("7 kernel tags on both devices plus the EPYC RAG figure".into())
}

fn c13_bandwidth() -> Check {
    let u55c = shipped_device("u55c").map_err(err)?;
    let mi210 = shipped_device("mi210").map_err(err)?;
    let gpu_onchip = mi210.mem_tiers[0].bandwidth_bytes_per_s;
    let mut worst = f64::INFINITY;
    for i in 1..=40 {
        let ws = ONCHIP_WS_BYTES * i as f64 / 40.0;
        let bw = effective_bandwidth(&u55c.mem_tiers, ws, TierPlacement::default()).map_err(err)?;
        worst = worst.min(bw / gpu_onchip);
    }
    ensure(worst >= BANDWIDTH_RATIO, || {
        format!("ratio falls to {worst}")
    })?;
    Ok(format!("minimum ratio {worst:.2} up to 40 MB"))
}

fn c14_determinism() -> Check {
    let bin = env!("CARGO_BIN_EXE_memproc");
    let specs = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs");
    let mut names: Vec<_> = std::fs::read_dir(&specs)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    names.sort();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut modes = Vec::new();
    for spec in &names {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = tmp.path().join(format!("run{run}.csv"));
            let status = Command::new(bin)
                .arg("--spec")
                .arg(spec)
                .arg("--out")
                .arg(&out)
                .status()
                .map_err(|e| e.to_string())?;
            ensure(status.code() == Some(0), || {
                format!("{} exited {:?}", spec.display(), status.code())
            })?;
            outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        ensure(outputs[0] == outputs[1], || {
            format!("{} differs between runs", spec.display())
        })?;
        let text = String::from_utf8_lossy(&outputs[0]).into_owned();
        ensure(!text.contains('\r'), || "CRLF in CSV".into())?;
        let text = std::fs::read_to_string(spec).unwrap();
        let mode = text
            .lines()
            .find(|l| l.starts_with("mode"))
            .unwrap_or("")
            .to_owned();
        modes.push(mode);
    }
    modes.sort();
    modes.dedup();
    ensure(modes.len() == 4, || {
        format!("specs cover {} modes", modes.len())
    })?;
    Ok(format!("{} specs over 4 modes byte-identical", names.len()))
}

type Criterion = (u32, &'static str, fn() -> Check, u64);

#[test]
fn acceptance() {
    let criteria: [Criterion; 14] = [
        (1, "streaming top-k equals full sort", c1_topk, 10),
        (
            2,
            "page min/max score bounds the token max",
            c2_page_bound,
            5,
        ),
        (
            3,
            "BM25 equals scalar Okapi on the 10-doc fixture",
            c3_bm25,
            1,
        ),
        (
            4,
            "64-head lightning indexer equals triple loop",
            c4_indexer,
            5,
        ),
        (
            5,
            "cross-attention equals dense softmax, convex hull",
            c5_attention,
            5,
        ),
        (6, "RoPE identity at 0 and norm preservation", c6_rope, 1),
        (7, "arithmetic-intensity bands", c7_bands, 5),
        (8, "placement reproduction", c8_placement, 10),
        (9, "policy reproduction", c9_policy, 1),
        (10, "trend reproduction", c10_trend, 30),
        (11, "link model", c11_link, 1),
        (12, "energy identity and listed powers", c12_energy, 1),
        (13, "on-chip bandwidth ratio", c13_bandwidth, 1),
        (14, "end-to-end CLI determinism", c14_determinism, 60),
    ];
    let mut failed = Vec::new();
    for (id, name, f, budget) in criteria {
        let t = Instant::now();
        let result = f();
        let took = t.elapsed();
        let over = took > Duration::from_secs(budget);
        let (verdict, detail) = match (&result, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over the {budget} s budget")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        println!(
            "criterion {id:>2} [{verdict}] {name}: {detail} ({:.2} s)",
            took.as_secs_f64()
        );
        if verdict == "FAIL" {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
