//! Placement of the four steps over a set of devices.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::device::{link_latency, step_latency, DeviceClass, DeviceSpec, LinkSpec};
use crate::error::{Error, Result};
use crate::method::{Family, MethodKind};
use crate::pipeline::Step;
use crate::workloads::{request_profile, Node, Phase, RequestProfile, WorkloadConfig};

/// Devices available to a plan. The rest of the LLM runs on `devices[host]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSet {
    pub devices: Vec<DeviceSpec>,
    pub link: LinkSpec,
    pub host: usize,
}

impl DeviceSet {
    /// The host is the first GPU, or the first device if there is none.
    pub fn new(devices: Vec<DeviceSpec>, link: LinkSpec) -> Result<Self> {
        if devices.is_empty() {
            return Err(Error::NoFeasiblePlan("no devices given".into()));
        }
        let host = devices
            .iter()
            .position(|d| d.class == DeviceClass::Gpu)
            .unwrap_or(0);
        Ok(Self {
            devices,
            link,
            host,
        })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.devices.iter().position(|d| d.name == name)
    }

    pub fn host_device(&self) -> &DeviceSpec {
        &self.devices[self.host]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerPolicy {
    /// Sparse attention beyond this many tokens stays on the host GPU.
    pub fallback_seq_len: u64,
    /// MemAgent with a larger batch stays on the host GPU.
    pub memagent_batch_switch: u64,
}

impl Default for SchedulerPolicy {
    fn default() -> Self {
        Self {
            fallback_seq_len: 1 << 20,
            memagent_batch_switch: 2,
        }
    }
}

/// Device index per step, in step order.
pub type Assignment = [usize; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRow {
    pub node: Node,
    pub device: String,
    pub active: bool,
    pub latency_s: f64,
    pub energy_j: Option<f64>,
    /// Latency outside the prefill phase.
    pub decode_latency_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub from: Node,
    pub to: Node,
    pub from_device: String,
    pub to_device: String,
    pub what: Vec<&'static str>,
    pub bytes: f64,
    pub latency_s: f64,
    pub decode_latency_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementPlan {
    pub method: MethodKind,
    pub assignment: Assignment,
    pub devices: [String; 4],
    pub host: String,
    /// Device holding the processed memory.
    pub memory_home: String,
    pub rows: Vec<PlanRow>,
    pub transfers: Vec<Transfer>,
    pub predicted_latency_s: f64,
    /// `None` when a device lacks a power figure for a tag it runs.
    pub predicted_energy_j: Option<f64>,
    pub notes: Vec<String>,
}

impl PlacementPlan {
    pub fn device_of(&self, step: Step) -> &str {
        &self.devices[step.index()]
    }

    pub fn row(&self, node: Node) -> &PlanRow {
        self.rows
            .iter()
            .find(|r| r.node == node)
            .expect("one row per node")
    }

    pub fn is_single_device(&self) -> bool {
        self.transfers.is_empty()
    }

    /// Steps plus transfers outside the prefill phase.
    pub fn memory_processing_decode_s(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.node != Node::Rest)
            .map(|r| r.decode_latency_s)
            .sum::<f64>()
            + self
                .transfers
                .iter()
                .map(|t| t.decode_latency_s)
                .sum::<f64>()
    }

    pub fn rest_decode_s(&self) -> f64 {
        self.row(Node::Rest).decode_latency_s
    }

    /// Share of decoding time spent in memory processing.
    pub fn memory_processing_fraction(&self) -> Result<f64> {
        let mp = self.memory_processing_decode_s();
        let total = mp + self.rest_decode_s();
        if total <= 0.0 {
            return Err(Error::ZeroTotalTime);
        }
        Ok(mp / total)
    }

    /// Versioned plain-text record of the plan.
    pub fn to_record(&self) -> String {
        let mut s = String::from("memproc-plan v1\n");
        let _ = writeln!(s, "method {}", self.method.name());
        let _ = writeln!(s, "host {}", self.host);
        for step in Step::ALL {
            let _ = writeln!(s, "step {} {}", step.name(), self.device_of(step));
        }
        let _ = writeln!(s, "memory {}", self.memory_home);
        let _ = writeln!(s, "latency_s {:e}", self.predicted_latency_s);
        match self.predicted_energy_j {
            Some(e) => writeln!(s, "energy_j {e:e}"),
            None => writeln!(s, "energy_j unavailable"),
        }
        .ok();
        for t in &self.transfers {
            let _ = writeln!(
                s,
                "transfer {} {} {} {} {:e}",
                t.from, t.to, t.from_device, t.to_device, t.bytes
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "note {n}");
        }
        s
    }
}

/// Method and per-step device names read back from a plan record.
pub fn parse_record(text: &str) -> Result<(MethodKind, [String; 4])> {
    let mut lines = text.lines();
    if lines.next() != Some("memproc-plan v1") {
        return Err(Error::Parse("not a version 1 plan record".into()));
    }
    let mut method = None;
    let mut devices: [Option<String>; 4] = Default::default();
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["method", m] => method = Some(m.parse()?),
            ["step", name, dev] => {
                let step = Step::ALL
                    .into_iter()
                    .find(|s| s.name() == *name)
                    .ok_or_else(|| Error::Parse(format!("unknown step `{name}` in plan record")))?;
                devices[step.index()] = Some((*dev).to_owned());
            }
            _ => {}
        }
    }
    let method = method.ok_or_else(|| Error::Parse("plan record names no method".into()))?;
    let devices = devices.map(|d| d.unwrap_or_default());
    if devices.iter().any(String::is_empty) {
        return Err(Error::Parse("plan record misses a step".into()));
    }
    Ok((method, devices))
}

fn node_device(node: Node, a: &Assignment, set: &DeviceSet) -> usize {
    match node {
        Node::Step(s) => a[s.index()],
        Node::Rest => set.host,
    }
}

/// Costs one assignment. Fails with `CapacityExceeded` when a working set
/// does not fit its device.
pub fn evaluate(
    profile: &RequestProfile,
    a: &Assignment,
    set: &DeviceSet,
) -> Result<PlacementPlan> {
    let comp_dev = a[Step::Comp.index()];
    let ret_dev = a[Step::Ret.index()];
    let fused = comp_dev == ret_dev && set.devices[ret_dev].streaming_dataflow;

    let mut rows: BTreeMap<Node, PlanRow> = BTreeMap::new();
    for node in Node::ALL {
        let d = node_device(node, a, set);
        let active = match node {
            Node::Step(s) => profile.active_steps.contains(&s),
            Node::Rest => true,
        };
        rows.insert(
            node,
            PlanRow {
                node,
                device: set.devices[d].name.clone(),
                active,
                latency_s: 0.0,
                energy_j: Some(0.0),
                decode_latency_s: 0.0,
            },
        );
    }
    let mut notes = Vec::new();
    for item in &profile.items {
        let d = if item.pinned_to_host {
            set.host
        } else {
            node_device(item.node, a, set)
        };
        let dev = &set.devices[d];
        let mut work = item.work.clone();
        let mut overhead = dev.launch_overhead_s;
        if fused && item.node == Node::Step(Step::Ret) && item.fusable_input_bytes > 0.0 {
            work.bytes_moved -= item.fusable_input_bytes;
            overhead = 0.0;
        }
        let latency = item.count * (step_latency(&work, dev)? + overhead);
        let row = rows.get_mut(&item.node).expect("row exists");
        row.latency_s += latency;
        if item.phase != Phase::Prefill {
            row.decode_latency_s += latency;
        }
        row.energy_j = match (row.energy_j, dev.power(&work.tag)) {
            (Some(e), Ok(p)) => Some(e + latency * p),
            _ => None,
        };
        if item.pinned_to_host && d != node_device(item.node, a, set) {
            notes.push(format!("{} stays on {}", item.label, dev.name));
        }
    }

    let mut transfers: BTreeMap<(Node, Node), Transfer> = BTreeMap::new();
    for e in &profile.edges {
        let (fd, td) = (node_device(e.from, a, set), node_device(e.to, a, set));
        if fd == td {
            continue;
        }
        let inactive = |n: Node| matches!(n, Node::Step(s) if !profile.active_steps.contains(&s));
        if inactive(e.from) || inactive(e.to) {
            continue;
        }
        let latency = e.count * link_latency(e.bytes, &set.link);
        let t = transfers.entry((e.from, e.to)).or_insert_with(|| Transfer {
            from: e.from,
            to: e.to,
            from_device: set.devices[fd].name.clone(),
            to_device: set.devices[td].name.clone(),
            what: Vec::new(),
            bytes: 0.0,
            latency_s: 0.0,
            decode_latency_s: 0.0,
        });
        if !t.what.contains(&e.what) {
            t.what.push(e.what);
        }
        t.bytes += e.count * e.bytes;
        t.latency_s += latency;
        if e.phase != Phase::Prefill {
            t.decode_latency_s += latency;
        }
    }

    let rows: Vec<PlanRow> = rows.into_values().collect();
    let transfers: Vec<Transfer> = transfers.into_values().collect();
    let predicted_latency_s = rows.iter().map(|r| r.latency_s).sum::<f64>()
        + transfers.iter().map(|t| t.latency_s).sum::<f64>();
    let predicted_energy_j = rows.iter().map(|r| r.energy_j).sum::<Option<f64>>();
    let memory_home = match profile.method.family() {
        Family::MemoryAsContext => set.devices[comp_dev].name.clone(),
        _ => set.host_device().name.clone(),
    };
    Ok(PlacementPlan {
        method: profile.method,
        assignment: *a,
        devices: a.map(|d| set.devices[d].name.clone()),
        host: set.host_device().name.clone(),
        memory_home,
        rows,
        transfers,
        predicted_latency_s,
        predicted_energy_j,
        notes,
    })
}

/// All `|devices|^4` assignments, in lexicographic index order.
pub fn assignments(n_devices: usize) -> impl Iterator<Item = Assignment> {
    let total = n_devices.pow(4);
    (0..total).map(move |mut i| {
        let mut a = [0; 4];
        for slot in a.iter_mut().rev() {
            *slot = i % n_devices;
            i /= n_devices;
        }
        a
    })
}

/// Every feasible plan. Plans whose working sets overflow a device are dropped.
pub fn enumerate_placements(
    profile: &RequestProfile,
    set: &DeviceSet,
) -> Result<Vec<PlacementPlan>> {
    let mut out = Vec::new();
    for a in assignments(set.devices.len()) {
        match evaluate(profile, &a, set) {
            Ok(p) => out.push(p),
            Err(Error::CapacityExceeded { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::NoFeasiblePlan(format!(
            "{} does not fit any placement",
            profile.method
        )));
    }
    Ok(out)
}

/// Latency, then fewest transfers, then device names step by step.
pub fn plan_order(a: &PlacementPlan, b: &PlacementPlan) -> Ordering {
    a.predicted_latency_s
        .total_cmp(&b.predicted_latency_s)
        .then(a.transfers.len().cmp(&b.transfers.len()))
        .then_with(|| a.devices.cmp(&b.devices))
}

fn host_only(profile: &RequestProfile, set: &DeviceSet, note: &str) -> Result<PlacementPlan> {
    let mut p = evaluate(profile, &[set.host; 4], set)?;
    p.notes.push(note.to_owned());
    Ok(p)
}

pub fn select_plan(
    cfg: &WorkloadConfig,
    set: &DeviceSet,
    policy: &SchedulerPolicy,
) -> Result<PlacementPlan> {
    let profile = request_profile(cfg)?;
    if cfg.method.family() == Family::SparseAttention && cfg.seq_len > policy.fallback_seq_len {
        return host_only(&profile, set, "seq-len fallback");
    }
    if cfg.method == MethodKind::MemAgent && cfg.batch_size > policy.memagent_batch_switch {
        return host_only(&profile, set, "batch switch");
    }
    let plans = enumerate_placements(&profile, set)?;
    Ok(plans.into_iter().min_by(plan_order).expect("non-empty"))
}

/// The plan with every step on the host.
pub fn host_only_plan(cfg: &WorkloadConfig, set: &DeviceSet) -> Result<PlacementPlan> {
    evaluate(&request_profile(cfg)?, &[set.host; 4], set)
}
