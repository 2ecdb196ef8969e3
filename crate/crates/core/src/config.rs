//! Run specifications for the command-line front end.
//!
//! A spec is a TOML document. Grammar, informally:
//!
//! ```text
//! mode    = "kernel_bench" | "plan" | "trend_sweep" | "ai_table"
//! seed    = <u64>                      optional, default 42
//! format  = "csv" | "table"            optional, default "csv"
//! output  = <path>                     optional, stdout when absent
//!
//! [devices]        names = [<profile>, ...], link = <profile>, profile_dir = <path>
//! [policy]         fallback_seq_len = <u64>, memagent_batch_switch = <u64>
//! [workload]       method = <method name>, then any WorkloadConfig field
//! [pipeline]       MethodConfig fields for kernel_bench (method comes from [workload])
//! [trend]          sweep = [<u64>, ...]
//! [ai_table]       methods = ["all"] | [<method name>, ...]
//! [kernel_bench]   entries, dim, heads, queries, vocab, doc_len, query_terms
//! [expect]         devices = [<4 device names>], fraction_min, fraction_max
//! ```
//!
//! Overrides use dotted paths into the same document, e.g.
//! `workload.seq_len=262144` or `devices.names=["mi210","u55c"]`. The value
//! is read as a TOML literal and falls back to a bare string.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use toml::{Table, Value};

use crate::device::{load_device, load_link};
use crate::error::{Error, Result};
use crate::method::{MethodConfig, MethodKind};
use crate::scheduler::{DeviceSet, SchedulerPolicy};
use crate::workloads::WorkloadConfig;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    KernelBench,
    Plan,
    TrendSweep,
    AiTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Table,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicesSection {
    #[serde(default = "default_device_names")]
    pub names: Vec<String>,
    #[serde(default = "default_link")]
    pub link: String,
    #[serde(default)]
    pub profile_dir: Option<PathBuf>,
}

fn default_device_names() -> Vec<String> {
    vec!["mi210".into(), "u55c".into()]
}

fn default_link() -> String {
    "pcie3-p2p".into()
}

impl Default for DevicesSection {
    fn default() -> Self {
        Self {
            names: default_device_names(),
            link: default_link(),
            profile_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub fallback_seq_len: u64,
    pub memagent_batch_switch: u64,
}

impl Default for PolicySection {
    fn default() -> Self {
        let p = SchedulerPolicy::default();
        Self {
            fallback_seq_len: p.fallback_seq_len,
            memagent_batch_switch: p.memagent_batch_switch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendSection {
    pub sweep: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AiTableSection {
    #[serde(default = "all_methods")]
    pub methods: Vec<String>,
}

fn all_methods() -> Vec<String> {
    vec!["all".into()]
}

impl Default for AiTableSection {
    fn default() -> Self {
        Self {
            methods: all_methods(),
        }
    }
}

/// Sizes of the random inputs fed to the reference kernels.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelBenchSection {
    pub entries: usize,
    /// Vector width; DeepSeek attention uses the indexer head width instead.
    pub dim: usize,
    /// Query heads for the sparse-attention scorers other than DSA.
    pub heads: usize,
    pub queries: usize,
    pub vocab: usize,
    pub doc_len: usize,
    pub query_terms: usize,
}

impl Default for KernelBenchSection {
    fn default() -> Self {
        Self {
            entries: 4096,
            dim: 64,
            heads: 4,
            queries: 4,
            vocab: 500,
            doc_len: 40,
            query_terms: 3,
        }
    }
}

/// Optional assertions checked after a run.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectSection {
    /// Plan mode: device per step in step order.
    pub devices: Option<Vec<String>>,
    /// Trend mode: bounds on the fraction at the last sweep point.
    pub fraction_min: Option<f64>,
    pub fraction_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    mode: Mode,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    format: Format,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    devices: DevicesSection,
    #[serde(default)]
    policy: PolicySection,
    #[serde(default)]
    workload: Option<Table>,
    #[serde(default)]
    pipeline: Option<Table>,
    #[serde(default)]
    trend: TrendSection,
    #[serde(default)]
    ai_table: AiTableSection,
    #[serde(default)]
    kernel_bench: KernelBenchSection,
    #[serde(default)]
    expect: ExpectSection,
}

/// A parsed and validated run specification.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub mode: Mode,
    pub seed: u64,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub devices: DevicesSection,
    pub policy: SchedulerPolicy,
    pub workload: Option<WorkloadConfig>,
    pub pipeline: Option<MethodConfig>,
    pub trend: TrendSection,
    pub ai_methods: Vec<MethodKind>,
    pub kernel_bench: KernelBenchSection,
    pub expect: ExpectSection,
    /// Non-fatal diagnostics, e.g. workload fields the method ignores.
    pub warnings: Vec<String>,
}

impl RunSpec {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Table = toml::from_str(text)?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_table(doc)
    }

    pub fn from_path(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_toml(&text, overrides)?;
        // relative profile directories resolve against the spec file
        if let (Some(dir), Some(base)) = (&spec.devices.profile_dir, path.parent()) {
            if dir.is_relative() {
                spec.devices.profile_dir = Some(base.join(dir));
            }
        }
        Ok(spec)
    }

    pub fn from_table(doc: Table) -> Result<Self> {
        let raw: RawSpec = Value::Table(doc).try_into()?;
        let mut warnings = Vec::new();

        let workload = match raw.workload {
            Some(t) => {
                let (w, warn) = WorkloadConfig::from_table(&t)?;
                warnings.extend(warn);
                Some(w)
            }
            None => None,
        };

        let policy = SchedulerPolicy {
            fallback_seq_len: raw.policy.fallback_seq_len,
            memagent_batch_switch: raw.policy.memagent_batch_switch,
        };
        if policy.fallback_seq_len == 0 {
            return Err(Error::hyper(
                "policy.fallback_seq_len",
                "must be at least 1",
            ));
        }
        if policy.memagent_batch_switch == 0 {
            return Err(Error::hyper(
                "policy.memagent_batch_switch",
                "must be at least 1",
            ));
        }

        let needs_workload = matches!(raw.mode, Mode::KernelBench | Mode::Plan | Mode::TrendSweep);
        if needs_workload && workload.is_none() {
            return Err(Error::Parse(
                "this mode needs a [workload] section with a method".into(),
            ));
        }

        let pipeline = if raw.mode == Mode::KernelBench {
            let kind = workload.as_ref().unwrap().method;
            let mut t = raw.pipeline.unwrap_or_default();
            if t.contains_key("method") {
                return Err(Error::Parse(
                    "[pipeline] takes its method from [workload]; remove `method`".into(),
                ));
            }
            t.insert("method".into(), Value::String(kind.name().into()));
            let cfg = MethodConfig::from_table(t)?;
            cfg.validate()?;
            Some(cfg)
        } else {
            if raw.pipeline.is_some() {
                warnings.push("[pipeline] is only read in kernel_bench mode".into());
            }
            None
        };

        let ai_methods = parse_method_list(&raw.ai_table.methods)?;

        if let Some(sweep) = &raw.trend.sweep {
            if sweep.is_empty() {
                return Err(Error::hyper("trend.sweep", "must not be empty"));
            }
            if sweep.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::hyper("trend.sweep", "must be sorted ascending"));
            }
        }
        if let Some(d) = &raw.expect.devices {
            if d.len() != 4 {
                return Err(Error::hyper("expect.devices", "needs one device per step"));
            }
        }
        if raw.devices.names.is_empty() {
            return Err(Error::hyper(
                "devices.names",
                "must name at least one device",
            ));
        }
        let kb = raw.kernel_bench;
        for (name, v) in [
            ("kernel_bench.dim", kb.dim),
            ("kernel_bench.heads", kb.heads),
            ("kernel_bench.vocab", kb.vocab),
            ("kernel_bench.doc_len", kb.doc_len),
        ] {
            if v == 0 {
                return Err(Error::hyper(name, "must be positive"));
            }
        }

        Ok(Self {
            mode: raw.mode,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            format: raw.format,
            output: raw.output,
            devices: raw.devices,
            policy,
            workload,
            pipeline,
            trend: raw.trend,
            ai_methods,
            kernel_bench: kb,
            expect: raw.expect,
            warnings,
        })
    }

    /// Loads every named profile; the first unknown name is reported.
    pub fn device_set(&self) -> Result<DeviceSet> {
        let dir = self.devices.profile_dir.as_deref();
        let devices = self
            .devices
            .names
            .iter()
            .map(|n| load_device(n, dir))
            .collect::<Result<Vec<_>>>()?;
        DeviceSet::new(devices, load_link(&self.devices.link, dir)?)
    }
}

fn parse_method_list(names: &[String]) -> Result<Vec<MethodKind>> {
    if names.iter().any(|n| n == "all") {
        return Ok(MethodKind::ALL.to_vec());
    }
    names.iter().map(|n| MethodKind::from_str(n)).collect()
}

/// Sets `a.b.c = value` inside `doc`, creating intermediate tables.
///
/// Floats with an integral value become integers when the key already holds
/// an integer or lives in an all-integer section.
pub fn apply_override(doc: &mut Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Parse(format!(
            "override path `{path}` has an empty segment"
        )));
    }
    let mut value = parse_value(raw.trim());

    let (last, parents) = keys.split_last().unwrap();
    let mut table = doc;
    for k in parents {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            Error::Parse(format!("override path `{path}`: `{k}` is not a section"))
        })?;
    }
    let integer_slot = matches!(table.get(*last), Some(Value::Integer(_)))
        || matches!(parents.first(), Some(&"workload") | Some(&"policy"));
    if let Value::Float(f) = value {
        if integer_slot && f.fract() == 0.0 && f.abs() < 9.0e18 {
            value = Value::Integer(f as i64);
        }
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}
