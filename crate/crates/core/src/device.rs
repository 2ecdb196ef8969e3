//! Analytic device, memory-tier, interconnect and energy models.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceClass {
    Gpu,
    Fpga,
    Cpu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemTier {
    pub name: String,
    pub capacity_bytes: u64,
    pub bandwidth_bytes_per_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utilization {
    pub compute: f64,
    pub mem_regular: f64,
    pub mem_irregular: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagUtilization {
    pub compute: Option<f64>,
    pub mem: Option<f64>,
}

/// Utilization factors applied to one step on one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilizationProfile {
    pub compute: f64,
    pub mem: f64,
}

impl UtilizationProfile {
    pub const IDEAL: UtilizationProfile = UtilizationProfile {
        compute: 1.0,
        mem: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub name: String,
    pub class: DeviceClass,
    #[serde(default)]
    pub estimated: bool,
    pub peak_flops: f64,
    /// Intermediate results stay on chip between fused operators.
    #[serde(default)]
    pub streaming_dataflow: bool,
    #[serde(default)]
    pub process_note: String,
    /// Fixed cost of starting one kernel, paid once per step invocation.
    #[serde(default)]
    pub launch_overhead_s: f64,
    pub utilization: Utilization,
    #[serde(default)]
    pub tag_utilization: BTreeMap<String, TagUtilization>,
    /// Fastest first.
    pub mem_tiers: Vec<MemTier>,
    #[serde(default)]
    pub kernel_power_watts: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    #[serde(default)]
    pub name: String,
    pub base_latency_s: f64,
    pub bandwidth_bytes_per_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessPattern {
    #[default]
    Regular,
    Irregular,
}

/// Work of one step: operation and byte counts plus its resident working set.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWork {
    pub flops: f64,
    /// All bytes moved, `spill_bytes` included.
    pub bytes_moved: f64,
    /// Intermediates written and re-read inside the step; a streaming
    /// dataflow device keeps them on chip.
    pub spill_bytes: f64,
    pub working_set_bytes: f64,
    pub tag: String,
    pub pattern: AccessPattern,
}

impl StepWork {
    pub fn new(
        flops: f64,
        bytes_moved: f64,
        working_set_bytes: f64,
        tag: impl Into<String>,
    ) -> Self {
        Self {
            flops,
            bytes_moved,
            spill_bytes: 0.0,
            working_set_bytes,
            tag: tag.into(),
            pattern: AccessPattern::Regular,
        }
    }

    pub fn irregular(mut self) -> Self {
        self.pattern = AccessPattern::Irregular;
        self
    }

    pub fn with_spill(mut self, spill: f64) -> Self {
        self.bytes_moved += spill;
        self.spill_bytes += spill;
        self
    }

    /// Bytes the device actually moves.
    pub fn bytes_on(&self, dev: &DeviceSpec) -> f64 {
        if dev.streaming_dataflow {
            self.bytes_moved - self.spill_bytes
        } else {
            self.bytes_moved
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            flops: self.flops * factor,
            bytes_moved: self.bytes_moved * factor,
            spill_bytes: self.spill_bytes * factor,
            ..self.clone()
        }
    }

    /// Sequential composition: counts add, the working set is the larger one.
    pub fn then(&self, other: &StepWork) -> Self {
        Self {
            flops: self.flops + other.flops,
            bytes_moved: self.bytes_moved + other.bytes_moved,
            spill_bytes: self.spill_bytes + other.spill_bytes,
            working_set_bytes: self.working_set_bytes.max(other.working_set_bytes),
            tag: self.tag.clone(),
            pattern: if self.pattern == AccessPattern::Irregular
                || other.pattern == AccessPattern::Irregular
            {
                AccessPattern::Irregular
            } else {
                AccessPattern::Regular
            },
        }
    }
}

fn bad(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidProfile {
        name: name.to_owned(),
        reason: reason.into(),
    }
}

fn lookup<'a, V>(map: &'a BTreeMap<String, V>, tag: &str) -> Option<&'a V> {
    map.get(tag).or_else(|| map.get(tag.split('.').next()?))
}

fn unit_interval(x: f64) -> bool {
    x > 0.0 && x <= 1.0
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<()> {
        let n = &self.name;
        if !(self.peak_flops.is_finite() && self.peak_flops > 0.0) {
            return Err(bad(n, "peak_flops must be positive"));
        }
        if !(self.launch_overhead_s.is_finite() && self.launch_overhead_s >= 0.0) {
            return Err(bad(n, "launch_overhead_s must be non-negative"));
        }
        if self.mem_tiers.is_empty() {
            return Err(bad(n, "at least one memory tier is required"));
        }
        for t in &self.mem_tiers {
            if t.capacity_bytes == 0
                || !(t.bandwidth_bytes_per_s.is_finite() && t.bandwidth_bytes_per_s > 0.0)
            {
                return Err(bad(
                    n,
                    format!("tier {} needs positive capacity and bandwidth", t.name),
                ));
            }
        }
        if self
            .mem_tiers
            .windows(2)
            .any(|w| w[1].bandwidth_bytes_per_s >= w[0].bandwidth_bytes_per_s)
        {
            return Err(bad(n, "tier bandwidths must strictly decrease"));
        }
        if let Some((tag, _)) = self
            .kernel_power_watts
            .iter()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(bad(n, format!("power for {tag} must be positive")));
        }
        let u = self.utilization;
        if ![u.compute, u.mem_regular, u.mem_irregular]
            .into_iter()
            .all(unit_interval)
        {
            return Err(bad(n, "utilization factors must lie in (0, 1]"));
        }
        for (tag, o) in &self.tag_utilization {
            if o.compute
                .into_iter()
                .chain(o.mem)
                .any(|x| !unit_interval(x))
            {
                return Err(bad(
                    n,
                    format!("utilization override for {tag} must lie in (0, 1]"),
                ));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let d: DeviceSpec = toml::from_str(text)?;
        d.validate()?;
        Ok(d)
    }

    pub fn capacity_bytes(&self) -> f64 {
        self.mem_tiers.iter().map(|t| t.capacity_bytes as f64).sum()
    }

    /// Bandwidth of the slowest tier, the bound for data streamed from off chip.
    pub fn peak_bandwidth(&self) -> f64 {
        self.mem_tiers
            .last()
            .expect("validated")
            .bandwidth_bytes_per_s
    }

    /// FLOP/byte at which compute and memory time are equal.
    pub fn ridge_point(&self) -> f64 {
        self.peak_flops / self.peak_bandwidth()
    }

    /// Overrides are looked up as `method.step` first, then `method`.
    pub fn utilization_for(&self, tag: &str, pattern: AccessPattern) -> UtilizationProfile {
        let base = UtilizationProfile {
            compute: self.utilization.compute,
            mem: match pattern {
                AccessPattern::Regular => self.utilization.mem_regular,
                AccessPattern::Irregular => self.utilization.mem_irregular,
            },
        };
        match lookup(&self.tag_utilization, tag) {
            Some(o) => UtilizationProfile {
                compute: o.compute.unwrap_or(base.compute),
                mem: o.mem.unwrap_or(base.mem),
            },
            None => base,
        }
    }

    pub fn power(&self, tag: &str) -> Result<f64> {
        lookup(&self.kernel_power_watts, tag)
            .copied()
            .ok_or_else(|| Error::UnknownTag {
                device: self.name.clone(),
                tag: tag.to_owned(),
            })
    }
}

impl fmt::Display for DeviceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl LinkSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_latency_s.is_finite() && self.base_latency_s >= 0.0) {
            return Err(bad(&self.name, "base_latency_s must be non-negative"));
        }
        if !(self.bandwidth_bytes_per_s.is_finite() && self.bandwidth_bytes_per_s > 0.0) {
            return Err(bad(&self.name, "bandwidth must be positive"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let l: LinkSpec = toml::from_str(text)?;
        l.validate()?;
        Ok(l)
    }

    /// A link with no latency and unbounded bandwidth.
    pub fn ideal() -> Self {
        Self {
            name: "ideal".into(),
            base_latency_s: 0.0,
            bandwidth_bytes_per_s: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TierPlacement {
    /// Entries with smaller ids land in the faster tiers.
    #[default]
    SmallestIdFastest,
}

pub fn arithmetic_intensity(w: &StepWork) -> Result<f64> {
    if w.bytes_moved <= 0.0 {
        return Err(Error::ZeroBytes);
    }
    Ok(w.flops / w.bytes_moved)
}

/// `total / sum(bytes_in_tier / bw_tier)` after filling tiers fastest first.
pub fn effective_bandwidth(
    tiers: &[MemTier],
    working_set_bytes: f64,
    _placement: TierPlacement,
) -> Result<f64> {
    let capacity: f64 = tiers.iter().map(|t| t.capacity_bytes as f64).sum();
    if working_set_bytes > capacity {
        return Err(Error::CapacityExceeded {
            working_set: working_set_bytes,
            capacity,
        });
    }
    let Some(first) = tiers.first() else {
        return Err(Error::CapacityExceeded {
            working_set: working_set_bytes,
            capacity,
        });
    };
    if working_set_bytes <= 0.0 {
        return Ok(first.bandwidth_bytes_per_s);
    }
    let mut left = working_set_bytes;
    let mut time = 0.0;
    for t in tiers {
        let here = left.min(t.capacity_bytes as f64);
        time += here / t.bandwidth_bytes_per_s;
        left -= here;
        if left <= 0.0 {
            break;
        }
    }
    Ok(working_set_bytes / time)
}

/// `max(flops / (peak * u_c), bytes / (eff_bw * u_mem))`.
pub fn roofline_latency(w: &StepWork, dev: &DeviceSpec, u: UtilizationProfile) -> Result<f64> {
    let bw = effective_bandwidth(
        &dev.mem_tiers,
        w.working_set_bytes,
        TierPlacement::SmallestIdFastest,
    )?;
    let compute = w.flops / (dev.peak_flops * u.compute);
    let memory = w.bytes_on(dev) / (bw * u.mem);
    Ok(compute.max(memory))
}

/// Roofline latency with the device's own utilization for the step's tag.
pub fn step_latency(w: &StepWork, dev: &DeviceSpec) -> Result<f64> {
    roofline_latency(w, dev, dev.utilization_for(&w.tag, w.pattern))
}

pub fn link_latency(bytes: f64, link: &LinkSpec) -> f64 {
    link.base_latency_s + bytes / link.bandwidth_bytes_per_s
}

pub fn step_energy(latency_s: f64, dev: &DeviceSpec, tag: &str) -> Result<f64> {
    Ok(latency_s * dev.power(tag)?)
}

const SHIPPED_DEVICES: [(&str, &str); 4] = [
    ("mi210", include_str!("../profiles/mi210.toml")),
    ("u55c", include_str!("../profiles/u55c.toml")),
    ("epyc7v13", include_str!("../profiles/epyc7v13.toml")),
    (
        "a100-estimated",
        include_str!("../profiles/a100-estimated.toml"),
    ),
];

const SHIPPED_LINKS: [(&str, &str); 1] =
    [("pcie3-p2p", include_str!("../profiles/pcie3-p2p.toml"))];

pub fn shipped_device_names() -> impl Iterator<Item = &'static str> {
    SHIPPED_DEVICES.iter().map(|(n, _)| *n)
}

pub fn shipped_link_names() -> impl Iterator<Item = &'static str> {
    SHIPPED_LINKS.iter().map(|(n, _)| *n)
}

/// Looks `name` up in `dir` (as `<name>.toml`) first, then among the shipped profiles.
pub fn load_device(name: &str, dir: Option<&Path>) -> Result<DeviceSpec> {
    if let Some(text) = read_override(name, dir)? {
        return DeviceSpec::from_toml(&text);
    }
    let (_, text) = SHIPPED_DEVICES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::UnknownProfile(name.to_owned()))?;
    DeviceSpec::from_toml(text)
}

pub fn load_link(name: &str, dir: Option<&Path>) -> Result<LinkSpec> {
    if let Some(text) = read_override(name, dir)? {
        return LinkSpec::from_toml(&text);
    }
    let (_, text) = SHIPPED_LINKS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::UnknownProfile(name.to_owned()))?;
    LinkSpec::from_toml(text)
}

fn read_override(name: &str, dir: Option<&Path>) -> Result<Option<String>> {
    let Some(dir) = dir else { return Ok(None) };
    let path = dir.join(format!("{name}.toml"));
    if !path.is_file() {
        return Ok(None);
    }
    fs::read_to_string(&path)
        .map(Some)
        .map_err(|e| Error::io(path, e))
}

pub fn shipped_device(name: &str) -> Result<DeviceSpec> {
    load_device(name, None)
}

pub fn shipped_link(name: &str) -> Result<LinkSpec> {
    load_link(name, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MB: f64 = 1024.0 * 1024.0;

    fn tier(cap: u64, bw: f64) -> MemTier {
        MemTier {
            name: "t".into(),
            capacity_bytes: cap,
            bandwidth_bytes_per_s: bw,
        }
    }

    #[test]
    fn shipped_profiles_parse() {
        for n in shipped_device_names() {
            shipped_device(n).unwrap();
        }
        shipped_link("pcie3-p2p").unwrap();
        assert!(matches!(shipped_device("h100"), Err(Error::UnknownProfile(n)) if n == "h100"));
    }

    #[test]
    fn intensity_examples() {
        assert_eq!(
            arithmetic_intensity(&StepWork::new(0.0, 100.0, 0.0, "x")).unwrap(),
            0.0
        );
        assert!(matches!(
            arithmetic_intensity(&StepWork::new(1.0, 0.0, 0.0, "x")),
            Err(Error::ZeroBytes)
        ));
        let d = 4096.0;
        let gemv = StepWork::new(2.0 * d * d, 4.0 * d * d, 0.0, "x");
        assert_eq!(arithmetic_intensity(&gemv).unwrap(), 0.5);
    }

    #[test]
    fn bandwidth_examples() {
        let tiers = [tier(100, 10.0), tier(1000, 1.0)];
        assert_eq!(
            effective_bandwidth(&tiers, 50.0, TierPlacement::default()).unwrap(),
            10.0
        );
        let even = [tier(50, 4.0), tier(50, 4.0)];
        assert_eq!(
            effective_bandwidth(&even, 100.0, TierPlacement::default()).unwrap(),
            4.0
        );
        assert!(matches!(
            effective_bandwidth(&tiers, 1101.0, TierPlacement::default()),
            Err(Error::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn u55c_sixty_megabytes_hand_check() {
        let u = shipped_device("u55c").unwrap();
        let bw = effective_bandwidth(&u.mem_tiers, 60.0 * MB, TierPlacement::default()).unwrap();
        let hand = 60.0 * MB / (8.0 * MB / 21.8e12 + 32.0 * MB / 10.4e12 + 20.0 * MB / 460e9);
        assert!((bw - hand).abs() / hand < 1e-12);
    }

    #[test]
    fn roofline_examples() {
        let dev = DeviceSpec {
            name: "d".into(),
            class: DeviceClass::Gpu,
            estimated: false,
            peak_flops: 1e12,
            streaming_dataflow: false,
            process_note: String::new(),
            launch_overhead_s: 0.0,
            utilization: Utilization {
                compute: 1.0,
                mem_regular: 1.0,
                mem_irregular: 1.0,
            },
            tag_utilization: BTreeMap::new(),
            mem_tiers: vec![tier(1 << 40, 1.6e12)],
            kernel_power_watts: BTreeMap::new(),
        };
        let t = roofline_latency(
            &StepWork::new(1e9, 1.0, 1.0, "x"),
            &dev,
            UtilizationProfile::IDEAL,
        )
        .unwrap();
        assert!((t - 1e-3).abs() < 1e-12);
        let u = UtilizationProfile {
            compute: 1.0,
            mem: 0.6,
        };
        let t = roofline_latency(&StepWork::new(0.0, 1e9, 1e9, "x"), &dev, u).unwrap();
        assert!((t - 1.0416666e-3).abs() < 1e-8);
        // ridge: flops / bytes = bw * u_mem / peak * peak / bw ... equal terms
        let w = StepWork::new(1e12 / 1.6e12 * 1e9, 1e9, 1.0, "x");
        let c = w.flops / 1e12;
        let m = w.bytes_moved / 1.6e12;
        assert!((c - m).abs() < 1e-15);
    }

    #[test]
    fn link_and_energy() {
        let l = shipped_link("pcie3-p2p").unwrap();
        assert_eq!(link_latency(0.0, &l), 9e-6);
        assert!((link_latency(1024.0, &l) - 9.032e-6).abs() < 1e-9);
        let u = shipped_device("u55c").unwrap();
        assert_eq!(step_energy(1.0, &u, "dsa").unwrap(), 26.4);
        assert_eq!(step_energy(0.0, &u, "dsa").unwrap(), 0.0);
        assert_eq!(
            step_energy(2.0, &shipped_device("mi210").unwrap(), "dsa").unwrap(),
            110.0
        );
        assert!(matches!(
            step_energy(1.0, &u, "ttt"),
            Err(Error::UnknownTag { .. })
        ));
        assert_eq!(step_energy(1.0, &u, "dsa.comp").unwrap(), 26.4);
    }

    #[test]
    fn streaming_devices_drop_spills() {
        let u = shipped_device("u55c").unwrap();
        let g = shipped_device("mi210").unwrap();
        let w = StepWork::new(0.0, 10.0, 1.0, "x").with_spill(5.0);
        assert_eq!(w.bytes_on(&u), 10.0);
        assert_eq!(w.bytes_on(&g), 15.0);
    }

    #[test]
    fn invalid_profiles_rejected() {
        let mut d = shipped_device("u55c").unwrap();
        d.mem_tiers.swap(0, 2);
        assert!(d.validate().is_err());
        let mut d = shipped_device("u55c").unwrap();
        d.utilization.compute = 0.0;
        assert!(d.validate().is_err());
        assert!(DeviceSpec::from_toml("name = \"x\"\nbogus = 1\n").is_err());
    }

    proptest! {
        #[test]
        fn bandwidth_non_increasing(a in 1.0f64..6e7, b in 1.0f64..6e7) {
            let u = shipped_device("u55c").unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let bl = effective_bandwidth(&u.mem_tiers, lo, TierPlacement::default()).unwrap();
            let bh = effective_bandwidth(&u.mem_tiers, hi, TierPlacement::default()).unwrap();
            prop_assert!(bh <= bl * (1.0 + 1e-12));
        }

        #[test]
        fn roofline_monotone(f in 0.0f64..1e12, b in 1.0f64..1e9, df in 0.0f64..1e12, db in 0.0f64..1e9) {
            let g = shipped_device("mi210").unwrap();
            let t0 = step_latency(&StepWork::new(f, b, b, "dsa"), &g).unwrap();
            let t1 = step_latency(&StepWork::new(f + df, b + db, b, "dsa"), &g).unwrap();
            prop_assert!(t1 >= t0);
        }

        #[test]
        fn link_affine(x in 0.0f64..1e9, y in 0.0f64..1e9) {
            let l = shipped_link("pcie3-p2p").unwrap();
            let slope = (link_latency(x + y, &l) - link_latency(x, &l)) / y.max(1e-300);
            if y > 1.0 {
                prop_assert!((slope - 1.0 / 32e9).abs() * 32e9 < 1e-6);
            }
        }

        #[test]
        fn energy_linear(t in 0.0f64..100.0, s in 0.0f64..10.0) {
            let g = shipped_device("mi210").unwrap();
            let e = step_energy(t * s, &g, "rag").unwrap();
            prop_assert!((e - s * step_energy(t, &g, "rag").unwrap()).abs() <= 1e-9 * e.max(1.0));
        }
    }
}
