//! Method catalogue and per-method hyperparameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{IndexerConfig, PageScoreMode};

/// Every method the crate knows, including the classification-only LaCT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodKind {
    DeepSeekAttention,
    SeerAttentionRTopK,
    SeerAttentionRThreshold,
    LServe,
    SingleStageRag,
    TwoStageRag,
    MemoryAsContext,
    MemAgent,
    Lact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    SparseAttention,
    Rag,
    SynthesizedMemory,
    MemoryAsContext,
    TestTimeTraining,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::SparseAttention => "Sparse Attention",
            Family::Rag => "RAG",
            Family::SynthesizedMemory => "Synthesized Memory",
            Family::MemoryAsContext => "Memory as Context",
            Family::TestTimeTraining => "Test-time Training",
        }
    }
}

impl MethodKind {
    pub const ALL: [MethodKind; 9] = [
        MethodKind::DeepSeekAttention,
        MethodKind::SeerAttentionRTopK,
        MethodKind::SeerAttentionRThreshold,
        MethodKind::LServe,
        MethodKind::SingleStageRag,
        MethodKind::TwoStageRag,
        MethodKind::MemoryAsContext,
        MethodKind::MemAgent,
        MethodKind::Lact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::DeepSeekAttention => "DeepSeekAttention",
            MethodKind::SeerAttentionRTopK => "SeerAttentionR-TopK",
            MethodKind::SeerAttentionRThreshold => "SeerAttentionR-Threshold",
            MethodKind::LServe => "LServe",
            MethodKind::SingleStageRag => "SingleStageRAG",
            MethodKind::TwoStageRag => "TwoStageRAG",
            MethodKind::MemoryAsContext => "MemoryAsContext",
            MethodKind::MemAgent => "MemAgent",
            MethodKind::Lact => "LaCT",
        }
    }

    pub fn family(self) -> Family {
        match self {
            MethodKind::DeepSeekAttention
            | MethodKind::SeerAttentionRTopK
            | MethodKind::SeerAttentionRThreshold
            | MethodKind::LServe => Family::SparseAttention,
            MethodKind::SingleStageRag | MethodKind::TwoStageRag => Family::Rag,
            MethodKind::MemAgent => Family::SynthesizedMemory,
            MethodKind::MemoryAsContext => Family::MemoryAsContext,
            MethodKind::Lact => Family::TestTimeTraining,
        }
    }

    /// Whether a runnable pipeline exists (LaCT is catalogue-only).
    pub fn is_executable(self) -> bool {
        self != MethodKind::Lact
    }

    /// Kernel-power tag used by device profiles.
    pub fn power_tag(self) -> &'static str {
        match self {
            MethodKind::DeepSeekAttention => "dsa",
            MethodKind::SeerAttentionRTopK => "sar_topk",
            MethodKind::SeerAttentionRThreshold => "sar_threshold",
            MethodKind::LServe => "lserve",
            MethodKind::SingleStageRag | MethodKind::TwoStageRag => "rag",
            MethodKind::MemAgent => "memagent",
            MethodKind::MemoryAsContext => "mac",
            MethodKind::Lact => "lact",
        }
    }

    /// Short lowercase file stem for shipped fixtures.
    pub fn slug(self) -> &'static str {
        match self {
            MethodKind::DeepSeekAttention => "dsa",
            MethodKind::SeerAttentionRTopK => "sar_topk",
            MethodKind::SeerAttentionRThreshold => "sar_threshold",
            MethodKind::LServe => "lserve",
            MethodKind::SingleStageRag => "rag_single",
            MethodKind::TwoStageRag => "rag_two_stage",
            MethodKind::MemoryAsContext => "mac",
            MethodKind::MemAgent => "memagent",
            MethodKind::Lact => "lact",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    /// Accepts the canonical name or the fixture slug, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || m.slug().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownMethod(s.to_owned()))
    }
}

impl Serialize for MethodKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for MethodKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_dsa_k() -> usize {
    2048
}
fn default_block_size() -> usize {
    64
}
fn default_budget_tokens() -> usize {
    4096
}
fn default_theta() -> f64 {
    5e-4
}
fn default_logical_page() -> usize {
    16
}
fn default_pages_per_physical() -> usize {
    4
}
fn default_k1() -> f64 {
    1.5
}
fn default_b() -> f64 {
    0.75
}
fn default_rag_k() -> usize {
    64
}
fn default_rerank_k() -> usize {
    10
}
fn default_mac_k() -> usize {
    4
}

/// Hyperparameters of one executable method, tagged by `method`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", deny_unknown_fields)]
pub enum MethodConfig {
    DeepSeekAttention {
        #[serde(default)]
        indexer: IndexerConfig,
        #[serde(default = "default_dsa_k")]
        k: usize,
    },
    #[serde(rename = "SeerAttentionR-TopK")]
    SeerAttentionRTopK {
        #[serde(default = "default_block_size")]
        block_size: usize,
        #[serde(default = "default_budget_tokens")]
        budget_tokens: usize,
    },
    #[serde(rename = "SeerAttentionR-Threshold")]
    SeerAttentionRThreshold {
        #[serde(default = "default_block_size")]
        block_size: usize,
        #[serde(default = "default_theta")]
        theta: f64,
    },
    LServe {
        #[serde(default = "default_logical_page")]
        logical_page_size: usize,
        #[serde(default = "default_pages_per_physical")]
        logical_pages_per_physical: usize,
        #[serde(default)]
        score_mode: PageScoreMode,
        #[serde(default = "default_budget_tokens")]
        budget_tokens: usize,
    },
    #[serde(rename = "SingleStageRAG")]
    SingleStageRag {
        #[serde(default = "default_k1")]
        k1: f64,
        #[serde(default = "default_b")]
        b: f64,
        #[serde(default = "default_rag_k")]
        k: usize,
    },
    #[serde(rename = "TwoStageRAG")]
    TwoStageRag {
        #[serde(default = "default_k1")]
        k1: f64,
        #[serde(default = "default_b")]
        b: f64,
        /// First-stage candidate count.
        #[serde(default = "default_rag_k")]
        candidates: usize,
        /// Documents kept after reranking.
        #[serde(default = "default_rerank_k")]
        k: usize,
    },
    MemoryAsContext {
        #[serde(default = "default_mac_k")]
        k: usize,
    },
    MemAgent {},
}

impl MethodConfig {
    /// Appendix-default hyperparameters for an executable method.
    pub fn defaults(kind: MethodKind) -> Result<Self> {
        if !kind.is_executable() {
            return Err(Error::UnknownMethod(format!(
                "{kind} has no executable pipeline"
            )));
        }
        Self::from_toml(&format!("method = \"{}\"", kind.name()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let name = table
            .get("method")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Parse("method config needs a string `method` key".into()))?;
        let kind: MethodKind = name.parse()?;
        if !kind.is_executable() {
            return Err(Error::UnknownMethod(name.to_owned()));
        }
        let mut table = table;
        table.insert("method".into(), toml::Value::String(kind.name().into()));
        let cfg: MethodConfig = toml::Value::Table(table).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kind(&self) -> MethodKind {
        match self {
            MethodConfig::DeepSeekAttention { .. } => MethodKind::DeepSeekAttention,
            MethodConfig::SeerAttentionRTopK { .. } => MethodKind::SeerAttentionRTopK,
            MethodConfig::SeerAttentionRThreshold { .. } => MethodKind::SeerAttentionRThreshold,
            MethodConfig::LServe { .. } => MethodKind::LServe,
            MethodConfig::SingleStageRag { .. } => MethodKind::SingleStageRag,
            MethodConfig::TwoStageRag { .. } => MethodKind::TwoStageRag,
            MethodConfig::MemoryAsContext { .. } => MethodKind::MemoryAsContext,
            MethodConfig::MemAgent {} => MethodKind::MemAgent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::hyper(name, "must be positive"))
            } else {
                Ok(())
            }
        };
        match self {
            MethodConfig::DeepSeekAttention { indexer, k } => {
                indexer.validate()?;
                positive("k", *k)
            }
            MethodConfig::SeerAttentionRTopK {
                block_size,
                budget_tokens,
            } => {
                positive("block_size", *block_size)?;
                positive("budget_tokens", *budget_tokens)
            }
            MethodConfig::SeerAttentionRThreshold { block_size, theta } => {
                positive("block_size", *block_size)?;
                if !theta.is_finite() {
                    return Err(Error::hyper("theta", "must be finite"));
                }
                Ok(())
            }
            MethodConfig::LServe {
                logical_page_size,
                logical_pages_per_physical,
                budget_tokens,
                ..
            } => {
                positive("logical_page_size", *logical_page_size)?;
                positive("logical_pages_per_physical", *logical_pages_per_physical)?;
                positive("budget_tokens", *budget_tokens)
            }
            MethodConfig::SingleStageRag { k1, b, k } => {
                bm25_params(*k1, *b)?;
                positive("k", *k)
            }
            MethodConfig::TwoStageRag {
                k1,
                b,
                candidates,
                k,
            } => {
                bm25_params(*k1, *b)?;
                positive("candidates", *candidates)?;
                positive("k", *k)?;
                if k > candidates {
                    return Err(Error::hyper(
                        "k",
                        "cannot exceed the first-stage candidates",
                    ));
                }
                Ok(())
            }
            MethodConfig::MemoryAsContext { k } => positive("k", *k),
            MethodConfig::MemAgent {} => Ok(()),
        }
    }
}

fn bm25_params(k1: f64, b: f64) -> Result<()> {
    if !(k1.is_finite() && k1 > 0.0) {
        return Err(Error::hyper("k1", "must be positive"));
    }
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::hyper("b", "must lie in [0, 1]"));
    }
    Ok(())
}
