//! Hierarchical paging: logical pages summarised by per-channel min/max,
//! selection at physical-page granularity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{
    Granularity, IndexKind, IndexPayload, Matrix, MemoryIndex, MemoryStore, PageBounds,
    RelevancyScores, StoreKind,
};

/// How a logical page is scored against its min/max summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageScoreMode {
    /// `sum_c max(q_c * min_c, q_c * max_c)`; an upper bound on every token score.
    #[default]
    ChannelWise,
    /// `max(q . min, q . max)`; cheaper but not a bound.
    Coarse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageConfig {
    pub logical_page_size: usize,
    pub logical_pages_per_physical: usize,
    pub score_mode: PageScoreMode,
}

impl Default for PageConfig {
    fn default() -> Self {
        Self {
            logical_page_size: 16,
            logical_pages_per_physical: 4,
            score_mode: PageScoreMode::ChannelWise,
        }
    }
}

impl PageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.logical_page_size == 0 {
            return Err(Error::hyper("logical_page_size", "must be at least 1"));
        }
        if self.logical_pages_per_physical == 0 {
            return Err(Error::hyper(
                "logical_pages_per_physical",
                "must be at least 1",
            ));
        }
        Ok(())
    }

    pub fn physical_page_size(&self) -> usize {
        self.logical_page_size * self.logical_pages_per_physical
    }
}

pub fn page_minmax_prepare(keys: &MemoryStore, cfg: &PageConfig) -> Result<MemoryIndex> {
    cfg.validate()?;
    if keys.kind() != StoreKind::TokenKeys {
        return Err(Error::IncompatibleStore {
            store: keys.kind().to_string(),
            method: "page min/max pooling".into(),
        });
    }
    let m = keys.vectors().expect("token-key stores hold vectors");
    if m.rows() == 0 {
        return Err(Error::EmptyStore);
    }
    let dim = m.cols();
    let n_pages = m.rows().div_ceil(cfg.logical_page_size);
    let mut mins = Vec::with_capacity(n_pages * dim);
    let mut maxs = Vec::with_capacity(n_pages * dim);
    for p in 0..n_pages {
        let start = p * cfg.logical_page_size;
        let end = (start + cfg.logical_page_size).min(m.rows());
        let mut lo = m.row(start).to_vec();
        let mut hi = lo.clone();
        for t in start + 1..end {
            for ((l, h), x) in lo.iter_mut().zip(hi.iter_mut()).zip(m.row(t)) {
                *l = l.min(*x);
                *h = h.max(*x);
            }
        }
        mins.extend(lo);
        maxs.extend(hi);
    }
    Ok(MemoryIndex {
        payload: IndexPayload::PageMinMax(PageBounds {
            logical_page_size: cfg.logical_page_size,
            mins: Matrix::new(n_pages, dim, mins)?,
            maxs: Matrix::new(n_pages, dim, maxs)?,
        }),
        source_entry_count: m.rows(),
    })
}

/// Score of every logical page.
pub fn logical_page_scores(
    q: &[f32],
    bounds: &PageBounds,
    mode: PageScoreMode,
) -> Result<Vec<f64>> {
    if bounds.mins.rows() > 0 && bounds.mins.cols() != q.len() {
        return Err(Error::DimensionMismatch {
            context: "page query",
            expected: bounds.mins.cols(),
            actual: q.len(),
        });
    }
    let scores = bounds
        .mins
        .iter_rows()
        .zip(bounds.maxs.iter_rows())
        .map(|(lo, hi)| match mode {
            PageScoreMode::ChannelWise => q
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&qc, (&l, &h))| {
                    let (qc, l, h) = (qc as f64, l as f64, h as f64);
                    (qc * l).max(qc * h)
                })
                .sum(),
            PageScoreMode::Coarse => crate::kernels::dot(q, lo).max(crate::kernels::dot(q, hi)),
        })
        .collect();
    Ok(scores)
}

/// Physical-page scores: the max over each group of logical pages.
pub fn page_minmax_score(
    q: &[f32],
    index: &MemoryIndex,
    cfg: &PageConfig,
) -> Result<RelevancyScores> {
    cfg.validate()?;
    let bounds = match &index.payload {
        IndexPayload::PageMinMax(b) => b,
        _ => return Err(index.wrong_kind(IndexKind::PageMinMax)),
    };
    let logical = logical_page_scores(q, bounds, cfg.score_mode)?;
    let physical = logical
        .chunks(cfg.logical_pages_per_physical)
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max) as f32);
    Ok(RelevancyScores::dense(Granularity::Page, physical))
}
