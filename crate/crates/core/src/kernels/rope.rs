//! Partial rotary position embedding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Head layout of a multi-head indexer with partial RoPE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexerConfig {
    pub n_heads: usize,
    pub head_dim: usize,
    /// Fraction of channels that receive the rotation.
    pub rope_fraction: f64,
    pub rope_base: f64,
}

impl Default for IndexerConfig {
    fn default() -> Self {
        Self {
            n_heads: 64,
            head_dim: 128,
            rope_fraction: 0.5,
            rope_base: 10_000.0,
        }
    }
}

impl IndexerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 {
            return Err(Error::hyper("n_heads", "must be positive"));
        }
        if self.head_dim == 0 {
            return Err(Error::hyper("head_dim", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.rope_fraction) {
            return Err(Error::hyper("rope_fraction", "must lie in [0, 1]"));
        }
        if self.rope_fraction > 0.0 && !self.head_dim.is_multiple_of(2) {
            return Err(Error::hyper(
                "head_dim",
                "must be even when RoPE is applied",
            ));
        }
        if !(self.rope_base.is_finite() && self.rope_base > 0.0) {
            return Err(Error::hyper("rope_base", "must be positive"));
        }
        Ok(())
    }

    /// Number of rotated channels, rounded down to whole pairs.
    pub fn rope_dims(&self) -> usize {
        let d = (self.rope_fraction * self.head_dim as f64).floor() as usize;
        d & !1
    }
}

/// Rotation angle of pair `i` at `position`.
pub fn rope_angle(position: usize, pair: usize, rope_dims: usize, base: f64) -> f64 {
    let exponent = -2.0 * pair as f64 / rope_dims as f64;
    position as f64 * base.powf(exponent)
}

/// Rotates adjacent channel pairs `(2i, 2i+1)` of the leading rotated block
/// of `v` in place; the remaining channels are untouched.
pub fn rope_apply_in_place(v: &mut [f32], position: usize, cfg: &IndexerConfig) -> Result<()> {
    if v.len() != cfg.head_dim {
        return Err(Error::DimensionMismatch {
            context: "rope input",
            expected: cfg.head_dim,
            actual: v.len(),
        });
    }
    let rope_dims = cfg.rope_dims();
    if position == 0 || rope_dims == 0 {
        return Ok(());
    }
    for (pair, chunk) in v[..rope_dims].chunks_exact_mut(2).enumerate() {
        let (sin, cos) = rope_angle(position, pair, rope_dims, cfg.rope_base).sin_cos();
        let (x0, x1) = (chunk[0] as f64, chunk[1] as f64);
        chunk[0] = (x0 * cos - x1 * sin) as f32;
        chunk[1] = (x0 * sin + x1 * cos) as f32;
    }
    Ok(())
}

pub fn rope_apply(v: &[f32], position: usize, cfg: &IndexerConfig) -> Result<Vec<f32>> {
    let mut out = v.to_vec();
    rope_apply_in_place(&mut out, position, cfg)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(head_dim: usize, rope_fraction: f64) -> IndexerConfig {
        IndexerConfig {
            n_heads: 1,
            head_dim,
            rope_fraction,
            rope_base: 10_000.0,
        }
    }

    #[test]
    fn position_zero_is_identity() {
        let v: Vec<f32> = (0..128).map(|i| (i as f32 * 0.37).sin()).collect();
        assert_eq!(rope_apply(&v, 0, &cfg(128, 0.5)).unwrap(), v);
    }

    #[test]
    fn two_dim_matches_explicit_rotation() {
        // d = 2 so the only pair has angle p * base^0 = p.
        let v = [0.6f32, -1.3];
        for p in [1usize, 2, 7, 1000] {
            let out = rope_apply(&v, p, &cfg(2, 1.0)).unwrap();
            let (s, c) = (p as f64).sin_cos();
            let ex = [0.6 * c - (-1.3) * s, 0.6 * s + (-1.3) * c];
            assert!((out[0] as f64 - ex[0]).abs() < 1e-6);
            assert!((out[1] as f64 - ex[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn unrotated_tail_passes_through() {
        let v: Vec<f32> = (0..8).map(|i| i as f32 + 1.0).collect();
        let out = rope_apply(&v, 5, &cfg(8, 0.5)).unwrap();
        assert_eq!(&out[4..], &v[4..]);
        assert_ne!(&out[..4], &v[..4]);
    }

    #[test]
    fn odd_head_dim_rejected_with_rope() {
        assert!(cfg(7, 0.5).validate().is_err());
        assert!(cfg(7, 0.0).validate().is_ok());
    }

    #[test]
    fn wrong_length_is_dimension_mismatch() {
        assert!(matches!(
            rope_apply(&[1.0; 3], 1, &cfg(4, 1.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn rotation_preserves_norm(
            v in prop::collection::vec(-10.0f32..10.0, 64),
            pos in 0usize..1_000_000,
        ) {
            let out = rope_apply(&v, pos, &cfg(64, 0.5)).unwrap();
            let n0: f64 = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            let n1: f64 = out.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            prop_assert!((n0 - n1).abs() <= 1e-5 * n0.max(1e-12));
        }
    }
}
