//! Per-round candidate arm sets.

use crate::error::{Error, Result};
use crate::linalg::norm2;

/// Unit-norm tolerance for contexts: | ||x|| - 1 | must be within this.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// The arms available at one round, with their contextual vectors.
///
/// Positions are the tie-breaking order used by every selection rule, so
/// slate order is semantic, not incidental.
#[derive(Debug, Clone)]
pub struct ContextSlate {
    round: usize,
    arm_ids: Vec<usize>,
    contexts: Vec<Vec<f64>>,
    /// (arm id, position), sorted by arm id, for O(log n) membership tests.
    by_id: Vec<(usize, usize)>,
}

impl ContextSlate {
    /// Validates: nonempty, distinct arm ids, uniform dimension, and every
    /// context unit-norm within [`UNIT_NORM_TOL`].
    pub fn new(round: usize, arm_ids: Vec<usize>, contexts: Vec<Vec<f64>>) -> Result<Self> {
        let slate = Self::with_raw_contexts(round, arm_ids, contexts)?;
        for (aid, x) in slate.iter() {
            let gap = (norm2(x) - 1.0).abs();
            if gap > UNIT_NORM_TOL {
                return Err(Error::Config(format!(
                    "context of arm {aid} is not unit-norm (off by {gap:.3e})"
                )));
            }
        }
        Ok(slate)
    }

    /// Same checks except the unit-norm one. Used when contexts are the
    /// observable prefix of longer feature vectors, where only the full
    /// vector is normalized.
    pub(crate) fn with_raw_contexts(
        round: usize,
        arm_ids: Vec<usize>,
        contexts: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if arm_ids.is_empty() {
            return Err(Error::Config("slate must contain at least one arm".into()));
        }
        if arm_ids.len() != contexts.len() {
            return Err(Error::Config(format!(
                "slate has {} arm ids but {} contexts",
                arm_ids.len(),
                contexts.len()
            )));
        }
        let dim = contexts[0].len();
        if dim == 0 || contexts.iter().any(|x| x.len() != dim) {
            return Err(Error::Config(
                "slate contexts must share one positive dimension".into(),
            ));
        }
        let mut by_id: Vec<(usize, usize)> = arm_ids.iter().copied().zip(0..).collect();
        by_id.sort_unstable();
        if by_id.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("slate arm ids must be distinct".into()));
        }
        Ok(ContextSlate {
            round,
            arm_ids,
            contexts,
            by_id,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn len(&self) -> usize {
        self.arm_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }

    pub fn dim(&self) -> usize {
        self.contexts[0].len()
    }

    pub fn arm_ids(&self) -> &[usize] {
        &self.arm_ids
    }

    pub fn arm_id(&self, position: usize) -> usize {
        self.arm_ids[position]
    }

    pub fn context(&self, position: usize) -> &[f64] {
        &self.contexts[position]
    }

    /// Slate position of an arm id, if present.
    pub fn position_of(&self, arm_id: usize) -> Option<usize> {
        self.by_id
            .binary_search_by_key(&arm_id, |&(id, _)| id)
            .ok()
            .map(|i| self.by_id[i].1)
    }

    /// (arm id, context) pairs in slate order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.arm_ids
            .iter()
            .copied()
            .zip(self.contexts.iter().map(Vec::as_slice))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = norm2(v);
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn accepts_unit_contexts_and_indexes_ids() {
        let slate = ContextSlate::new(
            3,
            vec![9, 4, 7],
            vec![unit(&[1.0, 2.0]), unit(&[0.5, -1.0]), vec![0.0, 1.0]],
        )
        .unwrap();
        assert_eq!(slate.len(), 3);
        assert_eq!(slate.position_of(4), Some(1));
        assert_eq!(slate.position_of(7), Some(2));
        assert_eq!(slate.position_of(5), None);
        assert_eq!(slate.arm_id(0), 9);
    }

    #[test]
    fn rejects_duplicates_non_unit_and_ragged() {
        assert!(ContextSlate::new(1, vec![1, 1], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(ContextSlate::new(1, vec![1], vec![vec![0.5, 0.5]]).is_err());
        assert!(ContextSlate::new(1, vec![1, 2], vec![vec![1.0], vec![0.0, 1.0]]).is_err());
        assert!(ContextSlate::new(1, vec![], vec![]).is_err());
    }

    #[test]
    fn norm_tolerance_boundary() {
        let just_inside = vec![1.0 + 5e-7, 0.0];
        assert!(ContextSlate::new(1, vec![0], vec![just_inside]).is_ok());
        let outside = vec![1.0 + 5e-6, 0.0];
        assert!(ContextSlate::new(1, vec![0], vec![outside]).is_err());
    }
}
