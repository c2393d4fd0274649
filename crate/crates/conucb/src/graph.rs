//! The weighted bipartite relation graph between arms and key-terms.
//!
//! Each arm distributes one unit of weight over its key-terms (rows sum to
//! 1); key-terms aggregate weight from every incident arm. Two pseudo-context
//! constructions live here:
//!
//! - [`RelationGraph::key_term_context`] averages over *all* incident arms.
//!   The environment answers key-term questions from this full-set view.
//! - [`RelationGraph::slate_key_term_context`] renormalizes over the arms
//!   present in the current slate. Learners build their query-time
//!   pseudo-contexts this way, because slate contexts are all they can see.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::slate::ContextSlate;

/// A row may deviate from sum 1 by at most this before renormalization is
/// refused.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// Weighted bipartite arm/key-term graph. Immutable once built.
#[derive(Debug, Clone)]
pub struct RelationGraph {
    /// Per arm: (key-term id, weight), sorted by key-term id; weights sum to 1.
    arm_rows: Vec<Vec<(usize, f64)>>,
    /// Per key-term: (arm id, weight), sorted by arm id. Never empty.
    keyterm_cols: Vec<Vec<(usize, f64)>>,
    /// Per key-term: sum of incident weights.
    col_sums: Vec<f64>,
}

impl RelationGraph {
    /// Builds and validates a graph from raw edges.
    ///
    /// Requirements: ids in range, weights nonnegative, no duplicate
    /// (arm, key-term) pair, every arm's weights summing to 1 within
    /// [`ROW_SUM_TOL`] (rows are renormalized to exactly 1), and every
    /// key-term incident to at least one arm.
    pub fn from_edges(
        num_arms: usize,
        num_keyterms: usize,
        edges: &[(usize, usize, f64)],
    ) -> Result<Self> {
        if num_arms == 0 || num_keyterms == 0 {
            return Err(Error::Config(
                "graph needs at least one arm and one key-term".into(),
            ));
        }
        let mut arm_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_arms];
        for &(a, k, w) in edges {
            if a >= num_arms {
                return Err(Error::Config(format!("arm id {a} out of range ({num_arms} arms)")));
            }
            if k >= num_keyterms {
                return Err(Error::Config(format!(
                    "key-term id {k} out of range ({num_keyterms} key-terms)"
                )));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!(
                    "weight of edge ({a},{k}) must be finite and nonnegative, got {w}"
                )));
            }
            arm_rows[a].push((k, w));
        }
        for (a, row) in arm_rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(k, _)| k);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Config(format!("arm {a} has a duplicate key-term edge")));
            }
            let sum: f64 = row.iter().map(|&(_, w)| w).sum();
            // The cushion keeps decimal inputs sitting exactly on the
            // tolerance (e.g. 0.999999) from flapping with rounding.
            if (sum - 1.0).abs() > ROW_SUM_TOL * (1.0 + 1e-9) {
                return Err(Error::Config(format!(
                    "arm {a} weights sum to {sum:.9}, expected 1 within {ROW_SUM_TOL:e}"
                )));
            }
            for (_, w) in row.iter_mut() {
                *w /= sum;
            }
        }

        let mut keyterm_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_keyterms];
        for (a, row) in arm_rows.iter().enumerate() {
            for &(k, w) in row {
                keyterm_cols[k].push((a, w));
            }
        }
        for (k, col) in keyterm_cols.iter().enumerate() {
            if col.is_empty() {
                return Err(Error::Config(format!("key-term {k} has no incident arm")));
            }
        }
        let col_sums = keyterm_cols
            .iter()
            .map(|col| col.iter().map(|&(_, w)| w).sum())
            .collect();
        Ok(RelationGraph {
            arm_rows,
            keyterm_cols,
            col_sums,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.arm_rows.len()
    }

    pub fn num_keyterms(&self) -> usize {
        self.keyterm_cols.len()
    }

    /// (key-term id, weight) pairs of one arm, sorted by key-term id.
    pub fn arm_keyterms(&self, arm: usize) -> &[(usize, f64)] {
        &self.arm_rows[arm]
    }

    /// (arm id, weight) pairs of one key-term, sorted by arm id.
    pub fn keyterm_arms(&self, keyterm: usize) -> &[(usize, f64)] {
        &self.keyterm_cols[keyterm]
    }

    /// Total incident weight of a key-term (the full-set normalizer).
    pub fn keyterm_weight_sum(&self, keyterm: usize) -> f64 {
        self.col_sums[keyterm]
    }

    /// Full-set pseudo-context: the weighted average of all incident arms'
    /// contexts. `contexts` must hold one vector per arm in the graph.
    pub fn key_term_context(&self, keyterm: usize, contexts: &[Vec<f64>]) -> Result<Vec<f64>> {
        if contexts.len() != self.num_arms() {
            return Err(Error::Config(format!(
                "expected {} arm contexts, got {}",
                self.num_arms(),
                contexts.len()
            )));
        }
        let col = &self.keyterm_cols[keyterm];
        let dim = contexts[col[0].0].len();
        let mut out = vec![0.0; dim];
        let total = self.col_sums[keyterm];
        for &(a, w) in col {
            let x = &contexts[a];
            if x.len() != dim {
                return Err(Error::Config(format!(
                    "context of arm {a} has dimension {}, expected {dim}",
                    x.len()
                )));
            }
            let scale = w / total;
            for (o, xi) in out.iter_mut().zip(x) {
                *o += scale * xi;
            }
        }
        Ok(out)
    }

    /// Slate-restricted weights of a key-term: (slate position, weight)
    /// renormalized over the incident arms present in `slate`. Returns
    /// `None` when no incident arm is on the slate.
    pub fn slate_weights(&self, keyterm: usize, slate: &ContextSlate) -> Option<Vec<(usize, f64)>> {
        let mut present: Vec<(usize, f64)> = self.keyterm_cols[keyterm]
            .iter()
            .filter_map(|&(a, w)| slate.position_of(a).map(|pos| (pos, w)))
            .collect();
        let total: f64 = present.iter().map(|&(_, w)| w).sum();
        if total <= 0.0 {
            return None;
        }
        for (_, w) in present.iter_mut() {
            *w /= total;
        }
        Some(present)
    }

    /// Slate-restricted pseudo-context (weighted average of slate contexts).
    pub fn slate_key_term_context(&self, keyterm: usize, slate: &ContextSlate) -> Option<Vec<f64>> {
        let weights = self.slate_weights(keyterm, slate)?;
        let mut out = vec![0.0; slate.dim()];
        for (pos, w) in weights {
            for (o, xi) in out.iter_mut().zip(slate.context(pos)) {
                *o += w * xi;
            }
        }
        Some(out)
    }

    /// Key-terms with at least one incident arm on the slate, ascending.
    pub fn slate_candidates(&self, slate: &ContextSlate) -> Vec<usize> {
        let mut set = BTreeSet::new();
        for &a in slate.arm_ids() {
            for &(k, _) in &self.arm_rows[a] {
                set.insert(k);
            }
        }
        set.into_iter().collect()
    }

    /// Parses the graph file format:
    ///
    /// ```text
    /// #arms N #keyterms K
    /// arm_id<TAB>keyterm_id<TAB>weight
    /// ```
    ///
    /// Ids are 0-based. Rows whose weights sum to 1 within [`ROW_SUM_TOL`]
    /// are renormalized; anything worse is rejected.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::load(path, 0, "empty file"))?;
        let (num_arms, num_keyterms) = parse_header(header)
            .ok_or_else(|| Error::load(path, 1, "expected header `#arms N #keyterms K`"))?;

        let mut edges = Vec::new();
        for (idx, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let mut fields = line.split('\t');
            let edge = (|| {
                let a = fields.next()?.trim().parse::<usize>().ok()?;
                let k = fields.next()?.trim().parse::<usize>().ok()?;
                let w = fields.next()?.trim().parse::<f64>().ok()?;
                if fields.next().is_some() {
                    return None;
                }
                Some((a, k, w))
            })()
            .ok_or_else(|| {
                Error::load(path, lineno, "expected `arm_id<TAB>keyterm_id<TAB>weight`")
            })?;
            if edge.2 < 0.0 {
                return Err(Error::load(path, lineno, format!("negative weight {}", edge.2)));
            }
            edges.push(edge);
        }
        Self::from_edges(num_arms, num_keyterms, &edges)
            .map_err(|e| Error::load(path, 0, e.to_string()))
    }

    /// Writes the same format [`RelationGraph::load`] reads.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!("#arms {} #keyterms {}\n", self.num_arms(), self.num_keyterms());
        for (a, row) in self.arm_rows.iter().enumerate() {
            for &(k, w) in row {
                writeln!(out, "{a}\t{k}\t{w}").expect("string write cannot fail");
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut tok = line.split_whitespace();
    if tok.next()? != "#arms" {
        return None;
    }
    let n = tok.next()?.parse().ok()?;
    if tok.next()? != "#keyterms" {
        return None;
    }
    let k = tok.next()?.parse().ok()?;
    if tok.next().is_some() {
        return None;
    }
    Some((n, k))
}
