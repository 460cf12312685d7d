//! Fixed-length plan featurization.
//!
//! With `T` = [`FeatureConfig::max_tables`] the layout is:
//!
//! | block | width | content per slot |
//! |-------|-------|------------------|
//! | tables | `3T` | per query table position: full scan, index lookup (one-hot), `ln(1 + est rows)` |
//! | joins | `8(T-1)` | per join in post-order: HJ, SMJ, NLJ (one-hot), depth from root, `ln(1 + est rows)`, left set code, right set code, cross flag |
//! | shape | `2` | fraction of joins with a base-table right child, height / (T-1) |
//!
//! A set code is `Σ 2^i / (2^T - 1)` over the table positions `i` in a
//! subtree, so every set maps to a distinct value in `(0, 1]`. Unused slots
//! are zero. Partial plans (forests) use the same layout: trees are visited in
//! order of their lowest table position, and leaves whose access path is not
//! yet decided have a zero one-hot.

use crate::engine::{AccessPath, JoinAlgorithm, PlanNode};
use crate::error::{Error, Result};
use crate::optimizer::Estimator;
use crate::query::TableSet;

pub const TABLE_FEATURES: usize = 3;
pub const JOIN_FEATURES: usize = 8;
pub const SHAPE_FEATURES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FeatureConfig {
    pub max_tables: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { max_tables: 6 }
    }
}

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        TABLE_FEATURES * self.max_tables
            + JOIN_FEATURES * self.max_tables.saturating_sub(1)
            + SHAPE_FEATURES
    }

    pub fn table_offset(&self, pos: usize) -> usize {
        TABLE_FEATURES * pos
    }

    pub fn join_offset(&self, slot: usize) -> usize {
        TABLE_FEATURES * self.max_tables + JOIN_FEATURES * slot
    }

    pub fn shape_offset(&self) -> usize {
        self.dim() - SHAPE_FEATURES
    }
}

/// Features of a complete plan.
pub fn featurize(root: &PlanNode, est: &Estimator, cfg: FeatureConfig) -> Result<Vec<f64>> {
    featurize_forest(
        std::slice::from_ref(root),
        est,
        cfg,
        est.query().all_tables(),
    )
}

/// Features of a forest of subtrees covering the query. Leaves outside
/// `decided` have no access path yet.
pub fn featurize_forest(
    trees: &[PlanNode],
    est: &Estimator,
    cfg: FeatureConfig,
    decided: TableSet,
) -> Result<Vec<f64>> {
    let q = est.query();
    let n = q.tables.len();
    if n > cfg.max_tables {
        return Err(Error::Capacity(format!(
            "{n} tables exceeds the feature limit of {}",
            cfg.max_tables
        )));
    }
    let full_code = ((1u64 << cfg.max_tables) - 1) as f64;
    let code = |s: TableSet| s as f64 / full_code;
    let mut f = vec![0.0; cfg.dim()];
    for pos in 0..n {
        f[cfg.table_offset(pos) + 2] = est.leaf_rows(pos).ln_1p();
    }

    let mut order: Vec<(TableSet, &PlanNode)> = trees.iter().map(|t| (t.table_set(q), t)).collect();
    order.sort_by_key(|(s, _)| s.trailing_zeros());

    struct Walk<'a> {
        f: Vec<f64>,
        slot: usize,
        joins: usize,
        right_leaves: usize,
        height: usize,
        cfg: FeatureConfig,
        est: &'a Estimator<'a>,
        decided: TableSet,
    }
    impl Walk<'_> {
        /// Returns (table set, subtree height).
        fn visit(
            &mut self,
            node: &PlanNode,
            depth: usize,
            code: &dyn Fn(TableSet) -> f64,
        ) -> Result<(TableSet, usize)> {
            let q = self.est.query();
            match node {
                PlanNode::Access { table, path, .. } => {
                    let pos = q
                        .table_pos(table)
                        .ok_or_else(|| Error::Plan(format!("table {table} is not in the query")))?;
                    if self.decided & (1 << pos) != 0 {
                        let hot = match path {
                            AccessPath::FullScan => 0,
                            AccessPath::IndexLookup { .. } => 1,
                        };
                        self.f[self.cfg.table_offset(pos) + hot] = 1.0;
                    }
                    Ok((1 << pos, 0))
                }
                PlanNode::Join {
                    algorithm,
                    condition,
                    left,
                    right,
                    ..
                } => {
                    let (ls, lh) = self.visit(left, depth + 1, code)?;
                    let (rs, rh) = self.visit(right, depth + 1, code)?;
                    if self.slot + 1 >= self.cfg.max_tables {
                        return Err(Error::Capacity("more joins than feature slots".into()));
                    }
                    let o = self.cfg.join_offset(self.slot);
                    let hot = match algorithm {
                        JoinAlgorithm::Hash => 0,
                        JoinAlgorithm::SortMerge => 1,
                        JoinAlgorithm::NestedLoop => 2,
                    };
                    self.f[o + hot] = 1.0;
                    self.f[o + 3] = depth as f64;
                    self.f[o + 4] = self.est.rows(ls | rs).ln_1p();
                    self.f[o + 5] = code(ls);
                    self.f[o + 6] = code(rs);
                    self.f[o + 7] = if condition.is_none() { 1.0 } else { 0.0 };
                    self.slot += 1;
                    self.joins += 1;
                    if right.is_leaf() {
                        self.right_leaves += 1;
                    }
                    let h = lh.max(rh) + 1;
                    self.height = self.height.max(h);
                    Ok((ls | rs, h))
                }
            }
        }
    }

    let mut w = Walk {
        f,
        slot: 0,
        joins: 0,
        right_leaves: 0,
        height: 0,
        cfg,
        est,
        decided,
    };
    for (_, t) in order {
        w.visit(t, 0, &code)?;
    }
    let s = cfg.shape_offset();
    if w.joins > 0 {
        w.f[s] = w.right_leaves as f64 / w.joins as f64;
    }
    if cfg.max_tables > 1 {
        w.f[s + 1] = w.height as f64 / (cfg.max_tables - 1) as f64;
    }
    Ok(w.f)
}
