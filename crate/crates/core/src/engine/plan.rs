//! Physical plan trees and their JSON interchange format.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::Schema;
use crate::error::{Error, Result};
use crate::query::{BoundQuery, CmpOp, JoinEdge, Predicate, TableSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinAlgorithm {
    Hash,
    SortMerge,
    NestedLoop,
}

impl JoinAlgorithm {
    pub const ALL: [JoinAlgorithm; 3] = [
        JoinAlgorithm::Hash,
        JoinAlgorithm::SortMerge,
        JoinAlgorithm::NestedLoop,
    ];

    pub fn short(self) -> &'static str {
        match self {
            JoinAlgorithm::Hash => "HJ",
            JoinAlgorithm::SortMerge => "SMJ",
            JoinAlgorithm::NestedLoop => "NLJ",
        }
    }

    /// Hash and sort-merge joins need an equality to key on.
    pub fn needs_condition(self) -> bool {
        self != JoinAlgorithm::NestedLoop
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccessPath {
    FullScan,
    IndexLookup { column: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum PlanNode {
    Access {
        table: String,
        path: AccessPath,
        #[serde(default)]
        filters: Vec<Predicate>,
    },
    Join {
        algorithm: JoinAlgorithm,
        /// Key equality; `None` is a cross join.
        condition: Option<JoinEdge>,
        /// Further equalities between the two sides, checked per matched pair.
        #[serde(default)]
        residual: Vec<JoinEdge>,
        left: Box<PlanNode>,
        right: Box<PlanNode>,
    },
}

impl PlanNode {
    /// Leaf for `table` carrying all of the query's filters on it.
    pub fn access(query: &BoundQuery, table: &str, path: AccessPath) -> PlanNode {
        PlanNode::Access {
            table: table.to_string(),
            path,
            filters: query.filters_on(table).cloned().collect(),
        }
    }

    /// Join of two subtrees applying every query edge that crosses them. The
    /// first crossing edge (query order) is the key; the rest are residual.
    pub fn join(
        query: &BoundQuery,
        algorithm: JoinAlgorithm,
        left: PlanNode,
        right: PlanNode,
    ) -> PlanNode {
        let ls = left.table_set(query);
        let rs = right.table_set(query);
        let mut crossing = query
            .edges_between(ls, rs)
            .into_iter()
            .map(|e| orient(query, e, ls));
        let condition = crossing.next();
        PlanNode::Join {
            algorithm,
            condition,
            residual: crossing.collect(),
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, PlanNode::Access { .. })
    }

    /// Leaf tables, left to right.
    pub fn tables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |t| out.push(t));
        out
    }

    fn visit_leaves<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            PlanNode::Access { table, .. } => f(table),
            PlanNode::Join { left, right, .. } => {
                left.visit_leaves(f);
                right.visit_leaves(f);
            }
        }
    }

    pub fn table_set(&self, query: &BoundQuery) -> TableSet {
        self.tables()
            .iter()
            .filter_map(|t| query.table_pos(t))
            .fold(0, |acc, p| acc | (1 << p))
    }

    pub fn join_count(&self) -> usize {
        match self {
            PlanNode::Access { .. } => 0,
            PlanNode::Join { left, right, .. } => 1 + left.join_count() + right.join_count(),
        }
    }

    /// Height in join levels; a leaf has height 0.
    pub fn height(&self) -> usize {
        match self {
            PlanNode::Access { .. } => 0,
            PlanNode::Join { left, right, .. } => 1 + left.height().max(right.height()),
        }
    }

    /// Every join's right child is a base-table access.
    pub fn is_left_deep(&self) -> bool {
        match self {
            PlanNode::Access { .. } => true,
            PlanNode::Join { left, right, .. } => right.is_leaf() && left.is_left_deep(),
        }
    }

    pub fn has_cross_join(&self) -> bool {
        match self {
            PlanNode::Access { .. } => false,
            PlanNode::Join {
                condition,
                left,
                right,
                ..
            } => condition.is_none() || left.has_cross_join() || right.has_cross_join(),
        }
    }

    /// Compact structural form, e.g. `HJ(Actor[ix:name],Stars)`. Two plans of
    /// the same query are equal iff their canonical forms are equal.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        self.write_canonical(&mut s);
        s
    }

    /// Canonical form with the inputs of hash and sort-merge joins put in a
    /// fixed order. The engine treats those joins symmetrically (hash joins
    /// build on the smaller input), so plans with equal keys do identical work.
    pub fn physical_key(&self) -> String {
        match self {
            PlanNode::Access { .. } => self.canonical(),
            PlanNode::Join {
                algorithm,
                left,
                right,
                ..
            } => {
                let (mut l, mut r) = (left.physical_key(), right.physical_key());
                if *algorithm != JoinAlgorithm::NestedLoop && r < l {
                    std::mem::swap(&mut l, &mut r);
                }
                format!("{}({l},{r})", algorithm.short())
            }
        }
    }

    fn write_canonical(&self, out: &mut String) {
        match self {
            PlanNode::Access { table, path, .. } => {
                out.push_str(table);
                if let AccessPath::IndexLookup { column } = path {
                    out.push_str("[ix:");
                    out.push_str(column);
                    out.push(']');
                }
            }
            PlanNode::Join {
                algorithm,
                left,
                right,
                ..
            } => {
                out.push_str(algorithm.short());
                out.push('(');
                left.write_canonical(out);
                out.push(',');
                right.write_canonical(out);
                out.push(')');
            }
        }
    }

    /// Structural checks that need only the plan and the schema.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let mut seen = HashSet::new();
        self.validate_node(schema, &mut seen)
    }

    fn validate_node<'a>(&'a self, schema: &Schema, seen: &mut HashSet<&'a str>) -> Result<()> {
        match self {
            PlanNode::Access {
                table,
                path,
                filters,
            } => {
                let def = schema
                    .table(table)
                    .ok_or_else(|| Error::Plan(format!("unknown table {table}")))?;
                if !seen.insert(table) {
                    return Err(Error::Plan(format!("table {table} appears twice")));
                }
                for f in filters {
                    if f.column.table != *table || def.column(&f.column.column).is_none() {
                        return Err(Error::Plan(format!("filter {f} does not apply to {table}")));
                    }
                }
                if let AccessPath::IndexLookup { column } = path {
                    if !def.has_index(column) {
                        return Err(Error::Plan(format!("no index on {table}.{column}")));
                    }
                    if !filters
                        .iter()
                        .any(|f| f.column.column == *column && f.op == CmpOp::Eq)
                    {
                        return Err(Error::Plan(format!(
                            "index lookup on {table}.{column} without an equality filter"
                        )));
                    }
                }
                Ok(())
            }
            PlanNode::Join {
                algorithm,
                condition,
                residual,
                left,
                right,
            } => {
                left.validate_node(schema, seen)?;
                right.validate_node(schema, seen)?;
                if algorithm.needs_condition() && condition.is_none() {
                    return Err(Error::Plan(format!(
                        "{} join without a join condition",
                        algorithm.short()
                    )));
                }
                let lt = left.tables();
                let rt = right.tables();
                for e in condition.iter().chain(residual) {
                    let crosses = (lt.contains(&e.left.table.as_str())
                        && rt.contains(&e.right.table.as_str()))
                        || (rt.contains(&e.left.table.as_str())
                            && lt.contains(&e.right.table.as_str()));
                    if !crosses {
                        return Err(Error::Plan(format!(
                            "join condition {e} does not span its inputs"
                        )));
                    }
                    for c in [&e.left, &e.right] {
                        if schema
                            .table(&c.table)
                            .and_then(|t| t.column(&c.column))
                            .is_none()
                        {
                            return Err(Error::Plan(format!("unknown column {c}")));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Checks that this plan computes exactly `query`: each table once, all of
    /// its filters at the leaf, and every join edge applied where its two
    /// sides first meet.
    pub fn validate_for(&self, query: &BoundQuery, schema: &Schema) -> Result<()> {
        self.validate(schema)?;
        let mut leaves = self.tables();
        leaves.sort_unstable();
        let mut expected: Vec<&str> = query.tables.iter().map(String::as_str).collect();
        expected.sort_unstable();
        if leaves != expected {
            return Err(Error::Plan(format!(
                "plan covers tables {leaves:?}, query needs {expected:?}"
            )));
        }
        self.check_against(query)
    }

    fn check_against(&self, query: &BoundQuery) -> Result<()> {
        match self {
            PlanNode::Access { table, filters, .. } => {
                let want: Vec<&Predicate> = query.filters_on(table).collect();
                if want.len() != filters.len() || !want.iter().all(|p| filters.contains(p)) {
                    return Err(Error::Plan(format!(
                        "filters at {table} differ from the query's"
                    )));
                }
                Ok(())
            }
            PlanNode::Join {
                condition,
                residual,
                left,
                right,
                ..
            } => {
                let ls = left.table_set(query);
                let rs = right.table_set(query);
                let want = query.edges_between(ls, rs);
                let have: Vec<&JoinEdge> = condition.iter().chain(residual).collect();
                let same =
                    |a: &JoinEdge, b: &JoinEdge| a == b || (a.left == b.right && a.right == b.left);
                if want.len() != have.len() || !want.iter().all(|w| have.iter().any(|h| same(w, h)))
                {
                    return Err(Error::Plan(format!(
                        "join conditions {:?} do not match query edges {:?}",
                        have.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                        want.iter().map(|e| e.to_string()).collect::<Vec<_>>()
                    )));
                }
                left.check_against(query)?;
                right.check_against(query)
            }
        }
    }
}

/// Orients an edge so its `left` column comes from `left_set`.
fn orient(query: &BoundQuery, e: &JoinEdge, left_set: TableSet) -> JoinEdge {
    let (l, _) = query.edge_sets(e);
    if l & left_set != 0 {
        e.clone()
    } else {
        JoinEdge::new(e.right.clone(), e.left.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    /// Unique within one planning session (enumeration, ranking or pool).
    pub plan_id: u64,
    pub root: PlanNode,
}

impl QueryPlan {
    pub fn new(plan_id: u64, root: PlanNode) -> Self {
        QueryPlan { plan_id, root }
    }

    /// A plan whose id is a stable hash of its canonical form, so the same
    /// plan gets the same id whichever component produced it.
    pub fn from_root(root: PlanNode) -> Self {
        let plan_id = crate::catalog::fnv1a(&[root.canonical().as_bytes()]);
        QueryPlan { plan_id, root }
    }

    pub fn canonical(&self) -> String {
        self.root.canonical()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl fmt::Display for QueryPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.root.canonical())
    }
}
