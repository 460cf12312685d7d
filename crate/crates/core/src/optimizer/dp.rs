//! Selinger-style dynamic programming over table subsets, keeping the k
//! cheapest plans per subset so the same pass serves `optimize` and top-k.

use super::cost::{access_cost, join_cost};
use super::estimate::Estimator;
use super::{access_paths, connects, OptimizerConfig};
use crate::engine::{JoinAlgorithm, PlanNode};
use crate::error::{Error, Result};
use crate::query::TableSet;

#[derive(Clone, Debug)]
pub(crate) struct Entry {
    pub cost: f64,
    pub canonical: String,
    pub node: PlanNode,
}

struct Candidate {
    cost: f64,
    left: TableSet,
    right: TableSet,
    i: usize,
    j: usize,
    algorithm: JoinAlgorithm,
}

fn by_cost_then_canonical(a: &(f64, String), b: &(f64, String)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
}

/// The `k` cheapest plans for the whole query, ascending by
/// `(estimated cost, canonical form)`.
///
/// Plan cost is monotone in its children's costs, and the canonical order of
/// a join is consistent with its children's, so a candidate built from the
/// `i`-th left and `j`-th right sub-plan is preceded by at least
/// `(i+1)(j+1) - 1` candidates of the same split and operator; only pairs with
/// `(i+1)(j+1) <= k` can survive.
pub(crate) fn k_best(est: &Estimator, k: usize, config: OptimizerConfig) -> Result<Vec<Entry>> {
    let q = est.query();
    let n = q.tables.len();
    let full = q.all_tables();
    let adjacency = super::adjacency(q);
    let mut best: Vec<Vec<Entry>> = vec![Vec::new(); 1usize << n];

    for s in 1..=full {
        if s.count_ones() == 1 {
            let pos = s.trailing_zeros() as usize;
            let table = &q.tables[pos];
            let mut leaves = Vec::new();
            for path in access_paths(q, table, |c| est.stats().has_index(table, c)) {
                let node = PlanNode::access(q, table, path.clone());
                leaves.push(Entry {
                    cost: access_cost(est, pos, &path)?,
                    canonical: node.canonical(),
                    node,
                });
            }
            leaves.sort_by(|a, b| {
                a.cost
                    .total_cmp(&b.cost)
                    .then_with(|| a.canonical.cmp(&b.canonical))
            });
            leaves.truncate(k);
            best[s as usize] = leaves;
            continue;
        }

        let out = est.rows(s);
        let mut cands: Vec<Candidate> = Vec::new();
        let mut l = (s - 1) & s;
        while l != 0 {
            let r = s ^ l;
            let (le, re) = (&best[l as usize], &best[r as usize]);
            let crossing = connects(&adjacency, l, r);
            let shape_ok = config.bushy || r.count_ones() == 1;
            if shape_ok
                && (crossing || config.allow_cross_joins)
                && !le.is_empty()
                && !re.is_empty()
            {
                let (lr, rr) = (est.rows(l), est.rows(r));
                for algorithm in JoinAlgorithm::ALL {
                    if algorithm.needs_condition() && !crossing {
                        continue;
                    }
                    for (i, le_i) in le.iter().enumerate().take(k) {
                        for (j, re_j) in re.iter().enumerate() {
                            if (i + 1).saturating_mul(j + 1) > k {
                                break;
                            }
                            cands.push(Candidate {
                                cost: join_cost(algorithm, out, (le_i.cost, lr), (re_j.cost, rr)),
                                left: l,
                                right: r,
                                i,
                                j,
                                algorithm,
                            });
                        }
                    }
                }
            }
            l = (l - 1) & s;
        }

        cands.sort_by(|a, b| a.cost.total_cmp(&b.cost));
        if cands.len() > k {
            let threshold = cands[k - 1].cost;
            cands.retain(|c| c.cost <= threshold);
        }
        let mut keyed: Vec<((f64, String), Candidate)> = cands
            .into_iter()
            .map(|c| {
                let canonical = format!(
                    "{}({},{})",
                    c.algorithm.short(),
                    best[c.left as usize][c.i].canonical,
                    best[c.right as usize][c.j].canonical
                );
                ((c.cost, canonical), c)
            })
            .collect();
        keyed.sort_by(|a, b| by_cost_then_canonical(&a.0, &b.0));
        keyed.truncate(k);
        let entries = keyed
            .into_iter()
            .map(|((cost, canonical), c)| {
                let node = PlanNode::join(
                    q,
                    c.algorithm,
                    best[c.left as usize][c.i].node.clone(),
                    best[c.right as usize][c.j].node.clone(),
                );
                debug_assert_eq!(node.canonical(), canonical);
                Entry {
                    cost,
                    canonical,
                    node,
                }
            })
            .collect();
        best[s as usize] = entries;
    }

    let result = std::mem::take(&mut best[full as usize]);
    if result.is_empty() {
        return Err(Error::Planning(if config.allow_cross_joins {
            "no plan exists".into()
        } else {
            "no cross-join-free plan exists".into()
        }));
    }
    Ok(result)
}
