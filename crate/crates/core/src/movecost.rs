//! Exact transfer costs.
//!
//! The cost of moving an observation splits into what its current cluster
//! saves by losing it and what the target cluster pays to absorb it. Both are
//! read off the counts at the observation's own categories, one unit per
//! coordinate, so the sum over coordinates is the exact objective change.

use crate::state::ClusterState;

/// Result of a join-cost evaluation with an early-abort bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinCost {
    Cost(u32),
    /// The partial sum exceeded the bound before all coordinates were seen.
    Aborted,
}

impl JoinCost {
    pub fn cost(self) -> Option<u32> {
        match self {
            JoinCost::Cost(c) => Some(c),
            JoinCost::Aborted => None,
        }
    }
}

/// Best available move for one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveEvaluation {
    pub obs: usize,
    pub source: usize,
    pub membership_cost: u32,
    pub best_target: Option<usize>,
    pub best_join_cost: Option<u32>,
    /// `best_join_cost - membership_cost` when a target was found.
    pub delta: Option<i64>,
}

/// Decrease in the objective if observation `i` left its cluster.
pub fn membership_cost(st: &ClusterState, i: usize) -> u32 {
    let k = st.cluster_of(i);
    let (mode, minor) = (st.mode(k), st.minor(k));
    let mut cost = 0;
    for (l, &x) in st.data().row(i).iter().enumerate() {
        if x != mode[l] || st.count(k, l, x) == st.count(k, l, minor[l]) {
            cost += 1;
        }
    }
    cost
}

/// Increase in the objective if observation `i` joined cluster `r`.
///
/// With `bound = Some(b)` the scan stops as soon as the running sum exceeds `b`;
/// a sum equal to `b` is completed.
pub fn join_cost(st: &ClusterState, i: usize, r: usize, bound: Option<u32>) -> JoinCost {
    let mode = st.mode(r);
    let limit = bound.unwrap_or(u32::MAX);
    let mut cost = 0;
    for (l, &x) in st.data().row(i).iter().enumerate() {
        if x != mode[l] && st.count(r, l, mode[l]) > st.count(r, l, x) {
            cost += 1;
            if cost > limit {
                return JoinCost::Aborted;
            }
        }
    }
    JoinCost::Cost(cost)
}

/// Exact objective change of moving `i` into `r`.
pub fn move_delta(st: &ClusterState, i: usize, r: usize) -> i64 {
    debug_assert_ne!(st.cluster_of(i), r);
    let join = join_cost(st, i, r, None).cost().expect("unbounded join cost");
    join as i64 - membership_cost(st, i) as i64
}

/// Cheapest target among `targets` whose join cost is at most `bound`.
///
/// Equal join costs resolve to the lowest cluster index, whatever the visiting order.
/// The source cluster is skipped if it appears in `targets`.
pub fn best_move(
    st: &ClusterState,
    i: usize,
    targets: impl IntoIterator<Item = usize>,
    bound: Option<u32>,
) -> MoveEvaluation {
    let source = st.cluster_of(i);
    let membership = membership_cost(st, i);
    let mut limit = bound;
    let mut best: Option<(u32, usize)> = None;
    for r in targets {
        if r == source {
            continue;
        }
        if let JoinCost::Cost(c) = join_cost(st, i, r, limit) {
            let better = match best {
                None => true,
                Some((bc, br)) => c < bc || (c == bc && r < br),
            };
            if better {
                best = Some((c, r));
                limit = Some(c);
            }
        }
    }
    MoveEvaluation {
        obs: i,
        source,
        membership_cost: membership,
        best_target: best.map(|b| b.1),
        best_join_cost: best.map(|b| b.0),
        delta: best.map(|b| b.0 as i64 - membership as i64),
    }
}
