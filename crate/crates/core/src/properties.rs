//! Exhaustive checks of the set-function properties the greedy search
//! relies on, plus a seeded random-graph generator for property sweeps.
//!
//! Every check enumerates subsets as bitmasks, so the node count is capped
//! at [`MAX_NODES`].

use rand::Rng;

use crate::graph::PowerGraph;
use crate::resistance::{set_resistance, ResistanceMatrix};
use crate::{Error, Result};

pub const MAX_NODES: usize = 16;

/// `R(S)` for every nonempty mask `S`; index 0 holds NaN.
pub fn set_values(rm: &ResistanceMatrix) -> Result<Vec<f64>> {
    let n = rm.n();
    if n > MAX_NODES {
        return Err(Error::Config(format!(
            "subset enumeration limited to {MAX_NODES} nodes, got {n}"
        )));
    }
    let mut out = vec![f64::NAN; 1 << n];
    let mut members = Vec::with_capacity(n);
    for (mask, slot) in out.iter_mut().enumerate().skip(1) {
        members.clear();
        members.extend((0..n).filter(|i| mask >> i & 1 == 1));
        *slot = set_resistance(rm, &members)?;
    }
    Ok(out)
}

/// A failed inequality; `excess` is how far it is violated beyond the slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub s: usize,
    pub t: usize,
    pub u: Option<usize>,
    pub excess: f64,
}

/// Pairs `S ⊆ T` (both nonempty) with `R(T) > R(S) + slack`.
pub fn monotonicity_violations(values: &[f64], slack: f64) -> Vec<Violation> {
    let full = values.len() - 1;
    let mut out = Vec::new();
    for t in 1..=full {
        // walk all nonempty submasks of t
        let mut s = t;
        while s > 0 {
            let excess = values[t] - values[s] - slack;
            if excess > 0.0 {
                out.push(Violation { s, t, u: None, excess });
            }
            s = (s - 1) & t;
        }
    }
    out
}

/// Pairs with nonempty `S ∩ T` where
/// `R(S ∩ T) + R(S ∪ T) < R(S) + R(T) − slack`.
pub fn lattice_violations(values: &[f64], slack: f64) -> Vec<Violation> {
    let full = values.len() - 1;
    let mut out = Vec::new();
    for s in 1..=full {
        for t in s..=full {
            let meet = s & t;
            if meet == 0 {
                continue;
            }
            let excess = values[s] + values[t] - values[meet] - values[s | t] - slack;
            if excess > 0.0 {
                out.push(Violation { s, t, u: None, excess });
            }
        }
    }
    out
}

/// Triples `S ⊆ T`, `u ∉ T`, `S` nonempty, where the marginal decrease
/// from adding `u` to `S` is smaller than adding it to `T`.
pub fn marginal_violations(values: &[f64], slack: f64) -> Vec<Violation> {
    let full = values.len() - 1;
    let n = full.count_ones() as usize;
    let mut out = Vec::new();
    for t in 1..=full {
        let mut s = t;
        while s > 0 {
            for u in (0..n).filter(|u| t >> u & 1 == 0) {
                let bit = 1 << u;
                let gain_s = values[s] - values[s | bit];
                let gain_t = values[t] - values[t | bit];
                let excess = gain_t - gain_s - slack;
                if excess > 0.0 {
                    out.push(Violation {
                        s,
                        t,
                        u: Some(u),
                        excess,
                    });
                }
            }
            s = (s - 1) & t;
        }
    }
    out
}

/// Connected graph on `n` nodes: a random spanning tree plus each remaining
/// pair with probability `extra`, weights uniform in `[0.1, 10]`.
pub fn random_connected_graph<R: Rng>(n: usize, extra: f64, rng: &mut R) -> PowerGraph {
    let mut edges = Vec::new();
    let mut adjacent = vec![vec![false; n]; n];
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v, rng.random_range(0.1..=10.0)));
        adjacent[u][v] = true;
    }
    for i in 0..n {
        for j in i + 1..n {
            if !adjacent[i][j] && rng.random_bool(extra) {
                edges.push((i, j, rng.random_range(0.1..=10.0)));
            }
        }
    }
    PowerGraph::from_edges(n, edges).expect("spanning tree keeps the graph connected")
}
