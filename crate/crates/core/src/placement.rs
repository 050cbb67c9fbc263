//! Choosing `k` IBR buses that minimise the set resistance `R(I)`.
//!
//! [`greedy_place`] adds, one at a time, the node whose inclusion gives
//! the smallest `R(I ∪ {j})`. [`exhaustive_place`] scores every k-subset
//! and serves as the optimality oracle.

use std::cmp::Ordering;
use std::fmt::{self, Write};
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::resistance::{set_resistance, ResistanceMatrix};
use crate::{BusId, Error, Result};

/// Default cap on the number of k-subsets the exhaustive search may score.
pub const DEFAULT_BUDGET: u128 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Greedy,
    Exhaustive,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Greedy => "greedy",
            Method::Exhaustive => "exhaustive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementResult {
    /// Matrix indices in selection order.
    pub selected: Vec<usize>,
    /// Bus ids of `selected`, same order.
    pub buses: Vec<BusId>,
    /// `R` of each prefix of `selected`.
    pub objective_trace: Vec<f64>,
    pub elapsed: f64,
    pub method: Method,
}

impl PlacementResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("k >= 1")
    }

    /// 1-based positions in case order, i.e. MATPOWER's internal numbering.
    pub fn internal_numbers(&self) -> Vec<usize> {
        self.selected.iter().map(|i| i + 1).collect()
    }

    pub fn sorted_buses(&self) -> Vec<BusId> {
        let mut b = self.buses.clone();
        b.sort_unstable();
        b
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        Err(Error::InvalidK { k, n })
    } else {
        Ok(())
    }
}

fn prefix_trace(rm: &ResistanceMatrix, selected: &[usize]) -> Vec<f64> {
    (1..=selected.len())
        .map(|m| set_resistance(rm, &selected[..m]).expect("valid prefix"))
        .collect()
}

/// Relative gap below which two greedy candidates count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Greedy selection; ties (within [`TIE_TOLERANCE`]) go to the lowest bus id.
pub fn greedy_place(rm: &ResistanceMatrix, k: usize) -> Result<PlacementResult> {
    let n = rm.n();
    check_k(k, n)?;
    let start = Instant::now();
    let labels = rm.labels();
    let mut nearest = vec![f64::INFINITY; n];
    let mut member = vec![false; n];
    let mut selected = Vec::with_capacity(k);
    let mut trace = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for c in 0..n {
            if member[c] {
                continue;
            }
            let row = rm.row(c);
            let mut total = 0.0;
            for j in 0..n {
                if !member[j] && j != c {
                    total += nearest[j].min(row[j]);
                }
            }
            let better = match best {
                None => true,
                Some((v, b)) => {
                    let tol = TIE_TOLERANCE * v.abs().max(total.abs());
                    total < v - tol || (total <= v + tol && labels[c] < labels[b])
                }
            };
            if better {
                best = Some((total, c));
            }
        }
        let (value, pick) = best.expect("k <= n leaves a candidate");
        member[pick] = true;
        for (m, r) in nearest.iter_mut().zip(rm.row(pick)) {
            *m = m.min(*r);
        }
        selected.push(pick);
        trace.push(value);
    }
    Ok(PlacementResult {
        buses: selected.iter().map(|&i| labels[i]).collect(),
        selected,
        objective_trace: trace,
        elapsed: start.elapsed().as_secs_f64(),
        method: Method::Greedy,
    })
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

/// A scored subset: indices in ascending order plus their sorted bus ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedSet {
    pub indices: Vec<usize>,
    pub buses: Vec<BusId>,
    pub objective: f64,
}

fn rank_order(a: &RankedSet, b: &RankedSet) -> Ordering {
    a.objective.total_cmp(&b.objective).then_with(|| a.buses.cmp(&b.buses))
}

/// Keeps the best `cap` sets under [`rank_order`].
struct TopSets {
    cap: usize,
    sets: Vec<RankedSet>,
}

impl TopSets {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            sets: Vec::with_capacity(cap + 1),
        }
    }

    /// Cheap pre-check before building a candidate.
    fn admits(&self, objective: f64) -> bool {
        self.sets.len() < self.cap || objective <= self.sets.last().map_or(f64::INFINITY, |s| s.objective)
    }

    fn offer(&mut self, candidate: RankedSet) {
        let pos = self
            .sets
            .partition_point(|s| rank_order(s, &candidate) == Ordering::Less);
        if pos < self.cap {
            self.sets.insert(pos, candidate);
            self.sets.truncate(self.cap);
        }
    }

    fn merge(mut self, other: TopSets) -> TopSets {
        for s in other.sets {
            if self.admits(s.objective) {
                self.offer(s);
            }
        }
        self
    }
}

struct Search<'a> {
    rm: &'a ResistanceMatrix,
    k: usize,
    member: Vec<bool>,
    chosen: Vec<usize>,
    /// `nearest[d]` is the elementwise minimum of the first `d` chosen rows.
    nearest: Vec<Vec<f64>>,
    top: TopSets,
}

impl Search<'_> {
    fn descend(&mut self, start: usize) {
        let n = self.rm.n();
        let depth = self.chosen.len();
        let remaining = self.k - depth;
        for c in start..=n - remaining {
            if remaining == 1 {
                self.score_leaf(c);
                continue;
            }
            let row = self.rm.row(c);
            let (lower, upper) = self.nearest.split_at_mut(depth + 1);
            for ((next, cur), r) in upper[0].iter_mut().zip(&lower[depth]).zip(row) {
                *next = cur.min(*r);
            }
            self.member[c] = true;
            self.chosen.push(c);
            self.descend(c + 1);
            self.chosen.pop();
            self.member[c] = false;
        }
    }

    fn score_leaf(&mut self, last: usize) {
        let n = self.rm.n();
        let row = self.rm.row(last);
        let prefix = &self.nearest[self.chosen.len()];
        let mut total = 0.0;
        for j in 0..n {
            if !self.member[j] && j != last {
                total += prefix[j].min(row[j]);
            }
        }
        if self.top.admits(total) {
            let mut indices = self.chosen.clone();
            indices.push(last);
            let labels = self.rm.labels();
            let mut buses: Vec<BusId> = indices.iter().map(|&i| labels[i]).collect();
            buses.sort_unstable();
            self.top.offer(RankedSet {
                indices,
                buses,
                objective: total,
            });
        }
    }
}

fn subtree(rm: &ResistanceMatrix, k: usize, first: usize, keep: usize) -> TopSets {
    let n = rm.n();
    let mut s = Search {
        rm,
        k,
        member: vec![false; n],
        chosen: Vec::with_capacity(k),
        nearest: vec![vec![f64::INFINITY; n]; k],
        top: TopSets::new(keep),
    };
    if k == 1 {
        s.score_leaf(first);
        return s.top;
    }
    s.nearest[1].copy_from_slice(rm.row(first));
    s.member[first] = true;
    s.chosen.push(first);
    s.descend(first + 1);
    s.top
}

/// The `keep` best k-subsets in ascending objective, ties broken by the
/// lexicographically smallest sorted bus-id list.
///
/// The search is split across threads by first element; the merge uses the
/// same total order, so the result does not depend on scheduling.
pub fn exhaustive_ranked(rm: &ResistanceMatrix, k: usize, keep: usize, budget: u128) -> Result<Vec<RankedSet>> {
    let n = rm.n();
    check_k(k, n)?;
    let combinations = binomial(n, k);
    if combinations > budget {
        return Err(Error::BudgetExceeded {
            n,
            k,
            combinations,
            budget,
        });
    }
    let keep = keep.max(1);
    let firsts = 0..=n - k;
    let top = if combinations < 100_000 {
        firsts
            .map(|f| subtree(rm, k, f, keep))
            .fold(TopSets::new(keep), TopSets::merge)
    } else {
        firsts
            .into_par_iter()
            .map(|f| subtree(rm, k, f, keep))
            .reduce(|| TopSets::new(keep), TopSets::merge)
    };
    Ok(top.sets)
}

/// Global minimiser of `R` over all k-subsets.
pub fn exhaustive_place(rm: &ResistanceMatrix, k: usize, budget: u128) -> Result<PlacementResult> {
    let start = Instant::now();
    let best = exhaustive_ranked(rm, k, 1, budget)?
        .into_iter()
        .next()
        .expect("at least one subset");
    let elapsed = start.elapsed().as_secs_f64();
    Ok(PlacementResult {
        objective_trace: prefix_trace(rm, &best.indices),
        buses: best.indices.iter().map(|&i| rm.labels()[i]).collect(),
        selected: best.indices,
        elapsed,
        method: Method::Exhaustive,
    })
}

/// `k` distinct indices drawn from a seeded generator, skipping `exclude`.
pub fn random_placement(n: usize, k: usize, exclude: &[usize], seed: u64) -> Result<Vec<usize>> {
    let pool: Vec<usize> = (0..n).filter(|i| !exclude.contains(i)).collect();
    if k == 0 || k > pool.len() {
        return Err(Error::InvalidK { k, n: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub k: usize,
    pub greedy: PlacementResult,
    pub exhaustive: PlacementResult,
    /// `(R_greedy − R_opt) / |R_opt|`; zero when both objectives are zero.
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

fn relative_gap(greedy: f64, opt: f64) -> f64 {
    if greedy == opt {
        0.0
    } else {
        (greedy - opt) / opt.abs()
    }
}

/// Greedy against exhaustive for each `k`, ascending.
pub fn compare_methods(rm: &ResistanceMatrix, ks: &[usize], budget: u128) -> Result<ComparisonReport> {
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("k range must be strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let exhaustive = exhaustive_place(rm, k, budget)?;
        let greedy = greedy_place(rm, k)?;
        let gap = relative_gap(greedy.objective(), exhaustive.objective());
        rows.push(ComparisonRow {
            k,
            greedy,
            exhaustive,
            gap,
        });
    }
    Ok(ComparisonReport { rows })
}

fn join<T: ToString>(v: &[T], sep: &str) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

/// Which label the reports print for a bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Numbering {
    /// Bus ids from the case file.
    #[default]
    External,
    /// 1-based position in the case's bus table.
    Internal,
}

impl Numbering {
    pub fn labels(self, r: &PlacementResult) -> Vec<usize> {
        match self {
            Numbering::External => r.buses.clone(),
            Numbering::Internal => r.internal_numbers(),
        }
    }
}

impl ComparisonReport {
    /// Aligned text table, one block per method, mirroring the usual
    /// "bus / time" layout.
    pub fn render_table(&self, numbering: Numbering) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>3}  {:<11} {:<28} {:>14} {:>10} {:>9}",
            "k", "method", "buses", "objective", "time (s)", "gap"
        );
        for row in &self.rows {
            for (r, gap) in [(&row.exhaustive, None), (&row.greedy, Some(row.gap))] {
                let _ = writeln!(
                    s,
                    "{:>3}  {:<11} {:<28} {:>14.6} {:>10.2} {:>9}",
                    row.k,
                    r.method.to_string(),
                    join(&numbering.labels(r), ", "),
                    r.objective(),
                    r.elapsed,
                    gap.map_or(String::new(), |g| format!("{g:.3e}"))
                );
            }
        }
        s
    }

    /// CSV with columns `k,method,buses,objective,seconds`; buses are
    /// space-separated in selection order.
    pub fn to_csv(&self, numbering: Numbering) -> String {
        let mut s = String::from("k,method,buses,objective,seconds\n");
        for row in &self.rows {
            for r in [&row.exhaustive, &row.greedy] {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{:.2}",
                    row.k,
                    r.method,
                    join(&numbering.labels(r), " "),
                    r.objective(),
                    r.elapsed
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, pseudo_inverse, PowerGraph};
    use crate::resistance::resistance_matrix;

    fn rm_of(n: usize, edges: Vec<(usize, usize, f64)>) -> ResistanceMatrix {
        let g = PowerGraph::from_edges(n, edges).unwrap();
        resistance_matrix(&pseudo_inverse(&build_laplacian(&g)).unwrap())
    }

    fn star() -> ResistanceMatrix {
        rm_of(5, (1..5).map(|i| (0, i, 1.0)).collect())
    }

    #[test]
    fn star_hub_first() {
        let r = greedy_place(&star(), 1).unwrap();
        assert_eq!(r.selected, vec![0]);
        let e = exhaustive_place(&star(), 1, DEFAULT_BUDGET).unwrap();
        assert_eq!(e.selected, vec![0]);
    }

    #[test]
    fn k_out_of_range() {
        assert_eq!(greedy_place(&star(), 0).unwrap_err(), Error::InvalidK { k: 0, n: 5 });
        assert!(greedy_place(&star(), 6).is_err());
        assert!(exhaustive_place(&star(), 6, DEFAULT_BUDGET).is_err());
    }

    #[test]
    fn k_equals_n_selects_everything() {
        let e = exhaustive_place(&star(), 5, DEFAULT_BUDGET).unwrap();
        assert_eq!(e.selected, vec![0, 1, 2, 3, 4]);
        assert_eq!(e.objective(), 0.0);
        let g = greedy_place(&star(), 5).unwrap();
        assert_eq!(g.objective(), 0.0);
    }

    #[test]
    fn ties_break_to_lowest_id() {
        // symmetric leaves: after the hub every leaf ties
        let g = greedy_place(&star(), 2).unwrap();
        assert_eq!(g.selected, vec![0, 1]);
        // exhaustive ranks exactly, so rounding decides among the leaves
        let ranked = exhaustive_ranked(&star(), 2, 4, DEFAULT_BUDGET).unwrap();
        assert!(ranked.iter().all(|r| r.indices[0] == 0));
        assert!((ranked[3].objective - ranked[0].objective).abs() <= 1e-12 * ranked[0].objective);
        assert!(ranked.windows(2).all(|w| w[0].objective <= w[1].objective));
    }

    #[test]
    fn trace_matches_prefix_objectives_exactly() {
        let rm = rm_of(
            6,
            vec![
                (0, 1, 1.0),
                (1, 2, 2.0),
                (2, 3, 0.5),
                (3, 4, 1.5),
                (4, 5, 3.0),
                (0, 5, 0.7),
                (1, 4, 0.2),
            ],
        );
        let g = greedy_place(&rm, 4).unwrap();
        for m in 1..=4 {
            assert_eq!(g.objective_trace[m - 1], set_resistance(&rm, &g.selected[..m]).unwrap());
        }
        assert!(g.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn budget_is_enforced() {
        let err = exhaustive_place(&star(), 2, 5).unwrap_err();
        assert_eq!(
            err,
            Error::BudgetExceeded {
                n: 5,
                k: 2,
                combinations: 10,
                budget: 5
            }
        );
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(39, 4), 82_251);
        assert_eq!(binomial(300, 4), 330_791_175);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn random_placement_is_seeded_and_excludes() {
        let a = random_placement(39, 2, &[5, 15], 7).unwrap();
        let b = random_placement(39, 2, &[5, 15], 7).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|i| *i != 5 && *i != 15));
        assert!(random_placement(3, 2, &[0, 1], 1).is_err());
    }

    #[test]
    fn descending_k_range_rejected() {
        assert!(matches!(
            compare_methods(&star(), &[2, 1], DEFAULT_BUDGET),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn report_csv_schema() {
        let rep = compare_methods(&star(), &[1, 2], DEFAULT_BUDGET).unwrap();
        let csv = rep.to_csv(Numbering::External);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k,method,buses,objective,seconds");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("1,exhaustive,0,"));
        assert!(rep.render_table(Numbering::Internal).contains("greedy"));
    }
}
