//! Effective-resistance distances and the set objective `R(I)`.

use nalgebra::DMatrix;

use crate::graph::{build_laplacian, pseudo_inverse, LaplacianFactor, PowerGraph};
use crate::{BusId, Error, Result};

fn check_index(i: usize, n: usize) -> Result<()> {
    if i < n {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { index: i, n })
    }
}

/// `R(i, j) = L†_ii − 2 L†_ij + L†_jj`.
pub fn pairwise_resistance(f: &LaplacianFactor, i: usize, j: usize) -> Result<f64> {
    let n = f.n();
    check_index(i, n)?;
    check_index(j, n)?;
    if i == j {
        return Ok(0.0);
    }
    let p = &f.pinv;
    Ok(p[(i, i)] - 2.0 * p[(i, j)] + p[(j, j)])
}

/// `R(i) = n L†_ii + Tr(L†)`, the summed distance from `i` to every node.
pub fn node_resistance(f: &LaplacianFactor, i: usize) -> Result<f64> {
    let n = f.n();
    check_index(i, n)?;
    Ok(n as f64 * f.pinv[(i, i)] + f.pinv.trace())
}

/// Dense matrix of resistance distances, labelled with bus ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ResistanceMatrix {
    r: DMatrix<f64>,
    labels: Vec<BusId>,
}

impl ResistanceMatrix {
    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.r[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn labels(&self) -> &[BusId] {
        &self.labels
    }

    /// Attaches bus ids; the default labels are `0..n`.
    pub fn with_labels(mut self, labels: Vec<BusId>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "resistance labels",
                expected: self.n(),
                found: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    /// Position of a bus id in the matrix.
    pub fn index_of(&self, bus: BusId) -> Option<usize> {
        self.labels.iter().position(|&b| b == bus)
    }

    /// Row `i` as a contiguous slice (the matrix is symmetric, so column
    /// storage doubles as row storage).
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.r.as_slice()[i * n..(i + 1) * n]
    }

    /// Renders the matrix as CSV with a header of bus ids.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bus");
        for l in &self.labels {
            s.push_str(&format!(",{l}"));
        }
        s.push('\n');
        for i in 0..self.n() {
            s.push_str(&self.labels[i].to_string());
            for j in 0..self.n() {
                s.push_str(&format!(",{}", self.r[(i, j)]));
            }
            s.push('\n');
        }
        s
    }
}

pub fn resistance_matrix(f: &LaplacianFactor) -> ResistanceMatrix {
    let n = f.n();
    let p = &f.pinv;
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = p[(i, i)] - 2.0 * p[(i, j)] + p[(j, j)];
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    ResistanceMatrix {
        r,
        labels: (0..n).collect(),
    }
}

/// Resistance matrix of `g`, labelled with its bus ids.
pub fn graph_resistance(g: &PowerGraph) -> Result<ResistanceMatrix> {
    let f = pseudo_inverse(&build_laplacian(g))?;
    resistance_matrix(&f).with_labels(g.nodes().to_vec())
}

/// `R(I) = Σ_{j ∉ I} min_{i ∈ I} R(i, j)` over matrix indices.
///
/// Members of `I` are skipped explicitly rather than through `R(j, j) = 0`,
/// which keeps the value right when distances can be negative.
pub fn set_resistance(rm: &ResistanceMatrix, set: &[usize]) -> Result<f64> {
    let n = rm.n();
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut member = vec![false; n];
    for &i in set {
        check_index(i, n)?;
        member[i] = true;
    }
    let mut total = 0.0;
    for j in 0..n {
        if member[j] {
            continue;
        }
        let m = set.iter().map(|&i| rm.get(i, j)).fold(f64::INFINITY, f64::min);
        total += m;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, pseudo_inverse, PowerGraph};
    use approx::assert_relative_eq;

    fn factor(n: usize, edges: Vec<(usize, usize, f64)>) -> LaplacianFactor {
        let g = PowerGraph::from_edges(n, edges).unwrap();
        pseudo_inverse(&build_laplacian(&g)).unwrap()
    }

    fn triangle() -> LaplacianFactor {
        factor(3, vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
    }

    fn path() -> LaplacianFactor {
        factor(3, vec![(0, 1, 1.0), (1, 2, 1.0)])
    }

    #[test]
    fn single_edge_resistance_is_inverse_weight() {
        let f = factor(2, vec![(0, 1, 2.0)]);
        assert_relative_eq!(pairwise_resistance(&f, 0, 1).unwrap(), 0.5, epsilon = 1e-14);
        assert_eq!(pairwise_resistance(&f, 1, 1).unwrap(), 0.0);
        let rm = resistance_matrix(&f);
        assert_relative_eq!(rm.get(0, 1), 0.5, epsilon = 1e-14);
        assert_eq!(rm.get(0, 0), 0.0);
    }

    #[test]
    fn triangle_pairs_match_series_parallel() {
        // one unit edge in parallel with two in series: 1*2/(1+2)
        let oracle = 1.0 * 2.0 / (1.0 + 2.0);
        let f = triangle();
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            assert_relative_eq!(pairwise_resistance(&f, i, j).unwrap(), oracle, epsilon = 1e-14);
        }
    }

    #[test]
    fn path_node_resistance() {
        let f = path();
        assert_relative_eq!(node_resistance(&f, 1).unwrap(), 2.0, epsilon = 1e-13);
        assert_relative_eq!(node_resistance(&f, 0).unwrap(), 3.0, epsilon = 1e-13);
    }

    #[test]
    fn out_of_range_index() {
        let f = path();
        assert_eq!(
            pairwise_resistance(&f, 0, 3).unwrap_err(),
            Error::IndexOutOfRange { index: 3, n: 3 }
        );
        assert!(node_resistance(&f, 7).is_err());
    }

    #[test]
    fn set_resistance_edge_cases() {
        let f = triangle();
        let rm = resistance_matrix(&f);
        assert_eq!(set_resistance(&rm, &[]).unwrap_err(), Error::EmptySet);
        assert_eq!(set_resistance(&rm, &[0, 1, 2]).unwrap(), 0.0);
        assert_relative_eq!(set_resistance(&rm, &[0, 2]).unwrap(), 2.0 / 3.0, epsilon = 1e-14);
        for i in 0..3 {
            assert_relative_eq!(
                set_resistance(&rm, &[i]).unwrap(),
                node_resistance(&f, i).unwrap(),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let rm = resistance_matrix(&path()).with_labels(vec![10, 20, 30]).unwrap();
        let csv = rm.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "bus,10,20,30");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("20,"));
    }
}
