//! Weighted network graph, its Laplacian and Moore–Penrose pseudo-inverse.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{BusId, Error, Result};

/// Weighted undirected graph over buses, nodes in case order.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGraph {
    nodes: Vec<BusId>,
    edges: Vec<(usize, usize, f64)>,
}

impl PowerGraph {
    /// Builds a graph, rejecting bad endpoints, zero or non-finite weights,
    /// and disconnected node sets.
    ///
    /// Negative weights are accepted: series capacitors give negative
    /// susceptance. Use [`PowerGraph::is_positive`] where a metric is needed.
    pub fn new(nodes: Vec<BusId>, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let n = nodes.len();
        for &(i, j, w) in &edges {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange { index: i.max(j), n });
            }
            if i == j {
                return Err(Error::Semantic(format!("self loop at node {i}")));
            }
            if !w.is_finite() || w == 0.0 {
                return Err(Error::Semantic(format!("edge {i}-{j} has weight {w}")));
            }
        }
        let g = Self { nodes, edges };
        match g.component_count() {
            c if c > 1 => Err(Error::Disconnected { components: c }),
            _ => Ok(g),
        }
    }

    /// Graph with nodes labelled `0..n`.
    pub fn from_edges(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        Self::new((0..n).collect(), edges)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[BusId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn is_positive(&self) -> bool {
        self.edges.iter().all(|e| e.2 > 0.0)
    }

    /// Same graph with the weight of edge `index` replaced.
    pub fn with_weight(&self, index: usize, weight: f64) -> Result<Self> {
        let mut edges = self.edges.clone();
        edges[index].2 = weight;
        Self::new(self.nodes.clone(), edges)
    }

    fn component_count(&self) -> usize {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for &(i, j, _) in &self.edges {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }
}

/// `L = D - A` with `L_ij = -w_ij`.
pub fn build_laplacian(g: &PowerGraph) -> DMatrix<f64> {
    let n = g.node_count();
    let mut l = DMatrix::zeros(n, n);
    for &(i, j, w) in g.edges() {
        l[(i, j)] -= w;
        l[(j, i)] -= w;
        l[(i, i)] += w;
        l[(j, j)] += w;
    }
    l
}

/// Laplacian together with its pseudo-inverse.
#[derive(Debug, Clone)]
pub struct LaplacianFactor {
    pub laplacian: DMatrix<f64>,
    pub pinv: DMatrix<f64>,
    pub null_tolerance: f64,
}

impl LaplacianFactor {
    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Largest Gershgorin radius bound, `max_i Σ_j |L_ij|`.
fn gershgorin_bound(l: &DMatrix<f64>) -> f64 {
    l.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigenvalues of a symmetric matrix sorted by magnitude.
pub fn eigenvalues_by_magnitude(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    ev
}

/// Count of eigenvalues with magnitude below `tol`.
pub fn null_dimension(l: &DMatrix<f64>, tol: f64) -> usize {
    eigenvalues_by_magnitude(l).iter().filter(|v| v.abs() < tol).count()
}

/// Relative max-norm residuals of the four Moore–Penrose conditions.
pub fn moore_penrose_residuals(l: &DMatrix<f64>, p: &DMatrix<f64>) -> [f64; 4] {
    let lp = l * p;
    let pl = p * l;
    let rel = |num: f64, den: f64| num / den.max(f64::MIN_POSITIVE);
    [
        rel(max_abs(&(&lp * l - l)), max_abs(l)),
        rel(max_abs(&(&pl * p - p)), max_abs(p)),
        rel(max_abs(&(&lp - lp.transpose())), max_abs(&lp).max(1.0)),
        rel(max_abs(&(&pl - pl.transpose())), max_abs(&pl).max(1.0)),
    ]
}

/// Pseudo-inverse of a connected-graph Laplacian through the rank
/// correction `L† = (L + J/n)⁻¹ − J/n`.
///
/// The correction is exact whenever the null space of `L` is exactly the
/// constant vector, which covers signed Laplacians too.
pub fn pseudo_inverse(l: &DMatrix<f64>) -> Result<LaplacianFactor> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "laplacian columns",
            expected: n,
            found: l.ncols(),
        });
    }
    let null_tolerance = 1e-9 * gershgorin_bound(l).max(f64::MIN_POSITIVE);
    if n == 0 {
        return Ok(LaplacianFactor {
            laplacian: l.clone(),
            pinv: l.clone(),
            null_tolerance,
        });
    }
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    let shifted = l + &j;
    let inverse = shifted
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| shifted.lu().try_inverse());
    let rank_error = || {
        let ev = eigenvalues_by_magnitude(l);
        Error::RankDeficient {
            smallest: ev[0],
            second: ev.get(1).copied().unwrap_or(f64::NAN),
        }
    };
    let mut pinv = inverse.ok_or_else(rank_error)? - &j;
    pinv = (&pinv + pinv.transpose()) * 0.5;
    if !pinv.iter().all(|v| v.is_finite()) || moore_penrose_residuals(l, &pinv)[0] > 1e-8 {
        return Err(rank_error());
    }
    Ok(LaplacianFactor {
        laplacian: l.clone(),
        pinv,
        null_tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn triangle() -> PowerGraph {
        PowerGraph::from_edges(3, vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    /// Pseudo-inverse from the full eigendecomposition, inverting the
    /// non-null eigenvalues.
    fn eigen_pinv(l: &DMatrix<f64>) -> DMatrix<f64> {
        let e = SymmetricEigen::new(l.clone());
        let n = l.nrows();
        let mut p = DMatrix::zeros(n, n);
        for k in 0..n {
            let lam = e.eigenvalues[k];
            if lam.abs() > 1e-9 {
                let v = e.eigenvectors.column(k);
                p += (v * v.transpose()) / lam;
            }
        }
        p
    }

    #[test]
    fn single_edge_laplacian() {
        let g = PowerGraph::from_edges(2, vec![(0, 1, 2.0)]).unwrap();
        assert_eq!(
            build_laplacian(&g),
            DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0])
        );
    }

    #[test]
    fn triangle_laplacian() {
        let l = build_laplacian(&triangle());
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l[(i, j)], if i == j { 2.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn empty_edge_set_rejected() {
        assert_eq!(
            PowerGraph::from_edges(3, vec![]).unwrap_err(),
            Error::Disconnected { components: 3 }
        );
    }

    #[test]
    fn bad_edges_rejected() {
        assert!(PowerGraph::from_edges(2, vec![(0, 2, 1.0)]).is_err());
        assert!(PowerGraph::from_edges(2, vec![(1, 1, 1.0)]).is_err());
        assert!(PowerGraph::from_edges(2, vec![(0, 1, 0.0)]).is_err());
        assert!(PowerGraph::from_edges(2, vec![(0, 1, f64::NAN)]).is_err());
    }

    #[test]
    fn two_node_pinv_is_quarter_projector() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let f = pseudo_inverse(&l).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert_relative_eq!(f.pinv, expect, epsilon = 1e-14);
    }

    #[test]
    fn triangle_pinv_matches_eigen_oracle() {
        let l = build_laplacian(&triangle());
        let oracle = eigen_pinv(&l);
        // frozen from the oracle: diagonal 2/9, off-diagonal -1/9
        assert_relative_eq!(oracle[(0, 0)], 2.0 / 9.0, epsilon = 1e-14);
        assert_relative_eq!(oracle[(0, 1)], -1.0 / 9.0, epsilon = 1e-14);
        let f = pseudo_inverse(&l).unwrap();
        assert_relative_eq!(f.pinv, oracle, epsilon = 1e-14);
    }

    #[test]
    fn disconnected_laplacian_names_two_smallest_eigenvalues() {
        let mut l = DMatrix::zeros(4, 4);
        for (i, j) in [(0, 1), (2, 3)] {
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
            l[(i, j)] -= 1.0;
            l[(j, i)] -= 1.0;
        }
        match pseudo_inverse(&l).unwrap_err() {
            Error::RankDeficient { smallest, second } => {
                assert!(smallest.abs() < 1e-12 && second.abs() < 1e-12);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn signed_laplacian_still_inverts() {
        // series-capacitor style negative edge inside a cycle
        let g = PowerGraph::from_edges(
            4,
            vec![(0, 1, 5.0), (1, 2, -1.0), (2, 3, 4.0), (3, 0, 3.0), (0, 2, 2.0)],
        )
        .unwrap();
        let l = build_laplacian(&g);
        let f = pseudo_inverse(&l).unwrap();
        assert!(moore_penrose_residuals(&l, &f.pinv).iter().all(|r| *r < 1e-10));
        assert_relative_eq!(f.pinv, eigen_pinv(&l), epsilon = 1e-12);
    }

    #[test]
    fn scale_covariance() {
        let g = PowerGraph::from_edges(4, vec![(0, 1, 0.3), (1, 2, 2.0), (2, 3, 1.5), (0, 3, 0.7)]).unwrap();
        let l = build_laplacian(&g);
        let p = pseudo_inverse(&l).unwrap().pinv;
        let p3 = pseudo_inverse(&(&l * 3.0)).unwrap().pinv;
        for (a, b) in p3.iter().zip(p.iter()) {
            assert!((a - b / 3.0).abs() <= 1e-9 * b.abs().max(1e-12));
        }
    }
}
