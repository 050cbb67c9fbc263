//! Network algebra: bus admittance matrix, Kron reduction and the AC/DC
//! power injection formulas.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};

use crate::case_io::CaseFile;
use crate::{Error, Result};

/// Bus admittance matrix in case bus order, with line charging, taps,
/// phase shifters and bus shunts.
pub fn build_ybus(case: &CaseFile) -> DMatrix<Complex<f64>> {
    let n = case.buses.len();
    let index = case.bus_index();
    let mut y = DMatrix::from_element(n, n, Complex::new(0.0, 0.0));
    for br in case.branches.iter().filter(|b| b.in_service) {
        let f = index[&br.from_bus];
        let t = index[&br.to_bus];
        let ys = br.series_admittance();
        let charging = Complex::new(0.0, br.charging_pu / 2.0);
        let tap = Complex::from_polar(br.effective_tap(), br.shift_deg.to_radians());
        y[(f, f)] += (ys + charging) / tap.norm_sqr();
        y[(t, t)] += ys + charging;
        y[(f, t)] -= ys / tap.conj();
        y[(t, f)] -= ys / tap;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        y[(i, i)] += Complex::new(bus.g_shunt, bus.b_shunt);
    }
    y
}

/// Schur complement of `y` onto the `keep` nodes, in the order given.
pub fn kron_reduce<T: ComplexField>(y: &DMatrix<T>, keep: &[usize]) -> Result<DMatrix<T>> {
    let n = y.nrows();
    if keep.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut kept = vec![false; n];
    for &k in keep {
        if k >= n {
            return Err(Error::IndexOutOfRange { index: k, n });
        }
        kept[k] = true;
    }
    let drop: Vec<usize> = (0..n).filter(|&i| !kept[i]).collect();
    let ykk = y.select_rows(keep).select_columns(keep);
    if drop.is_empty() {
        return Ok(ykk);
    }
    let yke = y.select_rows(keep).select_columns(&drop);
    let yek = y.select_rows(&drop).select_columns(keep);
    let yee = y.select_rows(&drop).select_columns(&drop);
    let solved = yee.lu().solve(&yek).ok_or(Error::SingularBlock)?;
    if solved.iter().any(|v| !v.clone().is_finite()) {
        return Err(Error::SingularBlock);
    }
    Ok(ykk - yke * solved)
}

/// Active power injected at each node,
/// `P_i = Σ_j E_i E_j (G_ij cos(δ_i − δ_j) + B_ij sin(δ_i − δ_j))`,
/// with `G + jB` an admittance matrix (diagonal included).
pub fn ac_injection(delta: &DVector<f64>, emf: &DVector<f64>, y: &DMatrix<Complex<f64>>) -> DVector<f64> {
    let n = delta.len();
    DVector::from_fn(n, |i, _| {
        let mut p = 0.0;
        for j in 0..n {
            let (s, c) = (delta[i] - delta[j]).sin_cos();
            let yij = y[(i, j)];
            p += emf[j] * (yij.re * c + yij.im * s);
        }
        emf[i] * p
    })
}

/// `∂P_i/∂δ_j` of [`ac_injection`].
pub fn ac_jacobian(delta: &DVector<f64>, emf: &DVector<f64>, y: &DMatrix<Complex<f64>>) -> DMatrix<f64> {
    let n = delta.len();
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (s, c) = (delta[i] - delta[j]).sin_cos();
            let yij = y[(i, j)];
            let v = emf[i] * emf[j] * (yij.re * s - yij.im * c);
            jac[(i, j)] = v;
            jac[(i, i)] -= v;
        }
    }
    jac
}

/// DC power flow `p = B θ`.
pub fn dc_flow(theta: &DVector<f64>, b: &DMatrix<f64>) -> Result<DVector<f64>> {
    if b.nrows() != theta.len() || b.ncols() != theta.len() {
        return Err(Error::DimensionMismatch {
            what: "susceptance matrix",
            expected: theta.len(),
            found: b.nrows(),
        });
    }
    Ok(b * theta)
}

/// Small-signal coupling matrix of a lossless-linearised network:
/// off-diagonal `−E_i E_j B_ij`, rows summing to zero. It is the `B` of
/// the DC flow scaled by the emfs.
pub fn synchronizing_matrix(emf: &DVector<f64>, y: &DMatrix<Complex<f64>>) -> DMatrix<f64> {
    let n = emf.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = -emf[i] * emf[j] * y[(i, j)].im;
                k[(i, j)] = v;
                k[(i, i)] -= v;
            }
        }
    }
    k
}

/// Adds a branch of admittance `y_branch` between nodes `a` and `b`.
pub(crate) fn stamp(y: &mut DMatrix<Complex<f64>>, a: usize, b: usize, y_branch: Complex<f64>) {
    y[(a, a)] += y_branch;
    y[(b, b)] += y_branch;
    y[(a, b)] -= y_branch;
    y[(b, a)] -= y_branch;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(b: f64) -> DMatrix<Complex<f64>> {
        // reactance 1/b, so the Ybus off-diagonal is +jb
        let mut y = DMatrix::from_element(2, 2, Complex::new(0.0, 0.0));
        stamp(&mut y, 0, 1, Complex::new(0.0, -b));
        y
    }

    #[test]
    fn flat_angles_inject_nothing() {
        let p = ac_injection(&DVector::zeros(2), &DVector::from_element(2, 1.0), &line(3.0));
        assert_eq!(p, DVector::zeros(2));
    }

    #[test]
    fn quarter_turn_transfers_unit_power() {
        let d = DVector::from_vec(vec![std::f64::consts::FRAC_PI_2, 0.0]);
        let p = ac_injection(&d, &DVector::from_element(2, 1.0), &line(1.0));
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(p[1], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn dc_two_bus() {
        let b = DMatrix::from_row_slice(2, 2, &[5.0, -5.0, -5.0, 5.0]);
        let p = dc_flow(&DVector::from_vec(vec![0.1, 0.0]), &b).unwrap();
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(p[1], -0.5, epsilon = 1e-15);
        assert_eq!(dc_flow(&DVector::zeros(2), &b).unwrap(), DVector::zeros(2));
        assert!(dc_flow(&DVector::zeros(3), &b).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut y = line(2.0);
        stamp(&mut y, 0, 1, Complex::new(0.3, 0.0));
        let d = DVector::from_vec(vec![0.3, -0.2]);
        let e = DVector::from_vec(vec![1.05, 0.98]);
        let jac = ac_jacobian(&d, &e, &y);
        for j in 0..2 {
            let mut dp = d.clone();
            dp[j] += 1e-7;
            let fd = (ac_injection(&dp, &e, &y) - ac_injection(&d, &e, &y)) / 1e-7;
            for i in 0..2 {
                assert_relative_eq!(jac[(i, j)], fd[i], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn chain_reduces_to_series_edge() {
        let mut y = DMatrix::<f64>::zeros(3, 3);
        for (a, b) in [(0, 1), (1, 2)] {
            y[(a, a)] += 1.0;
            y[(b, b)] += 1.0;
            y[(a, b)] -= 1.0;
            y[(b, a)] -= 1.0;
        }
        let r = kron_reduce(&y, &[0, 2]).unwrap();
        assert_relative_eq!(r[(0, 1)], -0.5, epsilon = 1e-15);
        assert_relative_eq!(r[(0, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(kron_reduce(&y, &[0, 1, 2]).unwrap(), y);
        assert_eq!(kron_reduce(&y, &[]).unwrap_err(), Error::EmptySet);
    }

    #[test]
    fn singular_interior_block_is_reported() {
        // node 1 only touches node 2, and both are eliminated: isolated pair
        let mut y = DMatrix::<f64>::zeros(3, 3);
        y[(1, 1)] = 1.0;
        y[(2, 2)] = 1.0;
        y[(1, 2)] = -1.0;
        y[(2, 1)] = -1.0;
        assert_eq!(kron_reduce(&y, &[0]).unwrap_err(), Error::SingularBlock);
    }

    #[test]
    fn synchronizing_matrix_is_dc_laplacian_for_unit_emf() {
        let k = synchronizing_matrix(&DVector::from_element(2, 1.0), &line(5.0));
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[5.0, -5.0, -5.0, 5.0]));
    }
}
