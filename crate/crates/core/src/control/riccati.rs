//! Discrete algebraic Riccati equation with a cross term,
//!
//! `P = AᵀPA − (AᵀPB + N)(R + BᵀPB)⁻¹(AᵀPB + N)ᵀ + Q`.
//!
//! Solved by the structured doubling algorithm when `R` is positive
//! definite, otherwise by plain fixed-point iteration.

use nalgebra::DMatrix;

use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 10_000;
pub const TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub p: DMatrix<f64>,
    /// `R + BᵀPB`.
    pub hessian: DMatrix<f64>,
    /// `AᵀPB + N`.
    pub cross: DMatrix<f64>,
    /// `K = H⁻¹Fᵀ`, so the optimal input is `u = −K x`.
    pub gain: DMatrix<f64>,
    pub iterations: usize,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn scale(m: &DMatrix<f64>) -> f64 {
    m.amax().max(1.0)
}

fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Solves `H K = Fᵀ`, falling back to the pseudo-inverse when `H` is
/// singular.
fn gain_from(hessian: &DMatrix<f64>, cross: &DMatrix<f64>) -> DMatrix<f64> {
    let rhs = cross.transpose();
    hessian.clone().cholesky().map(|c| c.solve(&rhs)).unwrap_or_else(|| {
        let pinv = hessian
            .clone()
            .pseudo_inverse(1e-12 * scale(hessian))
            .expect("non-negative epsilon");
        pinv * rhs
    })
}

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, n: &DMatrix<f64>) -> Result<()> {
    let (nx, nu) = (a.nrows(), b.ncols());
    let checks = [
        ("A columns", nx, a.ncols()),
        ("B rows", nx, b.nrows()),
        ("Q rows", nx, q.nrows()),
        ("Q columns", nx, q.ncols()),
        ("R rows", nu, r.nrows()),
        ("R columns", nu, r.ncols()),
        ("N rows", nx, n.nrows()),
        ("N columns", nu, n.ncols()),
    ];
    for (what, expected, found) in checks {
        if expected != found {
            return Err(Error::DimensionMismatch { what, expected, found });
        }
    }
    Ok(())
}

/// Residual `‖P − (AᵀPA − F H⁺ Fᵀ + Q)‖_max / max(1, ‖P‖_max)`.
pub fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    n: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let hessian = r + b.transpose() * p * b;
    let cross = a.transpose() * p * b + n;
    let gain = gain_from(&hessian, &cross);
    let rhs = a.transpose() * p * a - &cross * gain + q;
    (p - rhs).amax() / scale(p)
}

pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    n: &DMatrix<f64>,
) -> Result<DareSolution> {
    check_dims(a, b, q, r, n)?;
    let r_min = smallest_eigenvalue(r);
    let (p, iterations) = if r_min > 1e-12 * scale(r) {
        doubling(a, b, q, r, n)?
    } else {
        fixed_point(a, b, q, r, n)?
    };
    let hessian = symmetrize(&(r + b.transpose() * &p * b));
    let h_min = smallest_eigenvalue(&hessian);
    if h_min < -1e-10 * scale(&hessian) {
        return Err(Error::IndefiniteHessian(h_min));
    }
    let cross = a.transpose() * &p * b + n;
    let gain = gain_from(&hessian, &cross);
    Ok(DareSolution {
        p,
        hessian,
        cross,
        gain,
        iterations,
    })
}

fn doubling(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    n: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, usize)> {
    let nx = a.nrows();
    let r_chol = symmetrize(r)
        .cholesky()
        .ok_or(Error::IndefiniteHessian(smallest_eigenvalue(r)))?;
    // remove the cross term: u = v − R⁻¹Nᵀx
    let r_inv_nt = r_chol.solve(&n.transpose());
    let mut ak = a - b * &r_inv_nt;
    let mut gk = symmetrize(&(b * r_chol.solve(&b.transpose())));
    let mut hk = symmetrize(&(q - n * &r_inv_nt));
    let eye = DMatrix::<f64>::identity(nx, nx);
    for it in 1..=MAX_ITERATIONS {
        let w = (&eye + &gk * &hk).lu();
        let w_a = w.solve(&ak).ok_or(Error::NonConvergence { iterations: it })?;
        let w_g = w.solve(&gk).ok_or(Error::NonConvergence { iterations: it })?;
        let h_next = symmetrize(&(&hk + ak.transpose() * &hk * &w_a));
        let g_next = symmetrize(&(&gk + &ak * w_g * ak.transpose()));
        let a_next = &ak * w_a;
        let change = (&h_next - &hk).amax();
        if !change.is_finite() {
            return Err(Error::NonConvergence { iterations: it });
        }
        hk = h_next;
        gk = g_next;
        ak = a_next;
        if change <= TOLERANCE * scale(&hk) {
            return Ok((hk, it));
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
    })
}

fn fixed_point(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    n: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, usize)> {
    let mut p = symmetrize(q);
    for it in 1..=MAX_ITERATIONS {
        let hessian = r + b.transpose() * &p * b;
        let cross = a.transpose() * &p * b + n;
        let next = symmetrize(&(a.transpose() * &p * a - &cross * gain_from(&hessian, &cross) + q));
        let change = (&next - &p).amax();
        if !change.is_finite() {
            return Err(Error::NonConvergence { iterations: it });
        }
        p = next;
        if change <= TOLERANCE * scale(&p) {
            return Ok((p, it));
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
    })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}
