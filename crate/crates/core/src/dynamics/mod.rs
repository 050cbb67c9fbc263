//! Transient frequency simulation on a Kron-reduced network.
//!
//! Generators are constant-emf sources behind their transient reactance,
//! loads are constant impedances, and IBRs are grid-forming sources whose
//! angle is set by a [`PowerController`]. Everything except the machine
//! internal nodes and IBR nodes is eliminated before stepping.

mod network;
mod sim;
mod study;

pub use network::{ac_injection, ac_jacobian, build_ybus, dc_flow, kron_reduce, synchronizing_matrix};
pub use sim::{
    governor_update, simulate, step_swing, ConstantPower, DisturbanceSpec, FixedAngles, GovernorTargets,
    PowerController, SimConfig, SwingState, Trajectory,
};
pub use study::{operating_point, Coupling, Machines, StudyOptions, StudySystem};

#[cfg(test)]
pub(crate) mod fixtures {
    use nalgebra::{Complex, DMatrix, DVector};

    use super::{Machines, StudySystem};

    pub fn machines(inertia: &[f64], damping: f64) -> Machines {
        let n = inertia.len();
        Machines {
            inertia: DVector::from_column_slice(inertia),
            damping: DVector::from_element(n, damping),
            droop: DVector::from_element(n, 0.05),
            governor_tc: DVector::from_element(n, 0.5),
            p_max: DVector::from_element(n, 10.0),
        }
    }

    /// Lossless admittance with `b_ij` on each listed pair.
    pub fn reactive(n: usize, lines: &[(usize, usize, f64)]) -> DMatrix<Complex<f64>> {
        let mut y = DMatrix::from_element(n, n, Complex::new(0.0, 0.0));
        for &(i, j, b) in lines {
            super::network::stamp(&mut y, i, j, Complex::new(0.0, -b));
        }
        y
    }

    /// One machine against an infinite bus through susceptance `b`.
    pub fn smib(b: f64, p: f64, inertia: f64, damping: f64) -> StudySystem {
        StudySystem::from_reduced(
            vec![1],
            vec![2],
            reactive(2, &[(0, 1, b)]),
            DVector::from_element(2, 1.0),
            machines(&[inertia], damping),
            DVector::from_vec(vec![p, -p]),
            0,
            DVector::zeros(2),
        )
        .unwrap()
    }
}
