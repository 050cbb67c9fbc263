//! Inverter power control as an infinite-horizon LQR on the linearised
//! swing model, with a constant-disturbance observer.
//!
//! State `z = [δ − δ₀; ω; ΔP̂]` per generator, input `u` = IBR angle
//! offsets from the operating point. The cost per step is
//! `‖ω⁺‖²_{Q1} + ‖ω⁺ − ω‖²_{Q2} + ‖r ⊙ P_ibr‖²`, written as `‖C z + D u‖²`
//! after the output weights are folded in.
//!
//! Two directions are left out of the Riccati equation. The disturbance
//! block is uncontrollable, and rotating every angle (generators and
//! IBRs) together changes no power flow and costs nothing. The equation
//! is therefore solved on slack-relative angles and speeds, with IBR
//! angles commanded relative to the slack machine. The `ΔP̂` columns of
//! the gain come from the steady state that cancels a constant
//! disturbance.

pub mod riccati;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{synchronizing_matrix, PowerController, StudySystem, SwingState};
use crate::{Error, Result};
pub use riccati::{riccati_residual, solve_dare, spectral_radius, DareSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct ControlWeights {
    /// Scale of `Q1` (identity) on the speed outputs.
    pub q1: f64,
    /// Scale of `Q2` on the speed-change outputs; `None` means `1/h`.
    pub q2: Option<f64>,
    /// Per-IBR power weight; a single entry is broadcast.
    pub r: Vec<f64>,
    /// Eigenvalue of the observer error dynamics.
    pub observer_pole: f64,
}

impl Default for ControlWeights {
    fn default() -> Self {
        Self {
            q1: 1.0,
            q2: None,
            r: vec![0.05],
            observer_pole: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Output map onto `[ω⁺; ω⁺ − ω; r ⊙ P_ibr]`, unweighted by `Q1`, `Q2`.
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub q1: DMatrix<f64>,
    pub q2: DMatrix<f64>,
    pub r: DVector<f64>,
    pub gen_count: usize,
    pub ibr_count: usize,
    pub h: f64,
    pub inertia: DVector<f64>,
    pub observer_pole: f64,
    /// Generator whose angle references the others.
    pub reference: usize,
    /// `[K_gg K_gi]`: linear generator power per `(δ, u)`.
    coupling: DMatrix<f64>,
}

impl ControlModel {
    pub fn state_dim(&self) -> usize {
        3 * self.gen_count
    }

    /// Dimension of the controllable `(δ, ω)` block.
    pub fn plant_dim(&self) -> usize {
        2 * self.gen_count
    }

    /// Block-diagonal output weight `diag(Q1, Q2, I)`.
    pub fn output_weight(&self) -> DMatrix<f64> {
        let (ng, ni) = (self.gen_count, self.ibr_count);
        let mut w = DMatrix::zeros(2 * ng + ni, 2 * ng + ni);
        w.view_mut((0, 0), (ng, ng)).copy_from(&self.q1);
        w.view_mut((ng, ng), (ng, ng)).copy_from(&self.q2);
        w.view_mut((2 * ng, 2 * ng), (ni, ni)).fill_with_identity();
        w
    }

    pub fn plant_a(&self) -> DMatrix<f64> {
        let nx = self.plant_dim();
        self.a.view((0, 0), (nx, nx)).into_owned()
    }

    pub fn plant_b(&self) -> DMatrix<f64> {
        self.b.rows(0, self.plant_dim()).into_owned()
    }

    /// Maps `(δ, ω)` to `(δ_i − δ_ref for i ≠ ref, ω)`.
    pub fn relative_map(&self) -> DMatrix<f64> {
        let ng = self.gen_count;
        let mut t = DMatrix::zeros(2 * ng - 1, 2 * ng);
        for (row, i) in (0..ng).filter(|&i| i != self.reference).enumerate() {
            t[(row, i)] = 1.0;
            t[(row, self.reference)] = -1.0;
        }
        t.view_mut((ng - 1, ng), (ng, ng)).fill_with_identity();
        t
    }

    /// Right inverse of [`Self::relative_map`] placing the reference at 0.
    pub fn relative_embedding(&self) -> DMatrix<f64> {
        let ng = self.gen_count;
        let mut e = DMatrix::zeros(2 * ng, 2 * ng - 1);
        for (row, i) in (0..ng).filter(|&i| i != self.reference).enumerate() {
            e[(i, row)] = 1.0;
        }
        e.view_mut((ng, ng - 1), (ng, ng)).fill_with_identity();
        e
    }

    /// `(A, B, Q, R, N)` of the LQR problem in relative coordinates, with
    /// inputs measured from the reference machine's angle.
    pub fn relative_problem(&self) -> [DMatrix<f64>; 5] {
        let t = self.relative_map();
        let e = self.relative_embedding();
        let a = &t * self.plant_a() * &e;
        let b = &t * self.plant_b();
        let w = self.output_weight();
        let c = self.c.columns(0, self.plant_dim()) * &e;
        let q = c.transpose() * &w * &c;
        let r = self.d.transpose() * &w * &self.d;
        let n = c.transpose() * &w * &self.d;
        [a, b, q, r, n]
    }
}

/// Linearised, discretised swing model of the reduced study network.
///
/// Power flows use the DC approximation around flat angles: generator
/// powers are `K_gg δ + K_gi u` with `K` from [`synchronizing_matrix`].
pub fn build_control_model(sys: &StudySystem, weights: &ControlWeights, h: f64, omega_b: f64) -> Result<ControlModel> {
    let ng = sys.gen_count();
    let ni = sys.ibr_count();
    let r = match weights.r.len() {
        1 => DVector::from_element(ni, weights.r[0]),
        len if len == ni => DVector::from_vec(weights.r.clone()),
        len => {
            return Err(Error::DimensionMismatch {
                what: "IBR power weights",
                expected: ni,
                found: len,
            })
        }
    };
    let q2_scale = weights.q2.unwrap_or(1.0 / h);
    if !(weights.q1 >= 0.0 && q2_scale >= 0.0 && r.iter().all(|v| *v >= 0.0)) {
        return Err(Error::Config("control weights must be non-negative".into()));
    }
    if !(0.0..1.0).contains(&weights.observer_pole) {
        return Err(Error::Config("observer pole must lie in [0, 1)".into()));
    }
    let k = synchronizing_matrix(&sys.emf, &sys.admittance);
    let k_gg = k.view((0, 0), (ng, ng));
    let k_gi = k.view((0, ng), (ng, ni));
    let k_ig = k.view((ng, 0), (ni, ng));
    let k_ii = k.view((ng, ng), (ni, ni));
    let m = &sys.machines;
    let step = DVector::from_fn(ng, |i, _| h / m.inertia[i]);

    // speed row block: ω⁺ = −S K_gg δ + (I − S D) ω + S ΔP̂ − S K_gi u
    let mut omega_rows = DMatrix::zeros(ng, 3 * ng);
    let mut omega_b_rows = DMatrix::zeros(ng, ni);
    for i in 0..ng {
        for j in 0..ng {
            omega_rows[(i, j)] = -step[i] * k_gg[(i, j)];
        }
        omega_rows[(i, ng + i)] = 1.0 - step[i] * m.damping[i];
        omega_rows[(i, 2 * ng + i)] = step[i];
        for j in 0..ni {
            omega_b_rows[(i, j)] = -step[i] * k_gi[(i, j)];
        }
    }
    let mut a = DMatrix::zeros(3 * ng, 3 * ng);
    let mut b = DMatrix::zeros(3 * ng, ni);
    let hw = h * omega_b;
    // δ⁺ = δ + h ω_b ω⁺
    a.view_mut((0, 0), (ng, 3 * ng)).copy_from(&(&omega_rows * hw));
    for i in 0..ng {
        a[(i, i)] += 1.0;
    }
    b.view_mut((0, 0), (ng, ni)).copy_from(&(&omega_b_rows * hw));
    a.view_mut((ng, 0), (ng, 3 * ng)).copy_from(&omega_rows);
    b.view_mut((ng, 0), (ng, ni)).copy_from(&omega_b_rows);
    a.view_mut((2 * ng, 2 * ng), (ng, ng)).fill_with_identity();

    let outputs = 2 * ng + ni;
    let mut c = DMatrix::zeros(outputs, 3 * ng);
    let mut d = DMatrix::zeros(outputs, ni);
    c.view_mut((0, 0), (ng, 3 * ng)).copy_from(&omega_rows);
    d.view_mut((0, 0), (ng, ni)).copy_from(&omega_b_rows);
    let mut change = omega_rows.clone();
    for i in 0..ng {
        change[(i, ng + i)] -= 1.0;
    }
    c.view_mut((ng, 0), (ng, 3 * ng)).copy_from(&change);
    d.view_mut((ng, 0), (ng, ni)).copy_from(&omega_b_rows);
    for i in 0..ni {
        for j in 0..ng {
            c[(2 * ng + i, j)] = r[i] * k_ig[(i, j)];
        }
        for j in 0..ni {
            d[(2 * ng + i, j)] = r[i] * k_ii[(i, j)];
        }
    }
    let mut coupling = DMatrix::zeros(ng, ng + ni);
    coupling.view_mut((0, 0), (ng, ng)).copy_from(&k_gg);
    coupling.view_mut((0, ng), (ng, ni)).copy_from(&k_gi);
    Ok(ControlModel {
        a,
        b,
        c,
        d,
        q1: DMatrix::identity(ng, ng) * weights.q1,
        q2: DMatrix::identity(ng, ng) * q2_scale,
        r,
        gen_count: ng,
        ibr_count: ni,
        h,
        inertia: m.inertia.clone(),
        observer_pole: weights.observer_pole,
        reference: sys.slack,
        coupling,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    /// Riccati solution in relative coordinates.
    pub p: DMatrix<f64>,
    /// `H = R + BᵀPB`.
    pub hessian: DMatrix<f64>,
    /// `F = AᵀPB + N`.
    pub cross: DMatrix<f64>,
    /// Gain in relative coordinates.
    pub relative_gain: DMatrix<f64>,
    /// Full gain `[K_x K_d]` on `z`; `u = −K z`.
    pub gain: DMatrix<f64>,
    pub iterations: usize,
    /// Closed-loop spectral radius in relative coordinates.
    pub spectral_radius: f64,
}

impl LqrSolution {
    /// The `(δ, ω)` columns of the full gain.
    pub fn plant_gain(&self) -> DMatrix<f64> {
        self.gain.columns(0, self.p.nrows() + 1).into_owned()
    }

    /// Full gain as CSV, one row per IBR, columns `delta_*`, `omega_*`,
    /// `dp_*` labelled by generator bus.
    pub fn gain_csv(&self, gen_buses: &[usize], ibr_buses: &[usize]) -> String {
        let mut s = String::from("ibr");
        for prefix in ["delta", "omega", "dp"] {
            for b in gen_buses {
                s.push_str(&format!(",{prefix}_{b}"));
            }
        }
        s.push('\n');
        for (row, bus) in ibr_buses.iter().enumerate() {
            s.push_str(&bus.to_string());
            for v in self.gain.row(row).iter() {
                s.push_str(&format!(",{v:e}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn solve_lqr(model: &ControlModel) -> Result<LqrSolution> {
    let [a, b, q, r, n] = model.relative_problem();
    let dare = solve_dare(&a, &b, &q, &r, &n)?;
    let rho = spectral_radius(&(&a - &b * &dare.gain));
    if !(rho < 1.0) {
        return Err(Error::Unstabilizable(rho));
    }
    let ng = model.gen_count;
    let ni = model.ibr_count;
    // u = 1·δ_ref + v with v = −K_rel T x
    let mut kx = &dare.gain * model.relative_map();
    for i in 0..ni {
        kx[(i, model.reference)] -= 1.0;
    }
    // minimum-norm (δ_ss, u_ss) with K_gg δ + K_gi u = ΔP
    let mmt = &model.coupling * model.coupling.transpose();
    let steady = match mmt.clone().cholesky() {
        Some(ch) => model.coupling.transpose() * ch.inverse(),
        None => model
            .coupling
            .clone()
            .pseudo_inverse(1e-12)
            .expect("non-negative epsilon"),
    };
    let steady_delta = steady.rows(0, ng);
    let steady_u = steady.rows(ng, ni);
    let k_delta = kx.columns(0, ng);
    let kd = -(steady_u + k_delta * steady_delta);
    let mut gain = DMatrix::zeros(ni, 3 * ng);
    gain.view_mut((0, 0), (ni, 2 * ng)).copy_from(&kx);
    gain.view_mut((0, 2 * ng), (ni, ng)).copy_from(&kd);
    Ok(LqrSolution {
        p: dare.p,
        hessian: dare.hessian,
        cross: dare.cross,
        relative_gain: dare.gain,
        gain,
        iterations: dare.iterations,
        spectral_radius: rho,
    })
}

/// `u = −K z`.
pub fn control_action(sol: &LqrSolution, z: &DVector<f64>) -> Result<DVector<f64>> {
    if z.len() != sol.gain.ncols() {
        return Err(Error::DimensionMismatch {
            what: "control state",
            expected: sol.gain.ncols(),
            found: z.len(),
        });
    }
    Ok(-(&sol.gain * z))
}

/// Observer update for the constant disturbance: the speed innovation
/// against the model's one-step prediction corrects `ΔP̂` so that the
/// estimation error contracts by `observer_pole` each step.
pub fn observe_disturbance(
    model: &ControlModel,
    z: &DVector<f64>,
    u: &DVector<f64>,
    measured_omega: &DVector<f64>,
) -> DVector<f64> {
    let ng = model.gen_count;
    let predicted = (&model.a * z + &model.b * u).rows(ng, ng).into_owned();
    let gain = 1.0 - model.observer_pole;
    DVector::from_fn(ng, |i, _| {
        z[2 * ng + i] + gain * model.inertia[i] / model.h * (measured_omega[i] - predicted[i])
    })
}

/// Closed loop of plant, state feedback and observer under a constant
/// true disturbance, in coordinates `[relative (δ, ω); ΔP − ΔP̂]`.
pub fn composite_closed_loop(model: &ControlModel, sol: &LqrSolution) -> DMatrix<f64> {
    let [a, b, ..] = model.relative_problem();
    let nx = a.nrows();
    let ng = model.gen_count;
    let kd = sol.gain.columns(model.plant_dim(), ng);
    let mut m = DMatrix::zeros(nx + ng, nx + ng);
    m.view_mut((0, 0), (nx, nx)).copy_from(&(&a - &b * &sol.relative_gain));
    m.view_mut((0, nx), (nx, ng)).copy_from(&(b * kd));
    m.view_mut((nx, nx), (ng, ng)).fill_with_identity();
    for i in 0..ng {
        m[(nx + i, nx + i)] = model.observer_pole;
    }
    m
}

/// IBR active power when the IBRs sit at `ibr_angles` and the generators
/// at `gen_delta`.
pub fn angle_to_power(sys: &StudySystem, gen_delta: &DVector<f64>, ibr_angles: &DVector<f64>) -> DVector<f64> {
    let ng = sys.gen_count();
    sys.injections(gen_delta, ibr_angles)
        .rows(ng, sys.ibr_count())
        .into_owned()
}

/// LQR state feedback with the disturbance observer in the loop.
#[derive(Debug, Clone)]
pub struct LqrController {
    model: ControlModel,
    solution: LqrSolution,
    estimate: DVector<f64>,
    last: Option<(DVector<f64>, DVector<f64>)>,
}

impl LqrController {
    pub fn new(model: ControlModel, solution: LqrSolution) -> Self {
        let ng = model.gen_count;
        Self {
            model,
            solution,
            estimate: DVector::zeros(ng),
            last: None,
        }
    }

    pub fn design(sys: &StudySystem, weights: &ControlWeights, h: f64, omega_b: f64) -> Result<Self> {
        let model = build_control_model(sys, weights, h, omega_b)?;
        let solution = solve_lqr(&model)?;
        Ok(Self::new(model, solution))
    }

    pub fn solution(&self) -> &LqrSolution {
        &self.solution
    }

    pub fn model(&self) -> &ControlModel {
        &self.model
    }

    pub fn disturbance_estimate(&self) -> &DVector<f64> {
        &self.estimate
    }
}

impl PowerController for LqrController {
    fn ibr_angles(&mut self, sys: &StudySystem, state: &SwingState) -> Result<Vec<f64>> {
        let ng = sys.gen_count();
        let mut z = DVector::zeros(3 * ng);
        z.rows_mut(0, ng).copy_from(&(&state.delta - sys.gen_delta0()));
        z.rows_mut(ng, ng).copy_from(&state.omega);
        z.rows_mut(2 * ng, ng).copy_from(&self.estimate);
        let u = control_action(&self.solution, &z)?;
        let angles = sys.ibr_delta0() + &u;
        self.last = Some((z, u));
        Ok(angles.iter().copied().collect())
    }

    fn observe(&mut self, _sys: &StudySystem, next: &SwingState) {
        if let Some((z, u)) = &self.last {
            self.estimate = observe_disturbance(&self.model, z, u, &next.omega);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::fixtures::{machines, reactive, smib};
    use crate::dynamics::{dc_flow, SimConfig};
    use approx::assert_relative_eq;
    use nalgebra::Complex;

    const OMEGA_B: f64 = 2.0 * std::f64::consts::PI * 60.0;

    fn two_machine() -> StudySystem {
        let y = reactive(3, &[(0, 1, 4.0), (1, 2, 3.0), (0, 2, 2.5)]);
        StudySystem::from_reduced(
            vec![1, 2],
            vec![3],
            y,
            DVector::from_vec(vec![1.05, 1.0, 1.0]),
            machines(&[5.0, 4.0], 1.0),
            DVector::from_vec(vec![0.0, 0.6, -0.4]),
            0,
            DVector::zeros(3),
        )
        .unwrap()
    }

    fn design(sys: &StudySystem, weights: &ControlWeights) -> (ControlModel, LqrSolution) {
        let model = build_control_model(sys, weights, 0.01, OMEGA_B).unwrap();
        let sol = solve_lqr(&model).unwrap();
        (model, sol)
    }

    #[test]
    fn single_machine_model_has_three_states() {
        let sys = smib(1.0, 0.5, 5.0, 1.0);
        let model = build_control_model(&sys, &ControlWeights::default(), 0.01, OMEGA_B).unwrap();
        assert_eq!(model.state_dim(), 3);
        assert_eq!((model.a.nrows(), model.a.ncols()), (3, 3));
        assert_eq!((model.b.nrows(), model.b.ncols()), (3, 1));
        assert_eq!(model.c.ncols(), 3);
    }

    #[test]
    fn input_enters_through_ibr_coupling() {
        let sys = two_machine();
        let model = build_control_model(&sys, &ControlWeights::default(), 0.01, OMEGA_B).unwrap();
        let k = synchronizing_matrix(&sys.emf, &sys.admittance);
        for i in 0..2 {
            let expected = -0.01 / sys.machines.inertia[i] * k[(i, 2)];
            assert_relative_eq!(model.b[(2 + i, 0)], expected, epsilon = 1e-15);
            assert_relative_eq!(model.b[(i, 0)], expected * 0.01 * OMEGA_B, epsilon = 1e-15);
        }
        assert!(model.b.rows(4, 2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn uncoupled_ibr_gives_zero_input_block() {
        let mut sys = two_machine();
        let mut y = reactive(3, &[(0, 1, 4.0)]);
        y[(2, 2)] = Complex::new(0.0, -1.0);
        sys.admittance = y;
        sys.delta0 = DVector::zeros(3);
        let model = build_control_model(&sys, &ControlWeights::default(), 0.01, OMEGA_B).unwrap();
        assert!(model.b.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn wrong_weight_count_is_rejected() {
        let weights = ControlWeights {
            r: vec![0.1, 0.2],
            ..ControlWeights::default()
        };
        assert!(matches!(
            build_control_model(&two_machine(), &weights, 0.01, OMEGA_B),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn riccati_solution_is_stabilizing_and_accurate() {
        let sys = two_machine();
        let (model, sol) = design(&sys, &ControlWeights::default());
        let [a, b, q, r, n] = model.relative_problem();
        assert!(riccati_residual(&a, &b, &q, &r, &n, &sol.p) <= 1e-8);
        assert!(sol.spectral_radius < 1.0);
        assert_eq!((sol.gain.nrows(), sol.gain.ncols()), (1, 6));
        let sym = (&sol.p - sol.p.transpose()).amax();
        assert!(sym <= 1e-9 * sol.p.amax());
        assert!(sol.p.symmetric_eigenvalues().iter().all(|e| *e >= -1e-9 * sol.p.amax()));
    }

    #[test]
    fn gain_csv_labels_columns_by_bus() {
        let (_, sol) = design(&two_machine(), &ControlWeights::default());
        let csv = sol.gain_csv(&[1, 2], &[3]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "ibr,delta_1,delta_2,omega_1,omega_2,dp_1,dp_2");
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split(',').count(), 7);
    }

    #[test]
    fn zero_state_gives_zero_action_and_action_is_linear() {
        let (_, sol) = design(&two_machine(), &ControlWeights::default());
        assert_eq!(control_action(&sol, &DVector::zeros(6)).unwrap(), DVector::zeros(1));
        let z = DVector::from_vec(vec![0.01, -0.02, 1e-3, 2e-4, 0.1, -0.05]);
        let u = control_action(&sol, &z).unwrap();
        let u2 = control_action(&sol, &(&z * 2.0)).unwrap();
        assert_relative_eq!(u2, u * 2.0, epsilon = 1e-15);
        assert!(control_action(&sol, &DVector::zeros(5)).is_err());
    }

    #[test]
    fn closed_loop_settles_speed_deviation() {
        let sys = two_machine();
        let mut ctrl = LqrController::design(&sys, &ControlWeights::default(), 0.01, OMEGA_B).unwrap();
        let cfg = SimConfig {
            duration: 10.0,
            ..SimConfig::default()
        };
        // perturbed start: speed kick on one machine
        let mut start = crate::dynamics::SwingState::equilibrium(&sys);
        start.omega[1] = 1e-3;
        let traj = simulate_from(&sys, start, &mut ctrl, &cfg);
        let last = traj.last().unwrap();
        assert!(last.omega.amax() < 1e-6, "final |ω| {}", last.omega.amax());
    }

    /// Steps the nonlinear system from `state` without disturbance.
    fn simulate_from(
        sys: &StudySystem,
        mut state: crate::dynamics::SwingState,
        ctrl: &mut dyn PowerController,
        cfg: &SimConfig,
    ) -> Vec<crate::dynamics::SwingState> {
        let ng = sys.gen_count();
        let mut out = vec![state.clone()];
        for step in 0..cfg.steps() {
            let angles = DVector::from_vec(ctrl.ibr_angles(sys, &state).unwrap());
            let p = sys.injections(&state.delta, &angles).rows(0, ng).into_owned();
            state = crate::dynamics::step_swing(&state, &p, &sys.machines, cfg, step).unwrap();
            ctrl.observe(sys, &state);
            out.push(state.clone());
        }
        out
    }

    #[test]
    fn observer_stays_at_zero_without_disturbance() {
        let (model, _) = design(&two_machine(), &ControlWeights::default());
        let est = observe_disturbance(&model, &DVector::zeros(6), &DVector::zeros(1), &DVector::zeros(2));
        assert_eq!(est, DVector::zeros(2));
    }

    #[test]
    fn observer_tracks_constant_step_on_linear_plant() {
        let (model, sol) = design(&two_machine(), &ControlWeights::default());
        let step = DVector::from_vec(vec![-0.3, 0.1]);
        let mut truth = DVector::zeros(6);
        truth.rows_mut(4, 2).copy_from(&step);
        let mut estimate = DVector::zeros(2);
        for _ in 0..3000 {
            let mut z = truth.clone();
            z.rows_mut(4, 2).copy_from(&estimate);
            let u = control_action(&sol, &z).unwrap();
            let next = &model.a * &truth + &model.b * &u;
            estimate = observe_disturbance(&model, &z, &u, &next.rows(2, 2).into_owned());
            truth = next;
        }
        for i in 0..2 {
            assert!((estimate[i] - step[i]).abs() <= 0.01 * step[i].abs());
        }
        // the feedforward cancels the disturbance: speeds return to zero
        assert!(truth.rows(2, 2).amax() < 1e-10);
    }

    #[test]
    fn composite_loop_is_stable_with_observer_poles() {
        let (model, sol) = design(&two_machine(), &ControlWeights::default());
        let m = composite_closed_loop(&model, &sol);
        assert!(spectral_radius(&m) < 1.0);
        let nx = m.nrows() - 2;
        let observer = m.view((nx, nx), (2, 2)).into_owned();
        assert!(spectral_radius(&observer) < 1.0);
        assert_relative_eq!(observer.complex_eigenvalues()[0].re, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn angle_to_power_matches_sine() {
        let sys = smib(1.0, 0.0, 5.0, 1.0);
        let p = angle_to_power(&sys, &DVector::from_element(1, 0.0), &DVector::from_element(1, 0.1));
        assert_relative_eq!(p[0], 0.1f64.sin(), epsilon = 1e-14);
        let aligned = angle_to_power(&sys, &DVector::from_element(1, 0.3), &DVector::from_element(1, 0.3));
        assert!(aligned[0].abs() < 1e-15);
    }

    #[test]
    fn small_angle_power_matches_dc_prediction() {
        // flat operating point: no scheduled transfer
        let y = reactive(3, &[(0, 1, 4.0), (1, 2, 3.0), (0, 2, 2.5)]);
        let emf = DVector::from_element(3, 1.0);
        let sys = StudySystem::from_reduced(
            vec![1, 2],
            vec![3],
            y.clone(),
            emf.clone(),
            machines(&[5.0, 4.0], 1.0),
            DVector::zeros(3),
            0,
            DVector::zeros(3),
        )
        .unwrap();
        let k = synchronizing_matrix(&emf, &y);
        for d in [1e-2, 1e-3] {
            let gen = DVector::from_vec(vec![0.3 * d, -0.5 * d]);
            let ibr = DVector::from_element(1, d);
            let ac = angle_to_power(&sys, &gen, &ibr)[0];
            let theta = DVector::from_vec(vec![gen[0], gen[1], ibr[0]]);
            let dc = dc_flow(&theta, &k).unwrap()[2];
            // sin x − x ≤ x³/6 per line, summed weights 5.5
            assert!((ac - dc).abs() <= 5.5 * (1.5 * d).powi(3) / 6.0);
        }
    }

    #[test]
    fn heavier_power_weight_never_increases_ibr_power() {
        let sys = two_machine();
        let k = synchronizing_matrix(&sys.emf, &sys.admittance);
        let zs = [
            DVector::from_vec(vec![0.01, -0.02, 1e-3, 2e-4, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.05, -1e-3, 0.0, 0.0, 0.0]),
            DVector::from_vec(vec![-0.03, 0.01, 0.0, 5e-4, 0.0, 0.0]),
        ];
        let mut previous = vec![f64::INFINITY; zs.len()];
        for r in [0.01, 0.05, 0.2, 1.0, 5.0] {
            let weights = ControlWeights {
                r: vec![r],
                ..ControlWeights::default()
            };
            let (_, sol) = design(&sys, &weights);
            for (z, prev) in zs.iter().zip(previous.iter_mut()) {
                // effort is the IBR power set-point deviation, linearised
                let u = control_action(&sol, z).unwrap();
                let effort = (k[(2, 0)] * z[0] + k[(2, 1)] * z[1] + k[(2, 2)] * u[0]).abs();
                assert!(effort <= *prev * (1.0 + 1e-9), "r {r}: {effort} > {prev}");
                *prev = effort;
            }
        }
    }
}
