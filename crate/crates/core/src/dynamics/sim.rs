//! Time stepping of the swing equation with governors and IBR control.

use std::f64::consts::PI;
use std::fmt::Write;

use nalgebra::DVector;

use super::study::{Machines, StudySystem};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SwingState {
    /// Rotor angles, rad.
    pub delta: DVector<f64>,
    /// Speed deviations, p.u.
    pub omega: DVector<f64>,
    /// Mechanical power, p.u. This is also the governor lag's state.
    pub p_mech: DVector<f64>,
}

impl SwingState {
    /// Rest at the study's operating point.
    pub fn equilibrium(sys: &StudySystem) -> Self {
        let ng = sys.gen_count();
        Self {
            delta: sys.gen_delta0(),
            omega: DVector::zeros(ng),
            p_mech: sys.p0.rows(0, ng).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.delta
            .iter()
            .chain(&self.omega)
            .chain(&self.p_mech)
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Step size, s.
    pub h: f64,
    /// Base angular speed, rad/s.
    pub omega_b: f64,
    /// Simulated time, s.
    pub duration: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            h: 0.01,
            omega_b: 2.0 * PI * 60.0,
            duration: 30.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !(self.omega_b > 0.0) || !(self.duration >= self.h) {
            return Err(Error::Config(format!(
                "need h > 0, omega_b > 0 and duration >= h, got h = {}, omega_b = {}, duration = {}",
                self.h, self.omega_b, self.duration
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.h).round() as usize
    }

    pub fn nominal_hz(&self) -> f64 {
        self.omega_b / (2.0 * PI)
    }
}

/// Partial loss of one generator's capacity over a time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceSpec {
    /// Index into the study generators.
    pub generator: usize,
    pub fraction_lost: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl DisturbanceSpec {
    pub fn validate(&self, cfg: &SimConfig, gen_count: usize) -> Result<()> {
        if self.generator >= gen_count {
            return Err(Error::IndexOutOfRange {
                index: self.generator,
                n: gen_count,
            });
        }
        if !(0.0..=1.0).contains(&self.fraction_lost) {
            return Err(Error::Config(format!(
                "loss fraction {} outside [0, 1]",
                self.fraction_lost
            )));
        }
        if !(self.t_start < self.t_end && self.t_end <= cfg.duration) {
            return Err(Error::Config(format!(
                "disturbance window [{}, {}] must satisfy start < end <= duration",
                self.t_start, self.t_end
            )));
        }
        Ok(())
    }

    fn active(&self, t: f64) -> bool {
        self.t_start <= t && t < self.t_end
    }
}

/// Governor reference and ceiling for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GovernorTargets {
    pub reference: DVector<f64>,
    pub ceiling: DVector<f64>,
}

impl GovernorTargets {
    /// Targets at time `t`. The ceiling is `p_max`, raised to the initial
    /// dispatch where that is higher so the operating point stays admissible.
    pub fn at(p_mech0: &DVector<f64>, machines: &Machines, disturbance: Option<&DisturbanceSpec>, t: f64) -> Self {
        let mut reference = p_mech0.clone();
        let mut ceiling = machines.p_max.zip_map(p_mech0, f64::max);
        if let Some(d) = disturbance.filter(|d| d.active(t)) {
            let keep = 1.0 - d.fraction_lost;
            reference[d.generator] *= keep;
            ceiling[d.generator] *= keep;
        }
        Self { reference, ceiling }
    }
}

/// One explicit step of the droop governor lag
/// `dP_m/dt = (P_ref − ω/R − P_m) / T_g`, clamped to `[0, ceiling]`.
pub fn governor_update(state: &SwingState, machines: &Machines, targets: &GovernorTargets, h: f64) -> DVector<f64> {
    DVector::from_fn(state.p_mech.len(), |i, _| {
        let target = targets.reference[i] - state.omega[i] / machines.droop[i];
        let next = state.p_mech[i] + h / machines.governor_tc[i] * (target - state.p_mech[i]);
        next.clamp(0.0, targets.ceiling[i])
    })
}

/// Semi-implicit Euler step of the swing equation:
/// `ω⁺ = ω + (h/m)(P_m − P_e − d ω)`, then `δ⁺ = δ + h ω_b ω⁺`.
pub fn step_swing(
    state: &SwingState,
    p_elec: &DVector<f64>,
    machines: &Machines,
    cfg: &SimConfig,
    step: usize,
) -> Result<SwingState> {
    let h = cfg.h;
    let omega = DVector::from_fn(state.omega.len(), |i, _| {
        state.omega[i] + h / machines.inertia[i] * (state.p_mech[i] - p_elec[i] - machines.damping[i] * state.omega[i])
    });
    let delta = &state.delta + &omega * (h * cfg.omega_b);
    let next = SwingState {
        delta,
        omega,
        p_mech: state.p_mech.clone(),
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NumericalBlowUp {
            step: step + 1,
            time: (step + 1) as f64 * h,
        })
    }
}

/// Sets IBR internal angles each step.
pub trait PowerController {
    /// Angles the IBRs hold over the coming step.
    fn ibr_angles(&mut self, sys: &StudySystem, state: &SwingState) -> Result<Vec<f64>>;

    /// Sees the state reached after the step, e.g. to update an observer.
    fn observe(&mut self, _sys: &StudySystem, _next: &SwingState) {}
}

/// Holds every IBR at its operating-point angle, i.e. an infinite bus.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedAngles;

impl PowerController for FixedAngles {
    fn ibr_angles(&mut self, sys: &StudySystem, _state: &SwingState) -> Result<Vec<f64>> {
        Ok(sys.ibr_delta0().iter().copied().collect())
    }
}

/// No frequency support: each IBR keeps its operating-point power by
/// re-solving its angle against the current generator angles.
#[derive(Debug, Clone, Default)]
pub struct ConstantPower {
    angles: Option<DVector<f64>>,
}

impl PowerController for ConstantPower {
    fn ibr_angles(&mut self, sys: &StudySystem, state: &SwingState) -> Result<Vec<f64>> {
        let ng = sys.gen_count();
        let ni = sys.ibr_count();
        let target = sys.p0.rows(ng, ni).into_owned();
        let mut u = self.angles.take().unwrap_or_else(|| sys.ibr_delta0());
        for _ in 0..30 {
            let p = sys.injections(&state.delta, &u);
            let mismatch = p.rows(ng, ni) - &target;
            if mismatch.amax() < 1e-12 {
                self.angles = Some(u.clone());
                return Ok(u.iter().copied().collect());
            }
            let all = DVector::from_iterator(ng + ni, state.delta.iter().chain(u.iter()).copied());
            let jac = super::network::ac_jacobian(&all, &sys.emf, &sys.admittance)
                .view((ng, ng), (ni, ni))
                .into_owned();
            let step = jac
                .lu()
                .solve(&mismatch)
                .ok_or_else(|| Error::OperatingPoint("IBR angle jacobian is singular".into()))?;
            u -= step;
        }
        Err(Error::OperatingPoint("IBR could not hold its power".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub time: Vec<f64>,
    pub states: Vec<SwingState>,
    /// Generator electrical power applied over each step.
    pub p_gen: Vec<DVector<f64>>,
    /// IBR power applied over each step.
    pub p_ibr: Vec<DVector<f64>>,
    pub nominal_hz: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Frequency deviation of generator `g` in Hz.
    pub fn frequency_deviation(&self, g: usize) -> Vec<f64> {
        self.states.iter().map(|s| self.nominal_hz * s.omega[g]).collect()
    }

    pub fn gen_power(&self, g: usize) -> Vec<f64> {
        self.p_gen.iter().map(|p| p[g]).collect()
    }

    pub fn ibr_power(&self, k: usize) -> Vec<f64> {
        self.p_ibr.iter().map(|p| p[k]).collect()
    }

    /// Lowest absolute frequency seen by any generator, Hz.
    pub fn nadir_hz(&self) -> f64 {
        self.states
            .iter()
            .flat_map(|s| s.omega.iter())
            .fold(f64::INFINITY, |m, w| m.min(self.nominal_hz * (1.0 + w)))
    }

    /// Columns: `time`, `f_<bus>` (Hz) per generator, `p_gen_<bus>` and
    /// `p_ibr_<bus>` (p.u.).
    pub fn to_csv(&self, gen_buses: &[usize], ibr_buses: &[usize]) -> String {
        let mut s = String::from("time");
        for b in gen_buses {
            let _ = write!(s, ",f_{b}");
        }
        for b in gen_buses {
            let _ = write!(s, ",p_gen_{b}");
        }
        for b in ibr_buses {
            let _ = write!(s, ",p_ibr_{b}");
        }
        s.push('\n');
        for k in 0..self.len() {
            let _ = write!(s, "{:.4}", self.time[k]);
            for w in self.states[k].omega.iter() {
                let _ = write!(s, ",{:.9}", self.nominal_hz * (1.0 + w));
            }
            for p in self.p_gen[k].iter().chain(self.p_ibr[k].iter()) {
                let _ = write!(s, ",{p:.9}");
            }
            s.push('\n');
        }
        s
    }
}

/// Runs one scenario from the operating point. Each step applies the
/// governor, asks the controller for IBR angles, evaluates the network
/// injections and advances the swing equation.
pub fn simulate(
    sys: &StudySystem,
    disturbance: Option<&DisturbanceSpec>,
    controller: &mut dyn PowerController,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let ng = sys.gen_count();
    if let Some(d) = disturbance {
        d.validate(cfg, ng)?;
    }
    let steps = cfg.steps();
    let p_mech0 = sys.p0.rows(0, ng).into_owned();
    let mut traj = Trajectory {
        time: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        p_gen: Vec::with_capacity(steps + 1),
        p_ibr: Vec::with_capacity(steps + 1),
        nominal_hz: cfg.nominal_hz(),
    };
    let mut state = SwingState::equilibrium(sys);
    let mut angles = sys.ibr_delta0();
    for step in 0..=steps {
        let t = step as f64 * cfg.h;
        if step == steps {
            let p = sys.injections(&state.delta, &angles);
            traj.time.push(t);
            traj.p_gen.push(p.rows(0, ng).into_owned());
            traj.p_ibr.push(p.rows(ng, sys.ibr_count()).into_owned());
            traj.states.push(state);
            break;
        }
        let targets = GovernorTargets::at(&p_mech0, &sys.machines, disturbance, t);
        let governed = SwingState {
            p_mech: governor_update(&state, &sys.machines, &targets, cfg.h),
            ..state.clone()
        };
        angles = DVector::from_vec(controller.ibr_angles(sys, &governed)?);
        let p = sys.injections(&governed.delta, &angles);
        let p_gen = p.rows(0, ng).into_owned();
        let next = step_swing(&governed, &p_gen, &sys.machines, cfg, step)?;
        controller.observe(sys, &next);
        traj.time.push(t);
        traj.p_gen.push(p_gen);
        traj.p_ibr.push(p.rows(ng, sys.ibr_count()).into_owned());
        traj.states.push(state);
        state = next;
    }
    Ok(traj)
}
