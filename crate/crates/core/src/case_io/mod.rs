//! MATPOWER case ingestion.
//!
//! Only the matrix subset `mpc.baseMVA`, `mpc.bus`, `mpc.branch` and
//! `mpc.gen` is read, plus an optional `mpc.dynamics` table carrying
//! per-generator swing parameters. Every other field is skipped.
//! Powers are stored per unit on `base_mva`; impedances are already per
//! unit in the file.

mod parser;
mod render;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use nalgebra::Complex;

use crate::graph::PowerGraph;
use crate::{BusId, Error, Result};

pub use parser::{parse_case, parse_dynamics};
pub use render::render_case;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusKind {
    Pq,
    Pv,
    Ref,
}

impl BusKind {
    pub fn code(self) -> u8 {
        match self {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Ref => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Active demand, p.u.
    pub p_demand: f64,
    /// Reactive demand, p.u.
    pub q_demand: f64,
    /// Shunt conductance, p.u. at 1 p.u. voltage.
    pub g_shunt: f64,
    /// Shunt susceptance, p.u. at 1 p.u. voltage.
    pub b_shunt: f64,
    pub voltage_mag: f64,
    /// Solved voltage angle in degrees.
    pub voltage_ang: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub resistance_pu: f64,
    pub reactance_pu: f64,
    /// Total line charging susceptance, p.u.
    pub charging_pu: f64,
    /// Off-nominal turns ratio; 0 in the file means a plain line.
    pub tap_ratio: f64,
    pub shift_deg: f64,
    pub in_service: bool,
}

impl Branch {
    /// Series admittance `g + jb = 1 / (r + jx)`.
    pub fn series_admittance(&self) -> Complex<f64> {
        Complex::new(1.0, 0.0) / Complex::new(self.resistance_pu, self.reactance_pu)
    }

    pub fn conductance(&self) -> f64 {
        self.series_admittance().re
    }

    pub fn susceptance(&self) -> f64 {
        self.series_admittance().im
    }

    /// Tap ratio with MATPOWER's convention that 0 means 1.
    pub fn effective_tap(&self) -> f64 {
        if self.tap_ratio == 0.0 {
            1.0
        } else {
            self.tap_ratio
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: BusId,
    pub p_set: f64,
    pub q_set: f64,
    pub q_max: f64,
    pub q_min: f64,
    pub v_set: f64,
    pub mbase: f64,
    pub p_max: f64,
    pub p_min: f64,
    pub in_service: bool,
}

/// Swing-equation parameters of one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct GenDynamics {
    pub bus: BusId,
    /// Inertia constant `m`, s·p.u.
    pub inertia: f64,
    /// Damping `d`, p.u.
    pub damping: f64,
    /// Droop `R` in `ΔP = -ω / R`, p.u.
    pub droop_gain: f64,
    /// Governor lag, s.
    pub governor_time_const: f64,
    /// Internal emf magnitude, p.u.
    pub internal_emf: f64,
    /// Transient reactance behind which the emf sits, p.u. on system base.
    pub transient_reactance: f64,
}

impl GenDynamics {
    pub const DEFAULT_INERTIA: f64 = 5.0;
    pub const DEFAULT_DAMPING: f64 = 1.0;
    pub const DEFAULT_DROOP: f64 = 0.05;
    pub const DEFAULT_GOVERNOR_TC: f64 = 0.5;
    pub const DEFAULT_EMF: f64 = 1.0;
    pub const DEFAULT_TRANSIENT_REACTANCE: f64 = 0.2;

    pub fn default_for(bus: BusId) -> Self {
        Self {
            bus,
            inertia: Self::DEFAULT_INERTIA,
            damping: Self::DEFAULT_DAMPING,
            droop_gain: Self::DEFAULT_DROOP,
            governor_time_const: Self::DEFAULT_GOVERNOR_TC,
            internal_emf: Self::DEFAULT_EMF,
            transient_reactance: Self::DEFAULT_TRANSIENT_REACTANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseFile {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    /// Explicit dynamics rows; generators without one use
    /// [`GenDynamics::default_for`].
    pub dynamics: Vec<GenDynamics>,
}

/// One violated invariant found by [`validate_case`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    NonPositiveBaseMva(f64),
    DuplicateBus(BusId),
    NonPositiveVoltage(BusId),
    NoReferenceBus,
    MultipleReferenceBuses(Vec<BusId>),
    DanglingBranch { from: BusId, to: BusId },
    SelfLoop(BusId),
    ZeroReactance { from: BusId, to: BusId },
    DanglingGenerator(BusId),
    GeneratorSetpoint { bus: BusId, p_set: f64, p_max: f64 },
    DanglingDynamics(BusId),
    InvalidDynamics { bus: BusId, reason: &'static str },
    Disconnected { components: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::NonPositiveBaseMva(v) => write!(f, "baseMVA must be positive, got {v}"),
            Diagnostic::DuplicateBus(id) => write!(f, "duplicate bus id {id}"),
            Diagnostic::NonPositiveVoltage(id) => write!(f, "bus {id} has non-positive voltage"),
            Diagnostic::NoReferenceBus => write!(f, "no reference (slack) bus"),
            Diagnostic::MultipleReferenceBuses(ids) => {
                write!(f, "more than one reference bus: {ids:?}")
            }
            Diagnostic::DanglingBranch { from, to } => {
                write!(f, "branch {from}-{to} references a missing bus")
            }
            Diagnostic::SelfLoop(id) => write!(f, "branch connects bus {id} to itself"),
            Diagnostic::ZeroReactance { from, to } => {
                write!(f, "in-service branch {from}-{to} has zero reactance")
            }
            Diagnostic::DanglingGenerator(id) => write!(f, "generator at missing bus {id}"),
            Diagnostic::GeneratorSetpoint { bus, p_set, p_max } => {
                write!(f, "generator at bus {bus}: set-point {p_set} outside [0, {p_max}]")
            }
            Diagnostic::DanglingDynamics(id) => {
                write!(f, "dynamics row for bus {id} matches no generator")
            }
            Diagnostic::InvalidDynamics { bus, reason } => {
                write!(f, "dynamics for bus {bus}: {reason}")
            }
            Diagnostic::Disconnected { components } => {
                write!(f, "in-service network has {components} islands")
            }
        }
    }
}

/// How a branch turns into a placement-graph edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightModel {
    /// `x / (r² + x²)`, keeping the sign of `x`.
    #[default]
    SignedSusceptance,
    /// `|x / (r² + x²)|`.
    SusceptanceMagnitude,
    /// `1 / |x|`, resistance ignored.
    InverseReactance,
}

impl WeightModel {
    pub fn weight(self, branch: &Branch) -> f64 {
        let (r, x) = (branch.resistance_pu, branch.reactance_pu);
        match self {
            WeightModel::SignedSusceptance => x / (r * r + x * x),
            WeightModel::SusceptanceMagnitude => (x / (r * r + x * x)).abs(),
            WeightModel::InverseReactance => 1.0 / x.abs(),
        }
    }
}

impl CaseFile {
    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn reference_bus(&self) -> Option<&Bus> {
        self.buses.iter().find(|b| b.kind == BusKind::Ref)
    }

    /// Dynamics for the generator at `bus`, falling back to the defaults.
    pub fn dynamics_for(&self, bus: BusId) -> GenDynamics {
        self.dynamics
            .iter()
            .find(|d| d.bus == bus)
            .cloned()
            .unwrap_or_else(|| GenDynamics::default_for(bus))
    }

    /// Replaces the sidecar table, checking each row against the generators.
    pub fn with_dynamics(mut self, rows: Vec<GenDynamics>) -> Result<Self> {
        self.dynamics = rows;
        let bad: Vec<String> = dynamics_diagnostics(&self).iter().map(|d| d.to_string()).collect();
        if bad.is_empty() {
            Ok(self)
        } else {
            Err(Error::Semantic(bad.join("; ")))
        }
    }
}

fn dynamics_diagnostics(case: &CaseFile) -> Vec<Diagnostic> {
    let gen_buses: HashSet<BusId> = case.generators.iter().map(|g| g.bus).collect();
    let mut out = Vec::new();
    for d in &case.dynamics {
        if !gen_buses.contains(&d.bus) {
            out.push(Diagnostic::DanglingDynamics(d.bus));
        }
        let reason = if !(d.inertia > 0.0) {
            Some("inertia must be positive")
        } else if !(d.damping >= 0.0) {
            Some("damping must be non-negative")
        } else if !(d.droop_gain > 0.0) {
            Some("droop must be positive")
        } else if !(d.governor_time_const > 0.0) {
            Some("governor time constant must be positive")
        } else if !(d.internal_emf > 0.0) {
            Some("internal emf must be positive")
        } else if !(d.transient_reactance > 0.0) {
            Some("transient reactance must be positive")
        } else {
            None
        };
        if let Some(reason) = reason {
            out.push(Diagnostic::InvalidDynamics { bus: d.bus, reason });
        }
    }
    out
}

/// Invariant checks that do not involve connectivity.
pub(crate) fn structural_diagnostics(case: &CaseFile) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if !(case.base_mva > 0.0) {
        out.push(Diagnostic::NonPositiveBaseMva(case.base_mva));
    }
    let mut seen = HashSet::new();
    for b in &case.buses {
        if !seen.insert(b.id) {
            out.push(Diagnostic::DuplicateBus(b.id));
        }
        if !(b.voltage_mag > 0.0) {
            out.push(Diagnostic::NonPositiveVoltage(b.id));
        }
    }
    let refs: Vec<BusId> = case
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Ref)
        .map(|b| b.id)
        .collect();
    match refs.len() {
        0 => out.push(Diagnostic::NoReferenceBus),
        1 => {}
        _ => out.push(Diagnostic::MultipleReferenceBuses(refs.clone())),
    }
    for br in &case.branches {
        if !seen.contains(&br.from_bus) || !seen.contains(&br.to_bus) {
            out.push(Diagnostic::DanglingBranch {
                from: br.from_bus,
                to: br.to_bus,
            });
        }
        if br.from_bus == br.to_bus {
            out.push(Diagnostic::SelfLoop(br.from_bus));
        }
        if br.in_service && br.reactance_pu == 0.0 {
            out.push(Diagnostic::ZeroReactance {
                from: br.from_bus,
                to: br.to_bus,
            });
        }
    }
    for g in &case.generators {
        if !seen.contains(&g.bus) {
            out.push(Diagnostic::DanglingGenerator(g.bus));
        }
        // the slack machine balances the solved case and may exceed p_max
        let upper_ok = refs.contains(&g.bus) || g.p_set <= g.p_max;
        if !(g.p_set >= 0.0 && upper_ok) {
            out.push(Diagnostic::GeneratorSetpoint {
                bus: g.bus,
                p_set: g.p_set,
                p_max: g.p_max,
            });
        }
    }
    out.extend(dynamics_diagnostics(case));
    out
}

/// Number of islands formed by in-service branches among known buses.
fn island_count(case: &CaseFile) -> usize {
    let index = case.bus_index();
    let mut parent: Vec<usize> = (0..case.buses.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for br in case.branches.iter().filter(|b| b.in_service) {
        if let (Some(&a), Some(&b)) = (index.get(&br.from_bus), index.get(&br.to_bus)) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }
    (0..parent.len()).filter(|&i| find(&mut parent, i) == i).count()
}

/// Returns every violated invariant; empty iff the case is usable.
pub fn validate_case(case: &CaseFile) -> Vec<Diagnostic> {
    let mut out = structural_diagnostics(case);
    let islands = island_count(case);
    if islands > 1 {
        out.push(Diagnostic::Disconnected { components: islands });
    }
    out
}

/// Placement graph with one node per bus, in case order.
pub fn to_power_graph(case: &CaseFile) -> Result<PowerGraph> {
    to_power_graph_with(case, WeightModel::default())
}

pub fn to_power_graph_with(case: &CaseFile, model: WeightModel) -> Result<PowerGraph> {
    let diags = validate_case(case);
    if let Some(Diagnostic::Disconnected { components }) =
        diags.iter().find(|d| matches!(d, Diagnostic::Disconnected { .. }))
    {
        return Err(Error::Disconnected {
            components: *components,
        });
    }
    if !diags.is_empty() {
        let msg: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(Error::Semantic(msg.join("; ")));
    }
    let index = case.bus_index();
    let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for br in case.branches.iter().filter(|b| b.in_service) {
        let (a, b) = (index[&br.from_bus], index[&br.to_bus]);
        let key = (a.min(b), a.max(b));
        *merged.entry(key).or_insert(0.0) += model.weight(br);
    }
    let edges = merged.into_iter().map(|((i, j), w)| (i, j, w)).collect();
    PowerGraph::new(case.buses.iter().map(|b| b.id).collect(), edges)
}
