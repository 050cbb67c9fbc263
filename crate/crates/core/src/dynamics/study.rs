//! The reduced network a transient study runs on: generator internal
//! nodes followed by IBR nodes, everything else eliminated.

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix, DVector};

use super::network::{ac_injection, ac_jacobian, build_ybus, kron_reduce, stamp};
use crate::case_io::{BusKind, CaseFile};
use crate::{BusId, Error, Result};

/// How strongly a relocated IBR is tied to its bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// Series susceptance of the strongest branch incident to the bus.
    StrongestBranch,
    /// A fixed series susceptance, p.u.
    Susceptance(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    /// Buses hosting grid-forming IBRs.
    pub ibr_buses: Vec<BusId>,
    /// Generators retired in favour of the IBRs; their dispatch moves to
    /// the IBRs in order.
    pub replaced: Vec<BusId>,
    /// Generators kept as fixed negative-impedance injections with no
    /// swing dynamics (e.g. an equivalent of an external grid).
    pub static_gens: Vec<BusId>,
    pub coupling: Coupling,
}

impl StudyOptions {
    pub fn new(ibr_buses: Vec<BusId>) -> Self {
        Self {
            ibr_buses,
            replaced: Vec::new(),
            static_gens: Vec::new(),
            coupling: Coupling::StrongestBranch,
        }
    }
}

/// Per-machine parameters, indexed like the study generators.
#[derive(Debug, Clone, PartialEq)]
pub struct Machines {
    pub inertia: DVector<f64>,
    pub damping: DVector<f64>,
    pub droop: DVector<f64>,
    pub governor_tc: DVector<f64>,
    pub p_max: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct StudySystem {
    pub gen_buses: Vec<BusId>,
    pub ibr_buses: Vec<BusId>,
    /// Reduced admittance, generators first then IBRs.
    pub admittance: DMatrix<Complex<f64>>,
    pub emf: DVector<f64>,
    pub machines: Machines,
    /// Scheduled injections used to find the operating point.
    pub scheduled: DVector<f64>,
    /// Node angles at the operating point.
    pub delta0: DVector<f64>,
    /// Injections at the operating point; generator entries are the
    /// initial mechanical powers.
    pub p0: DVector<f64>,
    /// Index of the angle-reference generator.
    pub slack: usize,
}

struct Unit {
    bus: BusId,
    p: f64,
    q: f64,
    p_max: f64,
}

/// Aggregates in-service generators per bus, in case order.
fn units(case: &CaseFile) -> Vec<Unit> {
    let mut by_bus: BTreeMap<usize, Unit> = BTreeMap::new();
    let index = case.bus_index();
    for g in case.generators.iter().filter(|g| g.in_service) {
        let u = by_bus.entry(index[&g.bus]).or_insert(Unit {
            bus: g.bus,
            p: 0.0,
            q: 0.0,
            p_max: 0.0,
        });
        u.p += g.p_set;
        u.q += g.q_set;
        u.p_max += g.p_max;
    }
    by_bus.into_values().collect()
}

fn strongest_branch(case: &CaseFile, bus: BusId) -> Option<f64> {
    case.branches
        .iter()
        .filter(|b| b.in_service && (b.from_bus == bus || b.to_bus == bus))
        .map(|b| b.susceptance().abs())
        .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

impl StudySystem {
    pub fn build(case: &CaseFile, opts: &StudyOptions) -> Result<Self> {
        let index = case.bus_index();
        let lookup = |bus: BusId| {
            index
                .get(&bus)
                .copied()
                .ok_or_else(|| Error::Config(format!("bus {bus} is not in the case")))
        };
        let all_units = units(case);
        for &b in opts.replaced.iter().chain(&opts.static_gens) {
            if !all_units.iter().any(|u| u.bus == b) {
                return Err(Error::Config(format!("no generator at bus {b}")));
            }
        }
        if !opts.replaced.is_empty() && opts.replaced.len() != opts.ibr_buses.len() {
            return Err(Error::Config(format!(
                "{} replaced generators for {} IBRs",
                opts.replaced.len(),
                opts.ibr_buses.len()
            )));
        }
        let mut ibr_sorted = opts.ibr_buses.clone();
        ibr_sorted.sort_unstable();
        if ibr_sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("IBR buses must be distinct".into()));
        }

        let n = case.buses.len();
        let mut y = build_ybus(case);
        // loads and static generators as constant impedances at solved voltage
        for (i, bus) in case.buses.iter().enumerate() {
            let v2 = bus.voltage_mag * bus.voltage_mag;
            y[(i, i)] += Complex::new(bus.p_demand, -bus.q_demand) / v2;
        }
        for u in all_units.iter().filter(|u| opts.static_gens.contains(&u.bus)) {
            let i = index[&u.bus];
            let v2 = case.buses[i].voltage_mag.powi(2);
            y[(i, i)] -= Complex::new(u.p, -u.q) / v2;
        }

        let machines: Vec<&Unit> = all_units
            .iter()
            .filter(|u| !opts.replaced.contains(&u.bus) && !opts.static_gens.contains(&u.bus))
            .collect();
        if machines.is_empty() {
            return Err(Error::Config("no synchronous machine left in the study".into()));
        }
        let ng = machines.len();
        let ni = opts.ibr_buses.len();
        let total = n + ng + ni;
        let mut full = DMatrix::from_element(total, total, Complex::new(0.0, 0.0));
        full.view_mut((0, 0), (n, n)).copy_from(&y);

        let mut emf = Vec::with_capacity(ng + ni);
        for (k, u) in machines.iter().enumerate() {
            let dy = case.dynamics_for(u.bus);
            stamp(
                &mut full,
                n + k,
                index[&u.bus],
                Complex::new(0.0, -1.0 / dy.transient_reactance),
            );
            emf.push(dy.internal_emf);
        }
        for (k, &b) in opts.ibr_buses.iter().enumerate() {
            let i = lookup(b)?;
            let susceptance = match opts.coupling {
                Coupling::StrongestBranch => {
                    strongest_branch(case, b).ok_or_else(|| Error::Config(format!("bus {b} has no branch")))?
                }
                Coupling::Susceptance(s) => s,
            };
            if !(susceptance > 0.0 && susceptance.is_finite()) {
                return Err(Error::Config(format!("coupling susceptance {susceptance}")));
            }
            stamp(&mut full, n + ng + k, i, Complex::new(0.0, -susceptance));
            emf.push(case.buses[i].voltage_mag);
        }
        let keep: Vec<usize> = (n..total).collect();
        let admittance = kron_reduce(&full, &keep)?;

        let mut scheduled = DVector::zeros(ng + ni);
        for (k, u) in machines.iter().enumerate() {
            scheduled[k] = u.p;
        }
        for (k, b) in opts.replaced.iter().enumerate() {
            scheduled[ng + k] = all_units.iter().find(|u| u.bus == *b).map_or(0.0, |u| u.p);
        }

        let reference = case.buses.iter().find(|b| b.kind == BusKind::Ref).map(|b| b.id);
        let slack = machines.iter().position(|u| Some(u.bus) == reference).unwrap_or(0);
        let guess = DVector::from_iterator(
            ng + ni,
            machines
                .iter()
                .map(|u| u.bus)
                .chain(opts.ibr_buses.iter().copied())
                .map(|b| case.buses[index[&b]].voltage_ang.to_radians()),
        );
        let emf = DVector::from_vec(emf);

        let dyn_of = |f: fn(&crate::case_io::GenDynamics) -> f64| {
            DVector::from_iterator(ng, machines.iter().map(|u| f(&case.dynamics_for(u.bus))))
        };
        let machines_out = Machines {
            inertia: dyn_of(|d| d.inertia),
            damping: dyn_of(|d| d.damping),
            droop: dyn_of(|d| d.droop_gain),
            governor_tc: dyn_of(|d| d.governor_time_const),
            p_max: DVector::from_iterator(ng, machines.iter().map(|u| u.p_max)),
        };
        Self::from_reduced(
            machines.iter().map(|u| u.bus).collect(),
            opts.ibr_buses.clone(),
            admittance,
            emf,
            machines_out,
            scheduled,
            slack,
            guess,
        )
    }

    /// Assembles a study from an already reduced network and solves its
    /// operating point from `guess`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_reduced(
        gen_buses: Vec<BusId>,
        ibr_buses: Vec<BusId>,
        admittance: DMatrix<Complex<f64>>,
        emf: DVector<f64>,
        machines: Machines,
        scheduled: DVector<f64>,
        slack: usize,
        guess: DVector<f64>,
    ) -> Result<Self> {
        let nodes = gen_buses.len() + ibr_buses.len();
        for (what, found) in [
            ("admittance", admittance.nrows()),
            ("emf", emf.len()),
            ("scheduled injections", scheduled.len()),
            ("initial angles", guess.len()),
        ] {
            if found != nodes {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: nodes,
                    found,
                });
            }
        }
        if machines.inertia.len() != gen_buses.len() || slack >= gen_buses.len() {
            return Err(Error::DimensionMismatch {
                what: "machine parameters",
                expected: gen_buses.len(),
                found: machines.inertia.len(),
            });
        }
        let delta0 = operating_point(&admittance, &emf, &scheduled, slack, guess)?;
        let p0 = ac_injection(&delta0, &emf, &admittance);
        Ok(Self {
            gen_buses,
            ibr_buses,
            admittance,
            emf,
            machines,
            scheduled,
            delta0,
            p0,
            slack,
        })
    }

    pub fn gen_count(&self) -> usize {
        self.gen_buses.len()
    }

    pub fn ibr_count(&self) -> usize {
        self.ibr_buses.len()
    }

    /// Injections at generator angles `gen` and IBR angles `ibr`.
    pub fn injections(&self, gen: &DVector<f64>, ibr: &DVector<f64>) -> DVector<f64> {
        let angles = DVector::from_iterator(gen.len() + ibr.len(), gen.iter().chain(ibr.iter()).copied());
        ac_injection(&angles, &self.emf, &self.admittance)
    }

    pub fn gen_delta0(&self) -> DVector<f64> {
        self.delta0.rows(0, self.gen_count()).into_owned()
    }

    pub fn ibr_delta0(&self) -> DVector<f64> {
        self.delta0.rows(self.gen_count(), self.ibr_count()).into_owned()
    }
}

/// Newton solve of `P(δ) = scheduled` on every node but `slack`, whose
/// angle is held and whose injection absorbs the mismatch.
pub fn operating_point(
    y: &DMatrix<Complex<f64>>,
    emf: &DVector<f64>,
    scheduled: &DVector<f64>,
    slack: usize,
    guess: DVector<f64>,
) -> Result<DVector<f64>> {
    let n = emf.len();
    let free: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let mut delta = guess;
    if free.is_empty() {
        return Ok(delta);
    }
    for _ in 0..50 {
        let mismatch = ac_injection(&delta, emf, y) - scheduled;
        let m = mismatch.select_rows(&free);
        if m.amax() < 1e-12 {
            return Ok(delta);
        }
        let jac = ac_jacobian(&delta, emf, y).select_rows(&free).select_columns(&free);
        let step = jac
            .lu()
            .solve(&m)
            .ok_or_else(|| Error::OperatingPoint("singular jacobian".into()))?;
        for (k, &i) in free.iter().enumerate() {
            delta[i] -= step[k];
        }
        if !delta.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::OperatingPoint("no solution within 50 newton iterations".into()))
}
