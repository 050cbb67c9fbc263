//! Time-step-scaled L1 norms and the placement sweep that reports them.
//!
//! `‖x‖₁,h = h Σ_series Σ_t |x^t − x^0|`: deviation from the first sample,
//! summed over every step and every series, scaled by the step size.

use std::fmt::Write;

use rayon::prelude::*;

use crate::case_io::CaseFile;
use crate::control::{ControlWeights, LqrController};
use crate::dynamics::{
    simulate, ConstantPower, Coupling, DisturbanceSpec, PowerController, SimConfig, StudyOptions, StudySystem,
    Trajectory,
};
use crate::{BusId, Error, Result};

pub fn scaled_l1(series: &[&[f64]], h: f64) -> Result<f64> {
    let Some(first) = series.first() else {
        return Ok(0.0);
    };
    let len = first.len();
    let mut total = 0.0;
    for s in series {
        if s.len() != len {
            return Err(Error::DimensionMismatch {
                what: "time grid",
                expected: len,
                found: s.len(),
            });
        }
        if let Some(&x0) = s.first() {
            total += s.iter().map(|x| (x - x0).abs()).sum::<f64>();
        }
    }
    Ok(h * total)
}

/// The three norms of one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Norms {
    /// Generator frequency deviation, Hz·s.
    pub f: f64,
    /// Generator electrical power, p.u.·s.
    pub p_gen: f64,
    /// IBR power, p.u.·s.
    pub p_ibr: f64,
}

impl std::ops::Add for Norms {
    type Output = Norms;
    fn add(self, o: Norms) -> Norms {
        Norms {
            f: self.f + o.f,
            p_gen: self.p_gen + o.p_gen,
            p_ibr: self.p_ibr + o.p_ibr,
        }
    }
}

pub fn trajectory_norms(traj: &Trajectory, h: f64) -> Result<Norms> {
    let ng = traj.states.first().map_or(0, |s| s.omega.len());
    let ni = traj.p_ibr.first().map_or(0, |p| p.len());
    let f: Vec<Vec<f64>> = (0..ng).map(|g| traj.frequency_deviation(g)).collect();
    let pg: Vec<Vec<f64>> = (0..ng).map(|g| traj.gen_power(g)).collect();
    let pi: Vec<Vec<f64>> = (0..ni).map(|k| traj.ibr_power(k)).collect();
    let norm = |v: &[Vec<f64>]| scaled_l1(&v.iter().map(Vec::as_slice).collect::<Vec<_>>(), h);
    Ok(Norms {
        f: norm(&f)?,
        p_gen: norm(&pg)?,
        p_ibr: norm(&pi)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub disturbed_bus: BusId,
    pub norms: Norms,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMetrics {
    pub label: String,
    pub ibr_buses: Vec<BusId>,
    pub rows: Vec<ScenarioRow>,
    pub totals: Norms,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlMode {
    /// IBRs hold their operating-point power.
    None,
    Lqr(ControlWeights),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Generators retired in favour of the IBRs.
    pub replaced: Vec<BusId>,
    /// Generators frozen as negative loads.
    pub static_gens: Vec<BusId>,
    pub coupling: Coupling,
    pub sim: SimConfig,
    pub loss_fraction: f64,
    pub window: (f64, f64),
    pub control: ControlMode,
    /// Generators to disturb one at a time; `None` means every study machine.
    pub disturbed: Option<Vec<BusId>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            replaced: Vec::new(),
            static_gens: Vec::new(),
            coupling: Coupling::StrongestBranch,
            sim: SimConfig::default(),
            loss_fraction: 0.6,
            window: (0.5, 5.0),
            control: ControlMode::Lqr(ControlWeights::default()),
            disturbed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub label: String,
    pub buses: Vec<BusId>,
}

impl EvalConfig {
    pub fn study(&self, case: &CaseFile, ibr_buses: &[BusId]) -> Result<StudySystem> {
        StudySystem::build(
            case,
            &StudyOptions {
                ibr_buses: ibr_buses.to_vec(),
                replaced: self.replaced.clone(),
                static_gens: self.static_gens.clone(),
                coupling: self.coupling,
            },
        )
    }

    pub fn controller(&self, sys: &StudySystem) -> Result<Box<dyn PowerController>> {
        Ok(match &self.control {
            ControlMode::None => Box::new(ConstantPower::default()),
            ControlMode::Lqr(w) => Box::new(LqrController::design(sys, w, self.sim.h, self.sim.omega_b)?),
        })
    }

    /// Study-generator indices to disturb.
    fn targets(&self, sys: &StudySystem) -> Result<Vec<usize>> {
        match &self.disturbed {
            None => Ok((0..sys.gen_count()).collect()),
            Some(buses) => buses
                .iter()
                .map(|b| {
                    sys.gen_buses
                        .iter()
                        .position(|g| g == b)
                        .ok_or_else(|| Error::Config(format!("bus {b} has no study generator")))
                })
                .collect(),
        }
    }

    /// Simulates one capacity-loss scenario on generator index `g`.
    pub fn run_scenario(&self, sys: &StudySystem, g: usize) -> Result<Trajectory> {
        let dist = DisturbanceSpec {
            generator: g,
            fraction_lost: self.loss_fraction,
            t_start: self.window.0,
            t_end: self.window.1,
        };
        let mut controller = self.controller(sys)?;
        simulate(sys, Some(&dist), controller.as_mut(), &self.sim)
    }
}

/// Runs the one-generator-at-a-time disturbance sweep for every placement.
/// Scenarios run in parallel; rows keep generator order.
pub fn evaluate_placements(
    case: &CaseFile,
    placements: &[Placement],
    cfg: &EvalConfig,
) -> Result<Vec<ResponseMetrics>> {
    let systems: Vec<StudySystem> = placements
        .iter()
        .map(|p| cfg.study(case, &p.buses))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = systems
        .iter()
        .enumerate()
        .map(|(p, sys)| cfg.targets(sys).map(|t| t.into_iter().map(move |g| (p, g))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let results: Vec<Result<Norms>> = jobs
        .par_iter()
        .map(|&(p, g)| {
            let sys = &systems[p];
            cfg.run_scenario(sys, g)
                .and_then(|t| trajectory_norms(&t, cfg.sim.h))
                .map_err(|e| Error::Scenario {
                    bus: sys.gen_buses[g],
                    source: Box::new(e),
                })
        })
        .collect();
    let mut out: Vec<ResponseMetrics> = placements
        .iter()
        .map(|p| ResponseMetrics {
            label: p.label.clone(),
            ibr_buses: p.buses.clone(),
            rows: Vec::new(),
            totals: Norms::default(),
        })
        .collect();
    for (&(p, g), res) in jobs.iter().zip(results) {
        let norms = res?;
        out[p].rows.push(ScenarioRow {
            disturbed_bus: systems[p].gen_buses[g],
            norms,
        });
        out[p].totals = out[p].totals + norms;
    }
    Ok(out)
}

fn join(buses: &[BusId], sep: &str) -> String {
    buses.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(sep)
}

/// One block per placement: a row per disturbed generator, then totals.
pub fn render_table(metrics: &[ResponseMetrics]) -> String {
    let mut s = String::new();
    for m in metrics {
        let _ = writeln!(s, "{} (IBRs at {})", m.label, join(&m.ibr_buses, ", "));
        let _ = writeln!(
            s,
            "{:>10} {:>12} {:>12} {:>12}",
            "generator", "f (Hz)", "P_gen", "P_ibr"
        );
        for r in &m.rows {
            let _ = writeln!(
                s,
                "{:>10} {:>12.4} {:>12.4} {:>12.4}",
                r.disturbed_bus, r.norms.f, r.norms.p_gen, r.norms.p_ibr
            );
        }
        let _ = writeln!(
            s,
            "{:>10} {:>12.4} {:>12.4} {:>12.4}\n",
            "total", m.totals.f, m.totals.p_gen, m.totals.p_ibr
        );
    }
    s
}

/// Columns `placement,ibr_buses,generator,f_norm,p_gen_norm,p_ibr_norm`;
/// the totals row has `generator = total`.
pub fn to_csv(metrics: &[ResponseMetrics]) -> String {
    let mut s = String::from("placement,ibr_buses,generator,f_norm,p_gen_norm,p_ibr_norm\n");
    for m in metrics {
        let buses = join(&m.ibr_buses, " ");
        for r in &m.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                m.label, buses, r.disturbed_bus, r.norms.f, r.norms.p_gen, r.norms.p_ibr
            );
        }
        let _ = writeln!(
            s,
            "{},{},total,{},{},{}",
            m.label, buses, m.totals.f, m.totals.p_gen, m.totals.p_ibr
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_series_has_zero_norm() {
        assert_eq!(scaled_l1(&[&[2.0; 10]], 0.01).unwrap(), 0.0);
    }

    #[test]
    fn unit_offset_gives_h_times_steps() {
        let mut x = vec![1.0; 101];
        x[0] = 0.0;
        assert_relative_eq!(scaled_l1(&[&x], 0.01).unwrap(), 0.01 * 100.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_series_double_the_norm() {
        let x: Vec<f64> = (0..50).map(|k| (k as f64 * 0.1).sin()).collect();
        let one = scaled_l1(&[&x], 0.1).unwrap();
        assert_relative_eq!(scaled_l1(&[&x, &x], 0.1).unwrap(), 2.0 * one, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_grids_rejected() {
        assert!(matches!(
            scaled_l1(&[&[0.0, 1.0], &[0.0]], 0.1),
            Err(Error::DimensionMismatch { what: "time grid", .. })
        ));
    }

    #[test]
    fn riemann_sum_converges_to_integral() {
        // ∫₀¹ |sin(πt)| dt = 2/π
        let exact = 2.0 / std::f64::consts::PI;
        for h in [0.01, 0.005, 0.0025] {
            let n = (1.0 / h) as usize;
            let x: Vec<f64> = (0..=n).map(|k| (std::f64::consts::PI * k as f64 * h).sin()).collect();
            assert!((scaled_l1(&[&x], h).unwrap() - exact).abs() <= 2.0 * h);
        }
    }

    #[test]
    fn tables_have_fixed_columns() {
        let m = ResponseMetrics {
            label: "optimal".into(),
            ibr_buses: vec![6, 16],
            rows: vec![ScenarioRow {
                disturbed_bus: 30,
                norms: Norms {
                    f: 1.0,
                    p_gen: 2.0,
                    p_ibr: 3.0,
                },
            }],
            totals: Norms {
                f: 1.0,
                p_gen: 2.0,
                p_ibr: 3.0,
            },
        };
        let csv = to_csv(std::slice::from_ref(&m));
        assert_eq!(
            csv,
            "placement,ibr_buses,generator,f_norm,p_gen_norm,p_ibr_norm\noptimal,6 16,30,1,2,3\noptimal,6 16,total,1,2,3\n"
        );
        assert!(render_table(&[m]).contains("total"));
    }
}
