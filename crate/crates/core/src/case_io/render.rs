use std::fmt::Write;

use super::CaseFile;

/// Writes the supported subset back out as a MATPOWER case body.
///
/// Per-unit powers are scaled back to MW/MVAr on `base_mva`. Columns the
/// parser does not keep (areas, zones, ratings, limits) get neutral values.
pub fn render_case(case: &CaseFile) -> String {
    let base = case.base_mva;
    let mut s = String::new();
    s.push_str("function mpc = rendered_case\n");
    s.push_str("mpc.version = '2';\n");
    let _ = writeln!(s, "mpc.baseMVA = {base};\n");

    s.push_str("%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n");
    s.push_str("mpc.bus = [\n");
    for b in &case.buses {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t{}\t1\t1.1\t0.9;",
            b.id,
            b.kind.code(),
            b.p_demand * base,
            b.q_demand * base,
            b.g_shunt * base,
            b.b_shunt * base,
            b.voltage_mag,
            b.voltage_ang,
            b.base_kv
        );
    }
    s.push_str("];\n\n");

    s.push_str("%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n");
    s.push_str("mpc.gen = [\n");
    for g in &case.generators {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            g.bus,
            g.p_set * base,
            g.q_set * base,
            g.q_max * base,
            g.q_min * base,
            g.v_set,
            g.mbase,
            u8::from(g.in_service),
            g.p_max * base,
            g.p_min * base
        );
    }
    s.push_str("];\n\n");

    s.push_str("%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n");
    s.push_str("mpc.branch = [\n");
    for br in &case.branches {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t{}\t{}\t{}\t-360\t360;",
            br.from_bus,
            br.to_bus,
            br.resistance_pu,
            br.reactance_pu,
            br.charging_pu,
            br.tap_ratio,
            br.shift_deg,
            u8::from(br.in_service)
        );
    }
    s.push_str("];\n");

    if !case.dynamics.is_empty() {
        s.push_str("\n%% dynamics\n%\tbus\tm\td\tdroop\tTg\tE\txd\n");
        s.push_str("mpc.dynamics = [\n");
        for d in &case.dynamics {
            let _ = writeln!(
                s,
                "\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
                d.bus, d.inertia, d.damping, d.droop_gain, d.governor_time_const, d.internal_emf, d.transient_reactance
            );
        }
        s.push_str("];\n");
    }
    s
}
