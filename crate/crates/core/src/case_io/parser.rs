use std::collections::HashMap;

use super::{Branch, Bus, BusKind, CaseFile, GenDynamics, Generator};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str,
    Assign,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Semi,
    Comma,
    Newline,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let mut push = |tok: Tok| {
            out.push(Token {
                tok,
                line: start_line,
                column: start_col,
            })
        };
        match c {
            '\n' => {
                push(Tok::Newline);
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            ' ' | '\t' | '\r' => {}
            '%' | '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
                continue;
            }
            '=' => push(Tok::Assign),
            '[' => push(Tok::LBracket),
            ']' => push(Tok::RBracket),
            '{' => push(Tok::LBrace),
            '}' => push(Tok::RBrace),
            ';' => push(Tok::Semi),
            ',' => push(Tok::Comma),
            '\'' | '"' => {
                let quote = c;
                i += 1;
                col += 1;
                while i < chars.len() && chars[i] != quote {
                    if chars[i] == '\n' {
                        return Err(syntax(start_line, start_col, "unterminated string"));
                    }
                    i += 1;
                    col += 1;
                }
                if i == chars.len() {
                    return Err(syntax(start_line, start_col, "unterminated string"));
                }
                push(Tok::Str);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let begin = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                    col += 1;
                }
                let word: String = chars[begin..i].iter().collect();
                match word.as_str() {
                    "Inf" | "inf" => push(Tok::Num(f64::INFINITY)),
                    "NaN" | "nan" => push(Tok::Num(f64::NAN)),
                    _ => push(Tok::Ident(word)),
                }
                continue;
            }
            c if c.is_ascii_digit()
                || c == '.'
                || ((c == '-' || c == '+')
                    && chars
                        .get(i + 1)
                        .is_some_and(|n| n.is_ascii_digit() || *n == '.' || *n == 'I')) =>
            {
                let begin = i;
                let mut j = i + 1;
                let signed = c == '-' || c == '+';
                if signed && chars[begin..].iter().skip(1).take(3).collect::<String>() == "Inf" {
                    j = begin + 4;
                } else {
                    while j < chars.len() {
                        let d = chars[j];
                        let exp_sign = (d == '-' || d == '+') && matches!(chars[j - 1], 'e' | 'E');
                        if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                            j += 1;
                        } else {
                            break;
                        }
                    }
                }
                let lexeme: String = chars[begin..j].iter().collect();
                let value = match lexeme.as_str() {
                    "-Inf" => f64::NEG_INFINITY,
                    "+Inf" => f64::INFINITY,
                    s => s
                        .parse::<f64>()
                        .map_err(|_| syntax(start_line, start_col, format!("invalid number `{s}`")))?,
                };
                push(Tok::Num(value));
                col += j - i;
                i = j;
                continue;
            }
            other => {
                return Err(syntax(line, col, format!("unexpected character `{other}`")));
            }
        }
        i += 1;
        col += 1;
    }
    Ok(out)
}

/// A numeric table with the position of its opening bracket.
#[derive(Debug)]
struct Table {
    rows: Vec<Vec<f64>>,
    line: usize,
    column: usize,
}

#[derive(Debug, Default)]
struct RawCase {
    scalars: HashMap<String, f64>,
    tables: HashMap<String, Table>,
}

struct Cursor {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Cursor {
    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eof_error(&self, message: &str) -> Error {
        syntax(self.end.0, self.end.1, message)
    }
}

fn parse_statements(text: &str) -> Result<RawCase> {
    let toks = lex(text)?;
    let end = (
        text.lines().count().max(1),
        text.lines().last().map_or(1, |l| l.chars().count() + 1),
    );
    let mut cur = Cursor { toks, pos: 0, end };
    let mut raw = RawCase::default();
    while let Some(t) = cur.next() {
        match t.tok {
            Tok::Newline | Tok::Semi | Tok::Comma => {}
            Tok::Ident(ref name) if name == "function" => {
                while let Some(t) = cur.next() {
                    if t.tok == Tok::Newline {
                        break;
                    }
                }
            }
            Tok::Ident(name) => {
                match cur.next() {
                    Some(Token { tok: Tok::Assign, .. }) => {}
                    Some(other) => {
                        return Err(syntax(other.line, other.column, "expected `=`"));
                    }
                    None => return Err(cur.eof_error("expected `=`")),
                }
                let value = cur.next().ok_or_else(|| cur.eof_error("expected a value"))?;
                let field = name.strip_prefix("mpc.").unwrap_or(&name).to_string();
                match value.tok {
                    Tok::Num(v) => {
                        raw.scalars.insert(field, v);
                    }
                    Tok::Str => {}
                    Tok::LBracket => {
                        let rows = parse_matrix(&mut cur)?;
                        raw.tables.insert(
                            field,
                            Table {
                                rows,
                                line: value.line,
                                column: value.column,
                            },
                        );
                    }
                    Tok::LBrace => skip_cell(&mut cur)?,
                    _ => return Err(syntax(value.line, value.column, "expected a value")),
                }
            }
            _ => return Err(syntax(t.line, t.column, "expected an assignment")),
        }
    }
    Ok(raw)
}

fn parse_matrix(cur: &mut Cursor) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut row = Vec::new();
    let mut width: Option<(usize, usize)> = None;
    loop {
        let t = cur.next().ok_or_else(|| cur.eof_error("unterminated matrix"))?;
        match t.tok {
            Tok::Num(v) => row.push(v),
            Tok::Comma => {}
            Tok::Semi | Tok::Newline | Tok::RBracket => {
                if !row.is_empty() {
                    match width {
                        None => width = Some((row.len(), t.line)),
                        Some((w, _)) if w != row.len() => {
                            return Err(syntax(
                                t.line,
                                t.column,
                                format!("row has {} columns, expected {w}", row.len()),
                            ));
                        }
                        _ => {}
                    }
                    rows.push(std::mem::take(&mut row));
                }
                if t.tok == Tok::RBracket {
                    return Ok(rows);
                }
            }
            _ => return Err(syntax(t.line, t.column, "expected a number in matrix")),
        }
    }
}

fn skip_cell(cur: &mut Cursor) -> Result<()> {
    let mut depth = 1;
    while depth > 0 {
        let t = cur.next().ok_or_else(|| cur.eof_error("unterminated cell array"))?;
        match t.tok {
            Tok::LBrace => depth += 1,
            Tok::RBrace => depth -= 1,
            _ => {}
        }
    }
    Ok(())
}

fn require_columns(table: &Table, name: &str, min: usize) -> Result<()> {
    match table.rows.first() {
        Some(r) if r.len() < min => Err(syntax(
            table.line,
            table.column,
            format!("mpc.{name} needs at least {min} columns, found {}", r.len()),
        )),
        _ => Ok(()),
    }
}

fn bus_id(v: f64, line: usize, column: usize) -> Result<usize> {
    if v.fract() == 0.0 && v >= 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(syntax(line, column, format!("`{v}` is not a bus number")))
    }
}

fn dynamics_rows(table: &Table) -> Result<Vec<GenDynamics>> {
    require_columns(table, "dynamics", 6)?;
    table
        .rows
        .iter()
        .map(|r| {
            Ok(GenDynamics {
                bus: bus_id(r[0], table.line, table.column)?,
                inertia: r[1],
                damping: r[2],
                droop_gain: r[3],
                governor_time_const: r[4],
                internal_emf: r[5],
                transient_reactance: r.get(6).copied().unwrap_or(GenDynamics::DEFAULT_TRANSIENT_REACTANCE),
            })
        })
        .collect()
}

/// Parses a standalone dynamics sidecar holding an `mpc.dynamics` table.
pub fn parse_dynamics(text: &str) -> Result<Vec<GenDynamics>> {
    let raw = parse_statements(text)?;
    match raw.tables.get("dynamics") {
        Some(t) => dynamics_rows(t),
        None => Err(Error::Semantic("no `mpc.dynamics` table found".into())),
    }
}

/// Parses a MATPOWER case body, with an optional inline dynamics table.
pub fn parse_case(text: &str) -> Result<CaseFile> {
    let raw = parse_statements(text)?;
    let base_mva = *raw
        .scalars
        .get("baseMVA")
        .ok_or_else(|| Error::Semantic("missing mpc.baseMVA".into()))?;
    let table = |name: &str| {
        raw.tables
            .get(name)
            .ok_or_else(|| Error::Semantic(format!("missing mpc.{name}")))
    };
    let (bus_t, gen_t, branch_t) = (table("bus")?, table("gen")?, table("branch")?);
    require_columns(bus_t, "bus", 10)?;
    require_columns(gen_t, "gen", 10)?;
    require_columns(branch_t, "branch", 11)?;

    let mut isolated = Vec::new();
    let mut buses = Vec::with_capacity(bus_t.rows.len());
    for r in &bus_t.rows {
        let id = bus_id(r[0], bus_t.line, bus_t.column)?;
        let kind = match r[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Ref,
            4 => {
                isolated.push(id);
                continue;
            }
            other => {
                return Err(Error::Semantic(format!("bus {id} has unknown type {other}")));
            }
        };
        buses.push(Bus {
            id,
            kind,
            p_demand: r[2] / base_mva,
            q_demand: r[3] / base_mva,
            g_shunt: r[4] / base_mva,
            b_shunt: r[5] / base_mva,
            voltage_mag: r[7],
            voltage_ang: r[8],
            base_kv: r[9],
        });
    }

    let mut generators = Vec::new();
    for r in &gen_t.rows {
        let bus = bus_id(r[0], gen_t.line, gen_t.column)?;
        if r[7] <= 0.0 || isolated.contains(&bus) {
            continue;
        }
        generators.push(Generator {
            bus,
            p_set: r[1] / base_mva,
            q_set: r[2] / base_mva,
            q_max: r[3] / base_mva,
            q_min: r[4] / base_mva,
            v_set: r[5],
            mbase: r[6],
            in_service: true,
            p_max: r[8] / base_mva,
            p_min: r[9] / base_mva,
        });
    }

    let mut branches = Vec::new();
    for r in &branch_t.rows {
        let from_bus = bus_id(r[0], branch_t.line, branch_t.column)?;
        let to_bus = bus_id(r[1], branch_t.line, branch_t.column)?;
        if r[10] <= 0.0 || isolated.contains(&from_bus) || isolated.contains(&to_bus) {
            continue;
        }
        branches.push(Branch {
            from_bus,
            to_bus,
            resistance_pu: r[2],
            reactance_pu: r[3],
            charging_pu: r[4],
            tap_ratio: r[8],
            shift_deg: r[9],
            in_service: true,
        });
    }

    let dynamics = match raw.tables.get("dynamics") {
        Some(t) => dynamics_rows(t)?,
        None => Vec::new(),
    };
    let case = CaseFile {
        base_mva,
        buses,
        branches,
        generators,
        dynamics,
    };
    let diags = super::structural_diagnostics(&case);
    if diags.is_empty() {
        Ok(case)
    } else {
        let msg: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        Err(Error::Semantic(msg.join("; ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_signed_exponent_and_inf() {
        let t = lex("x = [1e-3 -2.5E+2 -Inf .5];").unwrap();
        let nums: Vec<f64> = t
            .iter()
            .filter_map(|t| match t.tok {
                Tok::Num(v) => Some(v),
                _ => None,
            })
            .collect();
        assert_eq!(nums, vec![1e-3, -250.0, f64::NEG_INFINITY, 0.5]);
    }

    #[test]
    fn syntax_error_reports_position() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n  1 3 $ 0;\n];\n";
        match parse_case(text).unwrap_err() {
            Error::Syntax { line, column, .. } => assert_eq!((line, column), (3, 7)),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn ragged_matrix_is_a_syntax_error() {
        let text = "mpc.x = [1 2 3;\n 4 5];";
        let err = parse_statements(text).unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 2, .. }));
    }

    #[test]
    fn unterminated_matrix_is_reported() {
        let err = parse_statements("mpc.bus = [1 2 3;\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { .. }));
    }

    #[test]
    fn cell_arrays_and_strings_are_skipped() {
        let raw = parse_statements("mpc.version = '2';\nmpc.names = {\n 'a';\n 'b';\n};\nmpc.baseMVA = 10;").unwrap();
        assert_eq!(raw.scalars["baseMVA"], 10.0);
        assert!(raw.tables.is_empty());
    }

    #[test]
    fn dangling_branch_is_semantic_error() {
        let text = super::super::tests::TWO_BUS.replace("1 2 0 0.2", "1 99 0 0.2");
        match parse_case(&text).unwrap_err() {
            Error::Semantic(msg) => assert!(msg.contains("missing bus"), "{msg}"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn missing_slack_is_semantic_error() {
        let text = super::super::tests::TWO_BUS.replace("1 3 0 0", "1 2 0 0");
        assert!(matches!(parse_case(&text), Err(Error::Semantic(_))));
    }

    #[test]
    fn duplicate_bus_is_semantic_error() {
        let text = super::super::tests::TWO_BUS.replace("2 1 50 10", "1 1 50 10");
        match parse_case(&text).unwrap_err() {
            Error::Semantic(msg) => assert!(msg.contains("duplicate"), "{msg}"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn out_of_service_elements_dropped() {
        let text = super::super::tests::TWO_BUS.replace(
            "1 2 0 0.2 0 0 0 0 0 0 1 -360 360;",
            "1 2 0 0.2 0 0 0 0 0 0 1 -360 360;\n    1 2 0 0.3 0 0 0 0 0 0 0 -360 360;",
        );
        let case = parse_case(&text).unwrap();
        assert_eq!(case.branches.len(), 1);
    }

    #[test]
    fn inline_dynamics_table_is_read() {
        let text = format!(
            "{}\n%% dynamics\nmpc.dynamics = [\n 1 4.0 2.0 0.04 0.3 1.05 0.1;\n];\n",
            super::super::tests::TWO_BUS
        );
        let case = parse_case(&text).unwrap();
        assert_eq!(case.dynamics.len(), 1);
        let d = &case.dynamics[0];
        assert_eq!(
            (d.inertia, d.damping, d.droop_gain, d.governor_time_const),
            (4.0, 2.0, 0.04, 0.3)
        );
        assert_eq!((d.internal_emf, d.transient_reactance), (1.05, 0.1));
    }

    #[test]
    fn per_unit_conversion() {
        let case = parse_case(super::super::tests::TWO_BUS).unwrap();
        assert_eq!(case.buses[1].p_demand, 0.5);
        assert_eq!(case.generators[0].p_max, 2.0);
    }
}
