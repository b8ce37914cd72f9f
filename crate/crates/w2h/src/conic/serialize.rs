//! Line-oriented text serialization of conic programs.
//!
//! ```text
//! VAR idx kind lo hi name
//! ROW rel rhs tag (idx:coef)*
//! SOC tag bound-expr | member-expr ; member-expr ...
//! OBJ (idx:coef)* const
//! ```
//!
//! Reals are printed with 17 significant digits so the format round-trips
//! bit-exactly. Lines are `\n`-terminated UTF-8.

use std::fmt::Write as _;

use thiserror::Error;

use super::{
    AffineExpr, ConicProgram, ConstraintTag, EquationId, LinearRow, Objective, Relation, SocRow,
    VarIdx, VarKind, VariableRef,
};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {0}: {1}")]
    Line(usize, String),
}

fn fmt_real(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{:.16e}", v)
    }
}

fn parse_real(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

fn fmt_tag(t: &ConstraintTag) -> String {
    format!(
        "{}@{}:{}:{}",
        t.equation.as_str(),
        t.asset,
        t.step,
        if t.reducible { "r" } else { "n" }
    )
}

fn parse_tag(s: &str) -> Option<ConstraintTag> {
    let at = s.find('@')?;
    let equation = EquationId::parse(&s[..at])?;
    let rest = &s[at + 1..];
    // asset may contain ':'; the last two fields are step and reducibility
    let mut parts = rest.rsplitn(3, ':');
    let red = parts.next()?;
    let step: usize = parts.next()?.parse().ok()?;
    let asset = parts.next()?.to_string();
    let reducible = match red {
        "r" => true,
        "n" => false,
        _ => return None,
    };
    Some(ConstraintTag { equation, asset, step, reducible })
}

fn fmt_expr(out: &mut String, e: &AffineExpr) {
    for &(i, c) in &e.coeffs {
        let _ = write!(out, "{}:{} ", i, fmt_real(c));
    }
    let _ = write!(out, "{}", fmt_real(e.constant));
}

fn parse_expr(tokens: &[&str]) -> Option<AffineExpr> {
    let (&last, coefs) = tokens.split_last()?;
    let mut coeffs = Vec::with_capacity(coefs.len());
    for t in coefs {
        let (i, c) = t.split_once(':')?;
        coeffs.push((i.parse::<VarIdx>().ok()?, parse_real(c)?));
    }
    Some(AffineExpr { coeffs, constant: parse_real(last)? })
}

impl ConicProgram {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.variables {
            let kind = match v.kind {
                VarKind::Continuous => "c",
                VarKind::Binary => "b",
            };
            let _ = writeln!(
                out,
                "VAR {} {} {} {} {}",
                v.index,
                kind,
                fmt_real(v.lower),
                fmt_real(v.upper),
                v.name
            );
        }
        for r in &self.rows {
            let _ = write!(out, "ROW {} {} {}", r.rel, fmt_real(r.rhs), fmt_tag(&r.tag));
            for &(i, c) in &r.coeffs {
                let _ = write!(out, " {}:{}", i, fmt_real(c));
            }
            out.push('\n');
        }
        for s in &self.socs {
            let _ = write!(out, "SOC {} ", fmt_tag(&s.tag));
            fmt_expr(&mut out, &s.bound);
            let _ = write!(out, " |");
            for m in &s.members {
                out.push(' ');
                fmt_expr(&mut out, m);
                let _ = write!(out, " ;");
            }
            out.pop(); // trailing ';'
            out.pop();
            out.push('\n');
        }
        let _ = write!(out, "OBJ");
        for &(i, c) in &self.objective.coeffs {
            let _ = write!(out, " {}:{}", i, fmt_real(c));
        }
        let _ = writeln!(out, " {}", fmt_real(self.objective.constant));
        out
    }

    pub fn from_text(text: &str) -> Result<ConicProgram, ParseError> {
        let mut variables: Vec<VariableRef> = Vec::new();
        let mut rows = Vec::new();
        let mut socs = Vec::new();
        let mut objective = Objective::default();

        let err = |n: usize, m: &str| ParseError::Line(n + 1, m.to_string());

        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (kind, rest) =
                line.split_once(' ').ok_or_else(|| err(n, "missing record payload"))?;
            match kind {
                "VAR" => {
                    let mut it = rest.splitn(5, ' ');
                    let index: VarIdx = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(n, "bad variable index"))?;
                    let kind = match it.next() {
                        Some("c") => VarKind::Continuous,
                        Some("b") => VarKind::Binary,
                        _ => return Err(err(n, "bad variable kind")),
                    };
                    let lower = it
                        .next()
                        .and_then(parse_real)
                        .ok_or_else(|| err(n, "bad lower bound"))?;
                    let upper = it
                        .next()
                        .and_then(parse_real)
                        .ok_or_else(|| err(n, "bad upper bound"))?;
                    let name = it.next().unwrap_or("").to_string();
                    if index != variables.len() {
                        return Err(err(n, "variable indices must be dense and ordered"));
                    }
                    variables.push(VariableRef { index, kind, lower, upper, name });
                }
                "ROW" => {
                    let toks: Vec<&str> = rest.split(' ').collect();
                    if toks.len() < 3 {
                        return Err(err(n, "truncated row"));
                    }
                    let rel = match toks[0] {
                        "<=" => Relation::Le,
                        "=" => Relation::Eq,
                        ">=" => Relation::Ge,
                        _ => return Err(err(n, "bad relation")),
                    };
                    let rhs = parse_real(toks[1]).ok_or_else(|| err(n, "bad rhs"))?;
                    let tag = parse_tag(toks[2]).ok_or_else(|| err(n, "bad tag"))?;
                    let mut coeffs = Vec::with_capacity(toks.len() - 3);
                    for t in &toks[3..] {
                        let (i, c) = t.split_once(':').ok_or_else(|| err(n, "bad coefficient"))?;
                        coeffs.push((
                            i.parse::<VarIdx>().map_err(|_| err(n, "bad coefficient index"))?,
                            parse_real(c).ok_or_else(|| err(n, "bad coefficient value"))?,
                        ));
                    }
                    rows.push(LinearRow { coeffs, rel, rhs, tag });
                }
                "SOC" => {
                    let (tag_tok, exprs) =
                        rest.split_once(' ').ok_or_else(|| err(n, "truncated cone row"))?;
                    let tag = parse_tag(tag_tok).ok_or_else(|| err(n, "bad tag"))?;
                    let (bound_part, members_part) =
                        exprs.split_once(" | ").ok_or_else(|| err(n, "missing member list"))?;
                    let bound_toks: Vec<&str> = bound_part.split(' ').collect();
                    let bound = parse_expr(&bound_toks).ok_or_else(|| err(n, "bad bound expr"))?;
                    let mut members = Vec::new();
                    for m in members_part.split(" ; ") {
                        let toks: Vec<&str> = m.split(' ').collect();
                        members.push(parse_expr(&toks).ok_or_else(|| err(n, "bad member expr"))?);
                    }
                    socs.push(SocRow { members, bound, tag });
                }
                "OBJ" => {
                    let toks: Vec<&str> = rest.split(' ').collect();
                    let e = parse_expr(&toks).ok_or_else(|| err(n, "bad objective"))?;
                    objective = Objective { coeffs: e.coeffs, constant: e.constant };
                }
                _ => return Err(err(n, "unknown record kind")),
            }
        }

        let binaries = variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.index)
            .collect();
        Ok(ConicProgram { variables, rows, socs, objective, binaries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::ProgramBuilder;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut b = ProgramBuilder::new();
        let x = b.add_continuous("x", -1.5, f64::INFINITY);
        let y = b.add_continuous("y", f64::NEG_INFINITY, 3.0);
        let z = b.add_binary("z");
        b.add_row(
            vec![(x, 0.1), (y, -2.0 / 3.0)],
            Relation::Le,
            1.0 / 7.0,
            ConstraintTag::new(EquationId::Custom, "row/a", 2).reducible(),
        )
        .unwrap();
        b.add_soc(
            AffineExpr::term(y, 1.0),
            vec![AffineExpr::new(vec![(x, 1.0), (z, 0.3)], -0.25), AffineExpr::constant(2.0)],
            ConstraintTag::new(EquationId::HydrogenInverter, "hs", 0),
        )
        .unwrap();
        b.obj_term(x, std::f64::consts::PI);
        b.obj_const(-1e-17);
        let prog = b.build().unwrap();

        let text = prog.to_text();
        let parsed = ConicProgram::from_text(&text).unwrap();
        assert_eq!(prog, parsed);
        assert_eq!(text, parsed.to_text());
    }

    #[test]
    fn rejects_garbage() {
        assert!(ConicProgram::from_text("BLA nope\n").is_err());
        assert!(ConicProgram::from_text("ROW <= x custom@a:0:n\n").is_err());
    }
}
