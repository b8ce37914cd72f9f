//! Binary fixing and active-set reduction.

use std::collections::{BTreeMap, HashSet};

use super::{
    AffineExpr, ConicError, ConicProgram, ConstraintTag, LinearRow, Relation, SocRow, VarKind,
};

/// Tolerance when deciding whether a row that lost all its variables is
/// satisfied as a constant.
const CONST_ROW_TOL: f64 = 1e-9;

impl ConicProgram {
    /// Substitutes binary variables by the given 0/1 assignment.
    ///
    /// The assignment must cover exactly the binary set. Fixed variables
    /// are replaced by their constant in every row and the objective and
    /// become continuous with pinned bounds, so indices stay stable. Rows
    /// that reduce to a satisfied constant are dropped; a violated
    /// constant row is an error.
    pub fn fix_binaries(
        &self,
        assignment: &BTreeMap<usize, u8>,
    ) -> Result<ConicProgram, ConicError> {
        for &b in &self.binaries {
            if !assignment.contains_key(&b) {
                return Err(ConicError::IncompleteAssignment(b));
            }
        }
        for (&idx, &v) in assignment {
            if !self.binaries.contains(&idx) {
                return Err(ConicError::IncompleteAssignment(idx));
            }
            if v > 1 {
                return Err(ConicError::NonBinaryValue(idx));
            }
        }

        let value = |i: usize| assignment.get(&i).map(|&v| v as f64);

        let mut variables = self.variables.clone();
        for (&idx, &v) in assignment {
            let var = &mut variables[idx];
            var.kind = VarKind::Continuous;
            var.lower = v as f64;
            var.upper = v as f64;
        }

        let mut rows = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut kept = Vec::with_capacity(row.coeffs.len());
            let mut shift = 0.0;
            for &(i, c) in &row.coeffs {
                match value(i) {
                    Some(v) => shift += c * v,
                    None => kept.push((i, c)),
                }
            }
            let rhs = row.rhs - shift;
            if kept.is_empty() {
                let ok = match row.rel {
                    Relation::Le => 0.0 <= rhs + CONST_ROW_TOL,
                    Relation::Ge => 0.0 >= rhs - CONST_ROW_TOL,
                    Relation::Eq => rhs.abs() <= CONST_ROW_TOL,
                };
                if ok {
                    continue; // constant-true row drops out
                }
                return Err(ConicError::ContradictoryRow(row.tag.to_string()));
            }
            rows.push(LinearRow { coeffs: kept, rel: row.rel, rhs, tag: row.tag.clone() });
        }

        let subst = |e: &AffineExpr| -> AffineExpr {
            let mut kept = Vec::with_capacity(e.coeffs.len());
            let mut constant = e.constant;
            for &(i, c) in &e.coeffs {
                match value(i) {
                    Some(v) => constant += c * v,
                    None => kept.push((i, c)),
                }
            }
            AffineExpr { coeffs: kept, constant }
        };

        let mut socs = Vec::with_capacity(self.socs.len());
        for soc in &self.socs {
            let bound = subst(&soc.bound);
            let members: Vec<AffineExpr> = soc.members.iter().map(subst).collect();
            if bound.coeffs.is_empty() && members.iter().all(|m| m.coeffs.is_empty()) {
                let norm = members.iter().map(|m| m.constant.powi(2)).sum::<f64>().sqrt();
                if norm <= bound.constant + CONST_ROW_TOL {
                    continue;
                }
                return Err(ConicError::ContradictoryRow(soc.tag.to_string()));
            }
            socs.push(SocRow { members, bound, tag: soc.tag.clone() });
        }

        let mut objective = self.objective.clone();
        let mut kept = Vec::with_capacity(objective.coeffs.len());
        for &(i, c) in &objective.coeffs {
            match value(i) {
                Some(v) => objective.constant += c * v,
                None => kept.push((i, c)),
            }
        }
        objective.coeffs = kept;

        Ok(ConicProgram { variables, rows, socs, objective, binaries: Vec::new() })
    }

    /// Keeps equality rows, non-reducible rows, and reducible rows whose
    /// tag is listed in `active`. Variable bounds are untouched.
    ///
    /// The program must be continuous (run [`fix_binaries`] first).
    ///
    /// [`fix_binaries`]: ConicProgram::fix_binaries
    pub fn reduce_to_active(
        &self,
        active: &HashSet<ConstraintTag>,
    ) -> Result<ConicProgram, ConicError> {
        if !self.binaries.is_empty() {
            return Err(ConicError::HasBinaries);
        }
        let reducible: HashSet<&ConstraintTag> = self.reducible_tags().into_iter().collect();
        for tag in active {
            if !reducible.contains(tag) {
                return Err(ConicError::UnknownTag(tag.to_string()));
            }
        }
        let rows = self
            .rows
            .iter()
            .filter(|r| r.rel == Relation::Eq || !r.tag.reducible || active.contains(&r.tag))
            .cloned()
            .collect();
        let socs = self
            .socs
            .iter()
            .filter(|s| !s.tag.reducible || active.contains(&s.tag))
            .cloned()
            .collect();
        Ok(ConicProgram {
            variables: self.variables.clone(),
            rows,
            socs,
            objective: self.objective.clone(),
            binaries: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{EquationId, ProgramBuilder};

    fn tag(asset: &str) -> ConstraintTag {
        ConstraintTag::new(EquationId::Custom, asset, 0)
    }

    #[test]
    fn fixing_substitutes_constant() {
        // x <= 5 b, with b = 0, becomes x <= 0
        let mut bld = ProgramBuilder::new();
        let b = bld.add_binary("b");
        let x = bld.add_continuous("x", 0.0, 10.0);
        bld.add_row(vec![(x, 1.0), (b, -5.0)], Relation::Le, 0.0, tag("gate")).unwrap();
        let prog = bld.build().unwrap();

        let fixed = prog.fix_binaries(&BTreeMap::from([(b, 0u8)])).unwrap();
        assert!(fixed.binaries.is_empty());
        assert_eq!(fixed.rows.len(), 1);
        assert_eq!(fixed.rows[0].coeffs, vec![(x, 1.0)]);
        assert_eq!(fixed.rows[0].rhs, 0.0);
        assert_eq!(fixed.variables[b].lower, 0.0);
        assert_eq!(fixed.variables[b].upper, 0.0);
    }

    #[test]
    fn constant_true_row_dropped() {
        // b_we + b_fc <= 1 with (1, 0) drops out
        let mut bld = ProgramBuilder::new();
        let we = bld.add_binary("we");
        let fc = bld.add_binary("fc");
        bld.add_row(vec![(we, 1.0), (fc, 1.0)], Relation::Le, 1.0, tag("mutex")).unwrap();
        let prog = bld.build().unwrap();

        let fixed = prog.fix_binaries(&BTreeMap::from([(we, 1u8), (fc, 0u8)])).unwrap();
        assert!(fixed.rows.is_empty());
    }

    #[test]
    fn constant_false_row_errors() {
        let mut bld = ProgramBuilder::new();
        let we = bld.add_binary("we");
        let fc = bld.add_binary("fc");
        bld.add_row(vec![(we, 1.0), (fc, 1.0)], Relation::Le, 1.0, tag("mutex")).unwrap();
        let prog = bld.build().unwrap();

        let err = prog.fix_binaries(&BTreeMap::from([(we, 1u8), (fc, 1u8)])).unwrap_err();
        assert!(matches!(err, ConicError::ContradictoryRow(_)));
    }

    #[test]
    fn incomplete_assignment_errors() {
        let mut bld = ProgramBuilder::new();
        let b0 = bld.add_binary("b0");
        let _b1 = bld.add_binary("b1");
        let prog = bld.build().unwrap();
        let err = prog.fix_binaries(&BTreeMap::from([(b0, 1u8)])).unwrap_err();
        assert!(matches!(err, ConicError::IncompleteAssignment(_)));
    }

    #[test]
    fn reduction_keeps_equalities_and_inactive_nonreducible() {
        let mut bld = ProgramBuilder::new();
        let x = bld.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
        bld.add_row(vec![(x, 1.0)], Relation::Ge, 1.0, tag("lo").reducible()).unwrap();
        bld.add_row(vec![(x, 1.0)], Relation::Le, 9.0, tag("hi").reducible()).unwrap();
        bld.add_row(vec![(x, 2.0)], Relation::Le, 100.0, tag("keep")).unwrap();
        bld.obj_term(x, 1.0);
        let prog = bld.build().unwrap();

        let active = HashSet::from([tag("lo").reducible()]);
        let reduced = prog.reduce_to_active(&active).unwrap();
        let tags: Vec<String> = reduced.rows.iter().map(|r| r.tag.asset.clone()).collect();
        assert_eq!(tags, vec!["lo", "keep"]);
    }

    #[test]
    fn empty_active_set_strips_all_reducible() {
        let mut bld = ProgramBuilder::new();
        let x = bld.add_continuous("x", 0.0, 10.0);
        bld.add_row(vec![(x, 1.0)], Relation::Ge, 1.0, tag("lo").reducible()).unwrap();
        bld.add_row(vec![(x, 1.0)], Relation::Eq, 2.0, tag("eq")).unwrap();
        let prog = bld.build().unwrap();
        let reduced = prog.reduce_to_active(&HashSet::new()).unwrap();
        assert_eq!(reduced.rows.len(), 1);
        assert_eq!(reduced.rows[0].tag.asset, "eq");
    }

    #[test]
    fn unknown_active_tag_errors() {
        let bld = ProgramBuilder::new();
        let prog = bld.build().unwrap();
        let err = prog.reduce_to_active(&HashSet::from([tag("ghost").reducible()])).unwrap_err();
        assert!(matches!(err, ConicError::UnknownTag(_)));
    }
}
