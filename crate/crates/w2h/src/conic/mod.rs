//! Canonical mixed-integer second-order cone programs.
//!
//! A [`ConicProgram`] is a minimization over variables with box bounds,
//! linear rows (`<=`, `=`, `>=`), and second-order cone rows
//! `||(u_1..u_k)|| <= t` with affine members. Every row carries a
//! [`ConstraintTag`] naming the physical constraint, the asset, and the
//! time step it was instantiated for; tags are unique within a program and
//! are the currency of active-set bookkeeping.

mod serialize;
mod transform;

pub use serialize::ParseError;

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

pub type VarIdx = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// A declared decision variable with box bounds.
///
/// Binary variables always carry bounds `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableRef {
    pub index: VarIdx,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Le => write!(f, "<="),
            Relation::Eq => write!(f, "="),
            Relation::Ge => write!(f, ">="),
        }
    }
}

/// Identifies which physical constraint family a row instantiates.
///
/// Names describe what the row does, not where it sits in any document.
/// `Custom` is for hand-assembled programs (tests, random instances).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EquationId {
    // power section
    VoltageDrop,
    LineCurrentCone,
    LineApparentPower,
    ActiveBalance,
    ReactiveBalance,
    NetTransfer,
    HydrogenInjection,
    WindInverter,
    WedgCap,
    // water section
    WaterBalance,
    HeadEnvUpperChord,
    HeadEnvLowerChord,
    HeadEnvLowerTangent,
    HeadEnvUpperTangent,
    DesalPowerSeg,
    DesalFlowGate,
    PumpHeadLower,
    PumpHeadUpper,
    PumpFlowGate,
    PumpCurveLink,
    PumpPowerLower,
    PumpPowerUpper,
    TankVolume,
    TankHead,
    PrvUpper,
    PrvLower,
    // hydrogen section
    ElectrolysisConversion,
    ElectrolysisWater,
    HydrogenTankBalance,
    FuelCellConversion,
    HydrogenInverter,
    ElectrolysisFloor,
    ElectrolysisCap,
    FuelCellFloor,
    FuelCellCap,
    MutualExclusion,
    Downtime,
    ElectrolysisPin,
    // carbon capture and methanation
    CarbonFromDiesel,
    CarbonSplit,
    ChemicalIncome,
    // free-form rows for tests and generated instances
    Custom,
}

impl EquationId {
    pub fn as_str(&self) -> &'static str {
        use EquationId::*;
        match self {
            VoltageDrop => "voltage-drop",
            LineCurrentCone => "line-current-cone",
            LineApparentPower => "line-apparent-power",
            ActiveBalance => "active-balance",
            ReactiveBalance => "reactive-balance",
            NetTransfer => "net-transfer",
            HydrogenInjection => "hydrogen-injection",
            WindInverter => "wind-inverter",
            WedgCap => "wedg-cap",
            WaterBalance => "water-balance",
            HeadEnvUpperChord => "head-env-upper-chord",
            HeadEnvLowerChord => "head-env-lower-chord",
            HeadEnvLowerTangent => "head-env-lower-tangent",
            HeadEnvUpperTangent => "head-env-upper-tangent",
            DesalPowerSeg => "desal-power-seg",
            DesalFlowGate => "desal-flow-gate",
            PumpHeadLower => "pump-head-lower",
            PumpHeadUpper => "pump-head-upper",
            PumpFlowGate => "pump-flow-gate",
            PumpCurveLink => "pump-curve-link",
            PumpPowerLower => "pump-power-lower",
            PumpPowerUpper => "pump-power-upper",
            TankVolume => "tank-volume",
            TankHead => "tank-head",
            PrvUpper => "prv-upper",
            PrvLower => "prv-lower",
            ElectrolysisConversion => "electrolysis-conversion",
            ElectrolysisWater => "electrolysis-water",
            HydrogenTankBalance => "hydrogen-tank-balance",
            FuelCellConversion => "fuel-cell-conversion",
            HydrogenInverter => "hydrogen-inverter",
            ElectrolysisFloor => "electrolysis-floor",
            ElectrolysisCap => "electrolysis-cap",
            FuelCellFloor => "fuel-cell-floor",
            FuelCellCap => "fuel-cell-cap",
            MutualExclusion => "mutual-exclusion",
            Downtime => "downtime",
            ElectrolysisPin => "electrolysis-pin",
            CarbonFromDiesel => "carbon-from-diesel",
            CarbonSplit => "carbon-split",
            ChemicalIncome => "chemical-income",
            Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<EquationId> {
        use EquationId::*;
        Some(match s {
            "voltage-drop" => VoltageDrop,
            "line-current-cone" => LineCurrentCone,
            "line-apparent-power" => LineApparentPower,
            "active-balance" => ActiveBalance,
            "reactive-balance" => ReactiveBalance,
            "net-transfer" => NetTransfer,
            "hydrogen-injection" => HydrogenInjection,
            "wind-inverter" => WindInverter,
            "wedg-cap" => WedgCap,
            "water-balance" => WaterBalance,
            "head-env-upper-chord" => HeadEnvUpperChord,
            "head-env-lower-chord" => HeadEnvLowerChord,
            "head-env-lower-tangent" => HeadEnvLowerTangent,
            "head-env-upper-tangent" => HeadEnvUpperTangent,
            "desal-power-seg" => DesalPowerSeg,
            "desal-flow-gate" => DesalFlowGate,
            "pump-head-lower" => PumpHeadLower,
            "pump-head-upper" => PumpHeadUpper,
            "pump-flow-gate" => PumpFlowGate,
            "pump-curve-link" => PumpCurveLink,
            "pump-power-lower" => PumpPowerLower,
            "pump-power-upper" => PumpPowerUpper,
            "tank-volume" => TankVolume,
            "tank-head" => TankHead,
            "prv-upper" => PrvUpper,
            "prv-lower" => PrvLower,
            "electrolysis-conversion" => ElectrolysisConversion,
            "electrolysis-water" => ElectrolysisWater,
            "hydrogen-tank-balance" => HydrogenTankBalance,
            "fuel-cell-conversion" => FuelCellConversion,
            "hydrogen-inverter" => HydrogenInverter,
            "electrolysis-floor" => ElectrolysisFloor,
            "electrolysis-cap" => ElectrolysisCap,
            "fuel-cell-floor" => FuelCellFloor,
            "fuel-cell-cap" => FuelCellCap,
            "mutual-exclusion" => MutualExclusion,
            "downtime" => Downtime,
            "electrolysis-pin" => ElectrolysisPin,
            "carbon-from-diesel" => CarbonFromDiesel,
            "carbon-split" => CarbonSplit,
            "chemical-income" => ChemicalIncome,
            "custom" => Custom,
            _ => return None,
        })
    }
}

/// Identity of one instantiated constraint: `(equation, asset, step)` is
/// unique within a program. `reducible` marks inequalities that may be
/// dropped when inactive at optimality; equalities, relaxation cones, and
/// variable bounds are never reducible.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintTag {
    pub equation: EquationId,
    pub asset: String,
    pub step: usize,
    pub reducible: bool,
}

impl ConstraintTag {
    pub fn new(equation: EquationId, asset: impl Into<String>, step: usize) -> Self {
        ConstraintTag { equation, asset: asset.into(), step, reducible: false }
    }

    pub fn reducible(mut self) -> Self {
        self.reducible = true;
        self
    }

    #[cfg(test)]
    fn key(&self) -> (EquationId, &str, usize) {
        (self.equation, &self.asset, self.step)
    }
}

impl fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}@{}:{}{}",
            self.equation.as_str(),
            self.asset,
            self.step,
            if self.reducible { "*" } else { "" }
        )
    }
}

/// Sparse linear row `coeffs . x  rel  rhs`. Coefficients are sorted by
/// variable index and hold no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(VarIdx, f64)>,
    pub rel: Relation,
    pub rhs: f64,
    pub tag: ConstraintTag,
}

/// Sparse affine expression `coeffs . x + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub coeffs: Vec<(VarIdx, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr { coeffs: Vec::new(), constant: c }
    }

    pub fn term(idx: VarIdx, coef: f64) -> Self {
        AffineExpr { coeffs: vec![(idx, coef)], constant: 0.0 }
    }

    pub fn new(coeffs: Vec<(VarIdx, f64)>, constant: f64) -> Self {
        AffineExpr { coeffs, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }
}

/// Second-order cone row `||(members)|| <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocRow {
    pub members: Vec<AffineExpr>,
    pub bound: AffineExpr,
    pub tag: ConstraintTag,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Objective {
    pub coeffs: Vec<(VarIdx, f64)>,
    pub constant: f64,
}

impl Objective {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }
}

/// A validated, immutable mixed-integer second-order cone program.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub variables: Vec<VariableRef>,
    pub rows: Vec<LinearRow>,
    pub socs: Vec<SocRow>,
    pub objective: Objective,
    pub binaries: Vec<VarIdx>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConicError {
    #[error("duplicate constraint tag {0}")]
    DuplicateTag(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("reference to undeclared variable {0}")]
    UndeclaredVariable(VarIdx),
    #[error("variable {0}: lower bound exceeds upper bound")]
    BadBounds(VarIdx),
    #[error("binary variable {0} must have bounds [0, 1]")]
    BadBinaryBounds(VarIdx),
    #[error("empty second-order cone row {0}")]
    EmptyCone(String),
    #[error("assignment does not cover exactly the binary set (missing or extra index {0})")]
    IncompleteAssignment(VarIdx),
    #[error("assignment value for variable {0} is not 0 or 1")]
    NonBinaryValue(VarIdx),
    #[error("row {0} reduces to a violated constant after fixing")]
    ContradictoryRow(String),
    #[error("program still contains binary variables")]
    HasBinaries,
    #[error("active set references unknown or non-reducible tag {0}")]
    UnknownTag(String),
}

impl ConicProgram {
    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    /// Tags of all reducible rows, in program order (linear rows first,
    /// then cone rows). This order is the canonical active-set bit layout.
    pub fn reducible_tags(&self) -> Vec<&ConstraintTag> {
        self.rows
            .iter()
            .filter(|r| r.tag.reducible)
            .map(|r| &r.tag)
            .chain(self.socs.iter().filter(|s| s.tag.reducible).map(|s| &s.tag))
            .collect()
    }

    /// Largest absolute value among coefficients, bounds, and objective
    /// entries; used for relative tolerance scaling.
    pub fn data_norm(&self) -> f64 {
        let mut m = 0.0f64;
        for r in &self.rows {
            for &(_, c) in &r.coeffs {
                m = m.max(c.abs());
            }
            m = m.max(r.rhs.abs());
        }
        for s in &self.socs {
            for e in s.members.iter().chain(std::iter::once(&s.bound)) {
                for &(_, c) in &e.coeffs {
                    m = m.max(c.abs());
                }
                m = m.max(e.constant.abs());
            }
        }
        for &(_, c) in &self.objective.coeffs {
            m = m.max(c.abs());
        }
        m
    }

    /// Maximum violation of all rows, cone rows, and variable bounds at
    /// `x`. Zero for a feasible point (binaries are not rounded here).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v = 0.0f64;
        for var in &self.variables {
            v = v.max(var.lower - x[var.index]);
            v = v.max(x[var.index] - var.upper);
        }
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(i, c)| c * x[i]).sum();
            match row.rel {
                Relation::Le => v = v.max(lhs - row.rhs),
                Relation::Ge => v = v.max(row.rhs - lhs),
                Relation::Eq => v = v.max((lhs - row.rhs).abs()),
            }
        }
        for soc in &self.socs {
            let norm = soc.members.iter().map(|m| m.eval(x).powi(2)).sum::<f64>().sqrt();
            v = v.max(norm - soc.bound.eval(x));
        }
        v
    }
}

/// Single-owner builder; the resulting program is immutable and shareable.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    variables: Vec<VariableRef>,
    rows: Vec<LinearRow>,
    socs: Vec<SocRow>,
    objective: Objective,
    tags: HashSet<(EquationId, String, usize)>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> VarIdx {
        let index = self.variables.len();
        self.variables.push(VariableRef { index, kind, lower, upper, name: name.into() });
        index
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarIdx {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarIdx {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn add_row(
        &mut self,
        coeffs: Vec<(VarIdx, f64)>,
        rel: Relation,
        rhs: f64,
        tag: ConstraintTag,
    ) -> Result<(), ConicError> {
        self.check_tag(&tag)?;
        let coeffs = self.normalize(coeffs, &tag)?;
        if !rhs.is_finite() {
            return Err(ConicError::NonFinite(tag.to_string()));
        }
        self.rows.push(LinearRow { coeffs, rel, rhs, tag });
        Ok(())
    }

    pub fn add_soc(
        &mut self,
        bound: AffineExpr,
        members: Vec<AffineExpr>,
        tag: ConstraintTag,
    ) -> Result<(), ConicError> {
        self.check_tag(&tag)?;
        if members.is_empty() {
            return Err(ConicError::EmptyCone(tag.to_string()));
        }
        let bound = AffineExpr {
            coeffs: self.normalize(bound.coeffs, &tag)?,
            constant: finite(bound.constant, &tag)?,
        };
        let members = members
            .into_iter()
            .map(|m| {
                Ok(AffineExpr {
                    coeffs: self.normalize(m.coeffs, &tag)?,
                    constant: finite(m.constant, &tag)?,
                })
            })
            .collect::<Result<Vec<_>, ConicError>>()?;
        self.socs.push(SocRow { members, bound, tag });
        Ok(())
    }

    /// Adds `coef` to the objective coefficient of `idx`.
    pub fn obj_term(&mut self, idx: VarIdx, coef: f64) {
        match self.objective.coeffs.binary_search_by_key(&idx, |&(i, _)| i) {
            Ok(pos) => self.objective.coeffs[pos].1 += coef,
            Err(pos) => self.objective.coeffs.insert(pos, (idx, coef)),
        }
    }

    pub fn obj_const(&mut self, c: f64) {
        self.objective.constant += c;
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn build(self) -> Result<ConicProgram, ConicError> {
        for v in &self.variables {
            if v.lower > v.upper {
                return Err(ConicError::BadBounds(v.index));
            }
            if v.kind == VarKind::Binary && (v.lower != 0.0 || v.upper != 1.0) {
                return Err(ConicError::BadBinaryBounds(v.index));
            }
        }
        for &(i, c) in &self.objective.coeffs {
            if i >= self.variables.len() {
                return Err(ConicError::UndeclaredVariable(i));
            }
            if !c.is_finite() {
                return Err(ConicError::NonFinite("objective".into()));
            }
        }
        if !self.objective.constant.is_finite() {
            return Err(ConicError::NonFinite("objective".into()));
        }
        let binaries = self
            .variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.index)
            .collect();
        Ok(ConicProgram {
            variables: self.variables,
            rows: self.rows,
            socs: self.socs,
            objective: self.objective,
            binaries,
        })
    }

    fn check_tag(&mut self, tag: &ConstraintTag) -> Result<(), ConicError> {
        let key = (tag.equation, tag.asset.clone(), tag.step);
        if !self.tags.insert(key) {
            return Err(ConicError::DuplicateTag(tag.to_string()));
        }
        Ok(())
    }

    /// Sorts by index, merges duplicates, validates references and values.
    fn normalize(
        &self,
        mut coeffs: Vec<(VarIdx, f64)>,
        tag: &ConstraintTag,
    ) -> Result<Vec<(VarIdx, f64)>, ConicError> {
        coeffs.sort_by_key(|&(i, _)| i);
        let mut out: Vec<(VarIdx, f64)> = Vec::with_capacity(coeffs.len());
        for (i, c) in coeffs {
            if i >= self.variables.len() {
                return Err(ConicError::UndeclaredVariable(i));
            }
            if !c.is_finite() {
                return Err(ConicError::NonFinite(tag.to_string()));
            }
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        Ok(out)
    }
}

fn finite(v: f64, tag: &ConstraintTag) -> Result<f64, ConicError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConicError::NonFinite(tag.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(asset: &str, step: usize) -> ConstraintTag {
        ConstraintTag::new(EquationId::Custom, asset, step)
    }

    #[test]
    fn empty_build() {
        let prog = ProgramBuilder::new().build().unwrap();
        assert_eq!(prog.num_vars(), 0);
        assert_eq!(prog.rows.len(), 0);
        assert_eq!(prog.socs.len(), 0);
    }

    #[test]
    fn single_binary_and_row() {
        let mut b = ProgramBuilder::new();
        let x = b.add_binary("x");
        b.add_row(vec![(x, 1.0)], Relation::Le, 1.0, tag("r", 0)).unwrap();
        let prog = b.build().unwrap();
        assert_eq!(prog.num_vars(), 1);
        assert_eq!(prog.rows.len(), 1);
        assert_eq!(prog.binaries, vec![x]);
    }

    #[test]
    fn duplicate_tag_rejected() {
        let mut b = ProgramBuilder::new();
        let x = b.add_continuous("x", 0.0, 1.0);
        b.add_row(vec![(x, 1.0)], Relation::Le, 1.0, tag("r", 0)).unwrap();
        let err = b.add_row(vec![(x, 1.0)], Relation::Ge, 0.0, tag("r", 0)).unwrap_err();
        assert!(matches!(err, ConicError::DuplicateTag(_)));
    }

    #[test]
    fn non_finite_coefficient_rejected() {
        let mut b = ProgramBuilder::new();
        let x = b.add_continuous("x", 0.0, 1.0);
        let err = b.add_row(vec![(x, f64::NAN)], Relation::Le, 1.0, tag("r", 0)).unwrap_err();
        assert!(matches!(err, ConicError::NonFinite(_)));
    }

    #[test]
    fn undeclared_variable_rejected() {
        let mut b = ProgramBuilder::new();
        let err = b.add_row(vec![(3, 1.0)], Relation::Le, 1.0, tag("r", 0)).unwrap_err();
        assert_eq!(err, ConicError::UndeclaredVariable(3));
    }

    #[test]
    fn duplicate_indices_merge() {
        let mut b = ProgramBuilder::new();
        let x = b.add_continuous("x", 0.0, 1.0);
        b.add_row(vec![(x, 1.0), (x, 2.0)], Relation::Le, 1.0, tag("r", 0)).unwrap();
        let prog = b.build().unwrap();
        assert_eq!(prog.rows[0].coeffs, vec![(x, 3.0)]);
    }

    #[test]
    fn tag_identity_is_equation_asset_step() {
        let a = ConstraintTag::new(EquationId::WaterBalance, "n1", 3).reducible();
        let b = ConstraintTag::new(EquationId::WaterBalance, "n1", 3);
        assert_eq!(a.key(), b.key());
        assert_ne!(a, b); // reducible differs; builders never mix the two
    }
}
