//! Rolling-horizon controllers and the surrogate path with feasibility
//! repair.
//!
//! Each executed step solves the remaining-day problem (shrinking
//! horizon) built from the measurement-updated scenario, with tank levels
//! rolled forward and — for alkaline electrolysis — the on/off prefix
//! pinned to the previous solution over the lockout window. The solve
//! runs either exactly (branch-and-bound) or through a predicted-strategy
//! surrogate; surrogate points are verified against the full fixed
//! program and repaired by re-solving when the prediction was wrong.
//!
//! Strategies are predicted for the fixed full-day shape and restricted
//! to the remaining steps by their `(asset, step)` addresses; every
//! reducible row is per-step local, so the restriction is exact.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Instant;

use thiserror::Error;

use crate::bnb::{solve_misocp, MixedStatus};
use crate::conic::{ConicProgram, ConstraintTag};
use crate::learn::{MultiStagePredictor, StrategyBits};
use crate::model::{
    assemble, IndexMaps, Scenario, SpecError, Symbol, SystemSpec, Technology,
};
use crate::solver::{solve_socp, ContinuousSolution, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Full,
    Acivp,
    Fse,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Acivp => "acivp",
            Method::Fse => "fse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepairLevel {
    /// surrogate point accepted as-is (or exact method)
    None,
    /// constraint violation detected; fixed-binary full program re-solved
    ConstraintLevel,
    /// fixed-binary program infeasible; full mixed-integer fallback
    FullFallback,
}

impl RepairLevel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RepairLevel::None => "none",
            RepairLevel::ConstraintLevel => "constraint",
            RepairLevel::FullFallback => "full",
        }
    }
}

/// Feasibility tolerance when accepting a surrogate point against the
/// full model.
pub const ACCEPT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("simulation needs technology {0}")]
    WrongTechnology(&'static str),
    #[error("scenario stream exhausted at step {0}")]
    StreamExhausted(usize),
    #[error("step {step}: unrecoverable infeasibility ({detail})")]
    Unrecoverable { step: usize, detail: String },
    #[error("surrogate method requires a predictor")]
    MissingPredictor,
    #[error("predictor layout does not match the assembled program: {0}")]
    LayoutMismatch(String),
}

/// Realized measurements alongside the forecasts the controller sees for
/// future steps. Both cover the full day.
#[derive(Debug, Clone)]
pub struct ScenarioStream {
    pub forecast: Scenario,
    pub realized: Scenario,
}

impl ScenarioStream {
    /// Forecast-only stream (realized equals forecast).
    pub fn perfect(scenario: Scenario) -> ScenarioStream {
        ScenarioStream { forecast: scenario.clone(), realized: scenario }
    }

    /// What the controller knows at step `t`: realized values through
    /// `t`, forecasts beyond.
    pub fn known_at(&self, t: usize) -> Scenario {
        let mix = |r: &[f64], f: &[f64]| -> Vec<f64> {
            r[..=t].iter().chain(f[t + 1..].iter()).copied().collect()
        };
        let mix_map = |r: &HashMap<String, Vec<f64>>, f: &HashMap<String, Vec<f64>>| {
            r.iter()
                .map(|(k, rv)| {
                    let fv = f.get(k).unwrap_or(rv);
                    (k.clone(), mix(rv, fv))
                })
                .collect()
        };
        Scenario {
            steps: self.realized.steps,
            step_minutes: self.realized.step_minutes,
            wind_speed: mix(&self.realized.wind_speed, &self.forecast.wind_speed),
            bus_load_p: mix_map(&self.realized.bus_load_p, &self.forecast.bus_load_p),
            bus_load_q: mix_map(&self.realized.bus_load_q, &self.forecast.bus_load_q),
            water_demand: mix_map(&self.realized.water_demand, &self.forecast.water_demand),
            hydrogen_demand: mix(&self.realized.hydrogen_demand, &self.forecast.hydrogen_demand),
            realized_prefix: t + 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub method: Method,
    pub repair: RepairLevel,
    /// wall clock around the solve call only
    pub solve_seconds: f64,
    /// objective of the remaining-day problem
    pub objective: f64,
    /// cost incurred by the executed first step
    pub step_cost: f64,
    /// whether the predicted strategy matched the one used after repair
    pub prediction_held: Option<bool>,
    pub bwe: u8,
    pub bfc: u8,
    /// executed dispatch in physical units
    pub dispatch: Dispatch,
    /// electrolyzer statuses pinned for the lockout window at this step
    pub pinned_window: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct Dispatch {
    pub pwe_mw: f64,
    pub pfc_mw: f64,
    pub pt_mw: f64,
    pub pdg_mw: f64,
    pub pwedg_mw: f64,
    pub psw_mw: f64,
    pub ce_t: f64,
    pub cs_t: f64,
    pub cchi_t: f64,
    pub vht_kg: f64,
    pub load_mw: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub method: Method,
    pub steps: Vec<StepRecord>,
}

impl SimulationTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "step,method,repair,solve_seconds,objective,step_cost,prediction_held,bwe,bfc,\
             pwe_mw,pfc_mw,pt_mw,pdg_mw,pwedg_mw,psw_mw,ce_t,cs_t,cchi_t,vht_kg,load_mw\n",
        );
        for r in &self.steps {
            let held = match r.prediction_held {
                None => "".to_string(),
                Some(v) => v.to_string(),
            };
            out.push_str(&format!(
                "{},{},{},{:.6},{:.10e},{:.10e},{},{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                r.step,
                r.method.as_str(),
                r.repair.as_str(),
                r.solve_seconds,
                r.objective,
                r.step_cost,
                held,
                r.bwe,
                r.bfc,
                r.dispatch.pwe_mw,
                r.dispatch.pfc_mw,
                r.dispatch.pt_mw,
                r.dispatch.pdg_mw,
                r.dispatch.pwedg_mw,
                r.dispatch.psw_mw,
                r.dispatch.ce_t,
                r.dispatch.cs_t,
                r.dispatch.cchi_t,
                r.dispatch.vht_kg,
                r.dispatch.load_mw,
            ));
        }
        out
    }

    /// Stacked-dispatch data: per step, the generation components serving
    /// the system, in MW.
    pub fn plot_csv(&self) -> String {
        let mut out =
            String::from("step,load_mw,diesel_mw,wind_grid_mw,electrolysis_mw,fuel_cell_mw,wedg_mw,transfer_mw\n");
        for r in &self.steps {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.step,
                r.dispatch.load_mw,
                r.dispatch.pdg_mw,
                r.dispatch.psw_mw,
                r.dispatch.pwe_mw,
                r.dispatch.pfc_mw,
                r.dispatch.pwedg_mw,
                r.dispatch.pt_mw,
            ));
        }
        out
    }
}

pub struct SimOptions {
    pub node_limit: usize,
    pub eps_active: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { node_limit: 200_000, eps_active: 1e-6 }
    }
}

/// Builds the continuous surrogate of `prog`: binaries fixed to the
/// strategy, inactive reducible rows removed.
pub fn build_surrogate(
    prog: &ConicProgram,
    maps: &IndexMaps,
    strategy: &StrategyLookup,
    offset: usize,
) -> Result<ConicProgram, SimError> {
    let assignment = strategy.assignment(maps, offset)?;
    let fixed = prog
        .fix_binaries(&assignment)
        .map_err(|e| SimError::Unrecoverable { step: offset, detail: e.to_string() })?;
    let active = strategy.active_tags(&fixed, offset)?;
    fixed
        .reduce_to_active(&active)
        .map_err(|e| SimError::LayoutMismatch(e.to_string()))
}

/// A predicted strategy addressed by `(kind, asset, step)` for binaries
/// and constraint tags for the active set, so it can be restricted to a
/// suffix of the day.
pub struct StrategyLookup {
    binaries: HashMap<(crate::model::BinaryKind, String, usize), u8>,
    active: HashMap<ConstraintTag, u8>,
}

impl StrategyLookup {
    pub fn new(pred: &MultiStagePredictor, bits: &StrategyBits) -> StrategyLookup {
        let mut binaries = HashMap::new();
        for ((kind, asset, step), &v) in pred.layout.binaries.iter().zip(&bits.binaries) {
            binaries.insert((*kind, asset.clone(), *step), v);
        }
        let mut active = HashMap::new();
        for (tag, &v) in pred.layout.reducible_tags.iter().zip(&bits.active) {
            active.insert(tag.clone(), v);
        }
        StrategyLookup { binaries, active }
    }

    /// Binary assignment for a program whose step 0 is absolute step
    /// `offset` of the trained layout.
    pub fn assignment(
        &self,
        maps: &IndexMaps,
        offset: usize,
    ) -> Result<BTreeMap<usize, u8>, SimError> {
        let mut out = BTreeMap::new();
        for meta in &maps.binaries {
            let key = (meta.kind, meta.asset.clone(), meta.step + offset);
            let v = self.binaries.get(&key).copied().ok_or_else(|| {
                SimError::LayoutMismatch(format!(
                    "no predicted bit for {:?} {} step {}",
                    meta.kind,
                    meta.asset,
                    meta.step + offset
                ))
            })?;
            out.insert(meta.var, v);
        }
        Ok(out)
    }

    /// Active tags for the (fixed) program, shifting each reducible tag
    /// by `offset` into the trained layout.
    pub fn active_tags(
        &self,
        fixed: &ConicProgram,
        offset: usize,
    ) -> Result<HashSet<ConstraintTag>, SimError> {
        let mut out = HashSet::new();
        for tag in fixed.reducible_tags() {
            let mut key = tag.clone();
            key.step += offset;
            let v = self.active.get(&key).copied().ok_or_else(|| {
                SimError::LayoutMismatch(format!("no predicted bit for row {key}"))
            })?;
            if v == 1 {
                out.insert(tag.clone());
            }
        }
        Ok(out)
    }
}

/// Checks a surrogate point against every row of the fixed full program;
/// on violation re-solves the fixed program, and escalates to the full
/// mixed-integer problem when even that is infeasible. Returns the
/// accepted solution, the assignment it came from, and the repair level.
pub fn verify_and_repair(
    surrogate_sol: &ContinuousSolution,
    full_prog: &ConicProgram,
    assignment: &BTreeMap<usize, u8>,
    node_limit: usize,
) -> Result<(ContinuousSolution, BTreeMap<usize, u8>, RepairLevel), SimError> {
    let fixed_full = match full_prog.fix_binaries(assignment) {
        Ok(p) => p,
        Err(_) => {
            // the predicted binaries contradict a pure-binary row
            return full_fallback(full_prog, node_limit);
        }
    };
    if surrogate_sol.status == SolveStatus::Optimal
        && fixed_full.max_violation(&surrogate_sol.primal) <= ACCEPT_TOL
    {
        return Ok((surrogate_sol.clone(), assignment.clone(), RepairLevel::None));
    }
    let mut resolved = solve_socp(&fixed_full, 1e-8).expect("fixed program is continuous");
    if resolved.status == SolveStatus::NumericalFailure {
        resolved = solve_socp(&fixed_full, 1e-6).expect("fixed program is continuous");
    }
    if resolved.status == SolveStatus::Optimal {
        return Ok((resolved, assignment.clone(), RepairLevel::ConstraintLevel));
    }
    full_fallback(full_prog, node_limit)
}

fn full_fallback(
    full_prog: &ConicProgram,
    node_limit: usize,
) -> Result<(ContinuousSolution, BTreeMap<usize, u8>, RepairLevel), SimError> {
    let sol = solve_misocp(full_prog, 0.0, node_limit)
        .map_err(|e| SimError::Unrecoverable { step: 0, detail: e.to_string() })?;
    match sol.status {
        MixedStatus::Optimal | MixedStatus::NodeLimit if sol.continuous.is_some() => Ok((
            sol.continuous.unwrap(),
            sol.binaries,
            RepairLevel::FullFallback,
        )),
        other => Err(SimError::Unrecoverable {
            step: 0,
            detail: format!("full fallback ended with {other:?}"),
        }),
    }
}

/// Rolling-horizon day with alkaline electrolysis: step 0 seeds the
/// lockout window from a full day-ahead solve; each step pins the window,
/// solves the remaining day by the chosen method, executes the first
/// step, and rolls the window and tank levels forward.
pub fn run_ael_day(
    spec: &SystemSpec,
    stream: &ScenarioStream,
    predictor: Option<&MultiStagePredictor>,
    method: Method,
    opts: &SimOptions,
) -> Result<SimulationTrace, SimError> {
    let Technology::Ael { downtime_steps } = spec.hydrogen.technology else {
        return Err(SimError::WrongTechnology("AEL"));
    };
    if method != Method::Full && predictor.is_none() {
        return Err(SimError::MissingPredictor);
    }
    let t_total = stream.forecast.steps;
    if stream.realized.steps != t_total || t_total == 0 {
        return Err(SimError::StreamExhausted(0));
    }

    // day-ahead seed: forecast-only full solve pins the first window
    let tech = spec.hydrogen.technology.clone();
    let (seed_prog, seed_maps) = assemble(spec, &stream.forecast, &tech, None)?;
    let seed = solve_misocp(&seed_prog, 0.0, opts.node_limit)
        .map_err(|e| SimError::Unrecoverable { step: 0, detail: e.to_string() })?;
    if seed.continuous.is_none() {
        return Err(SimError::Unrecoverable {
            step: 0,
            detail: format!("day-ahead seed solve ended with {:?}", seed.status),
        });
    }
    let mut window: Vec<u8> = (0..downtime_steps.min(t_total))
        .map(|t| seed.binaries[&seed_maps.require(Symbol::ElectrolysisOn, "", t)])
        .collect();

    let mut rolled = spec.clone();
    let mut trace = SimulationTrace { method, steps: Vec::new() };

    for t in 0..t_total {
        let known = stream.known_at(t);
        let step_scenario = known.tail(t);
        let prefix: Vec<u8> = window.iter().copied().take(step_scenario.steps).collect();
        let (prog, maps) = assemble(&rolled, &step_scenario, &tech, Some(&prefix))?;

        let record = solve_step(
            &rolled, &prog, &maps, &known, predictor, method, t, opts,
        )?;

        // roll tank levels to the executed end-of-step volumes
        let sol = &record.0;
        roll_tanks(&mut rolled, sol, &maps)?;

        // roll the pinned window: drop the executed head, append the
        // newly decided status at the lockout edge
        let bwe_next = if window.len() < step_scenario.steps {
            let idx = maps.require(Symbol::ElectrolysisOn, "", window.len());
            Some((sol.primal[idx]).round() as u8)
        } else {
            None
        };
        if !window.is_empty() {
            window.remove(0);
        }
        if let Some(b) = bwe_next {
            window.push(b);
        }

        let mut rec = record.1;
        rec.step = t;
        rec.pinned_window = prefix;
        trace.steps.push(rec);
    }
    Ok(trace)
}

/// One PEM step: the remaining-day problem without lockout rows or a
/// pinned prefix.
#[allow(clippy::too_many_arguments)]
pub fn run_pem_step(
    spec: &SystemSpec,
    known: &Scenario,
    t: usize,
    predictor: Option<&MultiStagePredictor>,
    method: Method,
    opts: &SimOptions,
) -> Result<(ContinuousSolution, StepRecord, SystemSpec), SimError> {
    if method != Method::Full && predictor.is_none() {
        return Err(SimError::MissingPredictor);
    }
    let step_scenario = known.tail(t);
    let (prog, maps) = assemble(spec, &step_scenario, &Technology::Pem, None)?;
    let (sol, mut rec) = solve_step(spec, &prog, &maps, known, predictor, method, t, opts)?;
    rec.step = t;
    let mut rolled = spec.clone();
    roll_tanks(&mut rolled, &sol, &maps)?;
    Ok((sol, rec, rolled))
}

/// Full PEM day: chains [`run_pem_step`] with rolled tank state.
pub fn run_pem_day(
    spec: &SystemSpec,
    stream: &ScenarioStream,
    predictor: Option<&MultiStagePredictor>,
    method: Method,
    opts: &SimOptions,
) -> Result<SimulationTrace, SimError> {
    if spec.hydrogen.technology != Technology::Pem {
        return Err(SimError::WrongTechnology("PEM"));
    }
    let mut rolled = spec.clone();
    let mut trace = SimulationTrace { method, steps: Vec::new() };
    for t in 0..stream.forecast.steps {
        let known = stream.known_at(t);
        let (_sol, rec, next) = run_pem_step(&rolled, &known, t, predictor, method, opts)?;
        rolled = next;
        trace.steps.push(rec);
    }
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn solve_step(
    spec: &SystemSpec,
    prog: &ConicProgram,
    maps: &IndexMaps,
    known: &Scenario,
    predictor: Option<&MultiStagePredictor>,
    method: Method,
    t: usize,
    opts: &SimOptions,
) -> Result<(ContinuousSolution, StepRecord), SimError> {
    let started = Instant::now();
    let (sol, repair, prediction_held) = match method {
        Method::Full => {
            let mixed = solve_misocp(prog, 0.0, opts.node_limit)
                .map_err(|e| SimError::Unrecoverable { step: t, detail: e.to_string() })?;
            let cont = mixed.continuous.clone().ok_or(SimError::Unrecoverable {
                step: t,
                detail: format!("exact solve ended with {:?}", mixed.status),
            })?;
            (cont, RepairLevel::None, None)
        }
        Method::Acivp | Method::Fse => {
            let pred = predictor.expect("checked above");
            let (phi, _) = crate::learn::features_of(spec, known);
            let bits = pred
                .predict(&phi)
                .map_err(|e| SimError::LayoutMismatch(e.to_string()))?;
            let lookup = StrategyLookup::new(pred, &bits);
            let assignment = lookup.assignment(maps, t)?;
            let surrogate = build_surrogate(prog, maps, &lookup, t)?;
            let mut ssol = solve_socp(&surrogate, 1e-8).expect("surrogate is continuous");
            if ssol.status == SolveStatus::NumericalFailure {
                ssol = solve_socp(&surrogate, 1e-6).expect("surrogate is continuous");
            }
            let (accepted, used_assignment, repair) =
                verify_and_repair(&ssol, prog, &assignment, opts.node_limit)?;
            let held = repair == RepairLevel::None && used_assignment == assignment;
            (accepted, repair, Some(held))
        }
    };
    let solve_seconds = started.elapsed().as_secs_f64();

    let x = &sol.primal;
    let base = spec.power.base_mva;
    let get = |sym: Symbol| x[maps.require(sym, "", 0)];
    let mut pdg = 0.0;
    for bus in &spec.power.buses {
        if bus.diesel.is_some() {
            pdg += x[maps.require(Symbol::DieselP, &bus.id, 0)];
        }
    }
    let load: f64 = spec.power.buses.iter().map(|b| known.load_p(&b.id, t)).sum();
    let w = &spec.objective;
    let mwh = base * known.step_hours();
    let step_cost = w.w1 * get(Symbol::NetTransfer) * mwh
        + w.w2 * (pdg + get(Symbol::WedgP)) * mwh
        + w.w3 * get(Symbol::CarbonEmitted)
        + w.w4 * get(Symbol::CarbonStored)
        - get(Symbol::ChemIncome);

    let dispatch = Dispatch {
        pwe_mw: get(Symbol::ElectrolysisP) * base,
        pfc_mw: get(Symbol::FuelCellP) * base,
        pt_mw: get(Symbol::NetTransfer) * base,
        pdg_mw: pdg * base,
        pwedg_mw: get(Symbol::WedgP) * base,
        psw_mw: get(Symbol::WindSurplusP) * base,
        ce_t: get(Symbol::CarbonEmitted),
        cs_t: get(Symbol::CarbonStored),
        cchi_t: get(Symbol::CarbonReused),
        vht_kg: x[maps.require(Symbol::HydrogenTankVolume, "", 1)],
        load_mw: load,
    };
    let record = StepRecord {
        step: t,
        method,
        repair,
        solve_seconds,
        objective: sol.objective,
        step_cost,
        prediction_held,
        bwe: x[maps.require(Symbol::ElectrolysisOn, "", 0)].round() as u8,
        bfc: x[maps.require(Symbol::FuelCellOn, "", 0)].round() as u8,
        dispatch,
        pinned_window: Vec::new(),
    };
    Ok((sol, record))
}

/// Writes the executed end-of-step tank volumes back into the spec as the
/// next initial levels, clamped into bounds against solver noise.
fn roll_tanks(
    spec: &mut SystemSpec,
    sol: &ContinuousSolution,
    maps: &IndexMaps,
) -> Result<(), SimError> {
    let vht = sol.primal[maps.require(Symbol::HydrogenTankVolume, "", 1)];
    let ht = &mut spec.hydrogen.tank;
    ht.v_init = vht.clamp(ht.v_min, ht.v_max);
    for node in &mut spec.water.nodes {
        if let Some(tank) = &mut node.tank {
            let v = sol.primal[maps.require(Symbol::TankVolume, &node.id, 1)];
            tank.v_init = v.clamp(tank.v_min, tank.v_max);
        }
    }
    Ok(())
}
