//! Physical system description and its translation into a tagged conic
//! program.
//!
//! A [`SystemSpec`] describes the coupled power / water / hydrogen /
//! carbon-capture network; a [`Scenario`] supplies the exogenous time
//! series. [`assemble`] instantiates the full dispatch program over the
//! horizon together with [`IndexMaps`], the contract every downstream
//! consumer (strategy extraction, surrogate construction, tracing) relies
//! on to locate variables and constraint tags.
//!
//! Conventions: electrical quantities are per-unit on `base_mva`; water
//! flows are m^3 per step; heads are meters; hydrogen masses are kg;
//! carbon masses are tonnes. Conversion factors in the spec are stated in
//! physical units and scaled here using the step length.

mod hydrogen;
mod power;
mod water;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{ConicProgram, ConstraintTag, ProgramBuilder, VarIdx};

// ---------------------------------------------------------------------------
// system description
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemSpec {
    pub horizon: HorizonSpec,
    pub power: PowerSection,
    pub water: WaterSection,
    pub hydrogen: HydrogenPlant,
    pub ccs: CcsChain,
    pub wind: WindFarm,
    pub objective: ObjectiveWeights,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HorizonSpec {
    pub steps: usize,
    pub step_minutes: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PowerSection {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<PowerLine>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Bus {
    pub id: String,
    /// voltage-magnitude bounds in p.u. (stored unsquared; the model uses
    /// squared voltages internally)
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub diesel: Option<Diesel>,
}

/// Diesel generator ratings in MW / MVar.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Diesel {
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PowerLine {
    pub id: String,
    pub from: String,
    pub to: String,
    /// impedance in p.u.
    pub r: f64,
    pub x: f64,
    /// apparent-power cap in MVA
    pub s_max: f64,
    /// squared-current bounds in p.u.
    #[serde(default)]
    pub i_min: f64,
    pub i_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WaterSection {
    pub nodes: Vec<WaterNode>,
    pub pipes: Vec<WaterPipe>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WaterNode {
    pub id: String,
    /// head bounds in m
    pub y_min: f64,
    pub y_max: f64,
    /// elevation offset; a pipe's head difference picks up
    /// `elevation(from) - elevation(to)`
    #[serde(default)]
    pub elevation: f64,
    #[serde(default)]
    pub tank: Option<Tank>,
    #[serde(default)]
    pub desalination: Option<Desalination>,
    #[serde(default)]
    pub prv: Option<Prv>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Tank {
    /// cross-section area, m^2 (head-volume coupling)
    pub area: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub v_init: f64,
    /// tank flow bounds per step; positive fills the tank
    pub f_min: f64,
    pub f_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Desalination {
    /// stepwise energy factors, MWh per m^3, nondecreasing
    pub e: [f64; 4],
    /// production cap per step, m^3
    pub f_max: f64,
    pub power_bus: String,
}

/// Pressure-reducing valve: bounds the head difference along each pipe
/// feeding this node.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Prv {
    pub pressure_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WaterPipe {
    pub id: String,
    pub from: String,
    pub to: String,
    /// head-loss coefficient, m per (m^3/step)^2
    pub r_w: f64,
    pub f_min: f64,
    pub f_max: f64,
    #[serde(default)]
    pub pump: Option<Pump>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Pump {
    /// pump curve `head = a0 + a1 * flow(m^3/h)`; a1 >= 0 keeps the power
    /// relation convex
    pub a0: f64,
    pub a1: f64,
    pub efficiency: f64,
    pub big_m: f64,
    pub power_bus: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HydrogenPlant {
    pub technology: Technology,
    /// kg H2 per MWh of electrolysis
    pub kg_per_mwh: f64,
    /// m^3 water per kg H2
    pub water_m3_per_kg: f64,
    /// MWh per kg H2 through the fuel cell
    pub mwh_per_kg_fc: f64,
    /// tank dissipation fraction per step
    pub dissipation: f64,
    pub tank: HydrogenTank,
    pub electrolyzer_max_mw: f64,
    pub fuel_cell: FuelCell,
    /// shared inverter rating, MVA
    pub inverter_mva: f64,
    pub power_bus: String,
    pub water_node: String,
    /// cap on diesel power routed directly to electrolysis, MW
    pub wedg_max_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Technology {
    /// Alkaline electrolysis: 20% minimum load and a switching lockout of
    /// `downtime_steps` after turning off.
    Ael { downtime_steps: usize },
    /// PEM electrolysis: no minimum load, no lockout.
    Pem,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HydrogenTank {
    pub v_min: f64,
    pub v_max: f64,
    pub v_init: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FuelCell {
    /// hydrogen draw bounds per step, kg
    pub h_min_kg: f64,
    pub h_max_kg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CcsChain {
    /// tonnes CO2 per MWh of diesel generation
    pub tons_co2_per_mwh: f64,
    /// tonnes of chemical product per tonne CO2 reused
    pub chem_per_ton_co2: f64,
    /// currency per tonne of chemical product
    pub chem_price: f64,
    /// storage injection cap per step, tonnes
    pub storage_cap_per_step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WindFarm {
    pub bus: String,
    pub v_cut_in: f64,
    pub v_rated: f64,
    pub v_cut_out: f64,
    pub rated_mw: f64,
    /// farm inverter rating bounding grid injection, MVA
    pub inverter_mva: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ObjectiveWeights {
    /// wind transfer penalty, per MWh
    pub w1: f64,
    /// diesel cost, per MWh
    pub w2: f64,
    /// emission penalty, per tonne
    pub w3: f64,
    /// storage cost, per tonne
    pub w4: f64,
}

// ---------------------------------------------------------------------------
// scenario
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Scenario {
    pub steps: usize,
    pub step_minutes: f64,
    /// m/s per step
    pub wind_speed: Vec<f64>,
    /// MW per bus per step; buses may be omitted (zero load)
    pub bus_load_p: HashMap<String, Vec<f64>>,
    /// MVar per bus per step
    pub bus_load_q: HashMap<String, Vec<f64>>,
    /// m^3 per step per water node
    pub water_demand: HashMap<String, Vec<f64>>,
    /// kg per step
    pub hydrogen_demand: Vec<f64>,
    /// number of leading entries that are real-time measurements rather
    /// than forecasts
    #[serde(default)]
    pub realized_prefix: usize,
}

impl Scenario {
    pub fn step_hours(&self) -> f64 {
        self.step_minutes / 60.0
    }

    pub fn load_p(&self, bus: &str, t: usize) -> f64 {
        self.bus_load_p.get(bus).map_or(0.0, |s| s[t])
    }

    pub fn load_q(&self, bus: &str, t: usize) -> f64 {
        self.bus_load_q.get(bus).map_or(0.0, |s| s[t])
    }

    pub fn demand(&self, node: &str, t: usize) -> f64 {
        self.water_demand.get(node).map_or(0.0, |s| s[t])
    }

    /// Restriction to steps `from..`, used by the rolling horizon.
    pub fn tail(&self, from: usize) -> Scenario {
        let cut = |s: &Vec<f64>| s[from..].to_vec();
        Scenario {
            steps: self.steps - from,
            step_minutes: self.step_minutes,
            wind_speed: cut(&self.wind_speed),
            bus_load_p: self.bus_load_p.iter().map(|(k, v)| (k.clone(), cut(v))).collect(),
            bus_load_q: self.bus_load_q.iter().map(|(k, v)| (k.clone(), cut(v))).collect(),
            water_demand: self.water_demand.iter().map(|(k, v)| (k.clone(), cut(v))).collect(),
            hydrogen_demand: cut(&self.hydrogen_demand),
            realized_prefix: self.realized_prefix.saturating_sub(from),
        }
    }
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("horizon must have at least 1 step and a positive step length")]
    BadHorizon,
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("{kind} `{id}` references unknown {what} `{target}`")]
    UnknownRef { kind: &'static str, id: String, what: &'static str, target: String },
    #[error("power network must be a tree rooted at the first bus (bus `{0}` breaks it)")]
    NotRadial(String),
    #[error("bus `{0}`: need 0 < v_min <= v_max")]
    BadVoltageBounds(String),
    #[error("line `{0}`: need r, x >= 0, s_max > 0, i_min <= i_max")]
    BadLine(String),
    #[error("node `{0}`: head or tank bounds out of order")]
    BadNodeBounds(String),
    #[error("node `{0}`: desalination energy factors must be nondecreasing and positive")]
    BadEnergyFactors(String),
    #[error("pipe `{0}`: flow bounds out of order")]
    BadFlowBounds(String),
    #[error(
        "pipe `{0}`: head-loss envelope needs f_min < 0 < f_max with \
         max(|f_min|, f_max) / min(|f_min|, f_max) <= 1 + sqrt(2)"
    )]
    BadEnvelopeRange(String),
    #[error("pipe `{0}`: pump pipes need f_min = 0, a1 >= 0, efficiency in (0,1], big_m > 0")]
    BadPump(String),
    #[error("hydrogen plant: {0}")]
    BadHydrogen(&'static str),
    #[error("carbon chain: factors must be nonnegative")]
    BadCcs,
    #[error("wind farm: need 0 <= v_cut_in < v_rated <= v_cut_out and positive ratings")]
    BadWind,
    #[error("objective weights must be finite")]
    BadWeights,
    #[error("scenario: series `{0}` has wrong length or negative entries")]
    BadSeries(String),
    #[error("scenario step length disagrees with the spec horizon")]
    StepMismatch,
    #[error("fixed prefix: {0}")]
    BadPrefix(&'static str),
}

impl SystemSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.horizon.steps == 0 || !(self.horizon.step_minutes > 0.0) {
            return Err(SpecError::BadHorizon);
        }
        if !(self.power.base_mva > 0.0) {
            return Err(SpecError::BadLine("base_mva".into()));
        }

        let mut ids = std::collections::HashSet::new();
        for b in &self.power.buses {
            if !ids.insert(b.id.clone()) {
                return Err(SpecError::DuplicateId(b.id.clone()));
            }
            if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
                return Err(SpecError::BadVoltageBounds(b.id.clone()));
            }
            if let Some(d) = &b.diesel {
                if d.p_min > d.p_max || d.q_min > d.q_max || d.p_min < 0.0 {
                    return Err(SpecError::BadVoltageBounds(b.id.clone()));
                }
            }
        }
        let bus_ok = |id: &str| self.power.buses.iter().any(|b| b.id == id);
        for l in &self.power.lines {
            if !ids.insert(l.id.clone()) {
                return Err(SpecError::DuplicateId(l.id.clone()));
            }
            for end in [&l.from, &l.to] {
                if !bus_ok(end) {
                    return Err(SpecError::UnknownRef {
                        kind: "line",
                        id: l.id.clone(),
                        what: "bus",
                        target: end.clone(),
                    });
                }
            }
            if l.r < 0.0 || l.x < 0.0 || !(l.s_max > 0.0) || l.i_min > l.i_max || l.i_min < 0.0 {
                return Err(SpecError::BadLine(l.id.clone()));
            }
        }
        self.check_radial()?;

        for n in &self.water.nodes {
            if !ids.insert(n.id.clone()) {
                return Err(SpecError::DuplicateId(n.id.clone()));
            }
            if n.y_min > n.y_max {
                return Err(SpecError::BadNodeBounds(n.id.clone()));
            }
            if let Some(t) = &n.tank {
                let ordered = t.v_min <= t.v_init
                    && t.v_init <= t.v_max
                    && t.f_min <= t.f_max
                    && t.area > 0.0;
                if !ordered {
                    return Err(SpecError::BadNodeBounds(n.id.clone()));
                }
            }
            if let Some(d) = &n.desalination {
                if !(d.e[0] > 0.0 && d.e[0] <= d.e[1] && d.e[1] <= d.e[2] && d.e[2] <= d.e[3]) {
                    return Err(SpecError::BadEnergyFactors(n.id.clone()));
                }
                if !(d.f_max > 0.0) {
                    return Err(SpecError::BadNodeBounds(n.id.clone()));
                }
                if !bus_ok(&d.power_bus) {
                    return Err(SpecError::UnknownRef {
                        kind: "desalination",
                        id: n.id.clone(),
                        what: "bus",
                        target: d.power_bus.clone(),
                    });
                }
            }
        }
        let node_ok = |id: &str| self.water.nodes.iter().any(|n| n.id == id);
        for p in &self.water.pipes {
            if !ids.insert(p.id.clone()) {
                return Err(SpecError::DuplicateId(p.id.clone()));
            }
            for end in [&p.from, &p.to] {
                if !node_ok(end) {
                    return Err(SpecError::UnknownRef {
                        kind: "pipe",
                        id: p.id.clone(),
                        what: "node",
                        target: end.clone(),
                    });
                }
            }
            if p.f_min > p.f_max || p.r_w < 0.0 {
                return Err(SpecError::BadFlowBounds(p.id.clone()));
            }
            match &p.pump {
                None => {
                    // the four-row hull is only valid on a two-sided range
                    // with comparable forward/reverse magnitudes
                    let a = -p.f_min;
                    let fmax = p.f_max;
                    let ratio_ok = a > 0.0
                        && fmax > 0.0
                        && a.max(fmax) / a.min(fmax) <= 1.0 + std::f64::consts::SQRT_2 + 1e-9;
                    if !ratio_ok {
                        return Err(SpecError::BadEnvelopeRange(p.id.clone()));
                    }
                }
                Some(pm) => {
                    let ok = p.f_min == 0.0
                        && pm.a1 >= 0.0
                        && pm.efficiency > 0.0
                        && pm.efficiency <= 1.0
                        && pm.big_m > 0.0;
                    if !ok {
                        return Err(SpecError::BadPump(p.id.clone()));
                    }
                    if !bus_ok(&pm.power_bus) {
                        return Err(SpecError::UnknownRef {
                            kind: "pump",
                            id: p.id.clone(),
                            what: "bus",
                            target: pm.power_bus.clone(),
                        });
                    }
                }
            }
        }

        let h = &self.hydrogen;
        if !(h.kg_per_mwh > 0.0 && h.water_m3_per_kg > 0.0 && h.mwh_per_kg_fc > 0.0) {
            return Err(SpecError::BadHydrogen("conversion factors must be positive"));
        }
        if !(0.0..1.0).contains(&h.dissipation) {
            return Err(SpecError::BadHydrogen("dissipation must lie in [0, 1)"));
        }
        if let Technology::Ael { downtime_steps } = h.technology {
            if downtime_steps == 0 {
                return Err(SpecError::BadHydrogen("AEL downtime must be at least 1 step"));
            }
        }
        let tank_ok = h.tank.v_min <= h.tank.v_init && h.tank.v_init <= h.tank.v_max;
        if !tank_ok {
            return Err(SpecError::BadHydrogen("tank bounds out of order"));
        }
        if h.fuel_cell.h_min_kg > h.fuel_cell.h_max_kg || h.fuel_cell.h_min_kg < 0.0 {
            return Err(SpecError::BadHydrogen("fuel-cell bounds out of order"));
        }
        if !(h.electrolyzer_max_mw > 0.0 && h.inverter_mva > 0.0 && h.wedg_max_mw >= 0.0) {
            return Err(SpecError::BadHydrogen("ratings must be positive"));
        }
        if !bus_ok(&h.power_bus) {
            return Err(SpecError::UnknownRef {
                kind: "hydrogen plant",
                id: "hydrogen".into(),
                what: "bus",
                target: h.power_bus.clone(),
            });
        }
        if !node_ok(&h.water_node) {
            return Err(SpecError::UnknownRef {
                kind: "hydrogen plant",
                id: "hydrogen".into(),
                what: "node",
                target: h.water_node.clone(),
            });
        }

        let c = &self.ccs;
        if c.tons_co2_per_mwh < 0.0
            || c.chem_per_ton_co2 < 0.0
            || c.chem_price < 0.0
            || c.storage_cap_per_step < 0.0
        {
            return Err(SpecError::BadCcs);
        }

        let w = &self.wind;
        let wind_ok = w.v_cut_in >= 0.0
            && w.v_cut_in < w.v_rated
            && w.v_rated <= w.v_cut_out
            && w.rated_mw > 0.0
            && w.inverter_mva > 0.0;
        if !wind_ok {
            return Err(SpecError::BadWind);
        }
        if !bus_ok(&w.bus) {
            return Err(SpecError::UnknownRef {
                kind: "wind farm",
                id: "wind".into(),
                what: "bus",
                target: w.bus.clone(),
            });
        }

        let ow = &self.objective;
        if ![ow.w1, ow.w2, ow.w3, ow.w4].iter().all(|v| v.is_finite()) {
            return Err(SpecError::BadWeights);
        }
        Ok(())
    }

    fn check_radial(&self) -> Result<(), SpecError> {
        if self.power.buses.is_empty() {
            return Err(SpecError::NotRadial("<none>".into()));
        }
        let root = &self.power.buses[0].id;
        // every non-root bus is the head of exactly one line; root of none
        for b in &self.power.buses {
            let incoming = self.power.lines.iter().filter(|l| &l.to == &b.id).count();
            let want = usize::from(&b.id != root);
            if incoming != want {
                return Err(SpecError::NotRadial(b.id.clone()));
            }
        }
        // connectivity: walk from the root along line directions
        let mut seen = std::collections::HashSet::from([root.clone()]);
        let mut frontier = vec![root.clone()];
        while let Some(bus) = frontier.pop() {
            for l in self.power.lines.iter().filter(|l| l.from == bus) {
                if seen.insert(l.to.clone()) {
                    frontier.push(l.to.clone());
                }
            }
        }
        for b in &self.power.buses {
            if !seen.contains(&b.id) {
                return Err(SpecError::NotRadial(b.id.clone()));
            }
        }
        Ok(())
    }

    pub fn validate_scenario(&self, sc: &Scenario) -> Result<(), SpecError> {
        if sc.steps == 0 || !(sc.step_minutes > 0.0) {
            return Err(SpecError::BadHorizon);
        }
        if (sc.step_minutes - self.horizon.step_minutes).abs() > 1e-9 {
            return Err(SpecError::StepMismatch);
        }
        let check = |name: &str, s: &[f64], nonneg: bool| -> Result<(), SpecError> {
            if s.len() != sc.steps || s.iter().any(|v| !v.is_finite() || (nonneg && *v < 0.0)) {
                return Err(SpecError::BadSeries(name.to_string()));
            }
            Ok(())
        };
        check("wind_speed", &sc.wind_speed, true)?;
        check("hydrogen_demand", &sc.hydrogen_demand, true)?;
        for (bus, s) in &sc.bus_load_p {
            if !self.power.buses.iter().any(|b| &b.id == bus) {
                return Err(SpecError::BadSeries(format!("bus_load_p/{bus}")));
            }
            check(&format!("bus_load_p/{bus}"), s, true)?;
        }
        for (bus, s) in &sc.bus_load_q {
            if !self.power.buses.iter().any(|b| &b.id == bus) {
                return Err(SpecError::BadSeries(format!("bus_load_q/{bus}")));
            }
            check(&format!("bus_load_q/{bus}"), s, false)?;
        }
        for (node, s) in &sc.water_demand {
            if !self.water.nodes.iter().any(|n| &n.id == node) {
                return Err(SpecError::BadSeries(format!("water_demand/{node}")));
            }
            check(&format!("water_demand/{node}"), s, true)?;
        }
        Ok(())
    }
}

/// Wind farm output in MW at wind speed `v` (m/s): zero below cut-in and
/// above cut-out, cubic ramp between cut-in and rated, flat at rated.
pub fn wind_power(v: f64, farm: &WindFarm) -> f64 {
    if v < farm.v_cut_in || v > farm.v_cut_out {
        0.0
    } else if v <= farm.v_rated {
        let x = (v - farm.v_cut_in) / (farm.v_rated - farm.v_cut_in);
        farm.rated_mw * x.powi(3)
    } else {
        farm.rated_mw
    }
}

// ---------------------------------------------------------------------------
// index maps
// ---------------------------------------------------------------------------

/// Model quantities, keyed per `(symbol, asset, step)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    VoltageSq,
    CurrentSq,
    LineP,
    LineQ,
    DieselP,
    DieselQ,
    WindSurplusP,
    WindSurplusQ,
    NetTransfer,
    WedgP,
    HydrogenInjP,
    HydrogenInjQ,
    FuelCellP,
    ElectrolysisP,
    Head,
    PipeFlow,
    DesalFlow,
    DesalPower,
    TankFlow,
    TankVolume,
    PumpPower,
    PumpGainHead,
    HydrogenProd,
    ElectrolysisWater,
    FuelCellH,
    HydrogenTankVolume,
    CarbonProduced,
    CarbonEmitted,
    CarbonStored,
    CarbonReused,
    ChemIncome,
    PumpOn,
    DesalOn,
    FuelCellOn,
    ElectrolysisOn,
}

/// Which asset family a binary belongs to; fixes the bit layout of a
/// strategy and the grouping used by stage designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryKind {
    Pump,
    Desalination,
    FuelCell,
    Electrolysis,
}

#[derive(Debug, Clone)]
pub struct BinaryMeta {
    pub kind: BinaryKind,
    pub asset: String,
    pub step: usize,
    pub var: VarIdx,
}

/// Variable and tag directory for an assembled program: for every
/// `(symbol, asset, step)` the variable index, and the ordered binary
/// layout strategies are encoded against.
#[derive(Debug, Clone, Default)]
pub struct IndexMaps {
    vars: HashMap<(Symbol, String, usize), VarIdx>,
    /// binary bit layout: all pump bits, then desalination, fuel cell,
    /// electrolysis; within a kind by asset then step
    pub binaries: Vec<BinaryMeta>,
    pub steps: usize,
}

impl IndexMaps {
    pub(crate) fn put(&mut self, sym: Symbol, asset: &str, step: usize, var: VarIdx) {
        let prev = self.vars.insert((sym, asset.to_string(), step), var);
        debug_assert!(prev.is_none(), "duplicate index map entry {sym:?} {asset} {step}");
    }

    pub fn var(&self, sym: Symbol, asset: &str, step: usize) -> Option<VarIdx> {
        self.vars.get(&(sym, asset.to_string(), step)).copied()
    }

    /// Panics when the entry is missing; builders guarantee presence for
    /// every symbol they declare.
    pub fn require(&self, sym: Symbol, asset: &str, step: usize) -> VarIdx {
        self.var(sym, asset, step)
            .unwrap_or_else(|| panic!("missing variable for {sym:?} {asset} {step}"))
    }

    pub fn len_vars(&self) -> usize {
        self.vars.len()
    }
}

// ---------------------------------------------------------------------------
// assembly
// ---------------------------------------------------------------------------

/// Context shared by the section builders.
pub(crate) struct BuildCtx<'a> {
    pub spec: &'a SystemSpec,
    pub scenario: &'a Scenario,
    pub base: f64,
    pub step_h: f64,
    /// m^3/step -> m^3/h
    pub flow_per_hour: f64,
}

/// Assembles the full dispatch program for the given electrolysis
/// technology. `fixed_we_prefix` pins the leading electrolyzer on/off
/// decisions (the rolling-horizon lockout window); it is only meaningful
/// for AEL and must not exceed the horizon.
pub fn assemble(
    spec: &SystemSpec,
    scenario: &Scenario,
    tech: &Technology,
    fixed_we_prefix: Option<&[u8]>,
) -> Result<(ConicProgram, IndexMaps), SpecError> {
    spec.validate()?;
    spec.validate_scenario(scenario)?;
    if let Some(p) = fixed_we_prefix {
        match tech {
            Technology::Pem => return Err(SpecError::BadPrefix("PEM takes no fixed prefix")),
            Technology::Ael { downtime_steps } => {
                if p.len() != (*downtime_steps).min(scenario.steps) {
                    return Err(SpecError::BadPrefix("prefix length must equal the lockout"));
                }
                if p.iter().any(|&v| v > 1) {
                    return Err(SpecError::BadPrefix("prefix entries must be 0 or 1"));
                }
            }
        }
    }

    let ctx = BuildCtx {
        spec,
        scenario,
        base: spec.power.base_mva,
        step_h: scenario.step_hours(),
        flow_per_hour: 60.0 / scenario.step_minutes,
    };

    let mut b = ProgramBuilder::new();
    let mut maps = IndexMaps { steps: scenario.steps, ..Default::default() };

    declare_variables(&ctx, &mut b, &mut maps);
    power::build_power(&ctx, &mut b, &maps).expect("power rows are well formed");
    water::build_water(&ctx, &mut b, &maps).expect("water rows are well formed");
    hydrogen::build_hydrogen_ccs(&ctx, &mut b, &maps, tech, fixed_we_prefix)
        .expect("hydrogen rows are well formed");
    build_objective(&ctx, &mut b, &maps);

    let prog = b.build().expect("assembled program is well formed");
    Ok((prog, maps))
}

/// Declares every variable of the model with its bounds, filling the
/// index maps. Binaries are declared grouped by kind so the strategy bit
/// layout matches [`IndexMaps::binaries`].
fn declare_variables(ctx: &BuildCtx, b: &mut ProgramBuilder, maps: &mut IndexMaps) {
    let spec = ctx.spec;
    let t_steps = ctx.scenario.steps;
    let base = ctx.base;
    let inf = f64::INFINITY;

    for t in 0..t_steps {
        // power section
        for bus in &spec.power.buses {
            let v = b.add_continuous(
                format!("V[{}]@{t}", bus.id),
                bus.v_min * bus.v_min,
                bus.v_max * bus.v_max,
            );
            maps.put(Symbol::VoltageSq, &bus.id, t, v);
            if let Some(d) = &bus.diesel {
                let p = b.add_continuous(
                    format!("pdg[{}]@{t}", bus.id),
                    d.p_min / base,
                    d.p_max / base,
                );
                maps.put(Symbol::DieselP, &bus.id, t, p);
                let q = b.add_continuous(
                    format!("qdg[{}]@{t}", bus.id),
                    d.q_min / base,
                    d.q_max / base,
                );
                maps.put(Symbol::DieselQ, &bus.id, t, q);
            }
        }
        for line in &spec.power.lines {
            let s = line.s_max / base;
            let i = b.add_continuous(format!("I[{}]@{t}", line.id), line.i_min, line.i_max);
            maps.put(Symbol::CurrentSq, &line.id, t, i);
            let p = b.add_continuous(format!("P[{}]@{t}", line.id), -s, s);
            maps.put(Symbol::LineP, &line.id, t, p);
            let q = b.add_continuous(format!("Q[{}]@{t}", line.id), -s, s);
            maps.put(Symbol::LineQ, &line.id, t, q);
        }
        let wind_cap = (spec.wind.rated_mw / base).min(spec.wind.inverter_mva / base);
        let psw = b.add_continuous(format!("psw@{t}"), 0.0, wind_cap);
        maps.put(Symbol::WindSurplusP, "", t, psw);
        let qsw = b.add_continuous(
            format!("qsw@{t}"),
            -spec.wind.inverter_mva / base,
            spec.wind.inverter_mva / base,
        );
        maps.put(Symbol::WindSurplusQ, "", t, qsw);
        let pt = b.add_continuous(
            format!("pt@{t}"),
            0.0,
            (spec.wind.rated_mw + spec.hydrogen.wedg_max_mw) / base,
        );
        maps.put(Symbol::NetTransfer, "", t, pt);
        let pwedg = b.add_continuous(format!("pwedg@{t}"), 0.0, spec.hydrogen.wedg_max_mw / base);
        maps.put(Symbol::WedgP, "", t, pwedg);

        let h = &spec.hydrogen;
        let s_hs = h.inverter_mva / base;
        let phs = b.add_continuous(format!("phs@{t}"), 0.0, s_hs);
        maps.put(Symbol::HydrogenInjP, "", t, phs);
        let qhs = b.add_continuous(format!("qhs@{t}"), -s_hs, s_hs);
        maps.put(Symbol::HydrogenInjQ, "", t, qhs);
        let pfc = b.add_continuous(format!("pfc@{t}"), 0.0, s_hs);
        maps.put(Symbol::FuelCellP, "", t, pfc);
        let pwe = b.add_continuous(format!("pwe@{t}"), 0.0, h.electrolyzer_max_mw / base);
        maps.put(Symbol::ElectrolysisP, "", t, pwe);

        // water section
        for node in &spec.water.nodes {
            let y = b.add_continuous(format!("y[{}]@{t}", node.id), node.y_min, node.y_max);
            maps.put(Symbol::Head, &node.id, t, y);
            if let Some(tank) = &node.tank {
                let f = b.add_continuous(format!("fwt[{}]@{t}", node.id), tank.f_min, tank.f_max);
                maps.put(Symbol::TankFlow, &node.id, t, f);
            }
            if let Some(d) = &node.desalination {
                let f = b.add_continuous(format!("fdes[{}]@{t}", node.id), 0.0, d.f_max);
                maps.put(Symbol::DesalFlow, &node.id, t, f);
                let pcap = d.e[3] * d.f_max / (base * ctx.step_h);
                let p = b.add_continuous(format!("pdes[{}]@{t}", node.id), 0.0, pcap);
                maps.put(Symbol::DesalPower, &node.id, t, p);
            }
        }
        for pipe in &spec.water.pipes {
            let f = b.add_continuous(format!("f[{}]@{t}", pipe.id), pipe.f_min, pipe.f_max);
            maps.put(Symbol::PipeFlow, &pipe.id, t, f);
            if let Some(pump) = &pipe.pump {
                let gain_cap = pump.a0 + pump.a1 * pipe.f_max * ctx.flow_per_hour;
                let g = b.add_continuous(format!("yg[{}]@{t}", pipe.id), 0.0, gain_cap);
                maps.put(Symbol::PumpGainHead, &pipe.id, t, g);
                let pw_cap = 2.725
                    * (pump.a1 * pipe.f_max * ctx.flow_per_hour + pump.a0)
                    * (pipe.f_max * ctx.flow_per_hour)
                    / (pump.efficiency * base * 1e6);
                let p = b.add_continuous(format!("pp[{}]@{t}", pipe.id), 0.0, pw_cap);
                maps.put(Symbol::PumpPower, &pipe.id, t, p);
            }
        }

        // hydrogen and carbon section
        let h_cap = h.kg_per_mwh * h.electrolyzer_max_mw * ctx.step_h;
        let hwe = b.add_continuous(format!("hwe@{t}"), 0.0, h_cap);
        maps.put(Symbol::HydrogenProd, "", t, hwe);
        let dwe = b.add_continuous(format!("dwe@{t}"), 0.0, h.water_m3_per_kg * h_cap);
        maps.put(Symbol::ElectrolysisWater, "", t, dwe);
        let hfc = b.add_continuous(format!("hfc@{t}"), 0.0, h.fuel_cell.h_max_kg);
        maps.put(Symbol::FuelCellH, "", t, hfc);

        let cdg = b.add_continuous(format!("cdg@{t}"), 0.0, inf);
        maps.put(Symbol::CarbonProduced, "", t, cdg);
        let ce = b.add_continuous(format!("ce@{t}"), 0.0, inf);
        maps.put(Symbol::CarbonEmitted, "", t, ce);
        let cs = b.add_continuous(format!("cs@{t}"), 0.0, spec.ccs.storage_cap_per_step);
        maps.put(Symbol::CarbonStored, "", t, cs);
        let cchi = b.add_continuous(format!("cchi@{t}"), 0.0, inf);
        maps.put(Symbol::CarbonReused, "", t, cchi);
        let ichi = b.add_continuous(format!("ichi@{t}"), 0.0, inf);
        maps.put(Symbol::ChemIncome, "", t, ichi);
    }

    // tank volumes carry one extra time point; the initial value is pinned
    for node in &spec.water.nodes {
        if let Some(tank) = &node.tank {
            for t in 0..=t_steps {
                let (lo, hi) = if t == 0 {
                    (tank.v_init, tank.v_init)
                } else {
                    (tank.v_min, tank.v_max)
                };
                let v = b.add_continuous(format!("Vwt[{}]@{t}", node.id), lo, hi);
                maps.put(Symbol::TankVolume, &node.id, t, v);
            }
        }
    }
    let ht = &ctx.spec.hydrogen.tank;
    for t in 0..=t_steps {
        let (lo, hi) = if t == 0 { (ht.v_init, ht.v_init) } else { (ht.v_min, ht.v_max) };
        let v = b.add_continuous(format!("Vht@{t}"), lo, hi);
        maps.put(Symbol::HydrogenTankVolume, "", t, v);
    }

    // binaries, grouped by kind to fix the strategy layout
    for pipe in &spec.water.pipes {
        if pipe.pump.is_some() {
            for t in 0..t_steps {
                let v = b.add_binary(format!("bp[{}]@{t}", pipe.id));
                maps.put(Symbol::PumpOn, &pipe.id, t, v);
                maps.binaries.push(BinaryMeta {
                    kind: BinaryKind::Pump,
                    asset: pipe.id.clone(),
                    step: t,
                    var: v,
                });
            }
        }
    }
    for node in &spec.water.nodes {
        if node.desalination.is_some() {
            for t in 0..t_steps {
                let v = b.add_binary(format!("bdes[{}]@{t}", node.id));
                maps.put(Symbol::DesalOn, &node.id, t, v);
                maps.binaries.push(BinaryMeta {
                    kind: BinaryKind::Desalination,
                    asset: node.id.clone(),
                    step: t,
                    var: v,
                });
            }
        }
    }
    for t in 0..t_steps {
        let v = b.add_binary(format!("bfc@{t}"));
        maps.put(Symbol::FuelCellOn, "", t, v);
        maps.binaries.push(BinaryMeta {
            kind: BinaryKind::FuelCell,
            asset: String::new(),
            step: t,
            var: v,
        });
    }
    for t in 0..t_steps {
        let v = b.add_binary(format!("bwe@{t}"));
        maps.put(Symbol::ElectrolysisOn, "", t, v);
        maps.binaries.push(BinaryMeta {
            kind: BinaryKind::Electrolysis,
            asset: String::new(),
            step: t,
            var: v,
        });
    }
}

/// Objective: wind transfer, diesel energy, emitted and stored carbon,
/// minus chemical income, summed over the horizon.
fn build_objective(ctx: &BuildCtx, b: &mut ProgramBuilder, maps: &IndexMaps) {
    let w = &ctx.spec.objective;
    let mwh = ctx.base * ctx.step_h; // p.u. power over one step -> MWh
    for t in 0..ctx.scenario.steps {
        b.obj_term(maps.require(Symbol::NetTransfer, "", t), w.w1 * mwh);
        for bus in &ctx.spec.power.buses {
            if bus.diesel.is_some() {
                b.obj_term(maps.require(Symbol::DieselP, &bus.id, t), w.w2 * mwh);
            }
        }
        b.obj_term(maps.require(Symbol::WedgP, "", t), w.w2 * mwh);
        b.obj_term(maps.require(Symbol::CarbonEmitted, "", t), w.w3);
        b.obj_term(maps.require(Symbol::CarbonStored, "", t), w.w4);
        b.obj_term(maps.require(Symbol::ChemIncome, "", t), -1.0);
    }
}

pub(crate) fn tag(
    equation: crate::conic::EquationId,
    asset: &str,
    step: usize,
) -> ConstraintTag {
    ConstraintTag::new(equation, asset, step)
}
