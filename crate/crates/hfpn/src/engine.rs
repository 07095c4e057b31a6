//! Fixed-step synchronous execution of hybrid functional nets.
//!
//! Each step has two phases. The read phase evaluates enabling and the
//! effective speed of every continuous transition from the start-of-step
//! marking; the write phase applies all continuous flows, then fires ready
//! discrete transitions in ascending id order (re-checking availability
//! sequentially). Effective speeds are flow-limited by each input place and,
//! when several transitions of one place together demand more than it
//! holds, scaled down proportionally so markings never go negative.
//!
//! Attach/detach/command requests and scenario events apply only at step
//! boundaries; a [`run`] records one trace row per boundary.

use std::collections::BTreeMap;

use crate::gadget::{self, Gadget, GadgetError};
use crate::net::{ArcKind, Marking, Net, NodeId, Transition, TransitionKind};
use crate::solver::{attach_solver, SetpointSolver, SolverError};
use crate::speed::SpeedExpr;

/// Residues in `[-1e-9, 0)` are rounding dust and clamp to zero; anything
/// below `-1e-6` is an internal error that aborts the run.
const NEGATIVE_ABORT: f64 = -1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("step size must be positive")]
    InvalidDt,
    #[error("the net is under transformation; recompose it before stepping")]
    UnderTransformation,
    #[error("speed of transition {0} evaluated to a non-finite value")]
    NonFiniteSpeed(NodeId),
    #[error("negative marking {marking} at place {place}")]
    NegativeMarkingBug { place: NodeId, marking: f64 },
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("speed of transition {transition} would reference place {place} without an input arc")]
    BadSpeedRef { transition: NodeId, place: NodeId },
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gadget(#[from] GadgetError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("no gadget named '{0}'")]
    UnknownGadget(String),
    #[error("solver needs '{0}' to be an attached receptor")]
    SolverReceptor(String),
    #[error("solver needs '{0}' to be an attached effector")]
    SolverEffector(String),
}

/// Whether the transition may act on the given marking: normal and
/// associative inputs must reach their thresholds (and their weights, for
/// discrete transitions); inhibitory inputs must stay strictly below
/// theirs.
pub fn enabled(net: &Net, marking: &Marking, transition: &Transition) -> bool {
    let discrete = transition.kind == TransitionKind::Discrete;
    for arc in net.inputs_of(transition.id) {
        let m = marking.get(&arc.source).copied().unwrap_or(0.0);
        match arc.kind {
            ArcKind::Normal | ArcKind::Associative => {
                if m < arc.threshold {
                    return false;
                }
                if discrete && m < arc.weight as f64 {
                    return false;
                }
            }
            ArcKind::Inhibitory => {
                if m >= arc.threshold {
                    return false;
                }
            }
        }
    }
    true
}

/// Simulation state: the executable net plus its runtime marking and clock.
#[derive(Debug, Clone)]
pub struct SimState {
    net: Net,
    marking: Marking,
    time: f64,
    step: u64,
    /// Accumulated enabled time of each discrete transition.
    clocks: BTreeMap<NodeId, f64>,
}

impl SimState {
    pub fn new(net: Net) -> SimState {
        let marking = net.marking_vector();
        let clocks = net
            .transitions()
            .filter(|t| t.kind == TransitionKind::Discrete)
            .map(|t| (t.id, 0.0))
            .collect();
        SimState {
            net,
            marking,
            time: 0.0,
            step: 0,
            clocks,
        }
    }

    pub fn net(&self) -> &Net {
        &self.net
    }

    pub fn marking(&self) -> &Marking {
        &self.marking
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_marking(&mut self, place: NodeId, value: f64) -> Result<(), SimError> {
        if !self.net.is_place(place) {
            return Err(SimError::UnknownNode(place));
        }
        self.marking.insert(place, value);
        crate::net::raw::set_marking(&mut self.net, place, value);
        Ok(())
    }

    pub fn set_speed(&mut self, transition: NodeId, speed: SpeedExpr) -> Result<(), SimError> {
        if !self.net.is_transition(transition) {
            return Err(SimError::UnknownNode(transition));
        }
        for place in speed.places() {
            let readable = self
                .net
                .arc(place, transition, ArcKind::Normal)
                .or_else(|| self.net.arc(place, transition, ArcKind::Associative))
                .is_some();
            if !readable {
                return Err(SimError::BadSpeedRef { transition, place });
            }
        }
        crate::net::raw::set_speed(&mut self.net, transition, speed);
        Ok(())
    }

    /// Swaps in a structurally different net (after attach/detach). Runtime
    /// markings of surviving places are kept; new places start from their
    /// initial markings.
    pub fn replace_net(&mut self, net: Net) {
        let mut marking = Marking::new();
        for place in net.places() {
            let value = self
                .marking
                .get(&place.id)
                .copied()
                .unwrap_or(place.marking);
            marking.insert(place.id, value);
        }
        let mut clocks = BTreeMap::new();
        for tr in net.transitions() {
            if tr.kind == TransitionKind::Discrete {
                clocks.insert(tr.id, self.clocks.get(&tr.id).copied().unwrap_or(0.0));
            }
        }
        self.net = net;
        self.marking = marking;
        self.clocks = clocks;
    }

    /// Effective speed of every continuous transition on the current
    /// marking: base evaluation clamped to be nonnegative, limited per
    /// input arc by `m(p)/(w*dt)`, then scaled down where a place is
    /// over-demanded.
    pub fn effective_speeds(&self, dt: f64) -> Result<BTreeMap<NodeId, f64>, SimError> {
        if dt <= 0.0 {
            return Err(SimError::InvalidDt);
        }
        let mut speeds: BTreeMap<NodeId, f64> = BTreeMap::new();
        for tr in self.net.transitions() {
            if tr.kind != TransitionKind::Continuous {
                continue;
            }
            if !enabled(&self.net, &self.marking, tr) {
                speeds.insert(tr.id, 0.0);
                continue;
            }
            let mut v = tr.speed.eval(&self.marking);
            if !v.is_finite() {
                return Err(SimError::NonFiniteSpeed(tr.id));
            }
            if v < 0.0 {
                v = 0.0;
            }
            for arc in self.net.inputs_of(tr.id) {
                if arc.kind != ArcKind::Normal {
                    continue;
                }
                let m = self.marking.get(&arc.source).copied().unwrap_or(0.0);
                let limit = m / (arc.weight as f64 * dt);
                if limit < v {
                    v = limit;
                }
            }
            speeds.insert(tr.id, v);
        }

        // Per-place demand; places asked for more than they hold scale all
        // their drains by the same factor.
        let mut demand: BTreeMap<NodeId, f64> = BTreeMap::new();
        for (tid, v) in &speeds {
            for arc in self.net.inputs_of(*tid) {
                if arc.kind == ArcKind::Normal {
                    *demand.entry(arc.source).or_insert(0.0) += arc.weight as f64 * v * dt;
                }
            }
        }
        let mut scaled = speeds.clone();
        for (tid, v) in &speeds {
            if *v == 0.0 {
                continue;
            }
            let mut factor = 1.0f64;
            for arc in self.net.inputs_of(*tid) {
                if arc.kind != ArcKind::Normal {
                    continue;
                }
                let d = demand[&arc.source];
                let m = self.marking.get(&arc.source).copied().unwrap_or(0.0);
                if d > m {
                    let s = m / d;
                    if s < factor {
                        factor = s;
                    }
                }
            }
            if factor < 1.0 {
                scaled.insert(*tid, v * factor);
            }
        }
        Ok(scaled)
    }

    /// Effective speed of one continuous transition; 0 when disabled or
    /// unknown.
    pub fn effective_speed(&self, transition: NodeId, dt: f64) -> Result<f64, SimError> {
        Ok(self
            .effective_speeds(dt)?
            .get(&transition)
            .copied()
            .unwrap_or(0.0))
    }

    /// One synchronous step of length `dt`.
    pub fn step(&mut self, dt: f64) -> Result<(), SimError> {
        if dt <= 0.0 {
            return Err(SimError::InvalidDt);
        }
        if self.net.under_transformation() {
            return Err(SimError::UnderTransformation);
        }

        // READ: all speeds from the start-of-step marking.
        let speeds = self.effective_speeds(dt)?;

        // WRITE: continuous flows, subtracting each place's total outflow
        // before adding its inflow.
        let mut outflow: BTreeMap<NodeId, f64> = BTreeMap::new();
        let mut inflow: BTreeMap<NodeId, f64> = BTreeMap::new();
        for (tid, v) in &speeds {
            if *v == 0.0 {
                continue;
            }
            for arc in self.net.inputs_of(*tid) {
                if arc.kind == ArcKind::Normal {
                    *outflow.entry(arc.source).or_insert(0.0) += arc.weight as f64 * v * dt;
                }
            }
            for arc in self.net.outputs_of(*tid) {
                *inflow.entry(arc.target).or_insert(0.0) += arc.weight as f64 * v * dt;
            }
        }
        let ids: Vec<NodeId> = self.marking.keys().copied().collect();
        for id in &ids {
            let old = self.marking[id];
            let out = outflow.get(id).copied().unwrap_or(0.0);
            let inn = inflow.get(id).copied().unwrap_or(0.0);
            let new = (old - out) + inn;
            self.marking.insert(*id, new);
        }
        self.clamp()?;

        // Discrete firing, ascending id, sequential re-check.
        let discrete: Vec<Transition> = self
            .net
            .transitions()
            .filter(|t| t.kind == TransitionKind::Discrete)
            .cloned()
            .collect();
        for tr in discrete {
            let is_enabled = enabled(&self.net, &self.marking, &tr);
            let clock = self.clocks.entry(tr.id).or_insert(0.0);
            if is_enabled && *clock >= tr.delay {
                *clock = 0.0;
                let inputs: Vec<(NodeId, u32)> = self
                    .net
                    .inputs_of(tr.id)
                    .filter(|a| a.kind == ArcKind::Normal)
                    .map(|a| (a.source, a.weight))
                    .collect();
                let outputs: Vec<(NodeId, u32)> = self
                    .net
                    .outputs_of(tr.id)
                    .map(|a| (a.target, a.weight))
                    .collect();
                for (p, w) in inputs {
                    *self.marking.get_mut(&p).unwrap() -= w as f64;
                }
                for (p, w) in outputs {
                    *self.marking.get_mut(&p).unwrap() += w as f64;
                }
            } else if is_enabled {
                *clock += dt;
            } else {
                *clock = 0.0;
            }
        }
        self.clamp()?;

        self.time += dt;
        self.step += 1;
        Ok(())
    }

    fn clamp(&mut self) -> Result<(), SimError> {
        for (id, m) in self.marking.iter_mut() {
            if *m < NEGATIVE_ABORT {
                return Err(SimError::NegativeMarkingBug {
                    place: *id,
                    marking: *m,
                });
            }
            if *m < 0.0 {
                *m = 0.0;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Traces

/// Recorded time series: one row per step boundary, the initial state
/// included. Column sets are fixed when the run starts; nodes attached
/// later are not traced and detached nodes read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub place_columns: Vec<NodeId>,
    pub speed_columns: Vec<NodeId>,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub time: f64,
    pub markings: Vec<f64>,
    pub speeds: Vec<f64>,
}

impl Trace {
    pub fn marking(&self, step: u64, place: NodeId) -> Option<f64> {
        let col = self.place_columns.iter().position(|p| *p == place)?;
        Some(self.rows.get(step as usize)?.markings[col])
    }

    pub fn speed(&self, step: u64, transition: NodeId) -> Option<f64> {
        let col = self.speed_columns.iter().position(|t| *t == transition)?;
        Some(self.rows.get(step as usize)?.speeds[col])
    }

    /// CSV with header `step,time,p<id>...,t<id>_v...`, columns in
    /// ascending id order and values printed to nine significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("step,time");
        for p in &self.place_columns {
            out.push_str(&format!(",p{p}"));
        }
        for t in &self.speed_columns {
            out.push_str(&format!(",t{t}_v"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{}", row.step, fmt_sig(row.time)));
            for v in &row.markings {
                out.push(',');
                out.push_str(&fmt_sig(*v));
            }
            for v in &row.speeds {
                out.push(',');
                out.push_str(&fmt_sig(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Nine significant digits, shortest decimal form.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap();
    format!("{rounded}")
}

// ---------------------------------------------------------------------------
// Orchestrated runs

/// A named gadget in a run; deferred gadgets attach later via an event.
#[derive(Debug, Clone)]
pub struct GadgetSlot {
    pub name: String,
    pub gadget: Gadget,
    pub attach_at_start: bool,
}

/// Called at every step boundary with the current receptor readings (one
/// per receptor gadget, in declaration order; detached receptors read 0).
/// Returns `(effector index, command value)` pairs, indices counting the
/// effector gadgets in declaration order.
pub type PolicyHook = Box<dyn FnMut(&[f64]) -> Vec<(usize, f64)>>;

#[derive(Debug, Clone, PartialEq)]
pub enum EventAction {
    SetMarking(NodeId, f64),
    SetSpeed(NodeId, SpeedExpr),
    Attach(String),
    Detach(String),
    Command(String, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub step: u64,
    pub action: EventAction,
}

pub struct RunConfig {
    pub net: Net,
    pub steps: u64,
    pub dt: f64,
    pub gadgets: Vec<GadgetSlot>,
    pub solvers: Vec<SetpointSolver>,
    pub policies: Vec<PolicyHook>,
    pub events: Vec<Event>,
}

impl RunConfig {
    pub fn new(net: Net, steps: u64, dt: f64) -> RunConfig {
        RunConfig {
            net,
            steps,
            dt,
            gadgets: Vec::new(),
            solvers: Vec::new(),
            policies: Vec::new(),
            events: Vec::new(),
        }
    }

    /// Registers a hook invoked at every step boundary with the current
    /// receptor readings; returned commands apply before the next step.
    pub fn register_policy(&mut self, hook: PolicyHook) {
        self.policies.push(hook);
    }
}

pub struct RunResult {
    pub trace: Trace,
    pub gadgets: Vec<(String, Gadget)>,
    pub solvers: Vec<SetpointSolver>,
}

/// Runs the net for `steps` fixed steps. Start-attached gadgets and solvers
/// fuse in before the initial row; events and policy commands apply at
/// their step boundaries, after the step completes and before the row is
/// recorded. Identical inputs yield identical traces.
pub fn run(config: RunConfig) -> Result<RunResult, EngineError> {
    let RunConfig {
        net,
        steps,
        dt,
        gadgets,
        mut solvers,
        mut policies,
        events,
    } = config;

    let mut named: Vec<(String, Gadget)> = Vec::new();
    let mut current = net;
    for slot in gadgets {
        let mut gadget = slot.gadget;
        if slot.attach_at_start {
            current = gadget::attach(&current, &mut gadget)?;
        }
        named.push((slot.name, gadget));
    }
    for solver in &mut solvers {
        let receptor_idx = find_gadget(&named, &solver.receptor)
            .ok_or_else(|| EngineError::UnknownGadget(solver.receptor.clone()))?;
        let effector_idx = find_gadget(&named, &solver.effector)
            .ok_or_else(|| EngineError::UnknownGadget(solver.effector.clone()))?;
        if !named[receptor_idx].1.kind.is_receptor() || !named[receptor_idx].1.is_attached() {
            return Err(EngineError::SolverReceptor(solver.receptor.clone()));
        }
        if !named[effector_idx].1.kind.is_effector() || !named[effector_idx].1.is_attached() {
            return Err(EngineError::SolverEffector(solver.effector.clone()));
        }
        current = attach_solver(
            &current,
            solver,
            &named[receptor_idx].1,
            &named[effector_idx].1,
        )?;
    }

    let mut state = SimState::new(current);
    let place_columns: Vec<NodeId> = state.net().places().map(|p| p.id).collect();
    let speed_columns: Vec<NodeId> = state
        .net()
        .transitions()
        .filter(|t| t.kind == TransitionKind::Continuous)
        .map(|t| t.id)
        .collect();

    let receptor_indices: Vec<usize> = named
        .iter()
        .enumerate()
        .filter(|(_, (_, g))| g.kind.is_receptor())
        .map(|(i, _)| i)
        .collect();
    let effector_indices: Vec<usize> = named
        .iter()
        .enumerate()
        .filter(|(_, (_, g))| g.kind.is_effector())
        .map(|(i, _)| i)
        .collect();

    let mut rows = Vec::with_capacity(steps as usize + 1);
    for boundary in 0..=steps {
        if boundary > 0 {
            state.step(dt)?;
        }

        for event in events.iter().filter(|e| e.step == boundary) {
            apply_event(&mut state, &mut named, &event.action)?;
        }

        if !policies.is_empty() {
            let readings: Vec<f64> = receptor_indices
                .iter()
                .map(|&i| {
                    if named[i].1.is_attached() {
                        named[i].1.read_from(state.marking()).unwrap_or(0.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut commands: Vec<(usize, f64)> = Vec::new();
            for policy in policies.iter_mut() {
                commands.extend(policy(&readings));
            }
            for (effector, value) in commands {
                let idx = *effector_indices
                    .get(effector)
                    .ok_or_else(|| EngineError::UnknownGadget(format!("effector #{effector}")))?;
                let name = named[idx].0.clone();
                apply_event(&mut state, &mut named, &EventAction::Command(name, value))?;
            }
        }

        let markings: Vec<f64> = place_columns
            .iter()
            .map(|p| state.marking().get(p).copied().unwrap_or(0.0))
            .collect();
        let speeds_now = state.effective_speeds(dt)?;
        let speeds: Vec<f64> = speed_columns
            .iter()
            .map(|t| speeds_now.get(t).copied().unwrap_or(0.0))
            .collect();
        rows.push(TraceRow {
            step: boundary,
            time: state.time(),
            markings,
            speeds,
        });
    }

    Ok(RunResult {
        trace: Trace {
            place_columns,
            speed_columns,
            rows,
        },
        gadgets: named,
        solvers,
    })
}

fn find_gadget(named: &[(String, Gadget)], name: &str) -> Option<usize> {
    named.iter().position(|(n, _)| n == name)
}

fn apply_event(
    state: &mut SimState,
    named: &mut [(String, Gadget)],
    action: &EventAction,
) -> Result<(), EngineError> {
    match action {
        EventAction::SetMarking(place, value) => state.set_marking(*place, *value)?,
        EventAction::SetSpeed(transition, speed) => state.set_speed(*transition, speed.clone())?,
        EventAction::Attach(name) => {
            let idx =
                find_gadget(named, name).ok_or_else(|| EngineError::UnknownGadget(name.clone()))?;
            let net = gadget::attach(state.net(), &mut named[idx].1)?;
            state.replace_net(net);
        }
        EventAction::Detach(name) => {
            let idx =
                find_gadget(named, name).ok_or_else(|| EngineError::UnknownGadget(name.clone()))?;
            let net = gadget::detach(state.net(), &mut named[idx].1)?;
            state.replace_net(net);
        }
        EventAction::Command(name, value) => {
            let idx =
                find_gadget(named, name).ok_or_else(|| EngineError::UnknownGadget(name.clone()))?;
            match gadget::command_effect(&mut named[idx].1, *value)? {
                gadget::CommandEffect::Refill { budget, amount } => {
                    let current = state.marking().get(&budget).copied().unwrap_or(0.0);
                    state.set_marking(budget, current + amount)?;
                }
                gadget::CommandEffect::SetLevel {
                    source,
                    level,
                    value,
                } => {
                    state.set_speed(source, gadget::maintenance_speed(value, level))?;
                    let current = state.marking().get(&level).copied().unwrap_or(0.0);
                    if current > value {
                        state.set_marking(level, value)?;
                    }
                }
            }
        }
    }
    Ok(())
}
