//! Line-oriented scenario files: a net formula plus parameters, gadgets,
//! solvers, run settings and timed events.
//!
//! ```text
//! [net]
//! 1I2C3I4                       # formula, may span lines
//!
//! [params]
//! p2.m=10                       # initial marking
//! t3.v=0.1*m(2)                 # speed expression
//! t3.d=2                        # delay (makes the transition discrete)
//! arc 2 3.k=1                   # arc threshold
//! arc 2 3.w=2                   # arc weight
//!
//! [gadgets]
//! rm name=r1 target=2 cap=unlimited rate=1 tau=0 k=0
//! em name=e1 target=2 cap=unlimited rate=5
//! crm name=r2 targets=2,4
//! cem name=e2 targets=2,4 rates=1,1 value=10
//!
//! [solver]
//! setpoint=10 gain=0.3 receptor=r1 effector=e1
//!
//! [run]
//! steps=200 dt=1 trace=out.csv
//!
//! [events]
//! at 50 set p8.m=15
//! at 60 command e1 3
//! at 70 attach r2
//! at 80 detach r2
//! ```
//!
//! `#` starts a comment anywhere. Sections appear in the order shown;
//! `[solver]` may repeat, one solver per section. Gadgets attach at run
//! start unless declared with `start=detached`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::engine::{Event, EventAction, GadgetSlot, RunConfig};
use crate::formula::{self, FormulaError};
use crate::gadget::{
    build_complex_em, build_complex_rm, build_em, build_ev, build_rm, build_rv, GadgetError,
    GadgetParams,
};
use crate::net::{self, Net, NodeId, TransitionKind};
use crate::solver::{build_setpoint_solver, SetpointSolver, SolverError};
use crate::speed::parse_speed;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("net formula: {0}")]
    Formula(#[from] FormulaError),
    #[error("net invalid after [params]: {0:?}")]
    InvalidNet(Vec<net::Diagnostic>),
    #[error(transparent)]
    Gadget(#[from] GadgetError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn line_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Line {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub net: Net,
    pub gadgets: Vec<GadgetSlot>,
    pub solvers: Vec<SetpointSolver>,
    pub steps: u64,
    pub dt: f64,
    pub trace_path: Option<PathBuf>,
    pub events: Vec<Event>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        Parser::default().parse(text)
    }

    /// A run configuration executing this scenario (policies empty).
    pub fn to_run_config(&self) -> RunConfig {
        RunConfig {
            net: self.net.clone(),
            steps: self.steps,
            dt: self.dt,
            gadgets: self.gadgets.clone(),
            solvers: self.solvers.clone(),
            policies: Vec::new(),
            events: self.events.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    None,
    Net,
    Params,
    Gadgets,
    Solver,
    Run,
    Events,
}

#[derive(Default)]
struct Parser {
    formula: String,
    params: Vec<(usize, String)>,
    gadget_lines: Vec<(usize, String)>,
    solver_sections: Vec<Vec<(usize, String)>>,
    run_lines: Vec<(usize, String)>,
    event_lines: Vec<(usize, String)>,
}

impl Parser {
    fn parse(mut self, text: &str) -> Result<Scenario, ScenarioError> {
        let mut section = Section::None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let body = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let body = body.trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let next = match name {
                    "net" => Section::Net,
                    "params" => Section::Params,
                    "gadgets" => Section::Gadgets,
                    "solver" => Section::Solver,
                    "run" => Section::Run,
                    "events" => Section::Events,
                    other => return Err(line_err(line_no, format!("unknown section [{other}]"))),
                };
                // Sections follow the canonical order; [solver] may repeat.
                if next < section && !(next == Section::Solver && section == Section::Solver) {
                    return Err(line_err(
                        line_no,
                        format!("section [{name}] is out of order"),
                    ));
                }
                section = next;
                if section == Section::Solver {
                    self.solver_sections.push(Vec::new());
                }
                continue;
            }
            match section {
                Section::None => {
                    return Err(line_err(line_no, "content before the first section"));
                }
                Section::Net => {
                    self.formula.push_str(body);
                }
                Section::Params => self.params.push((line_no, body.to_string())),
                Section::Gadgets => self.gadget_lines.push((line_no, body.to_string())),
                Section::Solver => self
                    .solver_sections
                    .last_mut()
                    .unwrap()
                    .push((line_no, body.to_string())),
                Section::Run => self.run_lines.push((line_no, body.to_string())),
                Section::Events => self.event_lines.push((line_no, body.to_string())),
            }
        }
        self.build()
    }

    fn build(self) -> Result<Scenario, ScenarioError> {
        let mut net = formula::parse(&self.formula)?;
        for (line_no, body) in &self.params {
            apply_param(&mut net, *line_no, body)?;
        }
        let diags = net.validate();
        if !diags.is_empty() {
            return Err(ScenarioError::InvalidNet(diags));
        }

        let mut gadgets = Vec::new();
        let mut counters: BTreeMap<&'static str, usize> = BTreeMap::new();
        for (line_no, body) in &self.gadget_lines {
            gadgets.push(parse_gadget(*line_no, body, &mut counters)?);
        }

        let mut solvers = Vec::new();
        for section in &self.solver_sections {
            solvers.push(parse_solver(section)?);
        }

        let mut steps = 0u64;
        let mut dt = 1.0f64;
        let mut trace_path = None;
        for (line_no, body) in &self.run_lines {
            for (key, value) in key_values(*line_no, body)? {
                match key.as_str() {
                    "steps" => {
                        steps = value
                            .parse()
                            .map_err(|_| line_err(*line_no, "bad steps value"))?
                    }
                    "dt" => {
                        dt = value
                            .parse()
                            .map_err(|_| line_err(*line_no, "bad dt value"))?
                    }
                    "trace" => trace_path = Some(PathBuf::from(value)),
                    other => return Err(line_err(*line_no, format!("unknown run key '{other}'"))),
                }
            }
        }

        let mut events = Vec::new();
        for (line_no, body) in &self.event_lines {
            events.push(parse_event(*line_no, body)?);
        }

        Ok(Scenario {
            net,
            gadgets,
            solvers,
            steps,
            dt,
            trace_path,
            events,
        })
    }
}

fn key_values(line_no: usize, body: &str) -> Result<Vec<(String, String)>, ScenarioError> {
    body.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| line_err(line_no, format!("expected key=value, got '{tok}'")))
        })
        .collect()
}

fn parse_node_id(line_no: usize, text: &str) -> Result<NodeId, ScenarioError> {
    let value: u32 = text
        .parse()
        .map_err(|_| line_err(line_no, format!("bad node id '{text}'")))?;
    if value == 0 {
        return Err(line_err(line_no, "node ids are positive"));
    }
    Ok(NodeId::new(value))
}

fn apply_param(net: &mut Net, line_no: usize, body: &str) -> Result<(), ScenarioError> {
    if let Some(rest) = body.strip_prefix("arc ") {
        // arc <src> <dst>.<k|w>=<value>
        let (selector, value) = rest
            .split_once('=')
            .ok_or_else(|| line_err(line_no, "expected arc <src> <dst>.<k|w>=<value>"))?;
        let (endpoints, key) = selector
            .trim()
            .rsplit_once('.')
            .ok_or_else(|| line_err(line_no, "expected '.k' or '.w' after the endpoints"))?;
        let mut parts = endpoints.split_whitespace();
        let src = parse_node_id(line_no, parts.next().unwrap_or(""))?;
        let dst = parse_node_id(line_no, parts.next().unwrap_or(""))?;
        if parts.next().is_some() {
            return Err(line_err(line_no, "expected exactly two arc endpoints"));
        }
        let keys: Vec<_> = net
            .arcs()
            .filter(|a| a.source == src && a.target == dst)
            .map(|a| a.key())
            .collect();
        if keys.is_empty() {
            return Err(line_err(line_no, format!("no arc {src} -> {dst}")));
        }
        for arc_key in keys {
            let mut arc = net.arc(arc_key.0, arc_key.1, arc_key.2).unwrap().clone();
            match key.trim() {
                "k" => {
                    arc.threshold = value
                        .trim()
                        .parse()
                        .map_err(|_| line_err(line_no, "bad threshold"))?
                }
                "w" => {
                    arc.weight = value
                        .trim()
                        .parse()
                        .map_err(|_| line_err(line_no, "bad weight"))?
                }
                other => return Err(line_err(line_no, format!("unknown arc key '{other}'"))),
            }
            net::raw::insert_arc(net, arc);
        }
        return Ok(());
    }

    let (target, value) = body
        .split_once('=')
        .ok_or_else(|| line_err(line_no, "expected <node>.<key>=<value>"))?;
    let (node, key) = target
        .trim()
        .split_once('.')
        .ok_or_else(|| line_err(line_no, "expected p<id>.m, t<id>.v or t<id>.d"))?;
    let value = value.trim();
    match (node.chars().next(), key.trim()) {
        (Some('p'), "m") => {
            let id = parse_node_id(line_no, &node[1..])?;
            if !net.is_place(id) {
                return Err(line_err(line_no, format!("{id} is not a place")));
            }
            let m: f64 = value
                .parse()
                .map_err(|_| line_err(line_no, "bad marking"))?;
            net::raw::set_marking(net, id, m);
        }
        (Some('t'), "v") => {
            let id = parse_node_id(line_no, &node[1..])?;
            if !net.is_transition(id) {
                return Err(line_err(line_no, format!("{id} is not a transition")));
            }
            let expr = parse_speed(value).map_err(|e| line_err(line_no, e.to_string()))?;
            net::raw::set_speed(net, id, expr);
        }
        (Some('t'), "d") => {
            let id = parse_node_id(line_no, &node[1..])?;
            let delay: f64 = value.parse().map_err(|_| line_err(line_no, "bad delay"))?;
            let Some(tr) = net.transition(id) else {
                return Err(line_err(line_no, format!("{id} is not a transition")));
            };
            let mut tr = tr.clone();
            tr.kind = TransitionKind::Discrete;
            tr.delay = delay;
            net::raw::insert_transition(net, tr);
        }
        _ => {
            return Err(line_err(
                line_no,
                format!("unknown parameter target '{target}'"),
            ))
        }
    }
    Ok(())
}

fn parse_gadget(
    line_no: usize,
    body: &str,
    counters: &mut BTreeMap<&'static str, usize>,
) -> Result<GadgetSlot, ScenarioError> {
    let (kind, rest) = body
        .split_once(char::is_whitespace)
        .ok_or_else(|| line_err(line_no, "expected a gadget kind and its settings"))?;
    let kind_key: &'static str = match kind {
        "rm" => "rm",
        "rv" => "rv",
        "em" => "em",
        "ev" => "ev",
        "crm" => "crm",
        "cem" => "cem",
        other => return Err(line_err(line_no, format!("unknown gadget kind '{other}'"))),
    };

    let mut name = None;
    let mut target = None;
    let mut targets = Vec::new();
    let mut rates = Vec::new();
    let mut params = GadgetParams::default();
    let mut attach_at_start = true;
    for (key, value) in key_values(line_no, rest)? {
        match key.as_str() {
            "name" => name = Some(value),
            "target" => target = Some(parse_node_id(line_no, &value)?),
            "targets" => {
                for part in value.split(',') {
                    targets.push(parse_node_id(line_no, part)?);
                }
            }
            "rates" => {
                for part in value.split(',') {
                    rates.push(
                        part.parse()
                            .map_err(|_| line_err(line_no, format!("bad rate '{part}'")))?,
                    );
                }
            }
            "cap" => {
                params.capacity = if value == "unlimited" {
                    None
                } else {
                    Some(
                        value
                            .parse()
                            .map_err(|_| line_err(line_no, "bad capacity"))?,
                    )
                }
            }
            "rate" => params.rate = value.parse().map_err(|_| line_err(line_no, "bad rate"))?,
            "tau" => params.tau = value.parse().map_err(|_| line_err(line_no, "bad tau"))?,
            "k" => {
                params.threshold = value
                    .parse()
                    .map_err(|_| line_err(line_no, "bad threshold"))?
            }
            "value" => params.value = value.parse().map_err(|_| line_err(line_no, "bad value"))?,
            "start" => match value.as_str() {
                "attached" => attach_at_start = true,
                "detached" => attach_at_start = false,
                other => {
                    return Err(line_err(
                        line_no,
                        format!("start must be attached or detached, got '{other}'"),
                    ))
                }
            },
            other => return Err(line_err(line_no, format!("unknown gadget key '{other}'"))),
        }
    }

    let single = |t: Option<NodeId>| -> Result<NodeId, ScenarioError> {
        t.ok_or_else(|| line_err(line_no, "missing target=<id>"))
    };
    let gadget = match kind_key {
        "rm" => build_rm(single(target)?, params)?,
        "rv" => build_rv(single(target)?, params)?,
        "em" => build_em(single(target)?, params)?,
        "ev" => build_ev(single(target)?, params)?,
        "crm" => build_complex_rm(&targets, params)?,
        "cem" => build_complex_em(&targets, &rates, params)?,
        _ => unreachable!(),
    };
    let counter = counters.entry(kind_key).or_insert(0);
    *counter += 1;
    let name = name.unwrap_or_else(|| format!("{kind_key}{counter}"));
    Ok(GadgetSlot {
        name,
        gadget,
        attach_at_start,
    })
}

fn parse_solver(section: &[(usize, String)]) -> Result<SetpointSolver, ScenarioError> {
    let mut setpoint = None;
    let mut gain = None;
    let mut receptor = None;
    let mut effector = None;
    let mut last_line = 0;
    for (line_no, body) in section {
        last_line = *line_no;
        for (key, value) in key_values(*line_no, body)? {
            match key.as_str() {
                "setpoint" => {
                    setpoint = Some(
                        value
                            .parse()
                            .map_err(|_| line_err(*line_no, "bad setpoint"))?,
                    )
                }
                "gain" => gain = Some(value.parse().map_err(|_| line_err(*line_no, "bad gain"))?),
                "receptor" => receptor = Some(value),
                "effector" => effector = Some(value),
                other => return Err(line_err(*line_no, format!("unknown solver key '{other}'"))),
            }
        }
    }
    let missing = |what: &str| line_err(last_line, format!("solver is missing {what}"));
    Ok(build_setpoint_solver(
        setpoint.ok_or_else(|| missing("setpoint="))?,
        gain.ok_or_else(|| missing("gain="))?,
        receptor.ok_or_else(|| missing("receptor="))?,
        effector.ok_or_else(|| missing("effector="))?,
    )?)
}

fn parse_event(line_no: usize, body: &str) -> Result<Event, ScenarioError> {
    let mut tokens = body.split_whitespace();
    if tokens.next() != Some("at") {
        return Err(line_err(line_no, "events start with 'at <step>'"));
    }
    let step: u64 = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| line_err(line_no, "bad event step"))?;
    let action = match tokens.next() {
        Some("set") => {
            let assignment = tokens.collect::<Vec<_>>().join(" ");
            let (target, value) = assignment
                .split_once('=')
                .ok_or_else(|| line_err(line_no, "expected set <node>.<key>=<value>"))?;
            let (node, key) = target
                .trim()
                .split_once('.')
                .ok_or_else(|| line_err(line_no, "expected p<id>.m or t<id>.v"))?;
            match (node.chars().next(), key.trim()) {
                (Some('p'), "m") => {
                    let id = parse_node_id(line_no, &node[1..])?;
                    let m: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| line_err(line_no, "bad marking"))?;
                    EventAction::SetMarking(id, m)
                }
                (Some('t'), "v") => {
                    let id = parse_node_id(line_no, &node[1..])?;
                    let expr =
                        parse_speed(value.trim()).map_err(|e| line_err(line_no, e.to_string()))?;
                    EventAction::SetSpeed(id, expr)
                }
                _ => return Err(line_err(line_no, format!("unknown set target '{target}'"))),
            }
        }
        Some("attach") => EventAction::Attach(
            tokens
                .next()
                .ok_or_else(|| line_err(line_no, "attach needs a gadget name"))?
                .to_string(),
        ),
        Some("detach") => EventAction::Detach(
            tokens
                .next()
                .ok_or_else(|| line_err(line_no, "detach needs a gadget name"))?
                .to_string(),
        ),
        Some("command") => {
            let name = tokens
                .next()
                .ok_or_else(|| line_err(line_no, "command needs an effector name"))?
                .to_string();
            let value: f64 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| line_err(line_no, "command needs a numeric value"))?;
            EventAction::Command(name, value)
        }
        other => {
            return Err(line_err(
                line_no,
                format!("unknown event '{}'", other.unwrap_or("")),
            ))
        }
    };
    Ok(Event { step, action })
}
