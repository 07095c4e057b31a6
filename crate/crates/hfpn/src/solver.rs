//! Setpoint solvers: net fragments that read a receptor display and command
//! an effector to hold a quantity at a target value.
//!
//! The fragment is a command transition fused onto the effector's command
//! place. Its speed is `gain * max(0, setpoint - m(display))` and an
//! inhibitory arc from the display with threshold `setpoint` disables it the
//! moment the reading reaches the setpoint, so the deadband is exact; an
//! associative arc carries the display reading into the speed expression.
//! Per step the fragment therefore feeds the effector the measured deficit
//! scaled by the gain.

use crate::gadget::{attach, Gadget, GadgetError};
use crate::net::{self, Arc, ArcKind, Net, NodeId, Transition};
use crate::speed::SpeedExpr;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("solver parameters must satisfy setpoint >= 0 and gain >= 0")]
    InvalidParams,
    #[error("solver is already attached")]
    AlreadyAttached,
    #[error("the referenced gadget is unusable here: {0}")]
    Gadget(#[from] GadgetError),
    #[error("receptor has no display place (is it attached?)")]
    NoDisplay,
    #[error("effector has no command place (is it attached?)")]
    NoCommandPlace,
}

/// A deficit regulator between one receptor and one effector, referenced by
/// gadget name.
#[derive(Debug, Clone, PartialEq)]
pub struct SetpointSolver {
    pub setpoint: f64,
    pub gain: f64,
    pub receptor: String,
    pub effector: String,
    command_transition: Option<NodeId>,
}

impl SetpointSolver {
    /// Host id of the command transition, once attached.
    pub fn command_transition(&self) -> Option<NodeId> {
        self.command_transition
    }

    pub fn is_attached(&self) -> bool {
        self.command_transition.is_some()
    }
}

pub fn build_setpoint_solver(
    setpoint: f64,
    gain: f64,
    receptor: impl Into<String>,
    effector: impl Into<String>,
) -> Result<SetpointSolver, SolverError> {
    // Zero gain builds an inert solver; the fragment still attaches.
    if !(setpoint >= 0.0 && setpoint.is_finite() && gain >= 0.0 && gain.is_finite()) {
        return Err(SolverError::InvalidParams);
    }
    Ok(SetpointSolver {
        setpoint,
        gain,
        receptor: receptor.into(),
        effector: effector.into(),
        command_transition: None,
    })
}

/// Fuses the solver fragment between an attached receptor's display place
/// and an attached effector's command place.
pub fn attach_solver(
    net: &Net,
    solver: &mut SetpointSolver,
    receptor: &Gadget,
    effector: &Gadget,
) -> Result<Net, SolverError> {
    if solver.is_attached() {
        return Err(SolverError::AlreadyAttached);
    }
    let display = receptor.display_place().ok_or(SolverError::NoDisplay)?;
    let command_place = effector
        .command_place()
        .ok_or(SolverError::NoCommandPlace)?;

    let mut host = net.clone();
    let command = host.lowest_free_id();
    let speed = SpeedExpr::mul(
        SpeedExpr::Const(solver.gain),
        SpeedExpr::max(
            SpeedExpr::Const(0.0),
            SpeedExpr::sub(
                SpeedExpr::Const(solver.setpoint),
                SpeedExpr::Marking(display),
            ),
        ),
    );
    net::raw::insert_transition(&mut host, Transition::continuous(command, speed));
    net::raw::insert_arc(
        &mut host,
        Arc::new(display, command, ArcKind::Inhibitory).with_params(solver.setpoint, 1),
    );
    net::raw::insert_arc(&mut host, Arc::new(display, command, ArcKind::Associative));
    net::raw::insert_arc(&mut host, Arc::new(command, command_place, ArcKind::Normal));

    debug_assert!(host.validate().is_empty());
    solver.command_transition = Some(command);
    Ok(host)
}

/// Attaches receptor, effector (when not attached yet) and the solver
/// fragment, returning the unified net.
pub fn wire(
    net: &Net,
    receptor: &mut Gadget,
    solver: &mut SetpointSolver,
    effector: &mut Gadget,
) -> Result<Net, SolverError> {
    let mut host = net.clone();
    if !receptor.is_attached() {
        host = attach(&host, receptor)?;
    }
    if !effector.is_attached() {
        host = attach(&host, effector)?;
    }
    attach_solver(&host, solver, receptor, effector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;
    use crate::gadget::{build_em, build_rm, GadgetParams};
    use crate::net::NodeId;

    fn id(v: u32) -> NodeId {
        NodeId::new(v)
    }

    #[test]
    fn wiring_the_marking_loop_matches_the_printed_shape() {
        // Receptor on place 2 takes ids 9-10-11 on the eight-node main
        // chain; the effector and solver follow on the next free ids.
        let net = parse("1I2C3I4C5I6C7I8").unwrap();
        let mut rm = build_rm(id(2), GadgetParams::default()).unwrap();
        let mut em = build_em(id(2), GadgetParams::default()).unwrap();
        let mut solver = build_setpoint_solver(10.0, 0.5, "rm", "em").unwrap();
        let host = wire(&net, &mut rm, &mut solver, &mut em).unwrap();

        let display = rm.display_place().unwrap();
        assert_eq!(display, id(10));
        let command = solver.command_transition().unwrap();
        let budget = em.command_place().unwrap();
        assert!(host.arc(display, command, ArcKind::Inhibitory).is_some());
        assert_eq!(
            host.arc(display, command, ArcKind::Inhibitory)
                .unwrap()
                .threshold,
            10.0
        );
        assert!(host.arc(display, command, ArcKind::Associative).is_some());
        assert!(host.arc(command, budget, ArcKind::Normal).is_some());
        assert!(host.validate().is_empty());
    }

    #[test]
    fn solver_parameters_are_checked() {
        assert_eq!(
            build_setpoint_solver(-1.0, 0.5, "r", "e").unwrap_err(),
            SolverError::InvalidParams
        );
        assert_eq!(
            build_setpoint_solver(1.0, -0.1, "r", "e").unwrap_err(),
            SolverError::InvalidParams
        );
        assert!(build_setpoint_solver(1.0, 0.0, "r", "e").is_ok());
    }

    #[test]
    fn solver_needs_attached_gadgets() {
        let net = parse("1I2").unwrap();
        let rm = build_rm(id(2), GadgetParams::default()).unwrap();
        let em = build_em(id(2), GadgetParams::default()).unwrap();
        let mut solver = build_setpoint_solver(1.0, 1.0, "rm", "em").unwrap();
        assert_eq!(
            attach_solver(&net, &mut solver, &rm, &em).unwrap_err(),
            SolverError::NoDisplay
        );
    }
}
