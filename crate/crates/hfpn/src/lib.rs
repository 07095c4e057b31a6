//! Hybrid functional Petri nets with a structural-unit calculus.
//!
//! The crate models nets as compositions of one-arc structural units,
//! parses and emits the accompanying formula notation, and executes nets
//! with a fixed-step synchronous engine. On top of that sit attachable
//! receptor and effector gadgets (marking and velocity sensors/actuators)
//! and a setpoint solver that wires a receptor to an effector for
//! closed-loop regulation.
//!
//! * [`net`]: places, transitions, arcs, validation
//! * [`formula`]: the unit-letter notation (parse/emit round trip)
//! * [`fusion`]: defusion into structural units, p/t/whole-fusion, compose
//! * [`gadget`]: receptor/effector templates, attach/detach by fusion
//! * [`solver`]: setpoint regulator fragments and policy hooks
//! * [`engine`]: synchronous simulation, traces, CSV export
//! * [`scenario`]: the line-oriented scenario file format

pub mod engine;
pub mod formula;
pub mod fusion;
pub mod gadget;
pub mod iso;
pub mod net;
pub mod scenario;
pub mod solver;
pub mod speed;

pub use engine::{run, RunConfig, SimState, Trace};
pub use formula::{emit, parse, round_trip_check};
pub use fusion::{compose, defuse, p_fuse, t_fuse, w_fuse, StructuralUnit, UnitSet};
pub use gadget::{Gadget, GadgetKind, GadgetParams};
pub use iso::isomorphic;
pub use net::{Arc, ArcKind, Marking, Net, NetBuilder, NodeId, Place, Transition};
pub use solver::SetpointSolver;
pub use speed::SpeedExpr;
