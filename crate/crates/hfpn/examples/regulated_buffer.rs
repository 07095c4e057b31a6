//! A regulated buffer: a receptor watches place 2 and a solver
//! commands a marking effector whenever the reading falls below the
//! setpoint. Prints the CSV trace.

use hfpn::engine::{self, GadgetSlot, RunConfig};
use hfpn::gadget::{build_em, build_rm, GadgetParams};
use hfpn::net::NodeId;
use hfpn::{formula, solver};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = formula::parse("2{m=4}C3{v=0.5}I4")?;
    let mut config = RunConfig::new(net, 50, 1.0);
    config.gadgets.push(GadgetSlot {
        name: "watch".into(),
        gadget: build_rm(NodeId::new(2), GadgetParams::default())?,
        attach_at_start: true,
    });
    config.gadgets.push(GadgetSlot {
        name: "feed".into(),
        gadget: build_em(
            NodeId::new(2),
            GadgetParams {
                rate: 5.0,
                ..Default::default()
            },
        )?,
        attach_at_start: true,
    });
    config
        .solvers
        .push(solver::build_setpoint_solver(4.0, 0.5, "watch", "feed")?);
    let result = engine::run(config)?;
    print!("{}", result.trace.to_csv());
    Ok(())
}
