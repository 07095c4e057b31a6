//! Receptor and effector gadgets: attachable subnets that observe or drive
//! the main net.
//!
//! A receptor mirrors a place's marking (`RM`) or a transition's velocity
//! (`RV`) into a display place, lagged one step, with optional cleanup each
//! step (reset mode) or none (cumulative mode). An effector injects a
//! commanded number of tokens into a place (`EM`) or contributes a
//! commanded velocity to a transition (`EV`). Complex variants observe or
//! feed several places at once.
//!
//! Gadgets are built detached, with private local ids; `attach` renumbers
//! the internals to the lowest free ids of the host net and fuses the open
//! slots onto the targets. `detach` removes exactly the gadget's nodes and
//! arcs again, discarding any tokens resident inside.

use std::collections::BTreeMap;

use crate::net::{self, Arc, ArcKind, Marking, Net, NodeId, Place, Transition};
use crate::speed::SpeedExpr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GadgetKind {
    /// Position marking receptor.
    Rm,
    /// Transition velocity receptor.
    Rv,
    /// Position marking effector.
    Em,
    /// Transition velocity effector.
    Ev,
    /// Marking receptor over several positions (reads their sum).
    ComplexRm,
    /// Marking effector over several positions (distributes by rates).
    ComplexEm,
}

impl GadgetKind {
    pub fn is_receptor(self) -> bool {
        matches!(
            self,
            GadgetKind::Rm | GadgetKind::Rv | GadgetKind::ComplexRm
        )
    }

    pub fn is_effector(self) -> bool {
        !self.is_receptor()
    }

    /// True if targets are places (p-fusion); false for transitions
    /// (t-fusion).
    fn targets_places(self) -> bool {
        !matches!(self, GadgetKind::Rv | GadgetKind::Ev)
    }
}

/// Physical parameters shared by all gadget templates.
///
/// * `value` (m'): perceived or transferred quantity, the EM budget and
///   the EV velocity level; unused by receptors.
/// * `capacity` (v'): per-step transfer bound; `None` means unlimited
///   ("match m'").
/// * `rate` (v''): for receptors, `> 0` selects reset mode (the display is
///   cleaned every step) and `0` cumulative mode; for EM, the token feed rate from
///   the budget into the effector place.
/// * `tau` (τ'): response delay; realized as a discrete delay on the
///   transfer transition when nonzero.
/// * `threshold` (k): response threshold on the receptor's read arc.
#[derive(Debug, Clone, PartialEq)]
pub struct GadgetParams {
    pub value: f64,
    pub capacity: Option<f64>,
    pub rate: f64,
    pub tau: f64,
    pub threshold: f64,
}

impl Default for GadgetParams {
    fn default() -> GadgetParams {
        GadgetParams {
            value: 0.0,
            capacity: None,
            rate: 1.0,
            tau: 0.0,
            threshold: 0.0,
        }
    }
}

impl GadgetParams {
    fn check(&self) -> Result<(), GadgetError> {
        let ok = self.value >= 0.0
            && self.capacity.map(|c| c >= 0.0).unwrap_or(true)
            && self.rate >= 0.0
            && self.tau >= 0.0
            && self.threshold >= 0.0
            && self.value.is_finite();
        if ok {
            Ok(())
        } else {
            Err(GadgetError::InvalidParams)
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GadgetError {
    #[error("invalid gadget parameters")]
    InvalidParams,
    #[error("a complex gadget needs at least one target")]
    EmptyTargetSet,
    #[error("target {0} does not exist in the net")]
    UnknownTarget(NodeId),
    #[error("target {0} has the wrong node class for this gadget")]
    WrongTargetClass(NodeId),
    #[error("gadget is already attached")]
    AlreadyAttached,
    #[error("gadget is not attached")]
    NotAttached,
    #[error("gadget is not a receptor")]
    NotAReceptor,
    #[error("gadget is not an effector")]
    NotAnEffector,
    #[error("command values are nonnegative")]
    NegativeValue,
}

#[derive(Debug, Clone, PartialEq)]
struct Attachment {
    /// local id -> host id, covering slots and internals.
    map: BTreeMap<NodeId, NodeId>,
    /// EV only: the target transition's speed before the contribution term
    /// was added.
    saved_speed: Option<SpeedExpr>,
}

/// A receptor, effector or complex gadget plus its target bindings.
#[derive(Debug, Clone, PartialEq)]
pub struct Gadget {
    pub kind: GadgetKind,
    pub targets: Vec<NodeId>,
    pub params: GadgetParams,
    /// ComplexEm: one feed rate per target.
    pub rates: Vec<f64>,
    /// Internal structure over local ids; slot nodes stand in for targets.
    fragment: Net,
    /// Local ids of the slot nodes, index-aligned with `targets`.
    slot_locals: Vec<NodeId>,
    display_local: Option<NodeId>,
    command_local: Option<NodeId>,
    attachment: Option<Attachment>,
}

fn lid(v: u32) -> NodeId {
    NodeId::new(v)
}

impl Gadget {
    pub fn is_attached(&self) -> bool {
        self.attachment.is_some()
    }

    /// Host id of the receptor's display place, once attached.
    pub fn display_place(&self) -> Option<NodeId> {
        let att = self.attachment.as_ref()?;
        self.display_local.map(|l| att.map[&l])
    }

    /// Host id of the effector's command place (EM budget, EV level), once
    /// attached.
    pub fn command_place(&self) -> Option<NodeId> {
        let att = self.attachment.as_ref()?;
        self.command_local.map(|l| att.map[&l])
    }

    /// Host ids of the gadget's internal (non-slot) nodes.
    pub fn internal_ids(&self) -> Vec<NodeId> {
        match &self.attachment {
            Some(att) => self
                .internal_locals()
                .into_iter()
                .map(|l| att.map[&l])
                .collect(),
            None => Vec::new(),
        }
    }

    fn internal_locals(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .fragment
            .places()
            .map(|p| p.id)
            .chain(self.fragment.transitions().map(|t| t.id))
            .filter(|id| !self.slot_locals.contains(id))
            .collect();
        out.sort();
        out
    }

    /// Current reading of a receptor's display place.
    pub fn read_from(&self, marking: &Marking) -> Result<f64, GadgetError> {
        if !self.kind.is_receptor() {
            return Err(GadgetError::NotAReceptor);
        }
        let display = self.display_place().ok_or(GadgetError::NotAttached)?;
        Ok(marking.get(&display).copied().unwrap_or(0.0))
    }

    /// The gadget's internal structure as a standalone net (slot nodes
    /// included as placeholders); used for serialization.
    pub fn fragment(&self) -> &Net {
        &self.fragment
    }
}

/// The transfer transition of marking receptors: continuous with the
/// readout speed, or discrete when a response delay is requested.
fn transfer_transition(id: NodeId, speed: SpeedExpr, tau: f64) -> Transition {
    if tau > 0.0 {
        Transition::discrete(id, tau)
    } else {
        Transition::continuous(id, speed)
    }
}

/// Readout speed from a source place into the display: unlimited capacity
/// copies the whole value; a finite capacity reads it in chunks until the
/// display holds it.
fn readout_speed(source: NodeId, display: NodeId, capacity: Option<f64>) -> SpeedExpr {
    match capacity {
        None => SpeedExpr::Marking(source),
        Some(cap) => SpeedExpr::min(
            SpeedExpr::max(
                SpeedExpr::Const(0.0),
                SpeedExpr::sub(SpeedExpr::Marking(source), SpeedExpr::Marking(display)),
            ),
            SpeedExpr::Const(cap),
        ),
    }
}

/// Cleanup speed of the display's outlet transition: full reset each step in
/// reset mode, off in cumulative mode.
fn cleanup_speed(display: NodeId, rate: f64) -> SpeedExpr {
    if rate > 0.0 {
        SpeedExpr::Marking(display)
    } else {
        SpeedExpr::Const(0.0)
    }
}

/// Position marking receptor: an associative read of the target place, a
/// transfer into the display, and an outlet that cleans the display.
pub fn build_rm(target: NodeId, params: GadgetParams) -> Result<Gadget, GadgetError> {
    params.check()?;
    let slot = lid(1);
    let transfer = lid(2);
    let display = lid(3);
    let outlet = lid(4);

    let mut fragment = Net::default();
    net::raw::insert_place(&mut fragment, Place::continuous(slot, 0.0));
    let mut d = Place::continuous(display, 0.0);
    d.display = true;
    net::raw::insert_place(&mut fragment, d);
    net::raw::insert_transition(
        &mut fragment,
        transfer_transition(
            transfer,
            readout_speed(slot, display, params.capacity),
            params.tau,
        ),
    );
    net::raw::insert_transition(
        &mut fragment,
        Transition::continuous(outlet, cleanup_speed(display, params.rate)),
    );
    net::raw::insert_arc(
        &mut fragment,
        Arc::new(slot, transfer, ArcKind::Associative).with_params(params.threshold, 1),
    );
    net::raw::insert_arc(&mut fragment, Arc::new(transfer, display, ArcKind::Normal));
    net::raw::insert_arc(&mut fragment, Arc::new(display, outlet, ArcKind::Normal));
    if params.capacity.is_some() && params.tau == 0.0 {
        // The chunked readout references the display marking.
        net::raw::insert_arc(
            &mut fragment,
            Arc::new(display, transfer, ArcKind::Associative),
        );
    }

    Ok(Gadget {
        kind: GadgetKind::Rm,
        targets: vec![target],
        params,
        rates: Vec::new(),
        fragment,
        slot_locals: vec![slot],
        display_local: Some(display),
        command_local: None,
        attachment: None,
    })
}

/// Transition velocity receptor: an added output arc of the target delivers
/// its per-step flow into the display; cleanup as in the marking receptor.
pub fn build_rv(target: NodeId, params: GadgetParams) -> Result<Gadget, GadgetError> {
    params.check()?;
    let slot = lid(1);
    let display = lid(2);
    let outlet = lid(3);

    let mut fragment = Net::default();
    net::raw::insert_transition(
        &mut fragment,
        Transition::continuous(slot, SpeedExpr::Const(0.0)),
    );
    let mut d = Place::continuous(display, 0.0);
    d.display = true;
    net::raw::insert_place(&mut fragment, d);
    net::raw::insert_transition(
        &mut fragment,
        Transition::continuous(outlet, cleanup_speed(display, params.rate)),
    );
    net::raw::insert_arc(&mut fragment, Arc::new(slot, display, ArcKind::Normal));
    net::raw::insert_arc(&mut fragment, Arc::new(display, outlet, ArcKind::Normal));

    Ok(Gadget {
        kind: GadgetKind::Rv,
        targets: vec![target],
        params,
        rates: Vec::new(),
        fragment,
        slot_locals: vec![slot],
        display_local: Some(display),
        command_local: None,
        attachment: None,
    })
}

/// Position marking effector: a budget place holding m' feeds an effector
/// place, which transfers into the target with the adjusted capacity.
pub fn build_em(target: NodeId, params: GadgetParams) -> Result<Gadget, GadgetError> {
    params.check()?;
    let budget = lid(1);
    let feed = lid(2);
    let store = lid(3);
    let transfer = lid(4);
    let slot = lid(5);

    let transfer_speed = match params.capacity {
        None => SpeedExpr::Marking(store),
        Some(cap) => SpeedExpr::min(SpeedExpr::Marking(store), SpeedExpr::Const(cap)),
    };

    let mut fragment = Net::default();
    net::raw::insert_place(&mut fragment, Place::continuous(budget, params.value));
    net::raw::insert_place(&mut fragment, Place::continuous(store, 0.0));
    net::raw::insert_place(&mut fragment, Place::continuous(slot, 0.0));
    net::raw::insert_transition(
        &mut fragment,
        Transition::continuous(feed, SpeedExpr::Const(params.rate)),
    );
    net::raw::insert_transition(
        &mut fragment,
        transfer_transition(transfer, transfer_speed, params.tau),
    );
    net::raw::insert_arc(&mut fragment, Arc::new(budget, feed, ArcKind::Normal));
    net::raw::insert_arc(&mut fragment, Arc::new(feed, store, ArcKind::Normal));
    net::raw::insert_arc(&mut fragment, Arc::new(store, transfer, ArcKind::Normal));
    net::raw::insert_arc(&mut fragment, Arc::new(transfer, slot, ArcKind::Normal));

    Ok(Gadget {
        kind: GadgetKind::Em,
        targets: vec![target],
        params,
        rates: Vec::new(),
        fragment,
        slot_locals: vec![slot],
        display_local: None,
        command_local: Some(budget),
        attachment: None,
    })
}

/// Transition velocity effector: a source transition maintains the effector
/// place at the commanded level; an associative arc contributes that level
/// to the target's speed.
pub fn build_ev(target: NodeId, params: GadgetParams) -> Result<Gadget, GadgetError> {
    params.check()?;
    let source = lid(1);
    let level = lid(2);
    let slot = lid(3);

    let mut fragment = Net::default();
    net::raw::insert_place(&mut fragment, Place::continuous(level, 0.0));
    net::raw::insert_transition(
        &mut fragment,
        Transition::continuous(source, maintenance_speed(params.value, level)),
    );
    net::raw::insert_transition(
        &mut fragment,
        Transition::continuous(slot, SpeedExpr::Const(0.0)),
    );
    net::raw::insert_arc(&mut fragment, Arc::new(source, level, ArcKind::Normal));
    net::raw::insert_arc(&mut fragment, Arc::new(level, slot, ArcKind::Associative));
    net::raw::insert_arc(&mut fragment, Arc::new(level, source, ArcKind::Associative));

    Ok(Gadget {
        kind: GadgetKind::Ev,
        targets: vec![target],
        params,
        rates: Vec::new(),
        fragment,
        slot_locals: vec![slot],
        display_local: None,
        command_local: Some(level),
        attachment: None,
    })
}

pub(crate) fn maintenance_speed(value: f64, level: NodeId) -> SpeedExpr {
    SpeedExpr::max(
        SpeedExpr::Const(0.0),
        SpeedExpr::sub(SpeedExpr::Const(value), SpeedExpr::Marking(level)),
    )
}

/// Complex marking receptor: one read-and-transfer pair per target, all
/// feeding a single display, plus one shared cleanup outlet. The display
/// reads the sum of the targets' markings of the previous step.
pub fn build_complex_rm(targets: &[NodeId], params: GadgetParams) -> Result<Gadget, GadgetError> {
    params.check()?;
    if targets.is_empty() {
        return Err(GadgetError::EmptyTargetSet);
    }
    let n = targets.len() as u32;
    let mut fragment = Net::default();
    let mut slot_locals = Vec::new();
    let display = lid(2 * n + 1);
    let outlet = lid(2 * n + 2);
    let mut d = Place::continuous(display, 0.0);
    d.display = true;
    net::raw::insert_place(&mut fragment, d);
    net::raw::insert_transition(
        &mut fragment,
        Transition::continuous(outlet, cleanup_speed(display, params.rate)),
    );
    net::raw::insert_arc(&mut fragment, Arc::new(display, outlet, ArcKind::Normal));
    for i in 0..n {
        let slot = lid(2 * i + 1);
        let transfer = lid(2 * i + 2);
        net::raw::insert_place(&mut fragment, Place::continuous(slot, 0.0));
        net::raw::insert_transition(
            &mut fragment,
            transfer_transition(
                transfer,
                readout_speed(slot, display, params.capacity),
                params.tau,
            ),
        );
        net::raw::insert_arc(
            &mut fragment,
            Arc::new(slot, transfer, ArcKind::Associative).with_params(params.threshold, 1),
        );
        net::raw::insert_arc(&mut fragment, Arc::new(transfer, display, ArcKind::Normal));
        if params.capacity.is_some() && params.tau == 0.0 {
            net::raw::insert_arc(
                &mut fragment,
                Arc::new(display, transfer, ArcKind::Associative),
            );
        }
        slot_locals.push(slot);
    }

    Ok(Gadget {
        kind: GadgetKind::ComplexRm,
        targets: targets.to_vec(),
        params,
        rates: Vec::new(),
        fragment,
        slot_locals,
        display_local: Some(display),
        command_local: None,
        attachment: None,
    })
}

/// Complex marking effector: a budget feeds a shared place, from which one
/// transfer per target moves tokens at its own rate until the shared place
/// is empty.
pub fn build_complex_em(
    targets: &[NodeId],
    rates: &[f64],
    params: GadgetParams,
) -> Result<Gadget, GadgetError> {
    params.check()?;
    if targets.is_empty() {
        return Err(GadgetError::EmptyTargetSet);
    }
    if rates.len() != targets.len() || rates.iter().any(|r| *r <= 0.0 || !r.is_finite()) {
        return Err(GadgetError::InvalidParams);
    }
    let n = targets.len() as u32;
    let budget = lid(1);
    let feed = lid(2);
    let store = lid(3);
    let mut fragment = Net::default();
    net::raw::insert_place(&mut fragment, Place::continuous(budget, params.value));
    net::raw::insert_place(&mut fragment, Place::continuous(store, 0.0));
    net::raw::insert_transition(
        &mut fragment,
        Transition::continuous(feed, SpeedExpr::Const(params.rate)),
    );
    net::raw::insert_arc(&mut fragment, Arc::new(budget, feed, ArcKind::Normal));
    net::raw::insert_arc(&mut fragment, Arc::new(feed, store, ArcKind::Normal));
    let mut slot_locals = Vec::new();
    for i in 0..n {
        let transfer = lid(4 + 2 * i);
        let slot = lid(5 + 2 * i);
        net::raw::insert_place(&mut fragment, Place::continuous(slot, 0.0));
        net::raw::insert_transition(
            &mut fragment,
            Transition::continuous(transfer, SpeedExpr::Const(rates[i as usize])),
        );
        net::raw::insert_arc(&mut fragment, Arc::new(store, transfer, ArcKind::Normal));
        net::raw::insert_arc(&mut fragment, Arc::new(transfer, slot, ArcKind::Normal));
        slot_locals.push(slot);
    }

    Ok(Gadget {
        kind: GadgetKind::ComplexEm,
        targets: targets.to_vec(),
        params,
        rates: rates.to_vec(),
        fragment,
        slot_locals,
        display_local: None,
        command_local: Some(budget),
        attachment: None,
    })
}

/// Attaches the gadget by fusion: internal nodes are renumbered to the
/// lowest free ids of the host, slot nodes fuse onto the targets, and for a
/// velocity effector the target's speed gains the level contribution.
pub fn attach(net: &Net, gadget: &mut Gadget) -> Result<Net, GadgetError> {
    if gadget.is_attached() {
        return Err(GadgetError::AlreadyAttached);
    }
    for target in &gadget.targets {
        if !net.contains(*target) {
            return Err(GadgetError::UnknownTarget(*target));
        }
        let is_place = net.is_place(*target);
        if is_place != gadget.kind.targets_places() {
            return Err(GadgetError::WrongTargetClass(*target));
        }
    }

    let mut map: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    for (slot, target) in gadget.slot_locals.iter().zip(&gadget.targets) {
        map.insert(*slot, *target);
    }
    let mut host = net.clone();
    for local in gadget.internal_locals() {
        let assigned = host.lowest_free_id();
        map.insert(local, assigned);
        // Reserve the id before computing the next one.
        if gadget.fragment.is_place(local) {
            let mut place = gadget.fragment.place(local).unwrap().clone();
            place.id = assigned;
            net::raw::insert_place(&mut host, place);
        } else {
            let mut tr = gadget.fragment.transition(local).unwrap().clone();
            tr.id = assigned;
            net::raw::insert_transition(&mut host, tr);
        }
    }
    // Remap speed references now that the whole mapping is known.
    for local in gadget.internal_locals() {
        if gadget.fragment.is_transition(local) {
            let speed = gadget
                .fragment
                .transition(local)
                .unwrap()
                .speed
                .map_places(&|p| map.get(&p).copied().unwrap_or(p));
            net::raw::set_speed(&mut host, map[&local], speed);
        }
    }
    for arc in gadget.fragment.arcs() {
        let mut mapped = arc.clone();
        mapped.source = map[&arc.source];
        mapped.target = map[&arc.target];
        net::raw::insert_arc(&mut host, mapped);
    }

    let mut saved_speed = None;
    if gadget.kind == GadgetKind::Ev {
        let target = gadget.targets[0];
        let level = map[&gadget.command_local.unwrap()];
        let original = host.transition(target).unwrap().speed.clone();
        saved_speed = Some(original.clone());
        net::raw::set_speed(
            &mut host,
            target,
            SpeedExpr::add(original, SpeedExpr::Marking(level)),
        );
    }

    debug_assert!(host.validate().is_empty(), "attached net stays valid");
    gadget.attachment = Some(Attachment { map, saved_speed });
    Ok(host)
}

/// Removes exactly the gadget's arcs and nodes; tokens resident inside the
/// gadget are discarded and an EV target gets its original speed back.
pub fn detach(net: &Net, gadget: &mut Gadget) -> Result<Net, GadgetError> {
    let attachment = gadget.attachment.take().ok_or(GadgetError::NotAttached)?;
    let internals: Vec<NodeId> = gadget
        .internal_locals()
        .into_iter()
        .map(|l| attachment.map[&l])
        .collect();
    let mut host = net.clone();
    let arc_keys: Vec<_> = host
        .arcs()
        .filter(|a| internals.contains(&a.source) || internals.contains(&a.target))
        .map(|a| a.key())
        .collect();
    for key in arc_keys {
        net::raw::remove_arc(&mut host, &key);
    }
    for id in internals {
        net::raw::remove_node(&mut host, id);
    }
    if gadget.kind == GadgetKind::Ev {
        let target = gadget.targets[0];
        let level = attachment.map[&gadget.command_local.unwrap()];
        let current = host.transition(target).unwrap().speed.clone();
        let restored = strip_contribution(&current, level)
            .or(attachment.saved_speed.clone())
            .unwrap_or(current);
        net::raw::set_speed(&mut host, target, restored);
    }
    Ok(host)
}

/// Removes one additive `+ m(level)` term from the left spine of the speed
/// expression; attachment always adds the term there.
fn strip_contribution(expr: &SpeedExpr, level: NodeId) -> Option<SpeedExpr> {
    if let SpeedExpr::Add(a, b) = expr {
        if **b == SpeedExpr::Marking(level) {
            return Some((**a).clone());
        }
        if let Some(stripped) = strip_contribution(a, level) {
            return Some(SpeedExpr::Add(Box::new(stripped), b.clone()));
        }
    }
    None
}

/// What an effector command changes at the next step boundary.
pub(crate) enum CommandEffect {
    /// EM: add to the budget place's marking.
    Refill { budget: NodeId, amount: f64 },
    /// EV: change the maintained level (and clamp the level place down when
    /// lowering).
    SetLevel {
        source: NodeId,
        level: NodeId,
        value: f64,
    },
}

pub(crate) fn command_effect(
    gadget: &mut Gadget,
    value: f64,
) -> Result<CommandEffect, GadgetError> {
    if !gadget.kind.is_effector() {
        return Err(GadgetError::NotAnEffector);
    }
    if value < 0.0 || !value.is_finite() {
        return Err(GadgetError::NegativeValue);
    }
    let attachment = gadget.attachment.as_ref().ok_or(GadgetError::NotAttached)?;
    match gadget.kind {
        GadgetKind::Em | GadgetKind::ComplexEm => Ok(CommandEffect::Refill {
            budget: attachment.map[&gadget.command_local.unwrap()],
            amount: value,
        }),
        GadgetKind::Ev => {
            gadget.params.value = value;
            let level = attachment.map[&gadget.command_local.unwrap()];
            let source_local = lid(1);
            Ok(CommandEffect::SetLevel {
                source: attachment.map[&source_local],
                level,
                value,
            })
        }
        _ => Err(GadgetError::NotAnEffector),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;
    use crate::iso::isomorphic;

    fn id(v: u32) -> NodeId {
        NodeId::new(v)
    }

    #[test]
    fn rm_attaches_with_lowest_free_ids() {
        let net = parse("1I2C3I4C5I6C7I8").unwrap();
        let mut rm = build_rm(id(2), GadgetParams::default()).unwrap();
        let host = attach(&net, &mut rm).unwrap();
        // Internals take 9, 10, 11: read transition, display, outlet.
        assert_eq!(rm.internal_ids(), vec![id(9), id(10), id(11)]);
        assert_eq!(rm.display_place(), Some(id(10)));
        assert!(host.arc(id(2), id(9), ArcKind::Associative).is_some());
        assert!(host.arc(id(9), id(10), ArcKind::Normal).is_some());
        assert!(host.arc(id(10), id(11), ArcKind::Normal).is_some());
        assert!(host.validate().is_empty());
    }

    #[test]
    fn attach_then_detach_restores_the_net() {
        let net = parse("1I2C3I4").unwrap();
        for build in [
            build_rm(id(2), GadgetParams::default()).unwrap(),
            build_rv(id(3), GadgetParams::default()).unwrap(),
            build_em(
                id(4),
                GadgetParams {
                    value: 3.0,
                    ..Default::default()
                },
            )
            .unwrap(),
            build_ev(id(1), GadgetParams::default()).unwrap(),
        ] {
            let mut gadget = build;
            let host = attach(&net, &mut gadget).unwrap();
            let restored = detach(&host, &mut gadget).unwrap();
            assert_eq!(restored, net);
            assert!(isomorphic(&restored, &net));
        }
    }

    #[test]
    fn detach_twice_fails() {
        let net = parse("1I2").unwrap();
        let mut rm = build_rm(id(2), GadgetParams::default()).unwrap();
        let host = attach(&net, &mut rm).unwrap();
        let restored = detach(&host, &mut rm).unwrap();
        assert_eq!(
            detach(&restored, &mut rm).unwrap_err(),
            GadgetError::NotAttached
        );
    }

    #[test]
    fn attach_twice_fails() {
        let net = parse("1I2").unwrap();
        let mut rm = build_rm(id(2), GadgetParams::default()).unwrap();
        let host = attach(&net, &mut rm).unwrap();
        assert_eq!(
            attach(&host, &mut rm).unwrap_err(),
            GadgetError::AlreadyAttached
        );
    }

    #[test]
    fn rv_on_a_place_is_the_wrong_class() {
        let net = parse("1I2").unwrap();
        let mut rv = build_rv(id(2), GadgetParams::default()).unwrap();
        assert_eq!(
            attach(&net, &mut rv).unwrap_err(),
            GadgetError::WrongTargetClass(id(2))
        );
    }

    #[test]
    fn ev_attach_adds_and_detach_removes_the_contribution() {
        let net = parse("1{v=0.2}I2").unwrap();
        let mut ev = build_ev(id(1), GadgetParams::default()).unwrap();
        let host = attach(&net, &mut ev).unwrap();
        let level = ev.command_place().unwrap();
        assert_eq!(
            host.transition(id(1)).unwrap().speed,
            SpeedExpr::add(SpeedExpr::Const(0.2), SpeedExpr::Marking(level))
        );
        let restored = detach(&host, &mut ev).unwrap();
        assert_eq!(
            restored.transition(id(1)).unwrap().speed,
            SpeedExpr::Const(0.2)
        );
    }

    #[test]
    fn two_evs_stack_and_detach_in_any_order() {
        let net = parse("1{v=0.5}I2").unwrap();
        let mut ev_a = build_ev(id(1), GadgetParams::default()).unwrap();
        let mut ev_b = build_ev(id(1), GadgetParams::default()).unwrap();
        let host = attach(&net, &mut ev_a).unwrap();
        let host = attach(&host, &mut ev_b).unwrap();
        let host = detach(&host, &mut ev_a).unwrap();
        let level_b = ev_b.command_place().unwrap();
        assert_eq!(
            host.transition(id(1)).unwrap().speed,
            SpeedExpr::add(SpeedExpr::Const(0.5), SpeedExpr::Marking(level_b))
        );
        let host = detach(&host, &mut ev_b).unwrap();
        assert_eq!(host, net);
    }

    /// Canonical emission minus brace parameters, leaving the pure unit
    /// structure.
    fn skeleton(net: &Net) -> String {
        let mut out = String::new();
        let mut depth = 0usize;
        for c in crate::formula::emit(net).chars() {
            match c {
                '{' => depth += 1,
                '}' => depth -= 1,
                c if depth == 0 => out.push(c),
                _ => {}
            }
        }
        out
    }

    #[test]
    fn complex_rm_serializes_to_the_factored_form() {
        // Slot places 1 and 3 stand in for the targets; the per-target
        // read-transfer pairs funnel into the shared display 5 with its
        // outlet 6, giving the factored "(aA.I,bA.I)sC p" shape.
        let crm = build_complex_rm(&[id(1), id(2)], GadgetParams::default()).unwrap();
        assert_eq!(skeleton(crm.fragment()), "(1A2I,3A4I)5C6");
    }

    #[test]
    fn complex_em_serializes_to_the_distribution_form() {
        let cem = build_complex_em(
            &[id(4), id(6)],
            &[1.0, 1.0],
            GadgetParams {
                value: 10.0,
                rate: 10.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(skeleton(cem.fragment()), "1C2I3(C4I5,C6I7)");
    }

    #[test]
    fn complex_targets_must_be_nonempty() {
        assert_eq!(
            build_complex_rm(&[], GadgetParams::default()).unwrap_err(),
            GadgetError::EmptyTargetSet
        );
    }

    #[test]
    fn read_requires_a_receptor() {
        let mut em = build_em(id(2), GadgetParams::default()).unwrap();
        let net = parse("1I2").unwrap();
        let _ = attach(&net, &mut em).unwrap();
        assert_eq!(
            em.read_from(&Marking::new()).unwrap_err(),
            GadgetError::NotAReceptor
        );
    }
}
