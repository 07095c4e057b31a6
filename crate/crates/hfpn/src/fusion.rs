//! Decomposition of nets into structural units (defusion) and their
//! composition by p-fusion, t-fusion and whole-fusion.
//!
//! A structural unit is one arc together with full copies of its two
//! endpoint nodes, so a unit set carries everything needed to rebuild the
//! net it came from: `compose(defuse(n))` reproduces `n` exactly. A net
//! produced by partial defusion is flagged as under transformation and the
//! engine refuses to execute it until it is recomposed.

use std::collections::BTreeSet;
use std::fmt;

use crate::net::{self, Arc, ArcKind, Diagnostic, Net, NodeId, Place, Transition, TransitionKind};
use crate::speed::SpeedExpr;

/// One "position-arc-transition" (C/A/B) or "transition-arc-position" (I)
/// triad: the arc plus copies of both endpoint records.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralUnit {
    pub place: Place,
    pub transition: Transition,
    pub arc: Arc,
}

/// Multiset of structural units.
pub type UnitSet = Vec<StructuralUnit>;

impl StructuralUnit {
    /// Unit letter: C for a normal place->transition arc, I for a normal
    /// transition->place arc, A for associative, B for inhibitory.
    pub fn letter(&self) -> char {
        match self.arc.kind {
            ArcKind::Normal => {
                if self.arc.source == self.place.id {
                    'C'
                } else {
                    'I'
                }
            }
            ArcKind::Associative => 'A',
            ArcKind::Inhibitory => 'B',
        }
    }

    /// Pre-index in formula order (the arc source).
    pub fn pre(&self) -> NodeId {
        self.arc.source
    }

    /// Post-index in formula order (the arc target).
    pub fn post(&self) -> NodeId {
        self.arc.target
    }

    /// The unit as a one-arc net.
    pub fn to_net(&self) -> Net {
        let mut net = Net::default();
        net::raw::insert_place(&mut net, self.place.clone());
        net::raw::insert_transition(&mut net, self.transition.clone());
        net::raw::insert_arc(&mut net, self.arc.clone());
        net
    }

    fn with_place_id(&self, id: NodeId) -> StructuralUnit {
        let mut unit = self.clone();
        let old = unit.place.id;
        unit.place.id = id;
        if unit.arc.source == old {
            unit.arc.source = id;
        }
        if unit.arc.target == old {
            unit.arc.target = id;
        }
        unit.transition.speed =
            unit.transition
                .speed
                .map_places(&|p| if p == old { id } else { p });
        unit
    }

    fn with_transition_id(&self, id: NodeId) -> StructuralUnit {
        let mut unit = self.clone();
        let old = unit.transition.id;
        unit.transition.id = id;
        if unit.arc.source == old {
            unit.arc.source = id;
        }
        if unit.arc.target == old {
            unit.arc.target = id;
        }
        unit
    }
}

/// Units print as standalone parseable formulas, e.g. `1A{k=2}3` or
/// `2{m=5}C3{v=0.5}`.
impl fmt::Display for StructuralUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let node = |f: &mut fmt::Formatter<'_>, id: NodeId| -> fmt::Result {
            write!(f, "{id}")?;
            if id == self.place.id {
                if self.place.marking != 0.0 {
                    write!(f, "{{m={}}}", self.place.marking)?;
                }
            } else {
                match self.transition.kind {
                    TransitionKind::Discrete => write!(f, "{{d={}}}", self.transition.delay)?,
                    TransitionKind::Continuous => {
                        if self.transition.speed != SpeedExpr::Const(1.0) {
                            write!(f, "{{v={}}}", self.transition.speed)?;
                        }
                    }
                }
            }
            Ok(())
        };
        node(f, self.pre())?;
        write!(f, "{}", self.letter())?;
        let mut parts = Vec::new();
        if self.arc.threshold != 0.0 {
            parts.push(format!("k={}", self.arc.threshold));
        }
        if self.arc.weight != 1 {
            parts.push(format!("w={}", self.arc.weight));
        }
        if !parts.is_empty() {
            write!(f, "{{{}}}", parts.join(","))?;
        }
        node(f, self.post())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("scope id {0} is not a node of the net")]
    UnknownScopeId(NodeId),
    #[error("node {0} carries conflicting parameters")]
    ParamConflict(NodeId),
    #[error("id {0} is used both as a place and as a transition")]
    IndexClassClash(NodeId),
    #[error("fusion target {0} has the wrong node class")]
    WrongEndpointClass(NodeId),
    #[error("composed net violates invariants: {0:?}")]
    Invalid(Vec<Diagnostic>),
}

fn unit_of(net: &Net, arc: &Arc) -> StructuralUnit {
    let (place_id, transition_id) = if net.is_place(arc.source) {
        (arc.source, arc.target)
    } else {
        (arc.target, arc.source)
    };
    StructuralUnit {
        place: net.place(place_id).expect("arc endpoint exists").clone(),
        transition: net
            .transition(transition_id)
            .expect("arc endpoint exists")
            .clone(),
        arc: arc.clone(),
    }
}

/// Complete defusion: every arc becomes one unit; the residue is empty
/// unless the net had isolated nodes (which no unit can carry).
pub fn defuse(net: &Net) -> (UnitSet, Net) {
    let scope: BTreeSet<NodeId> = net
        .places()
        .map(|p| p.id)
        .chain(net.transitions().map(|t| t.id))
        .collect();
    defuse_scoped(net, &scope).expect("complete scope is always valid")
}

/// Partial defusion: every arc incident to a scoped node becomes one unit;
/// the residue keeps the rest. Nodes whose arcs were all defused are removed
/// from the residue (the units carry them); a nonempty residue of a proper
/// defusion is flagged as under transformation.
pub fn defuse_scoped(net: &Net, scope: &BTreeSet<NodeId>) -> Result<(UnitSet, Net), FusionError> {
    for id in scope {
        if !net.contains(*id) {
            return Err(FusionError::UnknownScopeId(*id));
        }
    }

    let mut units = UnitSet::new();
    let mut residue = net.clone();
    net::raw::set_under_transformation(&mut residue, false);
    let keys: Vec<_> = net
        .arcs()
        .filter(|a| scope.contains(&a.source) || scope.contains(&a.target))
        .map(|a| a.key())
        .collect();
    let mut covered: BTreeSet<NodeId> = BTreeSet::new();
    for key in keys {
        let arc = net::raw::remove_arc(&mut residue, &key).expect("listed arc exists");
        covered.insert(arc.source);
        covered.insert(arc.target);
        units.push(unit_of(net, &arc));
    }
    for id in covered {
        let isolated = !residue.arcs().any(|a| a.source == id || a.target == id);
        if isolated {
            net::raw::remove_node(&mut residue, id);
        }
    }
    if !units.is_empty() && !residue.is_empty() {
        net::raw::set_under_transformation(&mut residue, true);
    }
    Ok((units, residue))
}

/// A part accepted by [`compose`].
#[derive(Debug, Clone)]
pub enum Fragment {
    Net(Net),
    Units(UnitSet),
}

impl From<Net> for Fragment {
    fn from(net: Net) -> Fragment {
        Fragment::Net(net)
    }
}

impl From<UnitSet> for Fragment {
    fn from(units: UnitSet) -> Fragment {
        Fragment::Units(units)
    }
}

impl From<StructuralUnit> for Fragment {
    fn from(unit: StructuralUnit) -> Fragment {
        Fragment::Units(vec![unit])
    }
}

/// Union of fragments: equal ids denote the same node and must agree on
/// their parameters; arcs with identical (source, target, kind) merge by
/// summing weights. The result is validated and never under transformation.
pub fn compose<I>(parts: I) -> Result<Net, FusionError>
where
    I: IntoIterator,
    I::Item: Into<Fragment>,
{
    let mut acc = Net::default();
    for part in parts {
        match part.into() {
            Fragment::Net(net) => merge_net(&mut acc, &net)?,
            Fragment::Units(units) => {
                for unit in &units {
                    merge_net(&mut acc, &unit.to_net())?;
                }
            }
        }
    }
    let diags = acc.validate();
    if !diags.is_empty() {
        return Err(FusionError::Invalid(diags));
    }
    Ok(acc)
}

fn places_agree(a: &Place, b: &Place) -> bool {
    a.kind == b.kind && a.marking == b.marking && a.display == b.display
}

fn transitions_agree(a: &Transition, b: &Transition) -> bool {
    a.kind == b.kind && a.speed == b.speed && a.delay == b.delay
}

fn merge_net(acc: &mut Net, other: &Net) -> Result<(), FusionError> {
    for place in other.places() {
        if acc.is_transition(place.id) {
            return Err(FusionError::IndexClassClash(place.id));
        }
        match acc.place(place.id) {
            Some(existing) if !places_agree(existing, place) => {
                return Err(FusionError::ParamConflict(place.id));
            }
            Some(_) => {}
            None => net::raw::insert_place(acc, place.clone()),
        }
    }
    for tr in other.transitions() {
        if acc.is_place(tr.id) {
            return Err(FusionError::IndexClassClash(tr.id));
        }
        match acc.transition(tr.id) {
            Some(existing) if !transitions_agree(existing, tr) => {
                return Err(FusionError::ParamConflict(tr.id));
            }
            Some(_) => {}
            None => net::raw::insert_transition(acc, tr.clone()),
        }
    }
    for arc in other.arcs() {
        match acc.arc(arc.source, arc.target, arc.kind) {
            Some(existing) => {
                if existing.threshold != arc.threshold {
                    return Err(FusionError::ParamConflict(arc.source));
                }
                net::raw::merge_arc_weight(acc, &arc.key(), arc.weight);
            }
            None => net::raw::insert_arc(acc, arc.clone()),
        }
    }
    Ok(())
}

/// Fuses the place endpoints of all units into the single place `target`.
/// Merged places must agree on their parameters; supply
/// [`p_fuse_with`] to override them explicitly.
pub fn p_fuse(units: &UnitSet, target: NodeId) -> Result<Net, FusionError> {
    fuse_places(units, target, None)
}

/// p-fusion with an explicit record for the fused place.
pub fn p_fuse_with(units: &UnitSet, target: NodeId, place: Place) -> Result<Net, FusionError> {
    fuse_places(units, target, Some(place))
}

fn fuse_places(
    units: &UnitSet,
    target: NodeId,
    override_place: Option<Place>,
) -> Result<Net, FusionError> {
    if units.iter().any(|u| u.transition.id == target) {
        return Err(FusionError::WrongEndpointClass(target));
    }
    let mut renamed: Vec<StructuralUnit> = units.iter().map(|u| u.with_place_id(target)).collect();
    if let Some(place) = override_place {
        let mut place = place;
        place.id = target;
        for unit in &mut renamed {
            unit.place = place.clone();
        }
    }
    compose(renamed)
}

/// Fuses the transition endpoints of all units into the single transition
/// `target`; dual of [`p_fuse`].
pub fn t_fuse(units: &UnitSet, target: NodeId) -> Result<Net, FusionError> {
    fuse_transitions(units, target, None)
}

/// t-fusion with an explicit record for the fused transition.
pub fn t_fuse_with(
    units: &UnitSet,
    target: NodeId,
    transition: Transition,
) -> Result<Net, FusionError> {
    fuse_transitions(units, target, Some(transition))
}

fn fuse_transitions(
    units: &UnitSet,
    target: NodeId,
    override_transition: Option<Transition>,
) -> Result<Net, FusionError> {
    if units.iter().any(|u| u.place.id == target) {
        return Err(FusionError::WrongEndpointClass(target));
    }
    let mut renamed: Vec<StructuralUnit> =
        units.iter().map(|u| u.with_transition_id(target)).collect();
    if let Some(tr) = override_transition {
        let mut tr = tr;
        tr.id = target;
        for unit in &mut renamed {
            unit.transition = tr.clone();
        }
    }
    compose(renamed)
}

/// n-fold self-fusion: multiplies the arc weight by `n` while keeping the
/// original position and transition.
pub fn w_fuse(unit: &StructuralUnit, n: u32) -> StructuralUnit {
    assert!(n >= 1, "whole-fusion multiplicity is positive");
    let mut out = unit.clone();
    out.arc.weight *= n;
    out
}
