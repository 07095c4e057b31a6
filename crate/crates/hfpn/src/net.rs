//! The hybrid functional Petri net data model: places, transitions, typed
//! arcs and their parameters, plus structural validation.
//!
//! Places and transitions share a single id space ("end-to-end numbering"),
//! so an id identifies a node; the node class (place vs. transition) is part
//! of the net, not of the id. A `Net` is an immutable value once built; all
//! transformations (fusion, gadget attachment) construct new nets.

use std::collections::BTreeMap;
use std::fmt;

use crate::speed::SpeedExpr;

/// Identifier of a place or transition. Ids are positive and unique across
/// both node classes within one net.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub fn new(value: u32) -> NodeId {
        assert!(value > 0, "node ids are positive");
        NodeId(value)
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PlaceKind {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub id: NodeId,
    pub kind: PlaceKind,
    /// Initial marking m0.
    pub marking: f64,
    /// Marks a receptor's readout position.
    pub display: bool,
    pub label: Option<String>,
}

impl Place {
    pub fn continuous(id: NodeId, marking: f64) -> Place {
        Place {
            id,
            kind: PlaceKind::Continuous,
            marking,
            display: false,
            label: None,
        }
    }

    pub fn discrete(id: NodeId, marking: f64) -> Place {
        Place {
            id,
            kind: PlaceKind::Discrete,
            marking,
            display: false,
            label: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TransitionKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub id: NodeId,
    pub kind: TransitionKind,
    /// Base speed of a continuous transition; unused for discrete ones.
    pub speed: SpeedExpr,
    /// Firing delay of a discrete transition; must be 0 for continuous ones.
    pub delay: f64,
    pub label: Option<String>,
}

impl Transition {
    pub fn continuous(id: NodeId, speed: SpeedExpr) -> Transition {
        Transition {
            id,
            kind: TransitionKind::Continuous,
            speed,
            delay: 0.0,
            label: None,
        }
    }

    pub fn discrete(id: NodeId, delay: f64) -> Transition {
        Transition {
            id,
            kind: TransitionKind::Discrete,
            speed: SpeedExpr::Const(1.0),
            delay,
            label: None,
        }
    }
}

/// Arc kinds. Inhibitory and associative arcs run place -> transition only
/// and never consume tokens; associative arcs exist to gate enabling and to
/// carry marking references in speed expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArcKind {
    Normal,
    Inhibitory,
    Associative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub source: NodeId,
    pub target: NodeId,
    pub kind: ArcKind,
    /// Enabling threshold k.
    pub threshold: f64,
    /// Multiplicity w; parallel arcs are folded into this weight.
    pub weight: u32,
}

impl Arc {
    pub fn new(source: NodeId, target: NodeId, kind: ArcKind) -> Arc {
        Arc {
            source,
            target,
            kind,
            threshold: 0.0,
            weight: 1,
        }
    }

    pub fn with_params(mut self, threshold: f64, weight: u32) -> Arc {
        self.threshold = threshold;
        self.weight = weight;
        self
    }

    pub fn key(&self) -> ArcKey {
        (self.source, self.target, self.kind)
    }
}

/// Arcs are keyed by (source, target, kind); no two arcs share a key.
pub type ArcKey = (NodeId, NodeId, ArcKind);

/// Snapshot of all place markings.
pub type Marking = BTreeMap<NodeId, f64>;

/// A violated net invariant, reported by [`Net::validate`] or a failed build.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Diagnostic {
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("arc {from}->{to} references a missing node")]
    DanglingArc { from: NodeId, to: NodeId },
    #[error("arc {from}->{to} ({kind:?}) does not run from a place to a transition or back")]
    NonBipartiteArc {
        from: NodeId,
        to: NodeId,
        kind: ArcKind,
    },
    #[error("speed of transition {transition} references place {place} without an incoming normal or associative arc")]
    BadSpeedRef { transition: NodeId, place: NodeId },
    #[error("place {place} has negative marking {marking}")]
    NegativeMarking { place: NodeId, marking: f64 },
    #[error("discrete place {place} holds non-integer marking {marking}")]
    FractionalMarking { place: NodeId, marking: f64 },
    #[error("continuous transition {transition} carries delay {delay}")]
    DelayOnContinuous { transition: NodeId, delay: f64 },
    #[error("transition {transition} has negative delay {delay}")]
    NegativeDelay { transition: NodeId, delay: f64 },
    #[error("arc {from}->{to} has zero weight")]
    ZeroWeight { from: NodeId, to: NodeId },
    #[error("arc {from}->{to} has negative threshold {threshold}")]
    NegativeThreshold {
        from: NodeId,
        to: NodeId,
        threshold: f64,
    },
    #[error("continuous transition {transition} exchanges tokens with discrete place {place}")]
    MixedKindFlow { transition: NodeId, place: NodeId },
}

/// A bipartite net of places and transitions. Construct with [`NetBuilder`]
/// or [`Net::build`]; a successfully built net satisfies every invariant
/// checked by [`Net::validate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Net {
    places: BTreeMap<NodeId, Place>,
    transitions: BTreeMap<NodeId, Transition>,
    arcs: BTreeMap<ArcKey, Arc>,
    /// Set on the residue of a partial defusion; the engine refuses to step
    /// a net that is under transformation until it is recomposed.
    under_transformation: bool,
}

impl Net {
    pub fn build(
        places: Vec<Place>,
        transitions: Vec<Transition>,
        arcs: Vec<Arc>,
    ) -> Result<Net, Vec<Diagnostic>> {
        let mut builder = NetBuilder::new();
        for p in places {
            builder.place(p);
        }
        for t in transitions {
            builder.transition(t);
        }
        for a in arcs {
            builder.arc(a);
        }
        builder.build()
    }

    pub fn places(&self) -> impl Iterator<Item = &Place> {
        self.places.values()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.values()
    }

    pub fn arcs(&self) -> impl Iterator<Item = &Arc> {
        self.arcs.values()
    }

    pub fn place(&self, id: NodeId) -> Option<&Place> {
        self.places.get(&id)
    }

    pub fn transition(&self, id: NodeId) -> Option<&Transition> {
        self.transitions.get(&id)
    }

    pub fn arc(&self, source: NodeId, target: NodeId, kind: ArcKind) -> Option<&Arc> {
        self.arcs.get(&(source, target, kind))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.places.contains_key(&id) || self.transitions.contains_key(&id)
    }

    pub fn is_place(&self, id: NodeId) -> bool {
        self.places.contains_key(&id)
    }

    pub fn is_transition(&self, id: NodeId) -> bool {
        self.transitions.contains_key(&id)
    }

    pub fn node_count(&self) -> usize {
        self.places.len() + self.transitions.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.places.is_empty() && self.transitions.is_empty()
    }

    pub fn under_transformation(&self) -> bool {
        self.under_transformation
    }

    /// Smallest positive id not used by any node.
    pub fn lowest_free_id(&self) -> NodeId {
        let mut candidate = 1u32;
        loop {
            let id = NodeId(candidate);
            if !self.contains(id) {
                return id;
            }
            candidate += 1;
        }
    }

    /// Snapshot of all place markings; mutating the snapshot does not affect
    /// the net.
    pub fn marking_vector(&self) -> Marking {
        self.places.iter().map(|(id, p)| (*id, p.marking)).collect()
    }

    /// Arcs whose target is the given transition.
    pub fn inputs_of(&self, transition: NodeId) -> impl Iterator<Item = &Arc> {
        self.arcs.values().filter(move |a| a.target == transition)
    }

    /// Arcs whose source is the given transition.
    pub fn outputs_of(&self, transition: NodeId) -> impl Iterator<Item = &Arc> {
        self.arcs.values().filter(move |a| a.source == transition)
    }

    /// Empty iff every net invariant holds; each diagnostic names the
    /// violated invariant and the offending ids.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();

        for (id, place) in &self.places {
            if self.transitions.contains_key(id) {
                diags.push(Diagnostic::DuplicateId(*id));
            }
            if place.marking < 0.0 {
                diags.push(Diagnostic::NegativeMarking {
                    place: *id,
                    marking: place.marking,
                });
            }
            if place.kind == PlaceKind::Discrete && place.marking.fract() != 0.0 {
                diags.push(Diagnostic::FractionalMarking {
                    place: *id,
                    marking: place.marking,
                });
            }
        }

        for (id, tr) in &self.transitions {
            if tr.kind == TransitionKind::Continuous && tr.delay != 0.0 {
                diags.push(Diagnostic::DelayOnContinuous {
                    transition: *id,
                    delay: tr.delay,
                });
            }
            if tr.delay < 0.0 {
                diags.push(Diagnostic::NegativeDelay {
                    transition: *id,
                    delay: tr.delay,
                });
            }
        }

        for arc in self.arcs.values() {
            let src_place = self.places.contains_key(&arc.source);
            let src_trans = self.transitions.contains_key(&arc.source);
            let dst_place = self.places.contains_key(&arc.target);
            let dst_trans = self.transitions.contains_key(&arc.target);
            if (!src_place && !src_trans) || (!dst_place && !dst_trans) {
                diags.push(Diagnostic::DanglingArc {
                    from: arc.source,
                    to: arc.target,
                });
                continue;
            }
            let bipartite_ok = match arc.kind {
                ArcKind::Normal => (src_place && dst_trans) || (src_trans && dst_place),
                // Read arcs run place -> transition only.
                ArcKind::Inhibitory | ArcKind::Associative => src_place && dst_trans,
            };
            if !bipartite_ok {
                diags.push(Diagnostic::NonBipartiteArc {
                    from: arc.source,
                    to: arc.target,
                    kind: arc.kind,
                });
            }
            if arc.weight == 0 {
                diags.push(Diagnostic::ZeroWeight {
                    from: arc.source,
                    to: arc.target,
                });
            }
            if arc.threshold < 0.0 {
                diags.push(Diagnostic::NegativeThreshold {
                    from: arc.source,
                    to: arc.target,
                    threshold: arc.threshold,
                });
            }
            if arc.kind == ArcKind::Normal && bipartite_ok {
                let (t, p) = if src_trans {
                    (arc.source, arc.target)
                } else {
                    (arc.target, arc.source)
                };
                if let (Some(tr), Some(pl)) = (self.transitions.get(&t), self.places.get(&p)) {
                    if tr.kind == TransitionKind::Continuous && pl.kind == PlaceKind::Discrete {
                        diags.push(Diagnostic::MixedKindFlow {
                            transition: t,
                            place: p,
                        });
                    }
                }
            }
        }

        for (id, tr) in &self.transitions {
            if tr.kind != TransitionKind::Continuous {
                continue;
            }
            for place in tr.speed.places() {
                let readable = self
                    .arcs
                    .get(&(place, *id, ArcKind::Normal))
                    .or_else(|| self.arcs.get(&(place, *id, ArcKind::Associative)))
                    .is_some();
                if !readable {
                    diags.push(Diagnostic::BadSpeedRef {
                        transition: *id,
                        place,
                    });
                }
            }
        }

        diags
    }
}

/// Incremental construction of a net. `build` validates and either returns
/// the net or every violation found.
#[derive(Debug, Default)]
pub struct NetBuilder {
    places: Vec<Place>,
    transitions: Vec<Transition>,
    arcs: Vec<Arc>,
}

impl NetBuilder {
    pub fn new() -> NetBuilder {
        NetBuilder::default()
    }

    pub fn place(&mut self, place: Place) -> &mut Self {
        self.places.push(place);
        self
    }

    pub fn transition(&mut self, transition: Transition) -> &mut Self {
        self.transitions.push(transition);
        self
    }

    pub fn arc(&mut self, arc: Arc) -> &mut Self {
        self.arcs.push(arc);
        self
    }

    pub fn build(self) -> Result<Net, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        let mut net = Net::default();

        for place in self.places {
            if net.contains(place.id) {
                diags.push(Diagnostic::DuplicateId(place.id));
                continue;
            }
            net.places.insert(place.id, place);
        }
        for tr in self.transitions {
            if net.contains(tr.id) {
                diags.push(Diagnostic::DuplicateId(tr.id));
                continue;
            }
            net.transitions.insert(tr.id, tr);
        }
        for arc in self.arcs {
            if !net.contains(arc.source) || !net.contains(arc.target) {
                diags.push(Diagnostic::DanglingArc {
                    from: arc.source,
                    to: arc.target,
                });
                continue;
            }
            if net.arcs.contains_key(&arc.key()) {
                // Parallel arcs fold into the weight of a single record.
                let existing = net.arcs.get_mut(&arc.key()).unwrap();
                existing.weight += arc.weight;
                continue;
            }
            net.arcs.insert(arc.key(), arc);
        }

        diags.extend(net.validate());
        if diags.is_empty() {
            Ok(net)
        } else {
            Err(diags)
        }
    }
}

/// Crate-internal mutators used by the fusion algebra and gadget attachment.
/// They bypass validation; callers re-validate when producing public values.
pub(crate) mod raw {
    use super::*;

    pub fn insert_place(net: &mut Net, place: Place) {
        net.places.insert(place.id, place);
    }

    pub fn insert_transition(net: &mut Net, tr: Transition) {
        net.transitions.insert(tr.id, tr);
    }

    pub fn insert_arc(net: &mut Net, arc: Arc) {
        net.arcs.insert(arc.key(), arc);
    }

    pub fn remove_arc(net: &mut Net, key: &ArcKey) -> Option<Arc> {
        net.arcs.remove(key)
    }

    pub fn remove_node(net: &mut Net, id: NodeId) {
        net.places.remove(&id);
        net.transitions.remove(&id);
    }

    pub fn merge_arc_weight(net: &mut Net, key: &ArcKey, extra: u32) {
        if let Some(arc) = net.arcs.get_mut(key) {
            arc.weight += extra;
        }
    }

    pub fn set_under_transformation(net: &mut Net, flag: bool) {
        net.under_transformation = flag;
    }

    pub fn set_speed(net: &mut Net, id: NodeId, speed: SpeedExpr) {
        if let Some(tr) = net.transitions.get_mut(&id) {
            tr.speed = speed;
        }
    }

    pub fn set_marking(net: &mut Net, id: NodeId, marking: f64) {
        if let Some(p) = net.places.get_mut(&id) {
            p.marking = marking;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(id: u32) -> NodeId {
        NodeId::new(id)
    }

    #[test]
    fn builds_the_single_t_unit() {
        // t1 -> p2, the smallest transition-arc-position triad.
        let net = Net::build(
            vec![Place::continuous(p(2), 0.0)],
            vec![Transition::continuous(p(1), SpeedExpr::Const(1.0))],
            vec![Arc::new(p(1), p(2), ArcKind::Normal)],
        )
        .unwrap();
        assert_eq!(net.node_count(), 2);
        assert_eq!(net.arc_count(), 1);
        assert!(net.validate().is_empty());
    }

    #[test]
    fn empty_inputs_build_an_empty_net() {
        let net = Net::build(vec![], vec![], vec![]).unwrap();
        assert!(net.is_empty());
        assert_eq!(net.marking_vector(), Marking::new());
    }

    #[test]
    fn place_to_place_arc_is_rejected() {
        let err = Net::build(
            vec![Place::continuous(p(2), 0.0), Place::continuous(p(3), 0.0)],
            vec![],
            vec![Arc::new(p(2), p(3), ArcKind::Normal)],
        )
        .unwrap_err();
        assert!(matches!(err[0], Diagnostic::NonBipartiteArc { .. }));
    }

    #[test]
    fn inhibitory_arc_out_of_a_transition_is_reported() {
        let mut net = Net::default();
        raw::insert_place(&mut net, Place::continuous(p(2), 0.0));
        raw::insert_transition(
            &mut net,
            Transition::continuous(p(1), SpeedExpr::Const(0.0)),
        );
        raw::insert_arc(&mut net, Arc::new(p(1), p(2), ArcKind::Inhibitory));
        let diags = net.validate();
        assert!(diags
            .iter()
            .any(|d| matches!(d, Diagnostic::NonBipartiteArc { .. })));
    }

    #[test]
    fn negative_marking_is_reported() {
        let mut net = Net::default();
        raw::insert_place(&mut net, Place::continuous(p(1), -1.0));
        let diags = net.validate();
        assert_eq!(
            diags,
            vec![Diagnostic::NegativeMarking {
                place: p(1),
                marking: -1.0
            }]
        );
    }

    #[test]
    fn speed_reference_requires_an_input_arc() {
        let err = Net::build(
            vec![Place::continuous(p(1), 1.0)],
            vec![Transition::continuous(p(2), SpeedExpr::Marking(p(1)))],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err[0], Diagnostic::BadSpeedRef { .. }));
    }

    #[test]
    fn duplicate_ids_across_classes_are_reported() {
        let err = Net::build(
            vec![Place::continuous(p(1), 0.0)],
            vec![Transition::continuous(p(1), SpeedExpr::Const(1.0))],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err[0], Diagnostic::DuplicateId(p(1)));
    }

    #[test]
    fn parallel_arcs_fold_into_weight() {
        let net = Net::build(
            vec![Place::continuous(p(1), 0.0)],
            vec![Transition::continuous(p(2), SpeedExpr::Const(1.0))],
            vec![
                Arc::new(p(1), p(2), ArcKind::Normal),
                Arc::new(p(1), p(2), ArcKind::Normal),
            ],
        )
        .unwrap();
        assert_eq!(net.arc_count(), 1);
        assert_eq!(net.arc(p(1), p(2), ArcKind::Normal).unwrap().weight, 2);
    }

    #[test]
    fn marking_vector_is_a_snapshot() {
        let net = Net::build(vec![Place::continuous(p(2), 5.0)], vec![], vec![]).unwrap();
        let mut m = net.marking_vector();
        assert_eq!(m[&p(2)], 5.0);
        m.insert(p(2), 0.0);
        assert_eq!(net.place(p(2)).unwrap().marking, 5.0);
    }
}
