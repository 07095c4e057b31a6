//! Shared test support: seeded random net generators, a brute-force
//! isomorphism oracle, and an independently written reference stepper.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use hfpn::net::{
    Arc, ArcKind, Marking, Net, NetBuilder, NodeId, Place, PlaceKind, Transition, TransitionKind,
};
use hfpn::speed::SpeedExpr;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn id(v: u32) -> NodeId {
    NodeId::new(v)
}

const MARKINGS: &[f64] = &[0.0, 0.5, 1.0, 2.0, 5.0, 10.0];
const SPEEDS: &[f64] = &[0.1, 0.25, 0.5, 1.0, 2.0];
const THRESHOLDS: &[f64] = &[0.0, 1.0, 2.0];

/// A random valid net from the formula domain: continuous nodes, constant
/// speeds, sparse ids, every node covered by at least one arc.
pub fn random_formula_net(rng: &mut ChaCha8Rng, max_nodes: usize) -> Net {
    loop {
        let n_places = rng.gen_range(1..=max_nodes.div_ceil(2));
        let n_transitions = rng.gen_range(1..=(max_nodes - n_places).max(1));
        let mut ids: Vec<u32> = (1..=(3 * max_nodes as u32)).collect();
        ids.shuffle(rng);
        let place_ids: Vec<NodeId> = ids[..n_places].iter().map(|v| id(*v)).collect();
        let transition_ids: Vec<NodeId> = ids[n_places..n_places + n_transitions]
            .iter()
            .map(|v| id(*v))
            .collect();

        let mut builder = NetBuilder::new();
        for p in &place_ids {
            builder.place(Place::continuous(*p, *MARKINGS.choose(rng).unwrap()));
        }
        for t in &transition_ids {
            builder.transition(Transition::continuous(
                *t,
                SpeedExpr::Const(*SPEEDS.choose(rng).unwrap()),
            ));
        }
        let n_arcs = rng.gen_range(1..=(2 * (n_places + n_transitions)));
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..n_arcs {
            let p = *place_ids.choose(rng).unwrap();
            let t = *transition_ids.choose(rng).unwrap();
            let (source, target, kind) = match rng.gen_range(0..4) {
                0 => (t, p, ArcKind::Normal),
                1 => (p, t, ArcKind::Associative),
                2 => (p, t, ArcKind::Inhibitory),
                _ => (p, t, ArcKind::Normal),
            };
            if !seen.insert((source, target, kind)) {
                continue;
            }
            builder.arc(
                Arc::new(source, target, kind)
                    .with_params(*THRESHOLDS.choose(rng).unwrap(), rng.gen_range(1..=3)),
            );
        }
        let net = builder.build().expect("generator builds valid nets");
        // Formulas cannot denote isolated nodes; drop nets that have them.
        let covered = |nid: NodeId| net.arcs().any(|a| a.source == nid || a.target == nid);
        if place_ids.iter().chain(&transition_ids).all(|n| covered(*n)) {
            return net;
        }
    }
}

/// A random executable net for engine tests: continuous chains with
/// occasional marking-dependent speeds, plus (optionally) a discrete part.
pub fn random_engine_net(rng: &mut ChaCha8Rng, max_nodes: usize, allow_discrete: bool) -> Net {
    let discrete = allow_discrete && rng.gen_bool(0.3);
    let n_places = rng.gen_range(1..=max_nodes.div_ceil(2));
    let n_transitions = rng.gen_range(1..=(max_nodes - n_places).max(1));
    let place_ids: Vec<NodeId> = (1..=n_places as u32).map(id).collect();
    let transition_ids: Vec<NodeId> = (n_places as u32 + 1..=(n_places + n_transitions) as u32)
        .map(id)
        .collect();

    let mut builder = NetBuilder::new();
    for p in &place_ids {
        if discrete {
            builder.place(Place::discrete(*p, rng.gen_range(0..6) as f64));
        } else {
            builder.place(Place::continuous(*p, *MARKINGS.choose(rng).unwrap()));
        }
    }

    // Arcs first, so speeds can reference connected places.
    let mut arcs: Vec<Arc> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let n_arcs = rng.gen_range(1..=(2 * (n_places + n_transitions)));
    for _ in 0..n_arcs {
        let p = *place_ids.choose(rng).unwrap();
        let t = *transition_ids.choose(rng).unwrap();
        let (source, target, kind) = match rng.gen_range(0..5) {
            0 | 1 => (t, p, ArcKind::Normal),
            2 => (p, t, ArcKind::Associative),
            3 => (p, t, ArcKind::Inhibitory),
            _ => (p, t, ArcKind::Normal),
        };
        if !seen.insert((source, target, kind)) {
            continue;
        }
        let weight = if discrete {
            rng.gen_range(1..=2)
        } else {
            rng.gen_range(1..=3)
        };
        arcs.push(
            Arc::new(source, target, kind).with_params(*THRESHOLDS.choose(rng).unwrap(), weight),
        );
    }

    for t in &transition_ids {
        if discrete {
            let delay = [0.0, 1.0, 2.0][rng.gen_range(0..3)];
            builder.transition(Transition::discrete(*t, delay));
            continue;
        }
        // A marking-dependent speed referencing one of this transition's
        // readable inputs, when it has any.
        let readable: Vec<NodeId> = arcs
            .iter()
            .filter(|a| a.target == *t && matches!(a.kind, ArcKind::Normal | ArcKind::Associative))
            .map(|a| a.source)
            .collect();
        let speed = if !readable.is_empty() && rng.gen_bool(0.3) {
            SpeedExpr::mul(
                SpeedExpr::Const(*SPEEDS.choose(rng).unwrap()),
                SpeedExpr::Marking(*readable.choose(rng).unwrap()),
            )
        } else {
            SpeedExpr::Const(*SPEEDS.choose(rng).unwrap())
        };
        builder.transition(Transition::continuous(*t, speed));
    }
    for arc in arcs {
        builder.arc(arc);
    }
    builder.build().expect("generator builds valid nets")
}

// ---------------------------------------------------------------------------
// Brute-force isomorphism oracle

fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

/// Checks all class-preserving bijections outright; usable up to around
/// eight nodes.
pub fn brute_force_isomorphic(a: &Net, b: &Net) -> bool {
    let a_places: Vec<NodeId> = a.places().map(|p| p.id).collect();
    let b_places: Vec<NodeId> = b.places().map(|p| p.id).collect();
    let a_trans: Vec<NodeId> = a.transitions().map(|t| t.id).collect();
    let b_trans: Vec<NodeId> = b.transitions().map(|t| t.id).collect();
    if a_places.len() != b_places.len()
        || a_trans.len() != b_trans.len()
        || a.arc_count() != b.arc_count()
    {
        return false;
    }
    for place_perm in permutations(&b_places) {
        for trans_perm in permutations(&b_trans) {
            let mut map: BTreeMap<NodeId, NodeId> = BTreeMap::new();
            for (x, y) in a_places.iter().zip(&place_perm) {
                map.insert(*x, *y);
            }
            for (x, y) in a_trans.iter().zip(&trans_perm) {
                map.insert(*x, *y);
            }
            if bijection_matches(a, b, &map) {
                return true;
            }
        }
    }
    false
}

fn bijection_matches(a: &Net, b: &Net, map: &BTreeMap<NodeId, NodeId>) -> bool {
    for pa in a.places() {
        let Some(pb) = b.place(map[&pa.id]) else {
            return false;
        };
        if pa.kind != pb.kind || pa.marking != pb.marking || pa.display != pb.display {
            return false;
        }
    }
    for ta in a.transitions() {
        let Some(tb) = b.transition(map[&ta.id]) else {
            return false;
        };
        if ta.kind != tb.kind || ta.delay != tb.delay {
            return false;
        }
        if ta.speed.map_places(&|p| map.get(&p).copied().unwrap_or(p)) != tb.speed {
            return false;
        }
    }
    for arc in a.arcs() {
        match b.arc(map[&arc.source], map[&arc.target], arc.kind) {
            Some(img) if img.threshold == arc.threshold && img.weight == arc.weight => {}
            _ => return false,
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Reference stepper, written from the step rules without reusing the
// engine's code paths.

pub struct NaiveSim {
    pub marking: Marking,
    clocks: BTreeMap<NodeId, f64>,
}

impl NaiveSim {
    pub fn new(net: &Net) -> NaiveSim {
        NaiveSim {
            marking: net.marking_vector(),
            clocks: net
                .transitions()
                .filter(|t| t.kind == TransitionKind::Discrete)
                .map(|t| (t.id, 0.0))
                .collect(),
        }
    }

    fn is_enabled(&self, net: &Net, t: &Transition) -> bool {
        let mut ok = true;
        for arc in net.arcs() {
            if arc.target != t.id {
                continue;
            }
            let m = *self.marking.get(&arc.source).unwrap_or(&0.0);
            let passes = match arc.kind {
                ArcKind::Inhibitory => m < arc.threshold,
                _ => {
                    m >= arc.threshold
                        && (t.kind != TransitionKind::Discrete || m >= arc.weight as f64)
                }
            };
            ok = ok && passes;
        }
        ok
    }

    pub fn step(&mut self, net: &Net, dt: f64) {
        // Candidate speeds, limited per input arc.
        let mut rates: BTreeMap<NodeId, f64> = BTreeMap::new();
        for t in net.transitions() {
            if t.kind != TransitionKind::Continuous {
                continue;
            }
            let mut v = if self.is_enabled(net, t) {
                t.speed.eval(&self.marking).max(0.0)
            } else {
                0.0
            };
            assert!(v.is_finite(), "oracle nets keep finite speeds");
            for arc in net.arcs() {
                if arc.target == t.id && arc.kind == ArcKind::Normal {
                    let m = self.marking[&arc.source];
                    v = v.min(m / (arc.weight as f64 * dt));
                }
            }
            rates.insert(t.id, v);
        }

        // Proportional scaling of over-demanded places.
        let mut demand: BTreeMap<NodeId, f64> = BTreeMap::new();
        for (tid, v) in &rates {
            for arc in net.arcs() {
                if arc.target == *tid && arc.kind == ArcKind::Normal {
                    *demand.entry(arc.source).or_insert(0.0) += arc.weight as f64 * v * dt;
                }
            }
        }
        let mut applied = rates.clone();
        for (tid, v) in &rates {
            if *v == 0.0 {
                continue;
            }
            let mut factor = 1.0f64;
            for arc in net.arcs() {
                if arc.target == *tid && arc.kind == ArcKind::Normal {
                    let have = self.marking[&arc.source];
                    let want = demand[&arc.source];
                    if want > have {
                        factor = factor.min(have / want);
                    }
                }
            }
            if factor < 1.0 {
                applied.insert(*tid, v * factor);
            }
        }

        // Flows: per place, total outflow first, then inflow.
        let place_ids: Vec<NodeId> = self.marking.keys().copied().collect();
        let mut next = self.marking.clone();
        for pid in &place_ids {
            let mut out = 0.0;
            let mut inn = 0.0;
            for (tid, v) in &applied {
                if *v == 0.0 {
                    continue;
                }
                for arc in net.arcs() {
                    if arc.kind == ArcKind::Normal && arc.source == *pid && arc.target == *tid {
                        out += arc.weight as f64 * v * dt;
                    }
                    if arc.source == *tid && arc.target == *pid {
                        inn += arc.weight as f64 * v * dt;
                    }
                }
            }
            next.insert(*pid, (self.marking[pid] - out) + inn);
        }
        self.marking = next;
        self.clamp();

        // Discrete firing in ascending id order.
        let discrete: Vec<Transition> = net
            .transitions()
            .filter(|t| t.kind == TransitionKind::Discrete)
            .cloned()
            .collect();
        for t in discrete {
            let ready = self.is_enabled(net, &t);
            let clock = self.clocks.entry(t.id).or_insert(0.0);
            if ready && *clock >= t.delay {
                *clock = 0.0;
                for arc in net.arcs() {
                    if arc.target == t.id && arc.kind == ArcKind::Normal {
                        *self.marking.get_mut(&arc.source).unwrap() -= arc.weight as f64;
                    }
                }
                for arc in net.arcs() {
                    if arc.source == t.id {
                        *self.marking.get_mut(&arc.target).unwrap() += arc.weight as f64;
                    }
                }
            } else if ready {
                *clock += dt;
            } else {
                *clock = 0.0;
            }
        }
        self.clamp();
    }

    fn clamp(&mut self) {
        for (pid, m) in self.marking.iter_mut() {
            assert!(*m >= -1e-6, "oracle marking went negative at {pid}: {m}");
            if *m < 0.0 {
                *m = 0.0;
            }
        }
    }
}

/// Places of a net, ascending.
pub fn place_ids(net: &Net) -> Vec<NodeId> {
    net.places().map(|p| p.id).collect()
}

/// Continuous transitions of a net, ascending.
pub fn continuous_ids(net: &Net) -> Vec<NodeId> {
    net.transitions()
        .filter(|t| t.kind == TransitionKind::Continuous)
        .map(|t| t.id)
        .collect()
}

/// A place kind probe used by tests that need a continuous place.
pub fn first_continuous_place(net: &Net) -> Option<NodeId> {
    net.places()
        .find(|p| p.kind == PlaceKind::Continuous)
        .map(|p| p.id)
}
