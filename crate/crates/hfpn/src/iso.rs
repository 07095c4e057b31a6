//! Isomorphism checking for small nets.
//!
//! Two nets are isomorphic when a class-preserving, kind-preserving,
//! parameter-preserving bijection of nodes maps arcs to arcs with equal
//! (kind, threshold, weight). Speed expressions must match with their place
//! references rewritten through the bijection; labels are cosmetic and
//! ignored. Intended for the node counts that occur in formulas and tests;
//! the search is backtracking with degree-signature pruning.

use std::collections::BTreeMap;

use crate::net::{Net, NodeId, Place, Transition};

pub fn isomorphic(a: &Net, b: &Net) -> bool {
    if a.node_count() != b.node_count() || a.arc_count() != b.arc_count() {
        return false;
    }
    let a_places: Vec<&Place> = a.places().collect();
    let b_places: Vec<&Place> = b.places().collect();
    let a_trans: Vec<&Transition> = a.transitions().collect();
    let b_trans: Vec<&Transition> = b.transitions().collect();
    if a_places.len() != b_places.len() || a_trans.len() != b_trans.len() {
        return false;
    }

    let sig_a = signatures(a);
    let sig_b = signatures(b);
    {
        let mut sa: Vec<&String> = sig_a.values().collect();
        let mut sb: Vec<&String> = sig_b.values().collect();
        sa.sort();
        sb.sort();
        if sa != sb {
            return false;
        }
    }

    let mut mapping: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut used: BTreeMap<NodeId, bool> = BTreeMap::new();
    for pl in &b_places {
        used.insert(pl.id, false);
    }
    for tr in &b_trans {
        used.insert(tr.id, false);
    }

    // Map places first, then transitions; arc and speed consistency is
    // verified once the mapping is total.
    let order: Vec<NodeId> = a_places
        .iter()
        .map(|p| p.id)
        .chain(a_trans.iter().map(|t| t.id))
        .collect();

    #[allow(clippy::too_many_arguments)]
    fn assign(
        idx: usize,
        order: &[NodeId],
        a: &Net,
        b: &Net,
        sig_a: &BTreeMap<NodeId, String>,
        sig_b: &BTreeMap<NodeId, String>,
        mapping: &mut BTreeMap<NodeId, NodeId>,
        used: &mut BTreeMap<NodeId, bool>,
    ) -> bool {
        if idx == order.len() {
            return consistent(a, b, mapping);
        }
        let node = order[idx];
        let want = &sig_a[&node];
        let candidates: Vec<NodeId> = used
            .iter()
            .filter(|(id, taken)| !**taken && &sig_b[id] == want)
            .map(|(id, _)| *id)
            .collect();
        for candidate in candidates {
            mapping.insert(node, candidate);
            used.insert(candidate, true);
            if partial_ok(a, b, mapping, node)
                && assign(idx + 1, order, a, b, sig_a, sig_b, mapping, used)
            {
                return true;
            }
            mapping.remove(&node);
            used.insert(candidate, false);
        }
        false
    }

    assign(0, &order, a, b, &sig_a, &sig_b, &mut mapping, &mut used)
}

/// Local invariant used for pruning: node class, node parameters, and the
/// multiset of incident arc shapes.
fn signatures(net: &Net) -> BTreeMap<NodeId, String> {
    let mut out = BTreeMap::new();
    for place in net.places() {
        let mut arcs: Vec<String> = net
            .arcs()
            .filter(|a| a.source == place.id || a.target == place.id)
            .map(|a| {
                let dir = if a.source == place.id { "o" } else { "i" };
                format!("{dir}{:?}k{}w{}", a.kind, a.threshold, a.weight)
            })
            .collect();
        arcs.sort();
        out.insert(
            place.id,
            format!(
                "P{:?}m{}d{}|{}",
                place.kind,
                place.marking,
                place.display,
                arcs.join(",")
            ),
        );
    }
    for tr in net.transitions() {
        let mut arcs: Vec<String> = net
            .arcs()
            .filter(|a| a.source == tr.id || a.target == tr.id)
            .map(|a| {
                let dir = if a.source == tr.id { "o" } else { "i" };
                format!("{dir}{:?}k{}w{}", a.kind, a.threshold, a.weight)
            })
            .collect();
        arcs.sort();
        // The speed expression itself is checked under the final mapping;
        // here only its shape participates.
        out.insert(
            tr.id,
            format!(
                "T{:?}d{}refs{}|{}",
                tr.kind,
                tr.delay,
                tr.speed.places().len(),
                arcs.join(",")
            ),
        );
    }
    out
}

/// Checks arcs between already-mapped nodes touching `node`.
fn partial_ok(a: &Net, b: &Net, mapping: &BTreeMap<NodeId, NodeId>, node: NodeId) -> bool {
    for arc in a.arcs() {
        if arc.source != node && arc.target != node {
            continue;
        }
        let (Some(src), Some(dst)) = (mapping.get(&arc.source), mapping.get(&arc.target)) else {
            continue;
        };
        match b.arc(*src, *dst, arc.kind) {
            Some(img) if img.threshold == arc.threshold && img.weight == arc.weight => {}
            _ => return false,
        }
    }
    true
}

fn consistent(a: &Net, b: &Net, mapping: &BTreeMap<NodeId, NodeId>) -> bool {
    for arc in a.arcs() {
        let src = mapping[&arc.source];
        let dst = mapping[&arc.target];
        match b.arc(src, dst, arc.kind) {
            Some(img) if img.threshold == arc.threshold && img.weight == arc.weight => {}
            _ => return false,
        }
    }
    for tr in a.transitions() {
        let image = b.transition(mapping[&tr.id]).unwrap();
        let mapped = tr
            .speed
            .map_places(&|p| mapping.get(&p).copied().unwrap_or(p));
        if mapped != image.speed {
            return false;
        }
    }
    true
}
