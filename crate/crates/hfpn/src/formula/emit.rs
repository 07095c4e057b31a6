//! Canonical formula emission.
//!
//! The canonical form is deterministic: units are ordered by (pre-index,
//! letter rank C<I<A<B, post-index); maximal chains are concatenated; a node
//! with two or more unconsumed incoming units starts a piece of the form
//! `(seg,...,seg)<node>...`, and a node with several outgoing units fans out
//! into a bracket group. Disconnected pieces are joined in one top-level
//! group. Non-default parameters are emitted in braces at a node's first
//! occurrence. Re-parsing the emission reproduces the net with identical
//! ids; the display flag and labels are not part of the notation and are
//! dropped. Isolated nodes cannot be denoted by a formula and are skipped.

use std::collections::BTreeSet;

use super::parse::Letter;
use crate::net::{ArcKind, Net, NodeId, TransitionKind};
use crate::speed::SpeedExpr;

pub fn emit(net: &Net) -> String {
    let mut units: Vec<Unit> = net
        .arcs()
        .map(|arc| {
            let letter = match arc.kind {
                ArcKind::Normal => {
                    if net.is_place(arc.source) {
                        Letter::C
                    } else {
                        Letter::I
                    }
                }
                ArcKind::Associative => Letter::A,
                ArcKind::Inhibitory => Letter::B,
            };
            Unit {
                pre: arc.source,
                letter,
                post: arc.target,
                threshold: arc.threshold,
                weight: arc.weight,
            }
        })
        .collect();
    units.sort_by_key(|u| (u.pre, rank(u.letter), u.post));

    let mut emitter = Emitter {
        net,
        used: vec![false; units.len()],
        units,
        params_done: BTreeSet::new(),
    };

    let mut pieces = Vec::new();
    while let Some(root) = emitter.pick_root() {
        pieces.push(emitter.piece(root));
    }
    match pieces.len() {
        0 => String::new(),
        1 => pieces.pop().unwrap(),
        _ => format!("({})", pieces.join(",")),
    }
}

fn rank(letter: Letter) -> u8 {
    match letter {
        Letter::C => 0,
        Letter::I => 1,
        Letter::A => 2,
        Letter::B => 3,
    }
}

struct Unit {
    pre: NodeId,
    letter: Letter,
    post: NodeId,
    threshold: f64,
    weight: u32,
}

struct Emitter<'a> {
    net: &'a Net,
    units: Vec<Unit>,
    used: Vec<bool>,
    params_done: BTreeSet<NodeId>,
}

impl<'a> Emitter<'a> {
    fn unused_ins(&self, node: NodeId) -> Vec<usize> {
        (0..self.units.len())
            .filter(|&i| !self.used[i] && self.units[i].post == node)
            .collect()
    }

    fn unused_outs(&self, node: NodeId) -> Vec<usize> {
        (0..self.units.len())
            .filter(|&i| !self.used[i] && self.units[i].pre == node)
            .collect()
    }

    /// Fan-in joints first, then chain starts, then any node with an
    /// outgoing unit (cycles); smallest id wins within each class.
    fn pick_root(&self) -> Option<NodeId> {
        let mut nodes: BTreeSet<NodeId> = BTreeSet::new();
        for (i, u) in self.units.iter().enumerate() {
            if !self.used[i] {
                nodes.insert(u.pre);
                nodes.insert(u.post);
            }
        }
        if nodes.is_empty() {
            return None;
        }
        nodes
            .iter()
            .copied()
            .find(|&n| self.unused_ins(n).len() >= 2)
            .or_else(|| {
                nodes
                    .iter()
                    .copied()
                    .find(|&n| self.unused_ins(n).is_empty() && !self.unused_outs(n).is_empty())
            })
            .or_else(|| {
                // Cycles: any node with an outgoing unit. Every unused unit
                // contributes one, so this arm cannot miss.
                nodes
                    .iter()
                    .copied()
                    .find(|&n| !self.unused_outs(n).is_empty())
            })
    }

    fn piece(&mut self, root: NodeId) -> String {
        let mut out = String::new();
        let ins = self.unused_ins(root);
        if ins.len() >= 2 {
            let mut segs = Vec::new();
            for idx in ins {
                if self.used[idx] {
                    continue;
                }
                segs.push(self.backseg(idx));
            }
            match segs.len() {
                0 => {}
                1 => out.push_str(&segs[0]),
                _ => {
                    out.push('(');
                    out.push_str(&segs.join(","));
                    out.push(')');
                }
            }
        }
        out.push_str(&self.fmt_node(root));
        out.push_str(&self.forward_walk(root));
        out
    }

    /// The chain of units ending in unit `idx`, without the final index.
    fn backseg(&mut self, idx: usize) -> String {
        self.used[idx] = true;
        let pre = self.units[idx].pre;
        let mut out = self.prefix(pre);
        out.push(self.units[idx].letter.symbol());
        out.push_str(&self.arc_braces(idx));
        out
    }

    /// Everything that ends at `node`, plus the node itself.
    fn prefix(&mut self, node: NodeId) -> String {
        let ins = self.unused_ins(node);
        let mut segs = Vec::new();
        for idx in ins {
            if self.used[idx] {
                continue;
            }
            segs.push(self.backseg(idx));
        }
        let mut out = String::new();
        match segs.len() {
            0 => {}
            1 => out.push_str(&segs[0]),
            _ => {
                out.push('(');
                out.push_str(&segs.join(","));
                out.push(')');
            }
        }
        out.push_str(&self.fmt_node(node));
        out
    }

    fn forward_walk(&mut self, start: NodeId) -> String {
        let mut out = String::new();
        let mut cur = start;
        loop {
            let outs = self.unused_outs(cur);
            match outs.len() {
                0 => return out,
                1 => {
                    let idx = outs[0];
                    self.used[idx] = true;
                    out.push(self.units[idx].letter.symbol());
                    out.push_str(&self.arc_braces(idx));
                    let next = self.units[idx].post;
                    out.push_str(&self.fmt_node(next));
                    cur = next;
                }
                _ => {
                    let mut branches = Vec::new();
                    for idx in outs {
                        if self.used[idx] {
                            continue;
                        }
                        self.used[idx] = true;
                        let mut branch = String::new();
                        branch.push(self.units[idx].letter.symbol());
                        branch.push_str(&self.arc_braces(idx));
                        let next = self.units[idx].post;
                        branch.push_str(&self.fmt_node(next));
                        branch.push_str(&self.forward_walk(next));
                        branches.push(branch);
                    }
                    out.push('(');
                    out.push_str(&branches.join(","));
                    out.push(')');
                    return out;
                }
            }
        }
    }

    fn fmt_node(&mut self, node: NodeId) -> String {
        let mut out = node.to_string();
        if !self.params_done.insert(node) {
            return out;
        }
        if let Some(place) = self.net.place(node) {
            if place.marking != 0.0 {
                out.push_str(&format!("{{m={}}}", place.marking));
            }
        } else if let Some(tr) = self.net.transition(node) {
            match tr.kind {
                TransitionKind::Discrete => {
                    // An explicit delay marks the transition as discrete.
                    out.push_str(&format!("{{d={}}}", tr.delay));
                }
                TransitionKind::Continuous => {
                    if tr.speed != SpeedExpr::Const(1.0) {
                        out.push_str(&format!("{{v={}}}", tr.speed));
                    }
                }
            }
        }
        out
    }

    fn arc_braces(&self, idx: usize) -> String {
        let unit = &self.units[idx];
        let mut parts = Vec::new();
        if unit.threshold != 0.0 {
            parts.push(format!("k={}", unit.threshold));
        }
        if unit.weight != 1 {
            parts.push(format!("w={}", unit.weight));
        }
        if parts.is_empty() {
            String::new()
        } else {
            format!("{{{}}}", parts.join(","))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse::parse;
    use super::*;

    #[test]
    fn canonical_chain_is_a_fixed_point() {
        assert_eq!(emit(&parse("1I2C3").unwrap()), "1I2C3");
    }

    #[test]
    fn fan_in_is_factored() {
        assert_eq!(emit(&parse("(1A,2B)3I4").unwrap()), "(1A,2B)3I4");
    }

    #[test]
    fn empty_net_is_the_empty_formula() {
        assert_eq!(emit(&parse("").unwrap()), "");
    }

    #[test]
    fn disconnected_pieces_join_in_a_group() {
        let text = "(1I2,3C4)";
        let net = parse(text).unwrap();
        let emitted = emit(&net);
        assert_eq!(emitted, "(1I2,3C4)");
        assert_eq!(parse(&emitted).unwrap(), net);
    }

    #[test]
    fn parameters_survive() {
        let net = parse("2{m=5}C{k=1,w=3}3{v=0.5}").unwrap();
        let emitted = emit(&net);
        assert_eq!(parse(&emitted).unwrap(), net);
        assert!(emitted.contains("{m=5}"));
        assert!(emitted.contains("{k=1,w=3}"));
        assert!(emitted.contains("{v=0.5}"));
    }

    #[test]
    fn emitted_formulas_reparse_identically() {
        for text in [
            "1I2C3I4C5I6C7I8",
            "(1A,2B)3I4",
            "1I2C1",
            "1I2(A9I10(C11,B14I13C)12I15C16I)2C3I4C5(I17(C18,A20B)19I20A)5I6C7I8",
            "1C2I3(C5I4,C7I6)",
            "(1A3I,2A4I)5C6",
            "1B{k=3}2I1",
        ] {
            let net = parse(text).unwrap();
            let emitted = emit(&net);
            assert_eq!(parse(&emitted).unwrap(), net, "{text} -> {emitted}");
        }
    }
}
