//! Isomorphism checking against the exhaustive bijection oracle, plus the
//! equivalence-relation laws on a generated corpus.

mod common;

use common::{brute_force_isomorphic, random_formula_net, rng};
use hfpn::iso::isomorphic;
use hfpn::net::{Net, NetBuilder, NodeId};

/// The same net with every id shifted by a constant.
fn renumber(net: &Net, offset: u32) -> Net {
    let map = |id: NodeId| NodeId::new(id.get() + offset);
    let mut builder = NetBuilder::new();
    for p in net.places() {
        let mut p = p.clone();
        p.id = map(p.id);
        builder.place(p);
    }
    for t in net.transitions() {
        let mut t = t.clone();
        t.id = map(t.id);
        t.speed = t.speed.map_places(&map);
        builder.transition(t);
    }
    for a in net.arcs() {
        let mut a = a.clone();
        a.source = map(a.source);
        a.target = map(a.target);
        builder.arc(a);
    }
    builder.build().unwrap()
}

#[test]
fn matches_the_brute_force_oracle() {
    let mut rng = rng(0x150);
    for case in 0..150 {
        let a = random_formula_net(&mut rng, 8);
        let b = random_formula_net(&mut rng, 8);
        assert_eq!(
            isomorphic(&a, &b),
            brute_force_isomorphic(&a, &b),
            "case {case} (distinct nets)"
        );
        let relabeled = renumber(&a, 40);
        assert!(isomorphic(&a, &relabeled), "case {case} (relabeled)");
        assert!(brute_force_isomorphic(&a, &relabeled), "case {case}");
    }
}

#[test]
fn equivalence_relation_laws() {
    let mut rng = rng(0x151);
    for _ in 0..40 {
        let a = random_formula_net(&mut rng, 8);
        let b = renumber(&a, 40);
        let c = renumber(&a, 80);
        // Reflexive, symmetric on a relabeling, transitive along the chain.
        assert!(isomorphic(&a, &a));
        assert!(isomorphic(&a, &b) && isomorphic(&b, &a));
        assert!(isomorphic(&b, &c) && isomorphic(&a, &c));
    }
}
