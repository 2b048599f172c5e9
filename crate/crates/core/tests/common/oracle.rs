// Brute-force saturation oracle and random ontology corpus.
//
// Deliberately naive: dense boolean tables, every rule re-applied to every
// candidate tuple until a full sweep changes nothing. Shares no code with the
// worklist engine beyond the public enums.

#![allow(dead_code)]

use ontorel::ntriples::StatementKind;
use ontorel::store::RelationMatrix;
use ontorel::{RelationKind, NUM_RELATIONS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CORPUS_SIZE: u64 = 1000;
pub const MAX_ENTITIES: usize = 30;
pub const MAX_STATEMENTS: usize = 60;

pub type Statement = (StatementKind, usize, usize);

/// One seeded random ontology: 1..=30 entities, 0..=60 stated relations,
/// self-loops and cycles allowed.
pub fn random_ontology(seed: u64) -> (usize, Vec<Statement>) {
    const KINDS: [StatementKind; 8] = [
        StatementKind::SubClassOf,
        StatementKind::SubClassOf,
        StatementKind::SubClassOf,
        StatementKind::SubPropertyOf,
        StatementKind::Domain,
        StatementKind::Range,
        StatementKind::EquivalentClass,
        StatementKind::DisjointWith,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=MAX_ENTITIES);
    let m = rng.random_range(0..=MAX_STATEMENTS);
    let stmts = (0..m)
        .map(|_| {
            let kind = if rng.random_bool(0.05) {
                StatementKind::SameAs
            } else if rng.random_bool(0.05) {
                StatementKind::EquivalentProperty
            } else {
                KINDS[rng.random_range(0..KINDS.len())]
            };
            (kind, rng.random_range(0..n), rng.random_range(0..n))
        })
        .collect();
    (n, stmts)
}

pub fn stated_matrix(n: usize, stmts: &[Statement]) -> RelationMatrix {
    let mut m = RelationMatrix::new(n);
    for &(k, a, b) in stmts {
        m.assert_stated(k, a, b);
    }
    m
}

pub struct Tables {
    pub n: usize,
    rel: Vec<Vec<bool>>,
}

impl Tables {
    fn new(n: usize) -> Self {
        Tables {
            n,
            rel: vec![vec![false; n * n]; NUM_RELATIONS],
        }
    }

    pub fn has(&self, k: RelationKind, a: usize, b: usize) -> bool {
        self.rel[k as usize][a * self.n + b]
    }

    fn put(&mut self, k: RelationKind, a: usize, b: usize) -> bool {
        let cell = &mut self.rel[k as usize][a * self.n + b];
        let new = !*cell;
        *cell = true;
        new
    }

    pub fn pairs(&self, k: RelationKind) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in 0..self.n {
                if self.has(k, a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn count(&self, k: RelationKind) -> usize {
        self.rel[k as usize].iter().filter(|&&x| x).count()
    }
}

pub fn saturate(n: usize, stmts: &[Statement]) -> Tables {
    use RelationKind::*;
    let mut t = Tables::new(n);
    for &(k, a, b) in stmts {
        match k {
            StatementKind::SubClassOf => {
                t.put(SubClass, a, b);
                t.put(SuperClass, b, a);
            }
            StatementKind::SubPropertyOf => {
                t.put(SubProperty, a, b);
                t.put(SuperProperty, b, a);
            }
            StatementKind::Domain => {
                t.put(HasDomain, a, b);
                t.put(DomainOf, b, a);
            }
            StatementKind::Range => {
                t.put(HasRange, a, b);
                t.put(RangeOf, b, a);
            }
            StatementKind::DisjointWith => {
                t.put(DisjointWith, a, b);
                t.put(DisjointWith, b, a);
            }
            StatementKind::SameAs => {
                t.put(SameAs, a, b);
                t.put(SameAs, b, a);
            }
            StatementKind::EquivalentClass | StatementKind::EquivalentProperty => {
                t.put(Equivalent, a, b);
                t.put(Equivalent, b, a);
            }
            _ => {}
        }
    }

    loop {
        let mut changed = false;
        for a in 0..n {
            for b in 0..n {
                if a != b && t.has(SubClass, a, b) {
                    changed |= t.put(InferredSubClass, a, b);
                }
                if a != b && t.has(SubProperty, a, b) {
                    changed |= t.put(InferredSubProperty, a, b);
                }
                if a != b && t.has(Equivalent, a, b) {
                    changed |= t.put(InferredEquivalent, a, b);
                }
                if t.has(InferredEquivalent, a, b) {
                    changed |= t.put(InferredEquivalent, b, a);
                }
                if t.has(InferredSubClass, a, b) {
                    changed |= t.put(InferredSuperClass, b, a);
                }
                if t.has(InferredSubProperty, a, b) {
                    changed |= t.put(InferredSuperProperty, b, a);
                }
                if t.has(HasDomain, a, b) {
                    changed |= t.put(InferredHasDomain, a, b);
                }
                if t.has(HasRange, a, b) {
                    changed |= t.put(InferredHasRange, a, b);
                }
                if t.has(InferredHasDomain, a, b) {
                    changed |= t.put(InDomainOf, b, a);
                }
                if t.has(InferredHasRange, a, b) {
                    changed |= t.put(InRangeOf, b, a);
                }
                for c in 0..n {
                    for trans in [InferredSubClass, InferredSubProperty, InferredEquivalent] {
                        if a != c && t.has(trans, a, b) && t.has(trans, b, c) {
                            changed |= t.put(trans, a, c);
                        }
                    }
                    for (inf, inv) in [(InferredHasDomain, InDomainOf), (InferredHasRange, InRangeOf)] {
                        // (a, b) = (p, c'), c ranges over the third entity
                        if t.has(inf, a, b) && t.has(InferredSubClass, b, c) {
                            changed |= t.put(inf, a, c);
                        }
                        if t.has(InferredSubProperty, c, a) && t.has(inf, a, b) {
                            changed |= t.put(inf, c, b);
                        }
                        if t.has(InferredSubClass, c, b) && t.has(inf, a, b) {
                            changed |= t.put(inv, c, a);
                        }
                    }
                }
            }
        }
        if !changed {
            return t;
        }
    }
}

/// The kinds the engine derives; the oracle must agree on every one.
pub const INFERRED: [RelationKind; 9] = [
    RelationKind::InferredSubClass,
    RelationKind::InferredSuperClass,
    RelationKind::InferredSubProperty,
    RelationKind::InferredSuperProperty,
    RelationKind::InferredEquivalent,
    RelationKind::InferredHasDomain,
    RelationKind::InDomainOf,
    RelationKind::InferredHasRange,
    RelationKind::InRangeOf,
];

/// First disagreement between engine output and oracle, if any.
pub fn diff(m: &RelationMatrix, t: &Tables) -> Option<String> {
    for k in RelationKind::ALL {
        let engine: Vec<(usize, usize)> = m.pairs(k).collect();
        let oracle = t.pairs(k);
        if engine != oracle {
            return Some(format!("{k:?}: engine {engine:?} oracle {oracle:?}"));
        }
    }
    None
}

/// Inverse-pair constraints, checked cell by cell without the engine's own
/// checker. Returns the number of violating cells.
pub fn inverse_violations(m: &RelationMatrix) -> usize {
    use RelationKind::*;
    let paired = [
        (SubClass, SuperClass),
        (SubProperty, SuperProperty),
        (HasDomain, DomainOf),
        (HasRange, RangeOf),
        (InferredSubClass, InferredSuperClass),
        (InferredSubProperty, InferredSuperProperty),
    ];
    let symmetric = [DisjointWith, SameAs, Equivalent, InferredEquivalent];
    let implied = [(InferredHasDomain, InDomainOf), (InferredHasRange, InRangeOf)];
    let mut bad = 0;
    for ((i, j), mask) in m.cells() {
        let back = m.get(j, i);
        let ok = paired
            .iter()
            .all(|&(x, y)| mask.contains(x) == back.contains(y) && mask.contains(y) == back.contains(x))
            && symmetric.iter().all(|&k| mask.contains(k) == back.contains(k))
            && implied.iter().all(|&(x, y)| !mask.contains(x) || back.contains(y));
        if !ok {
            bad += 1;
        }
    }
    bad
}
