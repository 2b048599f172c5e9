//! Forward-chaining materialization of the inferred relation kinds.
//!
//! Every rule is a monotone Horn clause over binary relations, in one of two
//! shapes:
//!
//! * copy: `X(a,b) ⇒ Y(a,b)` (optionally reading or writing the transposed pair),
//! * join: `X(a,b) ∧ Y(b,c) ⇒ Z(a,c)` (again with optional transposition).
//!
//! Evaluation is semi-naive: each newly set bit is pushed on a worklist and
//! joined only against facts already present, using per-relation adjacency
//! lists. Every pair of joinable facts is seen exactly once, when the later
//! of the two is popped, so the loop terminates at the least fixpoint.
//!
//! | rule | premises                        | conclusion   |
//! |------|---------------------------------|--------------|
//! | R1   | SbC(a,b), a≠b                   | ISbC(a,b)    |
//! | R2   | ISbC(a,b) ∧ ISbC(b,c), a≠c      | ISbC(a,c)    |
//! | R3   | ISbC(a,b)                       | ISpC(b,a)    |
//! | R4a  | SbP(a,b), a≠b                   | ISbP(a,b)    |
//! | R4b  | ISbP(a,b) ∧ ISbP(b,c), a≠c      | ISbP(a,c)    |
//! | R4c  | ISbP(a,b)                       | ISpP(b,a)    |
//! | R5a  | E(a,b), a≠b                     | IE(a,b)      |
//! | R5b  | IE(a,b)                         | IE(b,a)      |
//! | R5c  | IE(a,b) ∧ IE(b,c), a≠c          | IE(a,c)      |
//! | R6   | HD(p,c)                         | IHD(p,c)     |
//! | R7   | IHD(p,c) ∧ ISbC(c,d)            | IHD(p,d)     |
//! | R8   | ISbP(q,p) ∧ IHD(p,c)            | IHD(q,c)     |
//! | R9   | IHD(p,c)                        | IDO(c,p)     |
//! | R10  | ISbC(d,c) ∧ IHD(p,c)            | IDO(d,p)     |
//! | R11–R15 | as R6–R10 with HR/IHR/IRO    |              |
//!
//! No rule ever sets a stated bit (0–10), and subsumption and equivalence
//! closures never produce a reflexive pair.

use std::collections::BTreeSet;

use crate::relation::{RelationKind, NUM_RELATIONS};
use crate::store::RelationMatrix;

use RelationKind as R;

/// One side of a rule: a relation, read or written as stored (`(a,b)`) or
/// transposed (`(b,a)`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Atom {
    pub rel: RelationKind,
    pub transposed: bool,
}

const fn at(rel: RelationKind) -> Atom {
    Atom { rel, transposed: false }
}

const fn tr(rel: RelationKind) -> Atom {
    Atom { rel, transposed: true }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleBody {
    /// `from(a,b) ⇒ to(a,b)`
    Copy { from: Atom, to: Atom },
    /// `left(a,b) ∧ right(b,c) ⇒ to(a,c)`
    Join { left: Atom, right: Atom, to: Atom },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rule {
    pub name: &'static str,
    pub body: RuleBody,
    /// Drop conclusions whose two arguments coincide.
    pub irreflexive: bool,
}

const fn copy(name: &'static str, from: Atom, to: Atom, irreflexive: bool) -> Rule {
    Rule {
        name,
        body: RuleBody::Copy { from, to },
        irreflexive,
    }
}

const fn join(name: &'static str, left: Atom, right: Atom, to: Atom, irreflexive: bool) -> Rule {
    Rule {
        name,
        body: RuleBody::Join { left, right, to },
        irreflexive,
    }
}

pub static RULES: [Rule; 19] = [
    copy("R1", at(R::SubClass), at(R::InferredSubClass), true),
    join(
        "R2",
        at(R::InferredSubClass),
        at(R::InferredSubClass),
        at(R::InferredSubClass),
        true,
    ),
    copy("R3", at(R::InferredSubClass), tr(R::InferredSuperClass), false),
    copy("R4a", at(R::SubProperty), at(R::InferredSubProperty), true),
    join(
        "R4b",
        at(R::InferredSubProperty),
        at(R::InferredSubProperty),
        at(R::InferredSubProperty),
        true,
    ),
    copy("R4c", at(R::InferredSubProperty), tr(R::InferredSuperProperty), false),
    copy("R5a", at(R::Equivalent), at(R::InferredEquivalent), true),
    copy("R5b", at(R::InferredEquivalent), tr(R::InferredEquivalent), false),
    join(
        "R5c",
        at(R::InferredEquivalent),
        at(R::InferredEquivalent),
        at(R::InferredEquivalent),
        true,
    ),
    copy("R6", at(R::HasDomain), at(R::InferredHasDomain), false),
    join(
        "R7",
        at(R::InferredHasDomain),
        at(R::InferredSubClass),
        at(R::InferredHasDomain),
        false,
    ),
    join(
        "R8",
        at(R::InferredSubProperty),
        at(R::InferredHasDomain),
        at(R::InferredHasDomain),
        false,
    ),
    copy("R9", at(R::InferredHasDomain), tr(R::InDomainOf), false),
    join(
        "R10",
        at(R::InferredSubClass),
        tr(R::InferredHasDomain),
        at(R::InDomainOf),
        false,
    ),
    copy("R11", at(R::HasRange), at(R::InferredHasRange), false),
    join(
        "R12",
        at(R::InferredHasRange),
        at(R::InferredSubClass),
        at(R::InferredHasRange),
        false,
    ),
    join(
        "R13",
        at(R::InferredSubProperty),
        at(R::InferredHasRange),
        at(R::InferredHasRange),
        false,
    ),
    copy("R14", at(R::InferredHasRange), tr(R::InRangeOf), false),
    join(
        "R15",
        at(R::InferredSubClass),
        tr(R::InferredHasRange),
        at(R::InRangeOf),
        false,
    ),
];

/// The rule set, in evaluation-table order.
pub fn rules() -> &'static [Rule] {
    &RULES
}

/// Per-relation forward and backward adjacency over the facts derived so far.
struct Adjacency {
    out: Vec<Vec<Vec<usize>>>,
    inc: Vec<Vec<Vec<usize>>>,
}

impl Adjacency {
    fn new(n: usize, tracked: &[bool; NUM_RELATIONS]) -> Self {
        let mk = |k: usize| {
            if tracked[k] {
                vec![Vec::new(); n]
            } else {
                Vec::new()
            }
        };
        Adjacency {
            out: (0..NUM_RELATIONS).map(mk).collect(),
            inc: (0..NUM_RELATIONS).map(mk).collect(),
        }
    }

    fn add(&mut self, rel: RelationKind, a: usize, b: usize) {
        let k = rel.bit();
        if !self.out[k].is_empty() {
            self.out[k][a].push(b);
            self.inc[k][b].push(a);
        }
    }

    /// All `y` with `atom(x, y)`.
    fn succ(&self, atom: Atom, x: usize) -> &[usize] {
        let k = atom.rel.bit();
        if atom.transposed {
            &self.inc[k][x]
        } else {
            &self.out[k][x]
        }
    }

    /// All `y` with `atom(y, x)`.
    fn pred(&self, atom: Atom, x: usize) -> &[usize] {
        let k = atom.rel.bit();
        if atom.transposed {
            &self.out[k][x]
        } else {
            &self.inc[k][x]
        }
    }
}

fn view(atom: Atom, a: usize, b: usize) -> (usize, usize) {
    if atom.transposed {
        (b, a)
    } else {
        (a, b)
    }
}

/// Runs the rule set to fixpoint and returns the materialized matrix. Bits
/// already present (stated or previously inferred) are kept and used as
/// premises.
pub fn materialize(m: &RelationMatrix) -> RelationMatrix {
    let mut out = m.clone();
    materialize_in_place(&mut out);
    out
}

pub fn materialize_in_place(m: &mut RelationMatrix) {
    let rules = rules();
    let n = m.n();

    let mut premise_of: Vec<Vec<&Rule>> = vec![Vec::new(); NUM_RELATIONS];
    let mut tracked = [false; NUM_RELATIONS];
    for rule in rules {
        match rule.body {
            RuleBody::Copy { from, .. } => premise_of[from.rel.bit()].push(rule),
            RuleBody::Join { left, right, .. } => {
                premise_of[left.rel.bit()].push(rule);
                if right.rel != left.rel {
                    premise_of[right.rel.bit()].push(rule);
                }
                tracked[left.rel.bit()] = true;
                tracked[right.rel.bit()] = true;
            }
        }
    }

    let mut adj = Adjacency::new(n, &tracked);
    let mut work: Vec<(RelationKind, usize, usize)> = Vec::new();
    for ((a, b), mask) in m.cells() {
        for k in mask.iter() {
            if !premise_of[k.bit()].is_empty() {
                adj.add(k, a, b);
                work.push((k, a, b));
            }
        }
    }
    work.reverse();

    let mut derived: Vec<(RelationKind, usize, usize)> = Vec::new();
    while let Some((rel, a, b)) = work.pop() {
        for rule in &premise_of[rel.bit()] {
            derived.clear();
            match rule.body {
                RuleBody::Copy { from, to } => {
                    let (x, y) = view(from, a, b);
                    derived.push(conclude(to, x, y));
                }
                RuleBody::Join { left, right, to } => {
                    if left.rel == rel {
                        // fact plays left(x,y); join with right(y,z)
                        let (x, y) = view(left, a, b);
                        for &z in adj.succ(right, y) {
                            derived.push(conclude(to, x, z));
                        }
                    }
                    if right.rel == rel {
                        // fact plays right(y,z); join with left(x,y)
                        let (y, z) = view(right, a, b);
                        for &x in adj.pred(left, y) {
                            derived.push(conclude(to, x, z));
                        }
                    }
                }
            }
            for &(k, x, y) in &derived {
                if rule.irreflexive && x == y {
                    continue;
                }
                if m.set(x, y, k) && !premise_of[k.bit()].is_empty() {
                    adj.add(k, x, y);
                    work.push((k, x, y));
                }
            }
        }
    }
}

fn conclude(to: Atom, x: usize, z: usize) -> (RelationKind, usize, usize) {
    let (u, v) = view(to, x, z);
    (to.rel, u, v)
}

/// Relation counts of a (materialized) matrix.
pub fn closure_counts(m: &RelationMatrix) -> [usize; NUM_RELATIONS] {
    m.counts()
}

/// Which inverse/symmetry constraint a cell violates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsistencyViolation {
    pub cell: (usize, usize),
    pub rule: &'static str,
}

/// Checks the structural constraints every stated or materialized matrix must
/// satisfy: paired inverse kinds, symmetric kinds, and the one-way links
/// IHD(p,c) ⇒ IDO(c,p), IHR(p,c) ⇒ IRO(c,p).
pub fn check_consistency(m: &RelationMatrix) -> Vec<ConsistencyViolation> {
    const INVERSE: [(RelationKind, RelationKind, &str); 6] = [
        (R::SubClass, R::SuperClass, "SbC/SpC"),
        (R::SubProperty, R::SuperProperty, "SbP/SpP"),
        (R::HasDomain, R::DomainOf, "HD/DO"),
        (R::HasRange, R::RangeOf, "HR/RO"),
        (R::InferredSubClass, R::InferredSuperClass, "ISbC/ISpC"),
        (R::InferredSubProperty, R::InferredSuperProperty, "ISbP/ISpP"),
    ];
    const SYMMETRIC: [(RelationKind, &str); 4] = [
        (R::DisjointWith, "DW symmetric"),
        (R::SameAs, "SA symmetric"),
        (R::Equivalent, "E symmetric"),
        (R::InferredEquivalent, "IE symmetric"),
    ];
    const IMPLIES: [(RelationKind, RelationKind, &str); 2] = [
        (R::InferredHasDomain, R::InDomainOf, "IHD=>IDO"),
        (R::InferredHasRange, R::InRangeOf, "IHR=>IRO"),
    ];

    let mut violations = BTreeSet::new();
    for ((i, j), mask) in m.cells() {
        let back = m.get(j, i);
        for (fwd, bwd, name) in INVERSE {
            if mask.contains(fwd) != back.contains(bwd) || mask.contains(bwd) != back.contains(fwd) {
                violations.insert(((i, j), name));
            }
        }
        for (k, name) in SYMMETRIC {
            if mask.contains(k) && !back.contains(k) {
                violations.insert(((i, j), name));
            }
        }
        for (from, to, name) in IMPLIES {
            if mask.contains(from) && !back.contains(to) {
                violations.insert(((i, j), name));
            }
        }
    }
    violations
        .into_iter()
        .map(|(cell, rule)| ConsistencyViolation { cell, rule })
        .collect()
}
