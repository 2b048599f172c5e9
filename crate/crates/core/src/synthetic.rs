//! Seeded toy ontologies with structural embeddings.
//!
//! About half the entities are classes, forming up to four trees (branching
//! ≤ 3, depth ≤ 3), and 45% are properties. Most properties get a domain and
//! a range in two different trees; the rest are sub-properties of those. A
//! few alias classes are declared equivalent to a class, and the tree roots
//! are pairwise disjoint.
//!
//! The property share is high on purpose: with only a few dozen training
//! properties the net memorizes individual property codes and generalizes
//! poorly to held-out ones.
//!
//! Each entity vector is a fixed structural code plus uniform noise of
//! amplitude 0.01:
//!
//! | dims  | class          | property              | alias            |
//! |-------|----------------|-----------------------|------------------|
//! | 0..3  | type one-hot   | type one-hot          | type one-hot     |
//! | 3..16 | own tree path  | domain path           | aliased path     |
//! | 16..29| 0              | range path            | 0                |
//! | 29    | 0              | 1 if sub-property     | 0                |
//!
//! A tree path is the root one-hot (4) followed by one child-slot one-hot
//! (3) per level below the root. Every relation in the materialized matrix is
//! then a function of the two codes: subsumption is path prefixing, domain
//! and range relations compare a class path with a property's domain or
//! range path, and so on.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{build_split, SplitDatasets, SplitSpec};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::inference::materialize;
use crate::ntriples::{vocab, StatementKind, Triple};
use crate::store::{EntityIndex, RelationMatrix};

pub const BASE: &str = "http://example.org/synthetic#";
pub const MIN_ENTITIES: usize = 20;
pub const STRUCTURAL_DIMS: usize = 30;
pub const NOISE: f64 = 0.01;

const ROOTS: usize = 4;
const BRANCHING: usize = 3;
const MAX_DEPTH: usize = 3;
const PATH_DIMS: usize = ROOTS + BRANCHING * MAX_DEPTH;
const TYPE_CLASS: usize = 0;
const TYPE_PROPERTY: usize = 1;
const TYPE_ALIAS: usize = 2;
const PATH_A: usize = 3;
const PATH_B: usize = PATH_A + PATH_DIMS;
const SUB_FLAG: usize = PATH_B + PATH_DIMS;

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub index: EntityIndex,
    /// Stated relations only.
    pub stated: RelationMatrix,
    pub matrix: RelationMatrix,
    pub embeddings: EmbeddingTable,
    /// Stated statements, in generation order.
    pub statements: Vec<(StatementKind, usize, usize)>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
struct Class {
    parent: Option<usize>,
    /// Root number, then child slot per level.
    path: Vec<usize>,
    children: usize,
}

pub fn make_synthetic(n_entities: usize, dim: usize, seed: u64) -> Result<Synthetic> {
    if n_entities < MIN_ENTITIES {
        return Err(Error::Config(format!(
            "synthetic ontologies need at least {MIN_ENTITIES} entities, got {n_entities}"
        )));
    }
    if dim < STRUCTURAL_DIMS {
        return Err(Error::Config(format!(
            "synthetic embeddings need dim ≥ {STRUCTURAL_DIMS}, got {dim}"
        )));
    }
    let n_alias = n_entities / 20;
    let n_prop = n_entities * 9 / 20;
    let n_class = n_entities - n_alias - n_prop;
    let capacity = ROOTS * (1 + BRANCHING + BRANCHING.pow(2) + BRANCHING.pow(3));
    if n_class > capacity {
        return Err(Error::Config(format!(
            "{n_entities} entities need {n_class} classes, more than the {capacity} the trees can hold"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut classes: Vec<Class> = (0..ROOTS)
        .map(|r| Class {
            parent: None,
            path: vec![r],
            children: 0,
        })
        .collect();
    while classes.len() < n_class {
        let open: Vec<usize> = (0..classes.len())
            .filter(|&c| classes[c].path.len() <= MAX_DEPTH && classes[c].children < BRANCHING)
            .collect();
        let &parent = open.choose(&mut rng).expect("capacity checked above");
        let mut path = classes[parent].path.clone();
        path.push(classes[parent].children);
        classes[parent].children += 1;
        classes.push(Class {
            parent: Some(parent),
            path,
            children: 0,
        });
    }

    let n_top = (n_prop * 7).div_ceil(10);
    let mut top: Vec<(usize, usize)> = Vec::with_capacity(n_top);
    let mut used = BTreeSet::new();
    while top.len() < n_top {
        let d = rng.random_range(0..n_class);
        let r = rng.random_range(0..n_class);
        if classes[d].path[0] != classes[r].path[0] && used.insert((d, r)) {
            top.push((d, r));
        }
    }
    let sub_parents: Vec<usize> = (n_top..n_prop).map(|_| rng.random_range(0..n_top)).collect();
    let aliased = rand::seq::index::sample(&mut rng, n_class, n_alias).into_vec();

    // entity numbering: classes, then properties, then aliases
    let prop_id = |p: usize| n_class + p;
    let alias_id = |a: usize| n_class + n_prop + a;
    let mut index = EntityIndex::new();
    for c in 0..n_class {
        index.intern(&format!("{BASE}Class{c}"), None, None);
    }
    for p in 0..n_prop {
        index.intern(&format!("{BASE}property{p}"), None, None);
    }
    for a in 0..n_alias {
        index.intern(&format!("{BASE}Alias{a}"), None, None);
    }

    let mut statements = Vec::new();
    for (c, class) in classes.iter().enumerate() {
        if let Some(p) = class.parent {
            statements.push((StatementKind::SubClassOf, c, p));
        }
    }
    for a in 0..ROOTS {
        for b in a + 1..ROOTS {
            statements.push((StatementKind::DisjointWith, a, b));
        }
    }
    for (p, &(d, r)) in top.iter().enumerate() {
        statements.push((StatementKind::Domain, prop_id(p), d));
        statements.push((StatementKind::Range, prop_id(p), r));
    }
    for (i, &parent) in sub_parents.iter().enumerate() {
        statements.push((StatementKind::SubPropertyOf, prop_id(n_top + i), prop_id(parent)));
    }
    for (a, &c) in aliased.iter().enumerate() {
        statements.push((StatementKind::EquivalentClass, alias_id(a), c));
    }

    let mut stated = RelationMatrix::new(index.len());
    for &(k, a, b) in &statements {
        stated.assert_stated(k, a, b);
    }
    let matrix = materialize(&stated);

    let write_path = |v: &mut [f64], at: usize, path: &[usize]| {
        v[at + path[0]] = 1.0;
        for (level, &slot) in path[1..].iter().enumerate() {
            v[at + ROOTS + level * BRANCHING + slot] = 1.0;
        }
    };
    let mut codes: Vec<Vec<f64>> = Vec::with_capacity(index.len());
    for class in &classes {
        let mut v = vec![0.0; dim];
        v[TYPE_CLASS] = 1.0;
        write_path(&mut v, PATH_A, &class.path);
        codes.push(v);
    }
    for p in 0..n_prop {
        let (d, r) = if p < n_top { top[p] } else { top[sub_parents[p - n_top]] };
        let mut v = vec![0.0; dim];
        v[TYPE_PROPERTY] = 1.0;
        write_path(&mut v, PATH_A, &classes[d].path);
        write_path(&mut v, PATH_B, &classes[r].path);
        if p >= n_top {
            v[SUB_FLAG] = 1.0;
        }
        codes.push(v);
    }
    for &c in &aliased {
        let mut v = vec![0.0; dim];
        v[TYPE_ALIAS] = 1.0;
        write_path(&mut v, PATH_A, &classes[c].path);
        codes.push(v);
    }

    let mut embeddings = EmbeddingTable::new(format!("synthetic:seed={seed}"), dim);
    for (i, code) in codes.into_iter().enumerate() {
        let v = code
            .into_iter()
            .map(|x| (x + rng.random_range(-NOISE..=NOISE)) as f32)
            .collect();
        embeddings.insert(index.iri(i), v)?;
    }

    Ok(Synthetic {
        index,
        stated,
        matrix,
        embeddings,
        statements,
        seed,
    })
}

impl Synthetic {
    pub fn split(&self, spec: &SplitSpec) -> Result<SplitDatasets> {
        build_split(
            &self.matrix,
            &self.embeddings,
            &self.index,
            spec,
            &format!("synthetic-{}", self.seed),
        )
    }

    /// The stated statements as an N-Triples document.
    pub fn to_ntriples(&self) -> String {
        let mut out = String::new();
        for &(kind, a, b) in &self.statements {
            let predicate = match kind {
                StatementKind::SubClassOf => vocab::RDFS_SUB_CLASS_OF,
                StatementKind::SubPropertyOf => vocab::RDFS_SUB_PROPERTY_OF,
                StatementKind::Domain => vocab::RDFS_DOMAIN,
                StatementKind::Range => vocab::RDFS_RANGE,
                StatementKind::DisjointWith => vocab::OWL_DISJOINT_WITH,
                StatementKind::EquivalentClass => vocab::OWL_EQUIVALENT_CLASS,
                _ => unreachable!("generator emits no other kinds"),
            };
            out.push_str(&Triple::iris(self.index.iri(a), predicate, self.index.iri(b)).to_ntriples());
            out.push('\n');
        }
        out
    }
}
