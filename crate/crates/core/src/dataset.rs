//! Pair datasets for relation prediction.
//!
//! Entities, not pairs, are split between training and validation, and a
//! split's pairs are formed only among its own entities. Only related pairs
//! (nonzero mask) are kept, in both orientations.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::par::*;
use crate::relation::{RelationKind, RelationMask, NUM_RELATIONS};
use crate::store::{EntityIndex, RelationMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct PairExample {
    pub src: Arc<str>,
    pub dst: Arc<str>,
    /// Concatenated source and target embeddings, length 2·dim.
    pub input: Vec<f64>,
    pub target: RelationMask,
    /// Provenance tag of the dataset this example came from.
    pub source: Arc<str>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairDataset {
    /// Embedding dimension (inputs are twice this long).
    pub dim: usize,
    pub source: String,
    pub examples: Vec<PairExample>,
}

impl PairDataset {
    pub fn empty(dim: usize, source: impl Into<String>) -> Self {
        PairDataset {
            dim,
            source: source.into(),
            examples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        2 * self.dim
    }

    pub fn relation_counts(&self) -> [usize; NUM_RELATIONS] {
        relation_counts(&self.examples)
    }

    /// Distinct entity IRIs appearing as either endpoint.
    pub fn entities(&self) -> BTreeSet<&str> {
        self.examples.iter().flat_map(|e| [&*e.src, &*e.dst]).collect()
    }

    /// Examples whose provenance tag equals `source`.
    pub fn filter_source(&self, source: &str) -> PairDataset {
        PairDataset {
            dim: self.dim,
            source: source.to_owned(),
            examples: self.examples.iter().filter(|e| &*e.source == source).cloned().collect(),
        }
    }

    /// Writes the dataset file: manifest line, then one row per example with
    /// IRIs and relation codes. Vectors stay in the referenced embedding file.
    pub fn write_to(&self, embedding_file: &str, seed: u64, mut out: impl Write) -> std::io::Result<()> {
        let manifest = DatasetManifest {
            dim: self.dim,
            embedding_file: embedding_file.to_owned(),
            source: self.source.clone(),
            seed,
        };
        serde_json::to_writer(&mut out, &manifest)?;
        out.write_all(b"\n")?;
        for e in &self.examples {
            let row = DatasetRowRef {
                src: &e.src,
                dst: &e.dst,
                labels: e.target.iter().map(RelationKind::code).collect(),
            };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>, embedding_file: &str, seed: u64) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_to(embedding_file, seed, &mut buf)
            .map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Reads only the manifest line of a dataset file.
    pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let first = text
            .lines()
            .next()
            .ok_or_else(|| Error::format(path.display().to_string(), "empty dataset file"))?;
        serde_json::from_str(first).map_err(|e| Error::format(path.display().to_string(), format!("bad manifest: {e}")))
    }

    /// Loads a dataset file, resolving vectors from `embeddings`.
    pub fn load(path: impl AsRef<Path>, embeddings: &EmbeddingTable) -> Result<(Self, DatasetManifest)> {
        let path = path.as_ref();
        let file = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let manifest: DatasetManifest = lines
            .next()
            .ok_or_else(|| Error::format(&file, "empty dataset file"))
            .and_then(|l| serde_json::from_str(l).map_err(|e| Error::format(&file, format!("bad manifest: {e}"))))?;
        if manifest.dim != embeddings.dim() {
            return Err(Error::Shape(format!(
                "dataset {file} has dim {}, embeddings have dim {}",
                manifest.dim,
                embeddings.dim()
            )));
        }
        let source: Arc<str> = manifest.source.as_str().into();
        let mut ds = PairDataset::empty(manifest.dim, manifest.source.clone());
        for (n, line) in lines.enumerate() {
            let row: DatasetRow =
                serde_json::from_str(line).map_err(|e| Error::format(&file, format!("row {}: {e}", n + 1)))?;
            let target = row
                .labels
                .iter()
                .map(|c| c.parse::<RelationKind>())
                .collect::<std::result::Result<RelationMask, _>>()
                .map_err(|e| Error::format(&file, format!("row {}: {e}", n + 1)))?;
            let input = concat(embeddings.require(&row.src)?, embeddings.require(&row.dst)?);
            ds.examples.push(PairExample {
                src: row.src.into(),
                dst: row.dst.into(),
                input,
                target,
                source: source.clone(),
            });
        }
        Ok((ds, manifest))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dim: usize,
    pub embedding_file: String,
    pub source: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct DatasetRowRef<'a> {
    src: &'a str,
    dst: &'a str,
    labels: Vec<&'static str>,
}

#[derive(Deserialize)]
struct DatasetRow {
    src: String,
    dst: String,
    labels: Vec<String>,
}

fn concat(a: &[f32], b: &[f32]) -> Vec<f64> {
    a.iter().chain(b).map(|&x| x as f64).collect()
}

pub fn relation_counts(examples: &[PairExample]) -> [usize; NUM_RELATIONS] {
    let mut counts = [0; NUM_RELATIONS];
    for e in examples {
        for k in e.target.iter() {
            counts[k.bit()] += 1;
        }
    }
    counts
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    /// Share of entities set aside for validation, within [0.25, 0.5].
    pub val_fraction: f64,
    pub seed: u64,
    /// Optional per-relation example cap applied by [`rebalance`].
    pub cap: Option<usize>,
}

impl SplitSpec {
    pub fn new(val_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            val_fraction,
            seed,
            cap: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.25..=0.5).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction {} outside [0.25, 0.5]",
                self.val_fraction
            )));
        }
        if self.cap == Some(0) {
            return Err(Error::Config("rebalance cap must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntitySplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded uniform sample of ⌈val_fraction·n⌉ validation entities; the rest
/// train. Both lists are sorted.
pub fn split_entities(n: usize, spec: &SplitSpec) -> Result<EntitySplit> {
    spec.validate()?;
    if n < 4 {
        return Err(Error::Invalid(format!("cannot split {n} entities (need at least 4)")));
    }
    // tolerance keeps 0.3·10 at 3 despite binary rounding
    let n_val = ((spec.val_fraction * n as f64) - 1e-9).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut validation = rand::seq::index::sample(&mut rng, n, n_val).into_vec();
    validation.sort_unstable();
    let mut is_val = vec![false; n];
    for &v in &validation {
        is_val[v] = true;
    }
    let train = (0..n).filter(|&i| !is_val[i]).collect();
    Ok(EntitySplit { train, validation })
}

/// Every ordered related pair (i, j), i ≠ j, with both endpoints in
/// `entities`, sorted by (i, j). Rows are processed in parallel.
pub fn build_pairs(
    matrix: &RelationMatrix,
    embeddings: &EmbeddingTable,
    entities: &[usize],
    index: &EntityIndex,
    source: &str,
) -> Result<PairDataset> {
    let mut members = vec![false; matrix.n().max(index.len())];
    for &e in entities {
        if e >= members.len() {
            return Err(Error::Invalid(format!("entity {e} out of range")));
        }
        members[e] = true;
    }
    let mut sorted: Vec<usize> = entities.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let iris: Vec<Arc<str>> = (0..index.len()).map(|i| Arc::from(index.iri(i))).collect();
    let tag: Arc<str> = source.into();
    let rows: Vec<Result<Vec<PairExample>>> = sorted
        .par_iter()
        .map(|&i| {
            let mut out = Vec::new();
            for (j, mask) in matrix.row(i) {
                if j == i || !members[j] {
                    continue;
                }
                let input = concat(embeddings.require(&iris[i])?, embeddings.require(&iris[j])?);
                out.push(PairExample {
                    src: iris[i].clone(),
                    dst: iris[j].clone(),
                    input,
                    target: mask,
                    source: tag.clone(),
                });
            }
            Ok(out)
        })
        .collect();

    let mut ds = PairDataset::empty(embeddings.dim(), source);
    for row in rows {
        ds.examples.extend(row?);
    }
    Ok(ds)
}

/// Seeded down-sampling: while some relation exceeds `cap`, drop a random
/// example all of whose relations are over the cap. Examples carrying any
/// under-cap relation are never dropped, so some relations may stay above
/// the cap. Order of the survivors is preserved.
pub fn rebalance(examples: Vec<PairExample>, cap: usize, seed: u64) -> Vec<PairExample> {
    assert!(cap >= 1, "cap must be at least 1");
    let mut counts = relation_counts(&examples);
    let over_mask = |counts: &[usize; NUM_RELATIONS]| -> u32 {
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > cap)
            .fold(0, |m, (k, _)| m | (1 << k))
    };
    let mut over = over_mask(&counts);
    if over == 0 {
        return examples;
    }

    // Visiting in a random order and removing every example that is a
    // candidate at its turn is equivalent to repeatedly removing a uniformly
    // random candidate: the over-cap set only shrinks, so an example passed
    // over can never become a candidate later.
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep = vec![true; examples.len()];
    for i in order {
        if over == 0 {
            break;
        }
        let bits = examples[i].target.bits();
        if bits != 0 && bits & !over == 0 {
            keep[i] = false;
            for k in examples[i].target.iter() {
                counts[k.bit()] -= 1;
            }
            over = over_mask(&counts);
        }
    }
    examples
        .into_iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then_some(e))
        .collect()
}

/// Concatenates datasets, keeping each example's provenance tag.
pub fn merge_datasets(datasets: &[PairDataset], source: &str) -> Result<PairDataset> {
    let dim = datasets.first().map_or(0, |d| d.dim);
    if let Some(bad) = datasets.iter().find(|d| d.dim != dim) {
        return Err(Error::Shape(format!(
            "cannot merge dataset {} (dim {}) with dim {dim}",
            bad.source, bad.dim
        )));
    }
    Ok(PairDataset {
        dim,
        source: source.to_owned(),
        examples: datasets.iter().flat_map(|d| d.examples.iter().cloned()).collect(),
    })
}

#[derive(Clone, Debug)]
pub struct SplitDatasets {
    pub split: EntitySplit,
    pub train: PairDataset,
    pub validation: PairDataset,
}

/// Splits entities, builds both pair sets and applies the optional cap to
/// each.
pub fn build_split(
    matrix: &RelationMatrix,
    embeddings: &EmbeddingTable,
    index: &EntityIndex,
    spec: &SplitSpec,
    source: &str,
) -> Result<SplitDatasets> {
    let split = split_entities(index.len(), spec)?;
    let mut train = build_pairs(matrix, embeddings, &split.train, index, source)?;
    let mut validation = build_pairs(matrix, embeddings, &split.validation, index, source)?;
    if let Some(cap) = spec.cap {
        train.examples = rebalance(train.examples, cap, spec.seed);
        validation.examples = rebalance(validation.examples, cap, spec.seed.wrapping_add(1));
    }
    Ok(SplitDatasets {
        split,
        train,
        validation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::materialize;
    use crate::ntriples::StatementKind as S;
    use proptest::prelude::*;
    use RelationKind as R;

    fn setup(n: usize, stmts: &[(S, usize, usize)]) -> (EntityIndex, RelationMatrix, EmbeddingTable) {
        let mut ix = EntityIndex::new();
        let mut emb = EmbeddingTable::new("t", 2);
        for i in 0..n {
            let iri = format!("http://ex.org/e{i}");
            ix.intern(&iri, None, None);
            emb.insert(iri, vec![i as f32, -(i as f32)]).unwrap();
        }
        let mut m = RelationMatrix::new(n);
        for &(k, a, b) in stmts {
            m.assert_stated(k, a, b);
        }
        (ix, materialize(&m), emb)
    }

    #[test]
    fn split_sizes() {
        let s = split_entities(10, &SplitSpec::new(0.3, 1)).unwrap();
        assert_eq!((s.validation.len(), s.train.len()), (3, 7));
        let s = split_entities(5, &SplitSpec::new(0.4, 1)).unwrap();
        assert_eq!(s.validation.len(), 2);
        assert_eq!(
            split_entities(50, &SplitSpec::new(0.3, 7)).unwrap(),
            split_entities(50, &SplitSpec::new(0.3, 7)).unwrap()
        );
        assert!(split_entities(3, &SplitSpec::new(0.3, 1)).is_err());
        assert!(split_entities(10, &SplitSpec::new(0.2, 1)).is_err());
        assert!(split_entities(10, &SplitSpec::new(0.6, 1)).is_err());
    }

    #[test]
    fn subclass_pair_yields_both_orientations() {
        let (ix, m, emb) = setup(2, &[(S::SubClassOf, 0, 1)]);
        let ds = build_pairs(&m, &emb, &[0, 1], &ix, "t").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(&*ds.examples[0].src, "http://ex.org/e0");
        assert_eq!(
            ds.examples[0].target,
            RelationMask::EMPTY.with(R::SubClass).with(R::InferredSubClass)
        );
        assert_eq!(
            ds.examples[1].target,
            RelationMask::EMPTY.with(R::SuperClass).with(R::InferredSuperClass)
        );
        assert_eq!(ds.examples[0].input, vec![0.0, -0.0, 1.0, -1.0]);
    }

    #[test]
    fn unrelated_and_cross_partition_pairs_are_dropped() {
        let (ix, m, emb) = setup(4, &[(S::SubClassOf, 0, 1), (S::SubClassOf, 2, 3)]);
        let ds = build_pairs(&m, &emb, &[0, 1, 2], &ix, "t").unwrap();
        assert_eq!(ds.len(), 2);
        assert!(ds.examples.iter().all(|e| &*e.src != "http://ex.org/e3"));
    }

    #[test]
    fn missing_embedding_is_an_error() {
        let (ix, m, _) = setup(2, &[(S::SubClassOf, 0, 1)]);
        let mut emb = EmbeddingTable::new("t", 2);
        emb.insert("http://ex.org/e0", vec![0.0, 0.0]).unwrap();
        let err = build_pairs(&m, &emb, &[0, 1], &ix, "t").unwrap_err();
        assert!(matches!(err, Error::MissingEmbedding(ref iri) if iri == "http://ex.org/e1"));
    }

    fn example(bits: &[RelationKind]) -> PairExample {
        PairExample {
            src: "a".into(),
            dst: "b".into(),
            input: vec![],
            target: bits.iter().copied().collect(),
            source: "t".into(),
        }
    }

    #[test]
    fn rebalance_cases() {
        let under = vec![example(&[R::SubClass]); 5];
        assert_eq!(rebalance(under.clone(), 5, 0), under);

        let many = vec![example(&[R::InferredSubClass]); 100];
        assert_eq!(rebalance(many, 10, 0).len(), 10);

        let mut mixed = vec![example(&[R::InferredSubClass]); 20];
        mixed.push(example(&[R::InferredSubClass, R::DisjointWith]));
        let out = rebalance(mixed, 3, 4);
        assert!(out.iter().any(|e| e.target.contains(R::DisjointWith)));
        assert_eq!(relation_counts(&out)[R::InferredSubClass.bit()], 3);
    }

    #[test]
    fn merge_keeps_provenance() {
        let mut a = PairDataset::empty(2, "a");
        a.examples.push(example(&[R::SubClass]));
        let mut b = PairDataset::empty(2, "b");
        let mut e = example(&[R::SameAs]);
        e.source = "b".into();
        b.examples.push(e.clone());
        b.examples.push(e);
        let merged = merge_datasets(&[a.clone(), b.clone()], "all").unwrap();
        assert_eq!(merged.len(), 3);
        assert_eq!(merged.filter_source("t").examples, a.examples);
        assert_eq!(merged.filter_source("b").examples, b.examples);
        let with_empty = merge_datasets(&[a.clone(), PairDataset::empty(2, "z")], "a").unwrap();
        assert_eq!(with_empty.examples, a.examples);
        assert!(merge_datasets(&[a, PairDataset::empty(3, "x")], "m").is_err());
    }

    #[test]
    fn dataset_file_round_trip() {
        let (ix, m, emb) = setup(3, &[(S::SubClassOf, 0, 1), (S::Domain, 2, 1)]);
        let ds = build_pairs(&m, &emb, &[0, 1, 2], &ix, "tiny").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        ds.write(&path, "emb.jsonl", 5).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"dim":2,"embedding_file":"emb.jsonl","source":"tiny","seed":5}"#));
        assert!(text.contains(r#"{"src":"http://ex.org/e0","dst":"http://ex.org/e1","labels":["SbC","ISbC"]}"#));
        let (back, manifest) = PairDataset::load(&path, &emb).unwrap();
        assert_eq!(manifest.seed, 5);
        assert_eq!(back, ds);
    }

    fn random_matrix(n: usize, edges: &[(u8, usize, usize)]) -> (EntityIndex, RelationMatrix, EmbeddingTable) {
        let kinds = [
            S::SubClassOf,
            S::SubPropertyOf,
            S::Domain,
            S::Range,
            S::DisjointWith,
            S::EquivalentClass,
        ];
        let stmts: Vec<_> = edges
            .iter()
            .map(|&(k, a, b)| (kinds[k as usize % kinds.len()], a % n, b % n))
            .collect();
        setup(n, &stmts)
    }

    proptest! {
        #[test]
        fn split_pairs_never_leak(
            edges in prop::collection::vec((any::<u8>(), 0usize..40, 0usize..40), 0..80),
            seed in any::<u64>(),
        ) {
            let (ix, m, emb) = random_matrix(20, &edges);
            let s = build_split(&m, &emb, &ix, &SplitSpec::new(0.3, seed), "p").unwrap();
            let train = s.train.entities();
            for e in &s.validation.examples {
                prop_assert!(!train.contains(&*e.src) && !train.contains(&*e.dst));
            }
            for ds in [&s.train, &s.validation] {
                for e in &ds.examples {
                    prop_assert!(e.src != e.dst);
                    prop_assert!(!e.target.is_empty());
                    let (i, j) = (ix.get(&e.src).unwrap(), ix.get(&e.dst).unwrap());
                    prop_assert_eq!(e.target, m.get(i, j));
                }
                let c = ds.relation_counts();
                prop_assert_eq!(c[R::SubClass.bit()], c[R::SuperClass.bit()]);
                prop_assert_eq!(c[R::InferredSubClass.bit()], c[R::InferredSuperClass.bit()]);
            }
        }

        #[test]
        fn rebalance_never_increases_counts(
            masks in prop::collection::vec(1u32..(1 << 6), 0..60),
            cap in 1usize..20,
            seed in any::<u64>(),
        ) {
            let examples: Vec<_> = masks
                .iter()
                .map(|&b| PairExample { target: RelationMask::from_bits(b).unwrap(), ..example(&[]) })
                .collect();
            let before = relation_counts(&examples);
            let out = rebalance(examples.clone(), cap, seed);
            let after = relation_counts(&out);
            for k in 0..NUM_RELATIONS {
                prop_assert!(after[k] <= before[k]);
            }
            prop_assert!(out.iter().all(|e| !e.target.is_empty()));
            // stopping condition: no remaining example consists only of over-cap relations
            let over: u32 = (0..NUM_RELATIONS).filter(|&k| after[k] > cap).fold(0, |m, k| m | 1 << k);
            prop_assert!(out.iter().all(|e| e.target.bits() & !over != 0));
            prop_assert_eq!(rebalance(examples, cap, seed), out);
        }
    }
}
