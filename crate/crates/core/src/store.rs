//! Entity index and the sparse n×n relation matrix.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ntriples::{Ingested, StatementKind, Term, Triple};
use crate::relation::{RelationKind, RelationMask, NUM_RELATIONS};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityRecord {
    pub index: usize,
    pub iri: String,
    pub label: Option<String>,
    pub comment: Option<String>,
}

/// IRI ↔ dense index, numbered in first-encounter order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EntityIndex {
    records: Vec<EntityRecord>,
    by_iri: HashMap<String, usize>,
}

impl EntityIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `iri`, appending a record if it is new. Label and
    /// comment only fill slots that are still empty.
    pub fn intern(&mut self, iri: &str, label: Option<&str>, comment: Option<&str>) -> usize {
        let index = match self.by_iri.get(iri) {
            Some(&i) => i,
            None => {
                let i = self.records.len();
                self.records.push(EntityRecord {
                    index: i,
                    iri: iri.to_owned(),
                    label: None,
                    comment: None,
                });
                self.by_iri.insert(iri.to_owned(), i);
                i
            }
        };
        let rec = &mut self.records[index];
        if rec.label.is_none() {
            rec.label = label.map(str::to_owned);
        }
        if rec.comment.is_none() {
            rec.comment = comment.map(str::to_owned);
        }
        index
    }

    pub fn get(&self, iri: &str) -> Option<usize> {
        self.by_iri.get(iri).copied()
    }

    pub fn record(&self, index: usize) -> Option<&EntityRecord> {
        self.records.get(index)
    }

    pub fn iri(&self, index: usize) -> &str {
        &self.records[index].iri
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EntityRecord> {
        self.records.iter()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("index\tiri\tlabel\tcomment\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.index,
                escape_field(&r.iri),
                escape_field(r.label.as_deref().unwrap_or("")),
                escape_field(r.comment.as_deref().unwrap_or(""))
            );
        }
        out
    }

    pub fn from_tsv(text: &str, file: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("index\tiri\tlabel\tcomment") {
            return Err(Error::format(file, "missing index header"));
        }
        let mut ix = EntityIndex::new();
        for (n, line) in lines.enumerate() {
            let line_no = n + 2;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::format(file, format!("line {line_no}: expected 4 fields")));
            }
            let index: usize = fields[0]
                .parse()
                .map_err(|_| Error::format(file, format!("line {line_no}: bad index")))?;
            if index != ix.len() {
                return Err(Error::format(
                    file,
                    format!("line {line_no}: index {index} out of sequence"),
                ));
            }
            let iri = unescape_field(fields[1]);
            if ix.get(&iri).is_some() {
                return Err(Error::format(file, format!("line {line_no}: duplicate IRI")));
            }
            let opt = |s: &str| (!s.is_empty()).then(|| unescape_field(s));
            let label = opt(fields[2]);
            let comment = opt(fields[3]);
            ix.intern(&iri, label.as_deref(), comment.as_deref());
        }
        Ok(ix)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text, &path.display().to_string())
    }
}

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Sparse n×n grid of relation masks. Absent cells mean mask 0, and a zero
/// mask is never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelationMatrix {
    n: usize,
    cells: BTreeMap<(usize, usize), RelationMask>,
}

impl RelationMatrix {
    pub fn new(n: usize) -> Self {
        RelationMatrix {
            n,
            cells: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Grows the matrix to at least `n` entities.
    pub fn ensure_size(&mut self, n: usize) {
        self.n = self.n.max(n);
    }

    pub fn get(&self, i: usize, j: usize) -> RelationMask {
        self.cells.get(&(i, j)).copied().unwrap_or_default()
    }

    pub fn has(&self, i: usize, j: usize, kind: RelationKind) -> bool {
        self.get(i, j).contains(kind)
    }

    /// Sets one bit; returns true if it was not already set.
    pub fn set(&mut self, i: usize, j: usize, kind: RelationKind) -> bool {
        assert!(
            i < self.n && j < self.n,
            "cell ({i}, {j}) outside {n}×{n} matrix",
            n = self.n
        );
        self.cells.entry((i, j)).or_default().insert(kind)
    }

    pub fn set_mask(&mut self, i: usize, j: usize, mask: RelationMask) {
        assert!(i < self.n && j < self.n);
        if mask.is_empty() {
            self.cells.remove(&(i, j));
        } else {
            self.cells.insert((i, j), mask);
        }
    }

    /// Nonzero cells in (i, j) order.
    pub fn cells(&self) -> impl Iterator<Item = ((usize, usize), RelationMask)> + '_ {
        self.cells.iter().map(|(&k, &v)| (k, v))
    }

    /// Nonzero cells of row `i`, in column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, RelationMask)> + '_ {
        self.cells.range((i, 0)..(i + 1, 0)).map(|(&(_, j), &m)| (j, m))
    }

    pub fn nonzero_cells(&self) -> usize {
        self.cells.len()
    }

    /// Ordered pairs holding `kind`.
    pub fn pairs(&self, kind: RelationKind) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .filter(move |(_, m)| m.contains(kind))
            .map(|(&k, _)| k)
    }

    /// Applies a stated relation extracted from a statement of kind `kind`.
    pub fn assert_stated(&mut self, kind: StatementKind, a: usize, b: usize) {
        use RelationKind as R;
        match kind {
            StatementKind::SubClassOf => self.set_pair(a, b, R::SubClass, R::SuperClass),
            StatementKind::SubPropertyOf => self.set_pair(a, b, R::SubProperty, R::SuperProperty),
            StatementKind::Domain => self.set_pair(a, b, R::HasDomain, R::DomainOf),
            StatementKind::Range => self.set_pair(a, b, R::HasRange, R::RangeOf),
            StatementKind::DisjointWith => self.set_pair(a, b, R::DisjointWith, R::DisjointWith),
            StatementKind::SameAs => self.set_pair(a, b, R::SameAs, R::SameAs),
            StatementKind::EquivalentClass | StatementKind::EquivalentProperty => {
                self.set_pair(a, b, R::Equivalent, R::Equivalent)
            }
            StatementKind::Label | StatementKind::Comment | StatementKind::Other => {}
        }
    }

    fn set_pair(&mut self, a: usize, b: usize, forward: RelationKind, backward: RelationKind) {
        self.set(a, b, forward);
        self.set(b, a, backward);
    }

    /// Entry k = number of cells with bit k set.
    pub fn counts(&self) -> [usize; NUM_RELATIONS] {
        let mut counts = [0; NUM_RELATIONS];
        for m in self.cells.values() {
            for k in m.iter() {
                counts[k.bit()] += 1;
            }
        }
        counts
    }

    /// Per-relation counts as a `code\trelation\tcount` table, one row per
    /// kind in bit order.
    pub fn counts_table(&self) -> String {
        let counts = self.counts();
        let mut out = String::from("code\trelation\tcount\n");
        for k in RelationKind::ALL {
            let _ = writeln!(out, "{}\t{}\t{}", k.code(), k.description(), counts[k.bit()]);
        }
        out
    }

    pub fn to_tsv(&self, materialized: bool) -> String {
        let mut out = format!("# n={}\n", self.n);
        if materialized {
            out.push_str("# materialized=true\n");
        }
        for (&(i, j), m) in &self.cells {
            let _ = writeln!(out, "{i}\t{j}\t{}", m.bits());
        }
        out
    }

    /// Parses the matrix file format; also reports whether the header marks
    /// the matrix as materialized.
    pub fn from_tsv(text: &str, file: &str) -> Result<(Self, bool)> {
        let mut lines = text.lines().enumerate();
        let n = lines
            .next()
            .and_then(|(_, l)| l.strip_prefix("# n="))
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::format(file, "missing '# n=' header"))?;
        let mut m = RelationMatrix::new(n);
        let mut materialized = false;
        let mut last: Option<(usize, usize)> = None;
        for (k, line) in lines {
            let line_no = k + 1;
            if let Some(comment) = line.strip_prefix('#') {
                if comment.trim() == "materialized=true" {
                    materialized = true;
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::format(file, format!("line {line_no}: {msg}"));
            let mut f = line.split('\t');
            let mut num = |what: &str| -> Result<u64> {
                f.next()
                    .and_then(|s| s.parse::<u64>().ok())
                    .ok_or_else(|| bad(&format!("bad {what}")))
            };
            let i = num("row")? as usize;
            let j = num("column")? as usize;
            let bits = num("mask")?;
            if i >= n || j >= n {
                return Err(bad("cell outside matrix"));
            }
            let mask = u32::try_from(bits)
                .ok()
                .and_then(RelationMask::from_bits)
                .filter(|m| !m.is_empty())
                .ok_or_else(|| bad("mask must be nonzero with bits 20-31 clear"))?;
            if last.is_some_and(|prev| prev >= (i, j)) {
                return Err(bad("rows not sorted by (i, j)"));
            }
            last = Some((i, j));
            m.cells.insert((i, j), mask);
        }
        Ok((m, materialized))
    }

    pub fn write(&self, path: impl AsRef<Path>, materialized: bool) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv(materialized)).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<(Self, bool)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text, &path.display().to_string())
    }
}

/// Index plus stated relations built from classified statements.
#[derive(Clone, Debug, Default)]
pub struct Ontology {
    pub index: EntityIndex,
    pub matrix: RelationMatrix,
}

impl Ontology {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds one classified statement. Relation statements touching a blank
    /// node, and labels or comments that are not English literals, are
    /// ignored. Every IRI of an accepted statement is indexed.
    pub fn add(&mut self, triple: &Triple, kind: StatementKind) {
        let Term::Iri(subject) = &triple.subject else {
            return;
        };
        match kind {
            StatementKind::Other => {}
            StatementKind::Label | StatementKind::Comment => {
                let text = match &triple.object {
                    Term::Literal(lit) if lit.is_english() => Some(lit.lexical.as_str()),
                    _ => None,
                };
                if kind == StatementKind::Label {
                    self.index.intern(subject, text, None);
                } else {
                    self.index.intern(subject, None, text);
                }
            }
            _ => {
                let Term::Iri(object) = &triple.object else {
                    return;
                };
                let a = self.index.intern(subject, None, None);
                let b = self.index.intern(object, None, None);
                self.matrix.ensure_size(self.index.len());
                self.matrix.assert_stated(kind, a, b);
            }
        }
        self.matrix.ensure_size(self.index.len());
    }

    pub fn from_ingested(ingested: &Ingested) -> Self {
        let mut o = Ontology::new();
        for (t, k) in &ingested.triples {
            o.add(t, *k);
        }
        o
    }
}
