//! Entity texts and embedding tables.
//!
//! An entity is represented by the words of its IRI short name plus its
//! English comment. Embedding providers (external language models, or the
//! deterministic [`pseudo_embed`] used in tests) consume the text export and
//! write a JSONL table that [`EmbeddingTable::load`] validates.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::store::EntityIndex;

pub const POOLING: &str = "mean-name-comment";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityText {
    pub iri: String,
    pub name_words: Vec<String>,
    pub comment: Option<String>,
}

/// The fragment after the last `#`, or else the segment after the last `/`
/// (or `:` for IRIs with neither).
pub fn short_name(iri: &str) -> &str {
    if let Some(pos) = iri.rfind('#') {
        &iri[pos + 1..]
    } else if let Some(pos) = iri.rfind('/') {
        &iri[pos + 1..]
    } else if let Some(pos) = iri.rfind(':') {
        &iri[pos + 1..]
    } else {
        iri
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Lower,
    Upper,
    Digit,
    Other,
}

fn char_class(c: char) -> CharClass {
    if c.is_numeric() {
        CharClass::Digit
    } else if c.is_uppercase() {
        CharClass::Upper
    } else if c.is_alphabetic() {
        CharClass::Lower
    } else {
        CharClass::Other
    }
}

/// Splits an identifier into lowercase words on camelCase, acronym,
/// digit/letter and punctuation boundaries: `HTTPServer2go` → http, server,
/// 2, go.
pub fn split_words(name: &str) -> Vec<String> {
    use CharClass::*;
    let chars: Vec<char> = name.chars().collect();
    let mut words = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let class = char_class(c);
        if class == Other {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            continue;
        }
        if let Some(&prev) = i.checked_sub(1).and_then(|p| chars.get(p)) {
            let prev_class = char_class(prev);
            let next_lower = chars.get(i + 1).map(|&n| char_class(n) == Lower) == Some(true);
            let boundary = match (prev_class, class) {
                (Lower, Upper) => true,
                (Upper, Upper) => next_lower,
                (Digit, Lower | Upper) | (Lower | Upper, Digit) => true,
                _ => false,
            };
            if boundary && !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
        }
        current.extend(c.to_lowercase());
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

pub fn render_text(index: &EntityIndex, entity: usize) -> Result<EntityText> {
    let rec = index
        .record(entity)
        .ok_or_else(|| Error::Invalid(format!("entity index {entity} out of range")))?;
    let name_words = split_words(short_name(&rec.iri));
    if name_words.is_empty() {
        return Err(Error::Invalid(format!("empty short name: {}", rec.iri)));
    }
    Ok(EntityText {
        iri: rec.iri.clone(),
        name_words,
        comment: rec.comment.clone(),
    })
}

pub fn render_all(index: &EntityIndex) -> Result<Vec<EntityText>> {
    (0..index.len()).map(|i| render_text(index, i)).collect()
}

#[derive(Serialize, Deserialize)]
struct TextRow<'a> {
    iri: &'a str,
    name: String,
    comment: Option<&'a str>,
}

/// Text export consumed by embedding providers: one JSON object per line.
pub fn write_texts(texts: &[EntityText], mut out: impl Write) -> std::io::Result<()> {
    for t in texts {
        let row = TextRow {
            iri: &t.iri,
            name: t.name_words.join(" "),
            comment: t.comment.as_deref(),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_texts(path: impl AsRef<Path>) -> Result<Vec<EntityText>> {
    #[derive(Deserialize)]
    struct Row {
        iri: String,
        name: String,
        comment: Option<String>,
    }
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut texts = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line)
            .map_err(|e| Error::format(path.display().to_string(), format!("line {}: {e}", n + 1)))?;
        texts.push(EntityText {
            iri: row.iri,
            name_words: row.name.split_whitespace().map(str::to_owned).collect(),
            comment: row.comment,
        });
    }
    Ok(texts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub provider: String,
    pub dim: usize,
    pub pooling: String,
}

/// Per-entity vectors of one fixed dimension. Values are stored as 32-bit
/// floats, the precision of the file format.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    provider: String,
    dim: usize,
    iris: Vec<String>,
    vectors: Vec<Vec<f32>>,
    by_iri: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(provider: impl Into<String>, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingTable {
            provider: provider.into(),
            dim,
            iris: Vec::new(),
            vectors: Vec::new(),
            by_iri: HashMap::new(),
        }
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.iris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iris.is_empty()
    }

    pub fn insert(&mut self, iri: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let iri = iri.into();
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector for {iri} has {} entries, table dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite entry in vector for {iri}")));
        }
        if self.by_iri.contains_key(&iri) {
            return Err(Error::Invalid(format!("duplicate IRI {iri}")));
        }
        self.by_iri.insert(iri.clone(), self.iris.len());
        self.iris.push(iri);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn get(&self, iri: &str) -> Option<&[f32]> {
        self.by_iri.get(iri).map(|&i| self.vectors[i].as_slice())
    }

    /// Like [`get`](Self::get), but a missing entry is an error.
    pub fn require(&self, iri: &str) -> Result<&[f32]> {
        self.get(iri).ok_or_else(|| Error::MissingEmbedding(iri.to_owned()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.iris
            .iter()
            .zip(&self.vectors)
            .map(|(i, v)| (i.as_str(), v.as_slice()))
    }

    pub fn manifest(&self) -> EmbeddingManifest {
        EmbeddingManifest {
            provider: self.provider.clone(),
            dim: self.dim,
            pooling: POOLING.to_owned(),
        }
    }

    /// JSONL: manifest line, then `{"iri": .., "vector": [..]}` rows with
    /// nine significant digits per entry.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &self.manifest())?;
        out.write_all(b"\n")?;
        for (iri, v) in self.iter() {
            out.write_all(b"{\"iri\":")?;
            serde_json::to_writer(&mut out, iri)?;
            out.write_all(b",\"vector\":[")?;
            for (k, x) in v.iter().enumerate() {
                if k > 0 {
                    out.write_all(b",")?;
                }
                write!(out, "{}", format_f32(*x))?;
            }
            out.write_all(b"]}\n")?;
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses the JSONL format. Row numbers in errors count data lines only,
    /// starting at 1 after the manifest.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            iri: String,
            vector: Vec<f64>,
        }
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let manifest: EmbeddingManifest = lines
            .next()
            .ok_or_else(|| Error::format(file, "missing manifest line"))
            .and_then(|l| serde_json::from_str(l).map_err(|e| Error::format(file, format!("bad manifest: {e}"))))?;
        if manifest.dim == 0 {
            return Err(Error::format(file, "manifest dim must be positive"));
        }
        let mut table = EmbeddingTable::new(manifest.provider, manifest.dim);
        for (n, line) in lines.enumerate() {
            let row_no = n + 1;
            let row: Row =
                serde_json::from_str(line).map_err(|e| Error::format(file, format!("line {row_no}: {e}")))?;
            if row.vector.len() != table.dim {
                return Err(Error::format(
                    file,
                    format!(
                        "dim mismatch line {row_no}: expected {}, found {}",
                        table.dim,
                        row.vector.len()
                    ),
                ));
            }
            let vector: Vec<f32> = row.vector.iter().map(|&x| x as f32).collect();
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::format(file, format!("non-finite line {row_no}")));
            }
            if table.by_iri.contains_key(&row.iri) {
                return Err(Error::format(file, format!("duplicate IRI line {row_no}: {}", row.iri)));
            }
            table.insert(row.iri, vector)?;
        }
        Ok(table)
    }
}

/// Nine significant digits: enough to round-trip any f32.
fn format_f32(x: f32) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    format!("{x:.8e}")
}

/// Deterministic unit vector for a word, keyed by (word, seed).
fn word_vector(word: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(word.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn mean_of(words: &[&str], dim: usize, seed: u64) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for w in words {
        for (a, x) in acc.iter_mut().zip(word_vector(w, dim, seed)) {
            *a += x;
        }
    }
    let n = words.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Rounds to f32 without increasing magnitude, so pooled unit-vector means
/// keep norm ≤ 1 after narrowing.
fn narrow_toward_zero(x: f64) -> f32 {
    let f = x as f32;
    if f != 0.0 && (f as f64).abs() > x.abs() {
        f32::from_bits(f.to_bits() - 1)
    } else {
        f
    }
}

/// Hash-based stand-in for a language model. Each word maps to a seeded
/// pseudo-random unit vector; name words and comment words are mean-pooled
/// separately and the two means averaged when a comment is present.
pub fn pseudo_embed(texts: &[EntityText], dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    let mut table = EmbeddingTable::new(format!("pseudo:seed={seed}"), dim);
    for t in texts {
        let name: Vec<&str> = t.name_words.iter().map(String::as_str).collect();
        if name.is_empty() {
            return Err(Error::Invalid(format!("no name words for {}", t.iri)));
        }
        let comment: Vec<&str> = t
            .comment
            .as_deref()
            .map(|c| c.split_whitespace().collect())
            .unwrap_or_default();
        let mut v = mean_of(&name, dim, seed);
        if !comment.is_empty() {
            let c = mean_of(&comment, dim, seed);
            v.iter_mut().zip(c).for_each(|(a, b)| *a = 0.5 * (*a + b));
        }
        table.insert(t.iri.clone(), v.into_iter().map(narrow_toward_zero).collect())?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(iri: &str) -> Vec<String> {
        split_words(short_name(iri))
    }

    #[test]
    fn short_name_splitting() {
        assert_eq!(words("http://ex.org/dul#PhysicalObject"), ["physical", "object"]);
        assert_eq!(words("http://schema.org/startDate"), ["start", "date"]);
        assert_eq!(words("http://ex.org/has_part-2"), ["has", "part", "2"]);
        assert_eq!(words("http://ex.org/HTTPServer2go"), ["http", "server", "2", "go"]);
        assert_eq!(words("http://ex.org/a/ISBN"), ["isbn"]);
        assert_eq!(words("urn:x:Thing"), ["thing"]);
    }

    #[test]
    fn empty_short_name_is_an_error() {
        let mut ix = EntityIndex::new();
        ix.intern("http://ex.org/onto#", None, None);
        ix.intern("http://ex.org/onto/", None, None);
        ix.intern("http://ex.org/A", None, Some("an a"));
        assert!(render_text(&ix, 0).is_err());
        assert!(render_text(&ix, 1).is_err());
        let t = render_text(&ix, 2).unwrap();
        assert_eq!(t.name_words, ["a"]);
        assert_eq!(t.comment.as_deref(), Some("an a"));
        assert!(render_text(&ix, 3).is_err());
    }

    fn text(iri: &str, words: &[&str], comment: Option<&str>) -> EntityText {
        EntityText {
            iri: iri.into(),
            name_words: words.iter().map(|w| w.to_string()).collect(),
            comment: comment.map(str::to_owned),
        }
    }

    #[test]
    fn pseudo_embed_is_deterministic() {
        let texts = vec![text("http://ex.org/A", &["a", "b"], Some("x y"))];
        assert_eq!(pseudo_embed(&texts, 8, 3).unwrap(), pseudo_embed(&texts, 8, 3).unwrap());
        assert_ne!(
            pseudo_embed(&texts, 8, 3).unwrap().get("http://ex.org/A"),
            pseudo_embed(&texts, 8, 4).unwrap().get("http://ex.org/A")
        );
    }

    #[test]
    fn pooling_without_comment_is_name_mean() {
        let t = pseudo_embed(&[text("http://ex.org/A", &["start", "date"], None)], 6, 0).unwrap();
        let (s, d) = (word_vector("start", 6, 0), word_vector("date", 6, 0));
        for (k, x) in t.get("http://ex.org/A").unwrap().iter().enumerate() {
            assert!((*x as f64 - (s[k] + d[k]) / 2.0).abs() < 1e-7);
        }
    }

    #[test]
    fn pooling_with_comment_averages_both_means() {
        let t = pseudo_embed(&[text("http://ex.org/A", &["has", "part"], Some("whole  of"))], 5, 9).unwrap();
        let v = |w| word_vector(w, 5, 9);
        let (h, p, w, o) = (v("has"), v("part"), v("whole"), v("of"));
        for (k, x) in t.get("http://ex.org/A").unwrap().iter().enumerate() {
            let name = (h[k] + p[k]) / 2.0;
            let comment = (w[k] + o[k]) / 2.0;
            assert!((*x as f64 - (name + comment) / 2.0).abs() < 1e-7);
        }
    }

    #[test]
    fn word_vectors_are_unit_length() {
        for w in ["a", "entity", "ünïcode"] {
            let n: f64 = word_vector(w, 17, 1).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn load_rejects_bad_tables() {
        let manifest = r#"{"provider":"p","dim":4,"pooling":"mean-name-comment"}"#;
        let ok = format!("{manifest}\n{{\"iri\":\"a\",\"vector\":[1,2,3,4]}}\n");
        assert_eq!(EmbeddingTable::parse(&ok, "f").unwrap().dim(), 4);

        let mismatch =
            format!("{manifest}\n{{\"iri\":\"a\",\"vector\":[1,2,3,4]}}\n{{\"iri\":\"b\",\"vector\":[1,2,3,4,5]}}\n");
        let err = EmbeddingTable::parse(&mismatch, "f").unwrap_err().to_string();
        assert!(err.contains("dim mismatch line 2"), "{err}");

        let huge = format!("{manifest}\n{{\"iri\":\"a\",\"vector\":[1,2,3,1e300]}}\n");
        let err = EmbeddingTable::parse(&huge, "f").unwrap_err().to_string();
        assert!(err.contains("non-finite line 1"), "{err}");

        let dup =
            format!("{manifest}\n{{\"iri\":\"a\",\"vector\":[1,2,3,4]}}\n{{\"iri\":\"a\",\"vector\":[1,2,3,4]}}\n");
        let err = EmbeddingTable::parse(&dup, "f").unwrap_err().to_string();
        assert!(err.contains("duplicate IRI line 2"), "{err}");

        let nan = format!("{manifest}\n{{\"iri\":\"a\",\"vector\":[1,2,3,NaN]}}\n");
        assert!(EmbeddingTable::parse(&nan, "f").is_err());
    }

    #[test]
    fn missing_embedding_is_detectable() {
        let t = EmbeddingTable::new("p", 2);
        assert!(matches!(t.require("http://ex.org/Z"), Err(Error::MissingEmbedding(_))));
    }

    #[test]
    fn text_export_round_trip() {
        let texts = vec![
            text("http://ex.org/A", &["physical", "object"], Some("a \"thing\"")),
            text("http://ex.org/B", &["b"], None),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("texts.jsonl");
        let mut buf = Vec::new();
        write_texts(&texts, &mut buf).unwrap();
        let first = String::from_utf8(buf.clone()).unwrap();
        assert!(first.starts_with(r#"{"iri":"http://ex.org/A","name":"physical object","comment":"a \"thing\""}"#));
        assert!(first.contains(r#""comment":null"#));
        fs::write(&path, buf).unwrap();
        assert_eq!(read_texts(&path).unwrap(), texts);
    }

    proptest! {
        #[test]
        fn table_round_trips_exactly(
            rows in prop::collection::vec(prop::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), 3), 0..8)
        ) {
            let mut t = EmbeddingTable::new("prop", 3);
            for (i, v) in rows.into_iter().enumerate() {
                t.insert(format!("http://ex.org/e{i}"), v).unwrap();
            }
            let mut buf = Vec::new();
            t.write_to(&mut buf).unwrap();
            let back = EmbeddingTable::parse(std::str::from_utf8(&buf).unwrap(), "t").unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn pseudo_vectors_have_norm_at_most_one(
            name in prop::collection::vec("[a-z]{1,5}", 1..5),
            comment in prop::option::of("[a-z ]{0,30}"),
            dim in 1usize..24,
            seed in any::<u64>(),
        ) {
            let t = EntityText { iri: "http://ex.org/x".into(), name_words: name, comment };
            let table = pseudo_embed(&[t], dim, seed).unwrap();
            let v = table.get("http://ex.org/x").unwrap();
            let norm: f64 = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
            prop_assert!(norm <= 1.0 + 1e-9, "norm {}", norm);
        }
    }
}
