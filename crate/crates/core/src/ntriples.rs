//! Line-oriented N-Triples reader.
//!
//! Only the parts of an ontology that feed relation extraction matter here:
//! each statement is parsed, then classified by its predicate against the
//! RDFS/OWL vocabulary. Malformed lines are collected rather than aborting
//! the read, up to a cap.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::par::*;

pub mod vocab {
    pub const RDFS_SUB_CLASS_OF: &str = "http://www.w3.org/2000/01/rdf-schema#subClassOf";
    pub const RDFS_SUB_PROPERTY_OF: &str = "http://www.w3.org/2000/01/rdf-schema#subPropertyOf";
    pub const RDFS_DOMAIN: &str = "http://www.w3.org/2000/01/rdf-schema#domain";
    pub const RDFS_RANGE: &str = "http://www.w3.org/2000/01/rdf-schema#range";
    pub const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";
    pub const RDFS_COMMENT: &str = "http://www.w3.org/2000/01/rdf-schema#comment";
    pub const OWL_DISJOINT_WITH: &str = "http://www.w3.org/2002/07/owl#disjointWith";
    pub const OWL_SAME_AS: &str = "http://www.w3.org/2002/07/owl#sameAs";
    pub const OWL_EQUIVALENT_CLASS: &str = "http://www.w3.org/2002/07/owl#equivalentClass";
    pub const OWL_EQUIVALENT_PROPERTY: &str = "http://www.w3.org/2002/07/owl#equivalentProperty";
}

pub const DEFAULT_ERROR_CAP: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Literal {
    pub lexical: String,
    /// Lowercased language tag, if any.
    pub lang: Option<String>,
    pub datatype: Option<String>,
}

impl Literal {
    pub fn plain(lexical: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            lang: None,
            datatype: None,
        }
    }

    pub fn lang(lexical: impl Into<String>, lang: &str) -> Self {
        Literal {
            lexical: lexical.into(),
            lang: Some(lang.to_ascii_lowercase()),
            datatype: None,
        }
    }

    /// Untagged, `en` and `en-*` literals count as English.
    pub fn is_english(&self) -> bool {
        match self.lang.as_deref() {
            None => true,
            Some(tag) => tag == "en" || tag.starts_with("en-"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Iri(String),
    Blank(String),
    Literal(Literal),
}

impl Term {
    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(iri) => Some(iri),
            _ => None,
        }
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, Term::Blank(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Triple {
    /// Always an IRI or a blank node.
    pub subject: Term,
    pub predicate: String,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: impl Into<String>, object: Term) -> Self {
        Triple {
            subject,
            predicate: predicate.into(),
            object,
        }
    }

    pub fn iris(subject: &str, predicate: &str, object: &str) -> Self {
        Triple::new(Term::Iri(subject.to_owned()), predicate, Term::Iri(object.to_owned()))
    }

    pub fn has_blank_node(&self) -> bool {
        self.subject.is_blank() || self.object.is_blank()
    }

    /// Canonical single-line N-Triples form, without trailing newline.
    pub fn to_ntriples(&self) -> String {
        let mut out = String::new();
        write_term(&mut out, &self.subject);
        out.push(' ');
        write_iri(&mut out, &self.predicate);
        out.push(' ');
        write_term(&mut out, &self.object);
        out.push_str(" .");
        out
    }
}

fn write_iri(out: &mut String, iri: &str) {
    out.push('<');
    for c in iri.chars() {
        match c {
            '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\' | '\u{0}'..='\u{20}' => {
                out.push_str(&format!("\\u{:04X}", c as u32))
            }
            _ => out.push(c),
        }
    }
    out.push('>');
}

fn write_term(out: &mut String, term: &Term) {
    match term {
        Term::Iri(iri) => write_iri(out, iri),
        Term::Blank(label) => {
            out.push_str("_:");
            out.push_str(label);
        }
        Term::Literal(lit) => {
            out.push('"');
            for c in lit.lexical.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\r' => out.push_str("\\r"),
                    '\t' => out.push_str("\\t"),
                    _ => out.push(c),
                }
            }
            out.push('"');
            if let Some(lang) = &lit.lang {
                out.push('@');
                out.push_str(lang);
            } else if let Some(dt) = &lit.datatype {
                out.push_str("^^");
                write_iri(out, dt);
            }
        }
    }
}

/// What a statement contributes, decided by exact predicate match.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StatementKind {
    SubClassOf,
    SubPropertyOf,
    Domain,
    Range,
    DisjointWith,
    SameAs,
    EquivalentClass,
    EquivalentProperty,
    Label,
    Comment,
    Other,
}

impl StatementKind {
    /// True for the kinds that assert a stated relation between two entities.
    pub fn is_relation(self) -> bool {
        !matches!(
            self,
            StatementKind::Label | StatementKind::Comment | StatementKind::Other
        )
    }
}

pub fn classify(triple: &Triple) -> StatementKind {
    classify_predicate(&triple.predicate)
}

pub fn classify_predicate(predicate: &str) -> StatementKind {
    use vocab::*;
    match predicate {
        RDFS_SUB_CLASS_OF => StatementKind::SubClassOf,
        RDFS_SUB_PROPERTY_OF => StatementKind::SubPropertyOf,
        RDFS_DOMAIN => StatementKind::Domain,
        RDFS_RANGE => StatementKind::Range,
        OWL_DISJOINT_WITH => StatementKind::DisjointWith,
        OWL_SAME_AS => StatementKind::SameAs,
        OWL_EQUIVALENT_CLASS => StatementKind::EquivalentClass,
        OWL_EQUIVALENT_PROPERTY => StatementKind::EquivalentProperty,
        RDFS_LABEL => StatementKind::Label,
        RDFS_COMMENT => StatementKind::Comment,
        _ => StatementKind::Other,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based line number.
    pub line: usize,
    /// 0-based byte offset within the line.
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, byte {}: {}", self.line, self.offset, self.message)
    }
}

impl std::error::Error for ParseError {}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, at: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            offset: at,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t')) {
            self.pos += 1;
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn hex_escape(&mut self, digits: usize, start: usize) -> Result<char, ParseError> {
        let end = self.pos + digits;
        let hex = self
            .src
            .get(self.pos..end)
            .filter(|h| h.bytes().all(|b| b.is_ascii_hexdigit()))
            .ok_or_else(|| self.err(start, "bad unicode escape"))?;
        let code = u32::from_str_radix(hex, 16).map_err(|_| self.err(start, "bad unicode escape"))?;
        self.pos = end;
        char::from_u32(code).ok_or_else(|| self.err(start, "escape is not a scalar value"))
    }

    fn iri(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        if !self.eat('<') {
            return Err(self.err(start, "expected IRI"));
        }
        let mut out = String::new();
        loop {
            let at = self.pos;
            match self.bump() {
                None => return Err(self.err(start, "unterminated IRI")),
                Some('>') => break,
                Some('\\') => match self.bump() {
                    Some('u') => out.push(self.hex_escape(4, at)?),
                    Some('U') => out.push(self.hex_escape(8, at)?),
                    _ => return Err(self.err(at, "bad escape in IRI")),
                },
                Some(c @ ('<' | '"' | '{' | '}' | '|' | '^' | '`' | '\u{0}'..='\u{20}')) => {
                    return Err(self.err(at, format!("character {c:?} not allowed in IRI")))
                }
                Some(c) => out.push(c),
            }
        }
        if !out.contains(':') {
            return Err(self.err(start, "relative IRI"));
        }
        Ok(out)
    }

    fn blank(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        if !(self.eat('_') && self.eat(':')) {
            return Err(self.err(start, "expected blank node"));
        }
        let label_start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | '.') {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        // a trailing '.' belongs to the statement terminator
        while self.src[label_start..self.pos].ends_with('.') {
            self.pos -= 1;
        }
        if self.pos == label_start {
            return Err(self.err(start, "empty blank node label"));
        }
        Ok(self.src[label_start..self.pos].to_owned())
    }

    fn subject(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Some('<') => self.iri().map(Term::Iri),
            Some('_') => self.blank().map(Term::Blank),
            _ => Err(self.err(self.pos, "expected subject")),
        }
    }

    fn object(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Some('<') => self.iri().map(Term::Iri),
            Some('_') => self.blank().map(Term::Blank),
            Some('"') => self.literal().map(Term::Literal),
            _ => Err(self.err(self.pos, "expected object")),
        }
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let start = self.pos;
        self.eat('"');
        let mut lexical = String::new();
        loop {
            let at = self.pos;
            match self.bump() {
                None => return Err(self.err(start, "unterminated literal")),
                Some('"') => break,
                Some('\\') => {
                    let c = match self.bump() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u') => self.hex_escape(4, at)?,
                        Some('U') => self.hex_escape(8, at)?,
                        _ => return Err(self.err(at, "bad escape in literal")),
                    };
                    lexical.push(c);
                }
                Some(c) => lexical.push(c),
            }
        }
        let mut lit = Literal::plain(lexical);
        if self.eat('@') {
            let tag_start = self.pos;
            while let Some(c) = self.peek() {
                if c.is_ascii_alphanumeric() || c == '-' {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            let tag = &self.src[tag_start..self.pos];
            let valid = !tag.is_empty()
                && tag.split('-').enumerate().all(|(i, part)| {
                    !part.is_empty()
                        && if i == 0 {
                            part.bytes().all(|b| b.is_ascii_alphabetic())
                        } else {
                            part.bytes().all(|b| b.is_ascii_alphanumeric())
                        }
                });
            if !valid {
                return Err(self.err(tag_start, "bad language tag"));
            }
            lit.lang = Some(tag.to_ascii_lowercase());
        } else if self.src[self.pos..].starts_with("^^") {
            self.pos += 2;
            lit.datatype = Some(self.iri()?);
        }
        Ok(lit)
    }
}

/// Parses one physical line. `Ok(None)` marks blank and comment lines.
pub fn parse_line(line: &str, line_no: usize) -> Result<Option<Triple>, ParseError> {
    let mut cur = Cursor {
        src: line.trim_end_matches(['\r', '\n']),
        pos: 0,
        line: line_no,
    };
    cur.skip_ws();
    if cur.at_end() || cur.peek() == Some('#') {
        return Ok(None);
    }
    let subject = cur.subject()?;
    cur.skip_ws();
    let predicate = cur.iri()?;
    cur.skip_ws();
    let object = cur.object()?;
    cur.skip_ws();
    if !cur.eat('.') {
        return Err(cur.err(cur.pos, "expected '.'"));
    }
    cur.skip_ws();
    if !cur.at_end() && cur.peek() != Some('#') {
        return Err(cur.err(cur.pos, "trailing content after '.'"));
    }
    Ok(Some(Triple {
        subject,
        predicate,
        object,
    }))
}

#[derive(Clone, Debug)]
pub struct IngestOptions {
    /// Collected per-line errors beyond this count make the read fatal.
    pub error_cap: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            error_cap: DEFAULT_ERROR_CAP,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestSummary {
    /// Physical lines read.
    pub lines: usize,
    /// Lines that were neither blank nor comments.
    pub statements: usize,
    /// Triples emitted.
    pub triples: usize,
    /// Relation statements touching a blank node. They are emitted but take
    /// no part in relation extraction.
    pub blank_node_statements: usize,
    pub errors: Vec<ParseError>,
}

#[derive(Clone, Debug, Default)]
pub struct Ingested {
    pub triples: Vec<(Triple, StatementKind)>,
    pub summary: IngestSummary,
}

/// Shared post-parse step of the sequential and chunked readers.
fn accept(
    parsed: Result<Option<Triple>, ParseError>,
    raw_line: &str,
    opts: &IngestOptions,
    summary: &mut IngestSummary,
) -> Result<Option<(Triple, StatementKind)>> {
    summary.lines += 1;
    let outcome = match parsed {
        Ok(None) => return Ok(None),
        Ok(Some(t)) => {
            let kind = classify(&t);
            if kind.is_relation() && matches!(t.object, Term::Literal(_)) {
                let offset = raw_line.rfind('"').unwrap_or(0);
                Err(ParseError {
                    line: summary.lines,
                    offset,
                    message: "literal object for relation predicate".into(),
                })
            } else {
                Ok((t, kind))
            }
        }
        Err(e) => Err(e),
    };
    summary.statements += 1;
    match outcome {
        Ok((t, kind)) => {
            if kind.is_relation() && t.has_blank_node() {
                summary.blank_node_statements += 1;
            }
            summary.triples += 1;
            Ok(Some((t, kind)))
        }
        Err(e) => {
            summary.errors.push(e);
            if summary.errors.len() > opts.error_cap {
                return Err(Error::TooManyErrors {
                    count: summary.errors.len(),
                    cap: opts.error_cap,
                    last: summary.errors.last().cloned().unwrap(),
                });
            }
            Ok(None)
        }
    }
}

fn decode_line(bytes: &[u8], line_no: usize) -> (String, Result<(), ParseError>) {
    match std::str::from_utf8(bytes) {
        Ok(s) => (s.to_owned(), Ok(())),
        Err(e) => (
            String::from_utf8_lossy(bytes).into_owned(),
            Err(ParseError {
                line: line_no,
                offset: e.valid_up_to(),
                message: "invalid UTF-8".into(),
            }),
        ),
    }
}

fn parse_raw(bytes: &[u8], line_no: usize) -> Result<Option<Triple>, ParseError> {
    let (text, utf8) = decode_line(bytes, line_no);
    utf8?;
    parse_line(&text, line_no)
}

/// Parses a whole in-memory document. Lines are parsed in parallel and the
/// results are presented in file order.
pub fn ingest_bytes(data: &[u8], opts: &IngestOptions) -> Result<Ingested> {
    let mut lines: Vec<&[u8]> = data.split(|&b| b == b'\n').collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    let parsed: Vec<Result<Option<Triple>, ParseError>> = lines
        .par_iter()
        .enumerate()
        .map(|(i, raw)| parse_raw(raw, i + 1))
        .collect();

    let mut out = Ingested::default();
    for (parsed, raw) in parsed.into_iter().zip(&lines) {
        let raw = String::from_utf8_lossy(raw);
        if let Some(item) = accept(parsed, &raw, opts, &mut out.summary)? {
            out.triples.push(item);
        }
    }
    Ok(out)
}

pub fn ingest_file(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<Ingested> {
    let path = path.as_ref();
    let mut data = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path, e))?;
    ingest_bytes(&data, opts)
}

/// Streaming reader over any buffered source; yields classified triples in
/// file order and keeps a running [`IngestSummary`].
pub struct TripleReader<R> {
    reader: R,
    opts: IngestOptions,
    summary: IngestSummary,
    buf: Vec<u8>,
    done: bool,
}

impl<R: BufRead> TripleReader<R> {
    pub fn new(reader: R, opts: IngestOptions) -> Self {
        TripleReader {
            reader,
            opts,
            summary: IngestSummary::default(),
            buf: Vec::new(),
            done: false,
        }
    }

    pub fn summary(&self) -> &IngestSummary {
        &self.summary
    }

    pub fn into_summary(self) -> IngestSummary {
        self.summary
    }
}

impl TripleReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>, opts: IngestOptions) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(TripleReader::new(BufReader::new(file), opts))
    }
}

impl<R: BufRead> Iterator for TripleReader<R> {
    type Item = Result<(Triple, StatementKind)>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => self.done = true,
                Ok(_) => {
                    if self.buf.last() == Some(&b'\n') {
                        self.buf.pop();
                    }
                    let line_no = self.summary.lines + 1;
                    let parsed = parse_raw(&self.buf, line_no);
                    let raw = String::from_utf8_lossy(&self.buf).into_owned();
                    match accept(parsed, &raw, &self.opts, &mut self.summary) {
                        Ok(Some(item)) => return Some(Ok(item)),
                        Ok(None) => {}
                        Err(e) => {
                            self.done = true;
                            return Some(Err(e));
                        }
                    }
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::io("<stream>", e)));
                }
            }
        }
        None
    }
}
