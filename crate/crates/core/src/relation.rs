//! The twenty ontological relations and their bit-packed set representation.

use std::fmt;
use std::str::FromStr;

pub const NUM_RELATIONS: usize = 20;

/// One of the twenty relation kinds. The discriminant is the bit position in
/// a [`RelationMask`] and is part of every serialized format, so it must never
/// change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum RelationKind {
    SubClass = 0,
    SuperClass = 1,
    SubProperty = 2,
    SuperProperty = 3,
    HasDomain = 4,
    DomainOf = 5,
    HasRange = 6,
    RangeOf = 7,
    DisjointWith = 8,
    SameAs = 9,
    Equivalent = 10,
    InferredSubClass = 11,
    InferredSuperClass = 12,
    InferredEquivalent = 13,
    InferredSubProperty = 14,
    InferredSuperProperty = 15,
    InRangeOf = 16,
    InferredHasRange = 17,
    InDomainOf = 18,
    InferredHasDomain = 19,
}

use RelationKind::*;

impl RelationKind {
    pub const ALL: [RelationKind; NUM_RELATIONS] = [
        SubClass,
        SuperClass,
        SubProperty,
        SuperProperty,
        HasDomain,
        DomainOf,
        HasRange,
        RangeOf,
        DisjointWith,
        SameAs,
        Equivalent,
        InferredSubClass,
        InferredSuperClass,
        InferredEquivalent,
        InferredSubProperty,
        InferredSuperProperty,
        InRangeOf,
        InferredHasRange,
        InDomainOf,
        InferredHasDomain,
    ];

    /// Relations asserted directly from statements (bits 0–10).
    pub const STATED: [RelationKind; 11] = [
        SubClass,
        SuperClass,
        SubProperty,
        SuperProperty,
        HasDomain,
        DomainOf,
        HasRange,
        RangeOf,
        DisjointWith,
        SameAs,
        Equivalent,
    ];

    pub fn bit(self) -> usize {
        self as usize
    }

    pub fn from_bit(bit: usize) -> Option<RelationKind> {
        Self::ALL.get(bit).copied()
    }

    /// Short code used in reports and dataset files.
    pub fn code(self) -> &'static str {
        match self {
            SubClass => "SbC",
            SuperClass => "SpC",
            SubProperty => "SbP",
            SuperProperty => "SpP",
            HasDomain => "HD",
            DomainOf => "DO",
            HasRange => "HR",
            RangeOf => "RO",
            DisjointWith => "DW",
            SameAs => "SA",
            Equivalent => "E",
            InferredSubClass => "ISbC",
            InferredSuperClass => "ISpC",
            InferredEquivalent => "IE",
            InferredSubProperty => "ISbP",
            InferredSuperProperty => "ISpP",
            InRangeOf => "IRO",
            InferredHasRange => "IHR",
            InDomainOf => "IDO",
            InferredHasDomain => "IHD",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            SubClass => "subclass",
            SuperClass => "superclass",
            SubProperty => "subproperty",
            SuperProperty => "superproperty",
            HasDomain => "has domain",
            DomainOf => "is domain of",
            HasRange => "has range",
            RangeOf => "is range of",
            DisjointWith => "disjoint with",
            SameAs => "same as",
            Equivalent => "equivalent",
            InferredSubClass => "inferred subclass",
            InferredSuperClass => "inferred superclass",
            InferredEquivalent => "inferred equivalent",
            InferredSubProperty => "inferred subproperty",
            InferredSuperProperty => "inferred superproperty",
            InRangeOf => "in the range of",
            InferredHasRange => "inferred has range",
            InDomainOf => "in the domain of",
            InferredHasDomain => "inferred has domain",
        }
    }

    pub fn is_inferred(self) -> bool {
        self.bit() > Equivalent.bit()
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for RelationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.code() == s)
            .ok_or_else(|| format!("unknown relation code {s:?}"))
    }
}

/// Set of relation kinds holding for one ordered entity pair. Bit `k` is set
/// iff the relation with bit position `k` holds; 0 means "no relation".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationMask(u32);

impl RelationMask {
    pub const EMPTY: RelationMask = RelationMask(0);
    pub const VALID_BITS: u32 = (1 << NUM_RELATIONS) - 1;

    /// Returns `None` if any of the spare bits 20–31 is set.
    pub fn from_bits(bits: u32) -> Option<Self> {
        (bits & !Self::VALID_BITS == 0).then_some(RelationMask(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, kind: RelationKind) -> bool {
        self.0 & (1 << kind.bit()) != 0
    }

    pub fn insert(&mut self, kind: RelationKind) -> bool {
        let before = self.0;
        self.0 |= 1 << kind.bit();
        before != self.0
    }

    pub fn with(mut self, kind: RelationKind) -> Self {
        self.insert(kind);
        self
    }

    pub fn union(self, other: RelationMask) -> Self {
        RelationMask(self.0 | other.0)
    }

    /// True if every bit of `self` is also set in `other`.
    pub fn is_subset(self, other: RelationMask) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = RelationKind> {
        RelationKind::ALL.into_iter().filter(move |k| self.contains(*k))
    }

    /// Multi-hot 0/1 vector of length 20.
    pub fn to_target(self) -> [f64; NUM_RELATIONS] {
        let mut t = [0.0; NUM_RELATIONS];
        for k in self.iter() {
            t[k.bit()] = 1.0;
        }
        t
    }
}

impl FromIterator<RelationKind> for RelationMask {
    fn from_iter<I: IntoIterator<Item = RelationKind>>(iter: I) -> Self {
        let mut m = RelationMask::EMPTY;
        for k in iter {
            m.insert(k);
        }
        m
    }
}
