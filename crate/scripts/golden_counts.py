#!/usr/bin/env python3
"""Independent relation-count oracle for small N-Triples ontologies.

Reads an N-Triples file with a deliberately naive regex parser, extracts the
stated relations, saturates the inference rules by brute force (re-applying
every rule to every candidate tuple until nothing changes) and prints the
20-row counts table in the same TSV layout as `ontorel materialize`.

This script shares no code with the Rust engine; it is the source of the
committed golden file crates/core/tests/fixtures/tiny.counts.tsv.

    python3 scripts/golden_counts.py crates/core/tests/fixtures/tiny.nt
"""
import itertools
import re
import sys

RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"

KINDS = [
    ("SbC", "subclass"),
    ("SpC", "superclass"),
    ("SbP", "subproperty"),
    ("SpP", "superproperty"),
    ("HD", "has domain"),
    ("DO", "is domain of"),
    ("HR", "has range"),
    ("RO", "is range of"),
    ("DW", "disjoint with"),
    ("SA", "same as"),
    ("E", "equivalent"),
    ("ISbC", "inferred subclass"),
    ("ISpC", "inferred superclass"),
    ("IE", "inferred equivalent"),
    ("ISbP", "inferred subproperty"),
    ("ISpP", "inferred superproperty"),
    ("IRO", "in the range of"),
    ("IHR", "inferred has range"),
    ("IDO", "in the domain of"),
    ("IHD", "inferred has domain"),
]

LINE = re.compile(r'^\s*(<[^>]*>|_:\S+)\s+<([^>]*)>\s+(<[^>]*>|_:\S+|".*)\s*\.\s*$')


def parse(path):
    stated = {code: set() for code, _ in KINDS}
    for raw in open(path, encoding="utf-8"):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = LINE.match(line)
        if not m:
            continue
        s, p, o = m.groups()
        if not (s.startswith("<") and o.startswith("<")):
            continue
        s, o = s[1:-1], o[1:-1]
        if p == RDFS + "subClassOf":
            stated["SbC"].add((s, o))
            stated["SpC"].add((o, s))
        elif p == RDFS + "subPropertyOf":
            stated["SbP"].add((s, o))
            stated["SpP"].add((o, s))
        elif p == RDFS + "domain":
            stated["HD"].add((s, o))
            stated["DO"].add((o, s))
        elif p == RDFS + "range":
            stated["HR"].add((s, o))
            stated["RO"].add((o, s))
        elif p == OWL + "disjointWith":
            stated["DW"].update({(s, o), (o, s)})
        elif p == OWL + "sameAs":
            stated["SA"].update({(s, o), (o, s)})
        elif p in (OWL + "equivalentClass", OWL + "equivalentProperty"):
            stated["E"].update({(s, o), (o, s)})
    return stated


def saturate(rel):
    nodes = set()
    for pairs in rel.values():
        for a, b in pairs:
            nodes.update((a, b))
    nodes = sorted(nodes)

    def step():
        changed = False

        def add(code, pair):
            nonlocal changed
            if pair not in rel[code]:
                rel[code].add(pair)
                changed = True

        for a, b in list(rel["SbC"]):
            if a != b:
                add("ISbC", (a, b))
        for a, b in list(rel["SbP"]):
            if a != b:
                add("ISbP", (a, b))
        for a, b in list(rel["E"]):
            if a != b:
                add("IE", (a, b))
        for p, c in list(rel["HD"]):
            add("IHD", (p, c))
        for p, c in list(rel["HR"]):
            add("IHR", (p, c))
        for a, b, c in itertools.product(nodes, repeat=3):
            if a != c:
                if (a, b) in rel["ISbC"] and (b, c) in rel["ISbC"]:
                    add("ISbC", (a, c))
                if (a, b) in rel["ISbP"] and (b, c) in rel["ISbP"]:
                    add("ISbP", (a, c))
                if (a, b) in rel["IE"] and (b, c) in rel["IE"]:
                    add("IE", (a, c))
        for a, b in list(rel["IE"]):
            add("IE", (b, a))
        for a, b in list(rel["ISbC"]):
            add("ISpC", (b, a))
        for a, b in list(rel["ISbP"]):
            add("ISpP", (b, a))
        for dom, inf, inv in (("HD", "IHD", "IDO"), ("HR", "IHR", "IRO")):
            for p, c in list(rel[inf]):
                add(inv, (c, p))
                for x in nodes:
                    if (c, x) in rel["ISbC"]:
                        add(inf, (p, x))
                    if (x, p) in rel["ISbP"]:
                        add(inf, (x, c))
                    if (x, c) in rel["ISbC"]:
                        add(inv, (x, p))
        return changed

    while step():
        pass
    return rel


def main():
    rel = saturate(parse(sys.argv[1]))
    out = ["code\trelation\tcount"]
    for code, name in KINDS:
        out.append(f"{code}\t{name}\t{len(rel[code])}")
    sys.stdout.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
