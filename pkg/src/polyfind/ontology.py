"""Multilingual ontology model: terms, portions, alignments, persistence.

A portion holds the terms of one (domain, language) pair. Cross-language
links live in an OntologyStore next to the portions. All values are frozen;
mutating operations return updated copies, which is what lets the server
hand out consistent snapshots without locking readers.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .errors import (
    DanglingRelation,
    DuplicateId,
    InvalidIdentifier,
    InvariantViolation,
    MalformedDocument,
    SameLanguage,
    SchemaViolation,
    UnknownTerm,
)
from .textutil import check_identifier, check_language, normalize_text

__all__ = [
    "TermId", "Relation", "Term", "OntologyPortion", "TermRef", "AlignmentLink",
    "OntologyStore", "Violation", "RELATION_KINDS", "ALIGNMENT_RELATIONS",
    "create_portion", "add_term", "add_terms", "add_label", "lookup_label",
    "lookup_label_kinds", "validate_portion", "portion_to_dict", "save_portion",
    "load_portion", "empty_store", "resolve", "require_term", "set_portion",
    "add_alignment", "links_from", "iter_links", "save_alignments", "load_alignments",
]

RELATION_KINDS = ("broader", "narrower", "related")
_INVERSE = {"broader": "narrower", "narrower": "broader"}
ALIGNMENT_RELATIONS = ("exact", "close")

_TERM_ID_RE = re.compile(r"([A-Za-z0-9_-]+)#([A-Za-z0-9_-]+)\Z")


@dataclass(frozen=True, order=True)
class TermId:
    domain: str
    local: str

    def __str__(self) -> str:
        return f"{self.domain}#{self.local}"

    @classmethod
    def parse(cls, text: str) -> "TermId":
        m = _TERM_ID_RE.match(text) if isinstance(text, str) else None
        if not m:
            raise InvalidIdentifier(f"term id {text!r} must look like domain#local")
        return cls(m.group(1), m.group(2))


@dataclass(frozen=True)
class Relation:
    kind: str
    target: TermId

    def __post_init__(self):
        if self.kind not in RELATION_KINDS:
            raise InvariantViolation(f"unknown relation kind {self.kind!r}")


@dataclass(frozen=True)
class Term:
    id: TermId
    preferred_label: str
    alt_labels: tuple[str, ...] = ()
    definition: str | None = None
    relations: tuple[Relation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "alt_labels", tuple(self.alt_labels))
        object.__setattr__(self, "relations", tuple(self.relations))

    def labels(self) -> tuple[str, ...]:
        return (self.preferred_label, *self.alt_labels)


@dataclass(frozen=True)
class OntologyPortion:
    domain: str
    language: str
    version: int
    terms: Mapping[TermId, Term] = field(default_factory=dict)


def create_portion(domain: str, language: str) -> OntologyPortion:
    """New empty portion at version 1."""
    return OntologyPortion(check_identifier(domain, "domain"), check_language(language), 1, {})


def add_term(portion: OntologyPortion, term: Term) -> OntologyPortion:
    return add_terms(portion, [term])


def add_terms(portion: OntologyPortion, terms: Iterable[Term]) -> OntologyPortion:
    """Insert a batch of terms; one version bump for the whole batch.

    Relation targets may point at other members of the batch. Inverse
    broader/narrower edges are materialized on the targets.
    """
    batch = list(terms)
    new_terms: dict[TermId, Term] = dict(portion.terms)
    for term in batch:
        if term.id.domain != portion.domain:
            raise InvalidIdentifier(
                f"term {term.id} does not belong to domain {portion.domain!r}"
            )
        if term.id in new_terms:
            raise DuplicateId(f"term {term.id} already exists")
        new_terms[term.id] = term
    for term in batch:
        for rel in term.relations:
            if rel.target not in new_terms:
                raise DanglingRelation(f"{term.id} -> {rel.kind} -> unknown term {rel.target}")
    for term in batch:
        for rel in term.relations:
            inv = _INVERSE.get(rel.kind)
            if inv is None:
                continue
            target = new_terms[rel.target]
            back = Relation(inv, term.id)
            if back not in target.relations:
                new_terms[rel.target] = replace(target, relations=target.relations + (back,))
    if not batch:
        return portion
    return replace(portion, version=portion.version + 1, terms=new_terms)


def add_label(portion: OntologyPortion, term_id: TermId, label: str) -> OntologyPortion:
    """Append an alternative label. No-op if the label is already present."""
    term = portion.terms.get(term_id)
    if term is None:
        raise UnknownTerm(f"no term {term_id} in {portion.domain}.{portion.language}")
    key = normalize_text(label)
    if not key:
        raise InvariantViolation("label must not normalize to the empty string")
    if any(normalize_text(existing) == key for existing in term.labels()):
        return portion
    new_term = replace(term, alt_labels=term.alt_labels + (label,))
    return replace(
        portion, version=portion.version + 1, terms={**portion.terms, term_id: new_term}
    )


def lookup_label_kinds(portion: OntologyPortion, label: str) -> list[tuple[TermId, str]]:
    """All (term id, preferred|alt) whose label normalizes equal to `label`."""
    key = normalize_text(label)
    if not key:
        return []
    hits: list[tuple[TermId, str]] = []
    for tid in sorted(portion.terms, key=str):
        term = portion.terms[tid]
        if normalize_text(term.preferred_label) == key:
            hits.append((tid, "preferred"))
        elif any(normalize_text(alt) == key for alt in term.alt_labels):
            hits.append((tid, "alt"))
    return hits


def lookup_label(portion: OntologyPortion, label: str) -> list[TermId]:
    return [tid for tid, _ in lookup_label_kinds(portion, label)]


# --- structural validation ---


@dataclass(frozen=True)
class Violation:
    rule: str
    terms: tuple[TermId, ...]
    detail: str

    def __str__(self) -> str:
        names = ", ".join(str(t) for t in self.terms)
        return f"{self.rule}[{names}]: {self.detail}"


def _broader_sccs(portion: OntologyPortion) -> list[list[TermId]]:
    # Tarjan over the broader-edge subgraph; iterative to survive deep chains.
    graph = {
        tid: [r.target for r in term.relations if r.kind == "broader" and r.target in portion.terms]
        for tid, term in portion.terms.items()
    }
    index: dict[TermId, int] = {}
    low: dict[TermId, int] = {}
    on_stack: set[TermId] = set()
    stack: list[TermId] = []
    sccs: list[list[TermId]] = []
    counter = 0
    for root in sorted(graph, key=str):
        if root in index:
            continue
        work = [(root, iter(graph[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(graph[nxt])))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                scc = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    scc.append(member)
                    if member == node:
                        break
                if len(scc) > 1 or any(node in graph[node] for node in scc):
                    sccs.append(sorted(scc, key=str))
    return sccs


def validate_portion(portion: OntologyPortion) -> list[Violation]:
    """Structural checks; returns all violations, empty list when sound."""
    out: list[Violation] = []
    if portion.version < 1:
        out.append(Violation("version", (), f"version {portion.version} must be >= 1"))
    for tid in sorted(portion.terms, key=str):
        term = portion.terms[tid]
        if tid.domain != portion.domain:
            out.append(Violation("term-domain", (tid,), f"domain {tid.domain!r} != portion domain"))
        for label in term.labels():
            if not normalize_text(label):
                out.append(Violation("empty-label", (tid,), f"label {label!r} normalizes to nothing"))
        for rel in term.relations:
            if rel.target == tid:
                out.append(Violation("self-relation", (tid,), f"{rel.kind} points at itself"))
            elif rel.target not in portion.terms:
                out.append(
                    Violation("dangling-relation", (tid, rel.target), f"{rel.kind} target missing")
                )
            else:
                inv = _INVERSE.get(rel.kind)
                if inv and Relation(inv, tid) not in portion.terms[rel.target].relations:
                    out.append(
                        Violation(
                            "missing-inverse",
                            (tid, rel.target),
                            f"{rel.kind} has no {inv} back-edge",
                        )
                    )
    for scc in _broader_sccs(portion):
        out.append(Violation("broader-cycle", tuple(scc), "broader edges form a cycle"))
    out.sort(key=lambda v: (v.rule, tuple(str(t) for t in v.terms), v.detail))
    return out


# --- portion persistence (canonical JSON) ---


def portion_to_dict(portion: OntologyPortion) -> dict:
    return {
        "domain": portion.domain,
        "language": portion.language,
        "version": portion.version,
        "terms": [
            {
                "id": str(term.id),
                "preferred_label": term.preferred_label,
                "alt_labels": list(term.alt_labels),
                "definition": term.definition,
                "relations": [
                    {"kind": r.kind, "target": str(r.target)} for r in term.relations
                ],
            }
            for term in (portion.terms[tid] for tid in sorted(portion.terms, key=str))
        ],
    }


def save_portion(portion: OntologyPortion) -> bytes:
    """Canonical serialization: terms sorted by id, stable key order."""
    return (json.dumps(portion_to_dict(portion), ensure_ascii=False, indent=2) + "\n").encode()


def _load_json(data: bytes) -> object:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedDocument(f"not valid UTF-8: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc


def _expect(value: object, kind: type, path: str, what: str) -> object:
    # bool is an int subclass; never acceptable where a number is expected.
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise SchemaViolation(path, f"expected {what}")
    return value


def _expect_keys(obj: dict, path: str, required: set[str], optional: set[str] = frozenset()) -> None:
    unknown = set(obj) - required - optional
    if unknown:
        raise SchemaViolation(f"{path}.{sorted(unknown)[0]}", "unknown field")
    missing = required - set(obj)
    if missing:
        raise SchemaViolation(f"{path}.{sorted(missing)[0]}", "missing field")


def _parse_term_id(value: object, path: str) -> TermId:
    _expect(value, str, path, "a string")
    try:
        return TermId.parse(value)  # type: ignore[arg-type]
    except InvalidIdentifier as exc:
        raise SchemaViolation(path, str(exc)) from exc


def load_portion(data: bytes) -> OntologyPortion:
    """Parse and schema-check a portion document. Unknown fields are errors."""
    doc = _load_json(data)
    _expect(doc, dict, "$", "an object")
    _expect_keys(doc, "$", {"domain", "language", "version", "terms"})
    domain = _expect(doc["domain"], str, "$.domain", "a string")
    language = _expect(doc["language"], str, "$.language", "a string")
    version = _expect(doc["version"], int, "$.version", "an integer")
    if version < 1:
        raise SchemaViolation("$.version", "must be >= 1")
    if not re.fullmatch(r"[A-Za-z0-9_-]+", domain):
        raise SchemaViolation("$.domain", f"bad domain {domain!r}")
    if not re.fullmatch(r"[a-z]{2,3}", language):
        raise SchemaViolation("$.language", f"bad language tag {language!r}")
    _expect(doc["terms"], list, "$.terms", "an array")
    terms: dict[TermId, Term] = {}
    for i, entry in enumerate(doc["terms"]):
        path = f"$.terms[{i}]"
        _expect(entry, dict, path, "an object")
        _expect_keys(entry, path, {"id", "preferred_label", "alt_labels", "definition", "relations"})
        tid = _parse_term_id(entry["id"], f"{path}.id")
        if tid in terms:
            raise SchemaViolation(f"{path}.id", f"duplicate term id {tid}")
        preferred = _expect(entry["preferred_label"], str, f"{path}.preferred_label", "a string")
        _expect(entry["alt_labels"], list, f"{path}.alt_labels", "an array")
        alts = []
        for j, alt in enumerate(entry["alt_labels"]):
            alts.append(_expect(alt, str, f"{path}.alt_labels[{j}]", "a string"))
        definition = entry["definition"]
        if definition is not None:
            _expect(definition, str, f"{path}.definition", "a string or null")
        _expect(entry["relations"], list, f"{path}.relations", "an array")
        relations = []
        for j, rel in enumerate(entry["relations"]):
            rpath = f"{path}.relations[{j}]"
            _expect(rel, dict, rpath, "an object")
            _expect_keys(rel, rpath, {"kind", "target"})
            kind = _expect(rel["kind"], str, f"{rpath}.kind", "a string")
            if kind not in RELATION_KINDS:
                raise SchemaViolation(f"{rpath}.kind", f"must be one of {RELATION_KINDS}")
            relations.append(Relation(kind, _parse_term_id(rel["target"], f"{rpath}.target")))
        terms[tid] = Term(tid, preferred, tuple(alts), definition, tuple(relations))
    return OntologyPortion(domain, language, version, terms)


# --- cross-language alignment ---


@dataclass(frozen=True, order=True)
class TermRef:
    term: TermId
    lang: str

    def __str__(self) -> str:
        return f"{self.term}@{self.lang}"


@dataclass(frozen=True)
class AlignmentLink:
    source: TermRef
    target: TermRef
    relation: str
    confidence: float

    def __post_init__(self):
        if self.relation not in ALIGNMENT_RELATIONS:
            raise InvariantViolation(f"alignment relation must be one of {ALIGNMENT_RELATIONS}")
        if not isinstance(self.confidence, (int, float)) or not 0.0 < self.confidence <= 1.0:
            raise InvariantViolation(f"confidence {self.confidence!r} must be in (0, 1]")

    def reversed(self) -> "AlignmentLink":
        return AlignmentLink(self.target, self.source, self.relation, self.confidence)


@dataclass(frozen=True)
class OntologyStore:
    """All loaded portions plus the symmetric alignment adjacency."""

    portions: Mapping[tuple[str, str], OntologyPortion] = field(default_factory=dict)
    alignments: Mapping[TermRef, Mapping[TermRef, tuple[str, float]]] = field(default_factory=dict)


def empty_store() -> OntologyStore:
    return OntologyStore({}, {})


def resolve(store: OntologyStore, ref: TermRef) -> Term | None:
    portion = store.portions.get((ref.term.domain, ref.lang))
    if portion is None:
        return None
    return portion.terms.get(ref.term)


def require_term(store: OntologyStore, ref: TermRef) -> Term:
    term = resolve(store, ref)
    if term is None:
        raise UnknownTerm(f"no term {ref.term} in language {ref.lang!r}")
    return term


def set_portion(store: OntologyStore, portion: OntologyPortion) -> OntologyStore:
    """Insert or replace a portion; alignments that no longer resolve are pruned."""
    portions = dict(store.portions)
    portions[(portion.domain, portion.language)] = portion
    probe = OntologyStore(portions, {})
    alignments: dict[TermRef, dict[TermRef, tuple[str, float]]] = {}
    for src, targets in store.alignments.items():
        for dst, (relation, confidence) in targets.items():
            if resolve(probe, src) is None or resolve(probe, dst) is None:
                continue
            alignments.setdefault(src, {})[dst] = (relation, confidence)
    return OntologyStore(portions, alignments)


def add_alignment(store: OntologyStore, link: AlignmentLink) -> OntologyStore:
    """Upsert a symmetric link; one entry per unordered endpoint pair."""
    if link.source.lang == link.target.lang:
        raise SameLanguage(f"both endpoints are in language {link.source.lang!r}")
    require_term(store, link.source)
    require_term(store, link.target)
    alignments = {src: dict(targets) for src, targets in store.alignments.items()}
    alignments.setdefault(link.source, {})[link.target] = (link.relation, link.confidence)
    alignments.setdefault(link.target, {})[link.source] = (link.relation, link.confidence)
    return OntologyStore(store.portions, alignments)


def links_from(store: OntologyStore, ref: TermRef) -> tuple[AlignmentLink, ...]:
    """Outgoing links, sorted by (target language, target id)."""
    targets = store.alignments.get(ref, {})
    out = [
        AlignmentLink(ref, dst, relation, confidence)
        for dst, (relation, confidence) in targets.items()
    ]
    out.sort(key=lambda l: (l.target.lang, str(l.target.term)))
    return tuple(out)


def iter_links(store: OntologyStore) -> list[AlignmentLink]:
    """Each stored pair exactly once, in canonical orientation (smaller ref first)."""
    seen: set[tuple[TermRef, TermRef]] = set()
    out: list[AlignmentLink] = []
    for src in sorted(store.alignments, key=str):
        for dst in sorted(store.alignments[src], key=str):
            a, b = sorted((src, dst), key=str)
            if (a, b) in seen:
                continue
            seen.add((a, b))
            relation, confidence = store.alignments[src][dst]
            out.append(AlignmentLink(a, b, relation, confidence))
    return out


# --- alignment persistence ---


def _ref_to_dict(ref: TermRef) -> dict:
    return {"term": str(ref.term), "lang": ref.lang}


def save_alignments(links: Iterable[AlignmentLink]) -> bytes:
    doc = {
        "links": [
            {
                "source": _ref_to_dict(link.source),
                "target": _ref_to_dict(link.target),
                "relation": link.relation,
                "confidence": link.confidence,
            }
            for link in links
        ]
    }
    return (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode()


def _parse_ref(value: object, path: str) -> TermRef:
    _expect(value, dict, path, "an object")
    _expect_keys(value, path, {"term", "lang"})
    lang = _expect(value["lang"], str, f"{path}.lang", "a string")
    if not re.fullmatch(r"[a-z]{2,3}", lang):
        raise SchemaViolation(f"{path}.lang", f"bad language tag {lang!r}")
    return TermRef(_parse_term_id(value["term"], f"{path}.term"), lang)


def load_alignments(data: bytes) -> list[AlignmentLink]:
    doc = _load_json(data)
    _expect(doc, dict, "$", "an object")
    _expect_keys(doc, "$", {"links"})
    _expect(doc["links"], list, "$.links", "an array")
    links: list[AlignmentLink] = []
    for i, entry in enumerate(doc["links"]):
        path = f"$.links[{i}]"
        _expect(entry, dict, path, "an object")
        _expect_keys(entry, path, {"source", "target", "relation", "confidence"})
        relation = _expect(entry["relation"], str, f"{path}.relation", "a string")
        if relation not in ALIGNMENT_RELATIONS:
            raise SchemaViolation(f"{path}.relation", f"must be one of {ALIGNMENT_RELATIONS}")
        confidence = entry["confidence"]
        if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
            raise SchemaViolation(f"{path}.confidence", "expected a number")
        if not 0.0 < confidence <= 1.0:
            raise SchemaViolation(f"{path}.confidence", "must be in (0, 1]")
        links.append(
            AlignmentLink(
                _parse_ref(entry["source"], f"{path}.source"),
                _parse_ref(entry["target"], f"{path}.target"),
                relation,
                float(confidence),
            )
        )
    return links
