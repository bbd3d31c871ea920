"""The discovery pipeline: detect, map keywords to terms, translate term
labels into every registered language, search, scale by translation
confidence, merge. An expansion round over related/broader terms runs only
when the first pass comes back empty."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from . import registry as reg
from .errors import (
    EmptyInput,
    EmptyQuery,
    DetectionFailed,
    NoProfiles,
    NotInResponse,
    PortionUnavailable,
)
from .importer import ImportReport, report_to_dict
from .langdetect import DetectionResult, TrigramProfile, detect
from .mapping import TranslationPath, expand_terms, match_keywords, path_to_dict, translate
from .ontology import OntologyStore, TermId, TermRef, resolve
from .registry import BindingTicket, RegistryStore
from .textutil import check_identifier, split_words

_FIELD_RANK = {name: i for i, name in enumerate(("name", "operation", "documentation"))}

# Optional hook used when the portion for the detected language is absent:
# (domain, language) -> (possibly updated store, reports of performed imports)
ImportHook = Callable[[str, str], tuple[OntologyStore, tuple[ImportReport, ...]]]


@dataclass(frozen=True)
class Query:
    text: str
    domain: str
    requester_id: str
    declared_language: str | None = None


@dataclass(frozen=True)
class ProvenanceEntry:
    source: str  # the query keyword, or the requester-side term id
    path: TranslationPath | None
    field: str


@dataclass(frozen=True)
class ResultEntry:
    service_id: str
    name: str
    language: str
    score: float
    provenance: tuple[ProvenanceEntry, ...]
    requester_language_labels: tuple[str, ...]


@dataclass(frozen=True)
class DiscoveryResponse:
    detected: DetectionResult
    results: tuple[ResultEntry, ...]
    used_expansion: bool
    imports_triggered: tuple[ImportReport, ...]


@dataclass(frozen=True)
class _TokenSource:
    origin: str  # keyword text, or str(TermId)
    term: TermId | None
    path: TranslationPath | None
    confidence: float


def _token_sources(
    raw_keywords: list[str],
    terms: list[TermId],
    query_lang: str,
    target_lang: str,
    store: OntologyStore,
) -> dict[str, list[_TokenSource]]:
    """For one registry language, every searchable token with where it came from."""
    sources: dict[str, list[_TokenSource]] = {}

    def add(token: str, source: _TokenSource):
        sources.setdefault(token, []).append(source)

    for keyword in raw_keywords:
        add(keyword, _TokenSource(keyword, None, None, 1.0))
    for term in terms:
        ref = TermRef(term, query_lang)
        if target_lang == query_lang:
            resolved = resolve(store, ref)
            if resolved is None:
                continue
            for label in resolved.labels():
                for token in split_words(label):
                    add(token, _TokenSource(str(term), term, None, 1.0))
        else:
            for path in translate(ref, target_lang, store):
                target = resolve(store, path.target)
                if target is None:
                    continue
                for label in target.labels():
                    for token in split_words(label):
                        add(token, _TokenSource(str(term), term, path, path.confidence))
    return sources


def _provenance_key(entry: ProvenanceEntry):
    path_key = () if entry.path is None else tuple(str(h.target) for h in entry.path.hops)
    return (entry.source, _FIELD_RANK[entry.field], path_key)


def _search_pass(
    raw_keywords: list[str],
    terms: list[TermId],
    query_lang: str,
    portion_terms: Mapping,
    ontology: OntologyStore,
    registry_store: RegistryStore,
    weights: Mapping[str, float] | None,
) -> list[ResultEntry]:
    entries: dict[str, ResultEntry] = {}
    for target_lang in reg.languages(registry_store):
        sources = _token_sources(raw_keywords, terms, query_lang, target_lang, ontology)
        if not sources:
            continue
        matches = reg.find(registry_store, sorted(sources), language=target_lang, weights=weights)
        for match in matches:
            factor = 0.0
            provenance: set[ProvenanceEntry] = set()
            contributing: set[TermId] = set()
            for token, fname in match.matched_tokens:
                for src in sources[token]:
                    factor = max(factor, src.confidence)
                    provenance.add(ProvenanceEntry(src.origin, src.path, fname))
                    if src.term is not None:
                        contributing.add(src.term)
            labels = sorted(
                {
                    portion_terms[term].preferred_label
                    for term in contributing
                    if term in portion_terms
                }
            )
            entry = ResultEntry(
                service_id=match.service_id,
                name=registry_store.descriptors[match.service_id].name,
                language=match.language,
                score=match.score * factor,
                provenance=tuple(sorted(provenance, key=_provenance_key)),
                requester_language_labels=tuple(labels),
            )
            current = entries.get(entry.service_id)
            if current is None or entry.score > current.score:
                entries[entry.service_id] = entry
    return sorted(entries.values(), key=lambda e: (-e.score, e.service_id))


def discover(
    query: Query,
    ontology: OntologyStore,
    registry_store: RegistryStore,
    profiles: Iterable[TrigramProfile] = (),
    *,
    expansion_depth: int = 1,
    weights: Mapping[str, float] | None = None,
    import_missing: ImportHook | None = None,
) -> DiscoveryResponse:
    """Run the full pipeline for one query against store snapshots."""
    check_identifier(query.domain, "domain")
    words = split_words(query.text)
    if not words:
        raise EmptyQuery("query text has no usable words")
    try:
        detected = detect(query.text, tuple(profiles), declared=query.declared_language)
    except EmptyInput as exc:
        raise EmptyQuery(str(exc)) from exc
    except NoProfiles as exc:
        raise DetectionFailed(str(exc)) from exc
    language = detected.language

    imports: tuple[ImportReport, ...] = ()
    key = (query.domain, language)
    if key not in ontology.portions and import_missing is not None:
        ontology, imports = import_missing(query.domain, language)
    portion = ontology.portions.get(key)
    if portion is None:
        raise PortionUnavailable(
            f"no ontology portion for domain {query.domain!r} in language {language!r}"
        )

    matches, raw_keywords = match_keywords(words, portion)
    terms: list[TermId] = []
    for m in matches:
        if m.term not in terms:
            terms.append(m.term)

    results = _search_pass(
        raw_keywords, terms, language, portion.terms, ontology, registry_store, weights
    )
    used_expansion = False
    if not results and terms:
        used_expansion = True
        widened = terms + expand_terms(terms, portion, expansion_depth)
        results = _search_pass(
            raw_keywords, widened, language, portion.terms, ontology, registry_store, weights
        )
    return DiscoveryResponse(detected, tuple(results), used_expansion, imports)


def select_and_bind(
    response: DiscoveryResponse,
    service_id: str,
    requester_id: str,
    registry_store: RegistryStore,
) -> BindingTicket:
    """Bind one of the services named in a previous response."""
    if service_id not in {entry.service_id for entry in response.results}:
        raise NotInResponse(f"service {service_id!r} is not part of this response")
    return reg.bind(registry_store, service_id, requester_id)


def response_to_dict(response: DiscoveryResponse) -> dict:
    return {
        "detected": {
            "language": response.detected.language,
            "confidence": response.detected.confidence,
            "method": response.detected.method,
        },
        "results": [
            {
                "service_id": entry.service_id,
                "name": entry.name,
                "language": entry.language,
                "score": entry.score,
                "provenance": [
                    {
                        "source": p.source,
                        "path": None if p.path is None else path_to_dict(p.path),
                        "field": p.field,
                    }
                    for p in entry.provenance
                ],
                "requester_language_labels": list(entry.requester_language_labels),
            }
            for entry in response.results
        ],
        "used_expansion": response.used_expansion,
        "imports_triggered": [report_to_dict(r) for r in response.imports_triggered],
    }
