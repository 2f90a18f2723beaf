"""Probabilistic structured queries.

Each source-language query term is projected onto a pruned, renormalized
distribution over target-language terms. Scoring then runs the ordinary
BM25 / query-likelihood kernels on projected statistics::

    tf~(s, d) = sum_t p(t|s) * tf(t, d)
    df~(s)    = min(N, sum_t p(t|s) * df(t))
    ctf~(s)   = sum_t p(t|s) * ctf(t)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .index import InvertedIndex
from .retrieval import Query, RankedList, ScoringTerm, bm25_scores, qld_scores, rank

log = logging.getLogger(__name__)

_MASS_SLACK = 1e-6


class TranslationTableError(ValueError):
    pass


class UntranslatableQueryError(ValueError):
    pass


class TranslationTable:
    """source term -> [(target term, p(t|s))], probability descending."""

    def __init__(self, entries: dict[str, list[tuple[str, float]]]):
        self.entries = {}
        for s, targets in entries.items():
            total = 0.0
            seen = set()
            for t, p in targets:
                if not 0 < p <= 1:
                    raise TranslationTableError(f"p({t}|{s}) = {p} is outside (0, 1]")
                if t in seen:
                    raise TranslationTableError(f"duplicate translation {s} -> {t}")
                seen.add(t)
                total += p
            if total > 1 + _MASS_SLACK:
                raise TranslationTableError(f"translations of {s!r} sum to {total:.6f} > 1")
            self.entries[s] = sorted(targets, key=lambda tp: (-tp[1], tp[0]))

    def __contains__(self, term) -> bool:
        return term in self.entries

    def __getitem__(self, term) -> list[tuple[str, float]]:
        return self.entries[term]

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def identity(cls, terms) -> "TranslationTable":
        return cls({t: [(t, 1.0)] for t in terms})

    @classmethod
    def load(cls, path) -> "TranslationTable":
        """Read ``source target probability`` lines (UTF-8, whitespace separated)."""
        entries: dict[str, list[tuple[str, float]]] = {}
        with open(path, "r", encoding="utf-8") as f:
            for i, line in enumerate(f, 1):
                parts = line.split()
                if not parts or parts[0].startswith("#"):
                    continue
                if len(parts) != 3:
                    raise TranslationTableError(f"line {i}: expected 'source target probability'")
                try:
                    p = float(parts[2])
                except ValueError:
                    raise TranslationTableError(f"line {i}: bad probability {parts[2]!r}") from None
                entries.setdefault(parts[0], []).append((parts[1], p))
        return cls(entries)


@dataclass(frozen=True)
class PsqTerm:
    source: str
    weight: float
    translations: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class StructuredQuery:
    id: str
    terms: tuple[PsqTerm, ...]


def prune(
    translations: list[tuple[str, float]], min_prob: float, cum_prob: float, max_translations: int
) -> list[tuple[str, float]]:
    """Drop p < min_prob, stop before cumulative mass exceeds cum_prob or at
    max_translations, then renormalize. The most probable surviving
    translation is always kept.
    """
    kept = []
    mass = 0.0
    for t, p in translations:
        if p < min_prob:
            continue
        if len(kept) >= max_translations:
            break
        if kept and mass + p > cum_prob + 1e-12:
            break
        kept.append((t, p))
        mass += p
    return [(t, p / mass) for t, p in kept]


def psq_project(
    query: Query,
    table: TranslationTable,
    min_prob: float = 0.01,
    cum_prob: float = 0.97,
    max_translations: int = 32,
) -> StructuredQuery:
    terms = []
    dropped = []
    for s in sorted(query.weights):
        kept = prune(table[s], min_prob, cum_prob, max_translations) if s in table else []
        if not kept:
            dropped.append(s)
            continue
        terms.append(PsqTerm(s, query.weights[s], tuple(kept)))
    if dropped:
        log.info("psq: topic %s: no translation for %s", query.id, " ".join(dropped))
    if not terms:
        raise UntranslatableQueryError(f"untranslatable query {query.id}: no term has a translation")
    return StructuredQuery(query.id, tuple(terms))


def projected_terms(index: InvertedIndex, sq: StructuredQuery) -> list[ScoringTerm]:
    n = index.num_docs
    out = []
    for term in sq.terms:
        tf_of: dict[int, float] = {}
        df = 0.0
        ctf = 0.0
        for t, p in term.translations:
            ords, tfs = index.raw_postings(t)
            for o, tf in zip(ords, tfs):
                tf_of[o] = tf_of.get(o, 0.0) + p * tf
            df += p * len(ords)
            ctf += p * index.ctf(t)
        ords = sorted(tf_of)
        out.append(ScoringTerm(term.weight, min(n, df), ctf, ords, [tf_of[o] for o in ords]))
    return out


def score_psq(
    index: InvertedIndex, sq: StructuredQuery, k: int, model: str = "bm25", params: dict | None = None
) -> RankedList:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    terms = projected_terms(index, sq)
    if model == "bm25":
        params = params or {"k1": 0.9, "b": 0.4}
        scores = bm25_scores(index, terms, params["k1"], params["b"])
    elif model == "qld":
        params = params or {"mu": 1000.0}
        if params["mu"] <= 0:
            raise ValueError(f"mu must be > 0, got {params['mu']}")
        scores = qld_scores(index, terms, params["mu"])
    else:
        raise ValueError(f"unknown PSQ scoring model {model!r}")
    return rank(index, sq.id, scores, k)
