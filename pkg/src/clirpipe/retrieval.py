"""Topics, queries, lexical scoring (BM25, Dirichlet query likelihood), RM3.

Ranking order everywhere is score descending, then doc id descending.
Query terms are always visited in sorted order so the floating point
summation order, and therefore the exact scores, are reproducible.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

from .index import InvertedIndex
from .textproc import ProcessingPolicy, process

log = logging.getLogger(__name__)

FIELD_ORDER = ("title", "desc")
TRANSLATION_SOURCES = ("machine", "human")


class TopicError(ValueError):
    pass


@dataclass(frozen=True)
class Translation:
    language: str
    source: str
    title: str = ""
    desc: str = ""


@dataclass(frozen=True)
class Topic:
    id: str
    language: str
    title: str = ""
    desc: str = ""
    translations: tuple[Translation, ...] = ()

    def translation(self, language: str, source: str) -> Translation:
        for tr in self.translations:
            if tr.language == language and tr.source == source:
                return tr
        raise TopicError(f"topic {self.id} has no {source} translation into {language!r}")


@dataclass
class Query:
    id: str
    weights: dict[str, float]


@dataclass
class RankedList:
    topic_id: str
    entries: list[tuple[str, float]] = field(default_factory=list)

    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]


def sort_entries(entries: Iterable[tuple[str, float]]) -> list[tuple[str, float]]:
    return sorted(entries, key=lambda e: (e[1], e[0]), reverse=True)


# -- topics -----------------------------------------------------------------


def _str_field(obj: dict, key: str, lineno: int, default: Optional[str] = None) -> str:
    val = obj.get(key, default)
    if not isinstance(val, str):
        raise TopicError(f"line {lineno}: field {key!r} must be a string")
    return val


def _parse_topic(obj, lineno: int, default_language: str) -> Topic:
    if not isinstance(obj, dict):
        raise TopicError(f"line {lineno}: expected a JSON object")
    topic_id = _str_field(obj, "id", lineno)
    if not topic_id or any(c.isspace() for c in topic_id):
        raise TopicError(f"line {lineno}: invalid topic id {topic_id!r}")
    translations = []
    seen = set()
    for tr in obj.get("translations", []) or []:
        if not isinstance(tr, dict):
            raise TopicError(f"line {lineno}: translation entries must be objects")
        lang = _str_field(tr, "language", lineno)
        source = _str_field(tr, "source", lineno)
        if source not in TRANSLATION_SOURCES:
            raise TopicError(f"line {lineno}: translation source must be machine or human, got {source!r}")
        if (lang, source) in seen:
            raise TopicError(f"line {lineno}: topic {topic_id} has two {source} translations into {lang!r}")
        seen.add((lang, source))
        translations.append(
            Translation(lang, source, _str_field(tr, "title", lineno, ""), _str_field(tr, "desc", lineno, ""))
        )
    return Topic(
        id=topic_id,
        language=obj.get("language") or default_language,
        title=_str_field(obj, "title", lineno, ""),
        desc=_str_field(obj, "desc", lineno, ""),
        translations=tuple(translations),
    )


def load_topics(path, default_language: str = "") -> list[Topic]:
    topics = []
    ids = set()
    with open(path, "r", encoding="utf-8") as f:
        for i, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise TopicError(f"line {i}: invalid JSON ({e.msg})") from None
            topic = _parse_topic(obj, i, default_language)
            if topic.id in ids:
                raise TopicError(f"line {i}: duplicate topic id {topic.id!r}")
            ids.add(topic.id)
            topics.append(topic)
    return topics


def query_text(topic: Topic, fields: Iterable[str], selector: Optional[tuple[str, str]] = None) -> str:
    """Raw text of the selected fields, title first, space-joined."""
    src = topic if selector is None else topic.translation(*selector)
    wanted = set(fields)
    return " ".join(getattr(src, f) for f in FIELD_ORDER if f in wanted)


def make_query(
    topic: Topic,
    fields: Iterable[str],
    selector: Optional[tuple[str, str]],
    policy: ProcessingPolicy,
) -> Query:
    counts = Counter(process(query_text(topic, fields, selector), policy))
    return Query(topic.id, {t: float(n) for t, n in counts.items()})


# -- scoring kernels --------------------------------------------------------


class ScoringTerm(NamedTuple):
    """Per-term statistics a scoring model consumes. Real-valued for PSQ."""

    weight: float
    df: float
    ctf: float
    ords: Sequence[int]
    tfs: Sequence[float]


def index_terms(index: InvertedIndex, query: Query) -> list[ScoringTerm]:
    out = []
    for term in sorted(query.weights):
        ords, tfs = index.raw_postings(term)
        out.append(ScoringTerm(query.weights[term], index.df(term), index.ctf(term), ords, tfs))
    return out


def bm25_scores(index: InvertedIndex, terms: list[ScoringTerm], k1: float, b: float) -> dict[int, float]:
    n = index.num_docs
    avg_len = index.total_tokens / n
    lens = index.doc_lens
    acc: dict[int, float] = {}
    for w, df, _, ords, tfs in terms:
        if not ords:
            continue
        idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
        for o, tf in zip(ords, tfs):
            norm = k1 * (1 - b + b * lens[o] / avg_len)
            acc[o] = acc.get(o, 0.0) + w * idf * (tf * (k1 + 1)) / (tf + norm)
    return acc


def qld_scores(index: InvertedIndex, terms: list[ScoringTerm], mu: float) -> dict[int, float]:
    total = index.total_tokens
    lens = index.doc_lens
    live = [t for t in terms if t.ctf > 0]
    candidates = sorted({o for t in live for o in t.ords})
    acc = dict.fromkeys(candidates, 0.0)
    for w, _, ctf, ords, tfs in live:
        p_coll = ctf / total
        tf_of = dict(zip(ords, tfs))
        for o in candidates:
            acc[o] += w * math.log((tf_of.get(o, 0) + mu * p_coll) / (lens[o] + mu))
    return acc


def rank(index: InvertedIndex, topic_id: str, scores: dict[int, float], k: int) -> RankedList:
    entries = sort_entries((index.doc_ids[o], s) for o, s in scores.items())
    return RankedList(topic_id, entries[:k])


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")


def score_bm25(index: InvertedIndex, query: Query, k: int, k1: float = 0.9, b: float = 0.4) -> RankedList:
    _check_k(k)
    return rank(index, query.id, bm25_scores(index, index_terms(index, query), k1, b), k)


def score_qld(index: InvertedIndex, query: Query, k: int, mu: float = 1000.0) -> RankedList:
    _check_k(k)
    if mu <= 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    return rank(index, query.id, qld_scores(index, index_terms(index, query), mu), k)


def score(index: InvertedIndex, query: Query, k: int, model: str, params: dict) -> RankedList:
    if model == "bm25":
        return score_bm25(index, query, k, params["k1"], params["b"])
    if model == "qld":
        return score_qld(index, query, k, params["mu"])
    raise ValueError(f"unknown model {model!r}")


# -- RM3 --------------------------------------------------------------------


def _doc_priors(scores: list[float], model: str) -> list[float]:
    if model == "bm25":
        z = sum(scores)
        return [s / z for s in scores]
    top = max(scores)
    ex = [math.exp(s - top) for s in scores]
    z = sum(ex)
    return [e / z for e in ex]


def rm3_expand(
    index: InvertedIndex,
    query: Query,
    fb_docs: int = 10,
    fb_terms: int = 10,
    orig_weight: float = 0.5,
    model: str = "bm25",
    params: Optional[dict] = None,
) -> Query:
    """Interpolate the normalized query with a relevance model from top documents.

    Feedback document priors: BM25 scores divided by their sum; for query
    likelihood, a max-shifted softmax over the log scores.
    """
    params = params or {"k1": 0.9, "b": 0.4}
    if not query.weights:
        return query
    fb = score(index, query, fb_docs, model, params)
    if not fb.entries:
        log.warning("rm3: no feedback documents for topic %s, query left unexpanded", query.id)
        return query
    priors = _doc_priors([s for _, s in fb.entries], model)
    ordinal = {d: i for i, d in enumerate(index.doc_ids)}
    relevance: dict[str, float] = {}
    for (doc_id, _), p_doc in zip(fb.entries, priors):
        o = ordinal[doc_id]
        length = index.doc_lens[o]
        for term, tf in index.doc_vector(o):
            relevance[term] = relevance.get(term, 0.0) + tf / length * p_doc
    top = sorted(relevance.items(), key=lambda kv: (-kv[1], kv[0]))[:fb_terms]
    z_fb = sum(p for _, p in top)
    feedback = {t: p / z_fb for t, p in top}
    z_q = sum(query.weights.values())
    weights = {}
    for term in sorted(set(query.weights) | set(feedback)):
        w = orig_weight * query.weights.get(term, 0.0) / z_q + (1 - orig_weight) * feedback.get(term, 0.0)
        if w > 0:
            weights[term] = w
    return Query(query.id, weights)


# -- run files --------------------------------------------------------------


def format_run(lists: Iterable[RankedList], tag: str) -> str:
    if not tag or any(c.isspace() for c in tag):
        raise ValueError(f"invalid run tag {tag!r}")
    lines = []
    for rl in lists:
        for rank_no, (doc_id, s) in enumerate(rl.entries, 1):
            lines.append(f"{rl.topic_id} Q0 {doc_id} {rank_no} {s:.6f} {tag}\n")
    return "".join(lines)


def write_run(lists: Iterable[RankedList], path, tag: str) -> None:
    data = format_run(lists, tag)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(data)
