"""Qrels/run parsing and MAP, nDCG@k, recall@k.

Runs are re-sorted by (score desc, doc id desc) before scoring; the rank
column is ignored. Topics without any relevant document are left out of
the averages.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

from .retrieval import RankedList, sort_entries

log = logging.getLogger(__name__)

DEFAULT_MEASURES = ("map", "ndcg_cut_1000", "recall_1000")
_MEASURE_RE = re.compile(r"^(map|ndcg_cut_(\d+)|recall_(\d+))$")


class EvalError(ValueError):
    pass


Qrels = dict[str, dict[str, int]]


def load_qrels(path) -> Qrels:
    qrels: Qrels = {}
    with open(path, "r", encoding="utf-8") as f:
        for i, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise EvalError(f"qrels line {i}: expected 'topic iteration doc grade'")
            topic, _, doc, grade_s = parts
            if not grade_s.isdigit():
                raise EvalError(f"qrels line {i}: grade must be a non-negative integer, got {grade_s!r}")
            judged = qrels.setdefault(topic, {})
            if doc in judged:
                raise EvalError(f"qrels line {i}: duplicate judgment for ({topic}, {doc})")
            judged[doc] = int(grade_s)
    return qrels


def load_run(path) -> dict[str, RankedList]:
    """Parse a 6-column run file; each topic's entries come back tie-rule sorted."""
    raw: dict[str, list[tuple[str, float]]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for i, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise EvalError(f"run line {i}: expected 6 columns, got {len(parts)}")
            topic, _, doc, _, score_s, _ = parts
            try:
                s = float(score_s)
            except ValueError:
                raise EvalError(f"run line {i}: bad score {score_s!r}") from None
            raw.setdefault(topic, []).append((doc, s))
    out = {}
    for topic, entries in raw.items():
        ids = [d for d, _ in entries]
        if len(set(ids)) != len(ids):
            raise EvalError(f"run has duplicate documents for topic {topic}")
        out[topic] = RankedList(topic, sort_entries(entries))
    return out


def _num_relevant(judged: dict[str, int]) -> int:
    return sum(1 for g in judged.values() if g >= 1)


def average_precision(ranked: RankedList, judged: dict[str, int], depth: int = 1000) -> Optional[float]:
    """None when the topic has no relevant documents."""
    r = _num_relevant(judged)
    if r == 0:
        return None
    hits = 0
    total = 0.0
    for i, doc in enumerate(ranked.doc_ids()[:depth], 1):
        if judged.get(doc, 0) >= 1:
            hits += 1
            total += hits / i
    return total / r


def ndcg(ranked: RankedList, judged: dict[str, int], depth: int = 1000) -> Optional[float]:
    """Linear gain, 1/log2(rank+1) discount. None when the ideal DCG is 0."""
    ideal = sorted((g for g in judged.values() if g > 0), reverse=True)[:depth]
    idcg = sum(g / math.log2(i + 1) for i, g in enumerate(ideal, 1))
    if idcg == 0:
        return None
    dcg = sum(judged.get(doc, 0) / math.log2(i + 1) for i, doc in enumerate(ranked.doc_ids()[:depth], 1))
    return dcg / idcg


def recall(ranked: RankedList, judged: dict[str, int], depth: int = 1000) -> Optional[float]:
    r = _num_relevant(judged)
    if r == 0:
        return None
    found = sum(1 for doc in ranked.doc_ids()[:depth] if judged.get(doc, 0) >= 1)
    return found / r


def parse_measure(name: str):
    m = _MEASURE_RE.match(name)
    if not m:
        raise EvalError(f"unknown measure {name!r} (use map, ndcg_cut_<k>, recall_<k>)")
    if m.group(1) == "map":
        return lambda rl, j: average_precision(rl, j, 1000)
    if m.group(2):
        k = int(m.group(2))
        return lambda rl, j: ndcg(rl, j, k)
    k = int(m.group(3))
    return lambda rl, j: recall(rl, j, k)


def display_name(name: str) -> str:
    if name == "map":
        return "MAP"
    if name.startswith("ndcg_cut_"):
        return "nDCG@" + name[len("ndcg_cut_"):]
    return "R@" + name[len("recall_"):]


@dataclass
class MetricReport:
    measures: list[str]
    per_topic: dict[str, dict[str, float]] = field(default_factory=dict)
    aggregate: dict[str, float] = field(default_factory=dict)
    num_topics: dict[str, int] = field(default_factory=dict)

    def to_tsv(self) -> str:
        lines = []
        for topic in sorted(self.per_topic):
            for m in self.measures:
                if m in self.per_topic[topic]:
                    lines.append(f"{topic}\t{m}\t{self.per_topic[topic][m]:.4f}\n")
        for m in self.measures:
            lines.append(f"all\t{m}\t{self.aggregate[m]:.4f}\n")
        return "".join(lines)

    def summary(self) -> str:
        return "  ".join(f"{display_name(m)} {self.aggregate[m]:.4f}" for m in self.measures)


def evaluate_lists(runs: dict[str, RankedList], qrels: Qrels, measures: Iterable[str] = DEFAULT_MEASURES) -> MetricReport:
    measures = list(measures)
    fns = {m: parse_measure(m) for m in measures}
    report = MetricReport(measures)
    missing = sorted(t for t in runs if t not in qrels)
    if missing:
        log.warning("run topics without judgments, skipped: %s", " ".join(missing))
    common = sorted(t for t in runs if t in qrels)
    if not common:
        raise EvalError("no topic appears in both the run and the qrels")
    sums = dict.fromkeys(measures, 0.0)
    counts = dict.fromkeys(measures, 0)
    for topic in common:
        row = {}
        for m, fn in fns.items():
            v = fn(runs[topic], qrels[topic])
            if v is not None:
                row[m] = v
                sums[m] += v
                counts[m] += 1
        report.per_topic[topic] = row
    for m in measures:
        report.aggregate[m] = sums[m] / counts[m] if counts[m] else 0.0
        report.num_topics[m] = counts[m]
    return report


def evaluate(run_path, qrels_path, measures: Iterable[str] = DEFAULT_MEASURES, out: Optional[TextIO] = None) -> MetricReport:
    report = evaluate_lists(load_run(run_path), load_qrels(qrels_path), measures)
    if out is not None:
        out.write(report.to_tsv())
        out.write(report.summary() + "\n")
    return report
