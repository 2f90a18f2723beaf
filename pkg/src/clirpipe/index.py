"""Inverted index: chunked build, merge, persistence, statistics.

On-disk layout of an index directory:

``VERSION``   format tag line
``stats``     JSON collection statistics
``docs``      ``doc_id<TAB>length`` per ordinal
``dict``      ``term<TAB>df<TAB>ctf<TAB>offset<TAB>nbytes`` sorted by term
``postings``  per term, varint pairs (ordinal gap, tf)
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .corpus import Document, DuplicateIdError, count_lines, ingest
from .parallel import LocalScheduler, split_ranges
from .textproc import ProcessingPolicy, process

log = logging.getLogger(__name__)

FORMAT_TAG = "clirpipe-index 1"


class IndexFormatError(ValueError):
    """Index construction or on-disk format problem."""


@dataclass(frozen=True)
class CollectionStats:
    num_docs: int
    total_tokens: int
    avg_doc_len: float
    num_terms: int


@dataclass(eq=False)
class InvertedIndex:
    language: str
    doc_ids: list[str]
    doc_lens: list[int]
    # term -> (ordinals, tfs), ordinals strictly increasing
    terms: dict[str, tuple[list[int], list[int]]]
    _ctf: dict[str, int] = field(default_factory=dict, repr=False)
    _forward: Optional[list[list[tuple[str, int]]]] = field(default=None, repr=False)

    def __post_init__(self):
        if not self._ctf:
            self._ctf = {t: sum(tfs) for t, (_, tfs) in self.terms.items()}

    def __eq__(self, other) -> bool:
        if not isinstance(other, InvertedIndex):
            return NotImplemented
        return (
            self.language == other.language
            and self.doc_ids == other.doc_ids
            and self.doc_lens == other.doc_lens
            and list(self.terms.items()) == list(other.terms.items())
        )

    @property
    def num_docs(self) -> int:
        return len(self.doc_ids)

    @property
    def total_tokens(self) -> int:
        return sum(self.doc_lens)

    def postings(self, term: str) -> list[tuple[int, int]]:
        entry = self.terms.get(term)
        if entry is None:
            return []
        return list(zip(*entry))

    def raw_postings(self, term: str) -> tuple[list[int], list[int]]:
        return self.terms.get(term, ([], []))

    def df(self, term: str) -> int:
        entry = self.terms.get(term)
        return len(entry[0]) if entry else 0

    def ctf(self, term: str) -> int:
        return self._ctf.get(term, 0)

    def doc_len(self, ordinal: int) -> int:
        if not 0 <= ordinal < len(self.doc_lens):
            raise IndexError(f"document ordinal {ordinal} out of range [0, {len(self.doc_lens)})")
        return self.doc_lens[ordinal]

    def doc_id(self, ordinal: int) -> str:
        if not 0 <= ordinal < len(self.doc_ids):
            raise IndexError(f"document ordinal {ordinal} out of range [0, {len(self.doc_ids)})")
        return self.doc_ids[ordinal]

    def stats(self) -> CollectionStats:
        n = self.num_docs
        total = self.total_tokens
        return CollectionStats(
            num_docs=n,
            total_tokens=total,
            avg_doc_len=total / n if n else 0.0,
            num_terms=len(self.terms),
        )

    def doc_vector(self, ordinal: int) -> list[tuple[str, int]]:
        """(term, tf) pairs of one document, sorted by term.

        Built once by inverting the postings on first use.
        """
        if self._forward is None:
            fwd: list[list[tuple[str, int]]] = [[] for _ in self.doc_ids]
            for term, (ords, tfs) in self.terms.items():
                for o, tf in zip(ords, tfs):
                    fwd[o].append((term, tf))
            self._forward = fwd
        self.doc_len(ordinal)
        return self._forward[ordinal]


# Chunks are plain indexes over a document subrange.
IndexChunk = InvertedIndex


def _sorted_terms(acc: dict[str, tuple[list[int], list[int]]]) -> dict[str, tuple[list[int], list[int]]]:
    return {t: acc[t] for t in sorted(acc)}


def build_chunk(docs: Iterable[Document], policy: ProcessingPolicy) -> IndexChunk:
    acc: dict[str, tuple[list[int], list[int]]] = {}
    doc_ids: list[str] = []
    doc_lens: list[int] = []
    seen = set()
    for doc in docs:
        if doc.language != policy.language:
            raise IndexFormatError(
                f"document {doc.id} has language {doc.language!r}, index policy is {policy.language!r}"
            )
        if doc.id in seen:
            raise DuplicateIdError(f"duplicate document id {doc.id!r}")
        seen.add(doc.id)
        ordinal = len(doc_ids)
        tokens = process(doc.title + " " + doc.text, policy)
        doc_ids.append(doc.id)
        doc_lens.append(len(tokens))
        for term, tf in Counter(tokens).items():
            entry = acc.get(term)
            if entry is None:
                acc[term] = ([ordinal], [tf])
            else:
                entry[0].append(ordinal)
                entry[1].append(tf)
    if not doc_ids:
        raise IndexFormatError("cannot build an index chunk from an empty document stream")
    return InvertedIndex(policy.language, doc_ids, doc_lens, _sorted_terms(acc))


def merge(chunks: list[IndexChunk]) -> InvertedIndex:
    """Assemble chunks in the given order, renumbering ordinals."""
    if not chunks:
        raise IndexFormatError("nothing to merge")
    language = chunks[0].language
    doc_ids: list[str] = []
    doc_lens: list[int] = []
    acc: dict[str, tuple[list[int], list[int]]] = {}
    seen: set[str] = set()
    for chunk in chunks:
        if chunk.language != language:
            raise IndexFormatError(f"language mismatch in merge: {language} vs {chunk.language}")
        base = len(doc_ids)
        for doc_id in chunk.doc_ids:
            if doc_id in seen:
                raise DuplicateIdError(f"document id collision across chunks: {doc_id!r}")
            seen.add(doc_id)
        doc_ids.extend(chunk.doc_ids)
        doc_lens.extend(chunk.doc_lens)
        for term, (ords, tfs) in chunk.terms.items():
            entry = acc.get(term)
            if entry is None:
                entry = acc[term] = ([], [])
            entry[0].extend(o + base for o in ords)
            entry[1].extend(tfs)
    return InvertedIndex(language, doc_ids, doc_lens, _sorted_terms(acc))


def _build_range(job) -> Optional[IndexChunk]:
    input_path, language, policy, start, stop = job
    docs = list(ingest(input_path, language, start, stop))
    if not docs:
        return None
    return build_chunk(docs, policy)


def build_parallel(
    input_path,
    language: str,
    policy: ProcessingPolicy,
    chunks: int = 1,
    scheduler: Optional[LocalScheduler] = None,
    num_lines: Optional[int] = None,
) -> InvertedIndex:
    """Map: index contiguous line ranges of the input. Reduce: merge in file order."""
    scheduler = scheduler or LocalScheduler(1)
    if num_lines is None:
        num_lines = count_lines(input_path)
    jobs = [(str(input_path), language, policy, a, b) for a, b in split_ranges(num_lines, chunks)]
    parts = [c for c in scheduler.map(_build_range, jobs) if c is not None]
    if not parts:
        raise IndexFormatError(f"no documents in {input_path}")
    log.info("merging %d index chunks", len(parts))
    return merge(parts)


# -- persistence ------------------------------------------------------------


def _encode_varints(values: Iterable[int]) -> bytes:
    out = bytearray()
    for v in values:
        while v >= 0x80:
            out.append((v & 0x7F) | 0x80)
            v >>= 7
        out.append(v)
    return bytes(out)


def _decode_varints(buf: bytes) -> list[int]:
    out = []
    v = 0
    shift = 0
    for byte in buf:
        v |= (byte & 0x7F) << shift
        if byte & 0x80:
            shift += 7
        else:
            out.append(v)
            v = 0
            shift = 0
    if shift:
        raise IndexFormatError("truncated varint in postings")
    return out


def _encode_postings(ords: list[int], tfs: list[int]) -> bytes:
    vals = []
    prev = 0
    for o, tf in zip(ords, tfs):
        vals.append(o - prev)
        vals.append(tf)
        prev = o
    return _encode_varints(vals)


def save(index: InvertedIndex, path) -> None:
    if not str(path):
        raise IndexFormatError("empty index path")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "docs", "w", encoding="utf-8") as f:
        for doc_id, n in zip(index.doc_ids, index.doc_lens):
            f.write(f"{doc_id}\t{n}\n")
    offset = 0
    with open(path / "postings", "wb") as pf, open(path / "dict", "w", encoding="utf-8") as df:
        for term, (ords, tfs) in index.terms.items():
            data = _encode_postings(ords, tfs)
            pf.write(data)
            df.write(f"{term}\t{len(ords)}\t{index.ctf(term)}\t{offset}\t{len(data)}\n")
            offset += len(data)
    st = index.stats()
    stats = {
        "language": index.language,
        "num_docs": st.num_docs,
        "total_tokens": st.total_tokens,
        "avg_doc_len": st.avg_doc_len,
        "num_terms": st.num_terms,
        "postings_bytes": offset,
    }
    (path / "stats").write_text(json.dumps(stats, sort_keys=True) + "\n", encoding="utf-8")
    # written last: a directory without VERSION is an incomplete save
    (path / "VERSION").write_text(FORMAT_TAG + "\n", encoding="utf-8")


def load(path) -> InvertedIndex:
    if not str(path):
        raise IndexFormatError("empty index path")
    path = Path(path)
    try:
        tag = (path / "VERSION").read_text(encoding="utf-8").strip()
    except OSError as e:
        raise IndexFormatError(f"no index at {path}: {e}") from None
    if tag != FORMAT_TAG:
        raise IndexFormatError(f"unsupported or corrupt index version {tag!r} (expected {FORMAT_TAG!r})")
    try:
        stats = json.loads((path / "stats").read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise IndexFormatError(f"corrupt index stats: {e}") from None

    doc_ids: list[str] = []
    doc_lens: list[int] = []
    with open(path / "docs", "r", encoding="utf-8") as f:
        for line in f:
            doc_id, n = line.rstrip("\n").split("\t")
            doc_ids.append(doc_id)
            doc_lens.append(int(n))
    if len(doc_ids) != stats["num_docs"] or sum(doc_lens) != stats["total_tokens"]:
        raise IndexFormatError("index doc table does not match stats (truncated?)")

    blob = (path / "postings").read_bytes()
    if len(blob) != stats["postings_bytes"]:
        raise IndexFormatError(f"postings file is {len(blob)} bytes, expected {stats['postings_bytes']}")
    terms: dict[str, tuple[list[int], list[int]]] = {}
    ctf: dict[str, int] = {}
    with open(path / "dict", "r", encoding="utf-8") as f:
        for line in f:
            term, df, tc, off, nbytes = line.rstrip("\n").split("\t")
            off, nbytes, df = int(off), int(nbytes), int(df)
            vals = _decode_varints(blob[off : off + nbytes])
            if len(vals) != 2 * df:
                raise IndexFormatError(f"postings for {term!r} have {len(vals) // 2} entries, expected {df}")
            ords = []
            prev = 0
            for gap in vals[0::2]:
                prev += gap
                ords.append(prev)
            terms[term] = (ords, vals[1::2])
            ctf[term] = int(tc)
    if len(terms) != stats["num_terms"]:
        raise IndexFormatError("index dictionary does not match stats (truncated?)")
    return InvertedIndex(stats["language"], doc_ids, doc_lens, terms, ctf)
