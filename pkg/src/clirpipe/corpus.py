"""Document ingest and the on-disk document store.

Store layout (``<dir>/records.bin``, ``offsets.idx``, ``header``):

* ``records.bin``: records back to back, each a 4-byte big-endian length
  followed by that many bytes of UTF-8 JSON ``{"id", "title", "text",
  "language"}``.
* ``offsets.idx``: one ``id<TAB>offset<TAB>length`` line per record, sorted
  by id. ``offset`` points at the length prefix, ``length`` counts the
  JSON payload only.
* ``header``: JSON ``{"version", "count", "language"}``.

Rerankers running out of process read this layout directly.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

STORE_VERSION = 1
_LEN = struct.Struct(">I")


class CorpusError(ValueError):
    pass


class DuplicateIdError(CorpusError):
    pass


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    language: str
    title: str = ""

    def __post_init__(self):
        if not self.id or any(c.isspace() for c in self.id):
            raise CorpusError(f"invalid document id {self.id!r}")
        if not self.language:
            raise CorpusError(f"document {self.id} has no language")


def count_lines(path) -> int:
    n = 0
    with open(path, "rb") as f:
        for _ in f:
            n += 1
    return n


def _parse_doc_line(line: str, lineno: int, language: str) -> Document:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusError(f"line {lineno}: invalid JSON ({e.msg})") from None
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    doc_id = obj.get("id")
    text = obj.get("text")
    title = obj.get("title", "")
    lang = obj.get("language") or language
    if not isinstance(doc_id, str) or not doc_id:
        raise CorpusError(f"line {lineno}: missing or non-string 'id'")
    if not isinstance(text, str):
        raise CorpusError(f"line {lineno}: missing or non-string 'text'")
    if not isinstance(title, str) or not isinstance(lang, str):
        raise CorpusError(f"line {lineno}: 'title' and 'language' must be strings")
    try:
        return Document(id=doc_id, title=title, text=text, language=lang)
    except CorpusError as e:
        raise CorpusError(f"line {lineno}: {e}") from None


def ingest(input_path, language: str, start: int = 0, stop: Optional[int] = None) -> Iterator[Document]:
    """Stream documents from a JSONL file, in file order.

    ``start``/``stop`` restrict reading to a 0-based line range so chunks of
    one file can be processed independently. Blank lines are skipped but
    still counted for error messages.
    """
    seen = set()
    with open(input_path, "r", encoding="utf-8") as f:
        for i, line in enumerate(f):
            if i < start:
                continue
            if stop is not None and i >= stop:
                break
            if not line.strip():
                continue
            doc = _parse_doc_line(line, i + 1, language)
            if doc.id in seen:
                raise DuplicateIdError(f"line {i + 1}: duplicate document id {doc.id!r}")
            seen.add(doc.id)
            yield doc


def _encode(doc: Document) -> bytes:
    payload = json.dumps(
        {"id": doc.id, "title": doc.title, "text": doc.text, "language": doc.language},
        ensure_ascii=False,
        separators=(",", ":"),
    ).encode("utf-8")
    return _LEN.pack(len(payload)) + payload


def _decode(payload: bytes) -> Document:
    obj = json.loads(payload.decode("utf-8"))
    return Document(**obj)


class DocStoreWriter:
    """Append-only writer; call :meth:`finalize` to produce a readable store."""

    def __init__(self, path, language: str):
        self.path = Path(path)
        self.language = language
        self.path.mkdir(parents=True, exist_ok=True)
        self._records = open(self.path / "records.bin", "wb")
        self._offsets: dict[str, tuple[int, int]] = {}
        self._pos = 0
        self._finalized = False

    def append(self, doc: Document) -> None:
        if self._finalized:
            raise CorpusError("cannot append to a finalized document store")
        if doc.id in self._offsets:
            raise DuplicateIdError(f"duplicate document id {doc.id!r}")
        data = _encode(doc)
        self._records.write(data)
        self._offsets[doc.id] = (self._pos, len(data) - _LEN.size)
        self._pos += len(data)

    def extend(self, docs: Iterable[Document]) -> int:
        n = 0
        for d in docs:
            self.append(d)
            n += 1
        return n

    def finalize(self) -> "DocStore":
        if not self._finalized:
            self._records.close()
            _write_sidecars(self.path, self._offsets, self.language)
            self._finalized = True
        return DocStore(self.path)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if not self._finalized:
            self._records.close()


def _write_sidecars(path: Path, offsets: dict[str, tuple[int, int]], language: str) -> None:
    with open(path / "offsets.idx", "w", encoding="utf-8") as f:
        for doc_id in sorted(offsets):
            off, length = offsets[doc_id]
            f.write(f"{doc_id}\t{off}\t{length}\n")
    header = {"version": STORE_VERSION, "count": len(offsets), "language": language}
    (path / "header").write_text(json.dumps(header, sort_keys=True) + "\n", encoding="utf-8")


class DocStore:
    """Read-only view of a finalized store. Safe for concurrent readers."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            header = json.loads((self.path / "header").read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise CorpusError(f"unreadable document store header in {self.path}: {e}") from None
        if header.get("version") != STORE_VERSION:
            raise CorpusError(f"unsupported document store version {header.get('version')!r}")
        self.language = header["language"]
        self._offsets: dict[str, tuple[int, int]] = {}
        with open(self.path / "offsets.idx", "r", encoding="utf-8") as f:
            for line in f:
                doc_id, off, length = line.rstrip("\n").split("\t")
                self._offsets[doc_id] = (int(off), int(length))
        if len(self._offsets) != header["count"]:
            raise CorpusError(
                f"document store count mismatch: header says {header['count']}, index has {len(self._offsets)}"
            )

    def __len__(self) -> int:
        return len(self._offsets)

    def __contains__(self, doc_id) -> bool:
        return doc_id in self._offsets

    def ids(self) -> list[str]:
        return list(self._offsets)

    def get(self, doc_id: str) -> Document:
        try:
            off, length = self._offsets[doc_id]
        except KeyError:
            raise KeyError(f"unknown document id {doc_id!r}") from None
        with open(self.path / "records.bin", "rb") as f:
            f.seek(off + _LEN.size)
            payload = f.read(length)
        if len(payload) != length:
            raise CorpusError(f"truncated record for {doc_id!r}")
        doc = _decode(payload)
        if doc.id != doc_id:
            raise CorpusError(f"offset index points {doc_id!r} at record {doc.id!r}")
        return doc

    def record_offsets(self) -> list[tuple[str, int, int]]:
        """(id, offset, length) in record order."""
        return sorted(((k, o, n) for k, (o, n) in self._offsets.items()), key=lambda r: r[1])


def store_merge(parts: list[DocStore], path) -> DocStore:
    """Concatenate finalized stores in part order into a new store at ``path``.

    The result is byte-identical to appending every part's records
    sequentially into one store.
    """
    if not parts:
        raise CorpusError("nothing to merge")
    language = parts[0].language
    for p in parts[1:]:
        if p.language != language:
            raise CorpusError(f"language mismatch in merge: {language} vs {p.language}")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    offsets: dict[str, tuple[int, int]] = {}
    base = 0
    with open(path / "records.bin", "wb") as out:
        for part in parts:
            for doc_id, off, length in part.record_offsets():
                if doc_id in offsets:
                    raise DuplicateIdError(f"document id collision across store parts: {doc_id!r}")
                offsets[doc_id] = (base + off, length)
            with open(part.path / "records.bin", "rb") as f:
                size = os.fstat(f.fileno()).st_size
                while True:
                    buf = f.read(1 << 20)
                    if not buf:
                        break
                    out.write(buf)
            base += size
    _write_sidecars(path, offsets, language)
    return DocStore(path)
