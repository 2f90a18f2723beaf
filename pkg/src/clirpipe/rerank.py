"""Second-stage reranking, in process or through an external command.

External protocol: the pipeline writes ``requests.jsonl`` (one
``{"topic_id", "query", "doc_ids"}`` object per line) and runs::

    <command...> <requests.jsonl> <docstore_dir> <output.run>

The command writes a standard 6-column run file to ``output.run`` and
exits 0. It may drop candidates but never add new ones.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .corpus import DocStore
from .evaluation import EvalError, load_run
from .retrieval import RankedList, sort_entries


class RerankError(RuntimeError):
    pass


@dataclass(frozen=True)
class RerankRequest:
    topic_id: str
    query: str
    doc_ids: tuple[str, ...]

    def to_json(self) -> str:
        return json.dumps(
            {"topic_id": self.topic_id, "query": self.query, "doc_ids": list(self.doc_ids)},
            ensure_ascii=False,
            separators=(",", ":"),
        )


# (request, docstore) -> [(doc_id, score)]
Reranker = Callable[[RerankRequest, DocStore], Sequence[tuple[str, float]]]

_REGISTRY: dict[str, Reranker] = {}


def register(name: str, reranker: Reranker) -> None:
    if name in _REGISTRY:
        raise ValueError(f"reranker {name!r} is already registered")
    _REGISTRY[name] = reranker


def resolve(name: str) -> Reranker:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown reranker {name!r}; registered: {sorted(_REGISTRY)}") from None


def registered() -> list[str]:
    return sorted(_REGISTRY)


def identity_reranker(request: RerankRequest, store: DocStore) -> list[tuple[str, float]]:
    """Keeps the first-stage order: score = reversed rank."""
    n = len(request.doc_ids)
    return [(d, float(n - i)) for i, d in enumerate(request.doc_ids)]


def length_reranker(request: RerankRequest, store: DocStore) -> list[tuple[str, float]]:
    """Shorter original text ranks higher."""
    return [(d, -float(len(store.get(d).text))) for d in request.doc_ids]


register("identity", identity_reranker)
register("length", length_reranker)


def _validate(request: RerankRequest, entries, where: str) -> RankedList:
    allowed = set(request.doc_ids)
    seen = set()
    for doc_id, _ in entries:
        if doc_id not in allowed:
            raise RerankError(f"{where}: topic {request.topic_id} returned unknown doc id {doc_id!r}")
        if doc_id in seen:
            raise RerankError(f"{where}: topic {request.topic_id} returned {doc_id!r} twice")
        seen.add(doc_id)
    return RankedList(request.topic_id, sort_entries((d, float(s)) for d, s in entries))


def rerank_inproc(reranker: Reranker, requests: Sequence[RerankRequest], store: DocStore) -> list[RankedList]:
    return [_validate(req, reranker(req, store), "reranker") for req in requests]


def write_requests(requests: Sequence[RerankRequest], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for req in requests:
            f.write(req.to_json() + "\n")


def read_requests(path) -> list[RerankRequest]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                obj = json.loads(line)
                out.append(RerankRequest(obj["topic_id"], obj["query"], tuple(obj["doc_ids"])))
    return out


def rerank_external(
    command: Sequence[str], requests: Sequence[RerankRequest], docstore_path, workdir
) -> list[RankedList]:
    if not command:
        raise RerankError("external reranker command is empty")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    req_path = workdir / "requests.jsonl"
    out_path = workdir / "output.run"
    if out_path.exists():
        out_path.unlink()
    write_requests(requests, req_path)
    try:
        proc = subprocess.run(
            [*command, str(req_path), str(docstore_path), str(out_path)],
            capture_output=True,
            text=True,
        )
    except OSError as e:
        raise RerankError(f"cannot start reranker {command[0]!r}: {e}") from e
    if proc.returncode != 0:
        raise RerankError(f"reranker exited with status {proc.returncode}: {proc.stderr.strip()}")
    if not out_path.exists():
        raise RerankError(f"reranker did not write {out_path}")
    try:
        runs = load_run(out_path)
    except EvalError as e:
        raise RerankError(f"reranker output is not a valid run file: {e}") from None
    missing = [r.topic_id for r in requests if r.topic_id not in runs]
    if missing:
        raise RerankError(f"reranker output is missing topics: {' '.join(missing)}")
    extra = sorted(set(runs) - {r.topic_id for r in requests})
    if extra:
        raise RerankError(f"reranker output has unrequested topics: {' '.join(extra)}")
    return [_validate(r, runs[r.topic_id].entries, "external reranker") for r in requests]
