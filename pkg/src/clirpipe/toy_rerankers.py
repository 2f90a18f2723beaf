"""Reference external rerankers speaking the command-line protocol.

    python -m clirpipe.toy_rerankers {identity,length} REQUESTS DOCSTORE OUTPUT
"""

from __future__ import annotations

import argparse
import sys

from .corpus import DocStore
from .rerank import identity_reranker, length_reranker, read_requests
from .retrieval import RankedList, sort_entries, write_run

_RERANKERS = {"identity": identity_reranker, "length": length_reranker}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="clirpipe.toy_rerankers")
    parser.add_argument("name", choices=sorted(_RERANKERS))
    parser.add_argument("requests")
    parser.add_argument("docstore")
    parser.add_argument("output")
    args = parser.parse_args(argv)

    store = DocStore(args.docstore)
    fn = _RERANKERS[args.name]
    lists = [RankedList(r.topic_id, sort_entries(fn(r, store))) for r in read_requests(args.requests)]
    write_run(lists, args.output, args.name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
