"""Stage execution with completion manifests and resume.

Artifacts under ``output_dir``::

    config_full.json     effective config with defaults expanded
    docstore/            original documents (when documents.store_raw)
    index/               inverted index
    retrieve.run         first-stage run
    rerank/              external reranker workdir
    rerank.run           reranked run
    scores.tsv           evaluation report
    manifest/<stage>.done
"""

from __future__ import annotations

import logging
import shutil
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import corpus, evaluation, index as index_mod, rerank as rerank_mod
from .config import (
    ExperimentConfig,
    PipelinePlan,
    find_resume_point,
    manifest_path,
    plan as make_plan,
    serialize,
    write_manifest,
)
from .parallel import LocalScheduler, split_ranges
from .psq import TranslationTable, psq_project, score_psq
from .retrieval import RankedList, load_topics, make_query, query_text, rm3_expand, score, write_run

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunResult:
    plan: PipelinePlan
    executed: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    final_run: Optional[Path] = None
    report: Optional[evaluation.MetricReport] = None


def _ingest_range(job):
    input_path, language, part_dir, start, stop = job
    writer = corpus.DocStoreWriter(part_dir, language)
    n = writer.extend(corpus.ingest(input_path, language, start, stop))
    writer.finalize()
    return part_dir if n else None


# per-process retrieval state, filled by _init_retrieval
_STATE: dict = {}


def _init_retrieval(config: ExperimentConfig, index_dir: str) -> None:
    _STATE["config"] = config
    _STATE["index"] = index_mod.load(index_dir)
    r = config.retrieve
    _STATE["table"] = TranslationTable.load(r.psq.table_path) if r.model == "psq" else None


def _selector(config: ExperimentConfig):
    if config.topics.translation_source == "none":
        return None
    return (config.documents.language, config.topics.translation_source)


def retrieve_topic(topic) -> RankedList:
    config: ExperimentConfig = _STATE["config"]
    idx = _STATE["index"]
    r = config.retrieve
    query = make_query(topic, config.topics.fields, _selector(config), config.policy(config.query_language()))
    if r.model == "psq":
        p = r.psq
        sq = psq_project(query, _STATE["table"], p.min_prob, p.cum_prob, p.max_translations)
        params = r.bm25.model_dump() if p.scorer == "bm25" else r.qld.model_dump()
        return score_psq(idx, sq, r.k, p.scorer, params)
    params = r.bm25.model_dump() if r.model == "bm25" else r.qld.model_dump()
    if r.rm3.enabled:
        query = rm3_expand(idx, query, r.rm3.fb_docs, r.rm3.fb_terms, r.rm3.orig_weight, r.model, params)
    return score(idx, query, r.k, r.model, params)


class Pipeline:
    def __init__(self, config: ExperimentConfig, workers: int = 1):
        self.config = config
        self.out = Path(config.output_dir)
        self.scheduler = LocalScheduler(workers)
        self.plan = make_plan(config)

    # artifact locations
    @property
    def docstore_dir(self) -> Path:
        return self.out / "docstore"

    @property
    def index_dir(self) -> Path:
        return self.out / "index"

    @property
    def retrieve_run(self) -> Path:
        return self.out / "retrieve.run"

    @property
    def rerank_run(self) -> Path:
        return self.out / "rerank.run"

    @property
    def report_path(self) -> Path:
        return self.out / "scores.tsv"

    def final_run(self) -> Path:
        return self.rerank_run if "rerank" in self.plan.stages else self.retrieve_run

    def run(self, resume: bool = False, stop_after: Optional[str] = None, echo=None) -> RunResult:
        """Run the plan; ``echo`` (a text stream) also receives the score report."""
        if stop_after is not None and stop_after not in self.plan.stages:
            raise ValueError(f"--stop-after {stop_after!r} is not a stage of this pipeline {list(self.plan.stages)}")
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "config_full.json").write_text(serialize(self.config), encoding="utf-8")
        log.info("effective config:\n%s", serialize(self.config))

        start = find_resume_point(self.out, self.plan) if resume else 0
        for stage in self.plan.stages[start:]:
            manifest_path(self.out, stage).unlink(missing_ok=True)
        result = RunResult(self.plan, skipped=list(self.plan.stages[:start]))
        if start:
            log.info("resuming at stage %d (%s)", start, ", ".join(result.skipped) + " already complete")

        last = self.plan.index_of(stop_after) if stop_after else len(self.plan.stages) - 1
        for stage in self.plan.stages[start : last + 1]:
            t0 = time.perf_counter()
            try:
                artifacts = getattr(self, f"_stage_{stage}")(result, echo)
            except Exception as e:
                raise StageError(stage, e) from e
            write_manifest(
                self.out,
                stage,
                self.plan.fingerprints[stage],
                datetime.now(timezone.utc).isoformat(timespec="seconds"),
                [str(p) for p in artifacts],
            )
            result.executed.append(stage)
            log.info("stage %s finished in %.2fs", stage, time.perf_counter() - t0)
        if self.final_run().exists():
            result.final_run = self.final_run()
        return result

    # -- stages -------------------------------------------------------------

    def _stage_ingest(self, result, echo):
        d = self.config.documents
        if not d.store_raw:
            n = sum(1 for _ in corpus.ingest(d.input_path, d.language))
            log.info("ingest: validated %d documents", n)
            return []
        parts_dir = self.out / "docstore_parts"
        shutil.rmtree(parts_dir, ignore_errors=True)
        shutil.rmtree(self.docstore_dir, ignore_errors=True)
        n_lines = corpus.count_lines(d.input_path)
        jobs = [
            (d.input_path, d.language, str(parts_dir / f"part-{i:05d}"), a, b)
            for i, (a, b) in enumerate(split_ranges(n_lines, self.config.index.chunks))
        ]
        part_dirs = [p for p in self.scheduler.map(_ingest_range, jobs) if p is not None]
        if not part_dirs:
            raise corpus.CorpusError(f"no documents in {d.input_path}")
        store = corpus.store_merge([corpus.DocStore(p) for p in part_dirs], self.docstore_dir)
        shutil.rmtree(parts_dir, ignore_errors=True)
        log.info("ingest: stored %d documents", len(store))
        return [self.docstore_dir]

    def _stage_index(self, result, echo):
        d = self.config.documents
        shutil.rmtree(self.index_dir, ignore_errors=True)
        idx = index_mod.build_parallel(
            d.input_path, d.language, self.config.policy(d.language), self.config.index.chunks, self.scheduler
        )
        index_mod.save(idx, self.index_dir)
        st = idx.stats()
        log.info("index: %d documents, %d terms, %d tokens", st.num_docs, st.num_terms, st.total_tokens)
        return [self.index_dir]

    def _stage_retrieve(self, result, echo):
        topics = load_topics(self.config.topics.input_path, self.config.topics.query_language)
        lists = self.scheduler.map(
            retrieve_topic, topics, initializer=_init_retrieval, initargs=(self.config, str(self.index_dir))
        )
        _STATE.clear()
        write_run(lists, self.retrieve_run, self.config.run_name)
        log.info("retrieve: %d topics", len(topics))
        return [self.retrieve_run]

    def _stage_rerank(self, result, echo):
        cfg = self.config
        topics = load_topics(cfg.topics.input_path, cfg.topics.query_language)
        first = evaluation.load_run(self.retrieve_run)
        requests = [
            rerank_mod.RerankRequest(t.id, query_text(t, cfg.topics.fields, _selector(cfg)), tuple(first[t.id].doc_ids()))
            for t in topics
            if t.id in first
        ]
        if cfg.rerank.mode == "inproc":
            store = corpus.DocStore(self.docstore_dir)
            reranked = rerank_mod.rerank_inproc(rerank_mod.resolve(cfg.rerank.name), requests, store)
        else:
            reranked = rerank_mod.rerank_external(
                cfg.rerank.command, requests, self.docstore_dir, self.out / "rerank"
            )
        write_run(reranked, self.rerank_run, cfg.run_name)
        log.info("rerank: %d topics", len(reranked))
        return [self.rerank_run]

    def _stage_score(self, result, echo):
        report = evaluation.evaluate(self.final_run(), self.config.score.qrels_path, self.config.score.measures)
        self.report_path.write_text(report.to_tsv(), encoding="utf-8")
        if echo is not None:
            echo.write(report.to_tsv())
            echo.write(report.summary() + "\n")
        result.report = report
        return [self.report_path]
