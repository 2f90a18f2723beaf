"""Experiment configuration, pipeline plan, stage fingerprints, resume point.

Config files are JSON with whole-line ``#`` comments. Unknown keys,
duplicate keys and type mismatches are errors.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .textproc import ProcessingPolicy

log = logging.getLogger(__name__)

STAGES = ("ingest", "index", "retrieve", "rerank", "score")
_LANG_RE = re.compile(r"^[a-z]{2}$")


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, strict=True)


class DocumentsConfig(_Section):
    input_path: str = Field(min_length=1)
    format: Literal["jsonl"] = "jsonl"
    language: str
    store_raw: bool = True


class IndexConfig(_Section):
    chunks: int = Field(default=1, ge=1)


class TopicsConfig(_Section):
    input_path: str = Field(min_length=1)
    fields: tuple[Literal["title", "desc"], ...] = ("title", "desc")
    query_language: str
    translation_source: Literal["none", "machine", "human"] = "none"

    @model_validator(mode="after")
    def _fields_nonempty(self):
        if not self.fields:
            raise ValueError("topics.fields must not be empty")
        if len(set(self.fields)) != len(self.fields):
            raise ValueError("topics.fields has duplicates")
        return self


class Bm25Params(_Section):
    k1: float = Field(default=0.9, ge=0)
    b: float = Field(default=0.4, ge=0, le=1)


class QldParams(_Section):
    mu: float = Field(default=1000.0, gt=0)


class Rm3Params(_Section):
    enabled: bool = False
    fb_docs: int = Field(default=10, ge=1)
    fb_terms: int = Field(default=10, ge=1)
    orig_weight: float = Field(default=0.5, ge=0, le=1)


class PsqParams(_Section):
    table_path: Optional[str] = None
    min_prob: float = Field(default=0.01, ge=0, le=1)
    cum_prob: float = Field(default=0.97, gt=0, le=1)
    max_translations: int = Field(default=32, ge=1)
    scorer: Literal["bm25", "qld"] = "bm25"


class RetrieveConfig(_Section):
    model: Literal["bm25", "qld", "psq"] = "bm25"
    k: int = Field(default=1000, ge=1)
    bm25: Bm25Params = Bm25Params()
    qld: QldParams = QldParams()
    rm3: Rm3Params = Rm3Params()
    psq: PsqParams = PsqParams()


class RerankConfig(_Section):
    enabled: bool = False
    mode: Literal["inproc", "external"] = "inproc"
    name: Optional[str] = None
    command: tuple[str, ...] = ()


class ScoreConfig(_Section):
    qrels_path: Optional[str] = None
    measures: tuple[str, ...] = ("map", "ndcg_cut_1000", "recall_1000")


class ExperimentConfig(_Section):
    run_name: str = Field(min_length=1)
    output_dir: str = Field(min_length=1)
    documents: DocumentsConfig
    text: dict[str, ProcessingPolicy] = {}
    index: IndexConfig = IndexConfig()
    topics: TopicsConfig
    retrieve: RetrieveConfig = RetrieveConfig()
    rerank: RerankConfig = RerankConfig()
    score: ScoreConfig = ScoreConfig()

    @model_validator(mode="after")
    def _cross_checks(self):
        if any(c.isspace() for c in self.run_name):
            raise ValueError("run_name must not contain whitespace (it is the run-file tag)")
        for lang in (self.documents.language, self.topics.query_language, *self.text):
            if not _LANG_RE.match(lang):
                raise ValueError(f"{lang!r} is not an ISO-639-1 language code")
        for lang, policy in self.text.items():
            if policy.language != lang:
                raise ValueError(f"text.{lang}.language is {policy.language!r}")
        r = self.retrieve
        if r.model == "psq":
            if not r.psq.table_path:
                raise ValueError("retrieve.model = psq requires retrieve.psq.table_path")
            if self.topics.translation_source != "none":
                raise ValueError("psq projects the original topics; set topics.translation_source to none")
            if r.rm3.enabled:
                raise ValueError("rm3 is not supported together with psq")
        if self.rerank.enabled:
            if not self.documents.store_raw:
                raise ValueError("reranking needs documents.store_raw = true")
            if self.rerank.mode == "inproc" and not self.rerank.name:
                raise ValueError("rerank.mode = inproc requires rerank.name")
            if self.rerank.mode == "external" and not self.rerank.command:
                raise ValueError("rerank.mode = external requires a non-empty rerank.command")
        if self.score.qrels_path is not None and not self.score.measures:
            raise ValueError("score.measures must not be empty")
        return self

    def policy(self, language: str) -> ProcessingPolicy:
        """Processing policy for a language; defaults when not configured."""
        return self.text.get(language) or ProcessingPolicy(language=language)

    def query_language(self) -> str:
        """Language the processed query terms are in."""
        if self.topics.translation_source == "none":
            return self.topics.query_language
        return self.documents.language


# -- parsing ----------------------------------------------------------------


def _strip_comments(text: str) -> str:
    # keep the line so JSON error positions still match the file
    return "\n".join("" if line.lstrip().startswith("#") else line for line in text.split("\n"))


def _no_duplicates(pairs):
    obj = {}
    for k, v in pairs:
        if k in obj:
            raise ConfigError(f"syntax error: duplicate key {k!r}")
        obj[k] = v
    return obj


def load_raw(text: str) -> dict:
    try:
        obj = json.loads(_strip_comments(text), object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as e:
        raise ConfigError(f"syntax error at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    return obj


def _format_validation(e: ValidationError) -> str:
    msgs = []
    for err in e.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        if err["type"] == "extra_forbidden":
            msgs.append(f"unknown key {loc}")
        elif err["type"] == "missing":
            msgs.append(f"missing key {loc}")
        else:
            msgs.append(f"{loc}: {err['msg']}")
    return "; ".join(msgs)


def validate(raw: dict) -> ExperimentConfig:
    # each language's policy defaults its language to the key it sits under
    text = raw.get("text")
    if isinstance(text, dict):
        raw = dict(raw)
        raw["text"] = {
            lang: ({"language": lang, **pol} if isinstance(pol, dict) else pol) for lang, pol in text.items()
        }
    try:
        return ExperimentConfig.model_validate_json(json.dumps(raw))
    except ValidationError as e:
        raise ConfigError(f"invalid config: {_format_validation(e)}") from None


def _parse_override_value(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` settings; values are JSON, else plain strings."""
    raw = json.loads(json.dumps(raw))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {key!r}: {p!r} is not a section")
            node = nxt
        node[parts[-1]] = _parse_override_value(value)
    return raw


def parse_config(text: str, overrides: Optional[list[str]] = None) -> ExperimentConfig:
    raw = load_raw(text)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return validate(raw)


_PATH_KEYS = (
    ("output_dir",),
    ("documents", "input_path"),
    ("topics", "input_path"),
    ("retrieve", "psq", "table_path"),
    ("score", "qrels_path"),
)


def _resolve_paths(raw: dict, base: Path) -> dict:
    def fix(value):
        if isinstance(value, str) and value and not Path(value).is_absolute():
            return str(base / value)
        return value

    for keys in _PATH_KEYS:
        node = raw
        for k in keys[:-1]:
            node = node.get(k) if isinstance(node, dict) else None
        if isinstance(node, dict) and keys[-1] in node:
            node[keys[-1]] = fix(node[keys[-1]])
    for policy in (raw.get("text") or {}).values():
        sw = policy.get("stopwords") if isinstance(policy, dict) else None
        if isinstance(sw, dict) and "file" in sw:
            sw["file"] = fix(sw["file"])
    return raw


def load_config(path, overrides: Optional[list[str]] = None) -> ExperimentConfig:
    """Read a config file. Relative paths inside it are taken relative to the
    file's directory; override values are used as given.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    raw = _resolve_paths(load_raw(text), path.parent)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return validate(raw)


def to_dict(config: ExperimentConfig) -> dict:
    return config.model_dump(mode="json")


def canonical_json(obj) -> str:
    """Sorted keys, no whitespace, shortest round-trip floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def serialize(config: ExperimentConfig) -> str:
    return json.dumps(to_dict(config), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# -- plan and fingerprints --------------------------------------------------


class PipelinePlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    stages: tuple[str, ...]
    fingerprints: dict[str, str]

    def index_of(self, stage: str) -> int:
        return self.stages.index(stage)


def _stage_sections(config: ExperimentConfig, stage: str) -> dict:
    d = to_dict(config)
    if stage == "ingest":
        return {"documents": d["documents"]}
    if stage == "index":
        return {"text": d["text"], "index": d["index"]}
    if stage == "retrieve":
        return {"run_name": d["run_name"], "topics": d["topics"], "retrieve": d["retrieve"]}
    if stage == "rerank":
        return {"rerank": d["rerank"]}
    if stage == "score":
        return {"score": d["score"]}
    raise ConfigError(f"unknown stage {stage!r}")


def _stage_inputs(config: ExperimentConfig, stage: str) -> list[str]:
    if stage == "ingest":
        return [config.documents.input_path]
    if stage == "index":
        # stopword files are inputs to processing
        return sorted(
            p.stopwords.file for p in config.text.values() if not isinstance(p.stopwords, str)
        )
    if stage == "retrieve":
        paths = [config.topics.input_path]
        if config.retrieve.model == "psq":
            paths.append(config.retrieve.psq.table_path)
        return paths
    if stage == "score":
        return [config.score.qrels_path]
    return []


def file_digest(path) -> dict:
    h = hashlib.sha256()
    size = 0
    try:
        with open(path, "rb") as f:
            while True:
                buf = f.read(1 << 20)
                if not buf:
                    break
                h.update(buf)
                size += len(buf)
    except OSError as e:
        raise ConfigError(f"missing input file {path}: {e}") from None
    return {"path": str(path), "size": size, "sha256": h.hexdigest()}


def _active_stages(config: ExperimentConfig) -> list[str]:
    stages = ["ingest", "index", "retrieve"]
    if config.rerank.enabled:
        stages.append("rerank")
    if config.score.qrels_path:
        stages.append("score")
    return stages


def _chain_digests(config: ExperimentConfig, stages: list[str]) -> dict[str, str]:
    digests = {}
    upstream = ""
    for s in stages:
        payload = {
            "stage": s,
            "config": _stage_sections(config, s),
            "inputs": [file_digest(p) for p in _stage_inputs(config, s)],
            "upstream": upstream,
        }
        upstream = hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()
        digests[s] = upstream
    return digests


def stage_fingerprint(config: ExperimentConfig, stage: str) -> str:
    """sha256 over this stage's config and inputs, chained onto the upstream digest."""
    stages = _active_stages(config)
    if stage not in stages:
        raise ConfigError(f"stage {stage!r} is not part of this pipeline")
    return _chain_digests(config, stages[: stages.index(stage) + 1])[stage]


def plan(config: ExperimentConfig) -> PipelinePlan:
    if config.rerank.enabled and config.rerank.mode == "inproc":
        from . import rerank

        if config.rerank.name not in rerank.registered():
            raise ConfigError(f"invalid config: rerank.name {config.rerank.name!r} is not a registered reranker")
    stages = _active_stages(config)
    return PipelinePlan(stages=tuple(stages), fingerprints=_chain_digests(config, stages))


# -- manifests and resume ---------------------------------------------------


def manifest_path(output_dir, stage: str) -> Path:
    return Path(output_dir) / "manifest" / f"{stage}.done"


def read_manifest(output_dir, stage: str) -> Optional[dict]:
    path = manifest_path(output_dir, stage)
    if not path.exists():
        return None
    try:
        m = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(m, dict) or m.get("status") != "complete" or not isinstance(m.get("digest"), str):
            raise ValueError("missing digest or completion marker")
        return m
    except (ValueError, OSError) as e:
        log.warning("ignoring corrupt manifest %s: %s", path, e)
        return None


def write_manifest(output_dir, stage: str, digest: str, finished_at: str, artifact_paths: list[str]) -> None:
    path = manifest_path(output_dir, stage)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {
        "stage": stage,
        "digest": digest,
        "status": "complete",
        "finished_at": finished_at,
        "artifact_paths": artifact_paths,
    }
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    tmp.replace(path)


def find_resume_point(output_dir, plan_: PipelinePlan) -> int:
    for i, stage in enumerate(plan_.stages):
        m = read_manifest(output_dir, stage)
        if m is None or m["digest"] != plan_.fingerprints[stage]:
            return i
    return len(plan_.stages)
