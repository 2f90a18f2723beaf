import json
import sys

import pytest

from clirpipe.cli import main
from clirpipe.config import manifest_path
from clirpipe.evaluation import load_run


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_happy_path(clir_fixture, capsys):
    code, out, _ = run(capsys, "run", "-c", str(clir_fixture / "psq.json"))
    assert code == 0
    outdir = clir_fixture / "out" / "psq"
    runs = load_run(outdir / "retrieve.run")
    assert len(runs) == 25
    assert (outdir / "scores.tsv").read_text(encoding="utf-8").endswith(out.splitlines()[-2] + "\n")
    assert out.splitlines()[-1].startswith("MAP ")
    full = json.loads((outdir / "config_full.json").read_text(encoding="utf-8"))
    assert full["retrieve"]["bm25"] == {"k1": 0.9, "b": 0.4}
    for stage in ("ingest", "index", "retrieve", "score"):
        assert manifest_path(outdir, stage).exists()


def test_override_k(clir_fixture, capsys):
    code, _, _ = run(capsys, "run", "-c", str(clir_fixture / "qt.json"), "-o", "retrieve.k=10", "--stop-after", "retrieve")
    assert code == 0
    runs = load_run(clir_fixture / "out" / "qt" / "retrieve.run")
    assert runs and all(len(rl.entries) <= 10 for rl in runs.values())


def test_stop_after_then_resume_is_byte_identical(clir_fixture, capsys):
    cfg = str(clir_fixture / "qt.json")
    assert run(capsys, "run", "-c", cfg, "--output-dir", str(clir_fixture / "straight"))[0] == 0
    resumed = clir_fixture / "resumed"
    assert run(capsys, "run", "-c", cfg, "--output-dir", str(resumed), "--stop-after", "index")[0] == 0
    assert not (resumed / "retrieve.run").exists()
    index_manifest = manifest_path(resumed, "index").read_bytes()
    assert run(capsys, "run", "-c", cfg, "--output-dir", str(resumed), "--resume")[0] == 0
    # completed stages were skipped, not redone
    assert manifest_path(resumed, "index").read_bytes() == index_manifest
    for name in ("retrieve.run", "scores.tsv"):
        assert (resumed / name).read_bytes() == (clir_fixture / "straight" / name).read_bytes()


def test_worker_count_does_not_change_output(clir_fixture, capsys):
    cfg = str(clir_fixture / "ht_rm3.json")
    for w in (1, 4):
        assert run(capsys, "run", "-c", cfg, "--workers", str(w), "--output-dir", str(clir_fixture / f"w{w}"))[0] == 0
    for name in ("retrieve.run", "rerank.run", "scores.tsv", "index/postings", "index/dict", "docstore/records.bin"):
        assert (clir_fixture / "w1" / name).read_bytes() == (clir_fixture / "w4" / name).read_bytes()


def test_validation_failure_exit_2(clir_fixture, capsys):
    code, _, err = run(capsys, "run", "-c", str(clir_fixture / "qt.json"), "-o", "retrieve.k=0")
    assert code == 2 and "retrieve.k" in err
    code, _, err = run(capsys, "run", "-c", str(clir_fixture / "missing.json"))
    assert code == 2
    code, _, err = run(capsys, "run", "-c", str(clir_fixture / "qt.json"), "--stop-after", "rerank")
    assert code == 2 and "rerank" in err


def test_stage_failure_exit_1_and_resume_at_rerank(clir_fixture, capsys, caplog, tmp_path):
    failing = tmp_path / "fail.py"
    failing.write_text("import sys\nsys.stderr.write('boom')\nsys.exit(1)\n", encoding="utf-8")
    base = ["run", "-c", str(clir_fixture / "qt.json"), "-o", "rerank.enabled=true", "-o", "rerank.mode=external"]
    code, _, err = run(capsys, *base, "-o", f'rerank.command=["{sys.executable}", "{failing}"]')
    assert code == 1
    assert "rerank" in err and "boom" in err
    outdir = clir_fixture / "out" / "qt"
    first_stage = (outdir / "retrieve.run").read_bytes()
    assert manifest_path(outdir, "retrieve").exists()
    assert not manifest_path(outdir, "rerank").exists()

    good = f'rerank.command=["{sys.executable}", "-m", "clirpipe.toy_rerankers", "identity"]'
    caplog.set_level("INFO")
    code, _, err = run(capsys, *base, "-o", good, "--resume")
    assert code == 0
    assert "resuming at stage 3" in caplog.text
    assert (outdir / "retrieve.run").read_bytes() == first_stage


def test_eval_ideal_run(tmp_path, capsys):
    (tmp_path / "qrels").write_text("1 0 a 2\n1 0 b 1\n1 0 c 0\n", encoding="utf-8")
    (tmp_path / "run").write_text("1 Q0 a 1 2.0 x\n1 Q0 b 2 1.0 x\n", encoding="utf-8")
    code, out, _ = run(capsys, "eval", str(tmp_path / "run"), str(tmp_path / "qrels"))
    assert code == 0
    assert "all\tmap\t1.0000" in out
    assert out.splitlines()[-1] == "MAP 1.0000  nDCG@1000 1.0000  R@1000 1.0000"


def test_eval_missing_qrels(tmp_path, capsys):
    (tmp_path / "run").write_text("1 Q0 a 1 2.0 x\n", encoding="utf-8")
    code, _, err = run(capsys, "eval", str(tmp_path / "run"), str(tmp_path / "nope"))
    assert code == 2 and "nope" in err


def test_eval_bad_measure(tmp_path, capsys):
    (tmp_path / "run").write_text("1 Q0 a 1 2.0 x\n", encoding="utf-8")
    (tmp_path / "qrels").write_text("1 0 a 1\n", encoding="utf-8")
    assert run(capsys, "eval", str(tmp_path / "run"), str(tmp_path / "qrels"), "-m", "p_5")[0] == 2


def test_eval_matches_pipeline_report(clir_fixture, capsys):
    assert run(capsys, "run", "-c", str(clir_fixture / "ht_rm3.json"))[0] == 0
    outdir = clir_fixture / "out" / "ht_rm3"
    code, out, _ = run(capsys, "eval", str(outdir / "rerank.run"), str(clir_fixture / "qrels.txt"))
    assert code == 0
    assert out.splitlines()[:-1] == (outdir / "scores.tsv").read_text(encoding="utf-8").splitlines()


def test_usage_error_from_argparse(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 2
