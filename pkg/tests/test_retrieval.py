import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from clirpipe.corpus import Document
from clirpipe.evaluation import load_run
from clirpipe.index import build_chunk
from clirpipe.retrieval import (
    Query,
    RankedList,
    Topic,
    TopicError,
    Translation,
    format_run,
    load_topics,
    make_query,
    score_bm25,
    score_qld,
    write_run,
)
from clirpipe.textproc import ProcessingPolicy

from conftest import write_jsonl
from oracles import as_documents, brute_bm25, brute_qld, random_query, zipf_corpus


def _single(plain_policy, text="a b a"):
    return build_chunk([Document(id="d1", text=text, language="en")], plain_policy)


def test_bm25_single_doc_formula(plain_policy):
    idx = _single(plain_policy)
    # N=1, df=1: idf = ln(1 + 0.5/1.5); |d| = avgdl so the length norm is k1
    expected = math.log(4 / 3) * 2 * 1.9 / (2 + 0.9)
    rl = score_bm25(idx, Query("q", {"a": 1.0}), 10, k1=0.9, b=0.4)
    assert rl.entries == [("d1", pytest.approx(expected, abs=1e-12))]
    assert rl.entries[0][1] == brute_bm25([["a", "b", "a"]], ["d1"], {"a": 1.0}, 10, 0.9, 0.4)[0][1]


def test_qld_single_doc_formula(plain_policy):
    idx = _single(plain_policy)
    expected = math.log((2 + 1000 * 2 / 3) / (3 + 1000))
    rl = score_qld(idx, Query("q", {"a": 1.0}), 10, mu=1000)
    assert rl.entries[0][1] == pytest.approx(expected, abs=1e-12)
    assert rl.entries[0][1] == brute_qld([["a", "b", "a"]], ["d1"], {"a": 1.0}, 10, 1000)[0][1]


def test_no_matching_term_gives_empty_list(plain_policy):
    idx = _single(plain_policy)
    assert score_bm25(idx, Query("q", {"zz": 1.0}), 10).entries == []
    assert score_qld(idx, Query("q", {"zz": 1.0}), 10).entries == []


def test_bad_k_and_mu(plain_policy):
    idx = _single(plain_policy)
    with pytest.raises(ValueError):
        score_bm25(idx, Query("q", {"a": 1.0}), 0)
    with pytest.raises(ValueError):
        score_qld(idx, Query("q", {"a": 1.0}), 5, mu=0)


@pytest.mark.parametrize("seed", range(5))
def test_generated_corpus_matches_full_scan(plain_policy, seed):
    rng = random.Random(seed)
    toks = zipf_corpus(rng, 200)
    docs = as_documents(toks)
    ids = [d.id for d in docs]
    idx = build_chunk(docs, plain_policy)
    for _ in range(20):
        q = random_query(rng)
        k = rng.choice([5, 50, 1000])
        got = score_bm25(idx, Query("q", q), k, 1.2, 0.75).entries
        want = brute_bm25(toks, ids, q, k, 1.2, 0.75)
        assert [d for d, _ in got] == [d for d, _ in want]
        assert all(abs(a - b) <= 1e-9 for (_, a), (_, b) in zip(got, want))
        got = score_qld(idx, Query("q", q), k, 500.0).entries
        want = brute_qld(toks, ids, q, k, 500.0)
        assert [d for d, _ in got] == [d for d, _ in want]
        assert all(abs(a - b) <= 1e-9 for (_, a), (_, b) in zip(got, want))


def test_absent_term_does_not_change_qld_ranking(plain_policy):
    rng = random.Random(8)
    idx = build_chunk(as_documents(zipf_corpus(rng, 100)), plain_policy)
    base = {"t1": 1.0, "t5": 2.0}
    assert score_qld(idx, Query("q", {**base, "zzabsent": 3.0}), 50) == score_qld(idx, Query("q", base), 50)


def test_tie_rule_doc_id_descending(plain_policy):
    docs = [Document(id=i, text="a b", language="en") for i in ["D1", "D3", "D2"]]
    idx = build_chunk(docs, plain_policy)
    rl = score_bm25(idx, Query("q", {"a": 1.0}), 10)
    assert rl.doc_ids() == ["D3", "D2", "D1"]
    assert score_bm25(idx, Query("q", {"a": 1.0}), 2).doc_ids() == ["D3", "D2"]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 5), st.integers(1, 6), st.integers(0, 10**6))
def test_bm25_monotone_in_tf(base_tf, extra, seed):
    plain_policy = ProcessingPolicy(language="en")
    rng = random.Random(seed)
    others = [rng.choices(["a", "b", "c"], k=rng.randint(1, 8)) for _ in range(4)]
    filler = ["c"] * 3

    def score_of(tf):
        docs = [Document(id="target", text=" ".join(["a"] * tf + filler), language="en")]
        docs += [Document(id=f"o{i}", text=" ".join(t), language="en") for i, t in enumerate(others)]
        rl = score_bm25(build_chunk(docs, plain_policy), Query("q", {"a": 1.0}), 100)
        return dict(rl.entries).get("target", 0.0)

    # raising tf in one document also raises its length; the score must still not drop
    assert score_of(base_tf + extra) >= score_of(base_tf)


# -- topics and queries -------------------------------------------------------


def test_load_topics_with_translations(tmp_path):
    path = write_jsonl(tmp_path / "t.jsonl", [
        {"id": "101", "language": "fa", "title": "t", "desc": "d", "translations": [
            {"language": "en", "source": "machine", "title": "mt", "desc": "md"},
            {"language": "en", "source": "human", "title": "ht", "desc": "hd"},
        ]},
        {"id": "102", "title": "x"},
    ])
    topics = load_topics(path, default_language="fa")
    assert [t.id for t in topics] == ["101", "102"]
    assert len(topics[0].translations) == 2
    assert topics[0].translation("en", "human").title == "ht"
    assert topics[1].language == "fa"


def test_duplicate_translation_pair(tmp_path):
    tr = {"language": "en", "source": "human", "title": "x"}
    path = write_jsonl(tmp_path / "t.jsonl", [{"id": "1", "title": "t", "translations": [tr, tr]}])
    with pytest.raises(TopicError, match="line 1"):
        load_topics(path)


def test_duplicate_topic_and_malformed_line(tmp_path):
    path = write_jsonl(tmp_path / "t.jsonl", [{"id": "1"}, {"id": "1"}])
    with pytest.raises(TopicError, match="line 2"):
        load_topics(path)
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "1"}\n{oops\n', encoding="utf-8")
    with pytest.raises(TopicError, match="line 2"):
        load_topics(bad)


def test_empty_topic_file(tmp_path):
    (tmp_path / "e.jsonl").write_text("", encoding="utf-8")
    assert load_topics(tmp_path / "e.jsonl") == []


def test_make_query_counts(plain_policy):
    topic = Topic(id="1", language="en", title="a b", desc="b c")
    assert make_query(topic, ["title", "desc"], None, plain_policy).weights == {"a": 1.0, "b": 2.0, "c": 1.0}
    assert make_query(topic, ["title"], None, plain_policy).weights == {"a": 1.0, "b": 1.0}
    # field order in the request does not matter: title always comes first
    assert make_query(topic, ["desc", "title"], None, plain_policy).weights == {"a": 1.0, "b": 2.0, "c": 1.0}


def test_make_query_uses_selected_translation(plain_policy):
    topic = Topic(id="1", language="fa", title="x", translations=(Translation("en", "machine", "m m", "n"),))
    assert make_query(topic, ["title", "desc"], ("en", "machine"), plain_policy).weights == {"m": 2.0, "n": 1.0}
    with pytest.raises(TopicError):
        make_query(topic, ["title"], ("en", "human"), plain_policy)


# -- run files ----------------------------------------------------------------


def test_run_line_format():
    text = format_run([RankedList("101", [("D7", 3.25)])], "bm25")
    assert text == "101 Q0 D7 1 3.250000 bm25\n"


def test_run_ties_and_consecutive_ranks(plain_policy):
    docs = [Document(id=i, text="a", language="en") for i in ["A", "C", "B"]]
    rl = score_bm25(build_chunk(docs, plain_policy), Query("7", {"a": 1.0}), 10)
    lines = format_run([rl], "t").splitlines()
    assert [ln.split()[2] for ln in lines] == ["C", "B", "A"]
    assert [ln.split()[3] for ln in lines] == ["1", "2", "3"]


def test_write_load_round_trip(tmp_path, plain_policy):
    rng = random.Random(4)
    idx = build_chunk(as_documents(zipf_corpus(rng, 150)), plain_policy)
    lists = [score_bm25(idx, Query(str(100 + i), random_query(rng, absent=False)), 30) for i in range(5)]
    write_run(lists, tmp_path / "r.run", "tag")
    back = load_run(tmp_path / "r.run")
    for rl in lists:
        assert [d for d, _ in back[rl.topic_id].entries] == rl.doc_ids()
        for (d1, s1), (d2, s2) in zip(back[rl.topic_id].entries, rl.entries):
            assert d1 == d2 and abs(s1 - s2) <= 5e-7
    write_run(lists, tmp_path / "r2.run", "tag")
    assert (tmp_path / "r.run").read_bytes() == (tmp_path / "r2.run").read_bytes()


def test_run_tag_must_be_single_token():
    with pytest.raises(ValueError):
        format_run([], "two words")
