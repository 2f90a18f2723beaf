import unicodedata

import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError
from uniseg.wordbreak import words as uax29_words

from clirpipe.textproc import (
    CharNormalization,
    ProcessingPolicy,
    StopwordsFile,
    builtin_stopwords,
    normalize_chars,
    process,
    remove_stopwords,
    tokenize,
    word_segments,
)

EN_FULL = ProcessingPolicy(
    language="en",
    char_normalization=CharNormalization(unicode_form="nfkc", case_fold=True, strip_diacritics=True),
    stopwords="builtin",
    stemmer="porter",
)
NO_FOLD = ProcessingPolicy(language="en", char_normalization=CharNormalization(case_fold=False))

# Lucene's classic English stop set.
EXPECTED_BUILTIN = {
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is", "it",
    "no", "not", "of", "on", "or", "such", "that", "the", "their", "then", "there", "these", "they",
    "this", "to", "was", "will", "with",
}


def test_normalize_cafe():
    # stepwise: NFKC leaves "Café", casefold gives "café", NFD + drop U+0301 gives "cafe"
    assert unicodedata.normalize("NFD", "café") == "café"
    assert normalize_chars("Café", EN_FULL) == "cafe"


def test_normalize_empty():
    assert normalize_chars("", EN_FULL) == ""


def test_normalize_nfkc_compatibility():
    p = ProcessingPolicy(language="en")
    assert normalize_chars("ﬁle Ⅻ", p) == "file xii"
    assert normalize_chars("ﬁle", ProcessingPolicy(char_normalization=CharNormalization(unicode_form="nfc", case_fold=False))) == "ﬁle"


def test_diacritics_kept_by_default():
    assert normalize_chars("Café", ProcessingPolicy(language="fr")) == "café"


@settings(max_examples=300, deadline=None)
@given(st.text(), st.sampled_from(["nfc", "nfkc"]), st.booleans(), st.booleans())
def test_normalize_idempotent(text, form, fold, strip):
    p = ProcessingPolicy(char_normalization=CharNormalization(unicode_form=form, case_fold=fold, strip_diacritics=strip))
    once = normalize_chars(text, p)
    assert normalize_chars(once, p) == once


def test_tokenize_drops_punctuation():
    assert tokenize("the quick, brown fox!", NO_FOLD) == ["the", "quick", "brown", "fox"]


def test_tokenize_empty():
    assert tokenize("", NO_FOLD) == []


@pytest.mark.parametrize(
    "text",
    [
        "state-of-the-art 2021",
        "3.14 can't e.g. foo_bar 東京都 x@y.com",
        "naïve café—ok «quoted» (paren) ¿qué?",
        "Привет, мир! 2024-01-05",
        "مرحبا بالعالم",
        "emoji 😀 test #tag",
    ],
)
def test_tokenize_matches_reference_segmenter(text):
    # oracle: independent UAX #29 implementation, filtered to segments with a letter or digit
    expected = [w for w in uax29_words(text) if any(unicodedata.category(c)[0] in "LN" for c in w)]
    assert tokenize(text, ProcessingPolicy(language="fr")) == expected


def test_tokenize_state_of_the_art():
    assert tokenize("state-of-the-art 2021", NO_FOLD) == ["state", "of", "the", "art", "2021"]


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=80))
def test_tokens_nonempty_without_whitespace(text):
    for tok in tokenize(text, ProcessingPolicy(language="fr")):
        assert tok
        assert not any(c.isspace() for c in tok)


# letters, digits, Mid* punctuation, combining marks, joiners, Hebrew quotes,
# katakana, regional indicators, emoji modifiers and line breaks
TRICKY = "abc XYZ.,-_:'\"’é1٠9\u0301\u200d\u00ad\u2060·אב״ا東カกﬁ😀👍\U0001F3FB🇫🇷\r\n\t\u3000"


@settings(max_examples=400, deadline=None)
@given(st.text(alphabet=TRICKY, max_size=60))
def test_tokenize_agrees_with_reference_on_random_text(text):
    expected = [w for w in uax29_words(text) if any(unicodedata.category(c)[0] in "LN" for c in w)]
    assert tokenize(text, ProcessingPolicy(language="fr")) == expected


@settings(max_examples=400, deadline=None)
@given(st.text(alphabet=TRICKY, max_size=40))
def test_word_segments_match_reference(text):
    assert word_segments(text) == list(uax29_words(text))
    assert "".join(word_segments(text)) == text


@pytest.mark.parametrize(
    "text, expected",
    [
        ("'é", ["'", "é"]),
        ("\u0301b", ["\u0301", "b"]),
        ("\u200dZé", ["\u200d", "Zé"]),
        ("X\u0300.בY", ["X\u0300.בY"]),
        ("3.14 can't", ["3.14", " ", "can't"]),
        ("🇫🇷🇫🇷", ["🇫🇷", "🇫🇷"]),
        ("a\r\nb", ["a", "\r\n", "b"]),
    ],
)
def test_word_segments_edge_cases(text, expected):
    assert word_segments(text) == expected
    assert list(uax29_words(text)) == expected


def test_english_possessive_stripped():
    assert tokenize("the runner's shoes", NO_FOLD) == ["the", "runner", "shoes"]
    assert tokenize("the runner's shoes", ProcessingPolicy(language="fr")) == ["the", "runner's", "shoes"]


def test_builtin_stopwords_frozen():
    assert builtin_stopwords("en") == EXPECTED_BUILTIN
    assert len(EXPECTED_BUILTIN) == 33


def test_remove_stopwords_builtin():
    p = ProcessingPolicy(language="en", stopwords="builtin")
    assert remove_stopwords(["the", "cat", "sat"], p) == ["cat", "sat"]


def test_remove_stopwords_none_is_identity():
    toks = ["the", "cat", "the"]
    assert remove_stopwords(toks, ProcessingPolicy(language="en")) == toks


@pytest.mark.parametrize("word", sorted(EXPECTED_BUILTIN))
def test_every_builtin_stopword_removed(word):
    p = ProcessingPolicy(language="en", stopwords="builtin")
    assert remove_stopwords([word], p) == []


def test_stopword_file(tmp_path):
    path = tmp_path / "stop.txt"
    path.write_text("# comment\nle\nla\n\n", encoding="utf-8")
    p = ProcessingPolicy(language="fr", stopwords=StopwordsFile(file=str(path)))
    assert remove_stopwords(["le", "chat", "la", "maison"], p) == ["chat", "maison"]


def test_stopword_file_missing(tmp_path):
    p = ProcessingPolicy(language="fr", stopwords=StopwordsFile(file=str(tmp_path / "nope.txt")))
    with pytest.raises(OSError):
        remove_stopwords(["x"], p)


def test_porter_requires_english():
    with pytest.raises(ValidationError):
        ProcessingPolicy(language="fr", stemmer="porter")


def test_builtin_stopwords_require_list():
    with pytest.raises(ValidationError):
        ProcessingPolicy(language="fa", stopwords="builtin")


def test_process_composition():
    assert process("The Runner's Shoes", EN_FULL) == ["runner", "shoe"]


def test_process_all_none():
    p = ProcessingPolicy(language="en", char_normalization=CharNormalization(case_fold=False))
    assert process("a b", p) == ["a", "b"]


def test_process_deterministic():
    text = "Generalizations of the Oscillators' behaviour, 2021!"
    assert process(text, EN_FULL) == process(text, EN_FULL)


def test_query_document_symmetry():
    from collections import Counter

    from clirpipe.corpus import Document
    from clirpipe.index import build_chunk
    from clirpipe.retrieval import Topic, make_query

    text = "Relational databases and the Runner's indexing strategies"
    idx = build_chunk([Document(id="d", text=text, language="en")], EN_FULL)
    q = make_query(Topic(id="1", language="en", title=text), ["title"], None, EN_FULL)
    doc_terms = Counter({t: tf for t, tf in idx.doc_vector(0)})
    assert doc_terms == Counter({t: int(w) for t, w in q.weights.items()})
