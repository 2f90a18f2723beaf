"""Language-aware text normalization.

Documents (at index time) and queries (at retrieval time) must both go
through :func:`process` with the same policy, otherwise their terms will
not line up in the index.
"""

from __future__ import annotations

import unicodedata
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Literal, Union

import regex
from pydantic import BaseModel, ConfigDict, model_validator

from .porter import stem

__all__ = [
    "CharNormalization",
    "ProcessingPolicy",
    "StopwordsFile",
    "builtin_stopwords",
    "normalize_chars",
    "process",
    "remove_stopwords",
    "stem",
    "tokenize",
    "word_segments",
]

_POSSESSIVE = ("'s", "’s", "＇s")


class _Frozen(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, strict=True)


class CharNormalization(_Frozen):
    unicode_form: Literal["nfc", "nfkc"] = "nfkc"
    case_fold: bool = True
    strip_diacritics: bool = False


class StopwordsFile(_Frozen):
    file: str


class ProcessingPolicy(_Frozen):
    language: str = "en"
    char_normalization: CharNormalization = CharNormalization()
    tokenizer: Literal["rule_based_unicode"] = "rule_based_unicode"
    stopwords: Union[Literal["none", "builtin"], StopwordsFile] = "none"
    stemmer: Literal["none", "porter"] = "none"

    @model_validator(mode="after")
    def _check_language_support(self):
        if self.stemmer == "porter" and self.language != "en":
            raise ValueError(f"porter stemmer is only available for 'en', not {self.language!r}")
        if self.stopwords == "builtin" and self.language not in _BUILTIN_STOPWORDS:
            raise ValueError(f"no builtin stopword list for language {self.language!r}")
        return self


_BUILTIN_STOPWORDS = {"en": "stopwords_en.txt"}


def _read_stopword_lines(text: str) -> frozenset[str]:
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


@lru_cache(maxsize=None)
def builtin_stopwords(language: str) -> frozenset[str]:
    try:
        name = _BUILTIN_STOPWORDS[language]
    except KeyError:
        raise ValueError(f"no builtin stopword list for language {language!r}") from None
    text = resources.files("clirpipe").joinpath("data").joinpath(name).read_text(encoding="utf-8")
    return _read_stopword_lines(text)


@lru_cache(maxsize=64)
def _file_stopwords(path: str) -> frozenset[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot read stopword file {path}: {e}") from e
    return _read_stopword_lines(text)


def _stopword_set(policy: ProcessingPolicy) -> frozenset[str]:
    if policy.stopwords == "none":
        return frozenset()
    if policy.stopwords == "builtin":
        return builtin_stopwords(policy.language)
    return _file_stopwords(policy.stopwords.file)


def _normalize_once(text: str, cn: CharNormalization) -> str:
    form = cn.unicode_form.upper()
    text = unicodedata.normalize(form, text)
    if cn.case_fold:
        text = text.casefold()
    if cn.strip_diacritics:
        decomposed = unicodedata.normalize("NFD", text)
        text = "".join(c for c in decomposed if not unicodedata.combining(c))
    return unicodedata.normalize(form, text)


def normalize_chars(text: str, policy: ProcessingPolicy) -> str:
    """Unicode form, then case folding, then diacritic stripping."""
    cn = policy.char_normalization
    out = _normalize_once(text, cn)
    # casefold can produce sequences the normal form rewrites again
    while True:
        again = _normalize_once(out, cn)
        if again == out:
            return out
        out = again


def _has_alnum(segment: str) -> bool:
    for ch in segment:
        cat = unicodedata.category(ch)
        if cat[0] == "L" or cat[0] == "N":
            return True
    return False


# --- default word boundaries (UAX #29) ---------------------------------------
# Character classes come from the Word_Break property; the rules themselves
# are applied below. regex's own WORD-mode \b mishandles Extend/ZWJ at the
# start of text and Mid* characters next to combining marks.

_WB_NAMES = (
    "CR", "LF", "Newline", "Extend", "ZWJ", "Regional_Indicator", "Format", "Katakana",
    "Hebrew_Letter", "ALetter", "Single_Quote", "Double_Quote", "MidNumLet", "MidLetter",
    "MidNum", "Numeric", "ExtendNumLet", "WSegSpace",
)
_WB_CLASS = regex.compile("|".join(rf"(?P<{n}>\p{{Word_Break={n}}})" for n in _WB_NAMES))
_EXT_PICT = regex.compile(r"\p{Extended_Pictographic}")

_NEWLINES = frozenset({"CR", "LF", "Newline"})
_IGNORED = frozenset({"Extend", "Format", "ZWJ"})
_AHLETTER = frozenset({"ALetter", "Hebrew_Letter"})
_MIDLETTER_Q = frozenset({"MidLetter", "MidNumLet", "Single_Quote"})
_MIDNUM_Q = frozenset({"MidNum", "MidNumLet", "Single_Quote"})
_JOINS_ENL = frozenset({"ALetter", "Hebrew_Letter", "Numeric", "Katakana", "ExtendNumLet"})


@lru_cache(maxsize=65536)
def _wb(ch: str) -> str:
    m = _WB_CLASS.match(ch)
    return m.lastgroup if m else "Other"


def _skip_back(cls: list[str], j: int) -> int:
    """Index of the char that absorbs the Extend/Format/ZWJ run ending at ``j``."""
    while j > 0 and cls[j] in _IGNORED and cls[j - 1] not in _NEWLINES:
        j -= 1
    return j


def _skip_fwd(cls: list[str], k: int) -> int:
    while k < len(cls) and cls[k] in _IGNORED:
        k += 1
    return k


def _no_break(text: str, cls: list[str], i: int) -> bool:
    """True if the rules forbid a boundary between text[i-1] and text[i]."""
    before, after = cls[i - 1], cls[i]
    if before == "CR" and after == "LF":
        return True
    if before in _NEWLINES or after in _NEWLINES:
        return False
    if before == "ZWJ" and _EXT_PICT.match(text[i]):
        return True
    if before == "WSegSpace" and after == "WSegSpace":
        return True
    if after in _IGNORED:
        return True

    j = _skip_back(cls, i - 1)
    prev = cls[j]
    k = _skip_fwd(cls, i + 1)
    nxt = cls[k] if k < len(cls) else None
    j2 = _skip_back(cls, j - 1) if j > 0 else -1
    prev2 = cls[j2] if j2 >= 0 else None

    if prev in _AHLETTER and after in _AHLETTER:
        return True
    if prev in _AHLETTER and after in _MIDLETTER_Q and nxt in _AHLETTER:
        return True
    if prev2 in _AHLETTER and prev in _MIDLETTER_Q and after in _AHLETTER:
        return True
    if prev == "Hebrew_Letter" and after == "Single_Quote":
        return True
    if prev == "Hebrew_Letter" and after == "Double_Quote" and nxt == "Hebrew_Letter":
        return True
    if prev2 == "Hebrew_Letter" and prev == "Double_Quote" and after == "Hebrew_Letter":
        return True
    if prev == "Numeric" and after == "Numeric":
        return True
    if prev in _AHLETTER and after == "Numeric":
        return True
    if prev == "Numeric" and after in _AHLETTER:
        return True
    if prev2 == "Numeric" and prev in _MIDNUM_Q and after == "Numeric":
        return True
    if prev == "Numeric" and after in _MIDNUM_Q and nxt == "Numeric":
        return True
    if prev == "Katakana" and after == "Katakana":
        return True
    if prev in _JOINS_ENL and after == "ExtendNumLet":
        return True
    if prev == "ExtendNumLet" and after in _JOINS_ENL:
        return True
    if prev == "Regional_Indicator" and after == "Regional_Indicator":
        # pair up regional indicators from the left
        run = 0
        while j >= 0 and cls[j] == "Regional_Indicator":
            run += 1
            j = _skip_back(cls, j - 1) if j > 0 else -1
        return run % 2 == 1
    return False


def word_segments(text: str) -> list[str]:
    """Split ``text`` at default Unicode word boundaries; segments cover the input."""
    if not text:
        return []
    cls = [_wb(c) for c in text]
    out = []
    start = 0
    for i in range(1, len(text)):
        if not _no_break(text, cls, i):
            out.append(text[start:i])
            start = i
    out.append(text[start:])
    return out


def tokenize(text: str, policy: ProcessingPolicy) -> list[str]:
    """Split on Unicode word boundaries, keeping segments with a letter or digit.

    For English, a trailing possessive ``'s`` is dropped from each token.
    """
    tokens = []
    for seg in word_segments(text):
        if not seg or not _has_alnum(seg):
            continue
        if policy.language == "en":
            for p in _POSSESSIVE:
                if seg.endswith(p) and len(seg) > len(p):
                    seg = seg[: -len(p)]
                    break
        tokens.append(seg)
    return tokens


def remove_stopwords(tokens: list[str], policy: ProcessingPolicy) -> list[str]:
    stops = _stopword_set(policy)
    if not stops:
        return list(tokens)
    return [t for t in tokens if t not in stops]


def process(text: str, policy: ProcessingPolicy) -> list[str]:
    tokens = tokenize(normalize_chars(text, policy), policy)
    tokens = remove_stopwords(tokens, policy)
    if policy.stemmer == "porter":
        tokens = [stem(t) for t in tokens]
    return tokens
