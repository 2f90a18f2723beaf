"""Deterministic synthetic cross-language test collection.

Documents are in a pseudo-French target language, topics in pseudo-English
with machine and human translations, plus a source->target translation
table and graded qrels. Every source word stands for a "concept" that the
target language renders as one of a few weighted synonyms, so PSQ has real
ambiguity to resolve.

    python -m clirpipe.synth OUT_DIR [--docs 1000] [--topics 25] [--seed 2021]
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

EN_ONSETS = ["b", "br", "c", "d", "dr", "f", "g", "gr", "k", "l", "m", "n", "p", "pl", "r", "s", "st", "t", "tr", "v", "z"]
EN_NUCLEI = ["a", "e", "i", "o", "u", "oa", "ee"]
FR_ONSETS = ["b", "ch", "d", "f", "g", "j", "l", "m", "n", "p", "qu", "r", "s", "t", "v"]
FR_NUCLEI = ["a", "e", "é", "è", "i", "o", "ou", "ai", "eu", "u", "ô"]
FR_FUNCTION_WORDS = ["le", "la", "les", "de", "des", "du", "et", "un", "une", "en", "dans", "pour"]
EN_FILLER = ["documents", "reports", "information", "events", "discussion"]


def _word(rng: random.Random, onsets, nuclei, syllables: int, coda: str = "") -> str:
    return "".join(rng.choice(onsets) + rng.choice(nuclei) for _ in range(syllables)) + coda


def _unique_words(rng, n, onsets, nuclei, codas, taken) -> list[str]:
    out = []
    while len(out) < n:
        w = _word(rng, onsets, nuclei, rng.randint(2, 3), rng.choice(codas))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def _cased(rng: random.Random, word: str) -> str:
    return word.capitalize() if rng.random() < 0.1 else word


def make_fixture(out_dir, num_docs: int = 1000, num_topics: int = 25, seed: int = 2021, num_concepts: int = 1500) -> Path:
    rng = random.Random(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    taken = set(EN_FILLER) | set(FR_FUNCTION_WORDS)
    en = _unique_words(rng, num_concepts, EN_ONSETS, EN_NUCLEI, ["", "n", "t", "x", "m", "k"], taken)
    fr_pool = _unique_words(rng, num_concepts * 3, FR_ONSETS, FR_NUCLEI, ["", "t", "r", "x", "l"], taken)

    # concept -> [(target word, p)], descending, a little mass left untranslated
    renderings = []
    pos = 0
    for _ in range(num_concepts):
        n = rng.choice([1, 1, 2, 2, 3, 4])
        raw = sorted((rng.random() + 0.05 for _ in range(n)), reverse=True)
        mass = 1.0 - rng.uniform(0.0, 0.05)
        z = sum(raw)
        renderings.append([(fr_pool[pos + i], round(r / z * mass, 4)) for i, r in enumerate(raw)])
        pos += n

    zipf = [1.0 / (r + 1) ** 1.07 for r in range(num_concepts)]

    def render(concept: int) -> str:
        words, probs = zip(*renderings[concept])
        return rng.choices(words, weights=probs)[0]

    # topics draw from the mid-frequency band
    topic_concepts = [rng.sample(range(80, num_concepts), 4) for _ in range(num_topics)]

    doc_tokens = []
    for _ in range(num_docs):
        length = rng.randint(40, 180)
        concepts = rng.choices(range(num_concepts), weights=zipf, k=length)
        doc_tokens.append([render(c) for c in concepts])

    qrels = []
    for t, concepts in enumerate(topic_concepts):
        relevant = rng.sample(range(num_docs), rng.randint(6, 24))
        for i, d in enumerate(relevant):
            grade = 2 if i % 3 == 0 else 1
            hits = rng.randint(3, 7) if grade == 2 else rng.randint(1, 3)
            for _ in range(hits):
                tokens = doc_tokens[d]
                tokens.insert(rng.randrange(len(tokens) + 1), render(rng.choice(concepts)))
            qrels.append((t, d, grade))
        judged = set(relevant)
        for d in rng.sample(range(num_docs), 20):
            if d not in judged:
                qrels.append((t, d, 0))
                judged.add(d)
        # a few unjudged near-misses
        for d in rng.sample(range(num_docs), 5):
            doc_tokens[d].insert(0, render(concepts[0]))

    with open(out / "docs.jsonl", "w", encoding="utf-8") as f:
        for d, tokens in enumerate(doc_tokens):
            words = []
            for w in tokens:
                words.append(_cased(rng, w))
                if rng.random() < 0.15:
                    words.append(rng.choice(FR_FUNCTION_WORDS))
            body = " ".join(words[:3]) + ", " + " ".join(words[3:]) + "."
            title = " ".join(_cased(rng, w) for w in tokens[: rng.randint(0, 4)])
            rec = {"id": f"FR-{d:05d}", "title": title, "text": body}
            if d % 2 == 0:
                rec["language"] = "fr"
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")

    with open(out / "topics.jsonl", "w", encoding="utf-8") as f:
        for t, concepts in enumerate(topic_concepts):
            title_c = concepts[:2]
            desc_c = concepts[1:]
            title = " ".join(en[c].capitalize() for c in title_c)
            desc = f"{rng.choice(EN_FILLER).capitalize()} about the {en[desc_c[0]]}, {en[desc_c[1]]} and {en[desc_c[2]]} of it."

            def human(cs):
                return " ".join(renderings[c][0][0] for c in cs)

            def machine(cs):
                kept = [c for c in cs if rng.random() > 0.2] or cs[:1]
                return " ".join(render(c) for c in kept)

            rec = {
                "id": str(101 + t),
                "language": "en",
                "title": title,
                "desc": desc,
                "translations": [
                    {"language": "fr", "source": "machine", "title": machine(title_c), "desc": machine(desc_c)},
                    {"language": "fr", "source": "human", "title": human(title_c), "desc": human(desc_c)},
                ],
            }
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")

    with open(out / "table.txt", "w", encoding="utf-8") as f:
        for c in range(num_concepts):
            for w, p in renderings[c]:
                f.write(f"{en[c]} {w} {p}\n")

    with open(out / "qrels.txt", "w", encoding="utf-8") as f:
        for t, d, g in sorted(qrels):
            f.write(f"{101 + t} 0 FR-{d:05d} {g}\n")

    (out / "stopwords_fr.txt").write_text(
        "# function words of the synthetic target language\n" + "\n".join(FR_FUNCTION_WORDS) + "\n",
        encoding="utf-8",
    )
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="clirpipe.synth")
    parser.add_argument("out_dir")
    parser.add_argument("--docs", type=int, default=1000)
    parser.add_argument("--topics", type=int, default=25)
    parser.add_argument("--seed", type=int, default=2021)
    args = parser.parse_args(argv)
    make_fixture(args.out_dir, args.docs, args.topics, args.seed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
