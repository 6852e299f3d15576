#!/usr/bin/env python3
"""Regenerates the bundled fixture under data/fixture/ (deterministic)."""

import itertools
import json
import random
import struct
from pathlib import Path

OUT = Path(__file__).resolve().parent / "fixture"

# singular -> plural; irregular ones also go to number_exceptions.json
NOUNS = {
    "cat": "cats", "dog": "dogs", "house": "houses", "box": "boxes", "church": "churches",
    "city": "cities", "table": "tables", "letter": "letters", "teacher": "teachers", "garden": "gardens",
    "river": "rivers", "window": "windows", "student": "students", "bridge": "bridges", "car": "cars",
    "child": "children", "mouse": "mice", "man": "men", "woman": "women", "foot": "feet",
}
IRREGULAR = {"child": "children", "mouse": "mice", "man": "men", "woman": "women", "foot": "feet",
             "sheep": "sheep"}
ADJS = ["old", "small", "red", "quiet", "busy", "green", "tall", "happy"]
VERBS_PAST = ["saw", "found", "painted", "visited", "watched", "crossed", "cleaned", "opened"]
VERBS_ING = ["walking", "running", "reading", "waiting", "sitting"]
PREPS = ["in", "on", "at", "under", "near", "with", "from", "behind", "across", "into"]
PRONS = ["She", "He", "They", "We", "I"]
NAMES = ["Anna", "Marco", "Lena", "Tomas", "Sofia"]
ADVS = ["quickly", "slowly", "again", "today", "yesterday"]


def article_for(noun, plural, rng):
    if plural:
        return rng.choice(["the", "the", "some"])
    return rng.choice(["the", "an" if noun[0] in "aeiou" else "a"])


def noun_phrase(rng, with_adj):
    sg = rng.choice(sorted(NOUNS))
    plural = rng.random() < 0.35
    word = NOUNS[sg] if plural else sg
    det = article_for(word if with_adj is None else (with_adj if with_adj else word), plural, rng)
    words, tags, num = [det], ["DET" if det != "some" else "DET"], [None]
    if with_adj:
        words.append(with_adj)
        tags.append("ADJ")
        num.append(None)
    words.append(word)
    tags.append("NOUN")
    num.append("pl" if plural else "sg")
    return words, tags, num


def sentence(rng):
    kind = rng.randrange(4)
    w, t, n = [], [], []

    def add(words, tags, nums=None):
        w.extend(words)
        t.extend(tags)
        n.extend(nums if nums else [None] * len(words))

    adj = lambda: rng.choice(ADJS) if rng.random() < 0.5 else None  # noqa: E731
    if kind == 0:
        add(*noun_phrase(rng, adj()))
        w[0] = w[0].capitalize()
        add([rng.choice(VERBS_PAST)], ["VERB"])
        add([rng.choice(PREPS)], ["ADP"])
        add(*noun_phrase(rng, adj()))
    elif kind == 1:
        add([rng.choice(PRONS)], ["PRON"])
        add([rng.choice(VERBS_PAST)], ["VERB"])
        add(*noun_phrase(rng, adj()))
        add([rng.choice(PREPS)], ["ADP"])
        add(*noun_phrase(rng, adj()))
    elif kind == 2:
        add([rng.choice(NAMES)], ["PROPN"])
        add(["was"], ["AUX"])
        add([rng.choice(VERBS_ING)], ["VERB"])
        add([rng.choice(PREPS)], ["ADP"])
        add(*noun_phrase(rng, adj()))
        add(["and"], ["CCONJ"])
        add([rng.choice(PRONS).lower() if rng.random() < 0.5 else "it"], ["PRON"])
        add([rng.choice(VERBS_PAST)], ["VERB"])
        add([rng.choice(ADVS)], ["ADV"])
    else:
        add([rng.choice(ADVS).capitalize()], ["ADV"])
        add([rng.choice(PRONS).lower() if rng.random() < 0.5 else "we"], ["PRON"])
        add([rng.choice(VERBS_PAST)], ["VERB"])
        add(*noun_phrase(rng, adj()))
    add(["."], ["PUNCT"])
    return w, t, n


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def main():
    rng = random.Random(20240611)
    OUT.mkdir(parents=True, exist_ok=True)

    corpus = []
    for i in range(100):
        w, t, n = sentence(rng)
        corpus.append({"id": f"s{i:03d}", "words": w, "tags": t, "number": n})
    write_jsonl(OUT / "corpus.jsonl", corpus)

    table = {
        "a": {"the": 0.7, "an": 0.3},
        "an": {"a": 0.6, "the": 0.4},
        "the": {"a": 0.8, "an": 0.2},
    }
    for p in PREPS:
        others = [q for q in PREPS if q != p][:4]
        table[p] = {q: 0.25 for q in others}
    (OUT / "table_en.json").write_text(json.dumps(table, indent=1, sort_keys=True) + "\n")
    (OUT / "number_exceptions.json").write_text(json.dumps(IRREGULAR, indent=1, sort_keys=True) + "\n")

    # inflection lexicon for the attack
    lex = []
    for sg, pl in sorted(NOUNS.items()):
        lex.append({"lemma": sg, "pos": "NOUN", "forms": {sg: "Number=Sing", pl: "Number=Plur"}})
    verb_forms = {
        "see": ["see", "saw", "sees"], "find": ["find", "found", "finds"], "paint": ["paint", "painted", "paints"],
        "visit": ["visit", "visited", "visits"], "watch": ["watch", "watched", "watches"],
        "cross": ["cross", "crossed", "crosses"], "clean": ["clean", "cleaned", "cleans"],
        "open": ["open", "opened", "opens"], "walk": ["walk", "walking", "walked"],
        "run": ["run", "running", "ran"], "read": ["read", "reading", "reads"],
        "wait": ["wait", "waiting", "waited"], "sit": ["sit", "sitting", "sat"],
    }
    for lemma, forms in sorted(verb_forms.items()):
        lex.append({"lemma": lemma, "pos": "VERB", "forms": {f: "" for f in forms}})
    comparatives = {"old": "older", "small": "smaller", "red": "redder", "quiet": "quieter", "busy": "busier",
                    "green": "greener", "tall": "taller", "happy": "happier"}
    for a, c in sorted(comparatives.items()):
        lex.append({"lemma": a, "pos": "ADJ", "forms": {a: "Degree=Pos", c: "Degree=Cmp"}})
    write_jsonl(OUT / "lexicon.jsonl", lex)

    # lookup scorer covering every combination of inflections on the first 20 sentences
    forms_of = {}
    for entry in lex:
        for f in entry["forms"]:
            forms_of[(f, entry["pos"])] = sorted(entry["forms"])
    score_rng = random.Random(7)
    scores = {}
    attack = []
    for s in corpus[:20]:
        slots = []
        for word, tag in zip(s["words"], s["tags"]):
            slots.append(forms_of.get((word, tag), [word]))
        if sum(len(x) > 1 for x in slots) > 4:
            continue
        attack.append(s)
        for combo in itertools.product(*slots):
            scores[" ".join(combo)] = round(score_rng.uniform(0.0, 1.0), 3)
    write_jsonl(OUT / "attack_corpus.jsonl", attack)
    (OUT / "scores.json").write_text(json.dumps(scores, indent=0, sort_keys=True) + "\n")

    # subword vocabulary: base forms and a few suffix pieces, so plurals and
    # inflections split into several tokens; characters cover the rest
    pieces = ["<pad>", "<unk>"]
    words = set()
    for s in corpus:
        for wd in s["words"]:
            words.add(wd)
    for entry in lex:
        words.update(entry["forms"])
    stems = sorted({wd for wd in words if not wd.endswith("s") or wd in ("was", "across")})
    pieces += stems
    pieces += ["s", "es", "ed", "ing", "er", "ier"]
    pieces += [chr(c) for c in range(ord("a"), ord("z") + 1)]
    pieces += [chr(c) for c in range(ord("A"), ord("Z") + 1)]
    pieces += [".", ",", "'"]
    seen, vocab = set(), []
    for p in pieces:
        if p not in seen:
            seen.add(p)
            vocab.append(p)
    (OUT / "vocab.txt").write_text("\n".join(vocab) + "\n")

    config = {
        "model_id": "toy",
        "language": "en",
        "error_type": "article",
        "seed": 13,
        "corpus": "corpus.jsonl",
        "table": "table_en.json",
        "number_exceptions": "number_exceptions.json",
        "lexicon": "lexicon.jsonl",
        "vocab": "vocab.txt",
        "batch_size": 16,
        "top_k": 8,
        "encoder": {"num_layers": 2, "num_heads": 2, "model_dim": 16, "ffn_dim": 64, "max_positions": 64},
        "probe": {"max_epochs": 30, "batch_size": 16, "learning_rate": 0.01},
        "scorer": {"kind": "lookup", "table": "scores.json"},
    }
    (OUT / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    write_reference_dump()


def f32(x):
    return struct.unpack("<f", struct.pack("<f", x))[0]


def softmax(xs):
    import math
    m = max(xs)
    e = [math.exp(x - m) for x in xs]
    return [f32(v / sum(e)) for v in e]


def write_reference_dump():
    """NMTD file written independently of the C++ writer, plus a text copy."""
    rng = random.Random(99)
    L, H, d = 1, 2, 4
    sentences = [(0, [(0, 1), (1, 3)], 1), (1, [(0, 2), (2, 3), (3, 4)], None), (2, [(0, 1)], 0)]
    header = {"model_id": "reference", "num_layers": L, "num_heads": H, "model_dim": d, "has_attention": True,
              "has_ablations": True, "sentence_count": len(sentences), "meta": {"writer": "make_fixture.py"}}
    body = bytearray()
    text = []
    for idx, spans, target in sentences:
        t = spans[-1][1]
        hidden = [f32(rng.uniform(-2, 2)) for _ in range((L + 1) * t * d)]
        attn = []
        for _ in range(L * H * t):
            attn += softmax([rng.uniform(-1, 1) for _ in range(t)])
        abl = [f32(rng.uniform(-2, 2)) for _ in range(L * H * d)] if target is not None else []
        body += struct.pack("<III", idx, t, len(spans))
        for a, b in spans:
            body += struct.pack("<II", a, b)
        body += struct.pack("<I", 0xFFFFFFFF if target is None else target)
        for v in hidden + attn + abl:
            body += struct.pack("<f", v)
        text.append(f"sentence {idx} tokens {t} spans {' '.join(f'{a}:{b}' for a, b in spans)} "
                    f"target {'none' if target is None else target}")
        text.append("hidden " + " ".join(repr(v) for v in hidden))
        text.append("attention " + " ".join(repr(v) for v in attn))
        text.append("ablation " + " ".join(repr(v) for v in abl))
    head = json.dumps(header).encode("utf-8")
    with open(OUT / "reference.nmtd", "wb") as f:
        f.write(b"NMTD" + struct.pack("<IQ", 1, len(head)) + head + body)
    (OUT / "reference_dump.txt").write_text("\n".join(text) + "\n")


if __name__ == "__main__":
    main()
