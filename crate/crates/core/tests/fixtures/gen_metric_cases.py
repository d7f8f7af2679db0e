"""Freezes expected EM/F1 values for metric_cases.json.

Scoring follows the official SQuAD v1.1 evaluation script, with one change:
when prediction and gold both normalize to no tokens, F1 is 1.0 (as in the
v2.0 script) so that EM=1 always implies F1=1.
"""
import json
import random
import re
import string
from collections import Counter


def normalize_answer(s):
    def remove_articles(text):
        return re.sub(r"\b(a|an|the)\b", " ", text)

    def white_space_fix(text):
        return " ".join(text.split())

    def remove_punc(text):
        exclude = set(string.punctuation)
        return "".join(ch for ch in text if ch not in exclude)

    return white_space_fix(remove_articles(remove_punc(s.lower())))


def f1_score(prediction, ground_truth):
    p = normalize_answer(prediction).split()
    g = normalize_answer(ground_truth).split()
    if not p and not g:
        return 1.0
    common = Counter(p) & Counter(g)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(p)
    recall = num_same / len(g)
    return (2 * precision * recall) / (precision + recall)


def em(prediction, ground_truth):
    return float(normalize_answer(prediction) == normalize_answer(ground_truth))


HAND = [
    ("Denver Broncos", ["Denver Broncos"]),
    ("the American Bison", ["American Bison"]),
    ("bison", ["buffalo"]),
    ("cat sat", ["dog", "the cat sat down"]),
    ("The Cat!", ["cat"]),
    ("", ["cat"]),
    ("cat", [""]),
    ("", [""]),
    ("the", ["a"]),
    ("a", ["a", "b"]),
    ("x", ["y"]),
    ("AMERICAN bison", ["american Bison"]),
    ("annually on the 13th or 14th of April", ["13th or 14th of April", "April"]),
    ("the the the", ["the"]),
    ("cat cat cat", ["cat"]),
    ("cat", ["cat cat cat"]),
    ("U.S. Army", ["US Army"]),
    ("Saint-Bernard's dog", ["saint bernards dog"]),
    ("$5,000", ["5000"]),
    ("theater", ["the ater"]),
    ("an apple a day", ["apple day"]),
    ("Archean Eon.", ["The Archean Eon", "Archean"]),
    ("  lots   of\tspace \n", ["lots of space"]),
    ("(winter) crops", ["rabi (winter) crops"]),
    ("Gurú Gobind Singh", ["guru gobind singh", "Gurú Gobind Singh Ji"]),
    ("Toronto Police", ["American Bison"]),
    ("1873", ["May 23, 1873", "1873"]),
    ("North-West Mounted Police", ["the North-West Mounted Police"]),
    ("an", ["An"]),
    ("A.B.C", ["abc"]),
]

VOCAB = [
    "the", "a", "an", "cat", "dog", "bison", "Bison", "river", "1729", "police",
    "Police,", "eon!", "Eon", "festival", "crops", "farmers", "(NWMP)", "red",
    "fast", "35", "mph.", "herd", "\"buffalo\"", "it's", "its", "",
]


def rand_phrase(rng):
    n = rng.randint(0, 6)
    return " ".join(rng.choice(VOCAB) for _ in range(n))


def main():
    rng = random.Random(20231016)
    cases = list(HAND)
    while len(cases) < 50:
        pred = rand_phrase(rng)
        golds = [rand_phrase(rng) for _ in range(rng.randint(1, 3))]
        cases.append((pred, golds))
    out = []
    for i, (pred, golds) in enumerate(cases):
        out.append({
            "id": f"m{i:02d}",
            "prediction": pred,
            "golds": golds,
            "em": max(em(pred, g) for g in golds),
            "f1": max(f1_score(pred, g) for g in golds),
            "normalized_prediction": normalize_answer(pred),
        })
    with open("metric_cases.json", "w", encoding="utf-8") as f:
        json.dump(out, f, ensure_ascii=False, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
