"""Writes tests/data/metrics_pairs.json: 50 (prediction, golds) cases with
EM and F1 from the official scoring functions."""
import json
import pathlib
import random
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "oracles"))
from squad_official import score_example  # noqa: E402

HAND = [
    ("Parliament of the United Kingdom", ["UK Parliament"]),
    ("Denver Broncos", ["Denver Broncos", "The Denver Broncos"]),
    ("the Broncos", ["Denver Broncos"]),
    ("", [""]),
    ("", []),
    ("something", []),
    ("", ["an answer"]),
    ("Santa Clara, California", ["Santa Clara", "Levi's Stadium"]),
    ("Levi's Stadium", ["Levi's Stadium in the San Francisco Bay Area at Santa Clara, California."]),
    ("1,000", ["1000"]),
    ("a a a", ["a"]),
    ("the the cat", ["cat the"]),
    ("An apple an", ["apple"]),
    ("theater", ["the ater"]),
    ("Another", ["other"]),
    ("rock 'n' roll", ["rock n roll"]),
    ("U.S.A.", ["USA"]),
    ("  spaced\tout\nwords  ", ["spaced out words"]),
    ("cat cat dog", ["cat dog dog"]),
    ("Café au lait", ["café au lait"]),
    ("Éclair", ["éclair"]),
    ("naïve approach", ["naive approach"]),
    ("50%", ["50 %"]),
    ("$3.5 million", ["3.5 million dollars"]),
    ("(left) [right]", ["left right"]),
    ("first-class", ["first class"]),
    ("first-class", ["firstclass"]),
    ("A", ["a"]),
    ("...", [""]),
    ("...", ["!!!", "?"]),
    ("Jan. 5, 1862", ["January 5, 1862", "5 January 1862"]),
    ("the end of the war", ["end of war", "war's end"]),
    ("north", ["North", "the north side"]),
    ("x_y", ["x y"]),
    ("don't", ["dont"]),
]

WORDS = ["the", "a", "an", "river", "mill", "Velden", "1874", "north", "bridge", "of",
         "stone", "green", "Harbor", "and", "old", "new", "two", "king's", "St.", "-"]


def random_phrase(rng):
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(0, 6)))


def main():
    rng = random.Random(2024)
    cases = list(HAND)
    while len(cases) < 50:
        golds = [random_phrase(rng) for _ in range(rng.randint(1, 3))]
        cases.append((random_phrase(rng), golds))
    out = []
    for pred, golds in cases:
        em, f1 = score_example(golds, pred)
        out.append({"prediction": pred, "golds": golds, "em": em, "f1": float(f1)})
    path = pathlib.Path(__file__).resolve().parents[1] / "data" / "metrics_pairs.json"
    path.write_text(json.dumps(out, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
