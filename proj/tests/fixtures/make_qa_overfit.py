"""Writes tests/data/qa_overfit.json: 5 documents, 45 answerable and 5
unanswerable questions in SQuAD v2 layout."""
import json
import pathlib

PEOPLE = [
    dict(name="Mara Velden", last="Velden", pron="She", city="Oskar Bay", year="1821",
         field="chemistry", school="Royal Lyceum", city2="Port Ellis", job="ferry engineer",
         year2="1850", obj="steam barge", river="Tamsin", color="green", n="forty",
         disaster="winter flood", year3="1874", unk="Who was the mayor of Oskar Bay?"),
    dict(name="Ivo Brandt", last="Brandt", pron="He", city="Kelmoor", year="1790",
         field="astronomy", school="Northgate College", city2="Valdren", job="clock maker",
         year2="1818", obj="glass tower", river="Ostra", color="white", n="twelve",
         disaster="great fire", year3="1846", unk="What did Brandt eat for breakfast?"),
    dict(name="Lena Okafor", last="Okafor", pron="She", city="Duskmere", year="1902",
         field="botany", school="Cedar Institute", city2="Hallowford", job="garden designer",
         year2="1931", obj="iron greenhouse", river="Wend", color="blue", n="sixty",
         disaster="sudden earthquake", year3="1960", unk="Which song did Okafor write?"),
    dict(name="Tomas Rhee", last="Rhee", pron="He", city="Arlen Cove", year="1755",
         field="music", school="Saint Aldric School", city2="Brightwater", job="organ builder",
         year2="1780", obj="wooden bridge", river="Caska", color="red", n="nine",
         disaster="spring storm", year3="1799", unk="How tall was the bridge at Kelmoor?"),
    dict(name="Ada Mirren", last="Mirren", pron="She", city="Fenwick", year="1866",
         field="geology", school="Harrow Academy", city2="Stonehaven", job="mine surveyor",
         year2="1899", obj="cable railway", river="Lune", color="black", n="thirty",
         disaster="rock slide", year3="1925", unk="Who founded the Harrow Academy?"),
]


def paragraphs(p):
    one = (f"{p['name']} was born in {p['city']} in {p['year']}. {p['pron']} studied "
           f"{p['field']} at the {p['school']}. Later {p['pron'].lower()} moved to "
           f"{p['city2']} to work as a {p['job']}.")
    two = (f"In {p['year2']}, {p['last']} built a {p['obj']} near the {p['river']} river. "
           f"The {p['obj']} was painted {p['color']} and could carry {p['n']} passengers. "
           f"It was destroyed by a {p['disaster']} in {p['year3']}.")
    return [one, two]


def questions(p):
    return [
        (0, f"Where was {p['name']} born?", p["city"]),
        (0, f"When was {p['name']} born?", p["year"]),
        (0, f"What did {p['name']} study?", p["field"]),
        (0, f"Where did {p['last']} study {p['field']}?", p["school"]),
        (0, f"Where did {p['last']} move to work?", p["city2"]),
        (1, f"What did {p['last']} build near the {p['river']} river?", p["obj"]),
        (1, f"What color was the {p['obj']}?", p["color"]),
        (1, f"How many passengers could the {p['obj']} carry?", p["n"]),
        (1, f"What destroyed the {p['obj']}?", p["disaster"]),
    ]


def main():
    data = []
    for d, p in enumerate(PEOPLE):
        paras = paragraphs(p)
        entries = [{"context": c, "qas": []} for c in paras]
        for q, (pi, text, answer) in enumerate(questions(p)):
            start = paras[pi].index(answer)
            entries[pi]["qas"].append({
                "id": f"d{d}q{q}", "question": text, "is_impossible": False,
                "answers": [{"text": answer, "answer_start": start}]})
        entries[1]["qas"].append({"id": f"d{d}u", "question": p["unk"], "is_impossible": True,
                                  "answers": [], "plausible_answers": []})
        data.append({"title": p["name"], "paragraphs": entries})
    out = pathlib.Path(__file__).resolve().parents[1] / "data" / "qa_overfit.json"
    out.write_text(json.dumps({"version": "v2.0", "data": data}, indent=1) + "\n")


if __name__ == "__main__":
    main()
