"""Writes tests/data/qg_overfit.jsonl: 20 sentence/answer/question triples."""
import json
import pathlib

PAIRS = [
    ("Marta Kovel founded the Brightwater Mill in 1821 .", "1821", "When did Marta Kovel found the Brightwater Mill ?"),
    ("Marta Kovel founded the Brightwater Mill in 1821 .", "Marta Kovel", "Who founded the Brightwater Mill ?"),
    ("The mill stood beside the river Oska .", "the river Oska", "Where did the mill stand ?"),
    ("Its wheel was carved from black oak .", "black oak", "What was the wheel carved from ?"),
    ("The town of Velden has four bridges .", "four", "How many bridges does Velden have ?"),
    ("Anselm Ruhr painted the northern chapel .", "Anselm Ruhr", "Who painted the northern chapel ?"),
    ("The chapel roof collapsed in 1904 .", "1904", "When did the chapel roof collapse ?"),
    ("Pilgrims carried salt to the coastal shrine .", "salt", "What did pilgrims carry to the shrine ?"),
    ("The shrine overlooks the Grey Strait .", "the Grey Strait", "What does the shrine overlook ?"),
    ("Lina Soret wrote twelve operas .", "twelve", "How many operas did Lina Soret write ?"),
    ("Her first opera opened in Tarvis .", "Tarvis", "Where did her first opera open ?"),
    ("The composer studied under Piet Vahl .", "Piet Vahl", "Who did the composer study under ?"),
    ("The orchestra performed every winter .", "every winter", "When did the orchestra perform ?"),
    ("Glass from Orrin is famous for its blue tint .", "its blue tint", "What is glass from Orrin famous for ?"),
    ("The glassworks employed three hundred workers .", "three hundred", "How many workers did the glassworks employ ?"),
    ("Dorian Hale surveyed the eastern marsh .", "Dorian Hale", "Who surveyed the eastern marsh ?"),
    ("The marsh was drained after the flood .", "after the flood", "When was the marsh drained ?"),
    ("Farmers planted barley on the new land .", "barley", "What did farmers plant on the new land ?"),
    ("The harvest festival is held in Menno .", "Menno", "Where is the harvest festival held ?"),
    ("Seven lanterns line the festival road .", "Seven", "How many lanterns line the festival road ?"),
]


def main():
    out = pathlib.Path(__file__).resolve().parent.parent / "data" / "qg_overfit.jsonl"
    with out.open("w") as f:
        for sentence, answer, question in PAIRS:
            start = sentence.index(answer)
            f.write(json.dumps({"sentence": sentence, "answer_text": answer,
                                "answer_char_start": start, "question": question}) + "\n")


if __name__ == "__main__":
    main()
