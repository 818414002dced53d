#!/usr/bin/env python3
"""JSON-lines syntax server backed by spaCy (the production provider).

Requests on stdin, one per line:
  {"op": "version"}
  {"op": "segment", "text": ...}      -> {"sentences": [[offset, length], ...]}
  {"op": "analyze", "sentence": ...}  -> tokens, pos, entities, noun_chunks, arcs

Offsets are UTF-8 byte offsets. Set QNA_SPACY_MODEL to pick the pipeline
(default en_core_web_sm).
"""
import json
import os
import sys

import spacy

ENTITY_TYPES = {
    "PERSON": "person",
    "GPE": "place", "LOC": "place", "FAC": "place",
    "DATE": "date", "TIME": "date",
    "CARDINAL": "number", "QUANTITY": "number", "MONEY": "number", "PERCENT": "number", "ORDINAL": "number",
    "ORG": "organization", "NORP": "organization",
}


def byte_offsets(text):
    """Maps character index -> byte offset (with one past the end)."""
    out, pos = [], 0
    for ch in text:
        out.append(pos)
        pos += len(ch.encode("utf-8"))
    out.append(pos)
    return out


def segment(nlp, text):
    b = byte_offsets(text)
    sents = []
    for sent in nlp(text).sents:
        start, end = sent.start_char, sent.end_char
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if end > start:
            sents.append([b[start], b[end] - b[start]])
    return {"sentences": sents}


def analyze(nlp, sentence):
    b = byte_offsets(sentence)
    doc = nlp(sentence)
    toks = [t for t in doc if not t.is_space]
    index = {t.i: k for k, t in enumerate(toks)}

    def head_of(t):
        return -1 if t.head.i == t.i else index.get(t.head.i, -1)

    return {
        "tokens": [[b[t.idx], b[t.idx + len(t.text)]] for t in toks],
        "pos": [t.pos_ for t in toks],
        "entities": [{"first": index[e.start], "last": index[e.end - 1],
                      "type": ENTITY_TYPES.get(e.label_, "other")}
                     for e in doc.ents if e.start in index and e.end - 1 in index],
        "noun_chunks": [[index[c.start], index[c.end - 1]] for c in doc.noun_chunks
                        if c.start in index and c.end - 1 in index],
        "arcs": [[head_of(t), "ROOT" if head_of(t) < 0 else t.dep_] for t in toks],
    }


def main():
    name = os.environ.get("QNA_SPACY_MODEL", "en_core_web_sm")
    nlp = spacy.load(name)
    version = f"spacy-{spacy.__version__}/{name}-{nlp.meta.get('version', '?')}"
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            op = req["op"]
            if op == "version":
                resp = {"version": version}
            elif op == "segment":
                resp = segment(nlp, req["text"])
            elif op == "analyze":
                resp = analyze(nlp, req["sentence"])
            else:
                resp = {"error": f"unknown op {op}"}
        except Exception as e:  # noqa: BLE001
            resp = {"error": str(e)}
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
