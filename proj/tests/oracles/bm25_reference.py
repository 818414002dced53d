"""Okapi BM25 written from the textbook definition: lowercase terms, no
stemming, idf = ln((N - df + 0.5) / (df + 0.5) + 1)."""
import math


def rank(paragraphs, query, k, k1=1.5, b=0.75):
    docs = [[t.lower() for t in p] for p in paragraphs]
    q = [t.lower() for t in query]
    n = len(docs)
    avgdl = sum(len(d) for d in docs) / n if n else 0.0
    scores = []
    for d in docs:
        s = 0.0
        if avgdl > 0 and d:
            for term in q:
                tf = d.count(term)
                if tf == 0:
                    continue
                df = sum(1 for other in docs if term in other)
                idf = math.log((n - df + 0.5) / (df + 0.5) + 1.0)
                s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len(d) / avgdl))
        scores.append(s)
    order = sorted(range(n), key=lambda i: -scores[i])
    return order[:min(k, n)], scores
