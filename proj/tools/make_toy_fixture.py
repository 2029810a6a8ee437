#!/usr/bin/env python3
"""Regenerate the bundled toy fixture under data/toy/.

20 topical queries, 500 short documents, 50-dim embeddings with topic
structure, a 100-deep ranked run per query whose quality degrades across
queries, and graded qrels. Deterministic; rerun only to change the fixture.
"""

import math
import random
import pathlib

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "toy"

N_TOPICS = 20
WORDS_PER_TOPIC = 12
N_BACKGROUND = 200
N_DOCS = 500
DOC_LEN = 40
EMB_DIM = 50
RUN_DEPTH = 100

rng = random.Random(20240817)


def unit(vec):
    norm = math.sqrt(sum(x * x for x in vec)) or 1.0
    return [x / norm for x in vec]


def noisy(center, spread):
    return unit([c + rng.gauss(0.0, spread) for c in center])


def main():
    OUT.mkdir(parents=True, exist_ok=True)

    topics = [f"t{i:02d}" for i in range(N_TOPICS)]
    topic_words = {
        t: [f"{t}w{j:02d}" for j in range(WORDS_PER_TOPIC)] for t in topics
    }
    background = [f"bg{j:03d}" for j in range(N_BACKGROUND)]

    centers = {t: unit([rng.gauss(0.0, 1.0) for _ in range(EMB_DIM)]) for t in topics}
    vectors = {}
    for t in topics:
        for w in topic_words[t]:
            vectors[w] = noisy(centers[t], 0.25)
    for w in background:
        vectors[w] = unit([rng.gauss(0.0, 1.0) for _ in range(EMB_DIM)])

    with open(OUT / "embeddings.txt", "w") as f:
        f.write(f"{len(vectors)} {EMB_DIM}\n")
        for w in sorted(vectors):
            f.write(w + " " + " ".join(f"{x:.5f}" for x in vectors[w]) + "\n")

    # queries: 2-4 terms from one topic each
    queries = {}
    for i, t in enumerate(topics):
        n_terms = 2 + (i % 3)
        queries[f"q{i+1:02d}"] = (t, rng.sample(topic_words[t], n_terms))
    with open(OUT / "queries.tsv", "w") as f:
        for qid in sorted(queries):
            f.write(qid + "\t" + " ".join(queries[qid][1]) + "\n")

    # documents: one primary topic each, topical words mixed with background
    doc_topic = {}
    doc_strength = {}
    with open(OUT / "corpus.tsv", "w") as f:
        for d in range(N_DOCS):
            doc_id = f"d{d+1:04d}"
            t = topics[d % N_TOPICS]
            strength = rng.uniform(0.15, 0.8)
            doc_topic[doc_id] = t
            doc_strength[doc_id] = strength
            tokens = []
            for _ in range(DOC_LEN):
                if rng.random() < strength:
                    tokens.append(rng.choice(topic_words[t]))
                else:
                    tokens.append(rng.choice(background))
            f.write(doc_id + "\t" + " ".join(tokens) + "\n")

    # qrels: documents of the query's topic, graded by topical strength
    qrels_lines = []
    relevant = {}
    for qid in sorted(queries):
        t = queries[qid][0]
        rel = []
        for doc_id, dt in doc_topic.items():
            if dt != t:
                continue
            grade = 2 if doc_strength[doc_id] > 0.6 else (
                1 if doc_strength[doc_id] > 0.35 else 0)
            if grade > 0:
                rel.append((doc_id, grade))
                qrels_lines.append(f"{qid} 0 {doc_id} {grade}")
        relevant[qid] = dict(rel)
        assert len(rel) >= 3, f"{qid} has too few relevant docs"
    with open(OUT / "qrels.txt", "w") as f:
        f.write("\n".join(sorted(qrels_lines)) + "\n")

    # runs: retrieval quality degrades with the query index
    with open(OUT / "run.txt", "w") as f:
        for i, qid in enumerate(sorted(queries)):
            t = queries[qid][0]
            noise = 0.5 + 4.0 * i / (N_TOPICS - 1)
            scored = []
            for doc_id in sorted(doc_topic):
                topical = doc_strength[doc_id] if doc_topic[doc_id] == t else 0.0
                scored.append((topical * 10.0 + rng.gauss(0.0, noise), doc_id))
            scored.sort(key=lambda x: (-x[0], x[1]))
            for rank, (score, doc_id) in enumerate(scored[:RUN_DEPTH], start=1):
                f.write(f"{qid} Q0 {doc_id} {rank} {score:.4f} toy\n")

    print(f"fixture written to {OUT}")


if __name__ == "__main__":
    main()
