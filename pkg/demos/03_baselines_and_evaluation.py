"""Compare the trained head against the kNN and bag-of-words baselines.

All three models see the same synthetic corpus: six noisy level clusters
in embedding space, plus lemma tokens whose vocabulary only partially
separates the levels.  Run: python3 demos/03_baselines_and_evaluation.py
"""

import numpy as np

from cefrkit import (
    Dataset,
    EmbeddingRecord,
    KnnIndex,
    LabeledSentence,
    Level,
    TokenAnnotation,
    TrainConfig,
    bow_predict_dataset,
    bow_train,
    confusion_and_f1,
    knn_predict_dataset,
    train,
)

DIM = 16
SIGMA = 1.0
COUNTS = {"train": (80, 70, 60, 50, 40, 8), "valid": (20,) * 6, "test": (25,) * 6}
LEMMA_POOL = 5  # lemmas per level, half shared with the next level


def lemmas_for(level, rng):
    # heavy overlap with neighbors and a shared pool keeps BoW non-trivial
    own = [f"lv{level}w{j}" for j in range(LEMMA_POOL)]
    lo, hi = max(level - 1, 0), min(level + 1, 5)
    neighbors = [f"lv{k}w{j}" for k in (lo, hi) for j in range(LEMMA_POOL)]
    shared = [f"common{j}" for j in range(12)]
    pool = own + neighbors + shared * 2
    return [pool[rng.integers(len(pool))] for _ in range(6)]


def synth(counts, seed):
    rng = np.random.default_rng(seed)
    sentences, embeddings, annotations = [], {}, {}
    for level in Level:
        center = np.zeros(DIM)
        center[level] = 2.5
        for i in range(counts[level]):
            sid = f"{level.name}-{seed}-{i}"
            words = lemmas_for(int(level), rng)
            sentences.append(LabeledSentence(
                id=sid, text=" ".join(words), labels=frozenset({level})))
            embeddings[sid] = EmbeddingRecord(
                id=sid, vector=center + SIGMA * rng.normal(size=DIM))
            annotations[sid] = tuple(
                TokenAnnotation(surface=w, lemma=w, pos="NOUN",
                                ner=None, is_content=True)
                for w in words)
    return Dataset(sentences=tuple(sentences), embeddings=embeddings,
                   annotations=annotations)


def macro(preds, golds):
    return confusion_and_f1(list(preds), golds).macro_f1


def main():
    splits = {name: synth(c, seed)
              for seed, (name, c) in enumerate(COUNTS.items())}
    test = splits["test"]
    golds = [frozenset(int(lv) for lv in s.labels) for s in test.sentences]

    config = TrainConfig(alpha=0.2, num_prototypes=2, seed=0, max_epochs=80,
                         batch_size=32, learning_rate=0.005, patience=20)
    model, _ = train(splits["train"], splits["valid"], config)
    head_preds = model.predict_batch(test.embedding_matrix())

    index = KnnIndex.from_dataset(splits["train"], k=6)
    knn_preds = knn_predict_dataset(index, test)

    bow = bow_train(splits["train"], gamma=0.1, epochs=80, weights=None)
    bow_preds = bow_predict_dataset(bow, test)

    print("test macro-F1 on the same corpus:")
    print(f"  prototype head : {macro(head_preds, golds):.4f}")
    print(f"  kNN (k=6)      : {macro(knn_preds, golds):.4f}")
    print(f"  bag of words   : {macro(bow_preds, golds):.4f}")

    # rare-level F1 is where the weighted head earns its keep
    rare = Level.C2
    for name, preds in (("head", head_preds), ("knn", knn_preds),
                        ("bow", bow_preds)):
        f1 = confusion_and_f1(list(preds), golds).per_level_f1[rare]
        print(f"  {name:4s} F1 on rare {rare.name}: {f1:.4f}")


if __name__ == "__main__":
    main()
