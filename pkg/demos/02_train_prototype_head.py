"""Train the prototype metric head on synthetic six-level embeddings.

The generator places each level on its own axis of a 16-dim space and
keeps the top level rare, mimicking the label imbalance of real graded
corpora.  Run: python3 demos/02_train_prototype_head.py
"""

import numpy as np

from cefrkit import (
    Dataset,
    EmbeddingRecord,
    LabeledSentence,
    Level,
    TrainConfig,
    confusion_and_f1,
    format_report,
    resolve_gold,
    train,
)

PER_LEVEL = {"train": (80, 70, 60, 50, 40, 8), "valid": (20,) * 6, "test": (25,) * 6}
DIM = 16
SIGMA = 0.9


def synth(counts, seed):
    rng = np.random.default_rng(seed)
    sentences, embeddings = [], {}
    for level in Level:
        center = np.zeros(DIM)
        center[level] = 2.5
        for i in range(counts[level]):
            sid = f"{level.name}-{seed}-{i}"
            sentences.append(LabeledSentence(
                id=sid,
                text="placeholder sentence for the demo corpus",
                labels=frozenset({level}),
            ))
            vec = center + SIGMA * rng.normal(size=DIM)
            embeddings[sid] = EmbeddingRecord(id=sid, vector=vec)
    return Dataset(sentences=tuple(sentences), embeddings=embeddings)


def main():
    splits = {name: synth(counts, seed)
              for seed, (name, counts) in enumerate(PER_LEVEL.items())}
    config = TrainConfig(alpha=0.2, num_prototypes=2, seed=0,
                         max_epochs=80, batch_size=32,
                         learning_rate=0.005, patience=20)
    model, log = train(splits["train"], splits["valid"], config)
    print(f"trained {log.epochs[-1].epoch} epochs; "
          f"best epoch {log.best_epoch} "
          f"(validation macro-F1 {log.best_val_macro_f1:.4f})")

    test = splits["test"]
    preds = [int(p) for p in model.predict_batch(test.embedding_matrix())]
    golds = [frozenset(int(lv) for lv in s.labels) for s in test.sentences]
    report = confusion_and_f1(preds, golds)
    print()
    print(format_report(report))

    # show the gold-resolution rule on one prediction
    s = test.sentences[0]
    pred = preds[0]
    gold = resolve_gold(pred, golds[0])
    print(f"\nexample: predicted {Level(pred).name}, "
          f"resolved gold {Level(gold).name} for {s.id}")


if __name__ == "__main__":
    main()
