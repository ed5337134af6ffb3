"""Command-line interface.

One subcommand per invocation: train, predict, evaluate, knn, bow, split,
profile, crosstab, init-prototypes, agreement.  Exit codes: 0 success, 1
usage error, 2 data or validation error.  Every randomized subcommand takes
--seed and is bit-reproducible given it.  Relative input paths that do not
exist are retried under $CEFRKIT_DATA_DIR when that variable is set.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from typing import Any, Sequence

import numpy as np

from .baselines import (
    BowModel,
    KnnIndex,
    bow_featurize,
    bow_predict_dataset,
    bow_train,
    knn_predict_dataset,
    knn_votes,
)
from .container import (
    ContainerError,
    load_any,
    load_prototype_model,
    save_bow_model,
    save_knn_index,
    save_prototype_model,
    write_json_mirror,
)
from .core import (
    Dataset,
    DatasetError,
    Level,
    NUM_LEVELS,
    parse_dataset,
    reconcile_annotations,
    write_dataset,
)
from .corpus_tools import (
    SplitQuotas,
    Wordlist,
    level_crosstab,
    lexical_profile,
    profile_to_tsv,
    split_corpus,
    write_split,
)
from .evaluation import (
    EvalReport,
    confusion_and_f1,
    format_report,
    multi_run_summary,
    quadratic_weighted_kappa,
)
from .metric_head import PrototypeModel, init_prototypes
from .training import TrainConfig, loss_weights, train

DATA_DIR_ENV = "CEFRKIT_DATA_DIR"


class _UsageExit(Exception):
    def __init__(self, message: str) -> None:
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract wants 1
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageExit(f"{self.prog}: {message}")


def _resolve(path: str) -> str:
    if os.path.exists(path) or os.path.isabs(path):
        return path
    base = os.environ.get(DATA_DIR_ENV)
    if base:
        candidate = os.path.join(base, path)
        if os.path.exists(candidate):
            return candidate
    return path


def _load_dataset(path: str, need_embeddings: bool = False) -> Dataset:
    resolved = _resolve(path)
    if not os.path.exists(resolved):
        raise DatasetError(
            f"dataset file {path!r} not found"
            + (f" (also tried under ${DATA_DIR_ENV})" if os.environ.get(DATA_DIR_ENV) else "")
        )
    data = parse_dataset(resolved)
    if need_embeddings:
        data.require_embeddings()
    return data


def _write_lines(path: str, lines: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def _write_json(path: str, doc: Any) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _quota_list(text: str) -> tuple[int, ...]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != NUM_LEVELS:
        raise argparse.ArgumentTypeError(
            f"expected {NUM_LEVELS} comma-separated counts (A1..C2)"
        )
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _gold_sets(data: Dataset) -> list[frozenset[int]]:
    return [frozenset(int(lvl) for lvl in s.labels) for s in data.sentences]


# ---------------------------------------------------------------- train


def _train_config(args: argparse.Namespace) -> TrainConfig:
    overrides = {
        "alpha": args.alpha,
        "learning_rate": args.lr,
        "batch_size": args.batch_size,
        "patience": args.patience,
        "min_delta": args.min_delta,
        "max_epochs": args.max_epochs,
        "seed": args.seed,
        "weight_decay": args.weight_decay,
        "num_prototypes": args.k,
        "noise_fraction": args.noise_fraction,
        "gold_target": args.gold_target,
    }
    if args.no_adapter:
        overrides["adapter_enabled"] = False
    if args.config:
        return TrainConfig.from_file(_resolve(args.config), **overrides)
    return TrainConfig(**{k: v for k, v in overrides.items() if v is not None})


def _predictions(model: PrototypeModel, data: Dataset) -> np.ndarray:
    data.require_embeddings()
    return model.predict_batch(data.embedding_matrix())


def _report_for(model: PrototypeModel, data: Dataset) -> EvalReport:
    preds = _predictions(model, data).tolist()
    return confusion_and_f1(preds, _gold_sets(data), model.num_levels)


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _train_config(args)
    train_data = _load_dataset(args.data, need_embeddings=True)
    valid_data = _load_dataset(args.valid, need_embeddings=True)

    if args.runs is None:
        model, log = train(train_data, valid_data, cfg)
        save_prototype_model(model, args.out)
        log_path = args.log or args.out + ".log.ndjson"
        with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(log.to_ndjson())
            fh.write("\n")
        print(
            f"trained {len(log.epochs)} epochs; best epoch {log.best_epoch} "
            f"(validation macro-F1 {log.best_val_macro_f1:.4f})"
        )
        print(f"model written to {args.out}")
        return 0

    if args.runs < 3:
        raise _UsageExit("train: --runs must be at least 3")
    eval_data = (
        _load_dataset(args.eval_data, need_embeddings=True)
        if args.eval_data
        else valid_data
    )
    f1_scores: list[float] = []
    kappa_scores: list[float] = []
    best: tuple[float, PrototypeModel] | None = None
    for run in range(args.runs):
        run_cfg = replace(cfg, seed=cfg.seed + run)
        model, log = train(train_data, valid_data, run_cfg)
        report = _report_for(model, eval_data)
        f1_scores.append(report.macro_f1)
        kappa_scores.append(report.weighted_kappa)
        print(
            f"run {run} seed {run_cfg.seed} "
            f"macro_f1 {report.macro_f1:.4f} kappa {report.weighted_kappa:.4f}"
        )
        if best is None or log.best_val_macro_f1 > best[0]:
            best = (log.best_val_macro_f1, model)
    f1_summary = multi_run_summary(f1_scores)
    kappa_summary = multi_run_summary(kappa_scores)
    print(
        f"macro_f1 mean {f1_summary.mean:.4f} +- {f1_summary.ci95:.4f} "
        f"(best and worst of {args.runs} runs dropped)"
    )
    print(f"kappa mean {kappa_summary.mean:.4f} +- {kappa_summary.ci95:.4f}")
    if args.out:
        assert best is not None
        save_prototype_model(best[1], args.out)
        print(f"model with best validation score written to {args.out}")
    if args.summary_out:
        _write_json(
            args.summary_out,
            {
                "runs": args.runs,
                "macro_f1": f1_summary.to_json(),
                "weighted_kappa": kappa_summary.to_json(),
            },
        )
    return 0


# ---------------------------------------------------------------- predict


def _predict_lines(kind: str, model: Any, data: Dataset) -> list[str]:
    lines = []
    if kind == "prototype":
        data.require_embeddings()
        xs = data.embedding_matrix()
        sims = model.level_similarities_batch(xs)
        probs = model.level_distribution_batch(xs)
        preds = np.argmax(probs, axis=1)
        for i, sentence in enumerate(data.sentences):
            lines.append(json.dumps(
                {
                    "id": sentence.id,
                    "label": Level(int(preds[i])).label,
                    "probabilities": [float(p) for p in probs[i]],
                    "similarities": [float(s) for s in sims[i]],
                },
                sort_keys=True,
            ))
    elif kind == "knn":
        data.require_embeddings()
        for sentence, x in zip(data.sentences, data.embedding_matrix()):
            votes = knn_votes(x, model)
            lines.append(json.dumps(
                {
                    "id": sentence.id,
                    "label": Level(int(np.argmax(votes))).label,
                    "votes": [float(v) for v in votes],
                },
                sort_keys=True,
            ))
    elif kind == "bow":
        for sentence in data.sentences:
            tokens = data.tokens_for(sentence.id)
            values = model.decision_values(
                bow_featurize(tokens, model.vocabulary)
            )
            lines.append(json.dumps(
                {
                    "id": sentence.id,
                    "label": Level(int(np.argmax(values))).label,
                    "decision_values": [float(v) for v in values],
                },
                sort_keys=True,
            ))
    else:
        raise ContainerError(f"cannot predict with model type {kind!r}")
    return lines


def _cmd_predict(args: argparse.Namespace) -> int:
    kind, model = load_any(_resolve(args.model))
    data = _load_dataset(args.data)
    lines = _predict_lines(kind, model, data)
    if args.out:
        _write_lines(args.out, lines)
        print(f"{len(lines)} predictions written to {args.out}")
    else:
        for line in lines:
            print(line)
    return 0


# ---------------------------------------------------------------- evaluate


def _read_predictions(path: str) -> dict[str, int]:
    resolved = _resolve(path)
    preds: dict[str, int] = {}
    with open(resolved, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{line_no}: malformed JSON: {exc}")
            if "id" not in record or "label" not in record:
                raise DatasetError(
                    f"{path}:{line_no}: prediction records need 'id' and 'label'"
                )
            if record["id"] in preds:
                raise DatasetError(f"{path}:{line_no}: duplicate id {record['id']!r}")
            preds[record["id"]] = int(Level.from_label(record["label"]))
    if not preds:
        raise DatasetError(f"{path}: no predictions found")
    return preds


def _aligned(preds: dict[str, int], gold: Dataset) -> tuple[list[int], list[frozenset[int]]]:
    missing = [s.id for s in gold.sentences if s.id not in preds]
    if missing:
        raise DatasetError(
            f"{len(missing)} gold sentence(s) lack predictions, "
            f"first missing id: {missing[0]!r}"
        )
    pred_list = [preds[s.id] for s in gold.sentences]
    return pred_list, _gold_sets(gold)


def _cmd_evaluate(args: argparse.Namespace) -> int:
    gold = _load_dataset(args.gold)
    reports = []
    for path in args.preds:
        pred_list, gold_sets = _aligned(_read_predictions(path), gold)
        reports.append(confusion_and_f1(pred_list, gold_sets))
    if len(reports) == 1:
        print(format_report(reports[0]), end="")
        if args.json_out:
            _write_json(args.json_out, reports[0].to_json())
        return 0
    f1_summary = multi_run_summary([r.macro_f1 for r in reports])
    kappa_summary = multi_run_summary([r.weighted_kappa for r in reports])
    for i, report in enumerate(reports):
        print(f"run {i} macro_f1 {report.macro_f1:.4f} "
              f"kappa {report.weighted_kappa:.4f}")
    print(f"macro_f1 mean {f1_summary.mean:.4f} +- {f1_summary.ci95:.4f}")
    print(f"kappa mean {kappa_summary.mean:.4f} +- {kappa_summary.ci95:.4f}")
    if args.json_out:
        _write_json(
            args.json_out,
            {
                "macro_f1": f1_summary.to_json(),
                "weighted_kappa": kappa_summary.to_json(),
            },
        )
    return 0


# ---------------------------------------------------------------- baselines


def _cmd_knn(args: argparse.Namespace) -> int:
    train_data = _load_dataset(args.train, need_embeddings=True)
    index = KnnIndex.from_dataset(train_data, k=args.k)
    if args.out:
        save_knn_index(index, args.out)
        print(f"index over {index.size} vectors written to {args.out}")
    if args.data:
        data = _load_dataset(args.data, need_embeddings=True)
        lines = _predict_lines("knn", index, data)
        if args.preds_out:
            _write_lines(args.preds_out, lines)
            print(f"{len(lines)} predictions written to {args.preds_out}")
        else:
            for line in lines:
                print(line)
        if args.report:
            preds = knn_predict_dataset(index, data).tolist()
            print(format_report(confusion_and_f1(preds, _gold_sets(data))), end="")
    return 0


def _cmd_bow(args: argparse.Namespace) -> int:
    train_data = _load_dataset(args.train)
    weights = None
    if not args.unweighted:
        counts = train_data.level_counts(NUM_LEVELS)
        weights = loss_weights(counts, args.alpha)
    model = bow_train(
        train_data,
        gamma=args.gamma,
        weights=weights,
        seed=args.seed,
        epochs=args.epochs,
        learning_rate=args.lr,
    )
    if args.out:
        save_bow_model(model, args.out)
        print(f"bag-of-words model over {len(model.vocabulary)} lemmas "
              f"written to {args.out}")
    if args.data:
        data = _load_dataset(args.data)
        lines = _predict_lines("bow", model, data)
        if args.preds_out:
            _write_lines(args.preds_out, lines)
            print(f"{len(lines)} predictions written to {args.preds_out}")
        else:
            for line in lines:
                print(line)
        if args.report:
            preds = bow_predict_dataset(model, data).tolist()
            print(format_report(confusion_and_f1(preds, _gold_sets(data))), end="")
    return 0


# ---------------------------------------------------------------- corpus


def _cmd_split(args: argparse.Namespace) -> int:
    data = _load_dataset(args.data, need_embeddings=True)
    quotas = SplitQuotas(test=args.test_quotas, valid=args.valid_quotas)
    result = split_corpus(data, quotas)
    write_split(result, args.out_dir)
    counts = result.manifest["counts"]
    for name in ("test", "valid", "train"):
        total = sum(counts[name].values())
        print(f"{name}: {total} sentences")
    print(f"split written to {args.out_dir}")
    return 0


def _cmd_profile(args: argparse.Namespace) -> int:
    data = _load_dataset(args.data)
    wordlist = Wordlist.from_tsv(_resolve(args.wordlist))
    rows = lexical_profile(data, wordlist)
    tsv = profile_to_tsv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(tsv)
        print(f"profile written to {args.out}")
    else:
        print(tsv, end="")
    return 0


def _read_external_labels(path: str) -> dict[str, str]:
    resolved = _resolve(path)
    labels: dict[str, str] = {}
    with open(resolved, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"{path}:{line_no}: expected id<TAB>label")
            if parts[0] in labels:
                raise DatasetError(f"{path}:{line_no}: duplicate id {parts[0]!r}")
            labels[parts[0]] = parts[1]
    if not labels:
        raise DatasetError(f"{path}: no external labels found")
    return labels


def _cmd_crosstab(args: argparse.Namespace) -> int:
    data = _load_dataset(args.data)
    external = _read_external_labels(args.external)
    table = level_crosstab(data, external)
    tsv = table.to_tsv()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(tsv)
        print(f"crosstab written to {args.out}")
    else:
        print(tsv, end="")
    return 0


# ---------------------------------------------------------------- misc


def _cmd_init_prototypes(args: argparse.Namespace) -> int:
    data = _load_dataset(args.data, need_embeddings=True)
    model = init_prototypes(
        data,
        args.k,
        noise_fraction=args.noise_fraction,
        seed=args.seed,
    )
    save_prototype_model(model, args.out)
    if args.json_mirror:
        write_json_mirror(args.out, args.json_mirror)
    print(
        f"initialized {model.prototypes.shape[0]} prototypes of dimension "
        f"{model.dim}, written to {args.out}"
    )
    return 0


def _single_labels(data: Dataset, path: str) -> dict[str, Level]:
    labels = {}
    for sentence in data.sentences:
        if len(sentence.labels) != 1:
            raise DatasetError(
                f"{path}: sentence {sentence.id!r} carries "
                f"{len(sentence.labels)} labels; annotator files must have one"
            )
        labels[sentence.id] = next(iter(sentence.labels))
    return labels


def _cmd_agreement(args: argparse.Namespace) -> int:
    data_a = _load_dataset(args.a)
    data_b = _load_dataset(args.b)
    labels_a = _single_labels(data_a, args.a)
    labels_b = _single_labels(data_b, args.b)
    shared = [s.id for s in data_a.sentences if s.id in labels_b]
    if not shared:
        raise DatasetError("the two annotation files share no sentence ids")

    exact = adjacent = rejected = 0
    reconciled_rows = []
    pairs_a: list[frozenset[int]] = []
    pairs_b: list[int] = []
    for sid in shared:
        a, b = labels_a[sid], labels_b[sid]
        merged = reconcile_annotations(a, b)
        if merged is None:
            rejected += 1
        elif len(merged) == 1:
            exact += 1
        else:
            adjacent += 1
        if merged is not None:
            reconciled_rows.append((sid, merged))
        pairs_a.append(frozenset([int(a)]))
        pairs_b.append(int(b))

    kappa = quadratic_weighted_kappa(pairs_b, pairs_a)
    stats = {
        "n": len(shared),
        "exact": exact,
        "adjacent": adjacent,
        "rejected": rejected,
        "exact_pct": 100.0 * exact / len(shared),
        "adjacent_pct": 100.0 * adjacent / len(shared),
        "weighted_kappa": kappa,
    }
    print(json.dumps(stats, indent=2, sort_keys=True))
    if args.out:
        merged_labels = dict(reconciled_rows)
        kept = data_a.subset([sid for sid, _ in reconciled_rows])
        relabeled = Dataset(
            sentences=[
                replace(s, labels=merged_labels[s.id]) for s in kept.sentences
            ],
            embeddings=dict(kept.embeddings),
            annotations=dict(kept.annotations),
        )
        write_dataset(relabeled, args.out)
        print(f"{len(reconciled_rows)} reconciled sentences written to {args.out}")
    return 0


# ---------------------------------------------------------------- parser


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="cefrkit",
        description="Sentence-level CEFR assessment over precomputed embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the prototype head")
    p.add_argument("--data", required=True, help="training NDJSON with vectors")
    p.add_argument("--valid", required=True, help="validation NDJSON with vectors")
    p.add_argument("--out", help="model container path")
    p.add_argument("--log", help="TrainLog NDJSON path (default: <out>.log.ndjson)")
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--alpha", type=float, help="loss-weight exponent in [0,1]")
    p.add_argument("--k", type=int, help="prototypes per level")
    p.add_argument("--seed", type=int, help="base RNG seed")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--min-delta", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--noise-fraction", type=float)
    p.add_argument("--no-adapter", action="store_true",
                   help="freeze the linear adapter at identity")
    p.add_argument("--gold-target", choices=("max_prob", "higher"))
    p.add_argument("--runs", type=int,
                   help="repeat training N times with seeds seed..seed+N-1 "
                        "and report trimmed mean +- 95%% CI")
    p.add_argument("--eval-data", help="NDJSON scored per run (default: --valid)")
    p.add_argument("--summary-out", help="JSON summary path for --runs")
    p.set_defaults(func=_cmd_train, needs_out_unless_runs=True)

    p = sub.add_parser("predict", help="predict levels with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="predictions NDJSON (default: stdout)")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold labels")
    p.add_argument("--preds", required=True, action="append",
                   help="predictions NDJSON; repeat for a multi-run summary")
    p.add_argument("--gold", required=True, help="gold NDJSON with labels")
    p.add_argument("--json-out", help="write the report or summary as JSON")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("knn", help="cosine kNN baseline")
    p.add_argument("--train", required=True, help="training NDJSON with vectors")
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--out", help="index container path")
    p.add_argument("--data", help="NDJSON to predict")
    p.add_argument("--preds-out", help="predictions NDJSON (default: stdout)")
    p.add_argument("--report", action="store_true",
                   help="also print an evaluation report against --data labels")
    p.set_defaults(func=_cmd_knn)

    p = sub.add_parser("bow", help="bag-of-words baseline")
    p.add_argument("--train", required=True, help="training NDJSON with tokens")
    p.add_argument("--gamma", type=float, default=0.7, help="L2 strength")
    p.add_argument("--alpha", type=float, default=0.3,
                   help="loss-weight exponent (ignored with --unweighted)")
    p.add_argument("--unweighted", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--out", help="model container path")
    p.add_argument("--data", help="NDJSON to predict")
    p.add_argument("--preds-out", help="predictions NDJSON (default: stdout)")
    p.add_argument("--report", action="store_true",
                   help="also print an evaluation report against --data labels")
    p.set_defaults(func=_cmd_bow)

    p = sub.add_parser("split", help="similarity-aware corpus split")
    p.add_argument("--data", required=True, help="corpus NDJSON with vectors")
    p.add_argument("--test-quotas", required=True, type=_quota_list,
                   help="six comma-separated per-level counts, A1..C2")
    p.add_argument("--valid-quotas", required=True, type=_quota_list)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("profile", help="lexical profile against a wordlist")
    p.add_argument("--data", required=True, help="corpus NDJSON with tokens")
    p.add_argument("--wordlist", required=True, help="lemma<TAB>pos<TAB>level TSV")
    p.add_argument("--out", help="TSV path (default: stdout)")
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("crosstab", help="gold levels vs an external labeling")
    p.add_argument("--data", required=True)
    p.add_argument("--external", required=True, help="id<TAB>label TSV")
    p.add_argument("--out", help="TSV path (default: stdout)")
    p.set_defaults(func=_cmd_crosstab)

    p = sub.add_parser("init-prototypes",
                       help="write an untrained model from noisy class means")
    p.add_argument("--data", required=True, help="training NDJSON with vectors")
    p.add_argument("--k", type=int, default=3, help="prototypes per level")
    p.add_argument("--noise-fraction", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--json-mirror", help="also write an inspectable JSON copy")
    p.set_defaults(func=_cmd_init_prototypes)

    p = sub.add_parser("agreement",
                       help="agreement statistics for two annotation files")
    p.add_argument("--a", required=True, help="first annotator NDJSON")
    p.add_argument("--b", required=True, help="second annotator NDJSON")
    p.add_argument("--out", help="reconciled NDJSON (rejected pairs dropped)")
    p.set_defaults(func=_cmd_agreement)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "needs_out_unless_runs", False):
            if args.runs is None and not args.out:
                raise _UsageExit("train: --out is required without --runs")
        return args.func(args)
    except _UsageExit as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DatasetError, ContainerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
