"""Command-line interface: round trips, exit codes, reproducibility."""

import json

import numpy as np
import pytest

from cefrkit import load_prototype_model
from cefrkit.cli import main


def _corpus_lines(seed, per_level, dim=8, sigma=0.25):
    """Six separable Gaussian clusters with tokens tied to the level."""
    rng = np.random.default_rng(seed)
    lines = []
    for level_idx, label in enumerate(("A1", "A2", "B1", "B2", "C1", "C2")):
        center = np.zeros(dim)
        center[level_idx] = 3.0
        for i in range(per_level):
            vec = center + sigma * rng.normal(size=dim)
            lemmas = [f"w{level_idx}", f"v{level_idx}", f"common{i % 2}"]
            tokens = [
                {"surface": l, "lemma": l, "pos": "NOUN", "ner": None,
                 "is_content": True}
                for l in lemmas
            ]
            lines.append(json.dumps({
                "id": f"{label}-{i}",
                "text": " ".join(lemmas + ["filler", "words"]),
                "labels": [label],
                "vector": vec.tolist(),
                "tokens": tokens,
            }))
    return lines


@pytest.fixture()
def corpus(tmp_path):
    paths = {}
    for name, seed, n in (("train", 0, 12), ("valid", 1, 4), ("test", 2, 5)):
        p = tmp_path / f"{name}.ndjson"
        p.write_text("\n".join(_corpus_lines(seed, n)) + "\n", encoding="utf-8")
        paths[name] = str(p)
    return paths


def _train_args(corpus, out, extra=()):
    return [
        "train", "--data", corpus["train"], "--valid", corpus["valid"],
        "--out", out, "--k", "1", "--alpha", "0.2", "--seed", "7",
        "--lr", "0.01", "--batch-size", "16", "--max-epochs", "10",
        *extra,
    ]


# -------------------------------------------------------------- round trip

def test_train_predict_evaluate_round_trip(tmp_path, corpus, capsys):
    model_path = str(tmp_path / "model.bin")
    assert main(_train_args(corpus, model_path)) == 0
    out = capsys.readouterr().out
    assert "best epoch" in out
    log_path = model_path + ".log.ndjson"
    log_lines = open(log_path).read().strip().split("\n")
    assert json.loads(log_lines[0])["epoch"] == 0

    preds_path = str(tmp_path / "preds.ndjson")
    assert main(["predict", "--model", model_path, "--data", corpus["test"],
                 "--out", preds_path]) == 0
    records = [json.loads(l) for l in open(preds_path).read().strip().split("\n")]
    assert len(records) == 30
    for rec in records:
        assert set(rec) == {"id", "label", "probabilities", "similarities"}
        assert len(rec["probabilities"]) == 6
        assert len(rec["similarities"]) == 6
        assert abs(sum(rec["probabilities"]) - 1.0) < 1e-9

    assert main(["evaluate", "--preds", preds_path,
                 "--gold", corpus["test"]]) == 0
    report = capsys.readouterr().out
    assert "kappa" in report.lower()
    json_path = str(tmp_path / "report.json")
    assert main(["evaluate", "--preds", preds_path, "--gold", corpus["test"],
                 "--json-out", json_path]) == 0
    doc = json.loads(open(json_path).read())
    assert doc["n"] == 30
    assert doc["macro_f1"] >= 0.9  # clusters are well separated


def test_predict_to_stdout(tmp_path, corpus, capsys):
    model_path = str(tmp_path / "model.bin")
    main(_train_args(corpus, model_path))
    capsys.readouterr()
    assert main(["predict", "--model", model_path, "--data", corpus["test"]]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert len(lines) == 30
    assert json.loads(lines[0])["id"].startswith("A1-")


def test_train_reruns_are_byte_identical(tmp_path, corpus):
    p1, p2 = str(tmp_path / "m1.bin"), str(tmp_path / "m2.bin")
    assert main(_train_args(corpus, p1)) == 0
    assert main(_train_args(corpus, p2)) == 0
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_train_multi_run_protocol(tmp_path, corpus, capsys):
    model_path = str(tmp_path / "best.bin")
    summary_path = str(tmp_path / "summary.json")
    args = _train_args(corpus, model_path,
                       extra=["--runs", "4", "--eval-data", corpus["test"],
                              "--summary-out", summary_path])
    assert main(args) == 0
    out = capsys.readouterr().out
    assert "run 0 seed 7" in out
    assert "run 3 seed 10" in out
    assert "macro_f1 mean" in out
    doc = json.loads(open(summary_path).read())
    assert doc["runs"] == 4
    assert len(doc["macro_f1"]["raw_scores"]) == 4
    assert len(doc["macro_f1"]["retained"]) == 2
    assert open(model_path, "rb").read()  # best-validation model saved


def test_train_runs_must_be_at_least_three(tmp_path, corpus, capsys):
    args = _train_args(corpus, str(tmp_path / "m.bin"), extra=["--runs", "2"])
    assert main(args) == 1
    assert "at least 3" in capsys.readouterr().err


# --------------------------------------------------------------- baselines

def test_knn_subcommand(tmp_path, corpus, capsys):
    index_path = str(tmp_path / "index.bin")
    preds_path = str(tmp_path / "knn_preds.ndjson")
    assert main(["knn", "--train", corpus["train"], "--k", "3",
                 "--out", index_path, "--data", corpus["test"],
                 "--preds-out", preds_path, "--report"]) == 0
    out = capsys.readouterr().out
    assert "index over 72 vectors" in out
    assert "kappa" in out.lower()
    records = [json.loads(l) for l in open(preds_path).read().strip().split("\n")]
    assert len(records) == 30
    assert set(records[0]) == {"id", "label", "votes"}
    assert sum(records[0]["votes"]) == 3.0


def test_bow_subcommand(tmp_path, corpus, capsys):
    model_path = str(tmp_path / "bow.bin")
    preds_path = str(tmp_path / "bow_preds.ndjson")
    assert main(["bow", "--train", corpus["train"], "--gamma", "0.1",
                 "--epochs", "60", "--out", model_path,
                 "--data", corpus["test"], "--preds-out", preds_path]) == 0
    records = [json.loads(l) for l in open(preds_path).read().strip().split("\n")]
    assert set(records[0]) == {"id", "label", "decision_values"}
    # level-specific lemmas make the toy corpus trivially separable
    correct = sum(1 for r in records if r["id"].startswith(r["label"]))
    assert correct == 30
    capsys.readouterr()


# ------------------------------------------------------------------ corpus

def test_split_subcommand(tmp_path, corpus, capsys):
    out_dir = str(tmp_path / "splits")
    assert main(["split", "--data", corpus["train"],
                 "--test-quotas", "2,2,2,2,2,2",
                 "--valid-quotas", "1,1,1,1,1,1",
                 "--out-dir", out_dir]) == 0
    out = capsys.readouterr().out
    assert "test: 12 sentences" in out
    assert "valid: 6 sentences" in out
    assert "train: 54 sentences" in out
    manifest = json.loads(open(f"{out_dir}/manifest.json").read())
    assert manifest["total"] == 72


def test_profile_subcommand(tmp_path, corpus, capsys):
    wordlist = tmp_path / "wl.tsv"
    wordlist.write_text("w0\tNOUN\tA1\nw3\tNOUN\tB2\n", encoding="utf-8")
    assert main(["profile", "--data", corpus["train"],
                 "--wordlist", str(wordlist)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("level\tsentences")
    assert len(out.strip().split("\n")) == 7


def test_crosstab_subcommand(tmp_path, corpus, capsys):
    external = tmp_path / "ext.tsv"
    rows = [f"A1-{i}\t2" for i in range(12)] + [f"B1-{i}\t5" for i in range(12)]
    external.write_text("\n".join(rows) + "\n", encoding="utf-8")
    assert main(["crosstab", "--data", corpus["train"],
                 "--external", str(external)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("level\t2\t5")
    assert "A1\t12\t0" in out
    assert "B1\t0\t12" in out


def test_init_prototypes_subcommand(tmp_path, corpus, capsys):
    out_path = str(tmp_path / "init.bin")
    mirror = str(tmp_path / "init.json")
    assert main(["init-prototypes", "--data", corpus["train"], "--k", "1",
                 "--seed", "3", "--out", out_path, "--json-mirror", mirror]) == 0
    model = load_prototype_model(out_path)
    gram = model.prototypes @ model.prototypes.T
    assert np.max(np.abs(gram - np.eye(6))) <= 1e-6
    doc = json.loads(open(mirror).read())
    assert doc["type"] == "prototype"
    capsys.readouterr()


# --------------------------------------------------------------- agreement

def test_agreement_subcommand(tmp_path, capsys):
    def annotator_file(name, labels):
        lines = [
            json.dumps({"id": f"s{i}", "text": "words here", "labels": [lab]})
            for i, lab in enumerate(labels)
        ]
        p = tmp_path / name
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return str(p)

    a = annotator_file("a.ndjson", ["B1", "B1", "A1", "C1"])
    b = annotator_file("b.ndjson", ["B1", "B2", "B1", "C1"])
    out_path = str(tmp_path / "reconciled.ndjson")
    assert main(["agreement", "--a", a, "--b", b, "--out", out_path]) == 0
    printed = capsys.readouterr().out
    stats = json.loads(printed[: printed.index("\n}") + 2])
    assert stats["n"] == 4
    assert stats["exact"] == 2
    assert stats["adjacent"] == 1
    assert stats["rejected"] == 1
    kept = [json.loads(l) for l in open(out_path).read().strip().split("\n")]
    assert [r["id"] for r in kept] == ["s0", "s1", "s3"]
    merged = next(r for r in kept if r["id"] == "s1")
    assert sorted(merged["labels"]) == ["B1", "B2"]


def test_agreement_rejects_two_label_input(tmp_path, capsys):
    p1 = tmp_path / "a.ndjson"
    p1.write_text(json.dumps({"id": "s0", "text": "x", "labels": ["B1", "B2"]})
                  + "\n", encoding="utf-8")
    p2 = tmp_path / "b.ndjson"
    p2.write_text(json.dumps({"id": "s0", "text": "x", "labels": ["B1"]})
                  + "\n", encoding="utf-8")
    assert main(["agreement", "--a", str(p1), "--b", str(p2)]) == 2
    assert "must have one" in capsys.readouterr().err


# -------------------------------------------------------------- exit codes

def test_usage_errors_exit_one(capsys):
    assert main([]) == 1
    assert main(["unknown-subcommand"]) == 1
    assert main(["train", "--data", "x.ndjson"]) == 1  # missing --valid
    capsys.readouterr()


def test_train_without_out_or_runs_is_usage_error(corpus, capsys):
    args = ["train", "--data", corpus["train"], "--valid", corpus["valid"]]
    assert main(args) == 1
    assert "--out is required" in capsys.readouterr().err


def test_data_errors_exit_two(tmp_path, corpus, capsys):
    missing = str(tmp_path / "nope.ndjson")
    assert main(["knn", "--train", missing]) == 2
    bad = tmp_path / "bad.ndjson"
    bad.write_text("{not json\n", encoding="utf-8")
    assert main(["knn", "--train", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "malformed JSON" in err


def test_missing_model_file_exits_two(tmp_path, corpus, capsys):
    assert main(["predict", "--model", str(tmp_path / "ghost.bin"),
                 "--data", corpus["test"]]) == 2
    capsys.readouterr()


# -------------------------------------------------------------- data dir

def test_data_dir_env_resolution(tmp_path, corpus, monkeypatch, capsys):
    data_dir = tmp_path / "datadir"
    data_dir.mkdir()
    lines = _corpus_lines(5, 3)
    (data_dir / "rel.ndjson").write_text("\n".join(lines) + "\n", encoding="utf-8")
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("CEFRKIT_DATA_DIR", str(data_dir))
    assert main(["knn", "--train", "rel.ndjson", "--out",
                 str(tmp_path / "i.bin")]) == 0
    monkeypatch.delenv("CEFRKIT_DATA_DIR")
    assert main(["knn", "--train", "rel.ndjson", "--out",
                 str(tmp_path / "j.bin")]) == 2
    capsys.readouterr()
