"""Versioned binary container for trained models.

Layout: 4-byte magic, u32 format version, u32 header length, a UTF-8 JSON
header with sorted keys, then the arrays named by the header back to back as
row-major little-endian float64.  Prototype models, kNN indexes, and
bag-of-words models share the format under distinct type tags.  Identical
models produce identical bytes.
"""
from __future__ import annotations

import json
import struct
from typing import Any, BinaryIO

import numpy as np

from .baselines import BowModel, KnnIndex
from .metric_head import PrototypeModel

__all__ = [
    "ContainerError",
    "save_prototype_model",
    "load_prototype_model",
    "save_knn_index",
    "load_knn_index",
    "save_bow_model",
    "load_bow_model",
    "load_any",
    "write_json_mirror",
]

MAGIC = b"CFRK"
FORMAT_VERSION = 1

TYPE_PROTOTYPE = "prototype"
TYPE_KNN = "knn"
TYPE_BOW = "bow"


class ContainerError(ValueError):
    """Raised for malformed, truncated, or unsupported container files."""


def _write(path: str, header: dict[str, Any], arrays: list[np.ndarray]) -> None:
    header = dict(header)
    header["format_version"] = FORMAT_VERSION
    header["arrays"] = [
        {"name": name, "shape": list(arr.shape)}
        for name, arr in zip(header.pop("array_names"), arrays)
    ]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh: BinaryIO, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise ContainerError(f"truncated container: expected {count} bytes of {what}")
    return data


def _read(path: str) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise ContainerError(f"{path}: not a model container (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise ContainerError(
                f"{path}: unsupported format version {version} "
                f"(this build reads {FORMAT_VERSION})"
            )
        (header_len,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        try:
            header = json.loads(_read_exact(fh, header_len, "header").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerError(f"{path}: malformed header: {exc}") from exc
        arrays: dict[str, np.ndarray] = {}
        for desc in header.get("arrays", []):
            shape = tuple(int(s) for s in desc["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, count * 8, f"array {desc['name']!r}")
            arrays[desc["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ContainerError(f"{path}: trailing bytes after declared arrays")
    return header, arrays


def save_prototype_model(model: PrototypeModel, path: str) -> None:
    header = {
        "type": TYPE_PROTOTYPE,
        "num_levels": model.num_levels,
        "prototypes_per_level": model.prototypes_per_level,
        "dim": model.dim,
        "has_adapter": model.adapter is not None,
        "metadata": model.metadata,
        "array_names": ["prototypes"] + (["adapter"] if model.adapter is not None else []),
    }
    arrays = [model.prototypes]
    if model.adapter is not None:
        arrays.append(model.adapter)
    _write(path, header, arrays)


def load_prototype_model(path: str) -> PrototypeModel:
    header, arrays = _read(path)
    if header.get("type") != TYPE_PROTOTYPE:
        raise ContainerError(f"{path}: expected a prototype model, "
                             f"found type {header.get('type')!r}")
    return PrototypeModel(
        num_levels=int(header["num_levels"]),
        prototypes_per_level=int(header["prototypes_per_level"]),
        dim=int(header["dim"]),
        prototypes=arrays["prototypes"],
        adapter=arrays.get("adapter"),
        metadata=header.get("metadata", {}),
    )


def save_knn_index(index: KnnIndex, path: str) -> None:
    header = {
        "type": TYPE_KNN,
        "k": index.k,
        "labels": [sorted(s) for s in index.labels],
        "array_names": ["vectors"],
    }
    _write(path, header, [index.vectors])


def load_knn_index(path: str) -> KnnIndex:
    header, arrays = _read(path)
    if header.get("type") != TYPE_KNN:
        raise ContainerError(f"{path}: expected a knn index, "
                             f"found type {header.get('type')!r}")
    labels = tuple(frozenset(int(g) for g in s) for s in header["labels"])
    return KnnIndex(vectors=arrays["vectors"], labels=labels, k=int(header["k"]))


def save_bow_model(model: BowModel, path: str) -> None:
    # store the vocabulary as a column-ordered list; positions are the columns
    ordered = sorted(model.vocabulary, key=model.vocabulary.__getitem__)
    header = {
        "type": TYPE_BOW,
        "gamma": model.gamma,
        "vocabulary": ordered,
        "metadata": model.metadata,
        "array_names": ["weights", "bias"],
    }
    _write(path, header, [model.weights, model.bias])


def load_bow_model(path: str) -> BowModel:
    header, arrays = _read(path)
    if header.get("type") != TYPE_BOW:
        raise ContainerError(f"{path}: expected a bag-of-words model, "
                             f"found type {header.get('type')!r}")
    vocab = {lemma: i for i, lemma in enumerate(header["vocabulary"])}
    return BowModel(
        vocabulary=vocab,
        weights=arrays["weights"],
        bias=arrays["bias"],
        gamma=float(header["gamma"]),
        metadata=header.get("metadata", {}),
    )


_LOADERS = {
    TYPE_PROTOTYPE: load_prototype_model,
    TYPE_KNN: load_knn_index,
    TYPE_BOW: load_bow_model,
}


def load_any(path: str) -> tuple[str, Any]:
    """Load any saved model; returns (type_tag, model)."""
    header, _ = _read(path)
    kind = header.get("type")
    if kind not in _LOADERS:
        raise ContainerError(f"{path}: unknown model type {kind!r}")
    return kind, _LOADERS[kind](path)


def write_json_mirror(path: str, out_path: str) -> None:
    """Dump a container's header and arrays as indented JSON for inspection."""
    header, arrays = _read(path)
    doc = dict(header)
    doc["array_data"] = {name: arr.tolist() for name, arr in arrays.items()}
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
