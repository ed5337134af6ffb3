"""cefr-embed: export sentence embeddings in the NDJSON corpus schema."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .encode import EmbedConfig, ExportRecord, export_corpus


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageExit(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="cefr-embed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    exp = sub.add_parser("export", help="encode sentences to NDJSON")
    exp.add_argument("--input", required=True,
                     help="NDJSON with id/text/labels, or plain text "
                          "(one sentence per line, needs --labels)")
    exp.add_argument("--labels",
                     help="aligned label file for plain-text input; one "
                          "label per line, two-label form A2/B1 allowed")
    exp.add_argument("--encoder", required=True,
                     help="model name or local checkpoint directory")
    exp.add_argument("--layer", type=int, default=11,
                     help="hidden-state set index; 0 is the embedding output")
    exp.add_argument("--batch-size", type=int, default=16)
    exp.add_argument("--device", default="cpu")
    exp.add_argument("--out", required=True, help="output NDJSON path")
    exp.add_argument("--debug-states",
                     help="also write per-token states NDJSON here")
    exp.add_argument("--include-special", action="store_true",
                     help="pool over [CLS]/[SEP] as well")
    exp.add_argument("--no-tokens", action="store_true",
                     help="skip the builtin token annotator")
    return parser


def _read_ndjson_input(path: str) -> list[ExportRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(
                    f"{path}:{line_no}: malformed JSON ({exc.msg})") from None
            for key in ("id", "text", "labels"):
                if key not in doc:
                    raise ValueError(f"{path}:{line_no}: missing '{key}'")
            extra = {k: v for k, v in doc.items()
                     if k not in ("id", "text", "labels", "vector", "tokens")}
            records.append(ExportRecord(id=str(doc["id"]), text=doc["text"],
                                        labels=tuple(doc["labels"]),
                                        extra=extra))
    return records


def _read_text_input(path: str, labels_path: str) -> list[ExportRecord]:
    texts = [l.rstrip("\n") for l in open(path, encoding="utf-8")]
    texts = [t for t in texts if t.strip()]
    labels = [l.strip() for l in open(labels_path, encoding="utf-8")]
    labels = [l for l in labels if l]
    if len(texts) != len(labels):
        raise ValueError(
            f"{len(texts)} sentences but {len(labels)} labels; the files "
            f"must align line by line")
    width = len(str(len(texts)))
    return [
        ExportRecord(id=f"s{i + 1:0{width}d}", text=text,
                     labels=tuple(lab.split("/")))
        for i, (text, lab) in enumerate(zip(texts, labels))
    ]


def _cmd_export(args) -> int:
    if args.input.endswith(".ndjson"):
        if args.labels:
            raise _UsageExit("--labels conflicts with NDJSON input; labels "
                             "come from the records")
        records = _read_ndjson_input(args.input)
    else:
        if not args.labels:
            raise _UsageExit("plain-text input requires --labels")
        records = _read_text_input(args.input, args.labels)
    cfg = EmbedConfig(encoder=args.encoder, layer=args.layer,
                      batch_size=args.batch_size, device=args.device,
                      include_special_tokens=args.include_special)
    meta = export_corpus(records, cfg, args.out,
                         annotate=not args.no_tokens,
                         debug_states_path=args.debug_states)
    print(f"{meta['records']} records of dimension {meta['hidden_size']} "
          f"written to {args.out}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _cmd_export(args)
    except _UsageExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
