"""Parse a small labeled corpus and poke at the data model.

Run: python3 demos/01_data_and_levels.py
"""

import io
import json

from cefrkit import Level, parse_dataset, reconcile_annotations, serialize_dataset

RAW_RECORDS = [
    {"id": "s1", "text": "The shop opens at nine.", "labels": ["A1"]},
    {"id": "s2", "text": "I would rather stay home tonight.", "labels": ["A2", "B1"]},
    {"id": "s3", "text": "Her argument hinged on a subtle distinction.", "labels": ["C1"]},
    {"id": "s4", "text": "He runs every morning before work.", "labels": ["A2"]},
]


def main():
    ndjson = "\n".join(json.dumps(r) for r in RAW_RECORDS) + "\n"
    data = parse_dataset(io.StringIO(ndjson))
    print(f"parsed {len(data)} sentences")

    for s in data.sentences:
        names = "/".join(lv.name for lv in sorted(s.labels))
        print(f"  {s.id}: {names:6s} {s.text!r}")

    print("\nlevel counts (two-label sentences count once per level):")
    for level, n in zip(Level, data.level_counts()):
        print(f"  {level.name}: {n}")

    print("\nannotator reconciliation:")
    for a, b in ((Level.B1, Level.B1), (Level.B1, Level.B2), (Level.A1, Level.B1)):
        merged = reconcile_annotations(a, b)
        shown = "rejected" if merged is None else "{" + ", ".join(
            lv.name for lv in sorted(merged)) + "}"
        print(f"  {a.name} vs {b.name} -> {shown}")

    # serialization is lossless: parse(serialize(x)) == x
    again = parse_dataset(io.StringIO("\n".join(serialize_dataset(data))))
    assert [s.id for s in again.sentences] == [s.id for s in data.sentences]
    print("\nserialize -> parse round trip preserved all sentences")


if __name__ == "__main__":
    main()
