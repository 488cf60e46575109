#!/usr/bin/env python3
"""Convert SNIPS data into the `domain \t utterance \t semantic_parse` TSV
read by `concept-parse`.

Each SNIPS intent becomes its own domain, and each utterance becomes a
single-intent tree with flat slots:

    [IN:GET_WEATHER what is the weather in [SL:CITY paris ] ]

Two input layouts are accepted:

* the BIO split directories (`train/`, `valid/`, `test/`, each holding
  `seq.in`, `seq.out` and `label`);
* the benchmark JSON, one `{"IntentName": [{"data": [{"text": ...,
  "entity"?: ...}]}]}` file per intent (`train_*.json`, `validate_*.json`).

Usage:
    snips_to_tsv.py INPUT_DIR OUTPUT_DIR

Writes `train.tsv` and `test.tsv` (the BIO `valid` split and the JSON
`validate_*` files become `test.tsv`), ready for `--data OUTPUT_DIR`.
"""

import argparse
import gzip
import json
import re
import sys
from pathlib import Path

HEADER = "domain\tutterance\tsemantic_parse\n"


def snake_upper(name: str) -> str:
    """`GetWeather` / `get-weather` / `object_name` -> `GET_WEATHER` style."""
    name = re.sub(r"(?<=[a-z0-9])(?=[A-Z])", "_", name.strip())
    name = re.sub(r"[^0-9A-Za-z]+", "_", name)
    return name.strip("_").upper()


def domain_of(intent: str) -> str:
    return snake_upper(intent).lower()


def clean_word(word: str) -> str:
    """Brackets would be read as tags by the annotation parser."""
    return word.replace("[", "(").replace("]", ")")


def render(intent: str, words: list[str], slots: list[tuple[int, int, str]]) -> str:
    """Bracketed annotation; `slots` are sorted, disjoint `[start, end)` spans."""
    out = [f"[IN:{snake_upper(intent)}"]
    i = 0
    for start, end, name in slots:
        out.extend(words[i:start])
        out.append(f"[SL:{snake_upper(name)}")
        out.extend(words[start:end])
        out.append("]")
        i = end
    out.extend(words[i:])
    out.append("]")
    return " ".join(out)


def bio_spans(tags: list[str]) -> list[tuple[int, int, str]]:
    spans = []
    start, name = None, None
    for i, tag in enumerate(tags + ["O"]):
        inside = tag.startswith("I-") and name == tag[2:]
        if start is not None and not inside:
            spans.append((start, i, name))
            start, name = None, None
        if tag.startswith("B-") or (tag.startswith("I-") and start is None):
            start, name = i, tag[2:]
    return spans


def read_lines(path: Path) -> list[str]:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def convert_bio(split_dir: Path):
    seq_in = read_lines(split_dir / "seq.in")
    seq_out = read_lines(split_dir / "seq.out")
    labels = read_lines(split_dir / "label")
    if not len(seq_in) == len(seq_out) == len(labels):
        raise ValueError(f"{split_dir}: seq.in, seq.out and label differ in length")
    for n, (text, tags, intent) in enumerate(zip(seq_in, seq_out, labels), 1):
        words = [clean_word(w) for w in text.split()]
        tags = tags.split()
        if not words or len(words) != len(tags):
            print(f"{split_dir}:{n}: skipped, {len(words)} words vs {len(tags)} tags", file=sys.stderr)
            continue
        yield domain_of(intent), " ".join(words), render(intent, words, bio_spans(tags))


def convert_json(path: Path):
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    for intent, utterances in payload.items():
        for utt in utterances:
            words, slots = [], []
            for chunk in utt["data"]:
                piece = [clean_word(w) for w in chunk["text"].split()]
                if chunk.get("entity") and piece:
                    slots.append((len(words), len(words) + len(piece), chunk["entity"]))
                words.extend(piece)
            if words:
                yield domain_of(intent), " ".join(words), render(intent, words, slots)


def collect(root: Path) -> dict[str, list[tuple[str, str, str]]]:
    out = {"train": [], "test": []}
    bio = {"train": "train", "valid": "test", "test": "test"}
    found = False
    for sub, dest in bio.items():
        d = root / sub
        if (d / "seq.in").exists():
            found = True
            out[dest].extend(convert_bio(d))
    for path in sorted(root.glob("*.json")):
        dest = "train" if path.name.startswith("train") else "test"
        found = True
        out[dest].extend(convert_json(path))
    if not found:
        raise FileNotFoundError(f"{root}: no BIO split directories or intent JSON files")
    return out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("input", type=Path)
    ap.add_argument("output", type=Path)
    args = ap.parse_args()
    try:
        splits = collect(args.input)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    args.output.mkdir(parents=True, exist_ok=True)
    for name, rows in splits.items():
        path = args.output / f"{name}.tsv"
        tmp = path.with_suffix(".tsv.tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(HEADER)
            for row in rows:
                f.write("\t".join(row) + "\n")
        tmp.replace(path)
        print(f"{path}: {len(rows)} rows")
    return 0


if __name__ == "__main__":
    sys.exit(main())
