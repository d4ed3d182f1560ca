import json
from pathlib import Path

import pytest

from weakrank.corpus import load_dataset


def write_jsonl(path: Path, records) -> Path:
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def tiny_dataset(tmp_path):
    """Two queries over a four-passage pool, gold on both."""
    records = [
        {"kind": "passage", "id": "p1", "text": "the cat sat on the mat"},
        {"kind": "passage", "id": "p2", "text": "dogs chase cats"},
        {"kind": "passage", "id": "p3", "text": "a hat for the cat"},
        {"kind": "passage", "id": "p4", "text": "quantum entanglement basics"},
        {"kind": "query", "id": "q1", "text": "cat mat",
         "candidates": ["p1", "p2", "p3"], "gold": {"p1": 1, "p2": 0, "p3": 0}},
        {"kind": "query", "id": "q2", "text": "quantum physics",
         "candidates": ["p2", "p4"], "gold": {"p4": 1, "p2": 0}},
    ]
    return load_dataset(write_jsonl(tmp_path / "tiny.jsonl", records), "train")
