"""Dataset model and JSONL I/O for query/passage candidate pools.

A dataset file is JSONL with two record kinds discriminated by ``kind``::

    {"kind":"passage","id":"p1","text":"..."}
    {"kind":"query","id":"q1","text":"...","candidates":["p1","p2"],"gold":{"p1":1}}

``gold`` values are 1 (relevant) / 0 (non-relevant) and the field is optional.
Record order in the file is preserved: queries and candidate lists keep their
file order, which downstream modules treat as addressing only, never as a
relevance signal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

SPLITS = ("train", "val", "test")


class DatasetError(ValueError):
    """A dataset file or structure violates the format contract."""


@dataclass(frozen=True)
class Query:
    id: str
    text: str


@dataclass(frozen=True)
class Passage:
    id: str
    text: str


@dataclass(frozen=True)
class CandidateSet:
    query_id: str
    passage_ids: tuple[str, ...]
    gold: Mapping[str, int] | None = None


@dataclass
class Dataset:
    """Immutable-by-convention container; safe for concurrent reads."""

    queries: dict[str, Query]
    passages: dict[str, Passage]
    candidate_sets: tuple[CandidateSet, ...]
    split: str


@dataclass(frozen=True)
class Violation:
    entity: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: {self.message}"


def load_dataset(path: str | Path, split: str) -> Dataset:
    """Parse a JSONL dataset file, enforcing all structural invariants.

    Raises DatasetError naming the offending line or id on the first
    violation found.
    """
    if split not in SPLITS:
        raise DatasetError(f"unknown split tag {split!r}; expected one of {SPLITS}")
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")

    queries: dict[str, Query] = {}
    passages: dict[str, Passage] = {}
    raw_sets: list[tuple[int, CandidateSet]] = []

    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: malformed JSON: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise DatasetError(f"line {lineno}: record is not an object")
            kind = rec.get("kind")
            if kind == "passage":
                pid, text = _require_id_text(rec, lineno)
                if pid in passages or pid in queries:
                    raise DatasetError(f"line {lineno}: duplicate id {pid!r}")
                passages[pid] = Passage(id=pid, text=text)
            elif kind == "query":
                qid, text = _require_id_text(rec, lineno)
                if not text:
                    raise DatasetError(f"line {lineno}: query {qid!r} has empty text")
                if qid in queries or qid in passages:
                    raise DatasetError(f"line {lineno}: duplicate id {qid!r}")
                cands = rec.get("candidates")
                if not isinstance(cands, list) or not cands:
                    raise DatasetError(
                        f"line {lineno}: query {qid!r} needs a non-empty candidate list"
                    )
                if len(set(cands)) != len(cands):
                    raise DatasetError(
                        f"line {lineno}: query {qid!r} has duplicate candidate ids"
                    )
                gold = _parse_gold(rec.get("gold"), qid, cands, lineno)
                queries[qid] = Query(id=qid, text=text)
                raw_sets.append(
                    (lineno, CandidateSet(query_id=qid, passage_ids=tuple(cands), gold=gold))
                )
            else:
                raise DatasetError(f"line {lineno}: unknown record kind {kind!r}")

    if not queries:
        raise DatasetError("no queries in dataset file")

    for lineno, cs in raw_sets:
        for pid in cs.passage_ids:
            if pid not in passages:
                raise DatasetError(
                    f"line {lineno}: query {cs.query_id!r} references missing passage {pid!r}"
                )

    return Dataset(
        queries=queries,
        passages=passages,
        candidate_sets=tuple(cs for _, cs in raw_sets),
        split=split,
    )


def _require_id_text(rec: dict, lineno: int) -> tuple[str, str]:
    rid = rec.get("id")
    text = rec.get("text")
    if not isinstance(rid, str) or not rid:
        raise DatasetError(f"line {lineno}: missing or empty id")
    if not isinstance(text, str):
        raise DatasetError(f"line {lineno}: id {rid!r} missing text")
    return rid, text


def _parse_gold(raw, qid: str, cands: list[str], lineno: int) -> dict[str, int] | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise DatasetError(f"line {lineno}: query {qid!r} gold must be an object")
    gold: dict[str, int] = {}
    cand_set = set(cands)
    for pid, val in raw.items():
        if pid not in cand_set:
            raise DatasetError(
                f"line {lineno}: query {qid!r} gold labels non-candidate passage {pid!r}"
            )
        if val not in (0, 1):
            raise DatasetError(
                f"line {lineno}: query {qid!r} gold value for {pid!r} must be 0 or 1"
            )
        gold[pid] = int(val)
    return gold


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    """Serialize to the JSONL format; load(write(d)) == d."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for p in dataset.passages.values():
            fh.write(json.dumps({"kind": "passage", "id": p.id, "text": p.text},
                                ensure_ascii=False) + "\n")
        by_query = {cs.query_id: cs for cs in dataset.candidate_sets}
        for q in dataset.queries.values():
            rec: dict = {"kind": "query", "id": q.id, "text": q.text}
            cs = by_query.get(q.id)
            if cs is not None:
                rec["candidates"] = list(cs.passage_ids)
                if cs.gold is not None:
                    rec["gold"] = {pid: cs.gold[pid] for pid in sorted(cs.gold)}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def validate(dataset: Dataset) -> list[Violation]:
    """Check every invariant; empty list iff the dataset is well formed.

    Violations are data, not failures: the function never raises on bad
    content.
    """
    out: list[Violation] = []
    if dataset.split not in SPLITS:
        out.append(Violation("dataset", f"unknown split tag {dataset.split!r}"))

    for qid, q in dataset.queries.items():
        if not qid:
            out.append(Violation("query", "empty id"))
        if qid != q.id:
            out.append(Violation(f"query {qid!r}", f"key does not match id {q.id!r}"))
        if not q.text:
            out.append(Violation(f"query {qid!r}", "empty text"))
        if qid in dataset.passages:
            out.append(Violation(f"query {qid!r}", "id collides with a passage id"))
    for pid, p in dataset.passages.items():
        if not pid:
            out.append(Violation("passage", "empty id"))
        if pid != p.id:
            out.append(Violation(f"passage {pid!r}", f"key does not match id {p.id!r}"))

    seen_queries: set[str] = set()
    for cs in dataset.candidate_sets:
        ent = f"candidate set for query {cs.query_id!r}"
        if cs.query_id not in dataset.queries:
            out.append(Violation(ent, "query id does not resolve"))
        if cs.query_id in seen_queries:
            out.append(Violation(ent, "query has multiple candidate sets"))
        seen_queries.add(cs.query_id)
        if len(cs.passage_ids) < 1:
            out.append(Violation(ent, "empty candidate list"))
        if len(set(cs.passage_ids)) != len(cs.passage_ids):
            out.append(Violation(ent, "duplicate passage ids in candidate list"))
        for pid in cs.passage_ids:
            if pid not in dataset.passages:
                out.append(Violation(ent, f"references missing passage {pid!r}"))
        if cs.gold is not None:
            cand = set(cs.passage_ids)
            for pid, val in cs.gold.items():
                if pid not in cand:
                    out.append(Violation(ent, f"gold labels non-candidate passage {pid!r}"))
                if val not in (0, 1):
                    out.append(Violation(ent, f"gold value for {pid!r} not in {{0,1}}"))
    return out


def check_split_disjoint(datasets: Iterable[Dataset]) -> list[Violation]:
    """Splits must not share query ids."""
    out: list[Violation] = []
    seen: dict[str, str] = {}
    for ds in datasets:
        for qid in ds.queries:
            if qid in seen and seen[qid] != ds.split:
                out.append(
                    Violation(f"query {qid!r}",
                              f"appears in both {seen[qid]!r} and {ds.split!r} splits")
                )
            seen.setdefault(qid, ds.split)
    return out
