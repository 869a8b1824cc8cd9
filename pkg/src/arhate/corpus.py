"""Labeled tweet corpora: TSV I/O, label statistics, hierarchy checks, balancing."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateId,
    EmptyCorpus,
    InsufficientNegatives,
    MalformedRow,
    UnknownLabel,
)

LABELS_A = ("NOT_OFF", "OFF")
LABELS_B = ("NOT_HS", "HS")
LABELS_C = ("NOT_HS", "HS1", "HS2", "HS3", "HS4", "HS5", "HS6")
LABELS_VLG = ("NOT_VLG", "VLG")
LABELS_VIO = ("NOT_VIO", "VIO")

# class index = position in the tuple; the positive class of A/B is index 1
TASK_LABELS = {"A": LABELS_A, "B": LABELS_B, "C": LABELS_C}
TASK_FIELD = {"A": "label_a", "B": "label_b", "C": "label_c"}

COLUMNS = ("id", "text", "label_a", "label_b", "label_c", "vulgar", "violent")

RULE_A_B = "A=>B: NOT_OFF tweet labeled HS"
RULE_B_C = "B<=>C: label_b and label_c disagree on NOT_HS"


@dataclass(frozen=True)
class TweetRecord:
    id: str
    text: str
    label_a: str
    label_b: str
    label_c: str
    vulgar: str = "NOT_VLG"
    violent: str = "NOT_VIO"

    def __post_init__(self):
        for name, allowed in (
            ("label_a", LABELS_A),
            ("label_b", LABELS_B),
            ("label_c", LABELS_C),
            ("vulgar", LABELS_VLG),
            ("violent", LABELS_VIO),
        ):
            value = getattr(self, name)
            if value not in allowed:
                raise UnknownLabel(f"record {self.id!r}: {name}={value!r} not in {allowed}")

    def label(self, task: str) -> str:
        return getattr(self, TASK_FIELD[task])

    def class_index(self, task: str) -> int:
        return TASK_LABELS[task].index(self.label(task))


@dataclass(frozen=True)
class Corpus:
    records: tuple[TweetRecord, ...]
    source_tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise DuplicateId(f"duplicate record id {rec.id!r} in corpus {self.source_tag!r}")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def texts(self) -> list[str]:
        return [r.text for r in self.records]

    def class_indices(self, task: str) -> list[int]:
        return [r.class_index(task) for r in self.records]


@dataclass
class DistributionReport:
    task: str
    counts: dict[str, int]
    fractions: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "total": self.total,
            "labels": {k: {"count": self.counts[k], "fraction": self.fractions[k]} for k in self.counts},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)


def load_corpus(path, format: str = "tsv", has_header: bool = True, source_tag: str | None = None) -> Corpus:
    """Read a seven-column TSV (id, text, label_a, label_b, label_c, vulgar, violent)."""
    if format != "tsv":
        raise ValueError(f"unsupported corpus format {format!r}")
    path = Path(path)
    records = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and has_header:
                continue
            if not row:
                continue
            if len(row) != len(COLUMNS):
                raise MalformedRow(f"{path}:{lineno}: expected {len(COLUMNS)} columns, got {len(row)}")
            records.append(TweetRecord(*row))
    return Corpus(records, source_tag=source_tag if source_tag is not None else path.stem)


def _clean_cell(text: str) -> str:
    return text.replace("\t", " ").replace("\r", " ").replace("\n", " ")


def write_corpus(corpus: Corpus, path, header: bool = True) -> None:
    """Write ``corpus`` in the same TSV schema ``load_corpus`` reads.

    Tabs and line breaks inside text cells are replaced by spaces.
    """
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write("\t".join(COLUMNS) + "\n")
        for r in corpus.records:
            row = (r.id, _clean_cell(r.text), r.label_a, r.label_b, r.label_c, r.vulgar, r.violent)
            fh.write("\t".join(row) + "\n")


def label_stats(corpus: Corpus, task: str) -> DistributionReport:
    if len(corpus) == 0:
        raise EmptyCorpus("label statistics of an empty corpus are undefined")
    labels = TASK_LABELS[task]
    counts = {lab: 0 for lab in labels}
    for rec in corpus.records:
        counts[rec.label(task)] += 1
    total = len(corpus)
    fractions = {lab: counts[lab] / total for lab in labels}
    return DistributionReport(task=task, counts=counts, fractions=fractions)


def validate_hierarchy(corpus: Corpus) -> list[tuple[str, str]]:
    """List every (record id, rule) violation of the A/B/C label hierarchy."""
    violations = []
    for rec in corpus.records:
        if rec.label_a == "NOT_OFF" and rec.label_b == "HS":
            violations.append((rec.id, RULE_A_B))
        if (rec.label_b == "NOT_HS") != (rec.label_c == "NOT_HS"):
            violations.append((rec.id, RULE_B_C))
    return violations


def _tag_extra(extra: Corpus, position: int) -> list[TweetRecord]:
    tag = extra.source_tag or f"extra{position}"
    return [replace(r, id=f"{tag}:{r.id}") for r in extra.records]


def undersample_balance(
    primary: Corpus,
    extras: Sequence[Corpus],
    task: str,
    target_positive: str,
    seed: int,
    max_per_class: int | None = None,
) -> Corpus:
    """Build a 1:1 balanced corpus for a binary task.

    Every primary record labeled ``target_positive`` is kept. Positives from
    ``extras`` are added (all of them, or a seeded uniform subset when
    ``max_per_class`` caps the class size), then negatives are drawn uniformly
    without replacement from the primary negatives followed by the extras'
    negatives until both classes have the same count. Extra record ids are
    prefixed with their corpus ``source_tag`` so ids stay unique.

    The output lists primary records first, then extras in argument order,
    each in its original order.
    """
    if task not in ("A", "B"):
        raise ValueError("balancing is defined for the binary tasks A and B")
    if target_positive not in TASK_LABELS[task]:
        raise UnknownLabel(f"{target_positive!r} is not a task {task} label")
    rng = np.random.default_rng(seed)

    primary_pos = [r for r in primary.records if r.label(task) == target_positive]
    if not primary_pos:
        raise InsufficientNegatives(f"primary corpus has no {target_positive} records")
    # pool order: primary first, then extras as given
    pool = [r for r in primary.records if r.label(task) != target_positive]
    extra_records = [rec for i, extra in enumerate(extras) for rec in _tag_extra(extra, i)]
    extra_pos = [r for r in extra_records if r.label(task) == target_positive]
    pool += [r for r in extra_records if r.label(task) != target_positive]

    n_pos = len(primary_pos) + len(extra_pos)
    if max_per_class is not None:
        n_pos = max(len(primary_pos), min(n_pos, max_per_class))
    n_extra_pos = n_pos - len(primary_pos)
    if n_extra_pos < len(extra_pos):
        picked = rng.choice(len(extra_pos), size=n_extra_pos, replace=False)
        extra_pos = [extra_pos[i] for i in sorted(picked)]

    if len(pool) < n_pos:
        raise InsufficientNegatives(f"need {n_pos} negatives, only {len(pool)} available")
    picked = rng.choice(len(pool), size=n_pos, replace=False)
    negatives = [pool[i] for i in picked]

    keep = {id(r) for r in primary_pos} | {id(r) for r in extra_pos} | {id(r) for r in negatives}
    ordered = [r for r in primary.records if id(r) in keep]
    ordered += [r for r in extra_records if id(r) in keep]
    tag = primary.source_tag + "+balanced" if primary.source_tag else "balanced"
    return Corpus(ordered, source_tag=tag)


def make_records(rows: Iterable[Sequence[str]]) -> list[TweetRecord]:
    return [TweetRecord(*row) for row in rows]
