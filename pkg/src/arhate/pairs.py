"""Contrastive pair pools for sub-task A and balanced pair sampling.

Pools are ordered Cartesian products (self-pairs included):

* negatives: OFF x NOT_OFF, size n*m
* positives of the OFF class: OFF x OFF, size n**2
* positives of the NOT_OFF class: NOT_OFF x NOT_OFF, size m**2

They are represented lazily by index arithmetic so that large corpora do not
materialize tens of millions of tuples.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .corpus import Corpus
from .errors import InsufficientPool, MalformedRow, SingleClassCorpus

SIZE_PRESETS = {"50k": 50_000, "250k": 250_000, "1m": 1_000_000}


class PairPool:
    """Ordered product ``left x right`` of record ids, indexable by position."""

    def __init__(self, name: str, left: tuple[str, ...], right: tuple[str, ...]):
        self.name = name
        self.left = left
        self.right = right

    def __len__(self) -> int:
        return len(self.left) * len(self.right)

    def __getitem__(self, k: int) -> tuple[str, str]:
        if not 0 <= k < len(self):
            raise IndexError(k)
        i, j = divmod(int(k), len(self.right))
        return self.left[i], self.right[j]

    def __iter__(self) -> Iterator[tuple[str, str]]:
        for a in self.left:
            for b in self.right:
                yield a, b

    def __contains__(self, pair) -> bool:
        a, b = pair
        return a in self.left and b in self.right


@dataclass
class PairPools:
    off_ids: tuple[str, ...]
    not_off_ids: tuple[str, ...]
    texts: dict[str, str] = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.off_ids)

    @property
    def m(self) -> int:
        return len(self.not_off_ids)

    @property
    def negatives(self) -> PairPool:
        return PairPool("negatives", self.off_ids, self.not_off_ids)

    @property
    def positives_pos_class(self) -> PairPool:
        return PairPool("positives_pos_class", self.off_ids, self.off_ids)

    @property
    def positives_neg_class(self) -> PairPool:
        return PairPool("positives_neg_class", self.not_off_ids, self.not_off_ids)

    def sizes(self) -> tuple[int, int, int]:
        return len(self.negatives), len(self.positives_pos_class), len(self.positives_neg_class)


@dataclass
class PairDataset:
    pairs: list[tuple[str, str, int]]
    size: int | None = None
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.pairs)

    def counts(self) -> tuple[int, int]:
        """(similar, dissimilar) pair counts."""
        pos = sum(1 for p in self.pairs if p[2] == 1)
        return pos, len(self.pairs) - pos


def build_pools(corpus: Corpus, task: str = "A") -> PairPools:
    if task != "A":
        raise ValueError("contrastive pools are only defined for sub-task A")
    off = tuple(r.id for r in corpus.records if r.label_a == "OFF")
    not_off = tuple(r.id for r in corpus.records if r.label_a == "NOT_OFF")
    if not off or not not_off:
        raise SingleClassCorpus("pair pools need at least one OFF and one NOT_OFF record")
    return PairPools(off, not_off, {r.id: r.text for r in corpus.records})


def sample_plan(size: int) -> tuple[int, int, int]:
    """(negatives, OFF positives, NOT_OFF positives) drawn for a sample of ``size``."""
    if size <= 0 or size % 4:
        raise ValueError(f"pair sample size must be a positive multiple of 4, got {size}")
    return size // 2, size // 4, size // 4


def sample_pairs(pools: PairPools, size: int, seed: int) -> PairDataset:
    """Draw size/2 negatives and size/4 positives of each class, then shuffle."""
    plan = sample_plan(size)
    pool_list = (pools.negatives, pools.positives_pos_class, pools.positives_neg_class)
    for pool, k in zip(pool_list, plan):
        if k > len(pool):
            raise InsufficientPool(pool.name, k, len(pool))
    rng = np.random.default_rng(seed)
    pairs = []
    for pool, k, similar in zip(pool_list, plan, (0, 1, 1)):
        for idx in rng.choice(len(pool), size=k, replace=False):
            a, b = pool[idx]
            pairs.append((pools.texts[a], pools.texts[b], similar))
    order = rng.permutation(len(pairs))
    return PairDataset([pairs[i] for i in order], size=size, seed=seed)


def write_pairs(dataset: PairDataset, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("text_a\ttext_b\tsimilar\n")
        for a, b, s in dataset.pairs:
            fh.write(f"{_clean(a)}\t{_clean(b)}\t{s}\n")


def read_pairs(path) -> PairDataset:
    pairs = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 or not row:
                continue
            if len(row) != 3 or row[2] not in ("0", "1"):
                raise MalformedRow(f"{path}:{lineno}: expected text_a, text_b, similar in {{0,1}}")
            pairs.append((row[0], row[1], int(row[2])))
    return PairDataset(pairs)


def _clean(text: str) -> str:
    return text.replace("\t", " ").replace("\r", " ").replace("\n", " ")
