"""Synthetic, linearly separable tweet fixtures.

Offensive tweets carry the marker token ``xbad``, hate-speech tweets add
``xhate`` and one class marker per HS1..HS6. Everything else is filler drawn
from a small Arabic vocabulary plus emojis, hashtags and diacritics so that the
preprocessing pipeline has real work to do.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import Corpus, TweetRecord, load_corpus, write_corpus

OFF_MARKER = "xbad"
HS_MARKER = "xhate"
CLASS_MARKERS = {
    "HS1": "xrace",
    "HS2": "xfaith",
    "HS3": "xideo",
    "HS4": "xdisab",
    "HS5": "xclass",
    "HS6": "xgender",
}

WORDS = (
    "كتاب", "مدرسة", "السماء", "جميل", "اليوم", "صباح", "الخير", "شكرا", "الله", "يا",
    "والله", "أحمد", "إبراهيم", "آخر", "مساء", "النور", "القهوة", "الطريق", "البيت", "صديقي",
    "رائع", "كرة", "المباراة", "الفريق", "حلو", "كثير", "مبروك", "عيد", "سعيد", "رمضان",
    "كريم", "الجو", "حار", "بارد", "أهلا", "وسهلا", "مرحبا", "تمام", "جدا", "هههه",
)
EMOJIS = ("😂", "❤️", "🔥", "👍", "😍", "🙏", "😡", "💔", "🌹", "👏🏽")
DECORATIONS = ("#هاش_تاج", "@USER", "LF", "١٢٣", "؟", "جَمِيلٌ", "!!!!!", "ههههههه")


def _filler(rng: np.random.Generator, low: int, high: int) -> list[str]:
    words = [str(w) for w in rng.choice(WORDS, size=int(rng.integers(low, high + 1)))]
    if rng.random() < 0.7:
        words.append(str(rng.choice(EMOJIS)) * int(rng.integers(1, 5)))
    if rng.random() < 0.5:
        words.append(str(rng.choice(DECORATIONS)))
    return words


def make_toy_corpus(
    n_not_off: int,
    n_off: int,
    hs_per_class: dict[str, int] | None = None,
    seed: int = 0,
    id_prefix: str = "t",
    source_tag: str = "toy",
) -> Corpus:
    """Hierarchy-consistent corpus; ``hs_per_class`` counts are taken out of ``n_off``."""
    hs_per_class = hs_per_class or {}
    n_hs = sum(hs_per_class.values())
    if n_hs > n_off:
        raise ValueError("hate-speech records must be a subset of the offensive ones")
    rng = np.random.default_rng(seed)
    specs = [("NOT_OFF", "NOT_HS", "NOT_HS")] * n_not_off
    specs += [("OFF", "NOT_HS", "NOT_HS")] * (n_off - n_hs)
    for cls in sorted(hs_per_class):
        specs += [("OFF", "HS", cls)] * hs_per_class[cls]
    order = rng.permutation(len(specs))
    records = []
    for k, i in enumerate(order):
        a, b, c = specs[i]
        words = _filler(rng, 1, 4)
        if a == "OFF":
            words.append(OFF_MARKER)
        if b == "HS":
            words += [HS_MARKER, CLASS_MARKERS[c]]
        rng.shuffle(words)
        records.append(TweetRecord(
            id=f"{id_prefix}{k:05d}",
            text=" ".join(words),
            label_a=a,
            label_b=b,
            label_c=c,
            vulgar="VLG" if a == "OFF" and rng.random() < 0.3 else "NOT_VLG",
            violent="VIO" if b == "HS" and rng.random() < 0.3 else "NOT_VIO",
        ))
    return Corpus(records, source_tag=source_tag)


TOY_HS_TRAIN = {"HS1": 8, "HS2": 8, "HS3": 8, "HS4": 6, "HS5": 8, "HS6": 10}
TOY_HS_DEV = {"HS1": 2, "HS2": 2, "HS3": 2, "HS4": 1, "HS5": 2, "HS6": 3}


def toy_train() -> Corpus:
    """Bundled 200-record training fixture (100 OFF / 100 NOT_OFF)."""
    return _bundled("toy_train.tsv")


def toy_dev() -> Corpus:
    """Bundled 50-record dev fixture (25 OFF / 25 NOT_OFF)."""
    return _bundled("toy_dev.tsv")


def _bundled(name: str) -> Corpus:
    with resources.as_file(resources.files("arhate") / "data" / name) as path:
        return load_corpus(path)


def generate_bundled(directory) -> None:
    """Regenerate the bundled fixture files."""
    directory = Path(directory)
    write_corpus(make_toy_corpus(100, 100, TOY_HS_TRAIN, seed=11, id_prefix="tr", source_tag="toy_train"),
                 directory / "toy_train.tsv")
    write_corpus(make_toy_corpus(25, 25, TOY_HS_DEV, seed=23, id_prefix="dv", source_tag="toy_dev"),
                 directory / "toy_dev.tsv")
