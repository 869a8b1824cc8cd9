"""Tweet normalization: letter/punctuation/digit unification, hashtag splitting,
diacritic and symbol removal, and collapsing of repeated characters or emojis."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Sequence

import regex

from .corpus import Corpus

STAGES = (
    "alef_norm",
    "punct_norm",
    "digit_norm",
    "hashtag_segment",
    "diacritic_strip",
    "symbol_strip",
    "run_collapse",
)

STRIP_CHARS = "|/#[]{}-_*@"
PLACEHOLDER_TOKENS = frozenset({"USER", "LF"})
SHADDAH = "ّ"

_ALEF = str.maketrans({"أ": "ا", "إ": "ا", "آ": "ا"})
_PUNCT = str.maketrans({"؟": "?", "،": ",", "؛": ";"})
_DIGITS = str.maketrans(
    {**{chr(0x0660 + i): str(i) for i in range(10)}, **{chr(0x06F0 + i): str(i) for i in range(10)}}
)
_DIACRITICS = str.maketrans({chr(c): None for c in range(0x064B, 0x0653) if chr(c) != SHADDAH})
_SYMBOLS = str.maketrans({c: None for c in STRIP_CHARS})
_HASHTAG = re.compile(r"#+(\S*)")
_GRAPHEME = regex.compile(r"\X")


@dataclass(frozen=True)
class NormalizationConfig:
    stages: tuple[str, ...] = STAGES
    max_run: int = 2

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ValueError("at least one normalization stage is required")
        unknown = [s for s in self.stages if s not in STAGES]
        if unknown:
            raise ValueError(f"unknown normalization stages: {unknown}")
        if self.max_run < 1:
            raise ValueError("max_run must be >= 1")

    @classmethod
    def from_csv(cls, stages: str, max_run: int = 2) -> "NormalizationConfig":
        return cls(tuple(s.strip() for s in stages.split(",") if s.strip()), max_run)


def alef_norm(text: str) -> str:
    return text.translate(_ALEF)


def punct_norm(text: str) -> str:
    return text.translate(_PUNCT)


def digit_norm(text: str) -> str:
    return text.translate(_DIGITS)


def hashtag_segment(text: str) -> str:
    """``#foo_bar`` -> ``foo bar``; no dictionary-based word splitting."""
    return _HASHTAG.sub(lambda m: m.group(1).replace("_", " "), text)


def diacritic_strip(text: str) -> str:
    """Drop Arabic harakat U+064B..U+0652, keeping shaddah."""
    return text.translate(_DIACRITICS)


def symbol_strip(text: str) -> str:
    # Splitting on whitespace also squeezes the gaps left by removed symbols.
    text = text.translate(_SYMBOLS)
    return " ".join(tok for tok in text.split() if tok not in PLACEHOLDER_TOKENS)


def run_collapse(text: str, max_run: int = 2) -> str:
    """Cap runs of an identical grapheme cluster (letter or emoji) at ``max_run``."""
    out = []
    prev, run = None, 0
    for g in _GRAPHEME.findall(text):
        if g == prev:
            run += 1
        else:
            prev, run = g, 1
        if run <= max_run:
            out.append(g)
    return "".join(out)


def normalize(text: str, config: NormalizationConfig | None = None) -> str:
    config = config or NormalizationConfig()
    for stage in config.stages:
        if stage == "run_collapse":
            text = run_collapse(text, config.max_run)
        else:
            text = _STAGE_FUNCS[stage](text)
    return text


def normalize_corpus(corpus: Corpus, config: NormalizationConfig | None = None) -> Corpus:
    config = config or NormalizationConfig()
    records = [replace(r, text=normalize(r.text, config)) for r in corpus.records]
    return Corpus(records, source_tag=corpus.source_tag)


def normalize_all(texts: Sequence[str], config: NormalizationConfig | None = None) -> list[str]:
    return [normalize(t, config) for t in texts]


_STAGE_FUNCS = {
    "alef_norm": alef_norm,
    "punct_norm": punct_norm,
    "digit_norm": digit_norm,
    "hashtag_segment": hashtag_segment,
    "diacritic_strip": diacritic_strip,
    "symbol_strip": symbol_strip,
}
