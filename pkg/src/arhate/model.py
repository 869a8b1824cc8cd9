"""Hashed character n-gram encoder with per-task linear heads.

This is a small, fully differentiable stand-in for a pretrained transformer:

    text -> character n-grams -> crc32 buckets -> mean of embedding rows
         -> (dropout) -> projection + bias -> tanh        = sentence embedding
    sentence embedding -> task head (affine)            = logits

Gradients are computed analytically for every objective in
:mod:`arhate.objectives` and checked against finite differences in the tests.
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from . import objectives as obj
from .corpus import TASK_LABELS
from .errors import CorruptCheckpoint, DimensionMismatch, ObjectiveDataMismatch, UnsupportedVersion

TASKS = ("A", "B", "C")
NUM_CLASSES = {task: len(labels) for task, labels in TASK_LABELS.items()}
ENCODER_BLOCKS = ("embedding", "projection", "proj_bias")

CHECKPOINT_FORMAT = "arhate-checkpoint"
CHECKPOINT_VERSION = 1
INIT_SCALE = 0.05


@dataclass(frozen=True)
class EncoderConfig:
    hash_buckets: int = 4096
    ngram_min: int = 2
    ngram_max: int = 4
    embed_dim: int = 32
    out_dim: int = 32
    dropout_p: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("hash_buckets", "ngram_min", "embed_dim", "out_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.ngram_max < self.ngram_min:
            raise ValueError("ngram_max must be >= ngram_min")
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must lie in [0, 1)")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "EncoderConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in types:
                raise ValueError(f"unknown encoder config key {key!r}")
            kwargs[key] = float(value) if key == "dropout_p" else int(value)
        return cls(**kwargs)


@dataclass
class ModelParams:
    config: EncoderConfig
    embedding: np.ndarray
    projection: np.ndarray
    proj_bias: np.ndarray
    heads: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def blocks(self) -> dict[str, np.ndarray]:
        """Named parameter arrays in a fixed order (views, not copies)."""
        out = {"embedding": self.embedding, "projection": self.projection, "proj_bias": self.proj_bias}
        for task in TASKS:
            w, b = self.heads[task]
            out[f"head_{task}.weight"] = w
            out[f"head_{task}.bias"] = b
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.config,
            self.embedding.copy(),
            self.projection.copy(),
            self.proj_bias.copy(),
            {t: (w.copy(), b.copy()) for t, (w, b) in self.heads.items()},
        )

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            self.config,
            np.zeros_like(self.embedding),
            np.zeros_like(self.projection),
            np.zeros_like(self.proj_bias),
            {t: (np.zeros_like(w), np.zeros_like(b)) for t, (w, b) in self.heads.items()},
        )

    def encoder_digest(self) -> str:
        h = hashlib.sha256()
        for name in ENCODER_BLOCKS:
            h.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        return h.hexdigest()


def init_params(config: EncoderConfig) -> ModelParams:
    rng = np.random.default_rng(config.seed)

    def draw(*shape):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

    embedding = draw(config.hash_buckets, config.embed_dim)
    projection = draw(config.embed_dim, config.out_dim)
    proj_bias = draw(config.out_dim)
    heads = {t: (draw(config.out_dim, NUM_CLASSES[t]), draw(NUM_CLASSES[t])) for t in TASKS}
    return ModelParams(config, embedding, projection, proj_bias, heads)


# ---------------------------------------------------------------------------
# featurization


@lru_cache(maxsize=200_000)
def ngram_features(text: str, buckets: int, ngram_min: int, ngram_max: int):
    """Bucket ids and mean-pooling weights of a text's character n-grams."""
    ids = []
    for n in range(ngram_min, ngram_max + 1):
        for i in range(len(text) - n + 1):
            ids.append(zlib.crc32(text[i:i + n].encode("utf-8")) % buckets)
    if not ids:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    uniq, counts = np.unique(np.asarray(ids, dtype=np.int64), return_counts=True)
    return uniq, counts / len(ids)


def feature_matrix(texts: Sequence[str], config: EncoderConfig) -> sparse.csr_matrix:
    """Sparse (len(texts), hash_buckets) pooling matrix; rows sum to 1 or 0."""
    indptr = [0]
    indices, data = [], []
    for t in texts:
        ids, w = ngram_features(t, config.hash_buckets, config.ngram_min, config.ngram_max)
        indices.append(ids)
        data.append(w)
        indptr.append(indptr[-1] + len(ids))
    indices = np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64)
    data = np.concatenate(data) if data else np.zeros(0)
    return sparse.csr_matrix((data, indices, np.asarray(indptr)), shape=(len(texts), config.hash_buckets))


# ---------------------------------------------------------------------------
# forward / backward


def dropout_masks(n: int, dim: int, p: float, seed: int) -> np.ndarray:
    """Inverted-dropout masks: entries are 0 or 1/(1-p)."""
    rng = np.random.default_rng(seed)
    keep = rng.random((n, dim)) >= p
    return keep / (1.0 - p)


class _EncodeCache:
    __slots__ = ("feats", "mask", "hidden", "out")

    def __init__(self, feats, mask, hidden, out):
        self.feats = feats
        self.mask = mask
        self.hidden = hidden
        self.out = out


def _encode_forward(params: ModelParams, texts: Sequence[str], train_mode: bool, dropout_seed: int):
    cfg = params.config
    feats = feature_matrix(texts, cfg)
    pooled = np.asarray(feats @ params.embedding)
    mask = None
    if train_mode and cfg.dropout_p > 0:
        mask = dropout_masks(len(texts), cfg.embed_dim, cfg.dropout_p, dropout_seed)
        pooled = pooled * mask
    out = np.tanh(pooled @ params.projection + params.proj_bias)
    return out, _EncodeCache(feats, mask, pooled, out)


def _encode_backward(params: ModelParams, cache: _EncodeCache, grad_out: np.ndarray, grads: ModelParams):
    dz = grad_out * (1.0 - cache.out**2)
    grads.projection += cache.hidden.T @ dz
    grads.proj_bias += dz.sum(axis=0)
    dh = dz @ params.projection.T
    if cache.mask is not None:
        dh = dh * cache.mask
    grads.embedding += np.asarray(cache.feats.T @ dh)


def encode_batch(params: ModelParams, texts: Sequence[str], train_mode: bool = False,
                 dropout_seed: int = 0) -> np.ndarray:
    return _encode_forward(params, texts, train_mode, dropout_seed)[0]


def encode(params: ModelParams, text: str, train_mode: bool = False, dropout_seed: int = 0) -> np.ndarray:
    return encode_batch(params, [text], train_mode, dropout_seed)[0]


def forward_head(params: ModelParams, embedding: np.ndarray, task: str) -> np.ndarray:
    """Task logits (no softmax). Accepts one embedding or a 2-D batch."""
    w, b = params.heads[task]
    embedding = np.asarray(embedding, dtype=np.float64)
    if embedding.shape[-1] != w.shape[0]:
        raise DimensionMismatch(f"embedding has length {embedding.shape[-1]}, head expects {w.shape[0]}")
    return embedding @ w + b


def predict(params: ModelParams, texts: Sequence[str], task: str) -> np.ndarray:
    return np.argmax(forward_head(params, encode_batch(params, texts), task), axis=1)


# ---------------------------------------------------------------------------
# batches and gradients


@dataclass
class ClassBatch:
    """Texts with class indices for one or more tasks.

    Used for (multi-task) cross-entropy and, with a single task, for the
    batch-all triplet objective.
    """

    texts: list[str]
    labels: dict[str, np.ndarray]
    weights: dict[str, float] | None = None


@dataclass
class PairBatch:
    texts_a: list[str]
    texts_b: list[str]
    similar: np.ndarray


def gradient(params: ModelParams, batch, loss: obj.LossConfig, train_mode: bool = False,
             dropout_seed: int = 0) -> tuple[float, ModelParams]:
    """Batch loss and its analytic gradient w.r.t. every parameter block.

    With ``train_mode`` dropout is applied using masks derived from
    ``dropout_seed`` so the differentiated function stays deterministic.
    """
    grads = params.zeros_like()
    if loss.kind == "cross_entropy":
        if not isinstance(batch, ClassBatch):
            raise ObjectiveDataMismatch("cross_entropy expects a ClassBatch")
        emb, cache = _encode_forward(params, batch.texts, train_mode, dropout_seed)
        total = 0.0
        grad_emb = np.zeros_like(emb)
        for task, labels in batch.labels.items():
            weight = 1.0 if batch.weights is None else batch.weights.get(task, 1.0)
            w, b = params.heads[task]
            value, g_logits = obj.cross_entropy_grad(emb @ w + b, labels)
            total += weight * value
            gw, gb = grads.heads[task]
            gw += weight * (emb.T @ g_logits)
            gb += weight * g_logits.sum(axis=0)
            grad_emb += weight * (g_logits @ w.T)
        _encode_backward(params, cache, grad_emb, grads)
        return total, grads

    if loss.kind in ("contrastive", "online_contrastive"):
        if not isinstance(batch, PairBatch):
            raise ObjectiveDataMismatch(f"{loss.kind} expects a PairBatch")
        n = len(batch.texts_a)
        emb, cache = _encode_forward(params, list(batch.texts_a) + list(batch.texts_b), train_mode, dropout_seed)
        fn = obj.contrastive_grad if loss.kind == "contrastive" else obj.online_contrastive_grad
        value, ga, gb = fn(emb[:n], emb[n:], np.asarray(batch.similar, dtype=np.float64), loss.margin)
        _encode_backward(params, cache, np.vstack([ga, gb]), grads)
        return value, grads

    if loss.kind == "batch_all_triplet":
        if not isinstance(batch, ClassBatch) or len(batch.labels) != 1:
            raise ObjectiveDataMismatch("batch_all_triplet expects a single-task ClassBatch")
        (labels,) = batch.labels.values()
        emb, cache = _encode_forward(params, batch.texts, train_mode, dropout_seed)
        value, g = obj.batch_all_triplet_grad(emb, labels, loss.margin, loss.triplet_epsilon, loss.triplet_average)
        _encode_backward(params, cache, g, grads)
        return value, grads

    raise ValueError(f"unknown objective {loss.kind!r}")


def batch_loss(params: ModelParams, batch, loss: obj.LossConfig, train_mode: bool = False,
               dropout_seed: int = 0) -> float:
    return gradient(params, batch, loss, train_mode, dropout_seed)[0]


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: ModelParams, metadata: Mapping[str, object] | None, path) -> None:
    """Write a versioned JSON document; floats use shortest round-trip repr."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "format_version": CHECKPOINT_VERSION,
        "encoder_config": asdict(params.config),
        "metadata": dict(metadata or {}),
        "blocks": {
            name: {"shape": list(arr.shape), "data": [float(x) for x in arr.ravel()]}
            for name, arr in params.blocks().items()
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")


def load_checkpoint(path, with_metadata: bool = False):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint(f"{path}: not an arhate checkpoint")
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise UnsupportedVersion(f"{path}: checkpoint version {doc.get('format_version')!r}")
    try:
        config = EncoderConfig(**doc["encoder_config"])
        arrays = {}
        for name, block in doc["blocks"].items():
            arr = np.asarray(block["data"], dtype=np.float64)
            arrays[name] = arr.reshape(block["shape"])
        params = ModelParams(
            config,
            arrays["embedding"],
            arrays["projection"],
            arrays["proj_bias"],
            {t: (arrays[f"head_{t}.weight"], arrays[f"head_{t}.bias"]) for t in TASKS},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from exc
    expected = init_shapes(config)
    for name, arr in params.blocks().items():
        if arr.shape != expected[name] or not np.all(np.isfinite(arr)):
            raise CorruptCheckpoint(f"{path}: block {name} has bad shape or non-finite values")
    if with_metadata:
        return params, doc["metadata"]
    return params


def init_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    shapes = {
        "embedding": (config.hash_buckets, config.embed_dim),
        "projection": (config.embed_dim, config.out_dim),
        "proj_bias": (config.out_dim,),
    }
    for t in TASKS:
        shapes[f"head_{t}.weight"] = (config.out_dim, NUM_CLASSES[t])
        shapes[f"head_{t}.bias"] = (NUM_CLASSES[t],)
    return shapes
