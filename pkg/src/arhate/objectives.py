"""Training objectives over cosine distance, with gradients.

The public loss functions take plain vectors and return a scalar. Each has a
vectorized ``*_grad`` counterpart that also returns the gradient w.r.t. its
embedding/logit inputs; the model module chains those through the encoder.

Reduction conventions:

* cross-entropy and contrastive: mean over the batch
* online contrastive: sum over the selected hard pairs
* batch-all triplet: mean over active triplets (loss > epsilon), or over all
  valid triplets with ``triplet_average="all"``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, MissingClassPairs, NoValidTriplet, ZeroVector

KINDS = ("cross_entropy", "contrastive", "online_contrastive", "batch_all_triplet")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "cross_entropy"
    margin: float = 0.7
    distance: str = "cosine"
    triplet_epsilon: float = 1e-16
    triplet_average: str = "active"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective {self.kind!r}")
        if self.distance != "cosine":
            raise ValueError("only cosine distance is supported")
        if not 0 < self.margin <= 2:
            raise ValueError("cosine margin must lie in (0, 2]")
        if self.triplet_average not in ("active", "all"):
            raise ValueError("triplet_average must be 'active' or 'all'")


# ---------------------------------------------------------------------------
# cosine distance


def _norms(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=-1)
    if np.any(n == 0):
        raise ZeroVector("cosine distance is undefined for a zero vector")
    return n


def cosine_distance(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("vectors must have the same length")
    nu, nv = _norms(u), _norms(v)
    return float(1.0 - np.dot(u, v) / (nu * nv))


def paired_cosine_distance_grad(a: np.ndarray, b: np.ndarray):
    """Row-wise distances d_i = 1 - cos(a_i, b_i) and the Jacobian pieces.

    Returns ``(d, dd_da, dd_db)`` where ``dd_da[i]`` is the gradient of
    ``d_i`` w.r.t. ``a_i``.
    """
    na, nb = _norms(a), _norms(b)
    ua, ub = a / na[:, None], b / nb[:, None]
    cos = np.sum(ua * ub, axis=1)
    dd_da = -(ub - cos[:, None] * ua) / na[:, None]
    dd_db = -(ua - cos[:, None] * ub) / nb[:, None]
    return 1.0 - cos, dd_da, dd_db


def pairwise_cosine_distances(x: np.ndarray):
    """Full distance matrix D[i, j] = 1 - cos(x_i, x_j) and the unit rows."""
    n = _norms(x)
    unit = x / n[:, None]
    return 1.0 - unit @ unit.T, unit, n


def _pairwise_backward(grad_d: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # D = 1 - U U^T  =>  dL/dU = -(G + G^T) U, then through u = x/|x|
    g_unit = -(grad_d + grad_d.T) @ unit
    radial = np.sum(g_unit * unit, axis=1, keepdims=True)
    return (g_unit - radial * unit) / norms[:, None]


# ---------------------------------------------------------------------------
# cross-entropy


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def cross_entropy(logits, label: int) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise IndexOutOfRange(f"label {label} outside 0..{logits.shape[-1] - 1}")
    return float(-_log_softmax(logits)[label])


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over rows and its gradient w.r.t. ``logits``."""
    labels = np.asarray(labels, dtype=np.int64)
    k = logits.shape[1]
    if np.any(labels < 0) or np.any(labels >= k):
        raise IndexOutOfRange(f"labels must lie in 0..{k - 1}")
    logp = _log_softmax(logits)
    rows = np.arange(len(labels))
    loss = -np.mean(logp[rows, labels])
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return float(loss), grad / len(labels)


# ---------------------------------------------------------------------------
# pairwise objectives


def _stack_pairs(pairs):
    a = np.array([p[0] for p in pairs], dtype=np.float64)
    b = np.array([p[1] for p in pairs], dtype=np.float64)
    s = np.array([p[2] for p in pairs], dtype=np.float64)
    return a, b, s


def contrastive_grad(a: np.ndarray, b: np.ndarray, similar: np.ndarray, margin: float):
    """Mean squared-hinge contrastive loss; returns (loss, dL/da, dL/db)."""
    if len(similar) == 0:
        raise ValueError("contrastive loss needs a non-empty batch")
    d, dd_da, dd_db = paired_cosine_distance_grad(a, b)
    hinge = np.maximum(0.0, margin - d)
    losses = similar * d**2 + (1 - similar) * hinge**2
    dl_dd = (2 * similar * d - 2 * (1 - similar) * hinge) / len(d)
    return float(losses.mean()), dl_dd[:, None] * dd_da, dl_dd[:, None] * dd_db


def contrastive_loss(pairs, margin: float = 0.7) -> float:
    a, b, s = _stack_pairs(pairs)
    return contrastive_grad(a, b, s, margin)[0]


def hard_pair_mask(distances: np.ndarray, similar: np.ndarray) -> np.ndarray:
    """Positives farther than the closest negative, negatives closer than the farthest positive."""
    pos = similar == 1
    neg = ~pos
    if not pos.any() or not neg.any():
        raise MissingClassPairs("online contrastive loss needs both positive and negative pairs")
    min_neg = distances[neg].min()
    max_pos = distances[pos].max()
    return (pos & (distances > min_neg)) | (neg & (distances < max_pos))


def online_contrastive_grad(a: np.ndarray, b: np.ndarray, similar: np.ndarray, margin: float):
    """Sum of contrastive terms over the hard pairs; returns (loss, dL/da, dL/db)."""
    d, dd_da, dd_db = paired_cosine_distance_grad(a, b)
    hard = hard_pair_mask(d, similar).astype(np.float64)
    hinge = np.maximum(0.0, margin - d)
    losses = hard * (similar * d**2 + (1 - similar) * hinge**2)
    dl_dd = hard * (2 * similar * d - 2 * (1 - similar) * hinge)
    return float(losses.sum()), dl_dd[:, None] * dd_da, dl_dd[:, None] * dd_db


def online_contrastive_loss(pairs, margin: float = 0.7) -> float:
    a, b, s = _stack_pairs(pairs)
    return online_contrastive_grad(a, b, s, margin)[0]


# ---------------------------------------------------------------------------
# batch-all triplet


def valid_triplet_mask(labels) -> np.ndarray:
    """mask[a, p, n] true iff label(a)=label(p), a != p, label(n) != label(a)."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    distinct = ~np.eye(len(labels), dtype=bool)
    anchor_pos = same & distinct
    anchor_neg = ~same
    return anchor_pos[:, :, None] & anchor_neg[:, None, :]


def batch_all_triplet_grad(
    x: np.ndarray, labels, margin: float, epsilon: float = 1e-16, average: str = "active"
):
    """Batch-all triplet loss over cosine distance; returns (loss, dL/dx)."""
    valid = valid_triplet_mask(labels)
    if not valid.any():
        raise NoValidTriplet("batch has no (anchor, positive, negative) triplet")
    dist, unit, norms = pairwise_cosine_distances(x)
    raw = dist[:, :, None] - dist[:, None, :] + margin
    per_triplet = np.where(valid, np.maximum(raw, 0.0), 0.0)
    active = per_triplet > epsilon
    count = int(active.sum()) if average == "active" else int(valid.sum())
    if count == 0 or not active.any():
        return 0.0, np.zeros_like(x)
    loss = per_triplet[active].sum() / count
    w = active.astype(np.float64) / count
    # d(a,p) enters with +1, d(a,n) with -1
    grad_d = w.sum(axis=2) - w.sum(axis=1)
    return float(loss), _pairwise_backward(grad_d, unit, norms)


def batch_all_triplet_loss(embeddings, labels, margin: float = 0.7, epsilon: float = 1e-16,
                           average: str = "active") -> float:
    x = np.asarray(embeddings, dtype=np.float64)
    return batch_all_triplet_grad(x, labels, margin, epsilon, average)[0]
