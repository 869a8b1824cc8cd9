"""Training procedures: classification fine-tuning, contrastive fine-tuning,
frozen-encoder linear probing and multi-task learning.

All procedures share one epoch loop: seeded shuffling, Adam updates on a
chosen subset of parameter blocks, epoch-level dev evaluation, best-checkpoint
tracking and (optionally) early stopping.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from . import objectives as obj
from .corpus import TASK_LABELS, Corpus
from .errors import EmptyInput, MissingClassPairs, NoValidTriplet, ObjectiveDataMismatch, SingleClassCorpus
from .evalviz import evaluate
from .model import (
    ENCODER_BLOCKS,
    TASKS,
    ClassBatch,
    EncoderConfig,
    ModelParams,
    PairBatch,
    encode_batch,
    forward_head,
    gradient,
    init_params,
)
from .pairs import PairDataset

log = logging.getLogger(__name__)

PAIR_OBJECTIVES = ("contrastive", "online_contrastive")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    seed: int = 0
    loss: obj.LossConfig = field(default_factory=obj.LossConfig)
    mtl_task_weights: dict[str, float] = field(default_factory=lambda: {"A": 1.0, "B": 1.0, "C": 1.0})
    multitask_epochs: int = 5
    optimizer: str = "adam"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1 or self.batch_size < 1 or self.multitask_epochs < 1:
            raise ValueError("max_epochs, multitask_epochs and batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if any(w < 0 for w in self.mtl_task_weights.values()) or not any(self.mtl_task_weights.values()):
            raise ValueError("task weights must be >= 0 with at least one positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_macro_f1: dict[str, float]
    selection: float
    skipped_batches: int = 0


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def best_metric(self) -> float:
        return self.epochs[self.best_epoch - 1].selection

    @property
    def skipped_batches(self) -> int:
        return sum(e.skipped_batches for e in self.epochs)

    def to_jsonl(self) -> str:
        lines = []
        for e in self.epochs:
            lines.append(json.dumps({
                "epoch": e.epoch,
                "train_loss": e.train_loss,
                "dev_macro_f1": e.dev_macro_f1,
                "selection": e.selection,
                "skipped_batches": e.skipped_batches,
                "best_epoch": self.best_epoch,
                "stopped_early": self.stopped_early,
            }, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


# ---------------------------------------------------------------------------
# optimizers


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: ModelParams, names: Iterable[str]) -> None:
        self.t += 1
        p_blocks, g_blocks = params.blocks(), grads.blocks()
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for name in names:
            g = g_blocks[name]
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p_blocks[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: ModelParams, grads: ModelParams, names: Iterable[str]) -> None:
        p_blocks, g_blocks = params.blocks(), grads.blocks()
        for name in names:
            p_blocks[name] -= self.lr * g_blocks[name]


def make_optimizer(config: TrainConfig):
    return Adam(config.learning_rate) if config.optimizer == "adam" else SGD(config.learning_rate)


def head_blocks(task: str) -> tuple[str, str]:
    return f"head_{task}.weight", f"head_{task}.bias"


# ---------------------------------------------------------------------------
# shared epoch loop

StepFn = Callable[[ModelParams, object, int], tuple[float, ModelParams]]


def _fit(
    params: ModelParams,
    config: TrainConfig,
    make_batches: Callable[[np.random.Generator], Iterable[object]],
    step: StepFn,
    dev_scores: Callable[[ModelParams], dict[str, float]],
    trainable: tuple[str, ...],
    epochs: int,
    patience: int | None,
) -> tuple[ModelParams, TrainHistory]:
    optimizer = make_optimizer(config)
    history = TrainHistory()
    best_params = params.copy()
    best = -np.inf
    for epoch in range(1, epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        losses, skipped = [], 0
        for batch in make_batches(rng):
            dropout_seed = int(rng.integers(2**32))
            try:
                value, grads = step(params, batch, dropout_seed)
            except (NoValidTriplet, MissingClassPairs):
                skipped += 1
                continue
            optimizer.step(params, grads, trainable)
            losses.append(value)
        scores = dev_scores(params)
        selection = float(np.mean(list(scores.values())))
        train_loss = float(np.mean(losses)) if losses else float("nan")
        history.epochs.append(EpochRecord(epoch, train_loss, scores, selection, skipped))
        log.info("epoch %d loss %.5f dev %s", epoch, train_loss, scores)
        if selection > best:
            best = selection
            history.best_epoch = epoch
            best_params = params.copy()
        if patience is not None and epoch - history.best_epoch >= patience:
            history.stopped_early = True
            break
    return best_params, history


def _minibatches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def stratified_batches(labels, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle so every class is spread evenly over the epoch's batches."""
    labels = np.asarray(labels)
    keys = np.empty(len(labels))
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        perm = rng.permutation(len(idx))
        keys[idx[perm]] = (np.arange(len(idx)) + rng.random()) / len(idx)
    order = np.argsort(keys, kind="stable")
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


def _require_both_classes(corpus: Corpus, task: str, what: str) -> None:
    present = set(corpus.class_indices(task))
    if len(present) < 2:
        raise SingleClassCorpus(f"{what} corpus needs at least two task-{task} classes")


def _start_params(params: ModelParams | None, encoder_config: EncoderConfig | None, seed: int) -> ModelParams:
    if params is not None:
        return params.copy()
    return init_params(encoder_config or EncoderConfig(seed=seed))


def classifier_scores(params: ModelParams, corpus: Corpus, tasks: Iterable[str]) -> dict[str, float]:
    emb = encode_batch(params, corpus.texts())
    out = {}
    for task in tasks:
        pred = np.argmax(forward_head(params, emb, task), axis=1)
        out[task] = evaluate(pred, corpus.class_indices(task), len(TASK_LABELS[task])).macro_f1
    return out


# ---------------------------------------------------------------------------
# procedures


def train_classifier(
    train: Corpus,
    dev: Corpus,
    task: str,
    config: TrainConfig,
    params: ModelParams | None = None,
    encoder_config: EncoderConfig | None = None,
) -> tuple[ModelParams, TrainHistory]:
    """Cross-entropy fine-tuning of encoder + task head with early stopping on dev macro-F1."""
    if task not in ("A", "B"):
        raise ValueError("classification fine-tuning targets the binary tasks A and B")
    _require_both_classes(train, task, "training")
    _require_both_classes(dev, task, "dev")
    params = _start_params(params, encoder_config, config.seed)
    texts = train.texts()
    labels = np.asarray(train.class_indices(task))
    ce = obj.LossConfig("cross_entropy")

    def batches(rng):
        for idx in _minibatches(len(texts), config.batch_size, rng):
            yield ClassBatch([texts[i] for i in idx], {task: labels[idx]})

    def step(p, batch, seed):
        return gradient(p, batch, ce, train_mode=True, dropout_seed=seed)

    return _fit(
        params, config, batches, step,
        lambda p: classifier_scores(p, dev, [task]),
        ENCODER_BLOCKS + head_blocks(task),
        config.max_epochs, config.patience,
    )


def centroid_macro_f1(params: ModelParams, dev: Corpus, reference: Corpus, task: str = "A") -> float:
    """Macro-F1 of nearest-centroid (cosine) classification of dev embeddings."""
    ref_emb = encode_batch(params, reference.texts())
    ref_labels = np.asarray(reference.class_indices(task))
    k = len(TASK_LABELS[task])
    centroids = np.zeros((k, ref_emb.shape[1]))
    present = np.zeros(k, dtype=bool)
    for c in range(k):
        rows = ref_emb[ref_labels == c]
        if len(rows):
            centroids[c] = rows.mean(axis=0)
            present[c] = True
    dev_emb = encode_batch(params, dev.texts())
    unit = dev_emb / np.linalg.norm(dev_emb, axis=1, keepdims=True)
    norms = np.linalg.norm(centroids, axis=1)
    sims = unit @ (centroids / np.where(norms > 0, norms, 1.0)[:, None]).T
    sims[:, ~present] = -np.inf
    return evaluate(np.argmax(sims, axis=1), dev.class_indices(task), k).macro_f1


def train_contrastive(
    data: PairDataset | Corpus,
    dev: Corpus,
    config: TrainConfig,
    params: ModelParams | None = None,
    encoder_config: EncoderConfig | None = None,
    reference: Corpus | None = None,
) -> tuple[ModelParams, TrainHistory]:
    """Contrastive fine-tuning of the encoder (heads untouched).

    Pairwise objectives train on a :class:`PairDataset`; batch-all triplet
    trains on a sub-task A labeled corpus. Epochs are selected by the
    nearest-centroid macro-F1 on ``dev`` with centroids taken from
    ``reference`` (``dev`` itself when omitted).
    """
    kind = config.loss.kind
    if kind in PAIR_OBJECTIVES:
        if not isinstance(data, PairDataset):
            raise ObjectiveDataMismatch(f"{kind} trains on pairs, got {type(data).__name__}")
        if len(data) == 0:
            raise EmptyInput("contrastive training needs at least one pair")
    elif kind == "batch_all_triplet":
        if not isinstance(data, Corpus):
            raise ObjectiveDataMismatch("batch_all_triplet trains on single labeled sentences, not pairs")
        _require_both_classes(data, "A", "training")
    else:
        raise ObjectiveDataMismatch(f"{kind} is not a contrastive objective")
    reference = reference if reference is not None else dev
    params = _start_params(params, encoder_config, config.seed)

    if kind in PAIR_OBJECTIVES:
        texts_a = [p[0] for p in data.pairs]
        texts_b = [p[1] for p in data.pairs]
        similar = np.asarray([p[2] for p in data.pairs], dtype=np.float64)

        def batches(rng):
            for idx in _minibatches(len(similar), config.batch_size, rng):
                yield PairBatch([texts_a[i] for i in idx], [texts_b[i] for i in idx], similar[idx])
    else:
        texts = data.texts()
        labels = np.asarray(data.class_indices("A"))

        def batches(rng):
            for idx in stratified_batches(labels, config.batch_size, rng):
                yield ClassBatch([texts[i] for i in idx], {"A": labels[idx]})

    def step(p, batch, seed):
        return gradient(p, batch, config.loss, train_mode=True, dropout_seed=seed)

    return _fit(
        params, config, batches, step,
        lambda p: {"A": centroid_macro_f1(p, dev, reference, "A")},
        ENCODER_BLOCKS,
        config.max_epochs, config.patience,
    )


def train_frozen_probe(
    encoder: ModelParams,
    train: Corpus,
    dev: Corpus,
    task: str,
    config: TrainConfig,
) -> tuple[ModelParams, TrainHistory]:
    """Fit only the task head on fixed (eval-mode) sentence embeddings."""
    _require_both_classes(train, task, "training")
    _require_both_classes(dev, task, "dev")
    params = encoder.copy()
    train_emb = encode_batch(params, train.texts())
    dev_emb = encode_batch(params, dev.texts())
    labels = np.asarray(train.class_indices(task))
    dev_gold = dev.class_indices(task)
    k = len(TASK_LABELS[task])

    def batches(rng):
        return _minibatches(len(labels), config.batch_size, rng)

    def step(p, idx, seed):
        w, b = p.heads[task]
        value, g_logits = obj.cross_entropy_grad(train_emb[idx] @ w + b, labels[idx])
        grads = p.zeros_like()
        gw, gb = grads.heads[task]
        gw += train_emb[idx].T @ g_logits
        gb += g_logits.sum(axis=0)
        return value, grads

    def scores(p):
        pred = np.argmax(forward_head(p, dev_emb, task), axis=1)
        return {task: evaluate(pred, dev_gold, k).macro_f1}

    return _fit(params, config, batches, step, scores, head_blocks(task), config.max_epochs, config.patience)


def train_multitask(
    train: Corpus,
    dev: Corpus,
    config: TrainConfig,
    params: ModelParams | None = None,
    encoder_config: EncoderConfig | None = None,
    epochs: int | None = None,
) -> tuple[ModelParams, TrainHistory]:
    """Joint training of the shared encoder and the A, B and C heads.

    Batch loss is the weighted sum of per-task mean cross-entropies. Runs a
    fixed number of epochs (``config.multitask_epochs`` by default) without
    early stopping and returns the epoch with the best mean dev macro-F1.
    """
    _require_both_classes(train, "A", "training")
    params = _start_params(params, encoder_config, config.seed)
    texts = train.texts()
    labels = {t: np.asarray(train.class_indices(t)) for t in TASKS}
    weights = {t: float(config.mtl_task_weights.get(t, 1.0)) for t in TASKS}
    ce = obj.LossConfig("cross_entropy")

    def batches(rng):
        for idx in _minibatches(len(texts), config.batch_size, rng):
            yield ClassBatch([texts[i] for i in idx], {t: labels[t][idx] for t in TASKS}, weights)

    def step(p, batch, seed):
        return gradient(p, batch, ce, train_mode=True, dropout_seed=seed)

    trainable = ENCODER_BLOCKS + tuple(b for t in TASKS for b in head_blocks(t))
    return _fit(
        params, config, batches, step,
        lambda p: classifier_scores(p, dev, TASKS),
        trainable,
        epochs or config.multitask_epochs, None,
    )


def loss_config_from_mapping(values: Mapping[str, object]) -> obj.LossConfig:
    kwargs = {}
    if "objective" in values:
        kwargs["kind"] = str(values["objective"])
    for key in ("margin", "triplet_epsilon"):
        if key in values:
            kwargs[key] = float(values[key])
    if "triplet_average" in values:
        kwargs["triplet_average"] = str(values["triplet_average"])
    return obj.LossConfig(**kwargs)
