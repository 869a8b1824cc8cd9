"""Macro-averaged metrics, majority baselines, logit-sum ensembles and PCA."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import TASK_LABELS, Corpus
from .errors import DegenerateData, EmptyCorpus, EmptyInput, HeterogeneousHeads, LengthMismatch
from .model import ModelParams, encode_batch, forward_head


@dataclass
class Metrics:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray

    def to_dict(self, task: str | None = None) -> dict:
        labels = TASK_LABELS.get(task) if task else None
        names = labels if labels and len(labels) == len(self.f1) else [str(i) for i in range(len(self.f1))]
        return {
            "task": task,
            "accuracy": float(self.accuracy),
            "macro_precision": float(self.macro_precision),
            "macro_recall": float(self.macro_recall),
            "macro_f1": float(self.macro_f1),
            "per_class": {
                name: {
                    "precision": float(self.precision[i]),
                    "recall": float(self.recall[i]),
                    "f1": float(self.f1[i]),
                    "support": int(self.support[i]),
                }
                for i, name in enumerate(names)
            },
            "confusion": self.confusion.tolist(),
        }

    def to_json(self, task: str | None = None) -> str:
        return json.dumps(self.to_dict(task), indent=2, sort_keys=True)


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def evaluate(predictions: Sequence[int], gold: Sequence[int], classes: int) -> Metrics:
    """Confusion-matrix metrics; macro averages run over all ``classes``.

    A class without support or without predictions scores 0 for the undefined
    quantity, and it still counts in the macro denominator.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if len(pred) != len(gold):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(gold)} gold labels")
    if len(gold) == 0:
        raise EmptyInput("cannot evaluate an empty prediction set")
    if pred.min() < 0 or gold.min() < 0 or max(pred.max(), gold.max()) >= classes:
        raise ValueError(f"class ids must lie in 0..{classes - 1}")
    confusion = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(confusion, (gold, pred), 1)
    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    precision = _safe_div(tp, predicted.astype(np.float64))
    recall = _safe_div(tp, support.astype(np.float64))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return Metrics(
        accuracy=float(tp.sum() / len(gold)),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        confusion=confusion,
    )


def macro_f1(predictions, gold, classes: int) -> float:
    return evaluate(predictions, gold, classes).macro_f1


def majority_label(train: Corpus, task: str) -> int:
    """Most frequent training class index; ties go to the lower index."""
    if len(train) == 0:
        raise EmptyCorpus("majority baseline needs a non-empty training corpus")
    counts = np.bincount(train.class_indices(task), minlength=len(TASK_LABELS[task]))
    return int(np.argmax(counts))


def majority_baseline(train: Corpus, eval: Corpus, task: str) -> Metrics:
    label = majority_label(train, task)
    gold = eval.class_indices(task)
    return evaluate([label] * len(gold), gold, len(TASK_LABELS[task]))


def model_metrics(params: ModelParams, corpus: Corpus, task: str) -> Metrics:
    logits = forward_head(params, encode_batch(params, corpus.texts()), task)
    return evaluate(np.argmax(logits, axis=1), corpus.class_indices(task), len(TASK_LABELS[task]))


# ---------------------------------------------------------------------------
# ensembling


def ensemble_logits(models: Sequence[ModelParams], texts: Sequence[str], task: str = "A") -> np.ndarray:
    """Per-class sum of raw logits over all members, shape (len(texts), classes)."""
    if not models:
        raise ValueError("ensemble needs at least one model")
    widths = {m.heads[task][1].shape[0] for m in models}
    if len(widths) != 1:
        raise HeterogeneousHeads(f"members disagree on task {task} class count: {sorted(widths)}")
    total = None
    for m in models:
        logits = forward_head(m, encode_batch(m, texts), task)
        total = logits if total is None else total + logits
    return total


def ensemble_predict(models: Sequence[ModelParams], text: str, task: str = "A") -> int:
    # np.argmax returns the first maximum, i.e. ties go to the lower class
    return int(np.argmax(ensemble_logits(models, [text], task)[0]))


def ensemble_predict_batch(models: Sequence[ModelParams], texts: Sequence[str], task: str = "A") -> np.ndarray:
    return np.argmax(ensemble_logits(models, texts, task), axis=1)


# ---------------------------------------------------------------------------
# PCA


@dataclass
class Projection:
    coordinates: np.ndarray
    labels: list
    components: np.ndarray
    explained_variance: np.ndarray
    mean: np.ndarray

    def to_csv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "y", "label"])
            for (x, y, *_), label in zip(self._xy(), self.labels):
                writer.writerow([repr(float(x)), repr(float(y)), label])

    def _xy(self) -> np.ndarray:
        if self.coordinates.shape[1] >= 2:
            return self.coordinates
        return np.hstack([self.coordinates, np.zeros((len(self.coordinates), 1))])


def pca_project(embeddings, labels: Sequence, components: int = 2, rank_tol: float = 1e-10) -> Projection:
    """Project onto the top principal axes of the sample covariance.

    Each component is sign-fixed so its largest-magnitude entry is positive.
    ``explained_variance`` holds fractions of the total variance.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("embeddings must form a 2-D array")
    if len(x) < components + 1:
        raise DegenerateData(f"need at least {components + 1} points for {components} components")
    if len(labels) != len(x):
        raise LengthMismatch("one label per embedding is required")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (len(x) - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    total = eigvals.clip(min=0).sum()
    if total <= 0 or eigvals[components - 1] <= rank_tol * total:
        raise DegenerateData(f"data rank is below {components}")
    comps = eigvecs[:, :components].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return Projection(
        coordinates=centered @ comps.T,
        labels=list(labels),
        components=comps,
        explained_variance=eigvals[:components] / total,
        mean=mean,
    )
