"""Acceptance criteria 1-11, each at its stated tolerance and runtime limit.

Every criterion prints one PASS/FAIL line (also repeated in the pytest
terminal summary).
"""

import contextlib
import itertools
import json
import shutil
import statistics
import time

import numpy as np
import pytest

from arhate import objectives as obj
from arhate.corpus import Corpus, undersample_balance
from arhate.errors import NoValidTriplet
from arhate.evalviz import ensemble_predict_batch, evaluate, majority_baseline, model_metrics
from arhate.model import ClassBatch, EncoderConfig, PairBatch, init_params
from arhate.objectives import LossConfig
from arhate.pairs import build_pools, sample_pairs
from arhate.preprocess import normalize
from arhate.train import (
    TrainConfig, classifier_scores, train_classifier, train_contrastive, train_frozen_probe, train_multitask,
)

import gradcheck
from conftest import ACCEPTANCE_RESULTS, corpus_ab, rec
from pipeline import run, toy_pipeline
from test_evalviz import labeled_corpus
from test_objectives import reference_online, reference_triplet
from test_preprocess import PIECES, config_for, golden_rows


@contextlib.contextmanager
def criterion(n: int, title: str, limit: float | None = None):
    start = time.perf_counter()
    status, detail = "FAIL", ""
    try:
        yield
        elapsed = time.perf_counter() - start
        if limit is not None and elapsed >= limit:
            detail = f" (runtime {elapsed:.2f}s exceeds {limit:g}s)"
            raise AssertionError(f"criterion {n} runtime {elapsed:.2f}s >= {limit}s")
        status = "PASS"
    except BaseException as exc:
        detail = detail or f" ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        raise
    finally:
        elapsed = time.perf_counter() - start
        line = f"[{status}] criterion {n:2d}: {title} [{elapsed:.2f}s]{detail}"
        ACCEPTANCE_RESULTS[n] = line
        print(line)


def test_criterion_01_majority_baselines():
    with criterion(1, "majority baselines 0.394/0.472/0.135, precision 0.325/0.447/0.128", 1.0):
        cases = [("A", 651, 0.394, 0.325), ("B", 893, 0.472, 0.447), ("C", 893, 0.135, 0.128)]
        for task, majority, f1, prec in cases:
            train = labeled_corpus(100, 70, task)
            m = majority_baseline(train, labeled_corpus(1000, majority, task), task)
            assert abs(m.macro_f1 - f1) <= 0.001, (task, m.macro_f1)
            assert abs(m.macro_precision - prec) <= 0.001, (task, m.macro_precision)


def test_criterion_02_pool_counts():
    with criterion(2, "pool sizes equal Cartesian enumeration; 20000 -> 10000/5000/5000", 5.0):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n, m = (int(v) for v in rng.integers(1, 41, size=2))
            corpus = corpus_ab(n, m)
            pools = build_pools(corpus)
            off = [i for i, r in enumerate(corpus) if r.label_a == "OFF"]
            not_off = [i for i, r in enumerate(corpus) if r.label_a == "NOT_OFF"]
            brute = (len(list(itertools.product(off, not_off))), len(list(itertools.product(off, off))),
                     len(list(itertools.product(not_off, not_off))))
            assert pools.sizes() == brute == (n * m, n * n, m * m)
        corpus = corpus_ab(100, 100)
        off_texts = {r.text for r in corpus if r.label_a == "OFF"}
        data = sample_pairs(build_pools(corpus), 20000, seed=0)
        neg = sum(1 for _, _, s in data.pairs if s == 0)
        pos_off = sum(1 for a, _, s in data.pairs if s == 1 and a in off_texts)
        assert (neg, pos_off, len(data) - neg - pos_off) == (10000, 5000, 5000)


TEXTS = ["صباح الخير", "كتاب جميل جدا", "xbad مساء", "الله كريم", "xhate xrace يا", "رائع 😂", "حار", "عيد سعيد"]


def test_criterion_03_gradient_checks(wide_params):
    with criterion(3, "finite-difference gradients, 4 objectives x 200 coords, rel err < 1e-4", 60.0):
        labels = np.array([0, 0, 1, 0, 1, 0, 1, 1])
        cases = {
            "cross_entropy": ClassBatch(TEXTS, {"A": labels}),
            "contrastive": PairBatch(TEXTS[:4], TEXTS[4:], np.array([1, 0, 1, 0])),
            "online_contrastive": PairBatch(TEXTS[:4], TEXTS[4:], np.array([1, 0, 1, 0])),
            "batch_all_triplet": ClassBatch(TEXTS, {"A": labels}),
        }
        worst = {}
        for kind, batch in cases.items():
            worst[kind] = gradcheck.check(wide_params, batch, LossConfig(kind=kind, margin=1.2), TEXTS,
                                          count=200, seed=11)
        assert max(worst.values()) < 1e-4, worst


def test_criterion_04_triplet_oracle():
    with criterion(4, "batch-all triplet equals brute-force triple loop within 1e-12"):
        rng = np.random.default_rng(4)
        checked = 0
        while checked < 100:
            size = int(rng.integers(2, 9))
            x = rng.normal(size=(size, 3))
            labels = rng.integers(0, 3, size=size).tolist()
            margin = float(rng.uniform(0.05, 1.5))
            try:
                got = obj.batch_all_triplet_loss(x, labels, margin)
            except NoValidTriplet:
                continue
            assert abs(got - reference_triplet(x, labels, margin)) <= 1e-12
            checked += 1


def test_criterion_05_hard_mining_oracle():
    with criterion(5, "online contrastive equals reference hard-set selector; separated batches give 0"):
        rng = np.random.default_rng(5)
        checked = 0
        while checked < 100:
            size = int(rng.integers(2, 12))
            a, b = rng.normal(size=(size, 4)), rng.normal(size=(size, 4))
            similar = rng.integers(0, 2, size=size)
            if len(set(similar.tolist())) < 2:
                continue
            pairs = [(a[i], b[i], int(similar[i])) for i in range(size)]
            dist = [obj.cosine_distance(a[i], b[i]) for i in range(size)]
            assert obj.online_contrastive_loss(pairs) == pytest.approx(reference_online(dist, similar), abs=1e-12)
            checked += 1
        for _ in range(20):
            u = rng.normal(size=4)
            pos = [(u, u * rng.uniform(0.5, 2), 1) for _ in range(3)]
            neg = [(u, -u * rng.uniform(0.5, 2), 0) for _ in range(3)]
            assert obj.online_contrastive_loss(pos + neg) == 0.0


ENC = EncoderConfig(hash_buckets=2048, embed_dim=24, out_dim=24, seed=1)


def test_criterion_06_toy_end_to_end(toy):
    train, dev = toy
    with criterion(6, "toy fixture: classifier >= 0.95, probe >= 0.9 frozen, ensemble >= median member", 120.0):
        config = TrainConfig(max_epochs=100, patience=10, batch_size=16)
        _, hist = train_classifier(train, dev, "A", config, encoder_config=ENC)
        assert hist.best_metric >= 0.95, hist.best_metric

        pairs = sample_pairs(build_pools(train), 2000, seed=0)
        contrastive = TrainConfig(max_epochs=10, patience=3, batch_size=32, loss=LossConfig(kind="online_contrastive"))
        encoder, _ = train_contrastive(pairs, dev, contrastive, encoder_config=ENC, reference=train)
        digest = encoder.encoder_digest()
        probe, probe_hist = train_frozen_probe(encoder, train, dev, "A", TrainConfig(max_epochs=100, patience=10))
        assert probe.encoder_digest() == encoder.encoder_digest() == digest
        assert probe_hist.best_metric >= 0.9, probe_hist.best_metric

        members = []
        for seed in range(5):
            enc = EncoderConfig(hash_buckets=2048, embed_dim=24, out_dim=24, seed=seed)
            params, _ = train_classifier(train, dev, "A", TrainConfig(max_epochs=10, patience=3, batch_size=16,
                                                                       seed=seed), encoder_config=enc)
            members.append(params)
        scores = [model_metrics(m, dev, "A").macro_f1 for m in members]
        ens = evaluate(ensemble_predict_batch(members, dev.texts()), dev.class_indices("A"), 2).macro_f1
        assert ens >= statistics.median(scores), (ens, scores)


def test_criterion_07_early_stopping(toy):
    train, dev = toy
    with criterion(7, "plateau stops after exactly `patience` non-improving epochs, true-best checkpoint"):
        patience = 4
        params, hist = train_classifier(train, dev, "A", TrainConfig(learning_rate=1e-12, max_epochs=50,
                                                                     patience=patience), encoder_config=ENC)
        selections = [e.selection for e in hist.epochs]
        assert len(set(selections)) == 1
        assert hist.best_epoch == 1 and len(hist.epochs) == 1 + patience and hist.stopped_early

        params, hist = train_classifier(train, dev, "A", TrainConfig(learning_rate=0.003, max_epochs=60,
                                                                     patience=patience, batch_size=16),
                                        encoder_config=ENC)
        selections = [e.selection for e in hist.epochs]
        assert hist.best_epoch == int(np.argmax(selections)) + 1
        assert all(s <= selections[hist.best_epoch - 1] for s in selections[hist.best_epoch:])
        if hist.stopped_early:
            assert len(hist.epochs) == hist.best_epoch + patience
        assert classifier_scores(params, dev, ["A"])["A"] == hist.best_metric


def test_criterion_08_preprocessing():
    with criterion(8, "preprocessing golden file (>= 30 cases) and idempotence on 1000 fuzzed strings"):
        rows = golden_rows()
        assert len(rows) >= 30
        failures = [r["note"] for r in rows if normalize(r["input"], config_for(r["stages"])) != r["expected"]]
        assert not failures, failures
        rng = np.random.default_rng(8)
        for _ in range(1000):
            text = "".join(rng.choice(PIECES, size=int(rng.integers(0, 41))))
            once = normalize(text)
            assert normalize(once) == once, text


def test_criterion_09_balancing():
    with criterion(9, "balancing: equal classes, all positives kept, seed-deterministic on 50 configs"):
        rng = np.random.default_rng(9)
        for k in range(50):
            n_hs, n_not = int(rng.integers(1, 30)), int(rng.integers(30, 80))
            extra_hs, extra_not = int(rng.integers(0, 10)), int(rng.integers(0, 10))
            primary = Corpus([rec(f"p{i}", "OFF", "HS", "HS1") for i in range(n_hs)]
                             + [rec(f"p{n_hs + i}") for i in range(n_not)], source_tag="primary")
            extra = Corpus([rec(f"e{i}", "OFF", "HS", "HS2") for i in range(extra_hs)]
                           + [rec(f"e{extra_hs + i}") for i in range(extra_not)], source_tag="ext")
            seed = int(rng.integers(1000))
            out = undersample_balance(primary, [extra], "B", "HS", seed)
            labels = [r.label_b for r in out]
            assert labels.count("HS") == labels.count("NOT_HS") == n_hs + extra_hs
            kept = {r.id for r in out}
            assert {r.id for r in primary if r.label_b == "HS"} <= kept
            assert {f"ext:{r.id}" for r in extra if r.label_b == "HS"} <= kept
            assert undersample_balance(primary, [extra], "B", "HS", seed) == out


def test_criterion_10_multitask(toy):
    train, dev = toy
    with criterion(10, "MTL: 5 epochs by default, zero-weight heads stay at init, heads beat baselines"):
        params, hist = train_multitask(train, dev, TrainConfig(batch_size=16), encoder_config=ENC)
        assert len(hist.epochs) == 5
        best = hist.epochs[hist.best_epoch - 1].dev_macro_f1
        for task in "ABC":
            assert best[task] > majority_baseline(train, dev, task).macro_f1, (task, best)
        init = init_params(ENC)
        config = TrainConfig(batch_size=16, mtl_task_weights={"A": 1.0, "B": 0.0, "C": 0.0})
        params, hist = train_multitask(train, dev, config, params=init)
        assert len(hist.epochs) == 5
        for task in "BC":
            for got, start in zip(params.heads[task], init.heads[task]):
                assert np.array_equal(got, start)
        assert params.encoder_digest() != init.encoder_digest()


def test_criterion_11_determinism(tmp_path):
    with criterion(11, "manifest replay reproduces byte-identical metrics JSON and checkpoints"):
        art = toy_pipeline(tmp_path / "run")
        targets = [art[k] for k in ("pairs.tsv", "encoder.json", "probe.json", "metrics.json", "ensemble.json")]
        targets += art["members"]
        before = {t: t.read_bytes() for t in targets}
        shutil.rmtree(tmp_path / "run" / "raw")
        for t in targets:
            t.unlink()
        # replay in pipeline order: later steps read earlier outputs
        for manifest in [*(t for t in targets[:3]), *art["members"], targets[3], targets[4]]:
            assert run("replay", "--manifest", manifest.with_name(manifest.name + ".manifest.json")) == 0
        for t in targets:
            assert t.read_bytes() == before[t], t.name
        assert json.loads(art["metrics.json"].read_text())["macro_f1"] >= 0.9


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
