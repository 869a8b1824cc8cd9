"""Command-line entry point: ``arhate <command> [options]``.

Every command that writes files also writes ``<output>.manifest.json`` with
the argv, the fully resolved configuration, the seed and SHA-256 digests of
the inputs. ``arhate replay --manifest FILE`` re-runs a recorded command.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import statistics
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .corpus import TASK_LABELS, label_stats, load_corpus, undersample_balance, validate_hierarchy, write_corpus
from .errors import DataError
from .evalviz import (
    ensemble_predict_batch,
    evaluate,
    majority_baseline,
    model_metrics,
    pca_project,
)
from .model import EncoderConfig, encode_batch, load_checkpoint, save_checkpoint
from .objectives import LossConfig
from .pairs import SIZE_PRESETS, build_pools, read_pairs, sample_pairs, write_pairs
from .preprocess import STAGES, NormalizationConfig, normalize_corpus
from .toy import toy_dev, toy_train
from .train import (
    TrainConfig,
    train_classifier,
    train_contrastive,
    train_frozen_probe,
    train_multitask,
)

log = logging.getLogger("arhate")

OBJECTIVES = {
    "ce": "cross_entropy",
    "contrastive": "contrastive",
    "online-contrastive": "online_contrastive",
    "batch-all": "batch_all_triplet",
    "multitask": "cross_entropy",
}

# train options that may come from --config; flags win over file values
TRAIN_KEYS = {
    "learning_rate": float,
    "max_epochs": int,
    "patience": int,
    "batch_size": int,
    "multitask_epochs": int,
    "optimizer": str,
    "margin": float,
    "triplet_epsilon": float,
    "triplet_average": str,
    "weight_a": float,
    "weight_b": float,
    "weight_c": float,
}
TRAIN_DEFAULTS = {
    "learning_rate": 0.01,
    "max_epochs": 100,
    "patience": 10,
    "batch_size": 32,
    "multitask_epochs": 5,
    "optimizer": "adam",
    "margin": 0.7,
    "triplet_epsilon": 1e-16,
    "triplet_average": "active",
    "weight_a": 1.0,
    "weight_b": 1.0,
    "weight_c": 1.0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def read_key_values(path) -> dict[str, str]:
    """Parse a ``key = value`` file (``#`` comments, no sections)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_string("[run]\n" + Path(path).read_text(encoding="utf-8"))
    return dict(parser["run"])


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_path, command: str, argv: list[str], resolved: dict, inputs: list, seed) -> Path:
    manifest = {
        "tool": "arhate",
        "version": __version__,
        "command": command,
        "argv": argv,
        "seed": seed,
        "resolved_config": resolved,
        "inputs": {str(p): file_digest(p) for p in inputs if p},
        "output": str(out_path),
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# ---------------------------------------------------------------------------
# commands


def cmd_preprocess(args, argv):
    stages = tuple(s.strip() for s in args.stages.split(",") if s.strip()) if args.stages else STAGES
    try:
        config = NormalizationConfig(stages, args.max_run)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    log.info("resolved config: %s", json.dumps(asdict(config)))
    write_corpus(normalize_corpus(load_corpus(args.inp), config), args.out)
    write_manifest(args.out, "preprocess", argv, asdict(config), [args.inp], None)


def cmd_stats(args, argv):
    report = label_stats(load_corpus(args.inp), args.task)
    _emit(report.to_json(), args.out)
    if args.out:
        write_manifest(args.out, "stats", argv, {"task": args.task}, [args.inp], None)


def cmd_validate(args, argv):
    violations = validate_hierarchy(load_corpus(args.inp))
    text = json.dumps([{"id": i, "rule": r} for i, r in violations], indent=2, ensure_ascii=False)
    _emit(text, args.out)
    if args.out:
        write_manifest(args.out, "validate", argv, {}, [args.inp], None)


def cmd_balance(args, argv):
    extras = [load_corpus(p) for p in args.extra]
    balanced = undersample_balance(load_corpus(args.primary), extras, args.task, args.positive, args.seed,
                                   max_per_class=args.max_per_class)
    write_corpus(balanced, args.out)
    resolved = {"task": args.task, "positive": args.positive, "max_per_class": args.max_per_class}
    write_manifest(args.out, "balance", argv, resolved, [args.primary, *args.extra], args.seed)


def cmd_pairs(args, argv):
    if (args.size is None) == (args.size_preset is None):
        raise UsageError("pairs: give exactly one of --size or --size-preset")
    size = args.size if args.size is not None else SIZE_PRESETS[args.size_preset]
    dataset = sample_pairs(build_pools(load_corpus(args.inp)), size, args.seed)
    write_pairs(dataset, args.out)
    write_manifest(args.out, "pairs", argv, {"size": size}, [args.inp], args.seed)


def _resolve_train(args) -> dict:
    values = dict(TRAIN_DEFAULTS)
    if args.config:
        for key, raw in read_key_values(args.config).items():
            if key not in TRAIN_KEYS:
                raise UsageError(f"unknown training config key {key!r}")
            values[key] = TRAIN_KEYS[key](raw)
    for key in TRAIN_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return values


def cmd_train(args, argv):
    if args.objective is None and not (args.probe and args.encoder):
        raise UsageError("train: --objective is required unless --probe --encoder is given")
    kind = OBJECTIVES.get(args.objective) if args.objective else None
    if args.objective in ("contrastive", "online-contrastive"):
        if not args.pairs:
            raise UsageError(f"train: --objective {args.objective} needs --pairs")
    elif args.pairs:
        raise UsageError(f"train: --objective {args.objective} does not take --pairs")
    if args.objective in ("ce", "batch-all", "multitask") and not args.train:
        raise UsageError(f"train: --objective {args.objective} needs --train")
    if args.probe and not args.train:
        raise UsageError("train: --probe needs --train")
    if args.probe and args.objective in ("ce", "multitask"):
        raise UsageError("train: --probe applies to contrastive objectives or a loaded --encoder")

    try:
        values = _resolve_train(args)
        config = _train_config(args, kind, values)
        enc_values = read_key_values(args.encoder_config) if args.encoder_config else {}
        enc_values.setdefault("seed", args.seed)
        encoder_config = EncoderConfig.from_mapping(enc_values)
    except ValueError as exc:
        raise UsageError(f"train: {exc}") from exc
    resolved = {
        "objective": args.objective,
        "task": args.task,
        "probe": bool(args.probe),
        "train": {**values, "seed": args.seed},
        "encoder": asdict(encoder_config),
    }
    log.info("resolved config: %s", json.dumps(resolved, sort_keys=True))
    _run_training(args, argv, config, encoder_config, resolved)


def _train_config(args, kind, values) -> TrainConfig:
    loss = LossConfig(kind or "cross_entropy", margin=values["margin"], triplet_epsilon=values["triplet_epsilon"],
                      triplet_average=values["triplet_average"])
    return TrainConfig(
        learning_rate=values["learning_rate"],
        max_epochs=values["max_epochs"],
        patience=values["patience"],
        batch_size=values["batch_size"],
        seed=args.seed,
        loss=loss,
        mtl_task_weights={"A": values["weight_a"], "B": values["weight_b"], "C": values["weight_c"]},
        multitask_epochs=values["multitask_epochs"],
        optimizer=values["optimizer"],
    )


def _run_training(args, argv, config, encoder_config, resolved) -> None:
    dev = load_corpus(args.dev)
    train = load_corpus(args.train) if args.train else None
    inputs = [args.train, args.dev, args.pairs, args.encoder, args.config, args.encoder_config]
    histories = []

    if args.encoder:
        params = load_checkpoint(args.encoder)
    else:
        params = None
    if args.objective == "ce":
        params, hist = train_classifier(train, dev, args.task, config, params=params, encoder_config=encoder_config)
        histories.append(("classifier", hist))
    elif args.objective == "multitask":
        params, hist = train_multitask(train, dev, config, params=params, encoder_config=encoder_config)
        histories.append(("multitask", hist))
    elif args.objective is not None:
        data = read_pairs(args.pairs) if args.pairs else train
        params, hist = train_contrastive(data, dev, config, params=params, encoder_config=encoder_config,
                                         reference=train)
        histories.append(("contrastive", hist))
    if args.probe:
        params, hist = train_frozen_probe(params, train, dev, args.task, config)
        histories.append(("probe", hist))

    last = histories[-1][1]
    metadata = {
        "objective": args.objective,
        "task": args.task,
        "stages": [
            {"stage": name, "epochs_run": len(h.epochs), "best_epoch": h.best_epoch,
             "best_dev_metric": h.best_metric, "stopped_early": h.stopped_early}
            for name, h in histories
        ],
        "epochs_run": len(last.epochs),
        "best_dev_metric": last.best_metric,
    }
    save_checkpoint(params, metadata, args.out)
    history_path = args.history or str(args.out) + ".history.jsonl"
    lines = []
    for name, h in histories:
        lines += [json.dumps({"stage": name, **json.loads(line)}, sort_keys=True)
                  for line in h.to_jsonl().splitlines()]
    Path(history_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_manifest(args.out, "train", argv, resolved, inputs, args.seed)


def cmd_eval(args, argv):
    metrics = model_metrics(load_checkpoint(args.model), load_corpus(args.inp), args.task)
    _emit(metrics.to_json(args.task), args.out)
    if args.out:
        write_manifest(args.out, "eval", argv, {"task": args.task}, [args.model, args.inp], None)


def cmd_baseline(args, argv):
    metrics = majority_baseline(load_corpus(args.train), load_corpus(args.inp), args.task)
    _emit(metrics.to_json(args.task), args.out)
    if args.out:
        write_manifest(args.out, "baseline", argv, {"task": args.task}, [args.train, args.inp], None)


def cmd_ensemble(args, argv):
    models = [load_checkpoint(p) for p in args.models]
    corpus = load_corpus(args.inp)
    gold = corpus.class_indices(args.task)
    k = len(TASK_LABELS[args.task])
    pred = ensemble_predict_batch(models, corpus.texts(), args.task)
    ens = evaluate(pred, gold, k)
    members = [model_metrics(m, corpus, args.task) for m in models]
    doc = {
        "task": args.task,
        "ensemble": ens.to_dict(args.task),
        "members": [{"model": str(p), "macro_f1": m.macro_f1} for p, m in zip(args.models, members)],
        "median_member_macro_f1": statistics.median(m.macro_f1 for m in members),
    }
    _emit(json.dumps(doc, indent=2, sort_keys=True), args.out)
    if args.out:
        write_manifest(args.out, "ensemble", argv, {"task": args.task}, [*args.models, args.inp], None)


def cmd_project(args, argv):
    params = load_checkpoint(args.model)
    corpus = load_corpus(args.inp)
    emb = encode_batch(params, corpus.texts())
    labels = [r.label(args.task) for r in corpus.records]
    proj = pca_project(emb, labels, components=args.components)
    proj.to_csv(args.out)
    write_manifest(args.out, "project", argv, {"task": args.task, "components": args.components},
                   [args.model, args.inp], None)


def cmd_toy(args, argv):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(toy_train(), out / "train.tsv")
    write_corpus(toy_dev(), out / "dev.tsv")


def cmd_replay(args, argv):
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    recorded = manifest.get("argv")
    if not isinstance(recorded, list):
        raise DataError(f"{args.manifest}: manifest has no argv")
    code = dispatch(recorded)
    if code:
        raise SystemExit(code)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arhate", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        return p

    task_abc = dict(choices=("A", "B", "C"), default="A")

    p = add("preprocess", cmd_preprocess, "normalize the text column of a corpus")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stages", help="comma-separated subset/order of: " + ",".join(STAGES))
    p.add_argument("--max-run", type=int, default=2)

    p = add("stats", cmd_stats, "label distribution of one task as JSON")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--task", **task_abc)
    p.add_argument("--out")

    p = add("validate", cmd_validate, "list label-hierarchy violations as JSON")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out")

    p = add("balance", cmd_balance, "undersample to a 1:1 binary corpus")
    p.add_argument("--primary", required=True)
    p.add_argument("--extra", action="append", default=[])
    p.add_argument("--task", choices=("A", "B"), default="A")
    p.add_argument("--positive", required=True)
    p.add_argument("--max-per-class", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("pairs", cmd_pairs, "sample a balanced contrastive pair file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--size", type=int)
    p.add_argument("--size-preset", choices=sorted(SIZE_PRESETS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train a model")
    p.add_argument("--objective", choices=sorted(OBJECTIVES))
    p.add_argument("--train")
    p.add_argument("--pairs")
    p.add_argument("--dev", required=True)
    p.add_argument("--task", choices=("A", "B"), default="A")
    p.add_argument("--probe", action="store_true", help="fit a linear head on the frozen encoder")
    p.add_argument("--encoder", help="start from this checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--history")
    p.add_argument("--config", help="key = value training config file")
    p.add_argument("--encoder-config", help="key = value encoder config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--multitask-epochs", type=int)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--margin", type=float)

    p = add("eval", cmd_eval, "macro-averaged metrics of a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--task", **task_abc)
    p.add_argument("--out")

    p = add("baseline", cmd_baseline, "majority-class baseline metrics")
    p.add_argument("--train", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--task", **task_abc)
    p.add_argument("--out")

    p = add("ensemble", cmd_ensemble, "logit-sum ensemble of checkpoints")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--task", choices=("A", "B", "C"), default="A")
    p.add_argument("--out")

    p = add("project", cmd_project, "PCA projection of sentence embeddings as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--task", **task_abc)
    p.add_argument("--components", type=int, default=2)
    p.add_argument("--out", required=True)

    p = add("toy", cmd_toy, "write the bundled separable toy fixture")
    p.add_argument("--out-dir", required=True)

    p = add("replay", cmd_replay, "re-run the command recorded in a manifest")
    p.add_argument("--manifest", required=True)
    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return 1
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args, list(argv))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return 1
    except (DataError, OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        print(f"arhate: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
