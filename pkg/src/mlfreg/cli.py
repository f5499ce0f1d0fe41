"""Command-line driver: ``mlfreg <command> [options]``.

Every command writes its outputs plus ``<out>.manifest.json`` (command,
configuration echo, library version, seed).  Failures print one JSON object
on stderr and exit with status 1 (runtime) or 2 (usage/configuration).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import LabelVector, build_support
from .dataio import (
    DatasetFormatError,
    SyntheticSpec,
    generate_synthetic,
    load_archive,
    parse_dataset,
    read_label_lists,
    save_model,
    split_train_validation,
    write_dataset,
    write_label_lists,
)
from .experiment import (
    CLASSIFIERS,
    DEFAULT_COMBOS,
    ConfigError,
    RunConfig,
    ablate,
    manifest,
    predict_matrix,
    train_model,
    tune,
)
from .fpredict import STRATEGIES
from .metrics import evaluate

log = logging.getLogger("mlfreg")


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(out, command: str, config: dict, seed=None, **extra) -> None:
    _write_json(str(out) + ".manifest.json", manifest(command, config, seed, **extra))


def _add_model_options(p) -> None:
    p.add_argument("--classifier", choices=CLASSIFIERS, default="br")
    p.add_argument("--prediction", choices=STRATEGIES, default="support-gfm",
                   help="strategy used to score validation checkpoints")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    p.add_argument("--alpha", type=float, default=0.5, help="L1 ratio; 0 gives a pure L2 penalty")
    p.add_argument("--components", type=int, default=20, help="CBM mixture components")
    p.add_argument("--beam-width", type=int, default=5)
    p.add_argument("--sample-count", type=int, default=1000)
    p.add_argument("--pcc-order", type=_ints, default=None, help="chain order, e.g. 2,0,1")
    p.add_argument("--no-pairwise", action="store_true", help="CRF without pairwise label terms")
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--em-iterations", type=int, default=50)
    p.add_argument("--eval-interval", type=int, default=5)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--validation-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)


def _config(args) -> RunConfig:
    return RunConfig(
        classifier=args.classifier, prediction=args.prediction, lam=args.lam, alpha=args.alpha,
        components=args.components, beam_width=args.beam_width, sample_count=args.sample_count,
        pcc_order=None if args.pcc_order is None else tuple(args.pcc_order), crf_pairwise=not args.no_pairwise,
        early_stop=not args.no_early_stop, max_iterations=args.max_iterations, em_iterations=args.em_iterations,
        evaluation_interval=args.eval_interval, patience=args.patience,
        validation_fraction=args.validation_fraction, seed=args.seed,
    ).validate()


def _train_validation(args, cfg: RunConfig):
    """Training and validation sets plus a description of how they were obtained."""
    data = parse_dataset(args.data)
    source = {"train_path": str(Path(args.data).resolve()), "split": None}
    if args.validation:
        return data, parse_dataset(args.validation), source
    if not cfg.early_stop and args.command == "train":
        return data, None, source
    train, validation = split_train_validation(data, cfg.validation_fraction, cfg.seed)
    source["split"] = {"fraction": cfg.validation_fraction, "seed": cfg.seed}
    return train, validation, source


def cmd_train(args) -> dict:
    cfg = _config(args)
    train, validation, source = _train_validation(args, cfg)
    log.info("training %s on %d instances", cfg.classifier, len(train))
    model, train_log = train_model(cfg, train, validation)
    stats = save_model(model, args.out, {"config": cfg.to_dict(), **source})
    for it, value in train_log.objective:
        log.debug("iteration %d objective %.10g", it, value)
    for it, score in train_log.checkpoints:
        log.info("checkpoint %d validation F1 %.6f", it, score)
    log.info("chosen iteration %s", train_log.best_iteration)
    _write_json(str(args.out) + ".log.json", train_log.to_dict())
    summary = {"model": str(args.out), "best_iteration": train_log.best_iteration,
               "byte_size": stats.byte_size, "nonzero_weight_count": stats.nonzero_weight_count}
    _write_manifest(args.out, "train", cfg.to_dict(), cfg.seed, **source)
    return summary


def cmd_tune(args) -> dict:
    cfg = _config(args)
    train, validation, source = _train_validation(args, cfg)
    report = tune(cfg, train, validation, args.lambdas, args.alphas, args.iterations, workers=args.workers)
    out = report.to_dict()
    out["best_config"] = report.best_config(cfg).to_dict() if report.best is not None else None
    _write_json(args.out, out)
    _write_manifest(args.out, "tune", cfg.to_dict(), cfg.seed, grids={
        "lambdas": args.lambdas, "alphas": args.alphas, "iterations": args.iterations}, **source)
    if report.best is None:
        raise RuntimeError("every grid cell failed; see the report for per-cell errors")
    return {"best": report.best}


def _support_for(archive, args):
    if args.support:
        return build_support(parse_dataset(args.support))
    path = archive.metadata.get("train_path")
    if not path:
        return None
    data = parse_dataset(path)
    split = archive.metadata.get("split")
    if split:
        data = split_train_validation(data, split["fraction"], split["seed"])[0]
    return build_support(data)


def cmd_predict(args) -> dict:
    archive = load_archive(args.model)
    stored = archive.metadata.get("config", {})
    stored = {k: v for k, v in stored.items() if k in {f.name for f in dataclasses.fields(RunConfig)}}
    if stored.get("pcc_order") is not None:
        stored["pcc_order"] = tuple(stored["pcc_order"])
    cfg = dataclasses.replace(RunConfig(**stored), prediction=args.strategy, seed=args.seed,
                              beam_width=args.beam_width, sample_count=args.sample_count).validate()
    needs_support = args.strategy.startswith("support") or (cfg.classifier in ("cbm", "crf") and args.strategy == "map")
    support = _support_for(archive, args) if needs_support else None
    if needs_support and support is None:
        raise ConfigError(f"strategy {args.strategy} needs a support set: pass --support or retrain with a recorded path")
    data = parse_dataset(args.data)
    if data.num_features > archive.model.num_features:
        raise ConfigError(f"dataset has D={data.num_features} but the model expects D={archive.model.num_features}")
    X = data.X
    if data.num_features < archive.model.num_features:
        X = X.copy()
        X.resize((X.shape[0], archive.model.num_features))
    Y = predict_matrix(cfg, archive.model, X, support)
    write_label_lists([LabelVector.from_bits(row) for row in Y], args.out)
    _write_manifest(args.out, "predict", cfg.to_dict(), cfg.seed, model=str(args.model), data=str(args.data))
    return {"predictions": str(args.out), "n_instances": int(Y.shape[0])}


def _read_truth(path, num_labels=None):
    text = Path(path).read_text(encoding="utf-8")
    if "\t" in text or text.startswith("#meta"):
        return list(parse_dataset(path).labels)
    return read_label_lists(path, num_labels)


def cmd_eval(args) -> dict:
    truths = _read_truth(args.truth)
    L = max(t.num_labels for t in truths) if truths else 1
    preds = read_label_lists(args.predictions, None)
    if preds:
        L = max(L, max(p.num_labels for p in preds))
    truths = [LabelVector(t.labels, L) for t in truths]
    preds = [LabelVector(p.labels, L) for p in preds]
    report = evaluate(truths, preds)
    Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    _write_manifest(args.out, "eval", {"truth": str(args.truth), "predictions": str(args.predictions)})
    sys.stdout.write(report.to_text())
    return json.loads(report.to_json())


def cmd_model_size(args) -> dict:
    archive = load_archive(args.model)
    stats = archive.stats
    prefix = {"BR": "label/", "PCC": "chain/", "CBM": "component/", "LSF": "marginal/", "CRF": "unary"}
    kind = archive.metadata.get("kind")
    report = {
        "kind": kind,
        "byte_size": stats.byte_size,
        "nonzero_weight_count": stats.nonzero_weight_count,
        "selected_feature_count": stats.selected_feature_count,
        "mean_nonzero_per_model": stats.mean_nonzero(prefix.get(kind, "")),
        "per_model_nonzero": stats.per_model_nonzero,
    }
    _write_json(args.out, report)
    _write_manifest(args.out, "model-size", {"model": str(args.model)})
    return {k: v for k, v in report.items() if k != "per_model_nonzero"}


def cmd_ablate(args) -> dict:
    cfg = _config(args)
    data = parse_dataset(args.data)
    seeds = [cfg.seed] if args.no_average else args.seeds
    report = ablate(cfg, {s: data for s in seeds}, classifiers=args.classifiers, combos=args.cells,
                    lambdas=args.lambdas, alphas=args.alphas, test_fraction=args.test_fraction, workers=args.workers)
    _write_json(args.out, report.to_dict())
    Path(str(args.out) + ".txt").write_text(report.to_text(), encoding="utf-8")
    _write_manifest(args.out, "ablate", cfg.to_dict(), seeds, data=str(args.data), classifiers=args.classifiers,
                    cells=args.cells, lambdas=args.lambdas, alphas=args.alphas)
    sys.stdout.write(report.to_text())
    return {"table": report.table(), "errors": len(report.errors)}


def cmd_gen_synthetic(args) -> dict:
    spec = SyntheticSpec(N=args.n, D=args.d, L=args.l, K_true=args.k_true, noise_rate=args.noise_rate,
                         irrelevant_feature_fraction=args.irrelevant_fraction, seed=args.seed,
                         active_probability=args.active_probability)
    ds, truth = generate_synthetic(spec)
    write_dataset(ds, args.out)
    truth_info = {
        "cluster_ids": truth.cluster_ids.tolist(),
        "cluster_label_sets": [list(s) for s in truth.cluster_label_sets],
        "relevant_features": list(truth.relevant_features),
        "noise_features": list(truth.noise_features),
    }
    _write_json(str(args.out) + ".truth.json", truth_info)
    _write_manifest(args.out, "gen-synthetic", dataclasses.asdict(spec), spec.seed)
    return {"dataset": str(args.out), "n_instances": len(ds), "support_size": len(build_support(ds))}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mlfreg", description="Regularized multi-label estimators with F1-optimal prediction.")
    parser.add_argument("--version", action="version", version=f"mlfreg {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a classifier and save an archive")
    _add_model_options(p)
    p.add_argument("--data", required=True)
    p.add_argument("--validation", help="validation file (default: split from --data)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="grid search over lambda, alpha and iteration caps")
    _add_model_options(p)
    p.add_argument("--data", required=True)
    p.add_argument("--validation")
    p.add_argument("--lambdas", type=_floats, default=[1e-4, 1e-3, 1e-2])
    p.add_argument("--alphas", type=_floats, default=[0.0, 0.5, 0.9])
    p.add_argument("--iterations", type=_ints, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("predict", help="predict label sets with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, default="support-gfm")
    p.add_argument("--support", help="dataset whose label combinations form the support")
    p.add_argument("--beam-width", type=int, default=5)
    p.add_argument("--sample-count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="instance-F1 report for predictions")
    p.add_argument("--truth", required=True, help="dataset file or label-list file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("model-size", help="archive size and sparsity report")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_model_size)

    p = sub.add_parser("ablate", help="L/E/S/G ablation table")
    _add_model_options(p)
    p.add_argument("--data", required=True)
    p.add_argument("--classifiers", type=lambda s: [t.strip() for t in s.split(",")], default=["br", "pcc", "cbm", "crf"])
    p.add_argument("--cells", type=lambda s: [t.strip() for t in s.split(",")], default=list(DEFAULT_COMBOS))
    p.add_argument("--lambdas", type=_floats, default=[1e-4, 1e-3, 1e-2])
    p.add_argument("--alphas", type=_floats, default=[0.5, 0.9])
    p.add_argument("--seeds", type=_ints, default=[0, 1, 2])
    p.add_argument("--no-average", action="store_true", help="single run with --seed instead of averaging seeds")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset with clustered labels")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--d", type=int, default=200)
    p.add_argument("--l", type=int, default=8)
    p.add_argument("--k-true", type=int, default=6)
    p.add_argument("--noise-rate", type=float, default=0.05)
    p.add_argument("--irrelevant-fraction", type=float, default=0.5)
    p.add_argument("--active-probability", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None) -> int:
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                            format="%(levelname)s %(message)s")
        result = args.func(args)
        print(json.dumps({"status": "ok", "command": command, **result}, sort_keys=True, default=_jsonable))
        return 0
    except (ConfigError, DatasetFormatError) as exc:
        _error(command, exc)
        return 2
    except Exception as exc:
        _error(command, exc)
        return 1


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _error(command, exc) -> None:
    line = {"status": "error", "command": command, "error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(line, sort_keys=True) + "\n")


if __name__ == "__main__":
    sys.exit(main())
