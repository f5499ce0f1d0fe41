"""Training, tuning and ablation protocol shared by the command-line driver.

An ablation cell is named by the regularizers it switches on:

* ``L`` adds an L1 term (the L1 ratio alpha is tuned; without it alpha = 0),
* ``E`` selects the training iteration on validation data (without it
  training runs to convergence or the iteration cap),
* ``S`` restricts inference to the training support,
* ``G`` predicts with GFM instead of MAP.

``S`` and ``G`` only change prediction, so every strategy needed by the
requested cells is scored along one training trajectory per grid point.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .core import MultiLabelDataset, SupportSet, build_support
from .dataio.datasets import split_train_validation
from .estimators import BrTrainer, CbmTrainer, CrfTrainer, PccTrainer, UnsupportedOperation
from .fpredict import LsfTrainer, STRATEGIES
from .fpredict import predict as predict_strategy
from .linreg import EarlyStopConfig, ElasticNetConfig, train_with_early_stopping
from .metrics import mean_f1

CLASSIFIERS = ("br", "pcc", "cbm", "crf", "lsf")
DEFAULT_COMBOS = ("No REG", "L+E", "L+E+S", "L+E+G", "All4")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    classifier: str = "br"
    prediction: str = "support-gfm"
    lam: float = 1e-3
    alpha: float = 0.5
    components: int = 20
    beam_width: int = 5
    sample_count: int = 1000
    pcc_order: tuple[int, ...] | None = None
    crf_pairwise: bool = True
    early_stop: bool = True
    max_iterations: int = 500
    em_iterations: int = 50
    inner_iterations: int = 5
    evaluation_interval: int = 5
    patience: int = 3
    validation_fraction: float = 0.2
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.classifier not in CLASSIFIERS:
            raise ConfigError(f"unknown classifier {self.classifier!r}; choose from {', '.join(CLASSIFIERS)}")
        if self.prediction not in STRATEGIES:
            raise ConfigError(f"unknown prediction strategy {self.prediction!r}; choose from {', '.join(STRATEGIES)}")
        if self.classifier == "crf" and self.prediction == "sample-gfm":
            raise ConfigError("sample-gfm is not available for crf (no sampler); use support-gfm")
        if self.classifier == "lsf" and not self.prediction.endswith("gfm"):
            raise ConfigError("lsf estimates GFM inputs directly and only supports GFM prediction")
        if not self.lam >= 0 or not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("need lambda >= 0 and alpha in [0, 1]")
        if min(self.components, self.beam_width, self.sample_count, self.max_iterations,
               self.em_iterations, self.inner_iterations, self.evaluation_interval, self.patience) < 1:
            raise ConfigError("counts and iteration limits must be positive")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation fraction must lie strictly between 0 and 1")
        return self

    def en_config(self) -> ElasticNetConfig:
        return ElasticNetConfig(self.lam, self.alpha, self.max_iterations)

    def stop_config(self) -> EarlyStopConfig:
        return EarlyStopConfig(self.evaluation_interval, self.patience)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["pcc_order"] = None if self.pcc_order is None else list(self.pcc_order)
        return d


def manifest(command: str, config: dict, seed: int | None = None, **extra) -> dict:
    return {"command": command, "library_version": __version__, "seed": seed, "config": config, **extra}


# training


def make_trainer(cfg: RunConfig, train: MultiLabelDataset, support: SupportSet | None = None):
    en = cfg.en_config()
    if cfg.classifier == "br":
        return BrTrainer(train, en)
    if cfg.classifier == "pcc":
        return PccTrainer(train, cfg.pcc_order, en)
    if cfg.classifier == "cbm":
        return CbmTrainer(train, cfg.components, en, seed=cfg.seed, inner_iterations=cfg.inner_iterations,
                          max_em_iterations=cfg.em_iterations)
    if cfg.classifier == "crf":
        support = build_support(train) if support is None else support
        return CrfTrainer(train, support, cfg.crf_pairwise, l2_lambda=cfg.lam, max_iterations=cfg.max_iterations)
    if cfg.classifier == "lsf":
        return LsfTrainer(train, en)
    raise ConfigError(f"unknown classifier {cfg.classifier!r}")


def trainer_objective(trainer) -> float:
    """Current training objective in minimized form."""
    if isinstance(trainer, CbmTrainer):
        return -trainer.objective_trace[-1]
    if isinstance(trainer, CrfTrainer):
        return trainer.value
    return float(sum(t.objective() for t in trainer.trainers if hasattr(t, "objective")))


class RecordingTrainer:
    """Steps a trainer one iteration at a time and logs its objective."""

    def __init__(self, trainer):
        self.trainer = trainer
        self.objective = [(0, trainer_objective(trainer))]

    @property
    def iteration(self) -> int:
        return self.trainer.iteration

    @property
    def converged(self) -> bool:
        return bool(self.trainer.converged)

    @property
    def max_iterations(self) -> int:
        return self.trainer.max_iterations

    def run(self, iterations: int) -> int:
        done = 0
        for _ in range(iterations):
            if self.trainer.run(1) == 0:
                break
            done += 1
            self.objective.append((self.trainer.iteration, trainer_objective(self.trainer)))
        return done

    def snapshot(self):
        return self.trainer.snapshot()


@dataclass
class TrainLog:
    objective: list = field(default_factory=list)  # (iteration, value)
    checkpoints: list = field(default_factory=list)  # (iteration, validation F1)
    best_iteration: int | None = None
    halted_at: int = 0
    converged: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def predict_matrix(cfg: RunConfig, model, X, support: SupportSet | None, strategy: str | None = None) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    return predict_strategy(model, X, strategy or cfg.prediction, support=support, beam_width=cfg.beam_width,
                            sample_count=cfg.sample_count, rng=rng)


def make_scorer(cfg: RunConfig, validation: MultiLabelDataset, support: SupportSet | None, strategy: str | None = None):
    Y = validation.Y
    X = validation.X

    def score(model) -> float:
        return mean_f1(Y, predict_matrix(cfg, model, X, support, strategy))

    return score


def train_model(cfg: RunConfig, train: MultiLabelDataset, validation: MultiLabelDataset | None = None,
                support: SupportSet | None = None):
    """Train ``cfg.classifier``; with early stopping the validation set picks the iteration."""
    cfg.validate()
    support = build_support(train) if support is None else support
    rec = RecordingTrainer(make_trainer(cfg, train, support))
    log = TrainLog()
    if cfg.early_stop and validation is not None:
        result = train_with_early_stopping(rec, make_scorer(cfg, validation, support), cfg.stop_config())
        model = result.model
        log.checkpoints = [(int(i), float(s)) for i, s in result.history]
        log.best_iteration = int(result.best_iteration)
    else:
        rec.run(rec.max_iterations)
        model = rec.snapshot()
        log.best_iteration = rec.iteration
    log.objective = [(int(i), float(v)) for i, v in rec.objective]
    log.halted_at = rec.iteration
    log.converged = rec.converged
    return model, log


def _trajectory(trainer, scorers: dict, stop: EarlyStopConfig | None) -> dict:
    """Best (score, model, iteration) per scorer along one run.

    Without ``stop`` only the final model is scored.  With it, training halts
    once every scorer has gone ``patience`` checkpoints without improving.
    """
    best = {k: (-math.inf, None, 0) for k in scorers}
    if stop is None:
        trainer.run(trainer.max_iterations)
        model = trainer.snapshot()
        return {k: (float(f(model)), model, trainer.iteration) for k, f in scorers.items()}
    stale = dict.fromkeys(scorers, 0)
    while trainer.iteration < trainer.max_iterations and not trainer.converged:
        if trainer.run(stop.evaluation_interval) == 0 and not trainer.converged:
            break
        model = trainer.snapshot()
        for k, f in scorers.items():
            s = float(f(model))
            if s > best[k][0]:
                best[k], stale[k] = (s, model, trainer.iteration), 0
            else:
                stale[k] += 1
        if all(v >= stop.patience for v in stale.values()):
            break
    if any(m is None for _, m, _ in best.values()):
        model = trainer.snapshot()
        for k, f in scorers.items():
            if best[k][1] is None:
                best[k] = (float(f(model)), model, trainer.iteration)
    return best


# tuning


@dataclass
class TuneReport:
    cells: list  # one dict per grid point
    best: dict | None
    strategy: str

    def best_config(self, base: RunConfig) -> RunConfig:
        if self.best is None:
            raise ConfigError("every grid cell failed")
        return dataclasses.replace(base, lam=self.best["lambda"], alpha=self.best["alpha"],
                                   max_iterations=self.best["max_iterations"])

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "cells": self.cells, "best": self.best}


def tune(cfg: RunConfig, train: MultiLabelDataset, validation: MultiLabelDataset, lambdas, alphas,
         iterations=None, support: SupportSet | None = None, workers: int = 1) -> TuneReport:
    """Grid search over (lambda, alpha, iteration cap) scored by validation instance-F1."""
    cfg.validate()
    lambdas, alphas = list(lambdas), list(alphas)
    iterations = [cfg.max_iterations] if iterations is None else list(iterations)
    if not lambdas or not alphas or not iterations:
        raise ConfigError("tuning grids must be nonempty")
    support = build_support(train) if support is None else support
    jobs = [(dataclasses.replace(cfg, lam=float(l), alpha=float(a), max_iterations=int(t)), train, validation, support)
            for l in lambdas for a in alphas for t in iterations]
    cells = _map(_score_cell, jobs, workers)
    scored = [c for c in cells if c["score"] is not None]
    best = max(scored, key=lambda c: c["score"]) if scored else None  # first maximal cell wins ties
    return TuneReport(cells, best, cfg.prediction)


def _score_cell(args):
    cfg, train, validation, support = args
    cell = {"lambda": cfg.lam, "log10_lambda": math.log10(cfg.lam) if cfg.lam > 0 else None,
            "alpha": cfg.alpha, "max_iterations": cfg.max_iterations}
    try:
        model, log = train_model(cfg, train, validation, support)
        score = make_scorer(cfg, validation, support)(model)
        cell.update(score=float(score), best_iteration=log.best_iteration, error=None)
    except Exception as exc:  # a failing cell is recorded, tuning continues
        cell.update(score=None, best_iteration=None, error=f"{type(exc).__name__}: {exc}")
    return cell


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# ablation


def parse_letters(name: str) -> frozenset:
    text = name.strip()
    if text.lower() in ("no reg", "noreg", "none", ""):
        return frozenset()
    if text.lower() == "all4":
        return frozenset("LESG")
    letters = [t.strip().upper() for t in text.replace("+", " ").split()]
    if any(t not in ("L", "E", "S", "G") for t in letters) or len(set(letters)) != len(letters):
        raise ConfigError(f"bad ablation cell {name!r}; use letters L, E, S, G joined by '+'")
    return frozenset(letters)


def combo_name(letters) -> str:
    letters = frozenset(letters)
    if not letters:
        return "No REG"
    if letters == frozenset("LESG"):
        return "All4"
    return "+".join(c for c in "LESG" if c in letters)


def strategy_for(letters) -> str:
    s, g = "S" in letters, "G" in letters
    if s and g:
        return "support-gfm"
    if s:
        return "support-map"
    return "sample-gfm" if g else "map"


@dataclass
class AblationReport:
    combos: list
    classifiers: list
    seeds: list
    scores: dict  # combo -> classifier -> list of test F1 per seed (None on failure)
    selections: list
    errors: list

    def mean(self, combo: str, classifier: str) -> float | None:
        vals = self.scores[combo][classifier]
        if not vals or any(v is None for v in vals):
            return None
        return float(np.mean(vals))

    def table(self) -> dict:
        return {c: {k: self.mean(c, k) for k in self.classifiers} for c in self.combos}

    def to_dict(self) -> dict:
        return {"combos": self.combos, "classifiers": self.classifiers, "seeds": self.seeds,
                "mean_test_f1": self.table(), "per_seed": self.scores, "selections": self.selections,
                "errors": self.errors}

    def to_text(self) -> str:
        width = max(len(c) for c in self.combos) + 2
        lines = ["cell".ljust(width) + "".join(k.rjust(9) for k in self.classifiers)]
        for c in self.combos:
            row = [self.mean(c, k) for k in self.classifiers]
            lines.append(c.ljust(width) + "".join(("-" if v is None else f"{v:.4f}").rjust(9) for v in row))
        return "\n".join(lines) + "\n"


def _ablate_unit(args):
    base, classifier, seed, train, validation, test, combos, lambdas, alphas = args
    support = build_support(train)
    cfg = dataclasses.replace(base, classifier=classifier, seed=seed)
    groups: dict = {}
    for name in combos:
        letters = parse_letters(name)
        groups.setdefault((("L" in letters), ("E" in letters)), []).append((name, strategy_for(letters)))
    scores, selections, errors = {}, [], []
    for (use_l1, early), cells in groups.items():
        strategies = sorted({s for _, s in cells})
        if classifier == "crf":
            strategies = [s for s in strategies if s != "sample-gfm"]
        if classifier == "lsf":
            strategies = ["support-gfm"]
        # CRF is L2 only, so the L1 letter leaves its grid unchanged
        grid_alphas = list(alphas) if use_l1 and classifier != "crf" else [0.0]
        best = {s: (-math.inf, None, None) for s in strategies}
        for lam in lambdas:
            for alpha in grid_alphas:
                c = dataclasses.replace(cfg, lam=float(lam), alpha=float(alpha), early_stop=early)
                try:
                    scorers = {s: make_scorer(c, validation, support, s) for s in strategies}
                    traj = _trajectory(make_trainer(c, train, support), scorers, c.stop_config() if early else None)
                except Exception as exc:
                    errors.append({"classifier": classifier, "seed": seed, "lambda": lam, "alpha": alpha,
                                   "error": f"{type(exc).__name__}: {exc}"})
                    continue
                for s, (score, model, it) in traj.items():
                    if score > best[s][0]:
                        best[s] = (score, model, {"lambda": float(lam), "alpha": float(alpha), "iteration": it})
        for name, strategy in cells:
            s_key = "support-gfm" if classifier == "lsf" else strategy
            if s_key not in best or best[s_key][1] is None:
                scores[name] = None
                errors.append({"classifier": classifier, "seed": seed, "cell": name,
                               "error": f"strategy {strategy} unavailable for {classifier}"})
                continue
            val_score, model, chosen = best[s_key]
            c = dataclasses.replace(cfg, lam=chosen["lambda"], alpha=chosen["alpha"])
            try:
                test_f1 = mean_f1(test.Y, predict_matrix(c, model, test.X, support, s_key))
            except UnsupportedOperation as exc:
                scores[name] = None
                errors.append({"classifier": classifier, "seed": seed, "cell": name, "error": str(exc)})
                continue
            scores[name] = float(test_f1)
            selections.append({"classifier": classifier, "seed": seed, "cell": name, "strategy": s_key,
                               "validation_f1": val_score, **chosen})
    return classifier, seed, scores, selections, errors


def ablation_splits(dataset: MultiLabelDataset, seed: int, test_fraction: float, validation_fraction: float):
    rest, test = split_train_validation(dataset, test_fraction, seed)
    train, validation = split_train_validation(rest, validation_fraction, seed)
    return train, validation, test


def ablate(base: RunConfig, datasets, classifiers=("br", "pcc", "cbm", "crf"), combos=DEFAULT_COMBOS,
           lambdas=(1e-4, 1e-3, 1e-2), alphas=(0.5, 0.9), test_fraction: float = 0.2, workers: int = 1) -> AblationReport:
    """Run the letter ablation.

    ``datasets`` maps each seed to a dataset; a single dataset is reused for
    every seed in ``range(3)`` with seed-dependent splits.
    """
    if isinstance(datasets, MultiLabelDataset):
        datasets = {s: datasets for s in range(3)}
    combos = [combo_name(parse_letters(c)) for c in combos]
    for k in classifiers:
        if k not in CLASSIFIERS:
            raise ConfigError(f"unknown classifier {k!r}")
    jobs = []
    for seed, ds in datasets.items():
        train, validation, test = ablation_splits(ds, seed, test_fraction, base.validation_fraction)
        for k in classifiers:
            jobs.append((base, k, seed, train, validation, test, combos, lambdas, alphas))
    scores = {c: {k: [] for k in classifiers} for c in combos}
    selections, errors = [], []
    for k, seed, unit_scores, unit_sel, unit_err in _map(_ablate_unit, jobs, workers):
        for c in combos:
            scores[c][k].append(unit_scores.get(c))
        selections += unit_sel
        errors += unit_err
    return AblationReport(combos, list(classifiers), list(datasets), scores, selections, errors)
