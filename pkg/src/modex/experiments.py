"""Dataset assembly from a RunConfig, result rows, and the desk-scale studies.

Generated blobs get an independent balanced test draw (same centres,
fresh noise, seed + 1000) while imbalance and ambiguity only touch the
training pool.  CSV data uses the standard held-out split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .data import (
    LabeledDataset,
    add_label_ambiguity,
    apply_imbalance,
    gen_blobs,
    gen_ood,
    load_csv,
    split,
    standard_splits,
)
from .eval import accuracy, misclassification_task, ood_task, shift_task
from .nnet import Ablation, ModelState
from .numerics import Rng
from .trainer import TrainConfig, predict_arrays, train

log = logging.getLogger(__name__)

TEST_SEED_OFFSET = 1000
RESULT_COLUMNS = ("task", "dataset", "seed", "method", "severity", "auroc", "aupr",
                  "n_pos", "n_neg", "accuracy")


def build_datasets(cfg: RunConfig):
    """Return ``(train, val, test)`` for the configured dataset."""
    if cfg.dataset == "csv":
        return standard_splits(load_csv(cfg.csv_path), cfg.seed)
    pool = gen_blobs(cfg.n_classes, cfg.per_class, cfg.dim, cfg.spread, cfg.seed, cfg.scale)
    if cfg.imbalance_rho < 1.0:
        pool = apply_imbalance(pool, cfg.imbalance_rho, cfg.seed)
    if cfg.ambiguity_fraction > 0 and cfg.ambiguity_pairs:
        pool = add_label_ambiguity(pool, cfg.ambiguity_fraction, cfg.ambiguity_pairs, cfg.seed)
    train_set, val_set = split(pool, 0.95, cfg.seed)
    test = gen_blobs(cfg.n_classes, cfg.test_per_class, cfg.dim, cfg.spread,
                     cfg.seed + TEST_SEED_OFFSET, cfg.scale)
    return train_set, val_set, test


def dataset_name(cfg: RunConfig) -> str:
    if cfg.dataset == "csv":
        return cfg.csv_path.rsplit("/", 1)[-1]
    name = f"blobs-k{cfg.n_classes}-d{cfg.dim}"
    if cfg.imbalance_rho < 1.0:
        name += f"-lt{cfg.imbalance_rho:g}"
    return name


def _row(task, cfg, severity=None, det=None, acc=None) -> dict:
    # metrics are stored on the 0-100 scale
    return {
        "task": task, "dataset": dataset_name(cfg), "seed": cfg.seed,
        "method": cfg.method_name, "severity": "" if severity is None else severity,
        "auroc": "" if det is None else 100.0 * det.auroc,
        "aupr": "" if det is None else 100.0 * det.aupr,
        "n_pos": "" if det is None else det.n_pos,
        "n_neg": "" if det is None else det.n_neg,
        "accuracy": "" if acc is None else 100.0 * acc,
    }


def evaluate(cfg: RunConfig, model: ModelState, test: LabeledDataset) -> list[dict]:
    rows = []
    for task in cfg.tasks:
        if task == "accuracy":
            rows.append(_row(task, cfg, acc=accuracy(model, test)))
        elif task == "misclassification":
            try:
                rows.append(_row(task, cfg, det=misclassification_task(model, test)))
            except ValueError as exc:
                # a perfect (or hopeless) classifier leaves one class empty
                log.warning("skipping misclassification task: %s", exc)
        elif task == "ood":
            ood = gen_ood(test, cfg.ood_offset, cfg.seed)
            rows.append(_row(task, cfg, det=ood_task(model, test, ood)))
        elif task == "shift":
            for sev, det in zip(cfg.severities, shift_task(model, test, cfg.severities, cfg.seed)):
                rows.append(_row(task, cfg, severity=sev, det=det))
    return rows


# desk-scale studies ------------------------------------------------------

LONG_TAIL = RunConfig(
    n_classes=5, dim=8, per_class=500, spread=1.0, imbalance_rho=0.01,
    ambiguity_fraction=0.3, ambiguity_pairs=((0, 4),), test_per_class=200,
    max_epochs=200, lr=3e-3, step_size=100, tasks=("accuracy", "ood"),
)
EDL_BASELINE = Ablation(fix_omega_uniform=True, fix_tau_shared=True)


@dataclass
class Comparison:
    seed: int
    accuracy: dict
    ood_auroc: dict
    models: dict


def long_tail_comparison(seed: int, base: RunConfig = LONG_TAIL) -> Comparison:
    """Train MoDEX and the ablated EDL-style baseline on the same long-tailed data."""
    cfg = base.with_overrides(seed=seed)
    train_set, val_set, test = build_datasets(cfg)
    ood = gen_ood(test, cfg.ood_offset, seed)
    acc, auc, models = {}, {}, {}
    for name, ab in (("modex", Ablation()), ("edl-baseline", EDL_BASELINE)):
        tc = cfg.train_config()
        tc.ablation = ab
        model, _ = train(tc, train_set, val_set)
        acc[name] = accuracy(model, test)
        auc[name] = ood_task(model, test, ood).auroc
        models[name] = model
    return Comparison(seed, acc, auc, models)


CLEAN_BLOBS = RunConfig(n_classes=5, dim=8, per_class=400, spread=1.0,
                        max_epochs=100, lr=3e-3, step_size=50)


def shift_curve(seed: int, severities=(1, 3, 5), base: RunConfig = CLEAN_BLOBS) -> list[float]:
    """Shift-detection AUPR per severity for a model trained on clean blobs."""
    cfg = base.with_overrides(seed=seed)
    train_set, val_set, test = build_datasets(cfg)
    model, _ = train(cfg.train_config(), train_set, val_set)
    return [r.aupr for r in shift_task(model, test, severities, seed)]


def nested_eu(seed: int, sizes=(100, 500, 2000, 10000), base: RunConfig = CLEAN_BLOBS,
              val_per_class: int = 100) -> list[float]:
    """Mean test EU after training on nested prefixes of one shuffled pool."""
    sizes = sorted(sizes)
    K = base.n_classes
    per_class = -(-sizes[-1] // K)
    pool = gen_blobs(K, per_class, base.dim, base.spread, seed, base.scale)
    order = Rng(seed).child("nested").permutation(len(pool))
    val = gen_blobs(K, val_per_class, base.dim, base.spread, seed + 500, base.scale)
    test = gen_blobs(K, base.test_per_class, base.dim, base.spread,
                     seed + TEST_SEED_OFFSET, base.scale)
    tc: TrainConfig = base.with_overrides(seed=seed).train_config()
    out = []
    for n in sizes:
        model, _ = train(tc, pool.subset(np.sort(order[:n])), val)
        out.append(float(predict_arrays(model, test.features)[3].mean()))
    return out
