"""Minibatch training (Adam + step decay + spectral normalisation) and prediction."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .nnet import (
    Ablation,
    ModelState,
    TrainingError,
    backward,
    forward,
    init_model,
    loss,
    spectral_normalize,
)
from .numerics import Rng, entropy
from .simplex_dist import efd_mean, efd_var
from .uncertainty import UncertaintyReport, report_batch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    max_epochs: int = 50
    lr: float = 1e-3
    step_size: int = 20
    gamma: float = 0.1
    batch_size: int = 64
    eps: float = 0.1
    seed: int = 0
    early_stop_patience: int = 20
    ablation: Ablation = field(default_factory=Ablation)
    hidden: int = 32
    extractor_depth: int = 2
    head_layers: int = 1
    head_hidden: int = 128
    activation: str = "tanh"

    def __post_init__(self):
        for name in ("max_epochs", "step_size", "batch_size", "early_stop_patience",
                     "hidden", "extractor_depth", "head_layers", "head_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")

    def lr_at(self, epoch: int) -> float:
        """Step-decayed learning rate for a 0-based epoch."""
        return self.lr * self.gamma ** (epoch // self.step_size)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    @classmethod
    def zeros_like(cls, model: ModelState) -> "AdamState":
        ps = model.parameters()
        return cls([np.zeros_like(p) for p in ps], [np.zeros_like(p) for p in ps])


def adam_step(model: ModelState, grads: list[np.ndarray], state: AdamState, lr: float):
    """Bias-corrected Adam; updates ``model`` and ``state`` in place and returns both."""
    params = model.parameters()
    if len(grads) != len(params):
        raise ValueError("gradient list does not match model parameters")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    names = model.parameter_names()
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {names[i]}")
        m = state.m[i]
        v = state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        with np.errstate(invalid="ignore", over="ignore"):
            step = lr * (m / c1) / (np.sqrt(v / c2) + state.eps_adam)
        if not np.all(np.isfinite(step)):
            raise TrainingError(f"non-finite Adam update for {names[i]}")
        p -= step
    return model, state


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float


class History(list):
    """Per-epoch records; ``stopped_early`` is set when patience ran out."""

    stopped_early: bool = False
    best_epoch: int = -1

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = [f.name for f in fields(EpochRecord)]
        w.writerow(cols)
        for rec in self:
            w.writerow([repr(getattr(rec, c)) for c in cols])
        return buf.getvalue()


def _evaluate(model: ModelState, X: np.ndarray, y: np.ndarray, eps: float, chunk: int = 4096):
    total, correct = 0.0, 0
    for i in range(0, len(y), chunk):
        cp = forward(model, X[i:i + chunk])
        total += float(loss(cp, y[i:i + chunk], eps, model.ablation).sum())
        correct += int(np.sum(np.argmax(efd_mean(cp), axis=1) == y[i:i + chunk]))
    return total / len(y), correct / len(y)


def build_model(cfg: TrainConfig, D: int, K: int) -> ModelState:
    m = init_model(D, K, hidden=cfg.hidden, extractor_depth=cfg.extractor_depth,
                   head_layers=cfg.head_layers, head_hidden=cfg.head_hidden,
                   activation=cfg.activation, rng=Rng(cfg.seed).child("init"),
                   ablation=cfg.ablation)
    if cfg.ablation.fix_tau_shared:
        # EDL-like start: zero tau logits, so every advocate begins at tau = 1
        m.head_tau[-1].weight[...] = 0.0
        m.head_tau[-1].bias[...] = 0.0
    return spectral_normalize(m)


def train(cfg: TrainConfig, train_set, val_set, model: ModelState | None = None):
    """Train a model; returns ``(best-validation ModelState, History)``.

    ``train_set``/``val_set`` are :class:`~modex.data.LabeledDataset` objects
    (anything with ``features``, ``labels`` and ``n_classes``).
    """
    X, y = np.asarray(train_set.features, float), np.asarray(train_set.labels)
    Xv, yv = np.asarray(val_set.features, float), np.asarray(val_set.labels)
    if len(y) == 0 or len(yv) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if X.shape[1] != Xv.shape[1] or train_set.n_classes != val_set.n_classes:
        raise ValueError("training and validation sets disagree on D or K")
    K = train_set.n_classes
    if model is None:
        model = build_model(cfg, X.shape[1], K)
    adam = AdamState.zeros_like(model)
    shuffle = Rng(cfg.seed).child("shuffle")

    history = History()
    best, best_loss, since_best = model.copy(), np.inf, 0
    for epoch in range(cfg.max_epochs):
        lr = cfg.lr_at(epoch)
        order = shuffle.permutation(len(y))
        for step, start in enumerate(range(0, len(y), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            try:
                _, grads = backward(model, X[idx], y[idx], cfg.eps)
                adam_step(model, grads, adam, lr)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch} step {step}: {exc}") from exc
            spectral_normalize(model)
        tr_loss, tr_acc = _evaluate(model, X, y, cfg.eps)
        va_loss, va_acc = _evaluate(model, Xv, yv, cfg.eps)
        if not (np.isfinite(tr_loss) and np.isfinite(va_loss)):
            raise TrainingError(f"epoch {epoch}: loss diverged")
        history.append(EpochRecord(epoch, tr_loss, tr_acc, va_loss, va_acc, lr))
        log.debug("epoch %d train %.5f val %.5f acc %.4f", epoch, tr_loss, va_loss, va_acc)
        if va_loss < best_loss:
            best, best_loss, since_best = model.copy(), va_loss, 0
            history.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience and epoch < cfg.max_epochs - 1:
                history.stopped_early = True
                break
    return best, history


def predict_batch(model: ModelState, xs, chunk: int = 4096) -> list[UncertaintyReport]:
    X = np.asarray(xs, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.D:
        raise ValueError(f"inputs have shape {X.shape}, model expects (N, {model.D})")
    out: list[UncertaintyReport] = []
    for i in range(0, X.shape[0], chunk):
        out += report_batch(forward(model, X[i:i + chunk]))
    return out


def predict_arrays(model: ModelState, xs, chunk: int = 4096):
    """Vectorised variant of :func:`predict_batch`: ``(classes, mean, au, eu)``."""
    X = np.asarray(xs, dtype=np.float64)
    cls, means, au, eu = [], [], [], []
    for i in range(0, X.shape[0], chunk):
        cp = forward(model, X[i:i + chunk])
        mu = efd_mean(cp)
        means.append(mu)
        cls.append(np.argmax(mu, axis=1))
        au.append(entropy(mu))
        eu.append(efd_var(cp).sum(axis=1))
    return (np.concatenate(cls), np.concatenate(means), np.concatenate(au),
            np.concatenate(eu))
