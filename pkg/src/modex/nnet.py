"""Three-headed MLP producing courtroom parameters, its loss and gradients.

A feature extractor feeds three heads.  Their logits become

    alpha = exp(head_alpha(z)),  omega = softmax(head_omega(z)),
    tau   = exp(head_tau(z))

The composite loss is the squared error of the predictive mean, a Brier
penalty on ``omega`` and ``KL(softmax(tau) || smoothed target)``.
Gradients are derived by hand and checked against finite differences in
the test-suite.
"""

from __future__ import annotations

import copy
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .numerics import Rng, as_rng, log_softmax, softmax, spectral_sigma
from .simplex_dist import CourtroomParams

log = logging.getLogger(__name__)

LOGIT_CLIP = 30.0
GROUPS = ("extractor", "head_alpha", "head_omega", "head_tau")
NORMALISED_GROUPS = ("extractor", "head_alpha")

CHECKPOINT_MAGIC = b"MODEXCKP"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """Non-finite loss, activation or gradient during training."""


def _act(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(pre)
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "identity":
        return pre
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - out * out
    if name == "relu":
        return (pre > 0.0).astype(np.float64)
    return np.ones_like(pre)


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "tanh"


@dataclass
class Ablation:
    fix_omega_uniform: bool = False
    fix_tau_shared: bool = False
    drop_omega_reg: bool = False
    drop_tau_reg: bool = False


@dataclass
class ModelState:
    extractor: list[Layer]
    head_alpha: list[Layer]
    head_omega: list[Layer]
    head_tau: list[Layer]
    sn_state: dict[str, np.ndarray] = field(default_factory=dict)
    ablation: Ablation = field(default_factory=Ablation)

    @property
    def D(self) -> int:
        return self.extractor[0].weight.shape[1]

    @property
    def H(self) -> int:
        return self.extractor[-1].weight.shape[0]

    @property
    def K(self) -> int:
        return self.head_alpha[-1].weight.shape[0]

    def groups(self):
        return [(g, getattr(self, g)) for g in GROUPS]

    def parameters(self) -> list[np.ndarray]:
        """Weights and biases in a fixed order; gradients use the same order."""
        out = []
        for _, layers in self.groups():
            for layer in layers:
                out += [layer.weight, layer.bias]
        return out

    def parameter_names(self) -> list[str]:
        out = []
        for g, layers in self.groups():
            for i, _ in enumerate(layers):
                out += [f"{g}.{i}.weight", f"{g}.{i}.bias"]
        return out

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)


def _dense(rng: Rng, n_in: int, n_out: int, activation: str) -> Layer:
    bound = 1.0 / np.sqrt(n_in)
    return Layer(rng.uniform(-bound, bound, size=(n_out, n_in)),
                 rng.uniform(-bound, bound, size=n_out), activation)


def init_model(D: int, K: int, hidden: int = 32, extractor_depth: int = 2,
               head_layers: int = 1, head_hidden: int = 128,
               activation: str = "tanh", rng: Rng | int | None = 0,
               ablation: Ablation | None = None) -> ModelState:
    """Fan-in uniform initialisation.  Heads end in a linear layer."""
    if extractor_depth < 1 or head_layers < 1:
        raise ValueError("need at least one extractor layer and one head layer")
    rng = as_rng(rng)
    wrng = rng.child("weights")
    extractor = []
    n_in = D
    for _ in range(extractor_depth):
        extractor.append(_dense(wrng, n_in, hidden, activation))
        n_in = hidden

    def head():
        layers, n = [], hidden
        for _ in range(head_layers - 1):
            layers.append(_dense(wrng, n, head_hidden, activation))
            n = head_hidden
        layers.append(_dense(wrng, n, K, "identity"))
        return layers

    m = ModelState(extractor, head(), head(), head(), ablation=ablation or Ablation())
    srng = rng.child("spectral")
    for g in NORMALISED_GROUPS:
        for i, layer in enumerate(getattr(m, g)):
            u = srng.standard_normal(layer.weight.shape[0])
            m.sn_state[f"{g}.{i}"] = u / np.linalg.norm(u)
    return m


def zero_model(D: int, K: int, hidden: int = 8, **kw) -> ModelState:
    """All weights and biases zero (constant network)."""
    m = init_model(D, K, hidden=hidden, **kw)
    for p in m.parameters():
        p[...] = 0.0
    return m


def _mlp(layers: list[Layer], x: np.ndarray):
    cache = []
    for layer in layers:
        pre = x @ layer.weight.T + layer.bias
        out = _act(layer.activation, pre)
        cache.append((x, pre, out))
        x = out
    return x, cache


def _mlp_back(layers: list[Layer], cache, g: np.ndarray):
    grads = []
    for layer, (x, pre, out) in zip(reversed(layers), reversed(cache)):
        g = g * _act_grad(layer.activation, pre, out)
        grads.append((g.T @ x, g.sum(axis=0)))
        g = g @ layer.weight
    grads.reverse()
    return grads, g


def _as_batch(m: ModelState, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if X.ndim != 2 or X.shape[1] != m.D:
        raise ValueError(f"input has shape {X.shape}, model expects (N, {m.D})")
    return X


def _forward(m: ModelState, X: np.ndarray):
    # overflow surfaces as non-finite logits, reported just below
    with np.errstate(over="ignore", invalid="ignore"):
        Z, cz = _mlp(m.extractor, X)
        la, ca = _mlp(m.head_alpha, Z)
        lw, cw = _mlp(m.head_omega, Z)
        lt, ct = _mlp(m.head_tau, Z)
    for name, logits in (("alpha", la), ("omega", lw), ("tau", lt)):
        if not np.all(np.isfinite(logits)):
            raise TrainingError(f"non-finite {name} logits")
    alpha = np.exp(np.clip(la, -LOGIT_CLIP, LOGIT_CLIP))
    tau_raw = np.exp(np.clip(lt, -LOGIT_CLIP, LOGIT_CLIP))
    N, K = la.shape
    if m.ablation.fix_omega_uniform:
        omega = np.full((N, K), 1.0 / K)
    else:
        omega = softmax(lw)
    if m.ablation.fix_tau_shared:
        tau = np.repeat(tau_raw.mean(axis=1, keepdims=True), K, axis=1)
    else:
        tau = tau_raw
    cache = dict(cz=cz, ca=ca, cw=cw, ct=ct, la=la, lt=lt, tau_raw=tau_raw)
    return CourtroomParams(alpha, omega, tau), cache


def forward(m: ModelState, x) -> CourtroomParams:
    """Courtroom parameters for one input vector, or a batch ``(N, D)``."""
    single = np.ndim(x) == 1
    cp, _ = _forward(m, _as_batch(m, x))
    return cp[0] if single else cp


def smoothed_target(y: int, eps: float, K: int) -> np.ndarray:
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"label smoothing must lie in [0, 1], got {eps}")
    if K < 2 or not 0 <= y < K:
        raise ValueError(f"bad class {y} for K={K}")
    t = np.full(K, eps / (K - 1))
    t[y] = 1.0 - eps
    return t


def _smoothed_batch(y: np.ndarray, eps: float, K: int) -> np.ndarray:
    t = np.full((y.size, K), eps / (K - 1))
    t[np.arange(y.size), y] = 1.0 - eps
    return t


def _labels(y, K: int) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y))
    if y.dtype.kind not in "iu" or np.any(y < 0) or np.any(y >= K):
        raise ValueError(f"labels must be integers in [0, {K})")
    return y.astype(np.int64)


def loss_terms(cp: CourtroomParams, y, eps: float):
    """Per-example ``(mse, omega_reg, tau_kl)``; scalars for a single example."""
    single = not cp.batch_shape
    alpha = np.atleast_2d(cp.alpha)
    omega = np.atleast_2d(cp.omega)
    tau = np.atleast_2d(cp.tau)
    K = alpha.shape[1]
    y = _labels(y, K)
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"label smoothing must lie in [0, 1], got {eps}")
    onehot = np.eye(K)[y]
    A = alpha.sum(axis=1, keepdims=True)
    s = A + tau
    mu = alpha * np.sum(omega / s, axis=1, keepdims=True) + tau * omega / s
    mse = np.sum((onehot - mu) ** 2, axis=1)
    oreg = np.sum((onehot - omega) ** 2, axis=1)
    target = _smoothed_batch(y, eps, K)
    ls = log_softmax(tau)
    with np.errstate(divide="ignore"):
        kl = np.sum(np.exp(ls) * (ls - np.log(target)), axis=1)
    if single:
        return float(mse[0]), float(oreg[0]), float(kl[0])
    return mse, oreg, kl


def loss(cp: CourtroomParams, y, eps: float, ablation: Ablation | None = None):
    """Composite objective; per-example array for batched parameters."""
    ab = ablation or Ablation()
    if eps == 0.0 and not ab.drop_tau_reg:
        raise ValueError("eps=0 puts zeros in the smoothed target; the tau KL term is infinite")
    mse, oreg, kl = loss_terms(cp, y, eps)
    total = mse
    if not ab.drop_omega_reg:
        total = total + oreg
    if not ab.drop_tau_reg:
        total = total + kl
    return total


def backward(m: ModelState, X, y, eps: float):
    """Mean loss over the batch and its gradient, ordered like ``m.parameters()``."""
    X = _as_batch(m, X)
    N = X.shape[0]
    if N == 0:
        raise ValueError("empty batch")
    K = m.K
    y = _labels(y, K)
    if y.size != N:
        raise ValueError("features and labels differ in length")
    ab = m.ablation
    cp, c = _forward(m, X)
    total = loss(cp, y, eps, ab)
    mean_loss = float(total.mean())
    if not np.isfinite(mean_loss):
        raise TrainingError("non-finite loss")

    alpha, omega, tau = cp.alpha, cp.omega, cp.tau
    onehot = np.eye(K)[y]
    A = cp.total
    s = A + tau
    k1 = np.sum(omega / s, axis=1, keepdims=True)
    mu = alpha * k1 + tau * omega / s

    g_mu = 2.0 * (mu - onehot) / N
    dk1_dA = -np.sum(omega / s**2, axis=1, keepdims=True)
    shared = np.sum(g_mu * (-alpha * dk1_dA + tau * omega / s**2), axis=1, keepdims=True)
    g_alpha = g_mu * k1 - shared
    ga_sum = np.sum(g_mu * alpha, axis=1, keepdims=True)
    g_omega = ga_sum / s + g_mu * tau / s
    g_tau = (-ga_sum + g_mu * A) * omega / s**2

    if not ab.drop_omega_reg:
        g_omega = g_omega + 2.0 * (omega - onehot) / N
    if not ab.drop_tau_reg:
        ls = log_softmax(tau)
        p = np.exp(ls)
        diff = ls - np.log(_smoothed_batch(y, eps, K))
        kl = np.sum(p * diff, axis=1, keepdims=True)
        g_tau = g_tau + p * (diff - kl) / N

    tau_raw = c["tau_raw"]
    if ab.fix_tau_shared:
        g_tau = np.repeat(g_tau.sum(axis=1, keepdims=True) / K, K, axis=1)
    inside_a = np.abs(c["la"]) < LOGIT_CLIP
    inside_t = np.abs(c["lt"]) < LOGIT_CLIP
    g_la = g_alpha * alpha * inside_a
    g_lt = g_tau * tau_raw * inside_t
    if ab.fix_omega_uniform:
        g_lw = np.zeros_like(g_omega)
    else:
        g_lw = omega * (g_omega - np.sum(omega * g_omega, axis=1, keepdims=True))

    ga, gz_a = _mlp_back(m.head_alpha, c["ca"], g_la)
    gw, gz_w = _mlp_back(m.head_omega, c["cw"], g_lw)
    gt, gz_t = _mlp_back(m.head_tau, c["ct"], g_lt)
    ge, _ = _mlp_back(m.extractor, c["cz"], gz_a + gz_w + gz_t)

    grads = []
    for group in (ge, ga, gw, gt):
        for dW, db in group:
            grads += [dW, db]
    for name, g in zip(m.parameter_names(), grads):
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {name}")
    return mean_loss, grads


def spectral_normalize(m: ModelState, iters: int = 1) -> ModelState:
    """Divide extractor and alpha-head weights by their spectral norm, in place.

    One warm-started power iteration per call.  The omega and tau heads are
    left alone.
    """
    for g in NORMALISED_GROUPS:
        for i, layer in enumerate(getattr(m, g)):
            key = f"{g}.{i}"
            if not np.all(np.isfinite(layer.weight)):
                raise TrainingError(f"non-finite weights in {key}")
            est = spectral_sigma(layer.weight, iters=iters, u=m.sn_state.get(key),
                                 rng=Rng(0).child(key))
            if est.degenerate:
                log.warning("spectral_normalize: %s is a zero matrix; left unchanged", key)
                continue
            layer.weight /= est.sigma
            m.sn_state[key] = est.u
    return m


# -- checkpoints -----------------------------------------------------------
#
# Layout (all integers little-endian):
#   8 bytes  magic b"MODEXCKP"
#   uint32   format version
#   uint32   header length n
#   n bytes  UTF-8 JSON header (sorted keys)
#   payload  float64 little-endian, row-major, arrays in header["arrays"] order


def save_checkpoint(m: ModelState, path) -> None:
    arrays, names = [], []
    layers = {}
    for g, ls in m.groups():
        layers[g] = [l.activation for l in ls]
        for i, l in enumerate(ls):
            names += [f"{g}.{i}.weight", f"{g}.{i}.bias"]
            arrays += [l.weight, l.bias]
    for key in sorted(m.sn_state):
        names.append(f"sn.{key}")
        arrays.append(m.sn_state[key])
    header = {
        "dims": {"D": m.D, "H": m.H, "K": m.K},
        "layers": layers,
        "ablation": asdict(m.ablation),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in zip(names, arrays)],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelState:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    version, n = struct.unpack("<II", data[8:16])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + n].decode("utf-8"))
    offset = 16 + n
    arrays = {}
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        arrays[spec["name"]] = arr.reshape(spec["shape"]).astype(np.float64)
        offset += 8 * count
    if offset != len(data):
        raise ValueError(f"{path}: trailing or missing payload bytes")
    groups = {}
    for g in GROUPS:
        groups[g] = [Layer(arrays[f"{g}.{i}.weight"], arrays[f"{g}.{i}.bias"], act)
                     for i, act in enumerate(header["layers"][g])]
    sn = {k[3:]: v for k, v in arrays.items() if k.startswith("sn.")}
    return ModelState(**groups, sn_state=sn, ablation=Ablation(**header["ablation"]))
