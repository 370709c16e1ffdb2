"""Special functions, random streams and small linear-algebra helpers.

Everything here works in float64.  Random draws always go through an
explicit :class:`Rng`; nothing touches numpy's global state.
"""

from __future__ import annotations

import math
import zlib
from typing import NamedTuple

import numpy as np


class Rng:
    """Seeded Philox stream that can be split into labelled substreams.

    ``Rng(7).child("data")`` always yields the same stream, independent of
    how many draws were taken from the parent.  Unknown attributes are
    forwarded to the underlying :class:`numpy.random.Generator`.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.gen = np.random.Generator(np.random.Philox(seq))

    def child(self, label: str) -> "Rng":
        return Rng(self.seed, self.path + (zlib.crc32(label.encode("utf-8")),))

    def __getattr__(self, name):
        return getattr(self.gen, name)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"


def as_rng(rng: "Rng | int | None") -> Rng:
    if isinstance(rng, Rng):
        return rng
    return Rng(0 if rng is None else int(rng))


def log_gamma(x: float) -> float:
    """ln Gamma(x) for finite x > 0."""
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"log_gamma needs a finite positive argument, got {x}")
    return math.lgamma(x)


def sample_gamma(shape, rng: Rng, size=None) -> np.ndarray | float:
    """Unit-scale Gamma draws via Marsaglia & Tsang's squeeze method.

    ``shape`` may be a scalar or an array; ``size`` broadcasts it.  Shapes
    below one are drawn at ``shape + 1`` and boosted by ``U**(1/shape)``.
    A scalar shape with ``size=None`` returns a Python float.
    """
    scalar = np.ndim(shape) == 0 and size is None
    a = np.asarray(shape, dtype=np.float64)
    if not np.all(np.isfinite(a)) or np.any(a <= 0.0):
        raise ValueError("gamma shape must be finite and > 0")
    a = np.array(np.broadcast_to(a, size if size is not None else a.shape), dtype=np.float64)
    flat = a.reshape(-1)
    boost = flat < 1.0
    d = np.where(boost, flat + 1.0, flat) - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)

    out = np.empty_like(flat)
    pending = np.arange(flat.size)
    while pending.size:
        dp, cp = d[pending], c[pending]
        x = rng.standard_normal(pending.size)
        v = 1.0 + cp * x
        u = rng.random(pending.size)
        ok = v > 0.0
        v = np.where(ok, v, 1.0) ** 3
        x2 = x * x
        accept = ok & (u < 1.0 - 0.0331 * x2 * x2)
        # logs only for the few draws the squeeze does not settle
        slow = np.flatnonzero(ok & ~accept)
        with np.errstate(divide="ignore"):
            vs = v[slow]
            accept[slow] = np.log(u[slow]) < 0.5 * x2[slow] + dp[slow] * (1.0 - vs + np.log(vs))
        out[pending[accept]] = dp[accept] * v[accept]
        pending = pending[~accept]

    if boost.any():
        idx = np.flatnonzero(boost)
        u = rng.random(idx.size)
        with np.errstate(divide="ignore"):
            out[idx] = np.exp(np.log(out[idx]) + np.log(u) / flat[idx])

    out = out.reshape(a.shape)
    return float(out) if scalar else out


def softmax(logits) -> np.ndarray:
    """Softmax over the last axis with max-subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[-1] == 0:
        raise ValueError("log_softmax of an empty vector")
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def entropy(p) -> np.ndarray | float:
    """Shannon entropy in nats over the last axis, with 0 ln 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    safe = np.where(p > 0.0, p, 1.0)
    h = -np.sum(np.where(p > 0.0, p * np.log(safe), 0.0), axis=-1)
    return float(h) if h.ndim == 0 else h


class SpectralEstimate(NamedTuple):
    sigma: float
    u: np.ndarray
    v: np.ndarray
    degenerate: bool


def spectral_sigma(W, iters: int = 100, rng: Rng | None = None,
                   u: np.ndarray | None = None) -> SpectralEstimate:
    """Largest singular value of ``W`` by power iteration.

    Pass the ``u`` from a previous call to warm-start.  A zero matrix gives
    ``sigma=0`` with ``degenerate=True`` instead of raising.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError("spectral_sigma expects a 2-D matrix")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if not np.all(np.isfinite(W)):
        raise ValueError("spectral_sigma needs a finite matrix")
    rows, cols = W.shape
    if not np.any(W):
        return SpectralEstimate(0.0, np.zeros(rows), np.zeros(cols), True)
    # iterate on a unit-scale copy so huge weights cannot overflow
    scale = float(np.max(np.abs(W)))
    W = W / scale
    if u is None or not np.any(u):
        u = as_rng(rng).standard_normal(rows)
    u = np.asarray(u, dtype=np.float64) / np.linalg.norm(u)
    v = np.zeros(cols)
    for _ in range(iters):
        v = W.T @ u
        nv = np.linalg.norm(v)
        if nv == 0.0:
            # u landed in the left null space; restart from the row space
            v = W.T @ np.ones(rows)
            nv = np.linalg.norm(v)
        v /= nv
        u = W @ v
        u /= np.linalg.norm(u)
    return SpectralEstimate(float(u @ W @ v) * scale, u, v, False)
