"""Dirichlet and courtroom (extended flexible Dirichlet) distributions.

The courtroom distribution over the simplex is the mixture

    sum_k omega_k * Dir(alpha + tau_k e_k)

so every advocate ``k`` shares the base evidence ``alpha`` and adds its own
advocacy strength ``tau_k`` to its class.  Closed-form moments work on
arrays whose last axis is the class axis, so a batch of parameters can be
evaluated in one call.  Samplers take a single parameter set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng, log_gamma, sample_gamma

SIMPLEX_TOL = 1e-9


def _positive(name: str, x) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError(f"{name} must be finite and strictly positive")
    return arr


@dataclass(frozen=True)
class DirichletDist:
    alpha: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", _positive("alpha", self.alpha))

    @property
    def K(self) -> int:
        return self.alpha.shape[-1]


@dataclass(frozen=True)
class CourtroomParams:
    """Shared evidence ``alpha``, plausibility ``omega``, advocacy ``tau``.

    Arrays may carry leading batch axes; the last axis is always the class
    axis.  ``total`` caches ``||alpha||_1`` (with a trailing length-1 axis so
    it broadcasts against the class axis).
    """

    alpha: np.ndarray
    omega: np.ndarray
    tau: np.ndarray
    total: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        alpha = _positive("alpha", self.alpha)
        tau = _positive("tau", self.tau)
        omega = np.array(self.omega, dtype=np.float64)
        if not (alpha.shape == tau.shape == omega.shape):
            raise ValueError(
                f"alpha, omega, tau shapes differ: {alpha.shape}, {omega.shape}, {tau.shape}")
        if not np.all(np.isfinite(omega)) or np.any(omega < 0.0):
            raise ValueError("omega must be finite and non-negative")
        if np.any(np.abs(omega.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
            raise ValueError("omega must sum to 1")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "total", alpha.sum(axis=-1, keepdims=True))

    @property
    def K(self) -> int:
        return self.alpha.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.alpha.shape[:-1]

    def __getitem__(self, idx) -> "CourtroomParams":
        if not self.batch_shape:
            raise TypeError("cannot index an unbatched CourtroomParams")
        return CourtroomParams(self.alpha[idx], self.omega[idx], self.tau[idx])

    def __len__(self) -> int:
        if not self.batch_shape:
            raise TypeError("unbatched CourtroomParams has no length")
        return self.batch_shape[0]


@dataclass(frozen=True)
class MixtureRepr:
    """Mixture-of-experts view: weights ``omega`` and expert means.

    ``expert_means[..., k, :]`` is the mean of ``Dir(alpha + tau_k e_k)``.
    """

    weights: np.ndarray
    expert_means: np.ndarray

    def aggregate(self) -> np.ndarray:
        return np.einsum("...k,...kj->...j", self.weights, self.expert_means)


@dataclass(frozen=True)
class EdlSoftmaxRepr:
    """Prediction as ``lambda_edl * alpha/A + lambda_sm * omega``."""

    lambda_edl: np.ndarray
    lambda_sm: np.ndarray
    p_edl: np.ndarray
    p_sm: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.lambda_edl[..., None] * self.p_edl + self.lambda_sm * self.p_sm


def dir_mean(d: DirichletDist) -> np.ndarray:
    return d.alpha / d.alpha.sum(axis=-1, keepdims=True)


def dir_var(d: DirichletDist) -> np.ndarray:
    a = d.alpha
    A = a.sum(axis=-1, keepdims=True)
    return a * (A - a) / (A * A * (A + 1.0))


def dir_logpdf(d: DirichletDist, p) -> float:
    """Dirichlet log-density w.r.t. Lebesgue measure on the first K-1 coordinates."""
    p = np.asarray(p, dtype=np.float64)
    a = d.alpha
    if a.ndim != 1:
        raise ValueError("dir_logpdf takes a single Dirichlet")
    if p.shape != a.shape:
        raise ValueError(f"point has shape {p.shape}, expected {a.shape}")
    if np.any(p <= 0.0) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError("dir_logpdf needs a point strictly inside the simplex")
    norm = log_gamma(a.sum()) - sum(log_gamma(ak) for ak in a)
    return float(norm + np.sum((a - 1.0) * np.log(p)))


def dir_sample(d: DirichletDist, rng: Rng, size: int | None = None) -> np.ndarray:
    """Normalised Gamma draws; shape ``(K,)`` or ``(size, K)``."""
    shape = d.alpha.shape if size is None else (size,) + d.alpha.shape
    g = sample_gamma(d.alpha, rng, size=shape)
    return g / g.sum(axis=-1, keepdims=True)


def expert_concentration(cp: CourtroomParams, k: int) -> DirichletDist:
    """Concentration of advocate ``k``: ``alpha + tau_k e_k``."""
    if cp.batch_shape:
        raise ValueError("expert_concentration takes unbatched parameters")
    if not 0 <= k < cp.K:
        raise IndexError(f"class index {k} out of range for K={cp.K}")
    a = cp.alpha.copy()
    a[k] += cp.tau[k]
    return DirichletDist(a)


def _kappas(cp: CourtroomParams):
    s = cp.total + cp.tau
    k1 = np.sum(cp.omega / s, axis=-1, keepdims=True)
    k2 = np.sum(cp.omega / (s * (s + 1.0)), axis=-1, keepdims=True)
    return s, k1, k2


def efd_mean(cp: CourtroomParams) -> np.ndarray:
    s, k1, _ = _kappas(cp)
    return cp.alpha * k1 + cp.tau * cp.omega / s


def efd_var(cp: CourtroomParams) -> np.ndarray:
    """Per-class variance from the closed five-term expression."""
    a, w, t = cp.alpha, cp.omega, cp.tau
    s, k1, k2 = _kappas(cp)
    return (
        a * a * (k2 - k1 * k1)
        + w * t * (2.0 * a + t + 1.0) / (s * (s + 1.0))
        + a * k2
        - (w * t / s) ** 2
        - k1 * 2.0 * a * w * t / s
    )


def efd_sample_mixture(cp: CourtroomParams, rng: Rng, size: int) -> np.ndarray:
    """Pick advocate ``L ~ Cat(omega)``, then draw from ``Dir(alpha + tau_L e_L)``."""
    if cp.batch_shape:
        raise ValueError("samplers take unbatched parameters")
    K = cp.K
    L = rng.choice(K, size=size, p=cp.omega)
    shapes = np.broadcast_to(cp.alpha, (size, K)).copy()
    rows = np.arange(size)
    shapes[rows, L] += cp.tau[L]
    g = sample_gamma(shapes, rng)
    return g / g.sum(axis=1, keepdims=True)


def efd_sample_basis(cp: CourtroomParams, rng: Rng, size: int) -> np.ndarray:
    """Normalise the basis ``Y_k = W_k + Z_k U_k``.

    ``W_k ~ Gamma(alpha_k)``, ``Z ~ Multinomial(1, omega)`` and
    ``U_k ~ Gamma(tau_k)``.  Only the ``U`` selected by ``Z`` contributes,
    so one ``U`` per draw is generated.
    """
    if cp.batch_shape:
        raise ValueError("samplers take unbatched parameters")
    K = cp.K
    W = sample_gamma(cp.alpha, rng, size=(size, K))
    Z = rng.multinomial(1, cp.omega, size=size)
    hot = Z.argmax(axis=1)
    U = sample_gamma(cp.tau[hot], rng)
    Y = W
    Y[np.arange(size), hot] += U
    return Y / Y.sum(axis=1, keepdims=True)


def expert_alphas(cp: CourtroomParams) -> np.ndarray:
    """All advocate concentrations at once, shape ``(..., K, K)``."""
    K = cp.K
    return cp.alpha[..., None, :] + cp.tau[..., :, None] * np.eye(K)


def mixture_repr(cp: CourtroomParams) -> MixtureRepr:
    if cp.batch_shape:
        means = dir_mean(DirichletDist(expert_alphas(cp)))
    else:
        means = np.stack([dir_mean(expert_concentration(cp, k)) for k in range(cp.K)])
    return MixtureRepr(weights=cp.omega.copy(), expert_means=means)


def edl_softmax_repr(cp: CourtroomParams) -> EdlSoftmaxRepr:
    A = cp.total
    s = A + cp.tau
    return EdlSoftmaxRepr(
        lambda_edl=np.sum(A * cp.omega / s, axis=-1),
        lambda_sm=cp.tau / s,
        p_edl=cp.alpha / A,
        p_sm=cp.omega.copy(),
    )


def reduction_params(kind: str, cp: CourtroomParams) -> CourtroomParams:
    """Parameters of the flexible-Dirichlet (``"fd"``) or Dirichlet special case.

    ``fd`` shares one advocacy strength (the mean of ``tau``) across classes;
    ``dirichlet`` additionally sets ``tau = 1`` and ``omega = alpha / A``.
    """
    if kind == "fd":
        if np.all(cp.tau == cp.tau[..., :1]):
            return CourtroomParams(cp.alpha, cp.omega, cp.tau)
        shared = np.broadcast_to(cp.tau.mean(axis=-1, keepdims=True), cp.tau.shape)
        return CourtroomParams(cp.alpha, cp.omega, shared)
    if kind == "dirichlet":
        return CourtroomParams(cp.alpha, cp.alpha / cp.total, np.ones_like(cp.tau))
    raise ValueError(f"unknown reduction kind {kind!r}; use 'fd' or 'dirichlet'")
