"""Aleatoric and epistemic uncertainty of a courtroom prediction.

AU is the entropy (nats) of the predictive mean.  EU is the trace of the
covariance of the class-probability vector, which splits exactly into an
inter-expert part (spread of the advocates' means) and an intra-expert part
(average within-advocate Dirichlet variance).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .numerics import entropy
from .simplex_dist import (
    CourtroomParams,
    DirichletDist,
    dir_var,
    efd_mean,
    efd_var,
    expert_alphas,
    mixture_repr,
)


@dataclass(frozen=True)
class UncertaintyReport:
    predicted_class: int
    mean: np.ndarray
    au: float
    eu: float
    eu_inter: float
    eu_intra: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean"] = [float(v) for v in self.mean]
        return d


def aleatoric(cp: CourtroomParams):
    return entropy(efd_mean(cp))


def epistemic(cp: CourtroomParams):
    eu = efd_var(cp).sum(axis=-1)
    return float(eu) if eu.ndim == 0 else eu


def epistemic_decompose(cp: CourtroomParams):
    """Return ``(eu_inter, eu_intra)`` built from the advocates' Dirichlets."""
    mix = mixture_repr(cp)
    w = mix.weights
    centre = mix.aggregate()
    spread = np.sum((mix.expert_means - centre[..., None, :]) ** 2, axis=-1)
    inter = np.sum(w * spread, axis=-1)
    within = dir_var(DirichletDist(expert_alphas(cp))).sum(axis=-1)
    intra = np.sum(w * within, axis=-1)
    if inter.ndim == 0:
        return float(inter), float(intra)
    return inter, intra


def inter_pairwise(cp: CourtroomParams):
    """Inter-expert term as half the omega-weighted pairwise squared distance."""
    mix = mixture_repr(cp)
    mu = mix.expert_means
    d2 = np.sum((mu[..., :, None, :] - mu[..., None, :, :]) ** 2, axis=-1)
    w = mix.weights
    out = 0.5 * np.einsum("...k,...kj,...j->...", w, d2, w)
    return float(out) if out.ndim == 0 else out


def _argmax_lowest(mean: np.ndarray) -> np.ndarray:
    # np.argmax already returns the first maximal index
    return np.argmax(mean, axis=-1)


def report(cp: CourtroomParams) -> UncertaintyReport:
    if cp.batch_shape:
        raise ValueError("report takes unbatched parameters; use report_batch")
    return report_batch(CourtroomParams(cp.alpha[None], cp.omega[None], cp.tau[None]))[0]


def report_batch(cp: CourtroomParams) -> list[UncertaintyReport]:
    """One report per row of a ``(N, K)`` parameter batch."""
    if len(cp.batch_shape) != 1:
        raise ValueError("report_batch expects parameters with shape (N, K)")
    mean = efd_mean(cp)
    au = entropy(mean)
    eu = efd_var(cp).sum(axis=-1)
    inter, intra = epistemic_decompose(cp)
    cls = _argmax_lowest(mean)
    return [
        UncertaintyReport(int(cls[i]), mean[i], float(au[i]), float(eu[i]),
                          float(inter[i]), float(intra[i]))
        for i in range(mean.shape[0])
    ]
