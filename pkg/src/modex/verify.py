"""Randomised identity suite for the courtroom distribution.

Every check compares two independent routes to the same quantity.  The
cheap algebraic checks run on every trial; the Monte-Carlo checks draw
``mc_draws`` samples and run on every ``mc_every``-th trial only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng
from .simplex_dist import (
    CourtroomParams,
    DirichletDist,
    dir_mean,
    dir_var,
    efd_mean,
    efd_sample_basis,
    efd_sample_mixture,
    efd_var,
    edl_softmax_repr,
    mixture_repr,
    reduction_params,
)
from .uncertainty import epistemic_decompose, inter_pairwise

CHECKS = (
    "dirichlet-reduction",
    "fd-reduction",
    "mixture-aggregation",
    "softmax-reconstruction",
    "variance-decomposition",
    "pairwise-inter",
    "dual-sampling",
    "mc-moments",
)
K_CHOICES = (2, 3, 5, 10)


def random_params(rng: Rng, K: int | None = None) -> CourtroomParams:
    """alpha in (0.1, 50) and tau in (0.01, 50), both log-uniform; omega ~ Dir(1)."""
    if K is None:
        K = int(rng.choice(K_CHOICES))
    alpha = np.exp(rng.uniform(np.log(0.1), np.log(50.0), K))
    tau = np.exp(rng.uniform(np.log(0.01), np.log(50.0), K))
    omega = rng.dirichlet(np.ones(K))
    return CourtroomParams(alpha, omega, tau)


def fd_moments(cp: CourtroomParams):
    """Mean and variance of a flexible Dirichlet with one shared tau.

    Computed directly from the normalised Gamma basis with a common
    ``U ~ Gamma(tau)``: given the selected class, the vector is Dirichlet.
    """
    a, w = cp.alpha, cp.omega
    t = float(cp.tau[0])
    S = a.sum() + t
    mean = (a + t * w) / S
    second = ((1.0 - w) * a * (a + 1.0) + w * (a + t) * (a + t + 1.0)) / (S * (S + 1.0))
    return mean, second - mean * mean


def total_variance(cp: CourtroomParams) -> np.ndarray:
    """``E[Var | L] + Var(E | L)`` over the advocate index ``L``."""
    mix = mixture_repr(cp)
    alphas = np.stack([cp.alpha + cp.tau[k] * np.eye(cp.K)[k] for k in range(cp.K)])
    within = dir_var(DirichletDist(alphas))
    centre = mix.weights @ mix.expert_means
    between = mix.weights @ (mix.expert_means - centre) ** 2
    return mix.weights @ within + between


def _maxdiff(x, y) -> float:
    return float(np.max(np.abs(np.asarray(x, float) - np.asarray(y, float))))


def _z_moments(a: np.ndarray, b: np.ndarray) -> float:
    """Largest |z| over coordinates for the first two raw moments of two samples."""
    z = 0.0
    for pa, pb in ((a, b), (a * a, b * b)):
        se = np.sqrt(pa.var(axis=0) / len(pa) + pb.var(axis=0) / len(pb))
        z = max(z, float(np.max(np.abs(pa.mean(axis=0) - pb.mean(axis=0)) / se)))
    return z


def _z_closed_form(x: np.ndarray, mean: np.ndarray, var: np.ndarray) -> float:
    n = len(x)
    zm = np.abs(x.mean(axis=0) - mean) / np.sqrt(x.var(axis=0) / n)
    dev = (x - mean) ** 2
    zv = np.abs(dev.mean(axis=0) - var) / np.sqrt(dev.var(axis=0) / n)
    return float(max(zm.max(), zv.max()))


@dataclass
class Tolerances:
    exact: float = 1e-12
    variance: float = 1e-10
    z: float = 4.0


def check_params(cp: CourtroomParams, tol: Tolerances | None = None,
                 rng: Rng | None = None, mc_draws: int = 0) -> dict[str, float]:
    """Return ``{check name: error}``; errors are abs. differences or z-scores."""
    tol = tol or Tolerances()
    mu = efd_mean(cp)
    var = efd_var(cp)
    out = {}

    red = reduction_params("dirichlet", cp)
    d = DirichletDist(cp.alpha)
    out["dirichlet-reduction"] = max(_maxdiff(efd_mean(red), dir_mean(d)),
                                _maxdiff(efd_var(red), dir_var(d)))
    fd = reduction_params("fd", cp)
    fm, fv = fd_moments(fd)
    out["fd-reduction"] = max(_maxdiff(efd_mean(fd), fm), _maxdiff(efd_var(fd), fv))
    out["mixture-aggregation"] = _maxdiff(mixture_repr(cp).aggregate(), mu)
    out["softmax-reconstruction"] = _maxdiff(edl_softmax_repr(cp).reconstruct(), mu)
    inter, intra = epistemic_decompose(cp)
    out["variance-decomposition"] = max(_maxdiff(total_variance(cp), var),
                                     abs(inter + intra - var.sum()))
    out["pairwise-inter"] = abs(inter_pairwise(cp) - inter)

    if mc_draws:
        rng = rng or Rng(0)
        xb = efd_sample_basis(cp, rng.child("basis"), mc_draws)
        xm = efd_sample_mixture(cp, rng.child("mixture"), mc_draws)
        out["dual-sampling"] = _z_moments(xb, xm)
        out["mc-moments"] = _z_closed_form(xb, mu, var)
    return out


def limit_for(name: str, tol: Tolerances) -> float:
    if name in ("dual-sampling", "mc-moments"):
        return tol.z
    if name in ("variance-decomposition", "pairwise-inter"):
        return tol.variance
    return tol.exact


@dataclass
class VerifyResult:
    trials: int
    worst: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def failed_checks(self) -> list[str]:
        return sorted({f["check"] for f in self.failures}, key=CHECKS.index)

    def table(self, tol: Tolerances | None = None) -> str:
        tol = tol or Tolerances()
        bad = set(self.failed_checks())
        lines = [f"{'check':<22}{'runs':>6}{'worst':>13}{'limit':>10}  status"]
        for name in CHECKS:
            n = self.counts.get(name, 0)
            w = self.worst.get(name, float("nan"))
            status = "skip" if n == 0 else ("FAIL" if name in bad else "pass")
            lines.append(f"{name:<22}{n:>6}{w:>13.3e}{limit_for(name, tol):>10.0e}  {status}")
        return "\n".join(lines)


def run_suite(trials: int, seed: int = 0, tol: Tolerances | None = None,
              mc_draws: int = 10**6, mc_every: int = 100) -> VerifyResult:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    tol = tol or Tolerances()
    root = Rng(seed).child("verify")
    res = VerifyResult(trials)
    for i in range(trials):
        trng = root.child(f"trial-{i}")
        cp = random_params(trng.child("params"))
        draws = mc_draws if mc_draws and i % mc_every == 0 else 0
        errs = check_params(cp, tol, trng.child("mc"), draws)
        for name, err in errs.items():
            res.counts[name] = res.counts.get(name, 0) + 1
            res.worst[name] = max(res.worst.get(name, 0.0), err)
            if not err <= limit_for(name, tol):
                res.failures.append({
                    "trial": i, "check": name, "error": err,
                    "alpha": cp.alpha.tolist(), "omega": cp.omega.tolist(),
                    "tau": cp.tau.tolist(),
                })
    return res


def failures_json(res: VerifyResult) -> str:
    return json.dumps({"trials": res.trials, "failures": res.failures}, indent=1)
