"""Central finite differences against the hand-written backward pass."""

import numpy as np

from modex.nnet import _forward, loss
from modex.numerics import Rng

# Relative error is |analytic - numeric| / max(|analytic|, |numeric|, FLOOR).
# Below FLOOR the comparison is effectively absolute: central differences in
# float64 carry ~1e-10 absolute noise, which is not a gradient bug.
FLOOR = 1e-4


def objective(m, X, y, eps):
    cp, _ = _forward(m, X)
    return float(loss(cp, y, eps, m.ablation).mean())


def max_relative_error(m, X, y, eps, grads, n_coords=100, h=1e-5, seed=0):
    rng = Rng(seed).child("gradcheck")
    params = m.parameters()
    sizes = np.array([p.size for p in params])
    flat = rng.choice(sizes.sum(), size=min(n_coords, sizes.sum()), replace=False)
    bounds = np.cumsum(sizes)
    worst = 0.0
    for f in flat:
        i = int(np.searchsorted(bounds, f, side="right"))
        j = int(f - (bounds[i] - sizes[i]))
        p = params[i].reshape(-1)
        old = p[j]
        p[j] = old + h
        up = objective(m, X, y, eps)
        p[j] = old - h
        down = objective(m, X, y, eps)
        p[j] = old
        num = (up - down) / (2 * h)
        ana = grads[i].reshape(-1)[j]
        worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), FLOOR))
    return worst
