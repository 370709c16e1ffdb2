import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from modex.numerics import Rng
from strategies import params_strategy

from modex.simplex_dist import (
    CourtroomParams,
    DirichletDist,
    dir_logpdf,
    dir_mean,
    dir_sample,
    dir_var,
    edl_softmax_repr,
    efd_mean,
    efd_sample_basis,
    efd_sample_mixture,
    efd_var,
    expert_alphas,
    expert_concentration,
    mixture_repr,
    reduction_params,
)

# Frozen running-example values (alpha=(2,1), omega=(1/2,1/2), tau=(1,2)),
# re-derived below in exact arithmetic.
MEAN = (0.575, 0.425)
VAR = (0.069375, 0.069375)


def exact_moments(alpha, omega, tau):
    """Law of total variance over the advocate index, in exact fractions."""
    K = len(alpha)
    means, vars_ = [], []
    for k in range(K):
        a = [F(x) for x in alpha]
        a[k] += F(tau[k])
        A = sum(a)
        means.append([x / A for x in a])
        vars_.append([x * (A - x) / (A * A * (A + 1)) for x in a])
    w = [F(x) for x in omega]
    mu = [sum(w[k] * means[k][j] for k in range(K)) for j in range(K)]
    within = [sum(w[k] * vars_[k][j] for k in range(K)) for j in range(K)]
    between = [sum(w[k] * (means[k][j] - mu[j]) ** 2 for k in range(K)) for j in range(K)]
    return mu, [a + b for a, b in zip(within, between)]


def test_frozen_values_match_exact_oracle():
    mu, var = exact_moments([2, 1], [F(1, 2), F(1, 2)], [1, 2])
    assert mu == [F(23, 40), F(17, 40)]
    assert [float(v) for v in mu] == list(MEAN)
    assert [float(v) for v in var] == list(VAR)


def test_running_example(running):
    assert np.allclose(efd_mean(running), MEAN, atol=1e-12, rtol=0)
    assert np.allclose(efd_var(running), VAR, atol=1e-12, rtol=0)
    rep = edl_softmax_repr(running)
    assert rep.lambda_edl == pytest.approx(0.675, abs=1e-12)
    assert np.allclose(rep.lambda_sm, [0.25, 0.4], atol=1e-12)
    assert np.allclose(rep.reconstruct(), MEAN, atol=1e-12)
    mix = mixture_repr(running)
    assert np.allclose(mix.expert_means, [[0.75, 0.25], [0.4, 0.6]], atol=1e-15)
    assert np.allclose(mix.aggregate(), MEAN, atol=1e-12)


def test_total_cached(running):
    assert running.total.shape == (1,)
    assert running.total[0] == 3.0
    assert running.K == 2 and running.batch_shape == ()


@pytest.mark.parametrize("alpha,omega,tau", [
    ([0.0, 1.0], [0.5, 0.5], [1.0, 1.0]),
    ([1.0, 1.0], [0.6, 0.6], [1.0, 1.0]),
    ([1.0, 1.0], [0.5, 0.5], [1.0, -1.0]),
    ([1.0, 1.0, 1.0], [0.5, 0.5], [1.0, 1.0]),
    ([1.0, np.nan], [0.5, 0.5], [1.0, 1.0]),
    ([1.0, 1.0], [1.2, -0.2], [1.0, 1.0]),
])
def test_params_validation(alpha, omega, tau):
    with pytest.raises(ValueError):
        CourtroomParams(np.array(alpha), np.array(omega), np.array(tau))


def test_one_hot_omega_allowed():
    cp = CourtroomParams(np.ones(3), np.array([0.0, 1.0, 0.0]), np.ones(3))
    assert np.allclose(efd_mean(cp), [0.25, 0.5, 0.25])


def test_dirichlet_basics():
    d = DirichletDist(np.array([2.0, 1.0]))
    assert np.allclose(dir_mean(d), [2 / 3, 1 / 3])
    assert np.allclose(dir_var(d), [2 / 36, 2 / 36])
    # Beta(2, 1) density at 1/2 is 2 * 0.5 = 1
    assert dir_logpdf(d, [0.5, 0.5]) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        dir_logpdf(d, [1.0, 0.0])
    with pytest.raises(ValueError):
        DirichletDist(np.array([1.0, 0.0]))


@pytest.mark.parametrize("alpha", [[2.0, 1.0], [0.7, 3.0], [5.0, 5.0]])
def test_dir_logpdf_integrates_to_one(alpha):
    d = DirichletDist(np.array(alpha))
    val, _ = integrate.quad(lambda x: math.exp(dir_logpdf(d, [x, 1 - x])), 0, 1, limit=200)
    assert val == pytest.approx(1.0, abs=1e-7)


@given(st.lists(st.floats(0.1, 30), min_size=2, max_size=6), st.integers(0, 999))
def test_dir_logpdf_vs_scipy(alpha, seed):
    a = np.array(alpha)
    p = Rng(seed).dirichlet(np.ones(a.size))
    p = np.clip(p, 1e-6, None)
    p /= p.sum()
    assert dir_logpdf(DirichletDist(a), p) == pytest.approx(
        stats.dirichlet.logpdf(p, a), rel=1e-9, abs=1e-9)


def test_dir_sample_moments():
    d = DirichletDist(np.array([2.0, 1.0, 0.5]))
    x = dir_sample(d, Rng(0), size=200_000)
    se = np.sqrt(dir_var(d) / len(x))
    assert np.all(np.abs(x.mean(0) - dir_mean(d)) < 4 * se)
    assert dir_sample(d, Rng(0)).shape == (3,)


def test_expert_concentration(running):
    assert np.allclose(expert_concentration(running, 1).alpha, [2.0, 3.0])
    assert np.allclose(expert_alphas(running), [[3.0, 1.0], [2.0, 3.0]])
    with pytest.raises(IndexError):
        expert_concentration(running, 2)


# random parameter sweeps ---------------------------------------------------

@given(params_strategy())
def test_mean_routes_agree(cp):
    mu = efd_mean(cp)
    assert mu.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(mu > 0)
    assert np.allclose(mixture_repr(cp).aggregate(), mu, atol=1e-12, rtol=0)
    assert np.allclose(edl_softmax_repr(cp).reconstruct(), mu, atol=1e-12, rtol=0)


@given(params_strategy(max_k=4))
def test_variance_matches_exact_total_variance(cp):
    _, var = exact_moments(cp.alpha.tolist(), cp.omega.tolist(), cp.tau.tolist())
    assert np.allclose(efd_var(cp), [float(v) for v in var], atol=1e-10, rtol=0)
    assert np.all(efd_var(cp) >= 0)


@given(params_strategy())
def test_batched_equals_rowwise(cp):
    other = CourtroomParams(cp.alpha[::-1].copy(), cp.omega, cp.tau)
    batch = CourtroomParams(np.stack([cp.alpha, other.alpha]),
                            np.stack([cp.omega, other.omega]), np.stack([cp.tau, other.tau]))
    assert np.allclose(efd_var(batch)[1], efd_var(other), atol=1e-15)
    assert np.allclose(mixture_repr(batch).expert_means[0], mixture_repr(cp).expert_means)
    assert len(batch) == 2 and batch[0].K == cp.K


@given(params_strategy())
def test_reductions(cp):
    for kind in ("fd", "dirichlet"):
        once = reduction_params(kind, cp)
        twice = reduction_params(kind, once)
        assert np.array_equal(once.tau, twice.tau) and np.array_equal(once.omega, twice.omega)
    red = reduction_params("dirichlet", cp)
    d = DirichletDist(cp.alpha)
    assert np.allclose(efd_mean(red), dir_mean(d), atol=1e-12, rtol=0)
    assert np.allclose(efd_var(red), dir_var(d), atol=1e-12, rtol=0)


def test_reduction_examples(running):
    fd = reduction_params("fd", running)
    assert np.allclose(fd.tau, [1.5, 1.5])
    dr = reduction_params("dirichlet", CourtroomParams(np.array([2.0, 1.0]), np.array([0.5, 0.5]),
                                                       np.array([3.0, 4.0])))
    assert np.allclose(dr.omega, [2 / 3, 1 / 3]) and np.allclose(dr.tau, 1.0)
    assert np.allclose(efd_var(dr), dir_var(DirichletDist(np.array([2.0, 1.0]))))
    with pytest.raises(ValueError):
        reduction_params("edl", running)


def test_limits():
    alpha = np.array([2.0, 1.0, 3.0])
    omega = np.array([0.2, 0.5, 0.3])
    small = CourtroomParams(alpha, omega, np.full(3, 1e-9))
    assert np.allclose(efd_mean(small), alpha / alpha.sum(), atol=1e-8)
    big = CourtroomParams(alpha, omega, np.full(3, 1e9))
    assert np.allclose(efd_mean(big), omega, atol=1e-8)
    assert np.allclose(edl_softmax_repr(big).lambda_sm, 1.0, atol=1e-8)


def _z(a, b):
    return np.abs(a.mean(0) - b.mean(0)) / np.sqrt(a.var(0) / len(a) + b.var(0) / len(b))


@pytest.mark.parametrize("seed", range(4))
def test_dual_sampling(seed):
    rng = Rng(seed)
    K = int(rng.choice([2, 3, 5]))
    cp = CourtroomParams(rng.uniform(0.2, 5, K), rng.dirichlet(np.ones(K)), rng.uniform(0.1, 8, K))
    n = 200_000
    xb = efd_sample_basis(cp, rng.child("b"), n)
    xm = efd_sample_mixture(cp, rng.child("m"), n)
    for x in (xb, xm):
        assert np.all(x > 0) and np.allclose(x.sum(1), 1.0, atol=1e-9)
    assert np.all(_z(xb, xm) < 4.5) and np.all(_z(xb**2, xm**2) < 4.5)
    se = np.sqrt(efd_var(cp) / n)
    assert np.all(np.abs(xb.mean(0) - efd_mean(cp)) < 4.5 * se)


def test_fd_reduction_matches_common_tau_basis(running):
    fd = reduction_params("fd", running)
    n = 300_000
    rng = Rng(11)
    # flexible-Dirichlet basis: one Gamma(tau) shared by all classes
    W = rng.gamma(fd.alpha, size=(n, 2))
    hot = rng.choice(2, size=n, p=fd.omega)
    W[np.arange(n), hot] += rng.gamma(1.5, size=n)
    x = W / W.sum(1, keepdims=True)
    se = np.sqrt(efd_var(fd) / n)
    assert np.all(np.abs(x.mean(0) - efd_mean(fd)) < 4 * se)
    assert np.allclose(x.var(0), efd_var(fd), rtol=0.02)
