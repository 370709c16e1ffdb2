import json

import numpy as np
import pytest

import modex.simplex_dist as sd
from modex.cli import main
from modex.numerics import Rng
from modex.simplex_dist import CourtroomParams, DirichletDist
from modex.verify import CHECKS, check_params, fd_moments, random_params, run_suite


def flipped_expert(cp, k):
    # deliberate bug: advocate k borrows the strength of class K-1-k
    a = cp.alpha.copy()
    a[k] += cp.tau[cp.K - 1 - k]
    return DirichletDist(a)


def test_random_params_ranges():
    rng = Rng(0)
    for _ in range(200):
        cp = random_params(rng)
        assert cp.K in (2, 3, 5, 10)
        assert np.all((cp.alpha > 0.1) & (cp.alpha < 50))
        assert np.all((cp.tau > 0.01) & (cp.tau < 50))


def test_fd_moments_running_example(running):
    fd = sd.reduction_params("fd", running)
    mean, var = fd_moments(fd)
    # (alpha + 1.5 omega) / 4.5
    assert np.allclose(mean, [2.75 / 4.5, 1.75 / 4.5])
    assert np.allclose(var, sd.efd_var(fd), atol=1e-15)


def test_clean_suite_passes():
    res = run_suite(50, seed=3, mc_draws=20_000, mc_every=25)
    assert res.ok, res.failures
    assert set(res.counts) == set(CHECKS)
    assert "pass" in res.table() and "FAIL" not in res.table()


def test_check_params_reports_every_check(running):
    errs = check_params(running, rng=Rng(0), mc_draws=10_000)
    assert set(errs) == set(CHECKS)


def test_mutation_is_caught(monkeypatch):
    monkeypatch.setattr(sd, "expert_concentration", flipped_expert)
    res = run_suite(20, seed=0, mc_draws=0)
    assert not res.ok
    assert "mixture-aggregation" in res.failed_checks()
    bad = res.failures[0]
    CourtroomParams(np.array(bad["alpha"]), np.array(bad["omega"]), np.array(bad["tau"]))


def test_cli_verify_mutation(monkeypatch, tmp_path, capsys):
    monkeypatch.setattr(sd, "expert_concentration", flipped_expert)
    code = main(["verify", "--trials", "5", "--seed", "0", "--out", str(tmp_path)])
    assert code == 1
    assert "mixture-aggregation" in capsys.readouterr().err
    payload = json.loads((tmp_path / "verify_failures.json").read_text())
    assert payload["failures"] and "alpha" in payload["failures"][0]


def test_cli_verify_usage():
    assert main(["verify", "--trials", "0"]) == 2


def test_zero_trials_is_an_error():
    with pytest.raises(ValueError):
        run_suite(0)
