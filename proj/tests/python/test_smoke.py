import math

import numpy as np
import pytest

import qaft

CONFIG = {
    "covariates": ["x1", "x2"],
    "baseline": {"family": "weibull"},
    "effect": {"kind": "constant"},
    "sampler": {"chains": 2, "warmup": 200, "iters": 200, "seed": 3},
    "parameters": {"beta": [0.5, -0.3], "mu": 1.0, "sigma": 1.2},
    "simulate": {
        "n": 150,
        "seed": 4,
        "censor_rate": 0.05,
        "covariates": {"x1": {"dist": "bernoulli", "p": 0.5}, "x2": {"dist": "normal", "mean": 0, "sd": 1}},
    },
}


def test_baseline_survivor_closed_forms():
    t = [0.5, 1.0, 2.0]
    s = qaft.baseline_survivor("weibull", 0.0, 1.0, t)
    assert np.allclose(s, np.exp(-np.array(t)), rtol=0, atol=1e-14)
    s = qaft.baseline_survivor("lognormal", 0.0, 1.0, [1.0])
    assert s[0] == pytest.approx(0.5, abs=1e-14)
    s = qaft.baseline_survivor("tbp", 0.0, 1.0, t, w=[0.25] * 4)
    assert np.allclose(s, np.exp(-np.array(t)), rtol=0, atol=1e-12)


def test_analytic_acceleration_factor():
    cfg = {
        "covariates": ["x"],
        "baseline": {"family": "weibull"},
        "parameters": {"beta": [0.5], "mu": math.log(1 / 0.3), "sigma": 1.0},
    }
    af = qaft.Model(cfg).acceleration_factor([0.1, 0.5, 0.9], covariate="x")
    assert np.allclose(af, math.exp(0.5), rtol=0, atol=1e-9)


def test_simulate_fit_loo_roundtrip():
    model = qaft.Model(CONFIG)
    data = model.simulate()
    assert len(data) == 150
    assert data.x.shape == (150, 2)
    assert set(np.unique(data.delta)) <= {0, 1}
    again = model.parse_csv(data.to_csv())
    assert np.array_equal(again.y_l, data.y_l)

    fit = model.fit(data, threads=2)
    assert fit.names == ["beta[x1]", "beta[x2]", "mu", "sigma"]
    assert fit.draws.shape == (400, 4)
    summary = {row["name"]: row for row in fit.summary()}
    for row in summary.values():
        assert row["lo95"] < row["median"] < row["hi95"]
    assert summary["beta[x1]"]["lo95"] < 0.5 < summary["beta[x1]"]["hi95"]

    loo = fit.loo()
    assert loo["minus2elpd"] == -2 * loo["elpd"]
    assert loo["elpd"] < loo["lpd"]
    assert loo["khat"].shape == (150,)

    af = fit.standardized_af(covariate="x1", p=[0.25, 0.5, 0.75])
    assert np.all(af["lo95"] <= af["median"]) and np.all(af["median"] <= af["hi95"])
    curves = fit.standardized_survivor("x1", [0, 1], [0.0, 1.0, 5.0])
    assert curves["mean"][0] == 1.0


def test_diagnostics_and_errors():
    rng = np.random.default_rng(1)
    chains = rng.normal(size=(4, 500))
    assert abs(qaft.rhat(chains) - 1) < 0.02
    assert 1000 < qaft.ess(chains) < 3000
    with pytest.raises(ValueError):
        qaft.rhat(chains[:, :50])
    with pytest.raises(ValueError):
        qaft.Model({"covariates": [], "baseline": {"family": "gamma"}})
    res = qaft.psis_loo(np.tile([-1.0, -2.0], (200, 1)))
    assert res["elpd"] == -3.0
