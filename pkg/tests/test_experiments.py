import json

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from rstab import fields as F
from rstab.errors import DomainError
from rstab.experiments import (fhn_fixed_point, logistic_solution, pitchfork_ensemble, pitchfork_exact,
                               pitchfork_residual, pitchfork_stationary, run_counterexample, run_preset,
                               scheme_convergence)
from rstab.noise import NoiseSpec, sample_noise
from rstab.rough_core import GridPath, lift_piecewise_linear


def flat(n, T):
    return lift_piecewise_linear(GridPath(np.linspace(0, T, n + 1), np.zeros((n + 1, 1))))


def test_pitchfork_exact_zero_and_deterministic():
    rp = sample_noise(NoiseSpec("fbm", 0.45, 1, 1.0, 128, 1))
    assert np.all(pitchfork_exact(1.0, 0.5, rp, 0.0) == 0)
    rp0 = flat(4096, 2.0)
    ode = solve_ivp(lambda t, y: y - y ** 3, (0, 2), [0.3], t_eval=rp0.times, rtol=1e-12, atol=1e-12)
    assert np.max(np.abs(pitchfork_exact(1.0, 0.0, rp0, 0.3) - ode.y[0])) < 1e-6


def test_pitchfork_exact_sign_symmetry(rng):
    rp = sample_noise(NoiseSpec("fbm", 0.45, 1, 1.0, 128, 2))
    assert np.allclose(pitchfork_exact(1.0, 0.3, rp, -0.4), -pitchfork_exact(1.0, 0.3, rp, 0.4))


def test_stationary_deterministic_limit():
    sp = pitchfork_stationary(2.0, 0.0, flat(64 * 21, 21.0), 20.0)
    assert sp.c == pytest.approx(np.sqrt(2.0), rel=1e-3)
    assert sp.tail_bound == pytest.approx(np.exp(-80) / 4)
    with pytest.raises(DomainError):
        pitchfork_stationary(-1.0, 0.1, flat(10, 2.0), 1.0)


def test_stationary_trajectory_is_invariant():
    ens, drivers = pitchfork_ensemble(1.0, 0.3, 0.45, T=20.0, T_fwd=1.0, steps_per_unit=256, n_paths=3, seed=4)
    for k in range(len(ens)):
        res = pitchfork_residual(1.0, 0.3, drivers[k], ens.trajectories[k, :, 0])
        assert res < 1e-4
    assert np.allclose(ens.points[0::2], -ens.points[1::2])


def test_stationary_moment_near_alpha():
    ens, _ = pitchfork_ensemble(1.0, 0.05, 0.45, T=20.0, T_fwd=0.1, steps_per_unit=32, n_paths=200, seed=0)
    assert ens.moment(2)[0] == pytest.approx(1.0, abs=0.01)


def test_scheme_convergence_small():
    out = scheme_convergence(fine_log2=11, levels=(5, 6, 7, 8), n_paths=4)
    assert out["monotone"] and out["relative_final"] < 5e-3


def test_logistic_solution_solves_ode():
    t = np.linspace(0, 3, 301)
    for rate in (-2.0, 0.0, 1.5):
        ode = solve_ivp(lambda s, e: e * (rate - 2 * e), (0, 3), [0.25], t_eval=t, rtol=1e-11, atol=1e-13)
        assert np.max(np.abs(logistic_solution(0.25, rate, t) - ode.y[0])) < 1e-8


def test_counterexample_small():
    out = run_counterexample(delta=2.0 ** -9, n_paths=4, sweep=(0.0, 2.0), decay_horizon=3.0)
    assert out["tracking_rel_error_max"] < 0.05
    assert out["decay"]["mu"] < 0
    mu0, mu2 = out["sigma_sweep"]["mu_hat"]
    assert mu0 == pytest.approx(2.0, abs=0.05) and mu2 < 0
    assert out["sigma_sweep"]["threshold_bracket"] == [0.0, 2.0]


def test_fhn_fixed_point():
    fp = fhn_fixed_point()
    m = F.fhn()
    assert fp["unique"] and fp["residual"] < 1e-12
    assert np.max(np.abs(m.f(np.array([fp["v"], fp["w"]])))) < 1e-12
    assert fp["v"] == pytest.approx(-1.00125, abs=1e-5)
    assert all(np.real(e) < 0 for e in fp["eigenvalues"])


def test_run_preset_reproducible(tmp_path):
    params = {"n_paths": 3, "delta": 2.0 ** -7, "sweep": [0.0, 2.0], "decay_horizon": 1.0}
    _, files = run_preset("counterexample", params, tmp_path / "a")
    run_preset("counterexample", params, tmp_path / "b")
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert "_runs" not in summary and summary["mu"] == -1.0
    lines = (tmp_path / "a" / "mean_log_distance.dat").read_text().splitlines()
    assert lines[0].startswith("#") and len(lines) == 2 ** 7 + 2
    with pytest.raises(DomainError):
        run_preset("nope", {}, tmp_path / "c")


def test_attractor_envelope():
    from rstab.experiments import pitchfork_attractor_check

    out = pitchfork_attractor_check(n_paths=4, T=20.0)
    assert out["inside_fraction"] == 1.0 and 0 <= out["max_relative_excess"] < 1e-6
    assert out["Gamma_min"] > 0
    short = pitchfork_attractor_check(n_paths=4, T=20.0, T_run=1.0)
    assert short["max_relative_excess"] > out["max_relative_excess"]


def test_fhn_small_sweep():
    from rstab.experiments import run_fhn

    out = run_fhn(levels=[0.0, 1e-8, 1e-6, 1e-4], n_paths=4, T_burn=20.0, T_fwd=5.0, n_en=10, en_steps=256)
    rows = out["levels"]
    assert rows[0]["distance"] <= 1e-6
    assert out["spearman"] >= 0.8
    assert rows[0]["ell_raw"] > 0 > rows[0]["ell_transformed"]
