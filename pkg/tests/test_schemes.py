import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import subsequences
from rstab import fields as F
from rstab.errors import DomainError
from rstab.noise import NoiseSpec, sample_noise
from rstab.rough_core import GridPath, coarsen, lift_piecewise_linear
from rstab.schemes import (K_constant, NonFiniteState, audit_contraction, discrete_norms, run_increments,
                           scheme_controls, simulate, step)
from rstab.stopping import audit_control


def test_step_example():
    m = F.linear([[-1.0]], "linear", sigma=0.1)
    y = step(m, np.array([1.0]), np.array([0.2]), np.array([[0.02]]), 0.1)
    assert y[0] == pytest.approx(0.9202, abs=1e-15)


def test_step_constant_g_and_no_noise(rng):
    G = rng.standard_normal((2, 3))
    m = F.SystemModel("const", 2, 3, f=lambda y: 0 * y, Df=lambda y: np.zeros(y.shape + (2,)),
                      g=lambda y: np.broadcast_to(G, y.shape[:-1] + (2, 3)),
                      Dg=lambda y: np.zeros(y.shape[:-1] + (2, 3, 2)))
    y0, dx, dX = rng.standard_normal(2), rng.standard_normal(3), rng.standard_normal((3, 3))
    assert np.allclose(step(m, y0, dx, dX, 0.1), y0 + G @ dx)
    fm = F.fhn(c=0.2)
    assert np.allclose(step(fm, y0, np.zeros(2), np.zeros((2, 2)), 0.05), y0 + 0.05 * fm.f(y0))


def test_simulate_euler_decay():
    m = F.linear([[-1.0]], "tanh", c=0.0)
    rp = coarsen(sample_noise(NoiseSpec("fbm", 0.45, 1, 1.0, 64, 1)), 4)
    run = simulate(m, rp, np.array([2.0]))
    k = np.arange(rp.n)
    assert np.allclose(run.trajectory.values[:, 0], 2.0 * (1 - rp.step) ** k, rtol=1e-14)
    assert run.delta == pytest.approx(1 / 16)


def test_simulate_horizon_and_step_check():
    m = F.tanh_scalar()
    rp = sample_noise(NoiseSpec("fbm", 0.45, 1, 1.0, 16, 1))
    assert simulate(m, rp, [0.5], horizon=0.5).trajectory.n == 9
    big = sample_noise(NoiseSpec("fbm", 0.45, 1, 4.0, 2, 1))
    with pytest.raises(DomainError):
        simulate(m, big, [0.5])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_state_detected():
    m = F.pitchfork(1.0, 0.0)
    dx = np.zeros((50, 1))
    dX = np.zeros((50, 1, 1))
    with pytest.raises(NonFiniteState):
        run_increments(m, dx, dX, np.array([1e3]), 1.0)


def test_discrete_norms_constant_zero_g():
    m = F.linear([[-1.0]], "tanh", c=0.0)
    rp = sample_noise(NoiseSpec("fbm", 0.45, 1, 1.0, 8, 1))
    y = GridPath(rp.times, np.full((9, 1), 0.3))
    d = discrete_norms(y, rp, m)
    assert d["pvar"] == 0 and d["rqvar"] == 0 and d["sup"] == pytest.approx(0.3)


def test_discrete_norms_one_step_remainder():
    m = F.fhn(c=0.3)
    rp = sample_noise(NoiseSpec("fbm", 0.45, 2, 0.2, 2, 2))
    dx, dX = rp.increments()
    y0 = np.array([0.2, -0.4])
    ys = run_increments(m, dx, dX, y0, rp.step)
    R = 0.1 * m.f(y0) + m.milstein_term(y0, dX[0])
    d = discrete_norms(GridPath(rp.times, ys), rp, m, (0.0, 0.1))
    assert d["rqvar"] == pytest.approx(np.linalg.norm(R), rel=1e-12)


@given(st.integers(0, 1000), st.integers(3, 11))
def test_discrete_norms_brute_force(seed, n):
    m = F.fhn(c=0.5)
    rp = sample_noise(NoiseSpec("fbm", 0.45, 2, 1.0, n, seed))
    dx, dX = rp.increments()
    ys = run_increments(m, dx, dX, np.array([0.1, 0.2]), rp.step)
    q = 1.25
    G = m.g(ys)
    best = max(sum(np.linalg.norm(ys[b] - ys[a] - G[a] @ (rp.x[b] - rp.x[a])) ** q
                   for a, b in zip(s[:-1], s[1:])) for s in subsequences(0, n))
    d = discrete_norms(GridPath(rp.times, ys), rp, m)
    assert d["rqvar"] ** q == pytest.approx(best, rel=1e-12)


def test_K_constant_example():
    K = K_constant(0.3, 7.73, 1.0, 0.01)
    expect = 5 * 1.3 * (1 + 2 * 7.73) ** 2 * np.exp(12 * 0.3 + 2 * 0.09)
    assert K == pytest.approx(expect)
    assert K == pytest.approx(5 * 1.3 * 16.46 ** 2 * np.exp(3.78), rel=1e-12)
    assert K_constant(0.0, 0.0, 100.0, 0.01) == pytest.approx(1.5 * np.exp(6.0))


def test_scheme_controls_superadditive(rng):
    m = F.fhn(c=0.1)
    rp = sample_noise(NoiseSpec("fbm", 0.45, 2, 1.0, 64, 3))
    dx, dX = rp.increments()
    a = run_increments(m, dx, dX, np.array([-1.0, -0.4]), rp.step)
    S = scheme_controls(rp, a, np.linalg.norm(m.f(a), axis=1), 0.1, 2.0, 0.1, 7.7)
    assert [w.label for w in S] == ["w1", "w2", "w3", "w4"]
    assert [w.beta for w in S] == [1.0, 0.4, 0.8, 1.0]
    for w in S:
        assert audit_control(w, 100, rng)[0]


def test_contraction_identical_runs():
    m = F.pitchfork(-1.0, 0.01, radius=1.0)
    rp = sample_noise(NoiseSpec("fbm", 0.45, 1, 1.0, 100, 3))
    dx, dX = rp.increments()
    y = GridPath(rp.times, run_increments(m, dx, dX, np.array([0.2]), rp.step))
    rep = audit_contraction(m, rp, y, y, (0.0, 0.1), 0.2, m.L_f, F.Lg_constant(m.ball_bounds(1.0)))
    assert rep.ok and all(c.lhs == 0 for c in rep.checks)


def test_contraction_near_stationary_point():
    alpha, sigma = 1.0, 1e-4
    m = F.pitchfork(alpha, sigma, radius=2.0)
    Lg = F.Lg_constant(m.bounds)
    rng = np.random.default_rng(0)
    checked = 0
    for s in range(50):
        rp = sample_noise(NoiseSpec("fbm", 0.45, 1, 1.0, 100, s))
        dx, dX = rp.increments()
        both = run_increments(m, dx[:, None], dX[:, None], np.array([[1.0 + rng.uniform(-0.01, 0.01)], [1.0]]),
                              rp.step)
        y, a = GridPath(rp.times, both[:, 0]), GridPath(rp.times, both[:, 1])
        for k in range(0, 100, 5):
            rep = audit_contraction(m, rp, y, a, (rp.times[k], rp.times[k + 5]), 0.4, m.L_f, Lg)
            checked += rep.applicable
            assert rep.ok, rep.to_dict()
    assert checked > 0
