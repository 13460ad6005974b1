import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import area, brute_area_q, brute_pvar_p, direct_area
from rstab.errors import DomainError
from rstab.noise import NoiseSpec, sample_noise
from rstab.rough_core import (ControlledPath, GridPath, RoughPathGrid, chen_reconstruct, coarsen,
                              lift_piecewise_linear, pvar_norm, qvar_area_norm, rough_integral, rough_norm,
                              rough_norm_p)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def paths(max_n=9, dim=st.integers(1, 2)):
    return dim.flatmap(lambda d: st.integers(2, max_n).flatmap(
        lambda n: arrays(float, (n, d), elements=finite)))


def gp(values, step=0.1):
    return GridPath.uniform(np.asarray(values, dtype=float), step)


# ---------------------------------------------------------------- GridPath

def test_gridpath_rejects_bad_grids():
    with pytest.raises(DomainError):
        GridPath([0.0], [[1.0]])
    with pytest.raises(DomainError):
        GridPath([0.0, 0.2, 0.1], np.zeros(3))
    with pytest.raises(DomainError):
        GridPath([0.0, 0.1, 0.3], np.zeros(3))
    with pytest.raises(DomainError):
        GridPath([0.0, 0.1], np.zeros(3))


def test_window_off_grid_is_domain_error():
    p = gp([0, 1, 0])
    with pytest.raises(DomainError):
        pvar_norm(p, 2, (0.0, 0.15))


def test_rough_path_requires_zero_anchor():
    with pytest.raises(DomainError):
        RoughPathGrid(gp([[0.0], [1.0]]), np.ones((2, 1, 1)))


# ---------------------------------------------------------------- p-variation

def test_pvar_two_point():
    assert pvar_norm(gp([0, 1]), 2) == pytest.approx(1.0)


def test_pvar_constant_path():
    assert pvar_norm(gp([3, 3, 3, 3]), 2.5) == 0.0


def test_pvar_tent_is_sqrt2():
    assert pvar_norm(gp([0, 1, 0]), 2) == pytest.approx(np.sqrt(2), abs=1e-15)


def test_pvar_p_below_one_rejected():
    with pytest.raises(DomainError):
        pvar_norm(gp([0, 1, 0]), 0.5)


@given(paths(), st.sampled_from([1.0, 2.2, 2.5, 2.9]))
def test_pvar_matches_brute_force(vals, p):
    got = pvar_norm(gp(vals), p) ** p
    assert got == pytest.approx(brute_pvar_p(vals, p), rel=1e-12, abs=1e-300)


@given(paths(), st.floats(1.0, 3.0))
def test_pvar_at_least_endpoint_increment(vals, p):
    assert pvar_norm(gp(vals), p) >= np.linalg.norm(vals[-1] - vals[0]) * (1 - 1e-12)


@given(paths(), st.floats(1.0, 2.0), st.floats(0.0, 1.5))
def test_pvar_norm_non_increasing_in_p(vals, p, dp):
    a, b = pvar_norm(gp(vals), p), pvar_norm(gp(vals), p + dp)
    assert b <= a * (1 + 1e-12) + 1e-300


@given(paths(max_n=10), st.floats(1.0, 3.0))
def test_pvar_power_superadditive(vals, p):
    n = len(vals)
    path = gp(vals)
    k = n // 2
    if k == 0 or k == n - 1:
        return
    t = path.times
    left = pvar_norm(path, p, (t[0], t[k])) ** p
    right = pvar_norm(path, p, (t[k], t[-1])) ** p
    assert left + right <= pvar_norm(path, p) ** p * (1 + 1e-12) + 1e-300


# ---------------------------------------------------------------- area norms

def test_area_norm_zero_path():
    rp = lift_piecewise_linear(gp(np.zeros((4, 2))))
    assert qvar_area_norm(rp, 1.25) == 0.0


def test_area_norm_single_segment():
    v = np.array([1.0, -2.0])
    rp = lift_piecewise_linear(gp(np.stack([np.zeros(2), v])))
    assert qvar_area_norm(rp, 1.25) == pytest.approx(np.linalg.norm(0.5 * np.outer(v, v)))


@given(paths(max_n=8, dim=st.just(2)), st.sampled_from([1.1, 1.25, 1.45]))
def test_area_norm_matches_brute_force(vals, q):
    rp = lift_piecewise_linear(gp(vals))
    assert qvar_area_norm(rp, q) ** q == pytest.approx(brute_area_q(rp, q), rel=1e-12, abs=1e-300)


def test_rough_norm_zero_and_path_only(rng):
    z = lift_piecewise_linear(gp(np.zeros((5, 2))))
    assert rough_norm(z, 2.5) == 0.0
    # anchored storage forces Chen, so a vanishing area is only possible over one step
    vals = rng.standard_normal((2, 2))
    rp = RoughPathGrid(gp(vals), np.zeros((2, 2, 2)))
    assert rough_norm(rp, 2.5) == pytest.approx(pvar_norm(gp(vals), 2.5), rel=1e-14)


@pytest.mark.parametrize("p", [2.0, 3.0, 1.5])
def test_rough_norm_p_range(p):
    rp = lift_piecewise_linear(gp([[0.0], [1.0]]))
    with pytest.raises(DomainError):
        rough_norm(rp, p)


def test_rough_norm_superadditive_on_fbm():
    rp = sample_noise(NoiseSpec("fbm", 0.45, 2, 1.0, 256, 3))
    whole = rough_norm_p(rp, 2.5)
    parts = rough_norm_p(rp, 2.5, (0.0, 0.5)) + rough_norm_p(rp, 2.5, (0.5, 1.0))
    assert parts <= whole * (1 + 1e-12)


# ---------------------------------------------------------------- Chen algebra

def test_chen_diagonal_and_zero_path():
    rp = lift_piecewise_linear(gp(np.zeros((4, 2))))
    assert np.all(chen_reconstruct(rp, 0.1, 0.1) == 0)
    assert np.all(chen_reconstruct(rp, 0.0, 0.3) == 0)
    # a zero path with a non-zero stored constant area after the anchor still gives zero
    A = np.zeros((4, 2, 2))
    A[1:] = [[1.0, 2.0], [3.0, 4.0]]
    rp2 = RoughPathGrid(gp(np.zeros((4, 2))), A)
    assert np.all(chen_reconstruct(rp2, 0.1, 0.3) == 0)


def test_chen_three_points(rng):
    rp = lift_piecewise_linear(gp(rng.standard_normal((3, 2))))
    x = rp.x
    lhs = rp.area_idx(0, 2) - rp.area_idx(0, 1) - rp.area_idx(1, 2)
    assert np.allclose(lhs, np.outer(x[1] - x[0], x[2] - x[1]), rtol=0, atol=1e-12)


@given(paths(max_n=12, dim=st.just(2)), st.data())
def test_chen_identity_random_triples(vals, data):
    rp = lift_piecewise_linear(gp(vals))
    n = rp.n
    s = data.draw(st.integers(0, n - 1))
    u = data.draw(st.integers(s, n - 1))
    t = data.draw(st.integers(u, n - 1))
    x = rp.x
    lhs = rp.area_idx(s, t) - rp.area_idx(s, u) - rp.area_idx(u, t)
    rhs = np.outer(x[u] - x[s], x[t] - x[u])
    scale = 1 + np.linalg.norm(rp.area_idx(s, t)) + np.linalg.norm(rhs)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * scale


def test_lift_straight_line():
    v = np.array([0.5, -1.5])
    t = np.linspace(0, 1, 9)
    rp = lift_piecewise_linear(GridPath(t, t[:, None] * v))
    for a, b in [(0, 8), (2, 5), (3, 4)]:
        assert np.allclose(rp.area_idx(a, b), 0.5 * (t[b] - t[a]) ** 2 * np.outer(v, v), atol=1e-15)


def test_lift_two_segments_aggregates_by_chen(rng):
    vals = rng.standard_normal((3, 2))
    rp = lift_piecewise_linear(gp(vals))
    d1, d2 = vals[1] - vals[0], vals[2] - vals[1]
    expect = 0.5 * np.outer(d1, d1) + 0.5 * np.outer(d2, d2) + np.outer(d1, d2)
    assert np.allclose(rp.area_idx(0, 2), expect, atol=1e-14)


@given(paths(max_n=10, dim=st.just(2)))
def test_lift_matches_direct_iterated_integral(vals):
    rp = lift_piecewise_linear(gp(vals))
    n = rp.n
    for a in range(n):
        for b in range(a, n):
            assert np.allclose(rp.area_idx(a, b), direct_area(rp.x, a, b), rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------- coarsening

def test_coarsen_identity_and_full(rng):
    rp = lift_piecewise_linear(gp(rng.standard_normal((5, 2))))
    c1 = coarsen(rp, 1)
    assert np.array_equal(c1.area0, rp.area0) and np.array_equal(c1.x, rp.x)
    cn = coarsen(rp, 4)
    assert cn.n == 2 and np.array_equal(cn.area_idx(0, 1), rp.area0[4])
    with pytest.raises(DomainError):
        coarsen(rp, 3)


def test_coarsen_stride2_reconstructs_fine(rng):
    rp = lift_piecewise_linear(gp(rng.standard_normal((5, 2))))
    c = coarsen(rp, 2)
    for a in range(3):
        for b in range(a, 3):
            assert np.allclose(c.area_idx(a, b), area(rp, 2 * a, 2 * b), atol=1e-14)


# ---------------------------------------------------------------- rough integral

def test_integral_of_constant(rng):
    rp = lift_piecewise_linear(gp(rng.standard_normal((6, 2))))
    c = np.array([1.5, -0.5, 2.0])
    ctrl = ControlledPath(gp(np.tile(c, (6, 1))), np.zeros((6, 3, 2)))
    res = rough_integral(ctrl, rp)
    assert np.allclose(res.value, np.outer(c, rp.x[-1] - rp.x[0]), atol=1e-14)


def test_integral_of_x_against_itself(rng):
    rp = lift_piecewise_linear(gp(rng.standard_normal((7, 2))))
    ctrl = ControlledPath(rp.base, np.tile(np.eye(2), (7, 1, 1)))
    i, j = 1, 5
    w = (rp.times[i], rp.times[j])
    res = rough_integral(ctrl, rp, w)
    expect = rp.area_idx(i, j) + np.outer(rp.x[i], rp.x[j] - rp.x[i])
    assert np.allclose(res.value, expect, atol=1e-13)


def test_integral_mesh_refinement_shrinks():
    # integrand sin(x) controlled by x with derivative cos(x)
    rp = sample_noise(NoiseSpec("fbm", 0.45, 1, 1.0, 2 ** 12, 11))
    vals = []
    for stride in (64, 32, 16, 8, 4):
        c = coarsen(rp, stride)
        y = np.sin(c.x)
        ctrl = ControlledPath(GridPath(c.times, y), np.cos(c.x)[:, :, None])
        vals.append(rough_integral(ctrl, c).value[0, 0])
    diffs = np.abs(np.diff(vals))
    assert diffs[-1] < diffs[0]
