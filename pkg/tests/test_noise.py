import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rstab.errors import DomainError
from rstab.noise import NoiseSpec, enhance_bm, fgn_autocov, sample_bm, sample_fbm, sample_noise, wiener_shift
from rstab.rough_core import rough_norm
from rstab.stopping import child_seeds


def test_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec("fbm", 1.2)
    with pytest.raises(ValueError):
        NoiseSpec("levy")
    with pytest.raises(ValueError):
        NoiseSpec("fbm", 0.45, dim=0)


def test_fgn_autocov_brownian_is_white():
    r = fgn_autocov(0.5, 5)
    assert r[0] == 1.0 and np.allclose(r[1:], 0.0)


@pytest.mark.parametrize("hurst", [0.5, 0.45])
def test_fbm_variance(hurst):
    n = 10_000
    ends = np.array([sample_fbm(NoiseSpec("fbm", hurst, 1, 1.0, 4, s)).values[:, 0]
                     for s in child_seeds(int(hurst * 100), n)])
    assert np.all(ends[:, 0] == 0.0)
    for k, t in [(1, 0.25), (2, 0.5), (4, 1.0)]:
        var = np.mean(ends[:, k] ** 2)
        target = t ** (2 * hurst)
        assert 0.94 * target <= var <= 1.06 * target


def test_fbm_starts_at_zero_and_is_reproducible():
    a = sample_fbm(NoiseSpec("fbm", 0.4, 2, 2.0, 100, 9))
    b = sample_fbm(NoiseSpec("fbm", 0.4, 2, 2.0, 100, 9))
    assert np.all(a.values[0] == 0.0)
    assert np.array_equal(a.values, b.values)
    assert a.step == pytest.approx(0.02)


def test_fbm_covariance_of_increments():
    # lag-one correlation of fGn matches the autocovariance formula
    H = 0.4
    xs = np.concatenate([np.diff(sample_fbm(NoiseSpec("fbm", H, 1, 1.0, 512, s)).values[:, 0])
                         for s in child_seeds(5, 40)])
    x = xs.reshape(40, 512) * 512 ** H
    rho = np.mean(x[:, 1:] * x[:, :-1])
    assert rho == pytest.approx(fgn_autocov(H, 1)[1], abs=0.02)


def test_strat_diagonal_area_exact():
    rp = enhance_bm(sample_bm(NoiseSpec("bm_strat", 0.5, 3, 1.0, 64, 2)), "strat")
    X = rp.area_idx(0, rp.n - 1)
    x = rp.x[-1] - rp.x[0]
    assert np.allclose(np.diag(X), 0.5 * x ** 2, atol=1e-14)


def test_ito_diagonal_mean_zero():
    N = 2000
    vals = np.array([enhance_bm(sample_bm(NoiseSpec("bm_ito", 0.5, 1, 1.0, 16, s)), "ito").area_idx(0, 16)[0, 0]
                     for s in child_seeds(8, N)])
    sd = vals.std()
    assert abs(vals.mean()) <= 3 * sd / np.sqrt(N)


def test_ito_strat_differ_by_half_T():
    path = sample_bm(NoiseSpec("bm_ito", 0.5, 2, 2.0, 50, 1))
    d = enhance_bm(path, "strat").area_idx(0, 50) - enhance_bm(path, "ito").area_idx(0, 50)
    assert np.allclose(d, 0.5 * 2.0 * np.eye(2), atol=1e-13)


def test_enhance_bad_convention():
    with pytest.raises(DomainError):
        enhance_bm(sample_bm(NoiseSpec("bm_ito", 0.5, 1, 1.0, 4, 1)), "levy")


def test_sample_noise_kinds():
    for kind in ("fbm", "bm_ito", "bm_strat"):
        rp = sample_noise(NoiseSpec(kind, 0.45, 2, 1.0, 32, 4))
        assert rp.n == 33 and rp.dim == 2


def test_wiener_shift_identity_and_start():
    rp = sample_noise(NoiseSpec("fbm", 0.45, 2, 1.0, 64, 6))
    same = wiener_shift(rp, 0.0)
    assert np.array_equal(same.x, rp.x) and np.allclose(same.area0, rp.area0, atol=0)
    sh = wiener_shift(rp, rp.times[10])
    assert np.all(sh.x[0] == 0) and np.all(sh.area0[0] == 0)


@given(st.integers(0, 40), st.integers(0, 20), st.integers(1, 20))
def test_wiener_shift_norm_identity(h, s, length):
    rp = sample_noise(NoiseSpec("fbm", 0.45, 2, 1.0, 64, 6))
    sh = wiener_shift(rp, rp.times[h])
    t = min(s + length, sh.n - 1)
    if t <= s:
        return
    a = rough_norm(sh, 2.5, (sh.times[s], sh.times[t]))
    b = rough_norm(rp, 2.5, (rp.times[h + s], rp.times[h + t]))
    assert a == pytest.approx(b, rel=1e-10, abs=1e-14)


def test_sample_coarse():
    from rstab.noise import sample_coarse
    from rstab.rough_core import coarsen

    one = NoiseSpec("fbm", 0.45, 1, 1.0, 64, 5)
    assert np.array_equal(sample_coarse(one).area0, sample_noise(one).area0)
    two = NoiseSpec("fbm", 0.45, 2, 1.0, 64, 5)
    rp = sample_coarse(two, 4)
    ref = coarsen(sample_noise(NoiseSpec("fbm", 0.45, 2, 1.0, 256, 5)), 4)
    assert rp.n == 65 and np.array_equal(rp.area0, ref.area0)
    # finer sampling gives a genuine Levy area on each coarse step
    dX = rp.increments()[1]
    assert np.max(np.abs(dX[:, 0, 1] - dX[:, 1, 0])) > 0
