"""Grid-sampled rough paths of level 2.

Areas are stored anchored at the first instant, A_k = X_{t_0, t_k}, so any
X_{s,t} is reconstructed in O(1) through Chen's relation and subsampling the
anchored areas is an exact coarsening.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError

_STEP_RTOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridPath:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times).reshape(-1)
        values = _frozen(self.values)
        if values.ndim == 1:
            values = _frozen(values.reshape(-1, 1))
        if times.size < 2 or values.shape[0] != times.size:
            raise DomainError("GridPath needs matching times/values with at least 2 points")
        dt = np.diff(times)
        if np.any(dt <= 0):
            raise DomainError("times must be strictly increasing")
        h = (times[-1] - times[0]) / (times.size - 1)
        if np.max(np.abs(dt - h)) > 1e-9 * h and np.max(np.abs(dt - h)) > _STEP_RTOL * np.max(np.abs(times)):
            raise DomainError("times must form a uniform grid")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, values, step, t0=0.0):
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        return cls(t0 + step * np.arange(n), values)

    @property
    def n(self):
        return self.times.size

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def step(self):
        return (self.times[-1] - self.times[0]) / (self.n - 1)

    def index_of(self, t):
        k = int(round((t - self.times[0]) / self.step))
        if k < 0 or k >= self.n or abs(self.times[k] - t) > 1e-7 * self.step:
            raise DomainError(f"instant {t} is not on the grid")
        return k

    def window_indices(self, window=None):
        if window is None:
            return 0, self.n - 1
        s, t = window
        i, j = self.index_of(s), self.index_of(t)
        if i > j:
            raise DomainError("window start after window end")
        return i, j

    def restrict(self, window):
        i, j = self.window_indices(window)
        if j - i < 1:
            raise DomainError("restricted window needs at least two points")
        return GridPath(self.times[i:j + 1], self.values[i:j + 1])


@dataclass(frozen=True, eq=False)
class RoughPathGrid:
    base: GridPath
    area0: np.ndarray

    def __post_init__(self):
        A = _frozen(self.area0)
        m = self.base.dim
        if A.shape != (self.base.n, m, m):
            raise DomainError(f"area0 must have shape {(self.base.n, m, m)}, got {A.shape}")
        if np.any(A[0] != 0.0):
            raise DomainError("anchored area at the first instant must be zero")
        object.__setattr__(self, "area0", A)

    @property
    def times(self):
        return self.base.times

    @property
    def x(self):
        return self.base.values

    @property
    def n(self):
        return self.base.n

    @property
    def dim(self):
        return self.base.dim

    @property
    def step(self):
        return self.base.step

    def area_idx(self, i, j):
        """X_{t_i, t_j} from grid indices."""
        if i > j:
            raise DomainError("area requested with s > t")
        x = self.x
        return self.area0[j] - self.area0[i] - np.outer(x[i] - x[0], x[j] - x[i])

    def increments(self):
        """Per-step (x_{k,k+1}, X_{k,k+1}) arrays."""
        x, A = self.x, self.area0
        dx = np.diff(x, axis=0)
        dX = A[1:] - A[:-1] - (x[:-1] - x[0])[:, :, None] * dx[:, None, :]
        return dx, dX

    def restrict(self, window):
        i, j = self.base.window_indices(window)
        if j - i < 1:
            raise DomainError("restricted window needs at least two points")
        x = self.x[i:j + 1]
        areas = np.array([self.area_idx(i, k) for k in range(i, j + 1)])
        return RoughPathGrid(GridPath(self.times[i:j + 1], x), areas)


@dataclass(frozen=True, eq=False)
class ControlledPath:
    path: GridPath
    gubinelli: np.ndarray

    def __post_init__(self):
        yp = _frozen(self.gubinelli)
        if yp.ndim != 3 or yp.shape[:2] != (self.path.n, self.path.dim):
            raise DomainError("gubinelli derivative must have shape (n, d, m)")
        object.__setattr__(self, "gubinelli", yp)

    def remainder(self, x, i, j):
        y = self.path.values
        return y[j] - y[i] - self.gubinelli[i] @ (x[j] - x[i])


def _check_p(p):
    if not p >= 1:
        raise DomainError("variation exponent must be >= 1")


def pvar_profile(path, p, window=None):
    """V[k] = |||x|||^p over [s, s+k] for every grid instant of the window."""
    _check_p(p)
    i, j = path.window_indices(window)
    return _kernels.pvar_profile_path(np.ascontiguousarray(path.values), i, j, float(p))


def area_profile(rp, q, window=None):
    _check_p(q)
    i, j = rp.base.window_indices(window)
    return _kernels.pvar_profile_area(np.ascontiguousarray(rp.x), np.ascontiguousarray(rp.area0), i, j, float(q))


def remainder_profile(y, G, x, q, i, j):
    """q-variation profile of R_{s,t} = y_{s,t} - G_s x_{s,t} on indices [i, j]."""
    _check_p(q)
    return _kernels.pvar_profile_remainder(
        np.ascontiguousarray(y, dtype=float), np.ascontiguousarray(G, dtype=float),
        np.ascontiguousarray(x, dtype=float), int(i), int(j), float(q))


def pvar_norm(path, p, window=None):
    if isinstance(path, RoughPathGrid):
        path = path.base
    return float(pvar_profile(path, p, window)[-1] ** (1.0 / p))


def qvar_area_norm(rp, q, window=None):
    return float(area_profile(rp, q, window)[-1] ** (1.0 / q))


def rough_norm_p(rp, p, window=None):
    """|||x|||^p_{p-var} + |||X|||^{p/2}_{p/2-var}."""
    if not 2 < p < 3:
        raise DomainError("rough norm needs p in (2, 3)")
    return float(pvar_profile(rp.base, p, window)[-1] + area_profile(rp, p / 2, window)[-1])


def rough_norm(rp, p, window=None):
    return rough_norm_p(rp, p, window) ** (1.0 / p)


def chen_reconstruct(rp, s, t):
    i, j = rp.base.index_of(s), rp.base.index_of(t)
    if i > j:
        raise DomainError("chen_reconstruct needs s <= t")
    return rp.area_idx(i, j)


def lift_from_increments(times, x, dX):
    """Anchored areas from per-step area increments dX_k = X_{k,k+1}."""
    x = np.asarray(x, dtype=float)
    dx = np.diff(x, axis=0)
    A = np.zeros((x.shape[0], x.shape[1], x.shape[1]))
    A[1:] = np.cumsum((x[:-1] - x[0])[:, :, None] * dx[:, None, :] + dX, axis=0)
    return RoughPathGrid(GridPath(times, x), A)


def lift_piecewise_linear(path):
    dx = np.diff(path.values, axis=0)
    return lift_from_increments(path.times, path.values, 0.5 * dx[:, :, None] * dx[:, None, :])


def coarsen(rp, stride):
    stride = int(stride)
    steps = rp.n - 1
    if stride < 1 or steps % stride:
        raise DomainError(f"stride {stride} does not divide {steps} steps")
    sl = slice(0, rp.n, stride)
    return RoughPathGrid(GridPath(rp.times[sl], rp.x[sl]), rp.area0[sl])


@dataclass(frozen=True)
class RoughIntegral:
    value: np.ndarray
    increments: np.ndarray
    local_error: float


def rough_integral(ctrl, rp, window=None):
    """Compensated Darboux sum of y dx over the fine grid of the window.

    value has shape (d, m); increments[k] is the term of step k and
    local_error is || integral - y_s x_{s,t} - y'_s X_{s,t} ||.
    """
    if ctrl.path.n != rp.n or not np.allclose(ctrl.path.times, rp.times, rtol=0, atol=1e-9 * rp.step):
        raise DomainError("controlled path and rough path live on different grids")
    i, j = rp.base.window_indices(window)
    y, yp = ctrl.path.values, ctrl.gubinelli
    dx, dX = rp.increments()
    dx, dX = dx[i:j], dX[i:j]
    # y_u (x) x_{u,v} + y'_u X_{u,v}, with (y'X)_{rb} = sum_a y'_{ra} X_{ab}
    incr = y[i:j, :, None] * dx[:, None, :] + np.einsum("kra,kab->krb", yp[i:j], dX)
    value = incr.sum(axis=0)
    xst = rp.x[j] - rp.x[i]
    germ = np.outer(y[i], xst) + yp[i] @ rp.area_idx(i, j)
    return RoughIntegral(value, incr, float(np.linalg.norm(value - germ)))

