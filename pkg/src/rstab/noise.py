"""Driving noises on uniform grids: fBm, Brownian motion and the Wiener shift."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy import linalg

from .errors import DomainError, RstabError
from .rough_core import GridPath, RoughPathGrid, coarsen, lift_from_increments, lift_piecewise_linear

KINDS = ("fbm", "bm_ito", "bm_strat")
MESH_RATIO = 16  # fine steps per scheme step when areas are built from a finer grid


class NumericError(RstabError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "fbm"
    hurst: float = 0.5
    dim: int = 1
    horizon: float = 1.0
    fine_steps: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown noise kind {self.kind!r}")
        if self.kind == "fbm" and not 1 / 3 < self.hurst <= 1:
            raise DomainError("hurst must lie in (1/3, 1]")
        if self.fine_steps < 2 or self.dim < 1 or self.horizon <= 0:
            raise DomainError("need fine_steps >= 2, dim >= 1 and horizon > 0")

    @property
    def step(self):
        return self.horizon / self.fine_steps

    def with_seed(self, seed):
        d = asdict(self)
        d["seed"] = int(seed)
        return NoiseSpec(**d)


def fgn_autocov(hurst, n):
    k = np.arange(n + 1, dtype=float)
    h2 = 2 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2 * k ** h2 + np.abs(k - 1) ** h2)


def _fgn_davies_harte(hurst, n, rng):
    r = fgn_autocov(hurst, n)
    c = np.concatenate([r, r[-2:0:-1]])
    lam = np.fft.fft(c).real
    if lam.min() < -1e-10 * lam.max():
        return None
    lam = np.clip(lam, 0.0, None)
    M = c.size
    xi = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    return np.fft.fft(np.sqrt(lam / M) * xi).real[:n]


def _fgn_cholesky(hurst, n, rng):
    r = fgn_autocov(hurst, n)
    cov = linalg.toeplitz(r[:n])
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        w = np.linalg.eigvalsh(cov)
        raise NumericError(f"fGn covariance not positive definite (min eigenvalue {w.min():.3e})") from exc
    return L @ rng.standard_normal(n)


def sample_fbm(spec):
    if spec.kind != "fbm":
        raise DomainError("sample_fbm needs kind 'fbm'")
    rng = np.random.default_rng(spec.seed)
    n = spec.fine_steps
    comps = []
    for _ in range(spec.dim):
        g = _fgn_davies_harte(spec.hurst, n, rng)
        if g is None:
            g = _fgn_cholesky(spec.hurst, n, rng)
        comps.append(np.concatenate([[0.0], np.cumsum(g)]) * spec.step ** spec.hurst)
    times = spec.step * np.arange(n + 1)
    return GridPath(times, np.stack(comps, axis=1))


def sample_bm(spec):
    rng = np.random.default_rng(spec.seed)
    n = spec.fine_steps
    dW = rng.standard_normal((n, spec.dim)) * np.sqrt(spec.step)
    x = np.vstack([np.zeros((1, spec.dim)), np.cumsum(dW, axis=0)])
    return GridPath(spec.step * np.arange(n + 1), x)


def enhance_bm(path, convention):
    if convention == "strat":
        return lift_piecewise_linear(path)
    if convention != "ito":
        raise DomainError("convention must be 'ito' or 'strat'")
    dx = np.diff(path.values, axis=0)
    dX = 0.5 * (dx[:, :, None] * dx[:, None, :] - path.step * np.eye(path.dim))
    return lift_from_increments(path.times, path.values, dX)


def sample_noise(spec):
    """Sample the driver described by spec and return its level-2 lift."""
    if spec.kind == "fbm":
        return lift_piecewise_linear(sample_fbm(spec))
    return enhance_bm(sample_bm(spec), "ito" if spec.kind == "bm_ito" else "strat")


def sample_coarse(spec, ratio=MESH_RATIO):
    """Lift sampled on a grid ratio times finer than spec.fine_steps, then coarsened onto it.

    In one dimension the coarse area is the same at any ratio, so ratio 1 is used there.
    """
    if ratio < 1:
        raise DomainError("mesh ratio must be >= 1")
    if spec.dim == 1 or ratio == 1:
        return sample_noise(spec)
    fine = NoiseSpec(spec.kind, spec.hurst, spec.dim, spec.horizon, spec.fine_steps * ratio, spec.seed)
    return coarsen(sample_noise(fine), ratio)


def wiener_shift(rp, h):
    k = rp.base.index_of(h)
    if k >= rp.n - 1:
        raise DomainError("shift must leave at least one step")
    x = rp.x[k:] - rp.x[k]
    areas = rp.area0[k:] - rp.area0[k] - (rp.x[k] - rp.x[0])[None, :, None] * x[:, None, :]
    return RoughPathGrid(GridPath(rp.times[k:] - rp.times[k], x), areas)
