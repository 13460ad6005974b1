"""System models dy = f(y)dt + g(y)dx and the scalar functionals built on them.

All vector fields are batched: f maps (..., d) -> (..., d), Df -> (..., d, d),
g -> (..., d, m), Dg -> (..., d, m, d) with Dg[i, a, l] = d g_{ia} / d y_l and
D2g -> (..., d, m, d, d).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import linalg
from scipy.stats import qmc

from .errors import ConfigError, DomainError

_SECH2_MAX = 4 / (3 * np.sqrt(3))  # sup |d^2/dy^2 tanh|


@dataclass(frozen=True)
class GBounds:
    """Sup-norms of g and its first three derivatives."""
    g: float
    dg: float
    d2g: float
    d3g: float
    radius: Optional[float] = None  # None means global
    provenance: str = "declared"

    def as_dict(self):
        return {"g": self.g, "dg": self.dg, "d2g": self.d2g, "d3g": self.d3g,
                "radius": self.radius, "provenance": self.provenance}


@dataclass(frozen=True)
class SystemModel:
    name: str
    d: int
    m: int
    f: Callable
    Df: Callable
    g: Callable
    Dg: Callable
    D2g: Optional[Callable] = None
    bounds: Optional[GBounds] = None
    ball_bounds: Optional[Callable] = None  # radius -> GBounds over B(0, radius)
    L_f: Optional[float] = None
    growth: Optional[tuple] = None  # (C_f, rho)
    params: dict = field(default_factory=dict)

    def milstein_term(self, y, X):
        """Dg(y) g(y) X, i.e. sum_{a,b,l} Dg[i,a,l] g[l,b] X[b,a]."""
        return np.einsum("...ial,...lb,...ba->...i", self.Dg(y), self.g(y), X)

    def d2g(self, y, h=1e-5):
        if self.D2g is not None:
            return self.D2g(y)
        return _fd_jacobian(self.Dg, y, h)

    def with_bounds(self, bounds):
        return replace(self, bounds=bounds)


def _fd_jacobian(F, y, h):
    y = np.asarray(y, dtype=float)
    d = y.shape[-1]
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        cols.append((F(y + e) - F(y - e)) / (2 * h))
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------- built-ins

def _col(v):
    return v[..., :, None]


def pitchfork(alpha=1.0, sigma=0.1, radius=None):
    """f = alpha y - y^3, g = sigma y (scalar)."""
    a, s = float(alpha), float(sigma)

    def ball(R):
        return GBounds(abs(s) * R, abs(s), 0.0, 0.0, radius=R)

    Lf = None if radius is None else max(abs(a), abs(a - 3 * radius ** 2))
    return SystemModel(
        "pitchfork", 1, 1,
        f=lambda y: a * y - y ** 3,
        Df=lambda y: _col(a - 3 * y ** 2),
        g=lambda y: _col(s * y),
        Dg=lambda y: np.full(np.shape(y)[:-1] + (1, 1, 1), s),
        D2g=lambda y: np.zeros(np.shape(y)[:-1] + (1, 1, 1, 1)),
        bounds=None if radius is None else ball(radius),
        ball_bounds=ball, L_f=Lf, growth=(1.0 + abs(a), 3.0),
        params={"alpha": a, "sigma": s, "radius": radius})


def tanh_bounds(c, d):
    k = abs(c) * np.sqrt(d)
    return GBounds(k, k, k * _SECH2_MAX, 2 * k)


def _tanh_g(c, d):
    def g(y):
        return c * (np.tanh(y)[..., :, None] * np.eye(d))

    def Dg(y):
        s2 = 1 / np.cosh(y) ** 2
        out = np.zeros(np.shape(y)[:-1] + (d, d, d))
        for i in range(d):
            out[..., i, i, i] = c * s2[..., i]
        return out

    def D2g(y):
        t = np.tanh(y)
        v = -2 * t * (1 - t ** 2)
        out = np.zeros(np.shape(y)[:-1] + (d, d, d, d))
        for i in range(d):
            out[..., i, i, i, i] = c * v[..., i]
        return out

    return g, Dg, D2g


def linear(A, diffusion="tanh", c=0.1, sigma=None):
    """f = A y with a saturated (tanh) or linear (sigma y) diffusion."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    Lf = float(np.linalg.norm(A))
    common = dict(f=lambda y: y @ A.T, Df=lambda y: np.broadcast_to(A, np.shape(y)[:-1] + (d, d)), L_f=Lf,
                  growth=(Lf, 1.0))
    if diffusion == "tanh":
        g, Dg, D2g = _tanh_g(float(c), d)
        b = tanh_bounds(c, d)
        return SystemModel("linear", d, d, g=g, Dg=Dg, D2g=D2g, bounds=b, ball_bounds=lambda R: b,
                           params={"A": A.tolist(), "diffusion": "tanh", "c": c}, **common)
    if diffusion == "linear":
        s = float(c if sigma is None else sigma)

        def Dg(y):
            out = np.zeros(np.shape(y)[:-1] + (d, 1, d))
            out[..., :, 0, :] = s * np.eye(d)
            return out

        def ball(R):
            return GBounds(abs(s) * R, abs(s) * np.sqrt(d), 0.0, 0.0, radius=R)

        return SystemModel("linear", d, 1, g=lambda y: s * y[..., :, None], Dg=Dg,
                           D2g=lambda y: np.zeros(np.shape(y)[:-1] + (d, 1, d, d)),
                           ball_bounds=ball, params={"A": A.tolist(), "diffusion": "linear", "sigma": s}, **common)
    raise ConfigError(f"unknown diffusion {diffusion!r}")


def tanh_scalar(drift_rate=-1.0, c=0.05):
    """Scalar test model f = drift_rate * y, g = c tanh(y)."""
    return linear([[drift_rate]], "tanh", c=c)


def fhn(I=0.265, mu=0.75, J=0.7, eps=0.08, c=0.0):
    """FitzHugh-Nagumo drift with a tanh diffusion of scale c on both components."""
    def f(y):
        v, w = y[..., 0], y[..., 1]
        return np.stack([v - v ** 3 / 3 - w + I, eps * (v - mu * w + J)], axis=-1)

    def Df(y):
        v = y[..., 0]
        out = np.zeros(np.shape(y)[:-1] + (2, 2))
        out[..., 0, 0] = 1 - v ** 2
        out[..., 0, 1] = -1.0
        out[..., 1, 0] = eps
        out[..., 1, 1] = -eps * mu
        return out

    g, Dg, D2g = _tanh_g(float(c), 2)
    b = tanh_bounds(c, 2)
    return SystemModel("fhn", 2, 2, f=f, Df=Df, g=g, Dg=Dg, D2g=D2g, bounds=b, ball_bounds=lambda R: b,
                       growth=(1.0, 3.0), params={"I": I, "mu": mu, "J": J, "eps": eps, "c": c})


def counterexample(mu=-1.0, sigma=0.0):
    """y' = y (mu - |y|^2) dt + [[0, s], [-s, 0]] y dB in the plane."""
    Jm = np.array([[0.0, sigma], [-sigma, 0.0]])

    def f(y):
        return y * (mu - np.sum(y ** 2, axis=-1, keepdims=True))

    def Df(y):
        r2 = np.sum(y ** 2, axis=-1)[..., None, None]
        return (mu - r2) * np.eye(2) - 2 * y[..., :, None] * y[..., None, :]

    def Dg(y):
        out = np.zeros(np.shape(y)[:-1] + (2, 1, 2))
        out[..., :, 0, :] = Jm
        return out

    def ball(R):
        return GBounds(abs(sigma) * R, abs(sigma) * np.sqrt(2), 0.0, 0.0, radius=R)

    return SystemModel("counterexample", 2, 1, f=f, Df=Df, g=lambda y: (y @ Jm.T)[..., :, None], Dg=Dg,
                       D2g=lambda y: np.zeros(np.shape(y)[:-1] + (2, 1, 2, 2)), ball_bounds=ball,
                       growth=(abs(mu) + 1.0, 3.0), params={"mu": mu, "sigma": sigma})


def polynomial(coeffs, diffusion="tanh", c=0.1):
    """Componentwise drift f_i(y) = sum_k coeffs[i][k] y_i^k."""
    C = [np.asarray(row, dtype=float) for row in coeffs]
    d = len(C)
    dC = [np.polynomial.polynomial.polyder(row) if row.size > 1 else np.zeros(1) for row in C]
    pv = np.polynomial.polynomial.polyval

    def f(y):
        return np.stack([pv(y[..., i], C[i]) for i in range(d)], axis=-1)

    def Df(y):
        out = np.zeros(np.shape(y)[:-1] + (d, d))
        for i in range(d):
            out[..., i, i] = pv(y[..., i], dC[i])
        return out

    g, Dg, D2g = _tanh_g(float(c), d)
    b = tanh_bounds(c, d)
    return SystemModel("polynomial", d, d, f=f, Df=Df, g=g, Dg=Dg, D2g=D2g, bounds=b, ball_bounds=lambda R: b,
                       growth=(1.0, float(max(len(r) for r in C) - 1 or 1)),
                       params={"coeffs": [r.tolist() for r in C], "c": c})


FAMILIES = {"pitchfork": pitchfork, "fhn": fhn, "linear": linear, "polynomial": polynomial,
            "counterexample": counterexample, "tanh_scalar": tanh_scalar}


def build_model(family, **params):
    try:
        ctor = FAMILIES[family]
    except KeyError:
        raise ConfigError(f"unknown model family {family!r}; choose from {sorted(FAMILIES)}") from None
    try:
        return ctor(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {family}: {exc}") from None


MODEL_KEYS = {"family", "params", "bounds", "L_f"}
BOUND_KEYS = ("g", "dg", "d2g", "d3g")


def model_from_dict(doc, where="model"):
    """Declarative model: {family, params: {...}, bounds: {g, dg, d2g, d3g}, L_f}.

    Declared bounds and L_f replace the family's own values; errors name the field path.
    """
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a mapping")
    for k in doc:
        if k not in MODEL_KEYS:
            raise ConfigError(f"{where}.{k}: unknown field (expected one of {sorted(MODEL_KEYS)})")
    if "family" not in doc:
        raise ConfigError(f"{where}.family: required")
    params = doc.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError(f"{where}.params: expected a mapping")
    try:
        model = build_model(doc["family"], **params)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    changes = {}
    if doc.get("bounds") is not None:
        b = doc["bounds"]
        if not isinstance(b, dict):
            raise ConfigError(f"{where}.bounds: expected a mapping")
        for k in b:
            if k not in BOUND_KEYS:
                raise ConfigError(f"{where}.bounds.{k}: unknown field (expected one of {list(BOUND_KEYS)})")
        vals = {}
        for k in BOUND_KEYS:
            v = b.get(k)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not np.isfinite(v) or v < 0:
                raise ConfigError(f"{where}.bounds.{k}: expected a finite number >= 0")
            vals[k] = float(v)
        gb = GBounds(**vals)
        changes.update(bounds=gb, ball_bounds=lambda R: gb)
    if doc.get("L_f") is not None:
        v = doc["L_f"]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not v >= 0:
            raise ConfigError(f"{where}.L_f: expected a number >= 0")
        changes["L_f"] = float(v)
    return replace(model, **changes) if changes else model


# ---------------------------------------------------------------- ball sampling

def ball_points(d, r, n=None, seed=0):
    """Deterministic low-discrepancy points of the closed ball B(0, r), boundary included."""
    n = 4096 * d if n is None else int(n)
    if r == 0:
        return np.zeros((1, d))
    if d == 1:
        return np.linspace(-r, r, max(n, 3))[:, None]
    m = int(np.ceil(np.log2(max(n, 2))))
    u = qmc.Sobol(d, scramble=True, seed=seed).random_base2(m)[:n] * 2 - 1
    inside = u[np.sum(u ** 2, axis=1) <= 1]
    shell = u / np.linalg.norm(u, axis=1, keepdims=True)
    return r * np.vstack([np.zeros((1, d)), inside, shell[: n // 4]])


def ell(model, y_hat):
    J = np.asarray(model.Df(np.asarray(y_hat, dtype=float)))
    S = 0.5 * (J + np.swapaxes(J, -1, -2))
    return np.linalg.eigvalsh(S)[..., -1]


def osc_Df(model, y_hat, r, n=None):
    """Lower estimate of sup_{|h| <= r} |Df(y+h) - Df(y)| by ball sampling."""
    y = np.asarray(y_hat, dtype=float)
    if r == 0:
        return 0.0
    pts = y + ball_points(model.d, r, n)
    diff = model.Df(pts) - model.Df(y)
    return float(np.max(np.linalg.norm(diff, axis=(-2, -1))))


def Df_sup(model, y, r, n=None):
    pts = np.asarray(y, dtype=float) + ball_points(model.d, r, n)
    return float(np.max(np.linalg.norm(model.Df(pts), axis=(-2, -1))))


def M_bound(model, y_hat, r, n=None):
    return float(ell(model, y_hat)) + osc_Df(model, y_hat, r, n)


def kappa(model, lam, y, r=0.0, n=None):
    """M(Df, y, r) + 256 lam |f(y)| + 64 lam |Df|_{inf, B(y, r)}."""
    y = np.asarray(y, dtype=float)
    dfs = float(np.linalg.norm(model.Df(y))) if r == 0 else Df_sup(model, y, r, n)
    return M_bound(model, y, r, n) + 256 * lam * float(np.linalg.norm(model.f(y))) + 64 * lam * dfs


def kappa0_batch(model, lam, ys):
    """kappa(lam, y, 0) evaluated on an array of states (..., d)."""
    ys = np.asarray(ys, dtype=float)
    return (ell(model, ys) + 256 * lam * np.linalg.norm(model.f(ys), axis=-1)
            + 64 * lam * np.linalg.norm(model.Df(ys), axis=(-2, -1)))


# ---------------------------------------------------------------- constants

def _resolve_bounds(obj):
    b = obj.bounds if isinstance(obj, SystemModel) else obj
    if b is None or any(v is None for v in (b.g, b.dg, b.d2g, b.d3g)):
        raise ConfigError("all four diffusion bounds (g, Dg, D2g, D3g) must be declared")
    return b


def Cg_constant(model_or_bounds):
    b = _resolve_bounds(model_or_bounds)
    return float(max(b.dg, np.sqrt(b.dg * b.g), np.sqrt(b.d2g * b.g), np.sqrt(b.d3g * b.g),
                     np.cbrt(b.d2g * b.g ** 2), np.cbrt(b.d3g * b.g ** 2)))


def Lg_constant(model_or_bounds, reduced=False):
    b = _resolve_bounds(model_or_bounds)
    if reduced:
        return float(max(b.dg, np.sqrt(b.g * b.d2g)))
    return float(max(b.dg, b.d2g, np.sqrt(b.g * max(b.dg, b.d2g, b.d3g)), np.cbrt(b.g ** 2 * b.d3g)))


def Cg_star_local(model, eps0):
    """C_g computed from sup-norms over the ball B(0, eps0)."""
    if model.ball_bounds is not None:
        return Cg_constant(model.ball_bounds(eps0))
    return Cg_constant(probe_bounds(model, np.zeros(model.d), eps0))


def sewing_constant(p, override=None):
    if override is not None:
        return float(override)
    if not 2 < p < 3:
        raise DomainError("sewing constant defined for p in (2, 3)")
    return 1.0 / (1.0 - 2.0 ** (1 - 3 / p))


def lipschitz_f(model, center, radius, n=None):
    """L_f: declared value, else sup |Df| over the ball."""
    if model.L_f is not None:
        return model.L_f
    return Df_sup(model, center, radius, n)


def probe_bounds(model, center, radius, n=None, h=1e-4):
    """Numerical sup-norms of g, Dg, D2g, D3g over a ball.

    A sampling estimate is a lower bound of the true sup; ``margin`` in the
    provenance string is the relative gain from the second half of the samples.
    """
    pts = np.asarray(center, dtype=float) + ball_points(model.d, radius, n)
    half = len(pts) // 2 or 1

    def sup(vals):
        v = np.linalg.norm(vals.reshape(len(pts), -1), axis=1)
        full, part = v.max(), v[:half].max()
        return float(full), float((full - part) / full) if full > 0 else 0.0

    g, mg = sup(model.g(pts))
    dg, m1 = sup(model.Dg(pts))
    d2 = model.d2g(pts)
    d2g, m2 = sup(d2)
    d3g, m3 = sup(_fd_jacobian(model.d2g, pts, h))
    margin = max(mg, m1, m2, m3)
    return GBounds(g, dg, d2g, d3g, radius=radius, provenance=f"probed(n={len(pts)},margin={margin:.2e})")


# ---------------------------------------------------------------- coordinates

def optimal_coordinate_change(model, y_hat):
    """Linear change z = P y making the symmetrized Jacobian at y_hat negative definite."""
    A = np.asarray(model.Df(np.asarray(y_hat, dtype=float)), dtype=float)
    if np.max(np.linalg.eigvals(A).real) >= 0:
        raise DomainError("Jacobian spectrum is not in the open left half-plane")
    Q = linalg.solve_continuous_lyapunov(A.T, -np.eye(model.d))
    Q = 0.5 * (Q + Q.T)
    w, V = np.linalg.eigh(Q)
    if w.min() <= 0:
        raise DomainError("Lyapunov solution is not positive definite")
    P = (V * np.sqrt(w)) @ V.T
    Pi = (V / np.sqrt(w)) @ V.T
    return P, conjugate_model(model, P, Pi)


def conjugate_model(model, P, Pi=None):
    """Model in the coordinates z = P y."""
    P = np.asarray(P, dtype=float)
    Pi = np.linalg.inv(P) if Pi is None else Pi
    nP, nPi = np.linalg.norm(P, 2), np.linalg.norm(Pi, 2)

    def back(z):
        return z @ Pi.T

    def Dg(z):
        return np.einsum("ij,...jak,kl->...ial", P, model.Dg(back(z)), Pi)

    def D2g(z):
        return np.einsum("ij,...jakn,kl,no->...ialo", P, model.d2g(back(z)), Pi, Pi)

    def tb(b):
        if b is None:
            return None
        return GBounds(nP * b.g, nP * b.dg * nPi, nP * b.d2g * nPi ** 2, nP * b.d3g * nPi ** 3,
                       radius=b.radius, provenance=b.provenance + "+conjugated")

    return replace(
        model, name=model.name + "[P]",
        f=lambda z: model.f(back(z)) @ P.T,
        Df=lambda z: P @ model.Df(back(z)) @ Pi,
        g=lambda z: np.einsum("ij,...ja->...ia", P, model.g(back(z))),
        Dg=Dg, D2g=D2g, bounds=tb(model.bounds),
        ball_bounds=None if model.ball_bounds is None else (lambda R: tb(model.ball_bounds(R * nPi))),
        L_f=None if model.L_f is None else model.L_f * nP * nPi,
        params={**model.params, "P": P.tolist()})
