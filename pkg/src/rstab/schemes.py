"""The explicit Milstein-type scheme on a coarse grid and its discrete norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RstabError
from .fields import sewing_constant
from .flow import AuditReport, Check
from .rough_core import GridPath, pvar_norm, remainder_profile, rough_norm
from .stopping import AreaVariationControl, LinearControl, PathVariationControl, SupTimesControl


class NonFiniteState(RstabError):
    pass


def step(model, y, x_inc, X_inc, delta):
    """y + f(y) delta + g(y) x_inc + Dg(y) g(y) X_inc; y may carry leading batch axes."""
    y = np.asarray(y, dtype=float)
    G = model.g(y)
    return (y + model.f(y) * delta + np.einsum("...ia,...a->...i", G, x_inc)
            + np.einsum("...ial,...lb,...ba->...i", model.Dg(y), G, X_inc))


def run_increments(model, dx, dX, y0, delta):
    """Iterate the scheme over increments with shape (n, ..., m) and (n, ..., m, m)."""
    n = dx.shape[0]
    y = np.asarray(y0, dtype=float)
    out = np.empty((n + 1,) + y.shape)
    out[0] = y
    for k in range(n):
        y = step(model, y, dx[k], dX[k], delta)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"non-finite state at step {k + 1}")
        out[k + 1] = y
    return out


@dataclass(frozen=True, eq=False)
class SchemeRun:
    trajectory: GridPath
    driver: object
    model: object

    @property
    def grid(self):
        return self.trajectory.times

    @property
    def delta(self):
        return self.trajectory.step


def simulate(model, rp_coarse, y0, horizon=None):
    """Scheme trajectory on the grid of rp_coarse, optionally cut at horizon."""
    if rp_coarse.step > 1:
        raise DomainError("scheme step must lie in (0, 1]")
    j = rp_coarse.n - 1 if horizon is None else rp_coarse.base.index_of(rp_coarse.times[0] + horizon)
    dx, dX = rp_coarse.increments()
    ys = run_increments(model, dx[:j], dX[:j], y0, rp_coarse.step)
    return SchemeRun(GridPath(rp_coarse.times[:j + 1], ys), rp_coarse, model)


def discrete_norms(y, driver, model, window=None, p=2.5):
    """sup, p-var of y, q-var of R^y = y_{s,t} - g(y_s) x_{s,t}, and the joint norms."""
    if y.n != driver.n or abs(y.step - driver.step) > 1e-9 * driver.step:
        raise DomainError("trajectory and driver live on different grids")
    i, j = y.window_indices(window)
    vals = y.values
    pv = pvar_norm(y, p, window)
    rq = remainder_profile(vals, model.g(vals), driver.x, p / 2, i, j)[-1] ** (2 / p)
    joint = max(pv, rq)
    return {"sup": float(np.max(np.linalg.norm(vals[i:j + 1], axis=1))), "pvar": float(pv),
            "rqvar": float(rq), "joint": float(joint), "anchored": float(np.linalg.norm(vals[i]) + joint)}


def K_constant(lam, Cp, Lf, delta):
    return max(5 * (1 + lam) * (1 + 2 * Cp) ** 2 * np.exp(12 * lam + 2 * lam ** 2), 1.5 * np.exp(6 * Lf * delta))


def scheme_controls(driver, a_values, f_norms, lam, Lf, Lg, Cp, p=2.5):
    """The four controls driving the discrete stopping rule.

    f_norms holds |f(a_t)| along the reference trajectory on the driver grid.
    """
    c = (4 * Cp + 1) ** p * Lg ** p
    return [LinearControl(driver.times, Lf, 1.0, "w1"),
            PathVariationControl(driver.base, p, c, 1 / p, "w2"),
            AreaVariationControl(driver, p / 2, c, 2 / p, "w3"),
            SupTimesControl(driver.times, f_norms, 2 * lam, 1.0, "w4")]


def contraction_coefficient(window_len, fsup, xnorm, lam, Lf, Lg, Cp):
    return Lf * window_len + 2 * lam * fsup * window_len + (4 * Cp + 1) * Lg * xnorm


def audit_contraction(model, driver, y_run, a_run, window, lam, Lf, Lg, Cp=None, r=None, p=2.5):
    """Both sides of the joint-norm contraction bound for h = y - a on a window.

    When the window coefficient is at most lam and |h_a| <= r / (16 (1 + C_p))
    the per-window decay bound of the squared distance is checked too, with
    M(a_t) = ell + osc over radius r averaged on the window.
    """
    from .fields import M_bound

    Cp = sewing_constant(p, Cp)
    i, j = driver.base.window_indices(window)
    w = (float(driver.times[i]), float(driver.times[j]))
    xnorm = rough_norm(driver, p, w)
    hyp = 4 * Cp * Lg * xnorm <= lam < 0.5
    rep = AuditReport(w, lam, hyp)
    ya = y_run.values[i:j + 1]
    aa = a_run.values[i:j + 1]
    h = ya - aa
    hp = pvar_norm(GridPath(driver.times[i:j + 1], h), p)
    Rq = remainder_profile(h, model.g(ya) - model.g(aa), driver.x[i:j + 1], p / 2, 0, j - i)[-1] ** (2 / p)
    joint = max(hp, Rq)
    fsup = float(np.max(np.linalg.norm(model.f(aa), axis=1)))
    coef = contraction_coefficient(w[1] - w[0], fsup, xnorm, lam, Lf, Lg, Cp)
    rep.info.update({"coefficient": float(coef), "rough_norm": float(xnorm), "h0": float(np.linalg.norm(h[0]))})
    if hyp:
        rep.checks.append(Check("contraction", joint, coef * (np.linalg.norm(h[0]) + joint)))
    if r is not None and coef <= lam and np.linalg.norm(h[0]) <= r / (16 * (1 + Cp)) and j > i:
        Mbar = float(np.mean([M_bound(model, a, r) for a in aa[:-1]]))
        expo = ((2 * Mbar + Lf ** 2 * driver.step) * (w[1] - w[0])
                + 6 * (1 + lam) * (1 + 2 * Cp) ** 2 * np.exp(12 * lam + 2 * lam ** 2) * Lg * xnorm)
        rep.checks.append(Check("window_decay", float(np.sum(h[-1] ** 2)), np.exp(expo) * float(np.sum(h[0] ** 2))))
        rep.info["window_decay_applied"] = True
    return rep
