"""Pure rough flow d phi = g(phi) dx, its Jacobian, and the Doss-Sussmann ODE."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, RstabError
from .fields import Cg_constant, sewing_constant
from .rough_core import GridPath, pvar_norm, remainder_profile, rough_norm
from .stopping import greedy_times

SOLEST_LAMBDA = 1 / 8


@dataclass(frozen=True, eq=False)
class FlowSolution:
    phi: GridPath
    jac: np.ndarray
    window: tuple
    lam: float


def window_lambda(model, rp, window, p=2.5, Cp=None):
    """lambda = C_p C_g |||x|||_{p-var,[a,b]} from the realized window norm."""
    Cp = sewing_constant(p, Cp)
    return Cp * Cg_constant(model) * rough_norm(rp, p, window)


def _pure_steps(model, dx, dX, phi0, with_jac=True):
    """Milstein stepping of the pure flow, batched over initial values.

    phi0 has shape (B, d); returns phi (n+1, B, d) and jac (n+1, B, d, d).
    """
    B, d = phi0.shape
    n = dx.shape[0]
    phis = np.empty((n + 1, B, d))
    phis[0] = phi0
    jacs = None
    if with_jac:
        jacs = np.empty((n + 1, B, d, d))
        jacs[0] = np.eye(d)
    phi = phi0
    xi = jacs[0] if with_jac else None
    for k in range(n):
        G = model.g(phi)
        DG = model.Dg(phi)
        nxt = phi + G @ dx[k] + np.einsum("bial,blc,ca->bi", DG, G, dX[k])
        if with_jac:
            D2 = model.d2g(phi)
            first = np.einsum("bial,blc,a->bic", DG, xi, dx[k])
            sec = (np.einsum("bialn,blc,bnq,qa->bic", D2, xi, G, dX[k])
                   + np.einsum("bial,blqn,bnc,qa->bic", DG, DG, xi, dX[k]))
            xi = xi + first + sec
            jacs[k + 1] = xi
        phi = nxt
        phis[k + 1] = phi
    return phis, jacs


def solve_pure(model, rp, window=None, phi_a=None, p=2.5, Cp=None, with_jac=True):
    i, j = rp.base.window_indices(window)
    dx, dX = rp.increments()
    phi0 = np.zeros(model.d) if phi_a is None else np.asarray(phi_a, dtype=float)
    phis, jacs = _pure_steps(model, dx[i:j], dX[i:j], phi0.reshape(1, -1), with_jac)
    w = (float(rp.times[i]), float(rp.times[j]))
    lam = window_lambda(model, rp, w, p, Cp) if j > i and model.bounds is not None else None
    return FlowSolution(GridPath(rp.times[i:j + 1], phis[:, 0]), None if jacs is None else jacs[:, 0], w, lam)


# ---------------------------------------------------------------- Doss-Sussmann

def lambda_windows(model, rp, p=2.5, Cp=None, lam_max=SOLEST_LAMBDA, window=None):
    """Consecutive windows on which C_p C_g |||x||| stays below lam_max.

    Uses the instant just before each crossing, so every window of length
    above one step satisfies the bound.
    """
    Cp = sewing_constant(p, Cp)
    cg = Cg_constant(model)
    i, j = rp.base.window_indices(window)
    if cg == 0:
        return np.array([i, j])
    seq = greedy_times(rp, p, lam_max / (Cp * cg), (rp.times[i], rp.times[j]), pre_crossing=True)
    return seq.indices


@dataclass(frozen=True, eq=False)
class DossSussmannResult:
    times: np.ndarray
    z: np.ndarray
    y: np.ndarray
    windows: np.ndarray
    lambdas: np.ndarray = field(default=None)


def _ds_window(model, dx, dX, z0, delta):
    """RK4 with step 2*delta on one window; stage midpoints sit on grid nodes."""
    L = dx.shape[0]

    def rhs(k, z):
        phis, jacs = _pure_steps(model, dx[:k], dX[:k], z.reshape(1, -1))
        J = jacs[-1, 0]
        if np.linalg.cond(J) > 1e12:
            raise RstabError(f"flow Jacobian is singular at offset {k}")
        return np.linalg.solve(J, model.f(phis[-1, 0])), phis[-1, 0]

    nodes, zs, ys = [0], [z0], [z0.copy()]
    z, k = z0, 0
    while k < L:
        if k + 2 <= L:
            h = 2 * delta
            k1, y_now = rhs(k, z)
            k2, _ = rhs(k + 1, z + 0.5 * h * k1)
            k3, _ = rhs(k + 1, z + 0.5 * h * k2)
            k4, _ = rhs(k + 2, z + h * k3)
            z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            k += 2
        else:
            h = delta
            k1, _ = rhs(k, z)
            k2, _ = rhs(k + 1, z + h * k1)
            z = z + 0.5 * h * (k1 + k2)
            k += 1
        nodes.append(k)
        zs.append(z)
        ys.append(_pure_steps(model, dx[:k], dX[:k], z.reshape(1, -1), with_jac=False)[0][-1, 0])
    return np.array(nodes), np.array(zs), np.array(ys)


def doss_sussmann(model, rp, window=None, y_a=None, p=2.5, Cp=None, chain=False):
    """Solve dy = f dt + g dx through z' = [d phi/dz]^{-1} f(phi_t(z)), y = phi_t(z).

    Without chain the window must satisfy lambda <= 1/8. With chain the window
    is split into consecutive lambda-windows and the transformation restarts
    on each one from the reconstructed y.
    """
    i, j = rp.base.window_indices(window)
    y = np.zeros(model.d) if y_a is None else np.asarray(y_a, dtype=float)
    if chain:
        cuts = lambda_windows(model, rp, p, Cp, window=(rp.times[i], rp.times[j]))
    else:
        lam = window_lambda(model, rp, (rp.times[i], rp.times[j]), p, Cp)
        if lam > SOLEST_LAMBDA:
            raise PreconditionError(f"lambda={lam:.4g} > 1/8 on window [{rp.times[i]}, {rp.times[j]}]")
        cuts = np.array([i, j])
    dx, dX = rp.increments()
    T, Z, Y, lams = [rp.times[i]], [y], [y], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        lams.append(window_lambda(model, rp, (rp.times[a], rp.times[b]), p, Cp))
        nodes, zs, ys = _ds_window(model, dx[a:b], dX[a:b], Y[-1], rp.step)
        T.extend(rp.times[a + nodes[1:]])
        Z.extend(zs[1:])
        Y.extend(ys[1:])
    return DossSussmannResult(np.array(T), np.array(Z), np.array(Y), np.asarray(cuts), np.array(lams))


# ---------------------------------------------------------------- audits

@dataclass
class Check:
    name: str
    lhs: float
    rhs: float

    def __post_init__(self):
        self.lhs, self.rhs = float(self.lhs), float(self.rhs)

    @property
    def margin(self):
        return self.rhs - self.lhs

    @property
    def ok(self):
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-15

    def to_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin, "ok": self.ok}


@dataclass
class AuditReport:
    window: tuple
    lam: float
    applicable: bool
    checks: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(c.ok for c in self.checks)

    def to_dict(self):
        return {"window": list(self.window), "lambda": self.lam, "applicable": self.applicable, "ok": self.ok,
                "checks": [c.to_dict() for c in self.checks], **self.info}


def _frob(a):
    return np.linalg.norm(a.reshape(a.shape[0], -1), axis=1)


def audit_solest(model, rp, window, phi_a, p=2.5, Cp=None):
    """Both sides of the pure-flow norm bounds and the Jacobian bounds."""
    sol = solve_pure(model, rp, window, phi_a, p, Cp)
    lam = sol.lam
    rep = AuditReport(sol.window, lam, lam <= SOLEST_LAMBDA)
    if not rep.applicable:
        return rep
    i, j = rp.base.window_indices(window)
    phi = sol.phi.values
    x = rp.x[i:j + 1]
    G = model.g(phi)
    xnorm = pvar_norm(rp.base, p, window)
    phi_var = pvar_norm(sol.phi, p)
    R_p = remainder_profile(phi, G, x, p, 0, j - i)[-1] ** (1 / p)
    R_q = remainder_profile(phi, G, x, p / 2, 0, j - i)[-1] ** (2 / p)
    gsup = model.bounds.g
    rep.checks.append(Check("phi_pvar", phi_var, 2 * (gsup * xnorm + lam ** 2)))
    rep.checks.append(Check("R_phi_pvar", R_p, 2 * lam ** 2))
    if np.allclose(model.g(np.zeros(model.d)), 0.0):
        a = float(np.linalg.norm(phi_a))
        rep.checks.append(Check("phi_pvar_zero_g", phi_var, 2 * lam * a))
        rep.checks.append(Check("R_phi_pvar_zero_g", R_p, 2 * lam ** 2 * a))
    I = np.eye(model.d)
    J = sol.jac
    rep.checks.append(Check("jac_minus_id", float(_frob(J - I).max()), 4 * lam))
    rep.checks.append(Check("jac_inv_minus_id", float(_frob(np.linalg.inv(J) - I).max()), 4 * lam))
    rep.info["R_phi_qvar"] = float(R_q)
    return rep


def audit_solestdiff(model, rp, window, z, z_bar, p=2.5, Cp=None):
    i, j = rp.base.window_indices(window)
    w = (float(rp.times[i]), float(rp.times[j]))
    lam = window_lambda(model, rp, w, p, Cp)
    rep = AuditReport(w, lam, lam <= SOLEST_LAMBDA)
    if not rep.applicable:
        return rep
    dx, dX = rp.increments()
    z0 = np.stack([np.asarray(z, dtype=float), np.asarray(z_bar, dtype=float)])
    phis, jacs = _pure_steps(model, dx[i:j], dX[i:j], z0)
    dz = float(np.linalg.norm(z0[1] - z0[0]))
    eta = phis - z0[None]
    psi = np.linalg.inv(jacs) - np.eye(model.d)
    rep.checks.append(Check("eta_diff", float(_frob(eta[:, 1] - eta[:, 0]).max()), 4 * lam * dz))
    rep.checks.append(Check("psi_diff", float(_frob(psi[:, 1] - psi[:, 0]).max()), 256 * lam * dz))
    return rep
