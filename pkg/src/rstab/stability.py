"""Monte Carlo evaluation of the exponential-stability criteria."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigError, DomainError
from .fields import Cg_constant, Lg_constant, ell, kappa, kappa0_batch, sewing_constant
from .noise import sample_noise, wiener_shift
from .rough_core import coarsen, rough_norm, rough_norm_p
from .schemes import K_constant, run_increments, scheme_controls
from .stopping import child_seeds, greedy_times, greedy_times_controls, single_step_fraction

CONT_LAMBDA_MAX = 1 / 8
DISC_LAMBDA_MAX = 1 / 2


# ---------------------------------------------------------------- containers

@dataclass
class StationaryEnsemble:
    """Samples a(omega) of a stationary solution.

    points has shape (N, d); trajectories, when present, has shape (N, n, d)
    on the grid ``times`` and seeds records the driver seed of each sample.
    """
    points: np.ndarray
    provenance: str = "closed_form"
    seeds: list = field(default_factory=list)
    trajectories: np.ndarray | None = None
    times: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] == 0:
            raise DomainError("empty ensemble")

    def __len__(self):
        return self.points.shape[0]

    def moment(self, rho):
        v = np.linalg.norm(self.points, axis=1) ** rho
        return float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0


def _mean_se(v):
    v = np.asarray(v, dtype=float).ravel()
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def verdict(lhs, lhs_se, rhs, rhs_se, nsig=2.0):
    gap = lhs - rhs
    se = float(np.hypot(lhs_se, rhs_se))
    if gap > nsig * se and gap > 0:
        return "pass"
    if -gap > nsig * se and gap < 0:
        return "fail"
    return "inconclusive"


@dataclass
class StabilityReport:
    criterion: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    verdict: str
    inputs: dict = field(default_factory=dict)
    frame: str = "raw"
    details: dict = field(default_factory=dict)
    decay: dict | None = None

    @property
    def margin(self):
        return self.lhs - self.rhs

    def to_dict(self):
        d = {"criterion": self.criterion, "lhs": self.lhs, "lhs_stderr": self.lhs_se, "rhs": self.rhs,
             "rhs_stderr": self.rhs_se, "margin": self.margin, "verdict": self.verdict, "frame": self.frame,
             "inputs": self.inputs, "details": self.details}
        if self.decay is not None:
            d["decay"] = self.decay
        return d


# ---------------------------------------------------------------- noise statistics

@dataclass
class NoiseStats:
    counts: np.ndarray
    norms: np.ndarray
    single_step: float

    @property
    def under_resolved(self):
        return self.single_step > 0.5


_NORMS = {}


def noise_stats(spec, p, gamma, n_paths):
    """N*(gamma, x, [0, T]) and |||x||| over n_paths independent driver samples."""
    key = (spec, float(p), int(n_paths))
    counts, norms, fr = [], [], []
    for s in child_seeds(spec.seed, n_paths):
        rp = sample_noise(spec.with_seed(s))
        seq = greedy_times(rp, p, gamma)
        counts.append(seq.count)
        fr.append(single_step_fraction(seq))
        if key not in _NORMS:
            norms.append(rough_norm(rp, p))
    if key not in _NORMS:
        # the norms do not depend on gamma, so lambda scans reuse them
        _NORMS[key] = np.asarray(norms)
    return NoiseStats(np.asarray(counts, float), _NORMS[key], float(np.mean(fr)))


# ---------------------------------------------------------------- continuous

def criterion_continuous(model, ensemble, spec, lam=None, p=2.5, Cp=None, n_paths=100, frame="raw",
                         stats=None):
    """-E kappa(lam, a, 0) versus 4 lam E N*(lam / (C_p C_g), x, [0,1]).

    lam defaults to C_g (the point specialization with gamma = 1 / C_p).
    """
    Cp = sewing_constant(p, Cp)
    Cg = Cg_constant(model)
    if Cg <= 0:
        raise DomainError("continuous criterion needs C_g > 0")
    lam = Cg if lam is None else float(lam)
    if not 0 < lam < CONT_LAMBDA_MAX:
        raise DomainError(f"lambda must lie in (0, 1/8), got {lam:.4g}")
    gamma = lam / (Cp * Cg)
    kap = kappa0_batch(model, lam, ensemble.points)
    lhs, lhs_se = _mean_se(-kap)
    stats = noise_stats(spec, p, gamma, n_paths) if stats is None else stats
    EN, EN_se = _mean_se(stats.counts)
    rhs, rhs_se = 4 * lam * EN, 4 * lam * EN_se
    v = verdict(lhs, lhs_se, rhs, rhs_se)
    if v == "pass" and stats.under_resolved:
        v = "inconclusive"
    ells = ell(model, ensemble.points)
    El, El_se = _mean_se(ells)
    Ex, Ex_se = _mean_se(stats.norms)
    nec_l, nec_r = -El, 4 * Cp * Cg * Ex
    details = {
        "E_kappa": -lhs, "E_ell": El, "E_N": EN, "E_N_stderr": EN_se, "gamma": gamma,
        "single_step_fraction": stats.single_step, "under_resolved": stats.under_resolved,
        "norm_below_count": bool(gamma * EN >= Ex),
        "necessary": {"lhs": nec_l, "rhs": nec_r, "verdict": verdict(nec_l, El_se, nec_r, 4 * Cp * Cg * Ex_se)},
        "bounds_provenance": model.bounds.provenance if model.bounds else None,
        "ensemble": {"size": len(ensemble), "provenance": ensemble.provenance},
    }
    if ensemble.trajectories is not None:
        tavg = kappa0_batch(model, lam, ensemble.trajectories[0]).mean()
        details["time_average_E_kappa"] = float(tavg)
        details["ergodic_flag"] = bool(abs(tavg + lhs) > 3 * max(lhs_se, 1e-300))
    inputs = {"lambda": lam, "C_p": Cp, "C_g": Cg, "p": p, "hurst": spec.hurst, "fine_steps": spec.fine_steps,
              "n_paths": n_paths, "specialization": "lambda=C_g" if lam == Cg else None}
    return StabilityReport("continuous", lhs, lhs_se, rhs, rhs_se, v, inputs, frame, details)


def scan_lambda(model, ensemble, spec, lams, p=2.5, Cp=None, n_paths=100, frame="raw"):
    """Continuous criterion over a lambda grid; returns (best report, all reports)."""
    reports = [criterion_continuous(model, ensemble, spec, l, p, Cp, n_paths, frame) for l in lams]
    return max(reports, key=lambda r: r.margin), reports


def criterion_trivial(model, eps0, spec, p=2.5, Cp=None, n_paths=100):
    """Continuous criterion for the zero solution with ball-restricted C_g and lambda = C_g."""
    if model.ball_bounds is None:
        raise ConfigError("trivial-solution criterion needs bounds over a ball")
    if np.linalg.norm(model.f(np.zeros(model.d))) > 0 or np.linalg.norm(model.g(np.zeros(model.d))) > 0:
        raise DomainError("zero is not a solution of this model")
    local = model.with_bounds(model.ball_bounds(eps0))
    rep = criterion_continuous(local, StationaryEnsemble(np.zeros((1, model.d)), "trivial"), spec, None, p, Cp,
                               n_paths)
    rep.criterion = "trivial"
    rep.inputs["eps0"] = eps0
    return rep


def select_r0(model, ensemble, lam, rhs, r_max=1.0, iters=30, n_ball=256, max_points=200):
    """Largest r in (0, r_max] with -E kappa(lam, a, r) > rhs, by bisection."""
    pts = ensemble.points[:max_points]

    def lhs(r):
        return -float(np.mean([kappa(model, lam, a, r, n_ball) for a in pts]))

    if lhs(0.0) <= rhs:
        return 0.0
    if lhs(r_max) > rhs:
        return r_max
    lo, hi = 0.0, r_max
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if lhs(mid) > rhs else (lo, mid)
    return lo


# ---------------------------------------------------------------- discrete

def _require_Lf(model, Lf):
    Lf = model.L_f if Lf is None else Lf
    if Lf is None:
        raise ConfigError("discrete criteria need a finite L_f")
    return float(Lf)


def discrete_eta(model, ensemble, Lf, delta):
    El, El_se = _mean_se(ell(model, ensemble.points))
    return -(El + 0.5 * Lf ** 2 * delta), El_se


def criterion_discrete(model, ensemble, spec, delta, lam=1 / 12, gamma_star=0.5, p=2.5, Cp=None, Lf=None,
                       n_paths=100):
    """eta = -(E ell(a) + L_f^2 delta / 2) against K L_g gamma* [E N*(gamma*) + 2 E N*(lam, S)].

    The driver of each Monte Carlo path lives on [0, 1] with spec's fine grid;
    the scheme grid is the coarsening with step delta. The stationary
    reference a is run from the ensemble points along each path.
    """
    Cp = sewing_constant(p, Cp)
    Lf = _require_Lf(model, Lf)
    Lg = Lg_constant(model)
    if not 0 < lam < DISC_LAMBDA_MAX:
        raise DomainError("lambda must lie in (0, 1/2)")
    if not 0 < gamma_star < 1:
        raise DomainError("gamma* must lie in (0, 1)")
    if not 0 < delta <= 1:
        raise DomainError("delta must lie in (0, 1]")
    stride = int(round(delta / spec.step))
    if stride < 1 or abs(stride * spec.step - delta) > 1e-9 * delta:
        raise DomainError("delta must be a multiple of the fine step")
    eta, eta_se = discrete_eta(model, ensemble, Lf, delta)
    K = K_constant(lam, Cp, Lf, delta)
    n1, n2, fr = [], [], []
    for i, s in enumerate(child_seeds(spec.seed, n_paths)):
        rp = sample_noise(spec.with_seed(s))
        seq = greedy_times(rp, p, gamma_star)
        n1.append(seq.count)
        fr.append(single_step_fraction(seq))
        if Lg > 0:
            Pi = coarsen(rp, stride)
            dx, dX = Pi.increments()
            a = run_increments(model, dx, dX, ensemble.points[i % len(ensemble)], Pi.step)
            fn = np.linalg.norm(model.f(a), axis=1)
            S = scheme_controls(Pi, a, fn, lam, Lf, Lg, Cp, p)
            n2.append(greedy_times_controls(S, lam).count)
        else:
            n2.append(0.0)
    v = np.asarray(n1, float) + 2 * np.asarray(n2, float)
    Ev, Ev_se = _mean_se(v)
    rhs, rhs_se = K * Lg * gamma_star * Ev, K * Lg * gamma_star * Ev_se
    cond = verdict(eta, eta_se, 0.0, 0.0)
    main = verdict(eta, eta_se, rhs, rhs_se)
    if cond == "fail" or main == "fail":
        ver = "fail"
    elif cond == "pass" and main == "pass":
        ver = "pass"
    else:
        ver = "inconclusive"
    details = {"eta": eta, "cond_verdict": cond, "K": K, "E_N_gamma_star": _mean_se(n1)[0],
               "E_N_controls": _mean_se(n2)[0], "single_step_fraction": float(np.mean(fr)),
               "delta_star": float(max(0.0, 2 * (eta + 0.5 * Lf ** 2 * delta) / Lf ** 2)) if Lf > 0 else None,
               "max_passing_Lg": float(eta / (K * gamma_star * Ev)) if Ev > 0 and eta > 0 else 0.0}
    inputs = {"lambda": lam, "gamma_star": gamma_star, "C_p": Cp, "L_g": Lg, "L_f": Lf, "delta": delta, "p": p,
              "hurst": spec.hurst, "n_paths": n_paths}
    return StabilityReport("discrete", eta, eta_se, rhs, rhs_se, ver, inputs, "raw", details)


def criterion_discrete_dissipative(model, ensemble, spec, gamma_bar, delta, lam=1 / 12, p=2.5, Cp=None, Lf=None,
                                   n_paths=100):
    """eta > K Gamma_bar L_g [1 + E |||x|||^{p(p+2)}] with a user-supplied Gamma_bar."""
    if not gamma_bar > 0:
        raise ConfigError("Gamma_bar must be positive")
    Cp = sewing_constant(p, Cp)
    Lf = _require_Lf(model, Lf)
    Lg = Lg_constant(model)
    eta, eta_se = discrete_eta(model, ensemble, Lf, delta)
    K = K_constant(lam, Cp, Lf, delta)
    mom = np.array([rough_norm_p(sample_noise(spec.with_seed(s)), p) ** (p + 2)
                    for s in child_seeds(spec.seed, n_paths)])
    Em, Em_se = _mean_se(mom)
    c = K * gamma_bar * Lg
    rhs, rhs_se = c * (1 + Em), c * Em_se
    cond = verdict(eta, eta_se, 0.0, 0.0)
    main = verdict(eta, eta_se, rhs, rhs_se)
    ver = "fail" if "fail" in (cond, main) else ("pass" if cond == main == "pass" else "inconclusive")
    details = {"eta": eta, "K": K, "moment": Em, "moment_stderr": Em_se, "moment_exponent": p * (p + 2),
               "max_passing_Lg": float(eta / (K * gamma_bar * (1 + Em))) if eta > 0 else 0.0,
               "max_passing_gamma_bar": (float(eta / (K * Lg * (1 + Em))) if Lg > 0 else float("inf"))
               if eta > 0 else 0.0}
    inputs = {"gamma_bar": gamma_bar, "lambda": lam, "C_p": Cp, "L_g": Lg, "L_f": Lf, "delta": delta, "p": p}
    return StabilityReport("discrete-dissipative", eta, eta_se, rhs, rhs_se, ver, inputs, "raw", details)


# ---------------------------------------------------------------- radii

def radius_R(model, rp, a_traj, lam, r, p=2.5, Cp=None, horizon=None, n_ball=128):
    """r * inf_n inf_{t in [tau_n, tau_n+1]} exp(-4 lam (n+1) - int_0^t kappa(lam, a_s, r) ds).

    a_traj holds a_t on the grid of rp. Returns (R, n achieving the inf).
    """
    Cp = sewing_constant(p, Cp)
    Cg = Cg_constant(model)
    j = rp.n - 1 if horizon is None else rp.base.index_of(horizon)
    times = rp.times[:j + 1]
    if lam == 0 or Cg == 0:
        idx = np.array([0, j])
    else:
        idx = greedy_times(rp, p, lam / (Cp * Cg), (times[0], times[-1])).indices
    kap = np.array([kappa(model, lam, a, r, n_ball) for a in np.asarray(a_traj)[:j + 1]])
    integral = cumulative_trapezoid(kap, times, initial=0.0)
    best, arg = np.inf, 0
    for n, (a, b) in enumerate(zip(idx[:-1], idx[1:])):
        v = np.min(-4 * lam * (n + 1) - integral[a:b + 1]) if lam > 0 else np.min(-integral[a:b + 1])
        if v < best:
            best, arg = v, n
    return float(r * np.exp(min(best, 0.0) if lam == 0 else best)), arg


def attractor_radius(rp, p, Gamma, D2, k_max, t0=None):
    """Gamma + Gamma sum_k exp(-D2 k / 8) (1 + |||theta_{-k} x|||^{p(p+2)}_{[-1, 2]}).

    rp must cover [t0 - k_max - 1, t0 + 2]; t0 defaults to k_max + 1.
    Returns (value, tail bound of the truncation).
    """
    if not D2 > 0:
        raise ConfigError("D2 must be positive")
    t0 = float(k_max + 1) if t0 is None else float(t0)
    terms = []
    for k in range(k_max + 1):
        w = (t0 - k - 1, t0 - k + 2)
        terms.append(np.exp(-D2 * k / 8) * (1 + rough_norm_p(rp, p, w) ** (p + 2)))
    top = max((1 + rough_norm_p(rp, p, (t0 - k - 1, t0 - k + 2)) ** (p + 2)) for k in range(k_max + 1))
    q = np.exp(-D2 / 8)
    tail = Gamma * q ** (k_max + 1) / (1 - q) * top
    return float(Gamma + Gamma * sum(terms)), float(tail)


def gamma_envelope(points, rps, p, D2, k_max, t0=None):
    """Smallest Gamma with |a_i|^p <= attractor_radius on every (point, driver) pair.

    The radius is linear in Gamma, so each pair gives |a_i|^p / radius(Gamma = 1).
    Returns (max over pairs, per-pair values).
    """
    per = np.array([np.linalg.norm(np.atleast_1d(a)) ** p / attractor_radius(rp, p, 1.0, D2, k_max, t0)[0]
                    for a, rp in zip(points, rps)])
    return float(per.max()), per


def shifted_norms(rp, p, shifts, window):
    """|||theta_h x||| over window, for each grid shift h."""
    return [rough_norm(wiener_shift(rp, h), p, window) for h in shifts]


# ---------------------------------------------------------------- decay

@dataclass
class DecayFit:
    mu: float
    stderr: float
    n_points: int
    inconclusive: bool

    def to_dict(self):
        return {"mu": self.mu, "stderr": self.stderr, "band": [self.mu - 2 * self.stderr, self.mu + 2 * self.stderr],
                "n_points": self.n_points, "inconclusive": self.inconclusive}


def fit_decay(times, y, a, power=1.0, min_points=10):
    """Least-squares decay rate of |y_t - a_t|^power.

    The fit uses the leading stretch of the run where the separation stays
    above 100 machine epsilons relative to |a_t|; mu is minus the slope.
    """
    times = np.asarray(times, dtype=float)
    y = np.asarray(y, dtype=float).reshape(times.size, -1)
    a = np.asarray(a, dtype=float).reshape(times.size, -1)
    sep = np.linalg.norm(y - a, axis=1)
    floor = 100 * np.finfo(float).eps * (1 + np.linalg.norm(a, axis=1))
    if sep[0] <= floor[0]:
        raise DomainError("initial separation must be positive")
    bad = np.nonzero(sep <= floor)[0]
    end = bad[0] if bad.size else times.size
    if end < min_points:
        return DecayFit(float("nan"), float("nan"), int(end), True)
    t, v = times[:end], power * np.log(sep[:end])
    A = np.vstack([t, np.ones_like(t)]).T
    coef, res, *_ = np.linalg.lstsq(A, v, rcond=None)
    dof = max(end - 2, 1)
    resid = v - A @ coef
    s2 = float(resid @ resid) / dof
    se = np.sqrt(s2 / np.sum((t - t.mean()) ** 2))
    return DecayFit(float(-coef[0]), float(se), int(end), False)
