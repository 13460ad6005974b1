"""Greedy stopping times for rough-path norms and for finite control sets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError
from .noise import sample_noise
from .rough_core import area_profile, pvar_profile, rough_norm, rough_norm_p


# ---------------------------------------------------------------- controls

class Control:
    """A control on a uniform grid, w(t_i, t_k) given by ``profile(i, j)``.

    ``profile(i, j)`` returns the array (w(t_i, t_k))_{k=i..j}.
    """

    label = "control"

    def __init__(self, times, beta=1.0, label=None):
        if not 0 < beta <= 1:
            raise DomainError("control exponent must lie in (0, 1]")
        self.times = np.asarray(times, dtype=float)
        self.beta = float(beta)
        if label is not None:
            self.label = label

    def profile(self, i, j):
        raise NotImplementedError

    def __call__(self, i, j):
        return float(self.profile(i, j)[-1])


class LinearControl(Control):
    label = "linear"

    def __init__(self, times, rate, beta=1.0, label=None):
        super().__init__(times, beta, label)
        self.rate = float(rate)

    def profile(self, i, j):
        return self.rate * (self.times[i:j + 1] - self.times[i])


class PathVariationControl(Control):
    """coef * |||x|||^p_{p-var,[s,t]}."""

    label = "path_pvar"

    def __init__(self, path, p, coef=1.0, beta=None, label=None):
        super().__init__(path.times, 1.0 / p if beta is None else beta, label)
        self.path, self.p, self.coef = path, float(p), float(coef)

    def profile(self, i, j):
        return self.coef * pvar_profile(self.path, self.p, (self.times[i], self.times[j]))


class AreaVariationControl(Control):
    """coef * |||X|||^q_{q-var,[s,t]}."""

    label = "area_qvar"

    def __init__(self, rp, q, coef=1.0, beta=None, label=None):
        super().__init__(rp.times, 1.0 / q if beta is None else beta, label)
        self.rp, self.q, self.coef = rp, float(q), float(coef)

    def profile(self, i, j):
        return self.coef * area_profile(self.rp, self.q, (self.times[i], self.times[j]))


class RoughNormControl(Control):
    """|||x|||^p_{p-var} of the rough path, used with beta = 1/p."""

    label = "rough_pvar"

    def __init__(self, rp, p, label=None):
        super().__init__(rp.times, 1.0 / p, label)
        self.rp, self.p = rp, float(p)

    def profile(self, i, j):
        w = (self.times[i], self.times[j])
        return pvar_profile(self.rp.base, self.p, w) + area_profile(self.rp, self.p / 2, w)


class SupTimesControl(Control):
    """coef * max_{Pi[s,t]} v * (t - s) for a non-negative grid sequence v."""

    label = "sup_times_length"

    def __init__(self, times, values, coef=1.0, beta=1.0, label=None):
        super().__init__(times, beta, label)
        self.values = np.asarray(values, dtype=float)
        self.coef = float(coef)

    def profile(self, i, j):
        run = np.maximum.accumulate(self.values[i:j + 1])
        return self.coef * run * (self.times[i:j + 1] - self.times[i])


def _trigger_profile(controls, i, j):
    out = np.zeros(j - i + 1)
    for w in controls:
        out += np.maximum(w.profile(i, j), 0.0) ** w.beta
    return out


def audit_control(control, n_checks=200, rng=None, rtol=1e-10):
    """Randomized check of zero diagonal, monotonicity and superadditivity."""
    rng = np.random.default_rng(rng)
    n = control.times.size
    worst = 0.0
    for _ in range(n_checks):
        s, u, t = np.sort(rng.integers(0, n, size=3))
        prof = control.profile(s, t)
        wsu, wst = prof[u - s], prof[-1]
        wut = control(u, t)
        scale = 1.0 + abs(wst)
        worst = max(worst, abs(prof[0]) / scale, (wsu + wut - wst) / scale, (wut - wst) / scale)
    return worst <= rtol, worst


# ---------------------------------------------------------------- sequences

@dataclass(frozen=True)
class StoppingSequence:
    times: np.ndarray
    indices: np.ndarray
    gamma: float
    exhausted: bool = True
    window: tuple = None

    @property
    def count(self):
        return len(self.indices) - 1

    def to_dict(self):
        return {"gamma": self.gamma, "times": [float(t) for t in self.times], "count": self.count}


def _make_seq(times, idx, gamma):
    idx = np.asarray(idx, dtype=np.int64)
    return StoppingSequence(np.asarray(times)[idx], idx, float(gamma), True,
                            (float(times[idx[0]]), float(times[idx[-1]])))


def _window_idx(times, window):
    times = np.asarray(times)
    if window is None:
        return 0, times.size - 1
    h = (times[-1] - times[0]) / (times.size - 1)
    out = []
    for t in window:
        k = int(round((t - times[0]) / h))
        if k < 0 or k >= times.size or abs(times[k] - t) > 1e-7 * h:
            raise DomainError(f"instant {t} is not on the grid")
        out.append(k)
    if out[0] >= out[1]:
        raise DomainError("window must have positive length")
    return out[0], out[1]


def greedy_times(rp, p, gamma, window=None, include_area=True, pre_crossing=False):
    """First-crossing stopping times of the rough p-variation norm at level gamma."""
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    if not 2 < p < 3 and include_area:
        raise DomainError("rough norm needs p in (2, 3)")
    i, j = _window_idx(rp.times, window)
    idx = _kernels.greedy_rough(np.ascontiguousarray(rp.x), np.ascontiguousarray(rp.area0),
                                float(p), float(gamma), i, j, bool(include_area), bool(pre_crossing))
    return _make_seq(rp.times, idx, gamma)


def count_Nstar(seq):
    return seq.count


def bound_Nstar(rp, p, gamma, window=None):
    return 1.0 + rough_norm_p(rp, p, window) / gamma ** p


# round-off slack on threshold comparisons of control sums
_CROSS_RTOL = 1e-12


def _first_index(controls, cur, e, pred, chunk):
    """Smallest k in (cur, e] with pred(trigger(cur, k)), else None."""
    hi = min(e, cur + chunk)
    while True:
        trig = _trigger_profile(controls, cur, hi)
        hits = np.nonzero(pred(trig[1:]))[0]
        if hits.size:
            return cur + 1 + int(hits[0]), trig
        if hi == e:
            return None, trig
        chunk *= 2
        hi = min(e, cur + chunk)


def _check_controls(controls):
    controls = list(controls)
    if not controls:
        raise DomainError("control set is empty")
    return controls


def greedy_times_controls(controls, gamma, window=None):
    """Greedy times where sum_w w(tau_i, t)^beta_w first reaches gamma."""
    controls = _check_controls(controls)
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    times = controls[0].times
    i, e = _window_idx(times, window)
    idx, cur, chunk = [i], i, 16
    while cur < e:
        k, _ = _first_index(controls, cur, e, lambda v: v >= gamma * (1 - _CROSS_RTOL), chunk)
        k = e if k is None else k
        chunk = max(16, 2 * (k - cur))
        idx.append(k)
        cur = k
    return _make_seq(times, idx, gamma)


def greedy_times_discrete(controls, gamma, window=None):
    """Two-branch discrete rule on the grid carried by the controls."""
    controls = _check_controls(controls)
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    times = controls[0].times
    i, e = _window_idx(times, window)
    idx, cur, chunk = [i], i, 16
    while cur < e:
        one = _trigger_profile(controls, cur, cur + 1)[1]
        if one > gamma * (1 + _CROSS_RTOL):
            k = cur + 1
        else:
            first_over, _ = _first_index(controls, cur, e, lambda v: v > gamma * (1 + _CROSS_RTOL), chunk)
            k = e if first_over is None else first_over - 1
            chunk = max(16, 2 * (k - cur))
        idx.append(k)
        cur = k
    return _make_seq(times, idx, gamma)


def bound_Nstar_controls(controls, gamma, window=None):
    controls = _check_controls(controls)
    i, j = _window_idx(controls[0].times, window)
    beta = min(w.beta for w in controls)
    total = sum(max(w(i, j), 0.0) ** (w.beta / beta) for w in controls)
    return 1.0 + gamma ** (-1 / beta) * len(controls) ** (1 / beta - 1) * total


def bound_N_discrete(controls, gamma, window=None):
    controls = _check_controls(controls)
    i, j = _window_idx(controls[0].times, window)
    beta = min(w.beta for w in controls)
    total = sum(max(w(i, j), 0.0) ** (w.beta / beta) for w in controls)
    return 2.0 + 2.0 * gamma ** (-1 / beta) * len(controls) ** (1 / beta - 1) * total


def max_discrete_between(cont_seq, disc_seq):
    """Largest number of discrete times in any (tau_i, tau_{i+1}] of the continuous sequence."""
    c, d = cont_seq.times, disc_seq.times[1:]
    counts = [np.count_nonzero((d > a) & (d <= b)) for a, b in zip(c[:-1], c[1:])]
    return max(counts) if counts else 0


@dataclass(frozen=True)
class AdditivityAudit:
    lhs: int
    rhs: int
    ok: bool
    counts: list = field(default_factory=list)


def check_nsum(rp, p, gamma, cuts):
    cuts = list(cuts)
    if len(cuts) < 2:
        raise DomainError("need at least two cut points")
    counts = [greedy_times(rp, p, gamma, (a, b)).count for a, b in zip(cuts[:-1], cuts[1:])]
    whole = greedy_times(rp, p, gamma, (cuts[0], cuts[-1])).count
    lhs, rhs = sum(counts), whole + len(cuts) - 1
    return AdditivityAudit(lhs, rhs, lhs <= rhs, counts)


# ---------------------------------------------------------------- Monte Carlo

def child_seeds(seed, n):
    ss = np.random.SeedSequence(int(seed))
    return [int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(n)]


def single_step_fraction(seq):
    """Share of non-terminal intervals that span a single grid step."""
    gaps = np.diff(seq.indices)[:-1]
    return float(np.mean(gaps == 1)) if gaps.size else 0.0


@dataclass
class ENEstimate:
    mean: float
    stderr: float
    n_paths: int
    counts: np.ndarray
    single_step_fraction: float
    birkhoff: dict | None = None

    @property
    def under_resolved(self):
        return self.single_step_fraction > 0.5

    def to_dict(self):
        d = {"mean": self.mean, "stderr": self.stderr, "n_paths": self.n_paths,
             "single_step_fraction": self.single_step_fraction, "under_resolved": self.under_resolved}
        if self.birkhoff is not None:
            d["birkhoff"] = self.birkhoff
        return d


def _sequence_for(rp, p, gamma, controls_factory, discrete, window=None):
    if controls_factory is None:
        return greedy_times(rp, p, gamma, window)
    S = controls_factory(rp)
    return (greedy_times_discrete if discrete else greedy_times_controls)(S, gamma, window)


def estimate_EN(spec, p, gamma, n_paths=100, controls_factory=None, discrete=False,
                birkhoff_n=None):
    """Monte Carlo mean of N* over [0, horizon] for independent driver samples.

    controls_factory(rp) -> list of controls switches from the rough norm to a
    control set. With birkhoff_n, one long path is sampled and tau_n / n is
    compared with 1 / mean.
    """
    if n_paths < 2:
        raise DomainError("need at least two paths")
    counts, fracs = [], []
    for s in child_seeds(spec.seed, n_paths):
        seq = _sequence_for(sample_noise(spec.with_seed(s)), p, gamma, controls_factory, discrete)
        counts.append(seq.count)
        fracs.append(single_step_fraction(seq))
    counts = np.asarray(counts)
    mean = float(counts.mean())
    stderr = float(counts.std(ddof=1) / np.sqrt(n_paths))
    est = ENEstimate(mean, stderr, n_paths, counts, float(np.mean(fracs)))
    if birkhoff_n:
        est.birkhoff = birkhoff_check(spec, p, gamma, mean, birkhoff_n, controls_factory, discrete)
    return est


def birkhoff_check(spec, p, gamma, mean_count, n, controls_factory=None, discrete=False, tol=0.1):
    units = int(np.ceil(1.5 * n / mean_count)) + 1
    while True:
        long_spec = type(spec)(spec.kind, spec.hurst, spec.dim, spec.horizon * units,
                               spec.fine_steps * units, spec.seed ^ 0x5EED)
        seq = _sequence_for(sample_noise(long_spec), p, gamma, controls_factory, discrete)
        if seq.count > n:
            break
        units *= 2
    ratio = float(seq.times[n] / n)
    target = (1 - tol) * spec.horizon / mean_count
    return {"n": n, "tau_n_over_n": ratio, "threshold": target, "ok": ratio >= target,
            "horizon": long_spec.horizon}


def audit_stopping(rp, p, gamma, window=None, n_cuts=3, rng=None):
    """Pathwise checks of the N* counting bounds on one lift.

    Returns a list of (name, lhs, rhs) with lhs <= rhs expected: the rough-norm
    count bound, gamma N* against the norm, additivity over random cuts, and the
    control-set and discrete-rule count bounds.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    i, j = _window_idx(rp.times, window)
    w = (rp.times[i], rp.times[j])
    seq = greedy_times(rp, p, gamma, w)
    out = [("count_bound", seq.count, bound_Nstar(rp, p, gamma, w)),
           ("norm_below_count", rough_norm(rp, p, w), gamma * seq.count)]
    inner = np.sort(rng.choice(np.arange(i + 1, j), size=min(n_cuts, j - i - 1), replace=False))
    cuts = [rp.times[k] for k in (i, *inner, j)]
    ns = check_nsum(rp, p, gamma, cuts)
    out.append(("additivity", ns.lhs, ns.rhs))
    S = [PathVariationControl(rp.base, p), AreaVariationControl(rp, p / 2), LinearControl(rp.times, 1.0)]
    out.append(("controls_count_bound", greedy_times_controls(S, gamma, w).count, bound_Nstar_controls(S, gamma, w)))
    out.append(("discrete_count_bound", greedy_times_discrete(S, gamma, w).count, bound_N_discrete(S, gamma, w)))
    return [(name, float(a), float(b)) for name, a, b in out]
