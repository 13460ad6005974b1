"""Presets for the pitchfork, the planar counter-example and FitzHugh-Nagumo."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import spearmanr

from . import fields as F
from .errors import DomainError, RstabError
from .noise import MESH_RATIO, NoiseSpec, enhance_bm, sample_bm, sample_coarse, sample_fbm, sample_noise
from .rough_core import GridPath, coarsen, lift_piecewise_linear
from .schemes import run_increments
from .stability import (StationaryEnsemble, criterion_continuous, criterion_discrete, fit_decay, noise_stats, radius_R,
                        select_r0)
from .stopping import child_seeds


# ---------------------------------------------------------------- pitchfork

def pitchfork_exact(alpha, sigma, rp, y0):
    """Closed-form pitchfork flow along the grid of rp (scalar driver B = x - x_0)."""
    B = rp.x[:, 0] - rp.x[0, 0]
    t = rp.times - rp.times[0]
    e = np.exp(alpha * t + sigma * B)
    integral = cumulative_trapezoid(e ** 2, t, initial=0.0)
    return y0 * e / np.sqrt(1 + 2 * y0 ** 2 * integral)


@dataclass
class StationaryPoint:
    c: float
    trajectory: np.ndarray  # c(theta_t omega) on the forward grid
    times: np.ndarray
    tail_bound: float


def pitchfork_stationary(alpha, sigma, rp, T):
    """c(omega) = (2 int_{-T}^0 e^{2 alpha s + 2 sigma B_s} ds)^{-1/2} with time T of rp as origin.

    rp covers [0, T + T_fwd]; the returned trajectory is c(theta_t omega) for
    t in [0, T_fwd], each value using the whole past back to -T.
    """
    if alpha <= 0:
        raise DomainError("stationary points +-c exist only for alpha > 0")
    k0 = rp.base.index_of(rp.times[0] + T)
    u = rp.times - rp.times[0]
    Y = rp.x[:, 0]
    # log-scale integrand keeps the exponent moderate: anchor at the origin
    expo = 2 * alpha * (u - T) + 2 * sigma * (Y - Y[k0])
    I = cumulative_trapezoid(np.exp(expo), u, initial=0.0)
    tk = u[k0:] - T
    shift = 2 * alpha * tk + 2 * sigma * (Y[k0:] - Y[k0])
    c_traj = (2 * I[k0:] * np.exp(-shift)) ** -0.5
    return StationaryPoint(float(c_traj[0]), c_traj, tk, float(np.exp(-2 * alpha * T) / (2 * alpha)))


def pitchfork_ensemble(alpha, sigma, hurst, T=50.0, T_fwd=1.0, steps_per_unit=64, n_paths=200, seed=0,
                       signs=(1, -1)):
    """Samples of +-c(omega) with their forward drivers (fine step 1/steps_per_unit)."""
    pts, drivers, trajs = [], [], []
    n_past = int(round(T * steps_per_unit))
    n_fwd = max(1, int(round(T_fwd * steps_per_unit)))
    T = n_past / steps_per_unit
    for s in child_seeds(seed, n_paths):
        spec = NoiseSpec("fbm", hurst, 1, (n_past + n_fwd) / steps_per_unit, n_past + n_fwd, s)
        rp = lift_piecewise_linear(sample_fbm(spec))
        sp = pitchfork_stationary(alpha, sigma, rp, T)
        fwd = rp.restrict((T, rp.times[-1]))
        for sg in signs:
            pts.append([sg * sp.c])
            drivers.append(fwd)
            trajs.append(sg * sp.trajectory)
    return StationaryEnsemble(np.array(pts), "closed_form", trajectories=np.array(trajs)[..., None],
                              times=fwd.times - fwd.times[0]), drivers


def pitchfork_residual(alpha, sigma, rp, traj):
    """Max mismatch between a stored trajectory and the flow restarted from its first value."""
    return float(np.max(np.abs(pitchfork_exact(alpha, sigma, rp, traj[0]) - traj)))


def scheme_convergence(alpha=1.0, sigma=0.5, hurst=0.45, y0=0.5, fine_log2=14, levels=(6, 7, 8, 9, 10),
                       n_paths=20, seed=0):
    """Mean sup-error of the scheme against the closed form for each step 2^-level."""
    model = F.pitchfork(alpha, sigma)
    errs = np.zeros((n_paths, len(levels)))
    scale = np.zeros(n_paths)
    for i, s in enumerate(child_seeds(seed, n_paths)):
        rp = sample_noise(NoiseSpec("fbm", hurst, 1, 1.0, 2 ** fine_log2, s))
        exact = pitchfork_exact(alpha, sigma, rp, y0)
        scale[i] = np.max(np.abs(exact))
        for j, lv in enumerate(levels):
            stride = 2 ** (fine_log2 - lv)
            Pi = coarsen(rp, stride)
            dx, dX = Pi.increments()
            y = run_increments(model, dx, dX, np.array([y0]), Pi.step)[:, 0]
            errs[i, j] = np.max(np.abs(y - exact[::stride]))
    mean = errs.mean(axis=0)
    return {"levels": list(levels), "mean_sup_error": mean.tolist(),
            "relative_final": float(mean[-1] / scale.mean()),
            "monotone": bool(np.all(np.diff(mean) < 0))}


def run_pitchfork(alpha=1.0, sigma=0.05, hurst=0.45, T=50.0, T_fwd=5.0, steps_per_unit=64, n_paths=100,
                  n_en=100, en_steps=2048, lams=None, p=2.5, seed=0, radius=2.0, attractor_paths=50):
    """Continuous criterion at +-c and decay of perturbed exact trajectories."""
    model = F.pitchfork(alpha, sigma, radius=radius)
    ens, drivers = pitchfork_ensemble(alpha, sigma, hurst, T, T_fwd, steps_per_unit, n_paths, seed)
    spec = NoiseSpec("fbm", hurst, 1, 1.0, en_steps, seed + 1)
    Cg = F.Cg_constant(model)
    lams = [l for l in (lams or np.geomspace(1e-4, 0.12, 10)) if l < 1 / 8]
    reports = [criterion_continuous(model, ens, spec, l, p, None, n_en) for l in lams]
    best = max(reports, key=lambda r: r.margin)
    zero = criterion_continuous(model, StationaryEnsemble(np.zeros((1, 1)), "trivial"), spec, best.inputs["lambda"],
                                p, None, n_en)
    lam = best.inputs["lambda"]
    r = select_r0(model, StationaryEnsemble(ens.points[:50]), lam, best.rhs, r_max=1.0, iters=20)
    r = r if r > 0 else 0.1
    fits, radii, curves = [], [], []
    rng = np.random.default_rng(seed)
    for i, (a0, rp) in enumerate(zip(ens.points[:, 0], drivers)):
        a_traj = ens.trajectories[i, :rp.n, 0]
        R, _ = radius_R(model, rp, a_traj[:, None], lam, r, p, n_ball=16)
        radii.append(R)
        y0 = a0 + rng.uniform(-1, 1) * max(R, 1e-12)
        y = pitchfork_exact(alpha, sigma, rp, y0)
        a = pitchfork_exact(alpha, sigma, rp, a0)
        fits.append(fit_decay(rp.times - rp.times[0], y, a))
        curves.append(np.log(np.maximum(np.abs(y - a), 1e-300)))
    mus = np.array([f.mu for f in fits])
    return {"model": {"alpha": alpha, "sigma": sigma, "hurst": hurst, "C_g": Cg},
            "E_c2": float(np.mean(ens.points[:, 0] ** 2)),
            "criterion": best.to_dict(), "criterion_zero": zero.to_dict(),
            "lambda_scan": [{"lambda": rep.inputs["lambda"], "margin": rep.margin, "verdict": rep.verdict}
                            for rep in reports],
            "r": r, "R_median": float(np.median(radii)),
            "decay_positive_fraction": float(np.mean(mus > 0)), "mu_median": float(np.nanmedian(mus)),
            "attractor": pitchfork_attractor_check(alpha, sigma, hurst, T, n_paths=attractor_paths, p=p,
                                                   seed=seed + 5) if attractor_paths else None,
            "_curves": (drivers[0].times - drivers[0].times[0], np.array(curves))}


def run_pitchfork_discrete(alpha=-1.0, sigma=1e-6, hurst=0.45, delta=0.01, radius=0.5, lam=1 / 12, gamma_star=0.5,
                           n_paths=200, n_crit=100, T_burn=20.0, T_decay=10.0, y_burn=0.3, p=2.5, seed=0):
    """Discrete criterion for the dissipative pitchfork and decay of scheme trajectories near a^Delta."""
    from .schemes import audit_contraction, scheme_controls
    from .stopping import greedy_times_controls

    model = F.pitchfork(alpha, sigma, radius=radius)
    Cp = F.sewing_constant(p)
    Lg = F.Lg_constant(model)
    n_burn = int(round(T_burn / delta))
    burn = []
    for s in child_seeds(seed, n_crit):
        rp = sample_noise(NoiseSpec("fbm", hurst, 1, T_burn, n_burn, s))
        dx, dX = rp.increments()
        burn.append(run_increments(model, dx, dX, np.array([y_burn]), delta)[-1])
    ens = StationaryEnsemble(np.array(burn), "burn_in")
    spec = NoiseSpec("fbm", hurst, 1, 1.0, int(round(10 / delta)), seed + 1)
    rep = criterion_discrete(model, ens, spec, delta, lam, gamma_star, p, Cp, None, n_crit)
    r0 = radius / (16 * (1 + Cp))
    n_dec = int(round(T_decay / delta))
    rng = np.random.default_rng(seed)
    mus, n_windows, n_hyp, violations, decay_windows = [], 0, 0, 0, 0
    for s in child_seeds(seed + 2, n_paths):
        rp = sample_noise(NoiseSpec("fbm", hurst, 1, T_decay, n_dec, s))
        dx, dX = rp.increments()
        a0 = ens.points[rng.integers(len(ens))]
        h0 = r0 * rng.uniform(0.1, 1.0) * rng.choice([-1.0, 1.0])
        both = run_increments(model, dx[:, None], dX[:, None], np.stack([a0 + h0, a0]), delta)
        y, a = both[:, 0], both[:, 1]
        mus.append(fit_decay(rp.times, y, a).mu)
        fn = np.linalg.norm(model.f(a), axis=1)
        S = scheme_controls(rp, a, fn, lam, model.L_f, Lg, Cp, p)
        cuts = greedy_times_controls(S, lam, (0.0, 1.0)).indices
        yg, ag = GridPath(rp.times, y), GridPath(rp.times, a)
        for i, j in zip(cuts[:-1], cuts[1:]):
            au = audit_contraction(model, rp, yg, ag, (rp.times[i], rp.times[j]), lam, model.L_f, Lg, Cp, radius, p)
            n_windows += 1
            n_hyp += au.applicable
            violations += sum(not c.ok for c in au.checks)
            decay_windows += bool(au.info.get("window_decay_applied"))
    mus = np.array(mus)
    return {"model": {"alpha": alpha, "sigma": sigma, "radius": radius, "L_f": model.L_f, "L_g": Lg},
            "criterion": rep.to_dict(), "r_start": r0, "decay_positive_fraction": float(np.mean(mus > 0)),
            "mu_median": float(np.median(mus)),
            "contraction": {"windows": n_windows, "hypothesis_windows": n_hyp, "violations": violations,
                     "window_decay_windows": decay_windows}}


def pitchfork_attractor_check(alpha=1.0, sigma=0.05, hurst=0.45, T=50.0, T_run=10.0, steps_per_unit=64,
                              n_paths=50, y0s=(-5.0, -2.0, -1.0, -0.5, -0.1, 0.1, 0.5, 1.0, 2.0, 5.0), k_max=20,
                              D2=1.0, p=2.5, tol=1e-6, seed=0):
    """Empirical interval envelope [-c, c] and the smallest attractor-radius constant Gamma.

    Exact flows started at time T from each y0 are compared at T + T_run with
    c(theta_{T + T_run} omega); the finite run overshoots c by O(exp(-2 alpha T_run)),
    hence tol. The pitchfork satisfies <y, f(y)> <= D1 - D2 |y|^2 for every D2 > 0,
    so D2 is a free input.
    """
    from .stability import gamma_envelope

    t_end = T + T_run
    n_tot = int(round((t_end + 2) * steps_per_unit))
    excess, inside, pts, rps = [], [], [], []
    for s in child_seeds(seed, n_paths):
        rp = lift_piecewise_linear(sample_fbm(NoiseSpec("fbm", hurst, 1, n_tot / steps_per_unit, n_tot, s)))
        c_end = pitchfork_stationary(alpha, sigma, rp, t_end).c
        run = rp.restrict((T, t_end))
        ends = np.array([pitchfork_exact(alpha, sigma, run, y0)[-1] for y0 in y0s])
        excess.append(float(np.max(np.abs(ends)) / c_end - 1))
        inside.append(bool(np.all(np.abs(ends) <= c_end * (1 + tol))))
        pts.append(c_end)
        rps.append(rp)
    Gamma, _ = gamma_envelope(pts, rps, p, D2, k_max, t_end)
    return {"max_relative_excess": float(np.max(excess)), "inside_fraction": float(np.mean(inside)),
            "Gamma_min": Gamma, "D2": D2, "k_max": k_max}


# ---------------------------------------------------------------- counter-example

def logistic_solution(eta0, rate, t):
    """Solution of eta' = eta (rate - 2 eta)."""
    t = np.asarray(t, dtype=float)
    if rate == 0:
        return eta0 / (1 + 2 * eta0 * t)
    e = np.exp(rate * t)
    return rate * eta0 * e / (rate + 2 * eta0 * (e - 1))


def run_counterexample(mu=-1.0, sigma=2.0, delta=2.0 ** -10, n_paths=20, horizon=1.0, y0=(0.5, 0.0), seed=0,
                       decay_y0=1e-3, decay_horizon=5.0, sweep=(0.0, 0.5, 1.0, 1.25, 1.5, 1.75, 2.0)):
    """Scheme for the rotation-noise example against the logistic law of |y|^2."""
    model = F.counterexample(mu, sigma)
    n = int(round(horizon / delta))
    y0 = np.asarray(y0, dtype=float)
    eta0 = float(y0 @ y0)
    rate = 2 * mu + sigma ** 2
    tracking, runs = [], []
    for s in child_seeds(seed, n_paths):
        rp = enhance_bm(sample_bm(NoiseSpec("bm_ito", 0.5, 1, horizon, n, s)), "ito")
        dx, dX = rp.increments()
        y = run_increments(model, dx, dX, y0, delta)
        eta = np.sum(y ** 2, axis=1)
        ref = logistic_solution(eta0, rate, rp.times)
        tracking.append(abs(eta[-1] - ref[-1]) / ref[-1])
        runs.append((rp.times, y, ref))

    def decay_rate(sig, s):
        m = F.counterexample(mu, sig)
        nn = int(round(decay_horizon / delta))
        rp = enhance_bm(sample_bm(NoiseSpec("bm_ito", 0.5, 1, decay_horizon, nn, s)), "ito")
        dx, dX = rp.increments()
        y = run_increments(m, dx, dX, np.array([decay_y0, 0.0]), delta)
        return fit_decay(rp.times, y, np.zeros_like(y), power=2.0)

    s0 = child_seeds(seed + 7, 1)[0]
    sweep_mu = [decay_rate(sg, s0).mu for sg in sweep]
    crossing = None
    for (a, ma), (b, mb) in zip(zip(sweep, sweep_mu), zip(sweep[1:], sweep_mu[1:])):
        if ma > 0 >= mb:
            crossing = [a, b]
            break
    return {"mu": mu, "sigma": sigma, "delta": delta, "eta0": eta0,
            "tracking_rel_error_max": float(np.max(tracking)), "tracking_rel_error_mean": float(np.mean(tracking)),
            "logistic_limit": rate / 2, "decay": decay_rate(sigma, s0).to_dict(),
            "sigma_sweep": {"sigma": list(sweep), "mu_hat": sweep_mu, "threshold_bracket": crossing,
                            "theory": float(np.sqrt(max(-2 * mu, 0.0)))},
            "_runs": runs}


# ---------------------------------------------------------------- FitzHugh-Nagumo

FHN_DEFAULTS = {"I": 0.265, "mu": 0.75, "J": 0.7, "eps": 0.08}


def fhn_fixed_point(I=0.265, mu=0.75, J=0.7, eps=0.08, tol=1e-12, max_iter=50):
    """Newton on v - v^3/3 - w + I = 0, v - mu w + J = 0 from (-1, -0.4)."""
    model = F.fhn(I, mu, J, eps)
    y = np.array([-1.0, -0.4])
    for _ in range(max_iter):
        r = model.f(y) / np.array([1.0, eps])
        Jm = model.Df(y) / np.array([1.0, eps])[:, None]
        y = y - np.linalg.solve(Jm, r)
        if np.max(np.abs(model.f(y) / np.array([1.0, eps]))) <= tol:
            break
    else:
        raise RstabError("Newton iteration for the fixed point did not converge")
    # eliminated cubic v^3 + 3(1/mu - 1) v + 3(J/mu - I) = 0
    pc, qc = 3 * (1 / mu - 1), 3 * (J / mu - I)
    disc = -(4 * pc ** 3 + 27 * qc ** 2)
    res = np.abs(model.f(y) / np.array([1.0, eps]))
    return {"v": float(y[0]), "w": float(y[1]), "residual": float(res.max()), "unique": bool(disc < 0),
            "eigenvalues": np.linalg.eigvals(model.Df(y)).tolist()}


def fhn_levels():
    return [0.0, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5]


def run_fhn(levels=None, hurst=0.45, delta=0.01, T_burn=400.0, n_paths=16, n_en=100, en_steps=2048, p=2.5,
            seed=0, T_fwd=100.0, perturb=1e-3, params=None, mesh_ratio=MESH_RATIO):
    """C_g sweep: burn-in ensembles, criterion in the Lyapunov frame, distance to the fixed point."""
    params = {**FHN_DEFAULTS, **(params or {})}
    levels = fhn_levels() if levels is None else list(levels)
    fp = fhn_fixed_point(**params)
    a_star = np.array([fp["v"], fp["w"]])
    raw = F.fhn(**params)
    P, _ = F.optimal_coordinate_change(raw, a_star)
    ell_raw = float(F.ell(raw, a_star))
    n_burn, n_fwd = int(round(T_burn / delta)), int(round(T_fwd / delta))
    drivers = []
    for s in child_seeds(seed, n_paths):
        rp = sample_coarse(NoiseSpec("fbm", hurst, 2, T_burn + T_fwd, n_burn + n_fwd, s), mesh_ratio)
        drivers.append(rp.increments())
    dx = np.stack([d[0] for d in drivers], axis=1)  # (n, B, m)
    dX = np.stack([d[1] for d in drivers], axis=1)
    spec_en = NoiseSpec("fbm", hurst, 2, 1.0, en_steps, seed + 1)
    rows, stats_cache = [], {}
    for c in levels:
        model = F.fhn(c=c, **params)
        start = np.tile(a_star, (n_paths, 1))
        burn = run_increments(model, dx[:n_burn], dX[:n_burn], start, delta)
        ens_pts = burn[-1]
        dist = float(np.max(np.linalg.norm(ens_pts - a_star, axis=1)))
        tmodel = F.conjugate_model(model, P)
        row = {"c": c, "distance": dist, "ell_raw": ell_raw, "ell_transformed": float(F.ell(tmodel, P @ a_star))}
        if c > 0:
            Cg = F.Cg_constant(tmodel)
            row["C_g"] = Cg
            if Cg < 1 / 8:
                gamma = 1 / F.sewing_constant(p)
                if gamma not in stats_cache:
                    stats_cache[gamma] = noise_stats(spec_en, p, gamma, n_en)
                ens = StationaryEnsemble(ens_pts @ P.T, "burn_in")
                rep = criterion_continuous(tmodel, ens, spec_en, None, p, None, n_en, "lyapunov-transformed",
                                           stats=stats_cache[gamma])
                row["criterion"] = rep.to_dict()
            dirs = np.random.default_rng(seed).standard_normal((n_paths, 2))
            y0 = ens_pts + perturb * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
            dxf = np.concatenate([dx[n_burn:]] * 2, axis=1)
            dXf = np.concatenate([dX[n_burn:]] * 2, axis=1)
            both = run_increments(model, dxf, dXf, np.concatenate([y0, ens_pts]), delta)
            t = delta * np.arange(n_fwd + 1)
            mus = [fit_decay(t, both[:, i], both[:, n_paths + i]).mu for i in range(n_paths)]
            row["decay_positive_fraction"] = float(np.mean(np.array(mus) > 0))
            row["mu_median"] = float(np.median(mus))
        else:
            row["C_g"] = 0.0
        rows.append(row)
    cg = [r["C_g"] for r in rows]
    dists = [r["distance"] for r in rows]
    rho = float(spearmanr(cg, dists).statistic) if len(rows) > 2 else float("nan")
    verdicts = [(r["C_g"], r["criterion"]["verdict"]) for r in rows if "criterion" in r]
    bracket = None
    for (c1, v1), (c2, v2) in zip(verdicts, verdicts[1:]):
        if v1 == "pass" and v2 != "pass":
            bracket = [c1, c2]
            break
    return {"fixed_point": fp, "P": P.tolist(), "ell_raw": ell_raw, "levels": rows, "spearman": rho,
            "boundary_bracket": bracket}


# ---------------------------------------------------------------- presets

PRESETS = ("pitchfork", "counterexample", "fhn")


def _write_csv(path, header, cols):
    arr = np.column_stack(cols)
    np.savetxt(path, arr, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def run_preset(preset, params, out_dir):
    """Run a preset and write config echo, per-path CSVs, summary and a gnuplot table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    (out / "config.json").write_text(json.dumps({"preset": preset, **params}, indent=2, sort_keys=True))
    files.append("config.json")
    if preset == "pitchfork":
        res = run_pitchfork(**params)
        t, curves = res["_curves"]
    elif preset == "counterexample":
        res = run_counterexample(**params)
        curves = []
        for k, (t, y, ref) in enumerate(res["_runs"]):
            name = f"path_{k:04d}.csv"
            _write_csv(out / name, ["t", "y_1", "y_2", "norm2", "logistic"], [t, y[:, 0], y[:, 1],
                                                                             np.sum(y ** 2, 1), ref])
            files.append(name)
            curves.append(0.5 * np.log(np.maximum(np.sum(y ** 2, 1), 1e-300)))
        curves = np.array(curves)
    elif preset == "fhn":
        res = run_fhn(**params)
        t = np.arange(len(res["levels"]), dtype=float)
        curves = np.log(np.maximum([[r["distance"] for r in res["levels"]]], 1e-300))
        _write_csv(out / "levels.csv", ["c", "C_g", "distance"],
                   [[r["c"] for r in res["levels"]], [r["C_g"] for r in res["levels"]],
                    [r["distance"] for r in res["levels"]]])
        files.append("levels.csv")
    else:
        raise DomainError(f"unknown preset {preset!r}")
    if preset == "pitchfork":
        for k, row in enumerate(curves):
            name = f"path_{k:04d}.csv"
            _write_csv(out / name, ["t", "log_distance"], [t, row])
            files.append(name)
    with open(out / "mean_log_distance.dat", "w") as fh:
        fh.write("# t mean_log_distance\n")
        for ti, v in zip(t, np.mean(curves, axis=0)):
            fh.write(f"{ti:.10g} {v:.10g}\n")
    files.append("mean_log_distance.dat")
    (out / "summary.json").write_text(json.dumps(_jsonable(res), indent=2, sort_keys=True))
    files.append("summary.json")
    return res, files
