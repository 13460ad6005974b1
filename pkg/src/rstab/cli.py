"""Command line entry point: rstab <subcommand> [flags]."""
from __future__ import annotations

import argparse
import hashlib
import inspect
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import fields as F
from .errors import ConfigError, RstabError
from .formats import load, save

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 64, 65
VERDICT_CODES = {"pass": EXIT_PASS, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# defaults shared by every subcommand; per-command defaults extend them
COMMON = {"seed": None, "jobs": None, "format": "json", "config": None, "out": None}
NOISE = {"kind": "fbm", "hurst": 0.45, "steps": 1024, "horizon": 1.0, "dim": 1}
MODEL = {"model": "pitchfork", "alpha": 1.0, "sigma": 0.05, "c": None, "mu": None, "radius": None, "param": []}
DEFAULTS = {
    "sample-noise": {**NOISE, "binary": False},
    "pvar": {"input": None, "p": 2.5, "window": None, "rough": False},
    "stopping-times": {**NOISE, "input": None, "p": 2.5, "gamma": 0.5, "window": None, "rule": "rough"},
    "estimate-en": {**NOISE, "p": 2.5, "gamma": 0.5, "n_paths": 100, "birkhoff": None},
    "simulate": {**NOISE, **MODEL, "y0": None, "delta": 2.0 ** -6},
    "audit": {**NOISE, **MODEL, "model": "tanh_scalar", "prop": "stopping", "p": 2.5, "gamma": 0.5,
              "paths": 10, "n_windows": 1, "c": 0.05, "delta": 0.01, "lam": 1 / 12, "y0": None},
    "criterion": {**NOISE, **MODEL, "steps": 2048, "theorem": "continuous", "preset": None, "lam": None,
                  "p": 2.5, "n_paths": 100, "ensemble": 100, "delta": 0.01, "gamma_star": 0.5, "gamma_bar": None,
                  "eps0": 0.1, "truncation": 50.0, "burn": None, "y0": None},
    "experiment": {"preset": "pitchfork", "params": {}},
}


def _add_common(p):
    p.add_argument("--seed", type=int, help="master seed (default: $RSTAB_SEED or 0)")
    p.add_argument("--jobs", type=int, help="worker count (recorded; reductions are ordered by seed)")
    p.add_argument("--format", choices=["json", "csv"], help="stdout format (default json)")
    p.add_argument("--config", help="YAML or JSON file with flag values; CLI flags take precedence")
    p.add_argument("--out", help="output directory (receives result files and manifest.json)")


def _add_noise(p):
    g = p.add_argument_group("noise")
    g.add_argument("--kind", choices=["fbm", "bm_ito", "bm_strat"])
    g.add_argument("--hurst", type=float)
    g.add_argument("--steps", type=int, help="fine grid steps on [0, horizon]")
    g.add_argument("--horizon", type=float)
    g.add_argument("--dim", type=int)


def _add_model(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=sorted(F.FAMILIES))
    g.add_argument("--alpha", type=float)
    g.add_argument("--sigma", type=float)
    g.add_argument("--c", type=float, help="diffusion scale of the tanh families")
    g.add_argument("--mu", type=float)
    g.add_argument("--radius", type=float, help="ball radius for local bounds")
    g.add_argument("--param", action="append", help="extra model parameter KEY=JSON_VALUE")


def build_parser():
    ap = _Parser(prog="rstab", description="Rough-path stability toolkit", argument_default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        _add_common(p)
        return p

    p = cmd("sample-noise", "sample a lifted driver")
    _add_noise(p)
    p.add_argument("--binary", action="store_true", help="write noise.bin instead of noise.csv")

    p = cmd("pvar", "p-variation norm of a stored path")
    p.add_argument("--input", required=True)
    p.add_argument("--p", type=float)
    p.add_argument("--window", help="s,t")
    p.add_argument("--rough", action="store_true", help="rough-path norm (needs a stored area)")

    p = cmd("stopping-times", "greedy stopping times of a stored or sampled lift")
    _add_noise(p)
    p.add_argument("--input")
    p.add_argument("--p", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--window")
    p.add_argument("--rule", choices=["rough", "controls", "discrete"])

    p = cmd("estimate-en", "Monte Carlo E N*")
    _add_noise(p)
    p.add_argument("--p", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--n-paths", dest="n_paths", type=int)
    p.add_argument("--birkhoff", type=int, help="also run the long-path check at this n")

    p = cmd("simulate", "run the scheme on a sampled driver")
    _add_noise(p)
    _add_model(p)
    p.add_argument("--y0", help="comma-separated initial value")
    p.add_argument("--delta", type=float)

    p = cmd("audit", "pathwise inequality audits")
    _add_noise(p)
    _add_model(p)
    p.add_argument("--prop", choices=["stopping", "solest", "solestdiff", "hnew"],
                   help="counting bounds, pure-flow bounds, flow differences or the scheme contraction bound")
    p.add_argument("--p", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--paths", type=int, help="number of sampled drivers")
    p.add_argument("--n-windows", dest="n_windows", type=int, help="windows audited per driver (flow audits)")
    p.add_argument("--delta", type=float, help="scheme step (hnew)")
    p.add_argument("--lambda", dest="lam", type=float, help="window threshold (hnew)")
    p.add_argument("--y0", help="reference start (hnew), comma-separated")

    p = cmd("criterion", "evaluate a stability criterion")
    _add_noise(p)
    _add_model(p)
    p.add_argument("--theorem", choices=["continuous", "discrete", "discrete-dissipative", "trivial"])
    p.add_argument("--preset", choices=["pitchfork", "fhn"])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--n-paths", dest="n_paths", type=int)
    p.add_argument("--ensemble", type=int, help="stationary ensemble size")
    p.add_argument("--delta", type=float)
    p.add_argument("--gamma-star", dest="gamma_star", type=float)
    p.add_argument("--gamma-bar", dest="gamma_bar", type=float)
    p.add_argument("--eps0", type=float)
    p.add_argument("--truncation", type=float)
    p.add_argument("--burn", type=float)
    p.add_argument("--y0")

    p = cmd("experiment", "run a preset and write its tables")
    p.add_argument("--preset", choices=["pitchfork", "counterexample", "fhn"])
    return ap


# ---------------------------------------------------------------- config

def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = str(k).replace("-", "_")
        path = f"{prefix}.{k}" if prefix else str(k)
        if key == "model" and isinstance(v, dict) and "family" in v:
            out["model_decl"] = (v, path)
        elif isinstance(v, dict) and key != "params":
            out.update(_flatten(v, path))
        else:
            out[key] = (v, path)
    return out


def read_config(path, command):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        doc = yaml.safe_load(text) if not str(path).endswith(".json") else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: parse error in {path}: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a mapping")
    known = DEFAULTS[command].keys() | {"seed", "jobs", "format", "out"}
    if "model" in DEFAULTS[command]:
        known |= {"model_decl"}
    out = {}
    for key, (val, where) in _flatten(doc).items():
        if key not in known:
            raise ConfigError(f"config.{where}: unknown field for {command}")
        out[key] = val
    return out


def resolve(command, ns):
    cli = {k: v for k, v in vars(ns).items() if k != "command"}
    cfg = read_config(cli["config"], command) if cli.get("config") else {}
    merged = {**COMMON, **DEFAULTS[command], **cfg, **cli}
    if "model" in cli:
        merged.pop("model_decl", None)
    if merged["seed"] is None:
        env = os.environ.get("RSTAB_SEED")
        try:
            merged["seed"] = int(env) if env else 0
        except ValueError:
            raise ConfigError("RSTAB_SEED: not an integer") from None
    if merged["jobs"] is None:
        merged["jobs"] = os.cpu_count() or 1
    return merged


def _window(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = str(text).split(",")
    try:
        s, t = (float(v) for v in parts)
    except ValueError:
        raise ConfigError(f"window: expected 's,t', got {text!r}") from None
    return s, t


def _vector(text, d, name):
    if text is None:
        return None
    vals = list(text) if isinstance(text, (list, tuple)) else str(text).split(",")
    try:
        v = np.array([float(x) for x in vals])
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated numbers") from None
    if v.size != d:
        raise ConfigError(f"{name}: expected {d} values, got {v.size}")
    return v


def noise_spec(cfg, horizon=None, steps=None):
    from .noise import NoiseSpec

    try:
        return NoiseSpec(cfg["kind"], cfg["hurst"], cfg["dim"], cfg["horizon"] if horizon is None else horizon,
                         cfg["steps"] if steps is None else steps, cfg["seed"])
    except ValueError as exc:
        raise ConfigError(f"noise: {exc}") from None


def model_from(cfg):
    if cfg.get("model_decl") is not None:
        return F.model_from_dict(cfg["model_decl"], "config.model")
    family = cfg["model"]
    ctor = F.FAMILIES.get(family)
    if ctor is None:
        raise ConfigError(f"model: unknown family {family!r}")
    accepted = inspect.signature(ctor).parameters
    params = {k: cfg[k] for k in ("alpha", "sigma", "c", "mu", "radius") if cfg.get(k) is not None and k in accepted}
    for item in cfg.get("param") or []:
        if "=" not in item:
            raise ConfigError(f"param: expected KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            params[k] = json.loads(v)
        except json.JSONDecodeError:
            raise ConfigError(f"param.{k}: value is not valid JSON") from None
    return F.build_model(family, **params)


# ---------------------------------------------------------------- commands

def _emit(obj, fmt, rows=None, header=None):
    if fmt == "csv" and rows is not None:
        print(",".join(header))
        for r in rows:
            print(",".join(str(int(v)) if isinstance(v, (int, np.integer)) else repr(float(v)) for v in r))
    else:
        print(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def cmd_sample_noise(cfg, files):
    from .noise import sample_noise

    rp = sample_noise(noise_spec(cfg))
    out = Path(cfg["out"] or ".")
    out.mkdir(parents=True, exist_ok=True)
    name = "noise.bin" if cfg["binary"] else "noise.csv"
    save(rp, out / name)
    files.append(name)
    _emit({"file": str(out / name), "n": rp.n, "dim": rp.dim, "step": rp.step}, cfg["format"])
    return EXIT_PASS


def cmd_pvar(cfg, files):
    from .rough_core import RoughPathGrid, pvar_norm, rough_norm

    obj = load(cfg["input"])
    w = _window(cfg["window"])
    if cfg["rough"]:
        if not isinstance(obj, RoughPathGrid):
            raise ConfigError("input: rough norm needs A_ab area columns")
        val = rough_norm(obj, cfg["p"], w)
    else:
        val = pvar_norm(obj, cfg["p"], w)
    if cfg["format"] == "csv":
        print(repr(float(val)))
    else:
        print(json.dumps({"p": cfg["p"], "window": w, "value": float(val)}))
    return EXIT_PASS


def _driver(cfg):
    from .noise import sample_noise
    from .rough_core import RoughPathGrid, lift_piecewise_linear

    if cfg.get("input"):
        obj = load(cfg["input"])
        return obj if isinstance(obj, RoughPathGrid) else lift_piecewise_linear(obj)
    return sample_noise(noise_spec(cfg))


def cmd_stopping_times(cfg, files):
    from .stopping import (AreaVariationControl, PathVariationControl, bound_N_discrete, bound_Nstar,
                           bound_Nstar_controls, greedy_times, greedy_times_controls, greedy_times_discrete)

    rp = _driver(cfg)
    w = _window(cfg["window"])
    p, gamma = cfg["p"], cfg["gamma"]
    if cfg["rule"] == "rough":
        seq = greedy_times(rp, p, gamma, w)
        bound = bound_Nstar(rp, p, gamma, w)
    else:
        S = [PathVariationControl(rp.base, p), AreaVariationControl(rp, p / 2)]
        if cfg["rule"] == "controls":
            seq, bound = greedy_times_controls(S, gamma, w), bound_Nstar_controls(S, gamma, w)
        else:
            seq, bound = greedy_times_discrete(S, gamma, w), bound_N_discrete(S, gamma, w)
    _emit({**seq.to_dict(), "bound": float(bound)}, cfg["format"], zip(seq.indices, seq.times), ["index", "t"])
    return EXIT_PASS


def cmd_estimate_en(cfg, files):
    from .stopping import estimate_EN

    est = estimate_EN(noise_spec(cfg), cfg["p"], cfg["gamma"], cfg["n_paths"], birkhoff_n=cfg["birkhoff"])
    _emit(est.to_dict(), cfg["format"], [[est.mean, est.stderr, est.n_paths]], ["mean", "stderr", "n_paths"])
    return EXIT_PASS


def cmd_simulate(cfg, files):
    from .rough_core import coarsen
    from .schemes import simulate

    model = model_from(cfg)
    spec = noise_spec(cfg, steps=None)
    if spec.dim != model.m:
        spec = noise_spec({**cfg, "dim": model.m})
    from .noise import sample_noise

    rp = sample_noise(spec)
    stride = int(round(cfg["delta"] / rp.step))
    if stride < 1 or abs(stride * rp.step - cfg["delta"]) > 1e-9 * cfg["delta"]:
        raise ConfigError("delta: must be a multiple of horizon/steps")
    y0 = _vector(cfg["y0"], model.d, "y0")
    y0 = np.full(model.d, 0.5) if y0 is None else y0
    run = simulate(model, coarsen(rp, stride), y0)
    tr = run.trajectory
    header = ["t"] + [f"y_{i + 1}" for i in range(model.d)]
    rows = np.column_stack([tr.times, tr.values])
    if cfg["out"]:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        save(tr, out / "trajectory.csv", prefix="y")
        files.append("trajectory.csv")
    _emit({"times": tr.times, "y": tr.values, "delta": run.delta}, cfg["format"], rows, header)
    return EXIT_PASS


def _audit_flow(cfg, model, rp, rng):
    from .flow import audit_solest, audit_solestdiff, lambda_windows

    cuts = lambda_windows(model, rp, cfg["p"])
    out = []
    for a, b in list(zip(cuts[:-1], cuts[1:]))[:cfg["n_windows"]]:
        if b - a < 2:
            continue
        w = (rp.times[a], rp.times[b])
        z = rng.uniform(-1, 1, model.d)
        if cfg["prop"] == "solest":
            out.append(audit_solest(model, rp, w, z).to_dict())
        else:
            out.append(audit_solestdiff(model, rp, w, z, z + 0.1 * rng.uniform(-1, 1, model.d)).to_dict())
    return out


def _audit_contraction(cfg, model, seed, rng):
    from .noise import sample_coarse
    from .rough_core import GridPath
    from .schemes import audit_contraction, run_increments, scheme_controls
    from .stopping import greedy_times_controls

    if model.L_f is None:
        raise ConfigError(f"model: {model.name} declares no L_f, which the scheme audit needs")
    Lf = model.L_f
    Lg, Cp, lam, delta = F.Lg_constant(model), F.sewing_constant(cfg["p"]), cfg["lam"], cfg["delta"]
    n = int(round(cfg["horizon"] / delta))
    if n < 1 or abs(n * delta - cfg["horizon"]) > 1e-9 * cfg["horizon"]:
        raise ConfigError("delta: must divide horizon")
    rp = sample_coarse(noise_spec({**cfg, "dim": model.m, "seed": seed}, steps=n))
    a0 = _vector(cfg["y0"], model.d, "y0")
    a0 = np.zeros(model.d) if a0 is None else a0
    h0 = 1e-3 * rng.uniform(-1, 1, model.d)
    dx, dX = rp.increments()
    both = run_increments(model, dx[:, None], dX[:, None], np.stack([a0 + h0, a0]), delta)
    y, a = GridPath(rp.times, both[:, 0]), GridPath(rp.times, both[:, 1])
    S = scheme_controls(rp, a.values, np.linalg.norm(model.f(a.values), axis=1), lam, Lf, Lg, Cp, cfg["p"])
    cuts = greedy_times_controls(S, lam).indices
    return [audit_contraction(model, rp, y, a, (rp.times[i], rp.times[j]), lam, Lf, Lg, Cp, None,
                              cfg["p"]).to_dict() for i, j in zip(cuts[:-1], cuts[1:])]


def cmd_audit(cfg, files):
    from .noise import sample_noise
    from .stopping import audit_stopping, child_seeds

    prop = cfg["prop"]
    results = []
    model = None if prop == "stopping" else model_from(cfg)
    for k, s in enumerate(child_seeds(cfg["seed"], cfg["paths"])):
        rng = np.random.default_rng(s)
        if prop == "stopping":
            rp = sample_noise(noise_spec({**cfg, "seed": s}))
            for name, lhs, rhs in audit_stopping(rp, cfg["p"], cfg["gamma"], rng=rng):
                results.append({"path": k, "name": name, "lhs": lhs, "rhs": rhs, "margin": rhs - lhs,
                                "ok": lhs <= rhs * (1 + 1e-12)})
        elif prop == "hnew":
            results += [{"path": k, **r} for r in _audit_contraction(cfg, model, s, rng)]
        else:
            rp = sample_noise(noise_spec({**cfg, "dim": model.m, "seed": s}))
            results += [{"path": k, **r} for r in _audit_flow(cfg, model, rp, rng)]
    ok = all(r["ok"] for r in results)
    _emit({"prop": prop, "ok": ok, "results": results}, cfg["format"])
    return EXIT_PASS if ok else EXIT_FAIL


def _fhn_point():
    from .experiments import fhn_fixed_point

    fp = fhn_fixed_point()
    return fp["v"], fp["w"]


def _ensemble(cfg, model):
    from .experiments import pitchfork_ensemble
    from .noise import sample_coarse
    from .schemes import run_increments
    from .stability import StationaryEnsemble
    from .stopping import child_seeds

    preset = cfg["preset"]
    if preset == "pitchfork" and cfg["alpha"] > 0:
        ens, _ = pitchfork_ensemble(cfg["alpha"], cfg["sigma"], cfg["hurst"], cfg["truncation"], 1.0, 64,
                                    cfg["ensemble"], cfg["seed"])
        return ens
    fhn = preset == "fhn"
    y0 = _vector(cfg["y0"], model.d, "y0")
    if y0 is None:
        y0 = np.array(_fhn_point()) if fhn else np.full(model.d, 0.3)
    burn = cfg["burn"] if cfg["burn"] is not None else (400.0 if fhn else 20.0)
    delta = cfg["delta"]
    n = int(round(burn / delta))
    incs = [sample_coarse(noise_spec({**cfg, "dim": model.m, "seed": s}, horizon=n * delta, steps=n)).increments()
            for s in child_seeds(cfg["seed"] + 3, cfg["ensemble"])]
    dx = np.stack([d[0] for d in incs], axis=1)
    dX = np.stack([d[1] for d in incs], axis=1)
    pts = run_increments(model, dx, dX, np.tile(y0, (len(incs), 1)), delta)[-1]
    return StationaryEnsemble(pts, "burn_in")


def cmd_criterion(cfg, files):
    from .stability import (criterion_continuous, criterion_discrete, criterion_discrete_dissipative,
                            criterion_trivial)

    theorem = cfg["theorem"]
    if cfg["preset"] == "fhn":
        cfg = {**cfg, "model": "fhn", "c": cfg["c"] if cfg["c"] is not None else 1e-9}
    elif cfg["preset"] == "pitchfork":
        cfg = {**cfg, "model": "pitchfork", "radius": cfg["radius"] if cfg["radius"] is not None else 2.0}
    model = model_from(cfg)
    spec = noise_spec({**cfg, "dim": model.m})
    frame = "raw"
    if theorem == "trivial":
        rep = criterion_trivial(model, cfg["eps0"], spec, cfg["p"], None, cfg["n_paths"])
    else:
        ens = _ensemble(cfg, model)
        if theorem == "continuous":
            if cfg["preset"] == "fhn":
                P, model = F.optimal_coordinate_change(model, np.array(_fhn_point()))
                ens = type(ens)(ens.points @ P.T, ens.provenance)
                frame = "lyapunov-transformed"
            rep = criterion_continuous(model, ens, spec, cfg["lam"], cfg["p"], None, cfg["n_paths"], frame)
        elif theorem == "discrete":
            lam = 1 / 12 if cfg["lam"] is None else cfg["lam"]
            rep = criterion_discrete(model, ens, spec, cfg["delta"], lam, cfg["gamma_star"], cfg["p"], None, None,
                                     cfg["n_paths"])
        else:
            if cfg["gamma_bar"] is None:
                raise ConfigError("gamma_bar: required for the dissipative discrete criterion")
            lam = 1 / 12 if cfg["lam"] is None else cfg["lam"]
            rep = criterion_discrete_dissipative(model, ens, spec, cfg["gamma_bar"], cfg["delta"], lam, cfg["p"],
                                                 None, None, cfg["n_paths"])
    d = rep.to_dict()
    if cfg["out"]:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(d, indent=2, sort_keys=True, default=_json_default))
        files.append("report.json")
    _emit(d, "json")
    return VERDICT_CODES[rep.verdict]


def cmd_experiment(cfg, files):
    from .experiments import run_preset

    out = cfg["out"]
    if not out:
        raise UsageError("experiment: --out DIR is required")
    params = dict(cfg.get("params") or {})
    params.setdefault("seed", cfg["seed"])
    try:
        res, written = run_preset(cfg["preset"], params, out)
    except TypeError as exc:
        raise ConfigError(f"params: {exc}") from None
    files.extend(written)
    print(json.dumps({"preset": cfg["preset"], "out": out, "files": written}, indent=2))
    return EXIT_PASS


COMMANDS = {"sample-noise": cmd_sample_noise, "pvar": cmd_pvar, "stopping-times": cmd_stopping_times,
            "estimate-en": cmd_estimate_en, "simulate": cmd_simulate, "audit": cmd_audit,
            "criterion": cmd_criterion, "experiment": cmd_experiment}


def config_hash(command, cfg):
    keep = {k: v for k, v in cfg.items() if k not in ("jobs", "config", "out", "format")}
    blob = json.dumps({"command": command, "version": __version__, **keep}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out, argv, command, cfg, files, started, elapsed):
    man = {"argv": list(argv), "command": command, "config_hash": config_hash(command, cfg), "seed": cfg["seed"],
           "jobs": cfg["jobs"], "version": __version__, "started": started, "wall_seconds": round(elapsed, 3),
           "files": sorted(set(files))}
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True, default=str))


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        ns = build_parser().parse_args(argv)
        cfg = resolve(ns.command, ns)
        files = []
        code = COMMANDS[ns.command](cfg, files)
        if cfg["out"]:
            write_manifest(cfg["out"], argv, ns.command, cfg, files, started, time.perf_counter() - t0)
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RstabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
