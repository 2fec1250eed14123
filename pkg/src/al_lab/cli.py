"""Command-line front end: ``al-lab <command> [options]``.

Options may also come from a flat ``key = value`` config file (``--config``);
flags override the file, which overrides the built-in defaults.  Keys are the
option names with dashes replaced by underscores.  Every output file starts
with the resolved configuration and the package version; CSV files carry it
as ``#`` comment lines, JSON files under a ``"header"`` key.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BoundaryCase, ConfigError, DegenerateF1, NoSaddle, NumericalError

log = logging.getLogger("al_lab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

DEFAULTS = {
    "common": {"out": ".", "threads": None, "log_level": "WARNING"},
    "spectrum": {"n": 6, "a": 5.0, "gamma": 0.0, "grid": 512, "z_max": 3.0,
                 "zero_state": False, "require_window": False},
    "orbit": {"n": 6, "a": 5.0, "omega": 1.0, "gamma": 0.0, "p": 0.0, "ear": 1,
              "t_range": (-2.0, 2.0), "samples": 201},
    "melnikov": {"n": 6, "omega": 1.3, "alpha1": 1.0, "alpha2": 1.0, "a_min": None,
                 "a_max": None, "na": 20, "ngamma": 20, "tol": 1e-10,
                 "a_equals_omega": False},
    "resonance": {"n": 3, "omega": 1.0, "alpha1": 1.0, "alpha2": 1.0, "eta": 0.0,
                  "ny": 101, "nxi": 101, "grid": 401},
    "evolve": {"n": 6, "a": 5.0, "omega": 1.3, "gamma": 0.0, "b1": 1e-2, "b2": 0.0,
               "epsilon": 0.0, "alpha1": 1.0, "alpha2": 1.0, "t_end": 1.0,
               "rel_tol": 1e-10, "abs_tol": 1e-12, "z_samples": None},
    "verify": {"quick": False, "only": None},
}


# ---------------------------------------------------------------------------
# parser

def _flag(p, name, **kw):
    p.add_argument("--" + name.replace("_", "-"), dest=name, default=argparse.SUPPRESS, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="al-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {}

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        parser.subcommands[name] = p
        p.add_argument("--config", type=Path, default=None, help="flat key = value file")
        _flag(p, "out", type=str, help="output directory")
        _flag(p, "threads", type=int, help="worker threads (default: AL_LAB_THREADS or all cores)")
        _flag(p, "log_level", type=str, help="logging level")
        return p

    p = command("spectrum", "discriminant scan and classified spectral points")
    _flag(p, "n", type=int)
    _flag(p, "a", type=float, help="uniform amplitude")
    _flag(p, "gamma", type=float, help="uniform phase")
    _flag(p, "grid", type=int, help="samples on the real axis and on the unit circle")
    _flag(p, "z_max", type=float)
    _flag(p, "zero_state", action="store_const", const=True)
    _flag(p, "require_window", action="store_const", const=True)

    p = command("orbit", "heteroclinic orbit, Melnikov vector and asymptotics")
    _flag(p, "n", type=int)
    _flag(p, "a", type=float)
    _flag(p, "omega", type=float)
    _flag(p, "gamma", type=float)
    _flag(p, "p", type=float)
    _flag(p, "ear", type=int, choices=(1, -1))
    _flag(p, "t_range", type=float, nargs=2, metavar=("T0", "T1"))
    _flag(p, "samples", type=int)

    p = command("melnikov", "kappa scan, zero surface and transversality")
    _flag(p, "n", type=int)
    _flag(p, "omega", type=float)
    _flag(p, "alpha1", type=float)
    _flag(p, "alpha2", type=float)
    _flag(p, "a_min", type=float)
    _flag(p, "a_max", type=float)
    _flag(p, "na", type=int)
    _flag(p, "ngamma", type=int)
    _flag(p, "tol", type=float)
    _flag(p, "a_equals_omega", action="store_const", const=True)

    p = command("resonance", "annulus fixed points, phase portrait and separatrices")
    _flag(p, "n", type=int)
    _flag(p, "omega", type=float)
    _flag(p, "alpha1", type=float)
    _flag(p, "alpha2", type=float)
    _flag(p, "eta", type=float)
    _flag(p, "ny", type=int)
    _flag(p, "nxi", type=int)
    _flag(p, "grid", type=int, help="contour grid size")

    p = command("evolve", "integrate the lattice and monitor invariants")
    _flag(p, "n", type=int)
    _flag(p, "a", type=float)
    _flag(p, "omega", type=float)
    _flag(p, "gamma", type=float)
    _flag(p, "b1", type=float)
    _flag(p, "b2", type=float)
    _flag(p, "epsilon", type=float)
    _flag(p, "alpha1", type=float)
    _flag(p, "alpha2", type=float)
    _flag(p, "t_end", type=float)
    _flag(p, "rel_tol", type=float)
    _flag(p, "abs_tol", type=float)
    _flag(p, "z_samples", type=complex, nargs="+")

    p = command("verify", "run the acceptance suite")
    _flag(p, "quick", action="store_const", const=True)
    _flag(p, "only", type=int, nargs="+")
    return parser


# ---------------------------------------------------------------------------
# configuration

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def read_config_file(path: Path, command: str, parser: argparse.ArgumentParser) -> dict:
    """Parse ``key = value`` lines, converting values with the matching option's type."""
    actions = {a.dest: a for a in parser.subcommands[command]._actions}  # noqa: SLF001
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        act = actions.get(key)
        if act is None or key in ("config", "help"):
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} for {command}")
        try:
            if act.const is True:
                out[key] = _bool(value)
            elif act.nargs in (2, "+"):
                out[key] = [act.type(v) for v in value.replace(",", " ").split()]
            elif value.lower() == "none":
                out[key] = None
            else:
                out[key] = act.type(value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return out


def resolve_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    cfg = dict(DEFAULTS["common"])
    cfg.update(DEFAULTS[args.command])
    if args.config is not None:
        cfg.update(read_config_file(args.config, args.command, parser))
    given = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    cfg.update(given)
    if cfg.get("threads") is None:
        env = os.environ.get("AL_LAB_THREADS")
        try:
            cfg["threads"] = int(env) if env else (os.cpu_count() or 1)
        except ValueError as exc:
            raise ConfigError(f"AL_LAB_THREADS must be an integer, got {env!r}") from exc
    _validate(args.command, cfg)
    return cfg


def _validate(command: str, cfg: dict) -> None:
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if "n" in cfg and cfg["n"] < 3:
        raise ConfigError("n must be >= 3")
    for key in ("tol", "rel_tol", "abs_tol"):
        if key in cfg and not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive")
    for key in ("grid", "samples", "na", "ngamma", "ny", "nxi"):
        if key in cfg and cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1")


def _window_message(a: float, N: int) -> str:
    from .lattice import amplitude_window
    lo, hi = amplitude_window(N)
    return (f"a = {a} is outside the amplitude window N tan(pi/N) < a < N tan(2 pi/N) "
            f"= ({lo:.17g}, {hi:.17g}) for N = {N}")


def _require_window(a: float, N: int) -> None:
    from .lattice import in_window
    if not in_window(a, N):
        raise ConfigError(_window_message(a, N))


# ---------------------------------------------------------------------------
# output helpers

def _header_items(command: str, cfg: dict) -> dict:
    items = {"artifact": "al_lab", "version": __version__, "command": command}
    for k in sorted(cfg):
        if k in ("out", "threads", "log_level"):
            continue  # do not affect results; kept out so reruns are byte-identical
        v = cfg[k]
        items[k] = [str(x) for x in v] if isinstance(v, (list, tuple)) else v
    return items


def csv_header(command: str, cfg: dict) -> str:
    return "".join(f"# {k} = {v}\n" for k, v in _header_items(command, cfg).items())


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def write_json(path: Path, command: str, cfg: dict, data) -> None:
    doc = {"header": _header_items(command, cfg), "data": _jsonable(data)}
    path.write_text(json.dumps(doc, indent=2, default=str) + "\n")


def _out_dir(cfg) -> Path:
    d = Path(cfg["out"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _g(x) -> str:
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# commands

def cmd_spectrum(cfg: dict) -> list[Path]:
    from .floquet import classify_spectral_point, discriminant, find_critical_points, uniform_spectral_points
    from .lattice import LatticeState

    N, a = cfg["n"], cfg["a"]
    if cfg["zero_state"]:
        a = 0.0
    elif cfg["require_window"]:
        _require_window(a, N)
    state = LatticeState.uniform(N, a * np.exp(1j * cfg["gamma"]))
    m = cfg["grid"]
    zmax = cfg["z_max"]
    if not zmax > 1:
        raise ConfigError("z_max must exceed 1")
    real = np.geomspace(1.0 / zmax, zmax, m)
    circle = np.exp(1j * np.linspace(0.0, 2 * math.pi, m, endpoint=False))
    out = _out_dir(cfg)
    rows = [csv_header("spectrum", cfg), "path,re_z,im_z,re_delta,im_delta,re_delta_tilde,im_delta_tilde\n"]
    for label, zs in (("real", real), ("circle", circle)):
        for z in zs:
            dv = discriminant(complex(z), state)
            dt = dv.delta_tilde
            rows.append(",".join([label, _g(z.real), _g(z.imag), _g(dv.delta.real),
                                  _g(dv.delta.imag), _g(dt.real), _g(dt.imag)]) + "\n")
    p1 = out / "spectrum.csv"
    p1.write_text("".join(rows))

    def point(sp, source):
        return {"source": source, "z": complex(sp.z), "kind": sp.kind,
                "algebraic_multiplicity": sp.algebraic_multiplicity,
                "residual_periodic": sp.residual_periodic,
                "residual_antiperiodic": sp.residual_antiperiodic,
                "abs_d1": sp.abs_d1, "abs_d2": sp.abs_d2, "D": sp.D}

    catalog = [point(classify_spectral_point(sp.z, state), "catalog")
               for sp in uniform_spectral_points(a, N)]
    critical = [point(sp, "critical_search") for sp in find_critical_points(state)]
    p2 = out / "points.json"
    write_json(p2, "spectrum", cfg, {"catalog": catalog, "critical_points": critical})
    return [p1, p2]


def cmd_orbit(cfg: dict) -> list[Path]:
    from .darboux import (OrbitParams, asymptotic_phase_shift, distance_to_circle,
                          even_heteroclinic_orbit, melnikov_vector_to_csv, orbit_to_csv)
    from .evolve import fit_decay_rate
    from .lattice import uniform_orbit

    N, a = cfg["n"], cfg["a"]
    _require_window(a, N)
    P = OrbitParams(a, cfg["omega"], cfg["gamma"], cfg["p"], cfg["ear"], N)
    t0, t1 = cfg["t_range"]
    ts = np.array([t0]) if t0 == t1 else np.linspace(t0, t1, cfg["samples"])
    out = _out_dir(cfg)
    head = csv_header("orbit", cfg)
    p1 = out / "orbit.csv"
    p1.write_text(orbit_to_csv(P, ts, head))
    p2 = out / "melnikov_vector.csv"
    p2.write_text(melnikov_vector_to_csv(P, ts, head))
    centre = -P.p / P.mu
    tf = centre + np.linspace(2.0 / P.mu, 5.0 / P.mu, 40)
    Q = even_heteroclinic_orbit(P, tf)
    qc = uniform_orbit(P.a, P.omega, P.gamma, tf)[:, None] * np.ones(N)
    rate, icpt, r2 = fit_decay_rate(tf - centre, distance_to_circle(Q, qc))
    th_p, th_m = asymptotic_phase_shift(P)
    p3 = out / "asymptotics.json"
    write_json(p3, "orbit", cfg, {
        "mu": P.mu, "sigma": 2 * P.mu, "fitted_decay_rate": rate, "fit_intercept": icpt,
        "fit_r2": r2, "fit_window": [float(tf[0]), float(tf[-1])],
        "phi": P.phi, "theta_plus": th_p, "theta_minus": th_m, "double_point": P.z,
    })
    return [p1, p2, p3]


def cmd_melnikov(cfg: dict) -> list[Path]:
    from .lattice import amplitude_window
    from .melnikov import melnikov_profile, transversality_scan, zero_surface_scan

    N, alpha = cfg["n"], (cfg["alpha1"], cfg["alpha2"])
    lo, hi = amplitude_window(N)
    hi = min(hi, 3 * lo)
    for key in ("a_min", "a_max"):
        if cfg[key] is not None and not lo < cfg[key] < amplitude_window(N)[1]:
            raise ConfigError(_window_message(cfg[key], N))
    a_min = cfg["a_min"] if cfg["a_min"] is not None else lo
    a_max = cfg["a_max"] if cfg["a_max"] is not None else hi
    if a_min > a_max:
        raise ConfigError("a_min must not exceed a_max")
    na, ng = cfg["na"], cfg["ngamma"]
    if a_min == a_max or na == 1:
        a_grid = np.array([a_min if cfg["a_min"] is not None else 0.5 * (a_min + a_max)])
    else:
        # open window edges are never sampled
        a_grid = np.linspace(a_min, a_max, na + 2)
        a_grid = a_grid[1 if cfg["a_min"] is None else 0: -1 if cfg["a_max"] is None else None]
        if a_grid.size != na:
            a_grid = np.linspace(a_grid[0], a_grid[-1], na)
    gammas = np.linspace(0.0, 2 * math.pi, ng, endpoint=False)
    tol, threads = cfg["tol"], cfg["threads"]
    same = cfg["a_equals_omega"]
    omegas = a_grid if same else np.full(a_grid.size, cfg["omega"])

    head = csv_header("melnikov", cfg)
    out = _out_dir(cfg)
    krows = [head, "a,gamma,omega,f1,f2,kappa\n"]
    for a, om in zip(a_grid, omegas):
        prof = melnikov_profile(float(a), float(om), N, tol=tol)
        for g in gammas:
            f1, f2 = (float(v) for v in prof.f(g))
            k = math.nan if abs(f1) <= 1e-12 * prof.scale() else -f2 / (4 * om * f1)
            krows.append(",".join(_g(v) for v in (a, g, om, f1, f2, k)) + "\n")
    p1 = out / "kappa_scan.csv"
    p1.write_text("".join(krows))

    zrows = [head, "a0,omega,gamma_seed,gamma0,residual_M,dM_dgamma0,kappa,status\n"]
    trans = []
    for a, om in zip(a_grid, omegas) if same else [(None, cfg["omega"])]:
        ag = np.array([a]) if same else a_grid
        res = zero_surface_scan(ag, gammas, alpha, float(om), N, tol=tol, threads=threads)
        for k, r in enumerate(res):
            aa, seed = ag[k // ng], gammas[k % ng]
            if isinstance(r, Exception):
                zrows.append(",".join([_g(aa), _g(om), _g(seed), "nan", "nan", "nan", "nan",
                                       type(r).__name__]) + "\n")
            else:
                kap = r.kappa if r.kappa is not None else math.nan
                zrows.append(",".join(_g(v) for v in (aa, om, seed, r.gamma0, r.residual_M,
                                                      r.dM_dgamma0, kap)) + ",ok\n")
        trans.extend(dict(row, omega=float(om)) for row in
                     transversality_scan(ag, gammas, alpha, float(om), N, tol=tol, threads=threads))
    p2 = out / "zero_surface.csv"
    p2.write_text("".join(zrows))
    p3 = out / "transversality.json"
    write_json(p3, "melnikov", cfg, {
        "cells": len(trans),
        "transversal_cells": sum(r["transversal"] for r in trans),
        "root_cells": sum(r["root"] for r in trans),
        "rows": trans,
    })
    return [p1, p2, p3]


def cmd_resonance(cfg: dict) -> list[Path]:
    from .resonance import (leading_fixed_points, phase_portrait_csv, refine_fixed_points,
                            separatrix_csv, separatrix_levels)

    N, omega, eta = cfg["n"], cfg["omega"], cfg["eta"]
    alpha = (cfg["alpha1"], cfg["alpha2"])
    if not omega > 0:
        raise ConfigError("omega must be positive")
    fps = leading_fixed_points(alpha, omega, N) if eta == 0 else refine_fixed_points(eta, alpha, omega, N=N)
    head = csv_header("resonance", cfg)
    out = _out_dir(cfg)
    p1 = out / "phase_portrait.csv"
    p1.write_text(phase_portrait_csv(eta, alpha, omega, N, cfg["ny"], cfg["nxi"], header=head))
    p2 = out / "fixed_points.json"
    write_json(p2, "resonance", cfg, [f.to_dict() for f in fps])
    try:
        levels = separatrix_levels(eta, alpha, omega, N, n_grid=cfg["grid"], fixed_points=fps)
    except NoSaddle:
        levels = []
    p3 = out / "separatrix.csv"
    p3.write_text(separatrix_csv(levels, header=head))
    return [p1, p2, p3]


def cmd_evolve(cfg: dict) -> list[Path]:
    from .evolve import IntegratorSpec, integrate, lattice_field, monitor_invariants, trajectory_csv
    from .floquet import double_point
    from .lattice import BlockCoords, LatticeSize, PerturbationParams, from_block_coords, vtheta_angle

    N, a = cfg["n"], cfg["a"]
    bc = BlockCoords(a=a, gamma=cfg["gamma"], b1=cfg["b1"], b2=cfg["b2"],
                     c=(0j,) * (N // 2 - 1), vtheta=vtheta_angle(a, N))
    init = from_block_coords(bc, LatticeSize(N))
    pert = PerturbationParams(cfg["epsilon"], cfg["alpha1"], cfg["alpha2"])
    spec = IntegratorSpec(rel_tol=cfg["rel_tol"], abs_tol=cfg["abs_tol"])
    if not cfg["t_end"] > 0:
        raise ConfigError("t_end must be positive")
    traj = integrate(lattice_field(cfg["omega"], pert), init, (0.0, cfg["t_end"]), spec)
    if cfg["z_samples"]:
        zs = tuple(complex(z) for z in cfg["z_samples"])
    else:
        from .acceptance import ISOSPECTRAL_Z
        zs = ISOSPECTRAL_Z
    seed = double_point(a, N)
    rep = monitor_invariants(traj, zs, cfg["epsilon"], f1_seed=complex(seed),
                             stride=max(1, len(traj.times) // 200))
    head = csv_header("evolve", cfg)
    out = _out_dir(cfg)
    p1 = out / "trajectory.csv"
    p1.write_text(trajectory_csv(traj, head))
    p2 = out / "drift_report.json"
    write_json(p2, "evolve", cfg, {
        "accepted_steps": traj.accepted, "rejected_steps": traj.rejected,
        "max_projection_residual": float(np.max(traj.projection_residuals)),
        "z_samples": list(zs),
        "invariants": json.loads(rep.to_json()),
    })
    return [p1, p2]


def cmd_verify(cfg: dict) -> int:
    from .acceptance import run_all

    results = run_all(quick=cfg["quick"], only=set(cfg["only"]) if cfg["only"] else None)
    for r in results:
        print(r.line())
    failed = [r.to_dict() for r in results if not r.passed]
    out = Path(cfg["out"])
    if cfg["out"] != ".":
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "verify.json", "verify", cfg, [r.to_dict() for r in results])
    if failed:
        print(json.dumps({"failed": _jsonable(failed)}, indent=2, default=str), file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


COMMANDS = {"spectrum": cmd_spectrum, "orbit": cmd_orbit, "melnikov": cmd_melnikov,
            "resonance": cmd_resonance, "evolve": cmd_evolve, "verify": cmd_verify}


def _fail(code: int, kind: str, exc: BaseException) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args, parser)
    except (ConfigError, ValueError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    logging.basicConfig(level=str(cfg["log_level"]).upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        result = COMMANDS[args.command](cfg)
    except (ConfigError, BoundaryCase) as exc:
        # BoundaryCase: the parameters sit in the excluded band around the bifurcation
        return _fail(EXIT_CONFIG, "config", exc)
    except (NumericalError, DegenerateF1) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", exc)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    if isinstance(result, int):
        return result
    for p in result:
        print(p)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
