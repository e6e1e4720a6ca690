"""Command-line front end.

Exit codes: 0 success, 1 invalid configuration or failed cross-check,
2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core import (REDUCED, ConductivityResult, KuboError, NoConvergence, PhysicalConstants,
                   jsonable, parse_sweep, reciprocal_of)
from .fermi import OccupationSpec

EXIT_OK, EXIT_INVALID, EXIT_NO_CONVERGENCE = 0, 1, 2
BUILTIN_MODELS = ("free", "chain", "ring", "dimerized", "planewave", "graphene")
_AXES = "xyz"


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def component_names(d: int) -> list[str]:
    return [f"{_AXES[l]}{_AXES[m]}" for l in range(d) for m in range(d)]


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def emit_csv(result: ConductivityResult, path) -> None:
    """Header plus one row per frequency; 17 significant digits, LF endings."""
    d = result.dim
    header = ["omega"]
    for name in component_names(d):
        header += [f"re_sigma_{name}", f"im_sigma_{name}"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, w in enumerate(result.omegas):
            row = [_fmt(w)]
            for z in result.sigma[i].reshape(-1):
                row += [_fmt(z.real), _fmt(z.imag)]
            writer.writerow(row)


def read_csv(path):
    """Inverse of ``emit_csv``: returns (omegas, sigma[n, d, d])."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n_comp = (len(header) - 1) // 2
    d = int(round(math.sqrt(n_comp)))
    data = np.array([[float(x) for x in r] for r in body]).reshape(len(body), -1)
    if not body:
        return np.zeros(0), np.zeros((0, d, d), dtype=complex)
    omegas = data[:, 0]
    sigma = (data[:, 1::2] + 1j * data[:, 2::2]).reshape(-1, d, d)
    return omegas, sigma


def emit_json(result: ConductivityResult, path) -> None:
    payload = {"omega": result.omegas, "components": component_names(result.dim),
               "sigma": [[[z.real, z.imag] for z in s.reshape(-1)] for s in result.sigma]}
    Path(path).write_text(json.dumps(jsonable(payload), indent=1) + "\n", encoding="utf-8")


def _add_physics(p, gamma=True):
    p.add_argument("--beta", type=float, default=1.0, help="inverse temperature")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--mu", type=float, help="chemical potential")
    g.add_argument("--density", type=float, help="target particle density")
    if gamma:
        p.add_argument("--gamma", type=float, default=0.5, help="scattering rate")


def _add_model(p):
    p.add_argument("--model", default="ring", help=f"builtin {BUILTIN_MODELS} or a model-file path")
    p.add_argument("--L", type=int, default=None, help="grid size / torus cells / free-gas box")
    p.add_argument("--cutoff", type=float, default=None, help="free-gas index or plane-wave |G| cutoff")
    p.add_argument("--t", type=float, default=1.0, help="hopping")
    p.add_argument("--t2", type=float, default=0.5, help="second hopping (dimerized chain)")
    p.add_argument("--phi", type=float, default=0.0, help="ring flux phase")
    p.add_argument("--a", type=float, default=1.0, help="lattice constant")
    p.add_argument("--v", type=float, default=0.0, help="plane-wave cosine potential amplitude")
    p.add_argument("--convention", choices=("cell", "atomic"), default="cell")
    p.add_argument("--eps-deg", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kubolab", description="Kubo conductivity engine")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("conductivity", help="conductivity tensor over a frequency sweep")
    _add_model(p)
    _add_physics(p)
    p.add_argument("--method", choices=("trace", "bloch", "closed-form", "auto"), default="auto")
    p.add_argument("--omega", default="0:2:5", help="min:max:count or comma list")
    p.add_argument("--rtol", type=float, default=1e-6)
    p.add_argument("--max-refinements", type=int, default=6)
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--config", default=None, help="re-run from a metadata sidecar")

    p = sub.add_parser("effective-mass", help="inverse effective-mass tensor")
    _add_model(p)
    _add_physics(p, gamma=False)
    p.add_argument("--form", choices=("matrix_element", "band_velocity", "band_curvature", "all"),
                   default="all")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--config", default=None)

    p = sub.add_parser("simulate-quantum", help="Poisson-reset quantum dynamics")
    _add_model(p)
    _add_physics(p)
    p.add_argument("--omega", type=float, default=0.0)
    p.add_argument("--field", default="1e-3", help="field components, comma separated")
    p.add_argument("--n-events", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta-nodes", type=int, default=8)
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--config", default=None)

    p = sub.add_parser("simulate-classical", help="classical Drude Monte Carlo")
    _add_physics(p)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=0.0)
    p.add_argument("--field", default="1.0")
    p.add_argument("--n-events", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--config", default=None)

    p = sub.add_parser("validate", help="run cross-check suites")
    p.add_argument("--suite", choices=("oracle",), default="oracle")
    p.add_argument("--tol", type=float, default=1e-9)
    return parser


def _occupation(args) -> OccupationSpec:
    mu, density = args.mu, args.density
    if mu is None and density is None:
        mu = 0.0
    if not (args.beta > 0):
        raise ConfigError("--beta must be > 0")
    return OccupationSpec(args.beta, mu=mu, density=density)


def _is_file_model(name: str) -> bool:
    return name not in BUILTIN_MODELS


def _resolve_L(args, default: int) -> int:
    return default if args.L is None else args.L


def _finite_model(args):
    """Finite (torus or box) model for the trace route and dynamics."""
    from .graphene import GrapheneParams, graphene_tight_binding
    from .models import build_free_gas, dimerized_chain, free_gas_cutoff, load_tight_binding, ring

    name = args.model
    if name == "free":
        L = float(_resolve_L(args, 400))
        mu = args.mu if args.mu is not None else 0.0
        cutoff = int(args.cutoff) if args.cutoff else free_gas_cutoff(L, args.beta, mu)
        return build_free_gas(L, 1, cutoff)
    if name in ("ring", "chain"):
        return ring(_resolve_L(args, 16), args.t, args.phi, args.a)[0]
    if name == "dimerized":
        return dimerized_chain(_resolve_L(args, 16), args.t, args.t2, args.a)[0]
    if name == "graphene":
        return graphene_tight_binding(GrapheneParams(args.a, args.t)).finite(_resolve_L(args, 8), args.convention)
    if name == "planewave":
        raise ConfigError("the plane-wave model has no finite representation; use --method bloch")
    return load_tight_binding(name).finite(_resolve_L(args, 8), args.convention)


def _bloch_model(args):
    from .graphene import GrapheneParams, graphene_bloch, graphene_tight_binding
    from .models import build_planewave_bloch, dimerized_chain, load_tight_binding, ring

    name = args.model
    if name in ("ring", "chain"):
        return ring(2, args.t, args.phi, args.a)[1]
    if name == "dimerized":
        return dimerized_chain(2, args.t, args.t2, args.a)[1]
    if name == "graphene":
        if args.convention == "atomic":
            return graphene_tight_binding(GrapheneParams(args.a, args.t)).bloch("atomic")
        return graphene_bloch(GrapheneParams(args.a, args.t))
    if name == "planewave":
        lattice = reciprocal_of([[args.a]])
        cutoff = args.cutoff if args.cutoff is not None else 0.0
        V = {(1,): args.v, (-1,): args.v} if args.v else {}
        return build_planewave_bloch(lattice, V, cutoff)
    if name == "free":
        raise ConfigError("the free gas is a finite model; use --method trace")
    return load_tight_binding(name).bloch(args.convention)


def _pick_method(args) -> str:
    if args.method != "auto":
        return args.method
    if args.model == "graphene" and args.convention == "cell":
        return "closed-form"
    if args.model == "free" or _is_file_model(args.model):
        return "trace"
    return "bloch"


def _run_conductivity(args) -> tuple[ConductivityResult, dict]:
    from .graphene import GrapheneParams, conductivity_graphene_closed_form
    from .kubo_bloch import conductivity_bloch
    from .kubo_trace import conductivity_trace

    occ = _occupation(args)
    grid = parse_sweep(args.omega)
    method = _pick_method(args)
    if method == "trace":
        result = conductivity_trace(_finite_model(args), occ, args.gamma, grid, eps_deg=args.eps_deg)
    elif method == "bloch":
        result = conductivity_bloch(_bloch_model(args), occ, args.gamma, grid, args.L,
                                    eps_deg=args.eps_deg, rtol=args.rtol,
                                    max_refinements=args.max_refinements)
    else:
        if args.model != "graphene":
            raise ConfigError("closed-form is available for --model graphene only")
        result = conductivity_graphene_closed_form(GrapheneParams(args.a, args.t), occ, args.gamma,
                                                   grid, _resolve_L(args, 128), eps_deg=args.eps_deg)
    return result, {"method_resolved": method}


def _write_sidecar(path: str, config: dict, extra: dict, started: float) -> None:
    meta = {"config": config, "version": __version__, "wall_time_s": time.time() - started, **extra}
    Path(path + ".meta.json").write_text(json.dumps(jsonable(meta), indent=1, sort_keys=True) + "\n",
                                         encoding="utf-8")


def _config_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("config",)}


def _load_config(args, argv_explicit: set) -> argparse.Namespace:
    data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cfg = data.get("config", data)
    if cfg.get("command") != args.command:
        raise ConfigError(f"sidecar is for command {cfg.get('command')!r}")
    merged = dict(cfg)
    for key in argv_explicit:
        merged[key] = getattr(args, key)
    merged["config"] = None
    return argparse.Namespace(**merged)


def _explicit_keys(parser, argv) -> set:
    keys = set()
    for tok in argv:
        if tok.startswith("--") and tok != "--config":
            keys.add(tok[2:].split("=")[0].replace("-", "_"))
        elif tok == "-o":
            keys.add("output")
    return keys


def _field(text: str, d: int) -> np.ndarray:
    vals = [float(x) for x in str(text).split(",")]
    if len(vals) == 1 and d > 1:
        vals = vals + [0.0] * (d - 1)
    if len(vals) != d:
        raise ConfigError(f"--field needs {d} components")
    return np.array(vals)


def _print_rows(rows):
    for name, value in rows:
        print(f"{name:>24s}  {value}")


def _cmd_conductivity(args, started) -> int:
    result, extra = _run_conductivity(args)
    if args.output:
        (emit_csv if args.format == "csv" else emit_json)(result, args.output)
        _write_sidecar(args.output, _config_dict(args), {**extra, "result": result.metadata}, started)
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        names = component_names(result.dim)
        writer.writerow(["omega"] + [f"{p}_sigma_{n}" for n in names for p in ("re", "im")])
        for i, w in enumerate(result.omegas):
            writer.writerow([_fmt(w)] + [_fmt(v) for z in result.sigma[i].reshape(-1) for v in (z.real, z.imag)])
    return EXIT_OK


def _cmd_effective_mass(args, started) -> int:
    from .kubo_bloch import EFFECTIVE_MASS_FORMS, effective_mass

    model = _bloch_model(args)
    occ = _occupation(args)
    forms = EFFECTIVE_MASS_FORMS if args.form == "all" else (args.form,)
    out = {}
    for form in forms:
        t = effective_mass(model, occ, args.L, form, eps_deg=args.eps_deg)
        out[form] = t.inv_m
        print(f"{form}: inv_m = {np.array2string(t.inv_m, precision=12)}  density = {t.density:.12g}")
    if args.output:
        Path(args.output).write_text(json.dumps(jsonable(out), indent=1) + "\n", encoding="utf-8")
        _write_sidecar(args.output, _config_dict(args), {}, started)
    return EXIT_OK


def _cmd_simulate_quantum(args, started) -> int:
    from .dynamics import DriveSpec, ScatteringProcess, simulate_quantum_ac, simulate_quantum_dc
    from .kubo_trace import conductivity_trace

    model = _finite_model(args)
    occ = _occupation(args)
    E = _field(args.field, model.dim)
    process = ScatteringProcess(args.gamma, args.seed, args.n_events)
    if args.omega == 0:
        res = simulate_quantum_dc(model, occ, process, E)
    else:
        res = simulate_quantum_ac(model, occ, process, DriveSpec(tuple(E), args.omega, args.theta_nodes))
    kubo = conductivity_trace(model, occ, args.gamma, [args.omega]).sigma[0] @ E
    rows = [("estimate", np.array2string(res.current, precision=10)),
            ("stderr", np.array2string(res.stderr, precision=4)),
            ("kubo_trace sigma.E", np.array2string(kubo, precision=10))]
    _print_rows(rows)
    if args.output:
        payload = {"estimate": res.current, "stderr": res.stderr, "kubo": kubo, "metadata": res.metadata}
        Path(args.output).write_text(json.dumps(jsonable(payload), indent=1, sort_keys=True) + "\n",
                                     encoding="utf-8")
        _write_sidecar(args.output, _config_dict(args), {}, started)
    return EXIT_OK


def _cmd_simulate_classical(args, started) -> int:
    from .dynamics import DriveSpec, ScatteringProcess, simulate_classical

    density = args.density if args.density is not None else 1.0
    E = _field(args.field, len(str(args.field).split(",")))
    drive = DriveSpec(tuple(E), args.omega, dc=args.omega == 0)
    res = simulate_classical(ScatteringProcess(args.gamma, args.seed, args.n_events), args.beta,
                             density, args.mass, drive)
    analytic = np.array(res.metadata["analytic"], dtype=complex)
    _print_rows([("estimate", np.array2string(res.current, precision=10)),
                 ("stderr", np.array2string(res.stderr, precision=4)),
                 ("analytic Drude", np.array2string(analytic, precision=10))])
    if args.output:
        payload = {"estimate": res.current, "stderr": res.stderr, "analytic": analytic,
                   "metadata": res.metadata}
        Path(args.output).write_text(json.dumps(jsonable(payload), indent=1, sort_keys=True) + "\n",
                                     encoding="utf-8")
        _write_sidecar(args.output, _config_dict(args), {}, started)
    return EXIT_OK


def oracle_suite(tol: float = 1e-9) -> list[tuple[str, float, bool]]:
    """Trace-vs-Bloch and closed-form-vs-Bloch relative deviations."""
    import warnings

    from .graphene import GrapheneParams, conductivity_graphene_closed_form, graphene_bloch, graphene_tight_binding
    from .kubo_bloch import conductivity_bloch
    from .kubo_trace import conductivity_trace
    from .models import dimerized_chain, ring

    occ = OccupationSpec(2.0, mu=0.0)
    omegas = np.linspace(0.0, 2.0, 5)
    gamma = 0.3
    out = []

    def rel(a, b):
        return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for L in (8, 16):
            for name, fm in (("ring", ring(L)[0]), ("dimerized", dimerized_chain(L)[0]),
                             ("graphene", graphene_tight_binding().finite(L))):
                t = conductivity_trace(fm, occ, gamma, omegas).sigma
                b = conductivity_bloch(fm.bloch, occ, gamma, omegas, L).sigma
                dev = rel(t, b)
                out.append((f"trace vs bloch {name} L={L}", dev, dev <= tol))
        p = GrapheneParams()
        c = conductivity_graphene_closed_form(p, OccupationSpec(4.0, mu=0.0), 0.2, [0, 1, 2, 3], 32).sigma
        b = conductivity_bloch(graphene_bloch(p), OccupationSpec(4.0, mu=0.0), 0.2, [0, 1, 2, 3], 32).sigma
        dev = rel(c, b)
        out.append(("closed form vs bloch graphene L=32", dev, dev <= tol))
    return out


def _cmd_validate(args, started) -> int:
    results = oracle_suite(args.tol)
    ok = True
    for name, dev, passed in results:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<40s} max rel dev {dev:.3e}")
    return EXIT_OK if ok else EXIT_INVALID


_COMMANDS = {
    "conductivity": _cmd_conductivity,
    "effective-mass": _cmd_effective_mass,
    "simulate-quantum": _cmd_simulate_quantum,
    "simulate-classical": _cmd_simulate_classical,
    "validate": _cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    started = time.time()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_INVALID
        if getattr(args, "config", None):
            args = _load_config(args, _explicit_keys(parser, argv))
        return _COMMANDS[args.command](args, started)
    except NoConvergence as exc:
        print(f"error: no convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ConfigError, KuboError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
