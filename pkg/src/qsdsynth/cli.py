"""Command-line entry point.

Exit codes: 0 success, 1 unreadable or invalid input, 2 infeasible or not
stabilizable, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .hybrid import (HybridState, LyapunovDesign, attractor_membership, attractor_outer_radius,
                     lyapunov_value, simulate, varpi)
from .linalg import lambda_min
from .plant import PlantSpec, build_closed_loop
from .sdp import SolverOptions
from .synthesis import (DEFAULT_RHO_GRID, SIGMA_SAFETY, THEOREM_MARGIN, CertificateVars,
                        NotStabilizableError, SynthesisError, assemble_M, certify_gain,
                        check_theorem1, find_multipliers, run_algorithm1, sigma_star)

EXIT_OK, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or inconsistent input file."""


# -- configuration ------------------------------------------------------------

@dataclass
class AlgorithmConfig:
    epsilon: float = 1e-4
    k_max: int = 200
    rho_grid: tuple = DEFAULT_RHO_GRID
    theorem_margin: float = THEOREM_MARGIN
    sigma_safety: float = SIGMA_SAFETY
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class SimulationConfig:
    x0: np.ndarray | None = None
    tau0: float = 0.0
    t_max: float = 30.0
    j_max: int | None = None
    samples_per_period: int = 50


@dataclass
class RunConfig:
    plant: PlantSpec
    algorithm: AlgorithmConfig
    simulation: SimulationConfig


def _matrix(value, rows, cols, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1 and arr.size == rows * cols:
        arr = arr.reshape(rows, cols)
    if arr.shape != (rows, cols):
        raise ConfigError(f"{name} must be {rows}x{cols}, got shape {arr.shape}")
    return arr


def _positive(value, name):
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be positive")
    return value


def parse_config(doc: dict) -> RunConfig:
    try:
        p = doc["plant"]
        n_p, n_u = int(p["n_p"]), int(p["n_u"])
        if n_p < 1 or n_u < 1:
            raise ConfigError("n_p and n_u must be positive")
        plant = PlantSpec(_matrix(p["A_p"], n_p, n_p, "A_p"), _matrix(p["B_p"], n_p, n_u, "B_p"),
                          np.asarray(p["delta"], dtype=float), _positive(p["T"], "T"))

        a = doc.get("algorithm", {})
        sdp = a.get("sdp", {})
        solver = SolverOptions(**{k: (int(v) if k == "max_iter" else _positive(v, k))
                                  for k, v in sdp.items()})
        grid = tuple(float(r) for r in a.get("rho_grid", DEFAULT_RHO_GRID))
        if not grid or not all(0.0 < r < 1.0 for r in grid):
            raise ConfigError("rho_grid entries must lie in (0, 1)")
        algo = AlgorithmConfig(
            epsilon=_positive(a.get("epsilon", 1e-4), "epsilon"),
            k_max=int(a.get("k_max", 200)),
            rho_grid=grid,
            theorem_margin=_positive(a.get("theorem_margin", THEOREM_MARGIN), "theorem_margin"),
            sigma_safety=_positive(a.get("sigma_safety", SIGMA_SAFETY), "sigma_safety"),
            solver=solver,
        )
        if algo.k_max < 1:
            raise ConfigError("k_max must be at least 1")

        s = doc.get("simulation", {})
        sim = SimulationConfig(t_max=float(s.get("t_max", 30.0)),
                               samples_per_period=int(s.get("samples_per_period", 50)))
        if s.get("j_max") is not None:
            sim.j_max = int(s["j_max"])
        if "x0" in s:
            x0 = np.asarray(s["x0"], dtype=float).ravel()
            if x0.size == plant.n + 1:
                sim.x0, sim.tau0 = x0[:-1], float(x0[-1])
            elif x0.size == plant.n:
                sim.x0 = x0
            else:
                raise ConfigError(f"x0 must have {plant.n} or {plant.n + 1} entries")
        if not (0.0 <= sim.tau0 <= plant.period):
            raise ConfigError("initial clock must lie in [0, T]")
        if sim.t_max < 0 or sim.samples_per_period < 1:
            raise ConfigError("invalid simulation horizon or sampling density")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"missing or malformed field: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return RunConfig(plant, algo, sim)


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


# -- deterministic output -------------------------------------------------------

def _fmt(x: float) -> str:
    return format(x, ".17g")


def dumps(obj, indent: int = 2, level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits; NaN becomes null."""
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj)) if math.isfinite(obj) else "null"
    if obj is None:
        return "null"
    return json.dumps(obj)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# -- designs ------------------------------------------------------------------

def design_document(vars_: CertificateVars, c, sigma, iterations, history, status) -> dict:
    return {
        "K": vars_.K, "P": vars_.P,
        "S1": np.diag(vars_.S1), "S2": np.diag(vars_.S2), "rho": vars_.rho,
        "c": c, "sigma": sigma, "iterations": iterations, "status": status,
        "history": [{"k": h["k"], "c": h["c"], "lambda_max_MI2": h["lambda_max_MI2"],
                     "status": h["status"]} for h in history],
    }


def _design_arrays(doc, plant: PlantSpec):
    try:
        K = _matrix(doc["K"], plant.n_u, plant.n, "K")
        P = _matrix(doc["P"], plant.n, plant.n, "P") if doc.get("P") is not None else None
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed design: {exc}") from exc
    mult = None
    if P is not None and all(doc.get(k) is not None for k in ("S1", "S2", "rho")):
        mult = (np.asarray(doc["S1"], dtype=float), np.asarray(doc["S2"], dtype=float),
                float(doc["rho"]))
    return K, P, mult


def resolve_certificate(doc, plant: PlantSpec, algo: AlgorithmConfig, gain_only: bool = False):
    """Complete a design file into a certificate.

    Returns ``(vars, source)`` where ``source`` says how the multipliers were
    obtained, or ``(None, reason)`` when no certificate was found.
    """
    K, P, mult = _design_arrays(doc, plant)
    if gain_only or P is None:
        v = certify_gain(K, plant, algo.rho_grid, algo.solver)
        return (v, "gain-search") if v is not None else (None, "gain-search-infeasible")
    if mult is not None:
        return CertificateVars(P, K, *mult), "supplied"
    found = find_multipliers(P, K, plant, algo.solver)
    if found is None:
        return None, "multiplier-search-infeasible"
    return CertificateVars(P, K, *found), "multiplier-search"


def _fallback_vars(doc, plant):
    """Certificate-shaped placeholder used to report ``lambda_max(M)`` for a failed search."""
    K, P, _ = _design_arrays(doc, plant)
    if P is None:
        P = np.eye(plant.n)
    rho = 0.5
    s1 = rho / float(plant.delta @ plant.delta) * np.ones(plant.n_u)
    return CertificateVars(P, K, s1, np.full(plant.n_u, 1e-8), rho)


# -- commands -----------------------------------------------------------------

def cmd_synthesize(args) -> int:
    cfg = parse_config(_load_json(args.config))
    a = cfg.algorithm
    try:
        res = run_algorithm1(cfg.plant, a.epsilon, a.k_max, a.rho_grid, a.solver, a.sigma_safety)
    except NotStabilizableError as exc:
        print(f"not stabilizable: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SynthesisError as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    doc = design_document(res.vars, res.c, res.sigma, res.iterations, res.history, res.status)
    _write(args.out, dumps(doc) + "\n")
    print(dumps({"status": res.status, "c": res.c, "iterations": res.iterations}))
    if res.status == "solver-failure":
        return EXIT_SOLVER
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = parse_config(_load_json(args.config))
    doc = _load_json(args.design)
    v, source = resolve_certificate(doc, cfg.plant, cfg.algorithm, args.gain_only)
    report = {"multiplier_source": source}
    if v is None:
        probe = _fallback_vars(doc, cfg.plant)
        rep = check_theorem1(probe, cfg.plant, cfg.algorithm.theorem_margin)
        report.update(passed=False, trace_residual=rep.trace_residual,
                      lambda_max_M=rep.lambda_max_M, lambda_max_MI2=rep.lambda_max_MI2,
                      sigma=None, multipliers=None)
    else:
        rep = check_theorem1(v, cfg.plant, cfg.algorithm.theorem_margin)
        sigma = None
        if rep.passed:
            sigma = sigma_star(v.P, assemble_M(v, cfg.plant), cfg.plant.period,
                               cfg.algorithm.sigma_safety)
        report.update(passed=rep.passed, trace_residual=rep.trace_residual,
                      lambda_max_M=rep.lambda_max_M, lambda_max_MI2=rep.lambda_max_MI2,
                      lambda_min_P=rep.lambda_min_P, sigma=sigma,
                      multipliers={"S1": np.diag(v.S1), "S2": np.diag(v.S2), "rho": v.rho},
                      K=v.K, P=v.P)
    text = dumps(report) + "\n"
    if args.out:
        _write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK if report["passed"] else EXIT_INFEASIBLE


def _lyapunov_design(doc, cfg: RunConfig):
    v, source = resolve_certificate(doc, cfg.plant, cfg.algorithm)
    if v is None:
        return None, None
    sigma = doc.get("sigma")
    if sigma is None or source != "supplied":
        sigma = sigma_star(v.P, assemble_M(v, cfg.plant), cfg.plant.period, cfg.algorithm.sigma_safety)
    return v, LyapunovDesign.from_plant(cfg.plant, v.P, float(sigma))


def cmd_simulate(args) -> int:
    cfg = parse_config(_load_json(args.config))
    doc = _load_json(args.design)
    if cfg.simulation.x0 is None:
        raise ConfigError("simulation.x0 is required")
    v, design = _lyapunov_design(doc, cfg)
    if v is None:
        print("design has no valid certificate", file=sys.stderr)
        return EXIT_INFEASIBLE
    s = cfg.simulation
    arc = simulate(cfg.plant, v.K, HybridState(s.x0, s.tau0), s.t_max, s.j_max, s.samples_per_period)
    n = cfg.plant.n
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "j", "tau"] + [f"xi_{i + 1}" for i in range(n)] + ["V", "in_attractor"])
        for t, j, tau, xi in arc.samples():
            state = HybridState(xi, tau)
            w.writerow([_fmt(t), j, _fmt(tau)] + [_fmt(x) for x in xi]
                       + [_fmt(lyapunov_value(design, state)), int(attractor_membership(design, state))])
    print(dumps({"jumps": arc.n_jumps, "rows": sum(len(seg.times) for seg in arc.segments)}))
    return EXIT_OK


def cmd_attractor(args) -> int:
    cfg = parse_config(_load_json(args.config))
    doc = _load_json(args.design)
    K, P, _ = _design_arrays(doc, cfg.plant)
    if P is None:
        v, _ = resolve_certificate(doc, cfg.plant, cfg.algorithm)
        if v is None:
            print("design has no valid certificate", file=sys.stderr)
            return EXIT_INFEASIBLE
        P = v.P
    if not lambda_min(P) > 0:
        print("P is not positive definite", file=sys.stderr)
        return EXIT_INFEASIBLE
    a_cl = build_closed_loop(cfg.plant).A_cl
    w = varpi(a_cl, cfg.plant.period)
    design = LyapunovDesign.from_plant(cfg.plant, P, float(doc.get("sigma") or 0.0))
    geo = attractor_outer_radius(design, w, n_angles=args.grid)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["angle", "radius", "x", "y"])
        for ang, r, (x, y) in zip(geo.angles, geo.radii, geo.boundary):
            wr.writerow([_fmt(ang), _fmt(r), _fmt(x), _fmt(y)])
    summary = {"varpi": geo.varpi, "lambda_min_P": geo.lambda_min_P, "outer_radius": geo.radius,
               "max_boundary_radius": float(np.max(geo.radii)), "samples": len(geo.angles)}
    _write(args.out + ".json", dumps(summary) + "\n")
    print(dumps(summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsdsynth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="design a gain and its certificate")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("verify", help="re-check or search a certificate for a design")
    p.add_argument("--design", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--gain-only", action="store_true", help="ignore P and search a full certificate")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="simulate the closed loop and write a CSV trace")
    p.add_argument("--design", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attractor", help="outer estimate of the attractor")
    p.add_argument("--design", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=360, help="number of boundary samples")
    p.set_defaults(func=cmd_attractor)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_PARSE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
