"""Stability certificates and the iterative controller design.

The certificate for a gain ``K`` is a tuple ``(P, S1, S2, rho)`` satisfying

* ``delta' S1 delta - rho <= 0`` and
* ``M(P, K, S1, S2, rho) < 0``,

where ``M`` is the jump-decrease matrix built from ``Gamma(P) = E' P E`` with
``E = exp(A_cl T)``.  Its Schur-lifted form ``MI2`` is bilinear in
``(P, K, S2, rho)`` and is handled by the convex-concave procedure in
``run_algorithm1``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import expm, lambda_max, lambda_min, sym
from .plant import ClosedLoopMatrices, PlantSpec, build_closed_loop, check_stabilizable
from .sdp import (Affine, SdpProblem, SolverOptions, VarSpace, block, feasibility, solve,
                  strict_margin)

log = logging.getLogger(__name__)

RHO_MIN = 1e-3
RHO_MAX = 1.0 - 1e-3
DEFAULT_RHO_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))
THEOREM_MARGIN = 1e-8
POSITIVITY_MARGIN = 1e-8
SIGMA_SAFETY = 0.9


class SynthesisError(RuntimeError):
    """Raised when no certified design can be produced."""


class NotStabilizableError(SynthesisError):
    pass


@dataclass(frozen=True)
class CertificateVars:
    P: np.ndarray
    K: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "P", sym(np.asarray(self.P, dtype=float)))
        object.__setattr__(self, "K", np.atleast_2d(np.asarray(self.K, dtype=float)))
        object.__setattr__(self, "S1", _as_diag(self.S1))
        object.__setattr__(self, "S2", _as_diag(self.S2))
        object.__setattr__(self, "rho", float(self.rho))


def _as_diag(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim < 2:
        return np.diag(np.atleast_1d(s))
    return np.diag(np.diag(s))


@dataclass
class Theorem1Report:
    trace_residual: float
    lambda_max_M: float
    lambda_max_MI2: float
    lambda_min_P: float
    margin: float

    @property
    def trace_ok(self) -> bool:
        return self.trace_residual <= 0.0

    @property
    def M_ok(self) -> bool:
        return self.lambda_max_M <= -self.margin

    @property
    def P_ok(self) -> bool:
        return self.lambda_min_P > 0.0

    @property
    def passed(self) -> bool:
        return self.trace_ok and self.M_ok and self.P_ok


@dataclass
class SynthesisResult:
    vars: CertificateVars
    c: float
    sigma: float
    iterations: int
    history: list = field(default_factory=list)
    status: str = "converged"
    strict_margin: float = 0.0


# -- certificate algebra ------------------------------------------------------

def _closed_loop(plant: PlantSpec) -> ClosedLoopMatrices:
    return build_closed_loop(plant)


def flow_map(plant: PlantSpec) -> np.ndarray:
    """``exp(A_cl T)``: the state transition over one sampling period."""
    return expm(_closed_loop(plant).A_cl * plant.period)


def gamma_of(P, a_cl, period) -> np.ndarray:
    """``exp(A_cl' T) P exp(A_cl T)``."""
    P = np.asarray(P, dtype=float)
    a_cl = np.asarray(a_cl, dtype=float)
    if P.shape != a_cl.shape:
        raise ValueError(f"P is {P.shape} but A_cl is {a_cl.shape}")
    e = expm(a_cl * period)
    return sym(e.T @ P @ e)


def assemble_M(v: CertificateVars, plant: PlantSpec) -> np.ndarray:
    cl = _closed_loop(plant)
    _check_dims(v, plant)
    gam = gamma_of(v.P, cl.A_cl, plant.period)
    f = cl.G_cl + cl.J_cl @ v.K
    j = cl.J_cl
    m11 = f.T @ gam @ f + (v.rho - 1.0) * v.P
    m12 = f.T @ gam @ j - v.K.T @ v.S2
    m22 = j.T @ gam @ j - v.S1 - 2.0 * v.S2
    return sym(np.block([[m11, m12], [m12.T, m22]]))


def assemble_MI2(v: CertificateVars, plant: PlantSpec) -> np.ndarray:
    """Schur-lifted form of ``M``, linear in ``Gamma(P)``."""
    cl = _closed_loop(plant)
    _check_dims(v, plant)
    gam = gamma_of(v.P, cl.A_cl, plant.period)
    f = cl.G_cl + cl.J_cl @ v.K
    return sym(np.block([
        [(v.rho - 1.0) * v.P, -v.K.T @ v.S2, f.T @ gam],
        [-v.S2 @ v.K, -v.S1 - 2.0 * v.S2, cl.J_cl.T @ gam],
        [gam @ f, gam @ cl.J_cl, -gam],
    ]))


def _check_dims(v: CertificateVars, plant: PlantSpec):
    n, n_u = plant.n, plant.n_u
    if v.P.shape != (n, n) or v.K.shape != (n_u, n) or v.S1.shape != (n_u, n_u) \
            or v.S2.shape != (n_u, n_u):
        raise ValueError("certificate variables do not match the plant dimensions")


def trace_residual(v: CertificateVars, plant: PlantSpec) -> float:
    d = plant.delta
    return float(d @ v.S1 @ d - v.rho)


def _clip_s1(S1, rho: float, delta) -> np.ndarray:
    """Scale ``S1`` down so the trace condition holds exactly, not just to solver tolerance."""
    S1 = _as_diag(S1)
    lhs = float(delta @ S1 @ delta)
    return S1 * (rho / lhs) if lhs > rho else S1


def check_theorem1(v: CertificateVars, plant: PlantSpec, margin: float = THEOREM_MARGIN) -> Theorem1Report:
    return Theorem1Report(
        trace_residual=trace_residual(v, plant),
        lambda_max_M=lambda_max(assemble_M(v, plant)),
        lambda_max_MI2=lambda_max(assemble_MI2(v, plant)),
        lambda_min_P=lambda_min(v.P),
        margin=margin,
    )


def sigma_star(P, M, period, safety: float = SIGMA_SAFETY, cap: float | None = None) -> float:
    """Flow decay rate for which ``-beta I + P (1 - exp(-sigma T))`` stays negative definite.

    ``beta = |lambda_max(M)|``.  The largest admissible rate is
    ``-ln(1 - beta / lambda_max(P)) / T``; it is scaled by ``safety`` and
    clipped at ``cap`` (default ``10 / T``), which is also returned when the
    bound is vacuous (``beta >= lambda_max(P)``).
    """
    if cap is None:
        cap = 10.0 / period
    lm = lambda_max(M)
    if lm >= 0:
        raise ValueError("M is not negative definite")
    beta = abs(lm)
    lp = lambda_max(P)
    if beta >= lp:
        return cap
    bound = -math.log1p(-beta / lp) / period
    return min(safety * bound, cap)


def certified_jump_rate(P, M, sigma: float, period: float) -> float:
    """Jump decrease rate ``lambda_d`` implied by the certificate.

    Outside the unit sublevel set the certificate gives
    ``V+ <= (1 - beta / lambda_max(P)) exp(sigma T) V`` at every sample, so
    ``lambda_d = -ln(1 - beta / lambda_max(P)) - sigma T``.
    """
    lm = lambda_max(M)
    if lm >= 0:
        raise ValueError("M is not negative definite")
    ratio = abs(lm) / lambda_max(P)
    if ratio >= 1.0:
        return math.inf
    return -math.log1p(-ratio) - sigma * period


# -- symbolic pieces of the bilinear inequality -------------------------------

@dataclass
class DesignSpace:
    """Decision variables of the design problem and their affine building blocks."""

    space: VarSpace
    plant: PlantSpec
    E: np.ndarray

    @classmethod
    def create(cls, plant: PlantSpec, with_c: bool = True) -> "DesignSpace":
        s = VarSpace()
        n, n_u = plant.n, plant.n_u
        s.sym("P", n)
        s.rect("K", n_u, n)
        s.diag("S1", n_u)
        s.diag("S2", n_u)
        s.scalar("rho", RHO_MIN, RHO_MAX)
        if with_c:
            s.scalar("c")
        return cls(s, plant, flow_map(plant))

    def v(self, name) -> Affine:
        return self.space.var(name)

    def gamma(self) -> Affine:
        return self.E.T @ self.v("P") @ self.E

    def pack(self, v: CertificateVars, c: float = 0.0) -> np.ndarray:
        a = {"P": v.P, "K": v.K, "S1": v.S1, "S2": v.S2, "rho": v.rho}
        if "c" in self.space:
            a["c"] = c
        return self.space.pack(a)

    def certificate(self, x) -> CertificateVars:
        a = self.space.unpack(x)
        return CertificateVars(a["P"], a["K"], a["S1"], a["S2"], a["rho"])


def ccp_decompose(ds: DesignSpace):
    """Affine ``L``, ``X``, ``Y`` with ``MI2 = L + He(X' Y)``.

    ``L`` is ``N x N`` with ``N = 2 n + n_u``; ``X`` and ``Y`` are
    ``(n + n_u) x N``.
    """
    plant = ds.plant
    cl = _closed_loop(plant)
    n, n_u = plant.n, plant.n_u
    P, K, S1, S2, rho = (ds.v(k) for k in ("P", "K", "S1", "S2", "rho"))
    gam = ds.gamma()
    jg = cl.J_cl.T @ gam
    L = block([
        [-P, np.zeros((n, n_u)), cl.G_cl.T @ gam],
        [np.zeros((n_u, n)), -S1 - 2.0 * S2, jg],
        [(cl.G_cl.T @ gam).T, jg.T, -gam],
    ])
    X = block([
        [0.5 * rho * np.eye(n), np.zeros((n, n_u)), np.zeros((n, n))],
        [K, np.zeros((n_u, n_u)), np.zeros((n_u, n))],
    ])
    Y = block([
        [P, np.zeros((n, n_u)), np.zeros((n, n))],
        [np.zeros((n_u, n)), -S2, jg],
    ])
    return L, X, Y


def linearized_subproblem(ds: DesignSpace, x0: np.ndarray, margin: float) -> SdpProblem:
    """Convex inner approximation of the design problem around ``x0``.

    With ``D = X - Y`` (linear in the variables) the concave part
    ``-D'D`` is replaced by its tangent ``D0'D0 - He(D0' D)`` at ``x0``; the
    resulting block matrix ``[[R + margin I, X', Y'], [X, -I, 0], [Y, 0, -I]]``
    is required to be negative semidefinite, which implies
    ``MI2 <= -margin I``.
    """
    L, X, Y = ccp_decompose(ds)
    D = X - Y
    d0 = D(x0)
    R = L + d0.T @ d0 - (d0.T @ D).he()
    nr = R.shape[0]
    nx = X.shape[0]
    big = block([
        [R + margin * np.eye(nr), X.T, Y.T],
        [X, -np.eye(nx), np.zeros((nx, nx))],
        [Y, np.zeros((nx, nx)), -np.eye(nx)],
    ])
    prob = SdpProblem(ds.space, ds.v("c"), "max")
    prob.add(big.symmetrized(), "<=", 0.0, "linearized MI2")
    _common_constraints(prob, ds)
    prob.add(ds.v("P") - ds.v("c") * np.eye(ds.plant.n), ">=", 0.0, "P >= cI")
    return prob


def _common_constraints(prob: SdpProblem, ds: DesignSpace):
    d = ds.plant.delta[:, None]
    prob.add(d.T @ ds.v("S1") @ d - ds.v("rho"), "<=", 0.0, "trace")
    prob.add(ds.v("P"), ">=", POSITIVITY_MARGIN, "P > 0")
    prob.add(ds.v("S1"), ">=", POSITIVITY_MARGIN, "S1 > 0")
    prob.add(ds.v("S2"), ">=", POSITIVITY_MARGIN, "S2 > 0")


# -- feasibility bootstrap ----------------------------------------------------

def _m0_problem(plant: PlantSpec, rho: float, l_cap: float | None = None):
    """LMI in ``(W, Y, S1)`` for fixed ``rho``.

    Without ``l_cap`` the problem minimizes ``l`` subject to ``W <= l I``.
    With ``l_cap`` it fixes ``l = l_cap`` and is meant for ``feasibility``,
    which then centers the solution away from the boundary.
    """
    cl = _closed_loop(plant)
    n, n_u = plant.n, plant.n_u
    e_inv = expm(-cl.A_cl * plant.period)
    s = VarSpace()
    s.sym("W", n)
    s.rect("Y", n_u, n)
    s.diag("S1", n_u)
    if l_cap is None:
        s.scalar("l")
    W, Y, S1 = (s.var(k) for k in ("W", "Y", "S1"))
    l = s.var("l") if l_cap is None else l_cap
    theta = e_inv @ W @ e_inv.T
    top = W @ cl.G_cl.T + Y.T @ cl.J_cl.T
    m0 = block([
        [(rho - 1.0) * W, np.zeros((n, n_u)), top],
        [np.zeros((n_u, n)), -S1, cl.J_cl.T],
        [top.T, cl.J_cl, -theta],
    ])
    prob = SdpProblem(s, l if l_cap is None else None, "min")
    prob.add(m0, "<=", strict_margin(m0), "M0")
    d = plant.delta[:, None]
    prob.add(d.T @ S1 @ d - rho, "<=", 0.0, "trace")
    prob.add(W - l * np.eye(n), "<=", 0.0, "W <= lI")
    prob.add(W, ">=", POSITIVITY_MARGIN, "W > 0")
    prob.add(S1, ">=", POSITIVITY_MARGIN, "S1 > 0")
    return prob


def solve_s2(P, K, S1, rho, plant: PlantSpec, opts: SolverOptions = SolverOptions()):
    """Margin-maximizing ``S2`` for fixed ``(P, K, S1, rho)``."""
    cl = _closed_loop(plant)
    gam = gamma_of(P, cl.A_cl, plant.period)
    f = cl.G_cl + cl.J_cl @ K
    s = VarSpace()
    s.diag("S2", plant.n_u)
    S2 = s.var("S2")
    kts = -(K.T @ S2)
    mi2 = block([
        [(rho - 1.0) * P, kts, f.T @ gam],
        [kts.T, -S1 - 2.0 * S2, cl.J_cl.T @ gam],
        [gam @ f, gam @ cl.J_cl, -gam],
    ]).symmetrized()
    prob = SdpProblem(s)
    # only strictness is needed here; the phase-I solve maximizes the slack anyway
    prob.add(mi2, "<=", THEOREM_MARGIN, "MI2")
    prob.add(S2, ">=", POSITIVITY_MARGIN, "S2 > 0")
    return feasibility(prob, opts)


def initial_design(plant: PlantSpec, rho_grid=DEFAULT_RHO_GRID,
                   opts: SolverOptions = SolverOptions(), backoff: float = 1.1) -> CertificateVars:
    """Feasible starting certificate from the LMI in ``(W, Y, S1)`` plus a line search on ``rho``.

    For each ``rho`` on the grid the LMI is solved minimizing ``l`` with
    ``W <= l I``.  Grid points are tried in order of increasing ``l``: each is
    re-centered, mapped back through ``P = W^-1``, ``K = Y W^-1``, completed
    with a margin-maximizing ``S2`` and kept once the full certificate checks.
    """
    a_d, b_d = plant.discretized()
    if not check_stabilizable(a_d, b_d):
        raise NotStabilizableError("the discretized plant is not stabilizable")
    candidates = []
    for rho in rho_grid:
        if not (0.0 < rho < 1.0):
            raise ValueError("rho grid points must lie in (0, 1)")
        sol = solve(_m0_problem(plant, rho), opts)
        log.debug("rho=%.3f status=%s l=%.6g", rho, sol.status, sol.objective)
        # a stalled run still estimates l; the centered solve below validates it
        if sol.status in ("optimal", "numerical-failure", "max-iterations") \
                and math.isfinite(sol.objective) and sol.objective > 0:
            candidates.append((sol.objective, rho, sol))
    failure = "no rho on the grid admits a feasible initial design"
    for l_star, rho, sol in sorted(candidates, key=lambda item: item[:2]):
        # the minimizer sits on the boundary of the LMI; re-center with a relaxed cap on l
        centered = feasibility(_m0_problem(plant, rho, l_cap=backoff * l_star), opts)
        if centered.status == "optimal":
            sol = centered
        elif sol.status != "optimal":
            continue
        W = sym(sol["W"])
        P = sym(np.linalg.inv(W))
        K = np.atleast_2d(sol["Y"]) @ P
        S1 = _clip_s1(sol["S1"], rho, plant.delta)
        s2 = solve_s2(P, K, S1, rho, plant, opts)
        if s2.status != "optimal":
            failure = f"S2 completion failed ({s2.status})"
            continue
        v = CertificateVars(P, K, S1, s2["S2"], rho)
        if check_theorem1(v, plant).passed:
            return v
        failure = "mapped design failed the certificate check"
    raise SynthesisError(failure)


# -- convex-concave iteration -------------------------------------------------

def run_algorithm1(plant: PlantSpec, epsilon: float = 1e-4, k_max: int = 200,
                   rho_grid=DEFAULT_RHO_GRID, opts: SolverOptions = SolverOptions(),
                   sigma_safety: float = SIGMA_SAFETY, initial: CertificateVars | None = None,
                   callback=None) -> SynthesisResult:
    """Maximize ``lambda_min(P)`` through a sequence of linearized SDPs.

    ``k_max`` bounds the number of iterates including the initial design, so
    ``k_max = 1`` returns the bootstrap certificate unchanged.  Iteration stops
    once two consecutive objective values differ by at most ``epsilon``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    v0 = initial if initial is not None else initial_design(plant, rho_grid, opts)
    ds = DesignSpace.create(plant)
    mi2_0 = assemble_MI2(v0, plant)
    margin = 1e-7 * (1.0 + np.linalg.norm(mi2_0, 2))
    c = lambda_min(v0.P)
    x = ds.pack(v0, c)
    history = [{"k": 0, "c": c, "lambda_max_MI2": lambda_max(mi2_0), "status": "initial"}]
    status = "max-iterations"
    best_x, best_c = x, c
    k = 1
    while k < k_max:
        sol = solve(linearized_subproblem(ds, x, margin), opts)
        if sol.status != "optimal":
            log.warning("subproblem %d ended with status %s", k, sol.status)
            history.append({"k": k, "c": float("nan"), "lambda_max_MI2": float("nan"),
                            "status": sol.status})
            status = "solver-failure"
            break
        x_new = sol.x
        c_new = float(sol["c"])
        v_new = ds.certificate(x_new)
        lm = lambda_max(assemble_MI2(v_new, plant))
        history.append({"k": k, "c": c_new, "lambda_max_MI2": lm, "status": sol.status})
        if callback is not None:
            callback(k, v_new, c_new)
        log.info("iteration %d: c=%.8f lambda_max(MI2)=%.3e", k, c_new, lm)
        if c_new >= best_c:
            best_x, best_c = x_new, c_new
        x, c_prev, c = x_new, c, c_new
        k += 1
        if abs(c - c_prev) <= epsilon:
            status = "converged"
            break
    v = ds.certificate(best_x)
    v = replace(v, S1=_clip_s1(v.S1, v.rho, plant.delta))
    sigma = sigma_star(v.P, assemble_M(v, plant), plant.period, sigma_safety)
    return SynthesisResult(v, best_c, sigma, len(history) - 1, history, status, margin)


def find_multipliers(P, K, plant: PlantSpec, opts: SolverOptions = SolverOptions()):
    """Search ``(S1, S2, rho)`` certifying a fixed pair ``(P, K)``.

    Returns ``(S1, S2, rho)`` or ``None`` when no strictly feasible multipliers
    exist.  The objective maximizes the common slack of the lifted inequality,
    the trace condition and the positivity constraints.
    """
    P = sym(np.asarray(P, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    cl = _closed_loop(plant)
    n_u = plant.n_u
    gam = gamma_of(P, cl.A_cl, plant.period)
    f = cl.G_cl + cl.J_cl @ K
    s = VarSpace()
    s.diag("S1", n_u)
    s.diag("S2", n_u)
    s.scalar("rho", RHO_MIN, RHO_MAX)
    S1, S2, rho = s.var("S1"), s.var("S2"), s.var("rho")
    kts = -(K.T @ S2)
    mi2 = block([
        [rho * P - P, kts, f.T @ gam],
        [kts.T, -S1 - 2.0 * S2, cl.J_cl.T @ gam],
        [gam @ f, gam @ cl.J_cl, -gam],
    ]).symmetrized()
    prob = SdpProblem(s)
    prob.add(mi2, "<=", strict_margin(mi2), "MI2")
    d = plant.delta[:, None]
    prob.add(d.T @ S1 @ d - rho, "<=", 0.0, "trace")
    prob.add(S1, ">=", POSITIVITY_MARGIN, "S1 > 0")
    prob.add(S2, ">=", POSITIVITY_MARGIN, "S2 > 0")
    sol = feasibility(prob, opts)
    if sol.status != "optimal":
        return None
    r = float(sol["rho"])
    return _clip_s1(sol["S1"], r, plant.delta), _as_diag(sol["S2"]), r


def certify_gain(K, plant: PlantSpec, rho_grid=DEFAULT_RHO_GRID,
                 opts: SolverOptions = SolverOptions()) -> CertificateVars | None:
    """Search a full certificate ``(P, S1, S2, rho)`` for a fixed gain ``K``.

    For fixed ``rho`` the lifted inequality is linear in ``(P, S1, S2)``; the
    grid point with the largest common slack is returned, or ``None`` when no
    grid point is feasible.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (plant.n_u, plant.n):
        raise ValueError(f"K must be {plant.n_u}x{plant.n}")
    cl = _closed_loop(plant)
    e = flow_map(plant)
    f = cl.G_cl + cl.J_cl @ K
    d = plant.delta[:, None]
    best = None
    for rho in rho_grid:
        s = VarSpace()
        s.sym("P", plant.n)
        s.diag("S1", plant.n_u)
        s.diag("S2", plant.n_u)
        P, S1, S2 = s.var("P"), s.var("S1"), s.var("S2")
        gam = e.T @ P @ e
        kts = -(K.T @ S2)
        mi2 = block([
            [(rho - 1.0) * P, kts, f.T @ gam],
            [kts.T, -S1 - 2.0 * S2, cl.J_cl.T @ gam],
            [gam @ f, gam @ cl.J_cl, -gam],
        ]).symmetrized()
        prob = SdpProblem(s)
        prob.add(mi2, "<=", strict_margin(mi2), "MI2")
        prob.add(d.T @ S1 @ d - rho, "<=", 0.0, "trace")
        prob.add(P, ">=", POSITIVITY_MARGIN, "P > 0")
        prob.add(S1, ">=", POSITIVITY_MARGIN, "S1 > 0")
        prob.add(S2, ">=", POSITIVITY_MARGIN, "S2 > 0")
        sol = feasibility(prob, opts)
        log.debug("gain search rho=%.3f status=%s t=%.3g", rho, sol.status, sol.objective)
        if sol.status == "optimal" and (best is None or sol.objective > best[0]):
            best = (sol.objective, rho, sol)
    if best is None:
        return None
    _, rho, sol = best
    return CertificateVars(sol["P"], K, _clip_s1(sol["S1"], rho, plant.delta), sol["S2"], rho)
