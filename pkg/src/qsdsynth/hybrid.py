"""Simulation and Lyapunov certification of the sampled-data closed loop.

The state is ``xi = (x_p, chi)`` plus a clock ``tau`` in ``[0, T]``.  Between
samples the pair flows as ``d xi/dt = A_cl xi`` and ``tau`` grows at unit
rate; when ``tau`` reaches ``T`` the held input is replaced by the quantized
feedback ``q(K xi)`` and the clock resets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import DimensionError, expm, lambda_min, singular_values
from .plant import PlantSpec, build_closed_loop, quantize

CLOCK_TOL = 1e-12
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class HybridState:
    xi: np.ndarray
    tau: float

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float)).ravel()
        if not np.all(np.isfinite(xi)):
            raise ValueError("state has non-finite entries")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "tau", float(self.tau))


@dataclass(frozen=True)
class FlowSegment:
    """Flow interval ``[t_start, t_start + duration] x {j}`` with dense samples."""

    j: int
    t_start: float
    duration: float
    times: np.ndarray
    taus: np.ndarray
    states: np.ndarray


@dataclass(frozen=True)
class JumpRecord:
    t: float
    j: int
    pre: HybridState
    post: HybridState


@dataclass(frozen=True)
class HybridArc:
    segments: tuple
    jumps: tuple

    def samples(self):
        """Yield ``(t, j, tau, xi)`` in hybrid-time order.

        Each jump shows up twice: as the last sample of interval ``j - 1``
        (pre-jump) and the first sample of interval ``j`` (post-jump).
        """
        for seg in self.segments:
            for t, tau, xi in zip(seg.times, seg.taus, seg.states):
                yield float(t), seg.j, float(tau), xi

    def rows(self):
        """Sample rows as a list, each ``(t, j, tau, xi)``."""
        return list(self.samples())

    @property
    def n_jumps(self) -> int:
        return len(self.jumps)


@dataclass(frozen=True)
class LyapunovDesign:
    """Data of ``V(xi, tau) = exp(-sigma tau) xi' Sigma(tau)' P Sigma(tau) xi``."""

    P: np.ndarray
    sigma: float
    period: float
    A_cl: np.ndarray
    mu: float = 1.0

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        a = np.asarray(self.A_cl, dtype=float)
        if P.shape != a.shape or P.shape[0] != P.shape[1]:
            raise DimensionError("P and A_cl must be square of equal size")
        object.__setattr__(self, "P", 0.5 * (P + P.T))
        object.__setattr__(self, "A_cl", a)

    @classmethod
    def from_plant(cls, plant: PlantSpec, P, sigma: float, mu: float = 1.0) -> "LyapunovDesign":
        return cls(P, sigma, plant.period, build_closed_loop(plant).A_cl, mu)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def Sigma(self, tau: float) -> np.ndarray:
        return expm(self.A_cl * (self.period - tau))


def _check_clock(tau: float, period: float):
    if not (-CLOCK_TOL <= tau <= period + CLOCK_TOL):
        raise ValueError(f"clock value {tau} outside [0, {period}]")


def jump_map(plant: PlantSpec, K, state: HybridState) -> HybridState:
    """Sample, quantize and hold: ``chi+ = q(K xi)``, ``x_p+ = x_p``, ``tau+ = 0``."""
    if abs(state.tau - plant.period) > CLOCK_TOL:
        raise ValueError("jump requested off the jump set (tau != T)")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if state.xi.size != plant.n or K.shape != (plant.n_u, plant.n):
        raise DimensionError("state or gain does not match the plant")
    xi = state.xi.copy()
    xi[plant.n_p:] = quantize(K @ state.xi, plant.delta)
    return HybridState(xi, 0.0)


def _flow_segment(a_cl, xi0, tau0, t0, duration, j, period, samples_per_period):
    if duration == 0.0:
        offsets = np.zeros(1)
    else:
        count = max(1, int(math.ceil(samples_per_period * duration / period - 1e-9)))
        offsets = np.linspace(0.0, duration, count + 1)
    states = np.array([expm(a_cl * s) @ xi0 for s in offsets])
    taus = np.minimum(tau0 + offsets, period)
    return FlowSegment(j, t0, duration, t0 + offsets, taus, states)


def simulate(plant: PlantSpec, K, x0: HybridState, t_max: float, j_max: int | None = None,
             samples_per_period: int = 50) -> HybridArc:
    """Hybrid arc from ``x0`` up to ordinary time ``t_max`` or ``j_max`` jumps.

    Flows are evaluated exactly with the matrix exponential from the start of
    each interval.  Jump times are ``(T - tau0) + k T`` computed directly, so
    with ``tau0 = 0`` the ``j``-th jump happens at ``t = j T``.
    """
    if not isinstance(x0, HybridState):
        raise TypeError("x0 must be a HybridState")
    if x0.xi.size != plant.n:
        raise DimensionError(f"x0 has {x0.xi.size} entries, expected {plant.n}")
    _check_clock(x0.tau, plant.period)
    if not t_max >= 0 or (j_max is not None and j_max < 0):
        raise ValueError("horizon must be nonnegative")
    if samples_per_period < 1:
        raise ValueError("samples_per_period must be positive")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    T = plant.period
    a_cl = build_closed_loop(plant).A_cl
    tau0 = min(max(x0.tau, 0.0), T)
    first = T - tau0
    t_tol = CLOCK_TOL * max(1.0, t_max)

    segments, jumps = [], []
    state, j, t = HybridState(x0.xi, tau0), 0, 0.0
    while True:
        t_jump = first + j * T
        end = min(t_jump, t_max)
        duration = max(0.0, end - t)
        if duration > 0.0 or j == 0:
            seg = _flow_segment(a_cl, state.xi, state.tau, t, duration, j, T, samples_per_period)
            segments.append(seg)
            state = HybridState(seg.states[-1], seg.taus[-1])
        if t_jump > t_max + t_tol or (j_max is not None and j >= j_max):
            break
        pre = HybridState(state.xi, T)
        post = jump_map(plant, K, pre)
        jumps.append(JumpRecord(t_jump, j + 1, pre, post))
        state, j, t = post, j + 1, t_jump
    if segments and jumps and jumps[-1].j > segments[-1].j:
        # close the domain with a zero-length interval after the final jump
        rec = jumps[-1]
        segments.append(FlowSegment(rec.j, rec.t, 0.0, np.array([rec.t]), np.array([0.0]),
                                    rec.post.xi[None, :].copy()))
    return HybridArc(tuple(segments), tuple(jumps))


def lyapunov_value(design: LyapunovDesign, state: HybridState) -> float:
    _check_clock(state.tau, design.period)
    if state.xi.size != design.n:
        raise DimensionError("state does not match the design")
    z = design.Sigma(state.tau) @ state.xi
    return float(math.exp(-design.sigma * state.tau) * (z @ design.P @ z))


def upsilon_bound(v0: float, mu: float, gamma: float) -> float:
    """Hybrid time ``(1 / gamma) ln(V0 / mu)`` after which ``V <= mu`` is guaranteed."""
    if not mu > 0 or not gamma > 0:
        raise ValueError("mu and gamma must be positive")
    if v0 <= mu:
        return 0.0
    return math.log(v0 / mu) / gamma


@dataclass
class ArcReport:
    flow_ok: bool
    jump_decrease_ok: bool
    jump_invariance_ok: bool
    upsilon_ok: bool
    worst_flow_error: float
    worst_decrease_margin: float
    worst_invariance_margin: float
    min_value: float
    gamma: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.flow_ok and self.jump_decrease_ok and self.jump_invariance_ok and self.upsilon_ok


def certify_arc(arc: HybridArc, design: LyapunovDesign, lambda_d_expected: float,
                rel_tol: float = 1e-7, jump_tol: float = 1e-9, gamma: float | None = None) -> ArcReport:
    """Check the Lyapunov decrease conditions along a simulated arc.

    * flows: ``V(t) = exp(-sigma (t - t_j)) V(t_j)`` to ``rel_tol``, with ``P``
      positive definite and ``V >= 0`` at every sample;
    * jumps from ``V > mu``: ``V+ <= exp(-lambda_d) V``;
    * jumps from ``V <= mu``: ``V+ <= mu + jump_tol``.

    ``gamma`` (default ``min(sigma, lambda_d)``) feeds the reaching-time
    bound, which is checked on every sample.
    """
    for seg in arc.segments:
        if seg.states.shape[1] != design.n:
            raise DimensionError("arc and design dimensions differ")
    mu = design.mu
    p_pos = lambda_min(design.P) > 0.0
    worst_flow, min_v = 0.0, math.inf
    values = []
    for seg in arc.segments:
        v = np.array([lyapunov_value(design, HybridState(x, tau))
                      for x, tau in zip(seg.states, seg.taus)])
        min_v = min(min_v, float(v.min()))
        expected = v[0] * np.exp(-design.sigma * (seg.times - seg.t_start))
        scale = max(abs(v[0]), np.finfo(float).tiny)
        err = float(np.max(np.abs(v - expected)) / scale) if v[0] != 0.0 else float(np.max(np.abs(v)))
        worst_flow = max(worst_flow, err)
        values.extend(zip(seg.times, [seg.j] * len(v), v))
    flow_ok = p_pos and min_v >= 0.0 and worst_flow <= rel_tol

    worst_dec, worst_inv = -math.inf, -math.inf
    ratio = math.exp(-lambda_d_expected)
    for rec in arc.jumps:
        v_pre = lyapunov_value(design, rec.pre)
        v_post = lyapunov_value(design, rec.post)
        if v_pre > mu:
            worst_dec = max(worst_dec, v_post - ratio * v_pre - jump_tol * v_pre)
        else:
            worst_inv = max(worst_inv, v_post - mu - jump_tol)
    dec_ok = worst_dec <= 0.0
    inv_ok = worst_inv <= 0.0

    if gamma is None:
        gamma = min(design.sigma, lambda_d_expected)
    upsilon_ok = True
    if gamma > 0 and values:
        v_start = values[0][2]
        bound = upsilon_bound(max(v_start, 0.0), mu, gamma)
        upsilon_ok = all(v <= mu * (1.0 + 1e-6) for t, j, v in values if t + j >= bound)
    return ArcReport(flow_ok, dec_ok, inv_ok, upsilon_ok, worst_flow, worst_dec, worst_inv,
                     min_v, gamma, {"P_positive": p_pos, "n_jumps": len(arc.jumps)})


# -- attractor geometry ----------------------------------------------------

def _smallest_gain_sq(a_cl, tau) -> float:
    return float(singular_values(expm(a_cl * tau))[-1] ** 2)


def varpi(a_cl, period: float, grid_points: int = 200) -> float:
    """``min over tau in [0, T]`` of ``lambda_min(exp(A tau)' exp(A tau))``.

    A uniform grid locates the minimizer, then golden-section search refines it
    inside the two neighbouring grid cells.
    """
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    a_cl = np.asarray(a_cl, dtype=float)
    taus = np.linspace(0.0, period, grid_points)
    vals = np.array([_smallest_gain_sq(a_cl, t) for t in taus])
    i = int(np.argmin(vals))
    lo, hi = taus[max(i - 1, 0)], taus[min(i + 1, grid_points - 1)]
    best = vals[i]
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = _smallest_gain_sq(a_cl, x1), _smallest_gain_sq(a_cl, x2)
    while hi - lo > 1e-10 * max(1.0, period):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = _smallest_gain_sq(a_cl, x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = _smallest_gain_sq(a_cl, x2)
    return float(min(best, f1, f2))


def attractor_membership(design: LyapunovDesign, state: HybridState, convention: str = "sublevel") -> bool:
    """Membership of ``state`` in the attractor.

    ``"sublevel"`` tests ``V <= 1``.  ``"printed"`` tests
    ``exp(-sigma tau) xi' exp(A' tau) P exp(A tau) xi <= 1``.
    """
    _check_clock(state.tau, design.period)
    if convention == "sublevel":
        return lyapunov_value(design, state) <= 1.0
    if convention == "printed":
        z = expm(design.A_cl * state.tau) @ state.xi
        return math.exp(-design.sigma * state.tau) * float(z @ design.P @ z) <= 1.0
    raise ValueError(f"unknown convention {convention!r}")


@dataclass
class AttractorGeometry:
    varpi: float
    lambda_min_P: float
    radius: float
    angles: np.ndarray
    radii: np.ndarray
    coords: tuple

    @property
    def boundary(self) -> np.ndarray:
        return np.column_stack([self.radii * np.cos(self.angles), self.radii * np.sin(self.angles)])


def attractor_outer_radius(design: LyapunovDesign, varpi_value: float, coords=(0, 1),
                           n_angles: int = 360, tau_points: int = 50) -> AttractorGeometry:
    """Euclidean radius ``1 / sqrt(varpi lambda_min(P))`` and projected boundary samples.

    The boundary is the per-angle maximum radius, over a grid of ``tau``, of
    the projection of ``{xi : xi' exp(A' tau) P exp(A tau) xi <= 1}`` onto
    the coordinate pair ``coords``.
    """
    if not varpi_value > 0:
        raise ValueError("varpi must be positive")
    lp = lambda_min(design.P)
    if not lp > 0:
        raise ValueError("P must be positive definite")
    radius = 1.0 / math.sqrt(varpi_value * lp)
    idx = list(coords)
    angles = np.linspace(0.0, 2.0 * math.pi, n_angles, endpoint=False)
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    radii = np.zeros(n_angles)
    for tau in np.linspace(0.0, design.period, tau_points):
        e = expm(design.A_cl * tau)
        m_inv = np.linalg.inv(e.T @ design.P @ e)
        proj = np.linalg.inv(m_inv[np.ix_(idx, idx)])
        r = 1.0 / np.sqrt(np.einsum("ki,ij,kj->k", dirs, proj, dirs))
        radii = np.maximum(radii, r)
    return AttractorGeometry(varpi_value, lp, radius, angles, radii, tuple(idx))
