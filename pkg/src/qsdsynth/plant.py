"""Plant data, uniform quantizer and the closed-loop block matrices."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .linalg import DimensionError, as_matrix, discretize, rank_svd

LATTICE_TOL = 1e-12


@dataclass(frozen=True)
class PlantSpec:
    """Continuous-time plant ``dx/dt = A x + B q(u)`` sampled every ``period``."""

    A: np.ndarray
    B: np.ndarray
    delta: np.ndarray
    period: float

    def __post_init__(self):
        a = as_matrix(self.A, "A_p")
        b = as_matrix(self.B, "B_p")
        delta = np.atleast_1d(np.asarray(self.delta, dtype=float)).ravel()
        if a.shape[0] != a.shape[1]:
            raise DimensionError(f"A_p must be square, got {a.shape}")
        if b.shape[0] != a.shape[0]:
            raise DimensionError(f"B_p has {b.shape[0]} rows, expected {a.shape[0]}")
        if delta.size != b.shape[1]:
            raise DimensionError(f"delta has {delta.size} entries, expected {b.shape[1]}")
        if not np.all(delta > 0) or not np.all(np.isfinite(delta)):
            raise ValueError("quantization steps must be positive and finite")
        if not (np.isfinite(self.period) and self.period > 0):
            raise ValueError("sampling period must be positive")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "period", float(self.period))

    @property
    def n_p(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n(self) -> int:
        """Dimension of the sampled-data state (plant state plus held input)."""
        return self.n_p + self.n_u

    def discretized(self):
        return discretize(self.A, self.B, self.period)


@dataclass(frozen=True)
class ClosedLoopMatrices:
    A_cl: np.ndarray
    G_cl: np.ndarray
    J_cl: np.ndarray


def build_closed_loop(plant: PlantSpec) -> ClosedLoopMatrices:
    """Flow matrix ``[[A, B], [0, 0]]`` and the jump selectors ``G``, ``J``."""
    n_p, n_u = plant.n_p, plant.n_u
    n = n_p + n_u
    a_cl = np.zeros((n, n))
    a_cl[:n_p, :n_p] = plant.A
    a_cl[:n_p, n_p:] = plant.B
    g_cl = np.zeros((n, n))
    g_cl[:n_p, :n_p] = np.eye(n_p)
    j_cl = np.zeros((n, n_u))
    j_cl[n_p:, :] = np.eye(n_u)
    return ClosedLoopMatrices(a_cl, g_cl, j_cl)


def _steps(u: np.ndarray, delta) -> np.ndarray:
    d = np.broadcast_to(np.asarray(delta, dtype=float), u.shape)
    if np.any(d <= 0):
        raise ValueError("quantization steps must be positive")
    return d


def quantize(u, delta) -> np.ndarray:
    """Uniform quantizer rounding each channel toward zero onto ``delta_i * Z``."""
    u = np.asarray(u, dtype=float)
    d = _steps(u, delta)
    sign = np.where(u >= 0, 1.0, -1.0)
    return d * sign * np.floor(np.abs(u) / d)


def psi(u, delta) -> np.ndarray:
    """Quantization error ``q(u) - u``."""
    u = np.asarray(u, dtype=float)
    return quantize(u, delta) - u


def on_lattice(u, delta, tol: float = LATTICE_TOL) -> np.ndarray:
    """Mask of nonzero channels sitting on a discontinuity of the quantizer."""
    u = np.asarray(u, dtype=float)
    d = _steps(u, delta)
    r = u / d
    return (np.abs(r - np.round(r)) <= tol * np.maximum(1.0, np.abs(r))) & (u != 0)


def psi_kras(u, delta, tol: float = LATTICE_TOL) -> list[tuple[float, ...]]:
    """Krasovskii regularization of ``psi``, one value set per channel.

    At a discontinuity ``u_i = k * delta_i`` (``k != 0``) the set holds the two
    one-sided limits ``{-delta_i, 0}`` for ``k > 0`` and ``{0, delta_i}`` for
    ``k < 0``.  Elsewhere it is the singleton ``{psi(u_i)}``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    d = _steps(u, delta)
    jump = on_lattice(u, d, tol)
    values = psi(u, d)
    out = []
    for ui, di, ji, vi in zip(u, d, jump, values):
        if not ji:
            out.append((float(vi),))
        elif ui > 0:
            out.append((-float(di), 0.0))
        else:
            out.append((0.0, float(di)))
    return out


def kras_selections(u, delta):
    """Iterate over every vector in the cartesian product of ``psi_kras``."""
    for combo in itertools.product(*psi_kras(u, delta)):
        yield np.array(combo)


def _positive_diag(s, n_u: int, name: str) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim == 0:
        s = np.full(n_u, float(s))
    elif s.ndim == 2:
        if s.shape != (n_u, n_u) or np.any(s - np.diag(np.diag(s)) != 0):
            raise ValueError(f"{name} must be a diagonal {n_u}x{n_u} matrix")
        s = np.diag(s)
    if s.shape != (n_u,) or np.any(s <= 0):
        raise ValueError(f"{name} must have a positive diagonal")
    return s


def sector_check(u, v, s1, s2, delta):
    """Evaluate both sector inequalities at ``(u, v)``.

    Returns ``(holds1, holds2, (r1, r2))`` with
    ``r1 = v' S1 v - delta' S1 delta`` and ``r2 = v' S2 (v + u)``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    d = np.broadcast_to(np.asarray(delta, dtype=float), u.shape)
    s1 = _positive_diag(s1, u.size, "S1")
    s2 = _positive_diag(s2, u.size, "S2")
    r1 = float(v @ (s1 * v) - d @ (s1 * d))
    r2 = float(v @ (s2 * (v + u)))
    return r1 <= 0.0, r2 <= 0.0, (r1, r2)


def check_stabilizable(a_d, b_d, tol: float = 1e-9) -> bool:
    """PBH test on the eigenvalues of ``a_d`` outside the open unit disc.

    Complex eigenvalues are handled through the real embedding
    ``[[Re, -Im], [Im, Re]]``, whose rank is twice the complex rank.
    """
    a_d = as_matrix(a_d, "A_D")
    b_d = as_matrix(b_d, "B_D")
    n = a_d.shape[0]
    if b_d.shape[0] != n:
        raise DimensionError("A_D and B_D row counts differ")
    for lam in np.linalg.eigvals(a_d):
        if abs(lam) < 1.0 - tol:
            continue
        if abs(lam.imag) <= tol * max(1.0, abs(lam)):
            pbh = np.hstack([lam.real * np.eye(n) - a_d, b_d])
            if rank_svd(pbh) < n:
                return False
        else:
            re = np.hstack([lam.real * np.eye(n) - a_d, b_d])
            im = np.hstack([lam.imag * np.eye(n), np.zeros_like(b_d)])
            emb = np.block([[re, -im], [im, re]])
            if rank_svd(emb) < 2 * n:
                return False
    return True
