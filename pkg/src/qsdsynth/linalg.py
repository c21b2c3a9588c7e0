"""Dense linear-algebra kernels.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  Matrix
products and linear solves are delegated to numpy; the matrix exponential,
the symmetric eigensolver and the singular values are computed here.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = [
    "DimensionError",
    "as_matrix",
    "as_symmetric",
    "expm",
    "discretize",
    "sym_eig",
    "definiteness_margin",
    "lambda_min",
    "lambda_max",
    "singular_values",
    "rank_svd",
    "sym",
]

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 60
RANK_TOL = 1e-9


class DimensionError(ValueError):
    """Raised when matrix shapes are incompatible with an operation."""


def as_matrix(a, name="matrix") -> np.ndarray:
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def _square(a, name="matrix") -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part ``(a + a.T) / 2``."""
    return 0.5 * (a + a.T)


def as_symmetric(a, name="matrix", tol=None) -> np.ndarray:
    """Return an exactly symmetric copy of ``a`` built from its upper triangle.

    If ``tol`` is given, the asymmetry ``max|a - a.T|`` is checked against
    ``tol * (1 + max|a|)`` first.
    """
    m = _square(a, name)
    if tol is not None:
        scale = 1.0 + np.max(np.abs(m), initial=0.0)
        if np.max(np.abs(m - m.T), initial=0.0) > tol * scale:
            raise ValueError(f"{name} is not symmetric")
    upper = np.triu(m)
    return upper + np.triu(m, 1).T


# -- matrix exponential -------------------------------------------------------

_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}

# Largest 1-norm for which the degree-m approximant is accurate to unit roundoff.
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade_uv(a: np.ndarray, m: int):
    b = _PADE[m]
    n = a.shape[0]
    ident = np.eye(n)
    a2 = a @ a
    if m < 13:
        powers = [ident, a2]
        for _ in range(2, m // 2 + 1):
            powers.append(powers[-1] @ a2)
        u = sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
        u = a @ u
        v = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
        return u, v
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    return u, v


def expm(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Pade approximant.

    The approximant degree (3, 5, 7, 9 or 13) and the number of squarings are
    chosen from the 1-norm of ``a`` so that the backward error stays at unit
    roundoff.
    """
    a = _square(a, "expm argument")
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    norm1 = np.linalg.norm(a, 1)
    if norm1 == 0.0:
        return np.eye(n)
    for m in (3, 5, 7, 9):
        if norm1 <= _THETA[m]:
            u, v = _pade_uv(a, m)
            return np.linalg.solve(v - u, v + u)
    s = max(0, int(math.ceil(math.log2(norm1 / _THETA[13]))))
    u, v = _pade_uv(a / 2.0**s, 13)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


def discretize(a, b, period: float):
    """Zero-order-hold discretization of ``(a, b)`` over one sampling period.

    Returns ``(exp(a T), int_0^T exp(a s) ds b)`` read off from a single
    exponential of the block matrix ``[[a, b], [0, 0]] * T``.
    """
    a = _square(a, "A")
    b = as_matrix(b, "B")
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"B has {b.shape[0]} rows, A is {a.shape[0]}x{a.shape[0]}")
    if not period > 0:
        raise ValueError("sampling period must be positive")
    n, m = b.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = a
    aug[:n, n:] = b
    e = expm(aug * period)
    return e[:n, :n].copy(), e[:n, n:].copy()


# -- symmetric eigenproblem ---------------------------------------------------

def sym_eig(s, tol: float = JACOBI_TOL):
    """Eigen-decomposition of a symmetric matrix by the cyclic Jacobi method.

    Returns ``(w, v)`` with ``w`` ascending and ``s = v @ diag(w) @ v.T``.
    Sweeps stop once the off-diagonal Frobenius norm drops below
    ``tol * ||s||_F``.
    """
    a = as_symmetric(s, "symmetric matrix")
    n = a.shape[0]
    v = np.eye(n)
    total = np.linalg.norm(a)
    if n <= 1 or total == 0.0:
        return np.diag(a).copy(), v
    threshold = tol * total
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - sn * rq
                a[q, :] = sn * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                v[:, p] = c * vp - sn * v[:, q]
                v[:, q] = sn * vp + c * v[:, q]
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def definiteness_margin(s) -> float:
    """Largest eigenvalue of ``s``; negative means negative definite."""
    return float(sym_eig(s)[0][-1])


def lambda_max(s) -> float:
    return float(sym_eig(s)[0][-1])


def lambda_min(s) -> float:
    return float(sym_eig(s)[0][0])


# -- singular values ----------------------------------------------------------

def singular_values(a, tol: float = JACOBI_TOL) -> np.ndarray:
    """Singular values (descending) by one-sided Jacobi orthogonalization."""
    u = as_matrix(a, "matrix").copy()
    if u.shape[0] < u.shape[1]:
        u = u.T.copy()
    n = u.shape[1]
    if u.size == 0:
        return np.zeros(0)
    for _ in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = u[:, p] @ u[:, p]
                beta = u[:, q] @ u[:, q]
                gamma = u[:, p] @ u[:, q]
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if abs(zeta) > 1e150:
                    t = 0.5 / zeta
                else:
                    t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                sn = c * t
                up = u[:, p].copy()
                u[:, p] = c * up - sn * u[:, q]
                u[:, q] = sn * up + c * u[:, q]
        if not rotated:
            break
    return np.sort(np.linalg.norm(u, axis=0))[::-1]


def rank_svd(a, tol: float = RANK_TOL) -> int:
    """Number of singular values larger than ``tol * sigma_max``."""
    if tol <= 0:
        raise ValueError("rank tolerance must be positive")
    sv = singular_values(a)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))
