"""Affine matrix expressions over named decision blocks, and a dense SDP solver.

Problems are stated in LMI form::

    maximize / minimize   f(x)
    subject to            F_k(x) <= -m_k I    or    F_k(x) >= m_k I

with every ``F_k`` affine and symmetric.  ``solve`` maps them onto the dual
standard form ``max b'y  s.t.  C - sum_i y_i A_i = Z >= 0`` and runs an
infeasible-start primal-dual path-following method with the HKM search
direction and a Mehrotra predictor-corrector.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import logging

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "Block",
    "VarSpace",
    "Affine",
    "Constraint",
    "SdpProblem",
    "SdpSolution",
    "SolverOptions",
    "block",
    "evaluate",
    "strict_margin",
    "solve",
    "feasibility",
]

KINDS = ("scalar", "sym", "diag", "rect")
STRICT_REL = 1e-7


@dataclass(frozen=True)
class Block:
    name: str
    kind: str
    shape: tuple[int, int]
    lower: float | None = None
    upper: float | None = None

    @property
    def size(self) -> int:
        r, c = self.shape
        if self.kind == "scalar":
            return 1
        if self.kind == "sym":
            return r * (r + 1) // 2
        if self.kind == "diag":
            return r
        return r * c

    def basis(self) -> np.ndarray:
        """Coefficient matrices, one per free parameter, shape ``(size, r, c)``."""
        r, c = self.shape
        out = np.zeros((self.size, r, c))
        if self.kind == "scalar":
            out[0, 0, 0] = 1.0
        elif self.kind == "sym":
            k = 0
            for i in range(r):
                for j in range(i, r):
                    out[k, i, j] = out[k, j, i] = 1.0
                    k += 1
        elif self.kind == "diag":
            for i in range(r):
                out[i, i, i] = 1.0
        else:
            for k in range(r * c):
                out[k, k // c, k % c] = 1.0
        return out

    def pack(self, value) -> np.ndarray:
        v = np.asarray(value, dtype=float)
        r, c = self.shape
        if self.kind == "scalar":
            return v.reshape(1)
        if self.kind == "diag":
            return np.diag(v).copy() if v.ndim == 2 else v.reshape(r)
        v = v.reshape(r, c)
        if self.kind == "sym":
            return v[np.triu_indices(r)].copy()
        return v.ravel().copy()

    def unpack(self, x: np.ndarray):
        if self.kind == "scalar":
            return float(x[0])
        return np.tensordot(x, self.basis(), axes=1)


class VarSpace:
    """Ordered collection of decision blocks with a flat parameter vector."""

    def __init__(self):
        self.blocks: list[Block] = []
        self._offset: dict[str, int] = {}
        self._frozen = False
        self.size = 0

    def _add(self, blk: Block):
        if self._frozen:
            raise RuntimeError("variable space is frozen once expressions exist")
        if blk.name in self._offset:
            raise ValueError(f"duplicate variable name {blk.name!r}")
        self.blocks.append(blk)
        self._offset[blk.name] = self.size
        self.size += blk.size
        return blk

    def scalar(self, name, lower=None, upper=None) -> Block:
        return self._add(Block(name, "scalar", (1, 1), lower, upper))

    def sym(self, name, n, lower=None, upper=None) -> Block:
        return self._add(Block(name, "sym", (n, n), lower, upper))

    def diag(self, name, n, lower=None, upper=None) -> Block:
        return self._add(Block(name, "diag", (n, n), lower, upper))

    def rect(self, name, rows, cols, lower=None, upper=None) -> Block:
        return self._add(Block(name, "rect", (rows, cols), lower, upper))

    def __contains__(self, name) -> bool:
        return name in self._offset

    def block(self, name) -> Block:
        return self.blocks[[b.name for b in self.blocks].index(name)]

    def slice(self, name) -> slice:
        off = self._offset[name]
        return slice(off, off + self.block(name).size)

    def var(self, name) -> "Affine":
        """The decision block ``name`` as an affine matrix expression."""
        self._frozen = True
        blk = self.block(name)
        coef = np.zeros((self.size,) + blk.shape)
        coef[self.slice(name)] = blk.basis()
        return Affine(self, np.zeros(blk.shape), coef)

    def pack(self, assignment: dict) -> np.ndarray:
        x = np.zeros(self.size)
        for blk in self.blocks:
            if blk.name not in assignment:
                raise KeyError(f"assignment is missing variable {blk.name!r}")
            x[self.slice(blk.name)] = blk.pack(assignment[blk.name])
        return x

    def unpack(self, x: np.ndarray) -> dict:
        return {blk.name: blk.unpack(x[self.slice(blk.name)]) for blk in self.blocks}


class Affine:
    """Matrix-valued affine function ``const + sum_i x_i coef[i]``."""

    __array_ufunc__ = None

    def __init__(self, space: VarSpace, const, coef=None):
        self.space = space
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        if coef is None:
            coef = np.zeros((space.size,) + self.const.shape)
        self.coef = np.asarray(coef, dtype=float)
        if self.coef.shape != (space.size,) + self.const.shape:
            raise ValueError("coefficient array does not match expression shape")

    @property
    def shape(self):
        return self.const.shape

    @property
    def T(self) -> "Affine":
        return Affine(self.space, self.const.T, np.swapaxes(self.coef, 1, 2))

    def _lift(self, other) -> "Affine":
        if isinstance(other, Affine):
            if other.space is not self.space:
                raise ValueError("expressions belong to different variable spaces")
            return other
        m = np.asarray(other, dtype=float)
        if m.ndim == 0:
            m = np.full(self.shape, float(m))
        return Affine(self.space, m)

    def __add__(self, other):
        o = self._lift(other)
        return Affine(self.space, self.const + o.const, self.coef + o.coef)

    __radd__ = __add__

    def __neg__(self):
        return Affine(self.space, -self.const, -self.coef)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if np.ndim(other) == 0:
            return Affine(self.space, self.const * other, self.coef * other)
        if self.shape != (1, 1):
            raise ValueError("only a 1x1 expression can scale a matrix")
        m = np.atleast_2d(np.asarray(other, dtype=float))
        return Affine(self.space, self.const[0, 0] * m, self.coef[:, 0, 0, None, None] * m)

    __rmul__ = __mul__

    def __matmul__(self, m):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return Affine(self.space, self.const @ m, self.coef @ m)

    def __rmatmul__(self, m):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return Affine(self.space, m @ self.const, m @ self.coef)

    def he(self) -> "Affine":
        return self + self.T

    def linear_part(self) -> "Affine":
        return Affine(self.space, np.zeros(self.shape), self.coef)

    def __call__(self, x) -> np.ndarray:
        if isinstance(x, dict):
            x = self.space.pack(x)
        return self.const + np.tensordot(np.asarray(x, dtype=float), self.coef, axes=1)

    def is_symmetric(self, tol=0.0) -> bool:
        if self.shape[0] != self.shape[1]:
            return False
        return (np.max(np.abs(self.const - self.const.T), initial=0.0) <= tol
                and np.max(np.abs(self.coef - np.swapaxes(self.coef, 1, 2)), initial=0.0) <= tol)

    def symmetrized(self) -> "Affine":
        return Affine(self.space, 0.5 * (self.const + self.const.T),
                      0.5 * (self.coef + np.swapaxes(self.coef, 1, 2)))


def block(rows: Sequence[Sequence], space: VarSpace | None = None) -> Affine:
    """Assemble a block matrix from ``Affine`` pieces, arrays and ``None`` (zeros)."""
    for row in rows:
        for item in row:
            if isinstance(item, Affine):
                space = item.space
    if space is None:
        raise ValueError("block() needs at least one Affine entry or an explicit space")
    nr, nc = len(rows), len(rows[0])
    heights = [None] * nr
    widths = [None] * nc
    for i, row in enumerate(rows):
        if len(row) != nc:
            raise ValueError("ragged block rows")
        for j, item in enumerate(row):
            if item is None:
                continue
            shp = item.shape if isinstance(item, Affine) else np.atleast_2d(item).shape
            if heights[i] not in (None, shp[0]) or widths[j] not in (None, shp[1]):
                raise ValueError(f"block ({i},{j}) has inconsistent shape {shp}")
            heights[i], widths[j] = shp
    if None in heights or None in widths:
        raise ValueError("every block row and column needs one sized entry")
    roff = np.concatenate([[0], np.cumsum(heights)])
    coff = np.concatenate([[0], np.cumsum(widths)])
    const = np.zeros((roff[-1], coff[-1]))
    coef = np.zeros((space.size, roff[-1], coff[-1]))
    for i, row in enumerate(rows):
        for j, item in enumerate(row):
            if item is None:
                continue
            rs, cs = slice(roff[i], roff[i + 1]), slice(coff[j], coff[j + 1])
            if isinstance(item, Affine):
                const[rs, cs] = item.const
                coef[:, rs, cs] = item.coef
            else:
                const[rs, cs] = np.atleast_2d(item)
    return Affine(space, const, coef)


def evaluate(expr: Affine, assignment) -> np.ndarray:
    """Value of ``expr`` at an assignment (dict by block name, or flat vector)."""
    val = expr(assignment)
    return 0.5 * (val + val.T) if val.shape[0] == val.shape[1] else val


def strict_margin(expr: Affine, rel: float = STRICT_REL) -> float:
    """Default margin realizing a strict inequality on ``expr``."""
    return rel * (1.0 + np.linalg.norm(expr.const, 2))


@dataclass
class Constraint:
    """``expr <= -margin I`` (sense ``"<="``) or ``expr >= margin I`` (``">="``)."""

    expr: Affine
    sense: str = "<="
    margin: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.sense not in ("<=", ">="):
            raise ValueError(f"unknown constraint sense {self.sense!r}")
        if not self.expr.is_symmetric(tol=1e-12 * (1 + np.max(np.abs(self.expr.const), initial=0))):
            raise ValueError(f"constraint {self.name!r} is not symmetric")
        self.expr = self.expr.symmetrized()

    def slack(self, x) -> float:
        """Signed distance to the boundary in eigenvalue terms (>= 0 when satisfied)."""
        val = evaluate(self.expr, x)
        w = np.linalg.eigvalsh(val)
        if self.sense == "<=":
            return float(-w[-1] - self.margin)
        return float(w[0] - self.margin)


@dataclass
class SdpProblem:
    space: VarSpace
    objective: Affine | None = None
    sense: str = "max"
    constraints: list[Constraint] = field(default_factory=list)

    def add(self, expr, sense="<=", margin=0.0, name="") -> Constraint:
        con = Constraint(expr, sense, margin, name)
        if con.expr.space is not self.space:
            raise ValueError("constraint uses a foreign variable space")
        self.constraints.append(con)
        return con

    def objective_vector(self) -> np.ndarray:
        if self.objective is None:
            return np.zeros(self.space.size)
        if self.objective.shape != (1, 1):
            raise ValueError("objective must be a 1x1 expression")
        return self.objective.coef[:, 0, 0].copy()

    def objective_value(self, x) -> float:
        if self.objective is None:
            return 0.0
        return float(self.objective(x)[0, 0])

    def all_constraints(self) -> list[Constraint]:
        """Explicit constraints plus elementwise bounds declared on blocks."""
        out = list(self.constraints)
        for blk in self.space.blocks:
            if blk.lower is None and blk.upper is None:
                continue
            v = self.space.var(blk.name)
            r, c = blk.shape
            for i in range(r):
                for j in range(c):
                    if blk.kind == "diag" and i != j:
                        continue
                    if blk.kind == "sym" and j < i:
                        continue
                    e = Affine(self.space, v.const[i:i + 1, j:j + 1], v.coef[:, i:i + 1, j:j + 1])
                    if blk.lower is not None:
                        out.append(Constraint(e - blk.lower, ">=", 0.0, f"{blk.name}[{i},{j}]>=lb"))
                    if blk.upper is not None:
                        out.append(Constraint(e - blk.upper, "<=", 0.0, f"{blk.name}[{i},{j}]<=ub"))
        return out


@dataclass
class SdpSolution:
    status: str
    x: np.ndarray
    assignment: dict
    objective: float
    gap: float
    margins: list[float]
    iterations: int
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def __getitem__(self, name):
        return self.assignment[name]


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 200
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    step_fraction: float = 0.98
    infeas_tol: float = 1e-8
    phase1_cap: float = 1.0
    check_tol: float = 1e-7


# -- interior point method ----------------------------------------------------

@dataclass
class _Standard:
    """``max b'y  s.t.  C_k - sum_i y_i A_k[i] >= 0`` (dense blocks + one LP block)."""

    b: np.ndarray
    sdp_c: list[np.ndarray]
    sdp_a: list[np.ndarray]
    lp_c: np.ndarray
    lp_a: np.ndarray

    @property
    def m(self):
        return self.b.size

    def aop(self, xs, xl):
        out = self.lp_a @ xl if xl.size else np.zeros(self.m)
        for a, x in zip(self.sdp_a, xs):
            out = out + np.einsum("ikl,kl->i", a, x)
        return out

    def atop(self, y):
        return ([np.tensordot(y, a, axes=1) for a in self.sdp_a],
                y @ self.lp_a if self.lp_c.size else np.zeros(0))


def _standardize(rows, b: np.ndarray) -> _Standard:
    """Build the standard form from ``(const, coef, sense, margin)`` rows."""
    sdp_c, sdp_a, lp_c, lp_a = [], [], [], []
    for const, coef, sense, margin in rows:
        eye = np.eye(const.shape[0])
        if sense == "<=":
            c, a = -const - margin * eye, coef
        else:
            c, a = const - margin * eye, -coef
        if const.shape == (1, 1):
            lp_c.append(c[0, 0])
            lp_a.append(a[:, 0, 0])
        else:
            sdp_c.append(c)
            sdp_a.append(a)
    return _Standard(
        b=b,
        sdp_c=sdp_c,
        sdp_a=sdp_a,
        lp_c=np.array(lp_c),
        lp_a=np.array(lp_a).T if lp_a else np.zeros((b.size, 0)),
    )


def _rows(constraints):
    return [(c.expr.const, c.expr.coef, c.sense, c.margin) for c in constraints]


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    li = np.linalg.inv(np.linalg.cholesky(x))
    lam = np.linalg.eigvalsh(li @ dx @ li.T)[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def _ipm(std: _Standard, opts: SolverOptions):
    """Infeasible-start HKM predictor-corrector; returns (status, y, info)."""
    m = std.m
    b = std.b
    n_total = sum(c.shape[0] for c in std.sdp_c) + std.lp_c.size
    normb = 1.0 + np.linalg.norm(b)
    normc = 1.0 + np.sqrt(sum(np.sum(c * c) for c in std.sdp_c) + np.sum(std.lp_c ** 2))

    xs, zs = [], []
    for c, a in zip(std.sdp_c, std.sdp_a):
        n = c.shape[0]
        na = np.linalg.norm(a.reshape(m, -1), axis=1) if m else np.zeros(0)
        xi = max(10.0, np.sqrt(n), n * np.max((1 + np.abs(b)) / (1 + na), initial=1.0))
        zeta = max(10.0, np.sqrt(n), np.max(na, initial=0.0), np.linalg.norm(c))
        xs.append(xi * np.eye(n))
        zs.append(zeta * np.eye(n))
    if std.lp_c.size:
        na = np.abs(std.lp_a)
        xl = np.full(std.lp_c.size, max(10.0, np.max((1 + np.abs(b)) / (1 + np.max(na, axis=1)), initial=1.0)))
        zl = np.full(std.lp_c.size, max(10.0, np.max(na, initial=0.0), np.max(np.abs(std.lp_c))))
    else:
        xl = zl = np.zeros(0)
    y = np.zeros(m)

    info = {"iterations": 0}
    best = None
    for it in range(opts.max_iter + 1):
        ats, atl = std.atop(y)
        rds = [c - z - at for c, z, at in zip(std.sdp_c, zs, ats)]
        rdl = std.lp_c - zl - atl
        rp = b - std.aop(xs, xl)
        pobj = sum(np.sum(c * x) for c, x in zip(std.sdp_c, xs)) + std.lp_c @ xl
        dobj = b @ y
        comp = sum(np.sum(x * z) for x, z in zip(xs, zs)) + xl @ zl
        mu = comp / n_total
        pinf = np.linalg.norm(rp) / normb
        dinf = np.sqrt(sum(np.sum(r * r) for r in rds) + rdl @ rdl) / normc
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        info.update(iterations=it, pobj=pobj, dobj=dobj, pinf=pinf, dinf=dinf,
                    gap=abs(pobj - dobj), relgap=relgap, comp=comp)
        log.debug("it=%3d pobj=%.10e dobj=%.10e pinf=%.1e dinf=%.1e relgap=%.1e mu=%.1e",
                  it, pobj, dobj, pinf, dinf, relgap, mu)
        merit = max(pinf, dinf, relgap)
        if best is None or merit < best[0]:
            best = (merit, y.copy(), dict(info))
        if pinf <= opts.feas_tol and dinf <= opts.feas_tol and relgap <= opts.gap_tol \
                and comp / (1.0 + abs(pobj) + abs(dobj)) <= opts.gap_tol:
            return "optimal", y, info
        # primal ray: LMI system has no solution
        ax = std.aop(xs, xl)
        if pobj < 0 and np.linalg.norm(ax) <= opts.infeas_tol * -pobj and it > 5:
            return "infeasible", y, info
        # dual ray: objective unbounded
        if dobj > 0 and it > 5:
            ray = np.sqrt(sum(np.sum((at + z) ** 2) for at, z in zip(ats, zs)) + np.sum((atl + zl) ** 2))
            if ray <= opts.infeas_tol * dobj:
                return "unbounded", y, info
        if it == opts.max_iter:
            break
        try:
            # Schur matrix as a Gram product B B' with B_i = U' A_i R, where
            # X = U U' and Z^-1 = R R'; this keeps it symmetric and PSD.
            zinv = []
            schur = np.zeros((m, m))
            for a, x, z in zip(std.sdp_a, xs, zs):
                u = np.linalg.cholesky(x)
                lz = np.linalg.cholesky(z)
                r = np.linalg.inv(lz).T
                zinv.append(r @ r.T)
                g = np.matmul(u.T, a @ r).reshape(m, -1)
                schur += g @ g.T
            if xl.size:
                schur += (std.lp_a * (xl / zl)) @ std.lp_a.T
            schur = 0.5 * (schur + schur.T)
            try:
                chol = np.linalg.cholesky(schur)

                def schur_solve(r):
                    return np.linalg.solve(chol.T, np.linalg.solve(chol, r))
            except np.linalg.LinAlgError:
                schur_solve = _lstsq_solver(schur)

            def direction(rcs, rcl):
                # rcs/rcl: complementarity targets for dX (before the -X dZ Z^-1 term)
                h = [rc - x @ rd @ zi for rc, x, rd, zi in zip(rcs, xs, rds, zinv)]
                hl = rcl - xl * rdl / zl if xl.size else np.zeros(0)
                dy = schur_solve(rp - std.aop(h, hl))
                ats_, atl_ = std.atop(dy)
                dzs = [rd - at for rd, at in zip(rds, ats_)]
                dzl = rdl - atl_
                dxs = []
                for rc, x, dz, zi in zip(rcs, xs, dzs, zinv):
                    d = rc - x @ dz @ zi
                    dxs.append(0.5 * (d + d.T))
                dxl = rcl - xl * dzl / zl if xl.size else np.zeros(0)
                return dy, dxs, dxl, dzs, dzl

            def steps(dxs, dxl, dzs, dzl):
                ap = min([_max_step(x, d) for x, d in zip(xs, dxs)] + [_max_step_lp(xl, dxl)])
                ad = min([_max_step(z, d) for z, d in zip(zs, dzs)] + [_max_step_lp(zl, dzl)])
                return ap, ad

            # predictor
            dy, dxs, dxl, dzs, dzl = direction([-x for x in xs], -xl)
            ap, ad = steps(dxs, dxl, dzs, dzl)
            ap, ad = min(1.0, ap), min(1.0, ad)
            comp_aff = sum(np.sum((x + ap * dx) * (z + ad * dz))
                           for x, dx, z, dz in zip(xs, dxs, zs, dzs))
            comp_aff += (xl + ap * dxl) @ (zl + ad * dzl)
            expon = max(1.0, 3.0 * min(ap, ad) ** 2)
            sigma = min(1.0, max(0.0, comp_aff / comp) ** expon)
            # corrector
            rcs = []
            for x, zi, dx, dz in zip(xs, zinv, dxs, dzs):
                rcs.append(sigma * mu * zi - x - dx @ dz @ zi)
            rcl = (sigma * mu - xl * zl - dxl * dzl) / zl if xl.size else np.zeros(0)
            dy, dxs, dxl, dzs, dzl = direction(rcs, rcl)
            ap, ad = steps(dxs, dxl, dzs, dzl)
            ap = min(1.0, opts.step_fraction * ap)
            ad = min(1.0, opts.step_fraction * ad)
        except np.linalg.LinAlgError as exc:
            log.debug("linear algebra failure: %s", exc)
            best[2]["failure"] = "factorization breakdown"
            return "numerical-failure", best[1], best[2]
        if not (np.isfinite(ap) and np.isfinite(ad)) or max(ap, ad) < 1e-12:
            best[2]["failure"] = "step length collapse"
            return "numerical-failure", best[1], best[2]
        log.debug("     steps ap=%.3e ad=%.3e sigma=%.2e", ap, ad, sigma)
        xs = [x + ap * d for x, d in zip(xs, dxs)]
        xl = xl + ap * dxl
        y = y + ad * dy
        zs = [z + ad * d for z, d in zip(zs, dzs)]
        zl = zl + ad * dzl
        xs = [0.5 * (x + x.T) for x in xs]
        zs = [0.5 * (z + z.T) for z in zs]
    return "max-iterations", best[1], best[2]


def _lstsq_solver(mat):
    def solve_(r):
        return np.linalg.lstsq(mat, r, rcond=None)[0]
    return solve_


def _no_variable_solution(problem, constraints, opts) -> SdpSolution:
    x = np.zeros(0)
    margins = [c.slack(x) for c in constraints]
    ok = all(s >= -opts.check_tol for s in margins)
    return SdpSolution("optimal" if ok else "infeasible", x, problem.space.unpack(x),
                       problem.objective_value(x), 0.0, margins, 0)


def _phase1(problem: SdpProblem, constraints: list[Constraint], opts: SolverOptions):
    """Maximize the common margin ``t`` (capped at ``opts.phase1_cap``)."""
    ny = problem.space.size + 1
    b = np.zeros(ny)
    b[-1] = 1.0
    rows = []
    for const, coef, sense, margin in _rows(constraints):
        n = const.shape[0]
        tcoef = np.eye(n)[None] if sense == "<=" else -np.eye(n)[None]
        rows.append((const, np.concatenate([coef, tcoef], axis=0), sense, margin))
    cap = np.zeros((ny, 1, 1))
    cap[-1] = 1.0
    rows.append((np.full((1, 1), -opts.phase1_cap), cap, "<=", 0.0))
    status, y, info = _ipm(_standardize(rows, b), opts)
    return status, y[:-1], float(y[-1]), info


def feasibility(problem: SdpProblem, opts: SolverOptions = SolverOptions()) -> SdpSolution:
    """Maximize the smallest constraint slack; the objective is ignored.

    The reported objective is the attained common margin ``t`` (capped at
    ``opts.phase1_cap``).  Status is ``"infeasible"`` when ``t`` cannot be
    brought to zero.
    """
    constraints = problem.all_constraints()
    if not constraints:
        raise ValueError("problem has no constraints")
    if problem.space.size == 0:
        sol = _no_variable_solution(problem, constraints, opts)
        sol.objective = min(sol.margins)
        return sol
    status, x, t, info = _phase1(problem, constraints, opts)
    margins = [c.slack(x) for c in constraints]
    worst = min(margins)
    if status in ("optimal", "max-iterations", "numerical-failure") and worst >= -opts.check_tol:
        status = "optimal"
    elif status == "optimal" or t < -opts.check_tol or worst < -opts.check_tol:
        status = "infeasible"
    info["margin"] = t
    return SdpSolution(status, x, problem.space.unpack(x), t, info.get("gap", 0.0),
                       margins, info["iterations"], info)


def solve(problem: SdpProblem, opts: SolverOptions = SolverOptions()) -> SdpSolution:
    """Solve an LMI-constrained linear program.

    Returns an ``SdpSolution`` whose status is one of ``optimal``,
    ``infeasible``, ``unbounded``, ``max-iterations`` or
    ``numerical-failure``.  When the main solve does not finish cleanly, a
    phase-I margin maximization decides whether the constraints are
    infeasible.
    """
    constraints = problem.all_constraints()
    if not constraints:
        raise ValueError("problem has no constraints")
    if problem.sense not in ("max", "min"):
        raise ValueError(f"unknown objective sense {problem.sense!r}")
    if problem.space.size == 0:
        return _no_variable_solution(problem, constraints, opts)
    f = problem.objective_vector()
    b = f if problem.sense == "max" else -f
    std = _standardize(_rows(constraints), b)
    status, y, info = _ipm(std, opts)
    margins = [c.slack(y) for c in constraints]
    if status == "optimal" and min(margins) < -opts.check_tol:
        status = "numerical-failure"
        info["failure"] = "returned point violates constraints"
    if status in ("infeasible", "max-iterations", "numerical-failure"):
        p1_status, x1, t, p1_info = _phase1(problem, constraints, opts)
        info["phase1_margin"] = t
        m1 = [c.slack(x1) for c in constraints]
        if t < -opts.check_tol and min(m1) < -opts.check_tol:
            status = "infeasible"
        elif status == "infeasible":
            status = "numerical-failure"
            info["failure"] = "ray test disagrees with phase I"
    return SdpSolution(status, y, problem.space.unpack(y), problem.objective_value(y),
                       info.get("gap", np.nan), margins, info["iterations"], info)
