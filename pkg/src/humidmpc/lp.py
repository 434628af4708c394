"""Dense linear programming.

Problems are stated as

    minimize    c @ x + constant
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                lb <= x <= ub

and solved with a two-phase tableau simplex method. Dantzig pricing is used
until a run of degenerate pivots, after which Bland's rule takes over until
the objective moves again, which rules out cycling. The returned solution is
certified: the basis is refactorized, primal residuals are measured on the
original problem, and dual feasibility plus the duality gap are checked.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InfeasibleError, NumericError, UnboundedError, UsageError

_PIVOT_TOL = 1e-9
_DEGENERATE_RUN = 30


@dataclass
class LinearProgram:
    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    constant: float = 0.0
    var_names: list = field(default_factory=list)
    ub_names: list = field(default_factory=list)
    eq_names: list = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A_ub = np.asarray(self.A_ub, dtype=float).reshape(-1, n)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        self.lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        self.validate()

    @property
    def n_vars(self):
        return self.c.size

    @property
    def n_ub(self):
        return self.b_ub.size

    @property
    def n_eq(self):
        return self.b_eq.size

    def validate(self):
        if self.A_ub.shape[0] != self.b_ub.size or self.A_eq.shape[0] != self.b_eq.size:
            raise UsageError("constraint matrix and right-hand side lengths differ")
        for name in ("c", "A_ub", "b_ub", "A_eq", "b_eq"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise UsageError(f"{name} has non-finite entries")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)) or np.any(self.lb > self.ub):
            raise UsageError("inconsistent variable bounds")

    def objective(self, x):
        return float(self.c @ x + self.constant)

    def residuals(self, x):
        """Largest violation of inequality, equality and bound constraints."""
        r_ub = np.max(self.A_ub @ x - self.b_ub, initial=0.0)
        r_eq = np.max(np.abs(self.A_eq @ x - self.b_eq), initial=0.0)
        r_b = max(np.max(self.lb - x, initial=0.0), np.max(x - self.ub, initial=0.0))
        return max(r_ub, 0.0), r_eq, max(r_b, 0.0)


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    iterations: int
    duals_ub: np.ndarray
    duals_eq: np.ndarray
    primal_residual: float
    dual_infeasibility: float
    duality_gap: float
    status: str = "optimal"


class _StandardForm:
    """Map ``x = x0 + M @ y`` with ``y >= 0`` and rows ``A y (+ s) = b``."""

    def __init__(self, lp: LinearProgram):
        n = lp.n_vars
        cols = []
        x0 = np.zeros(n)
        bound_rows = []
        for j in range(n):
            lo, hi = lp.lb[j], lp.ub[j]
            if np.isfinite(lo):
                x0[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    bound_rows.append((len(cols) - 1, hi - lo, j))
            elif np.isfinite(hi):
                x0[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        ny = len(cols)
        M = np.zeros((n, ny))
        for k, (j, s) in enumerate(cols):
            M[j, k] = s
        self.M, self.x0 = M, x0

        A_ub = lp.A_ub @ M
        b_ub = lp.b_ub - lp.A_ub @ x0
        A_bd = np.zeros((len(bound_rows), ny))
        b_bd = np.zeros(len(bound_rows))
        for i, (k, width, _) in enumerate(bound_rows):
            A_bd[i, k] = 1.0
            b_bd[i] = width
        A_eq = lp.A_eq @ M
        b_eq = lp.b_eq - lp.A_eq @ x0

        n_ineq = lp.n_ub + len(bound_rows)
        m = n_ineq + lp.n_eq
        A = np.zeros((m, ny + n_ineq))
        A[:lp.n_ub, :ny] = A_ub
        A[lp.n_ub:n_ineq, :ny] = A_bd
        A[n_ineq:, :ny] = A_eq
        A[:n_ineq, ny:] = np.eye(n_ineq)
        b = np.concatenate([b_ub, b_bd, b_eq])
        sign = np.where(b < 0, -1.0, 1.0)
        self.A = A * sign[:, None]
        self.b = b * sign
        self.sign = sign
        self.c = np.concatenate([M.T @ lp.c, np.zeros(n_ineq)])
        self.ny, self.n_ineq, self.m = ny, n_ineq, m
        self.n_ub = lp.n_ub
        self.bound_rows = bound_rows
        self.const = float(lp.c @ x0)

    def row_name(self, lp, i):
        if i < self.n_ub:
            return lp.ub_names[i] if i < len(lp.ub_names) else f"ub[{i}]"
        if i < self.n_ineq:
            j = self.bound_rows[i - self.n_ub][2]
            name = lp.var_names[j] if j < len(lp.var_names) else f"x[{j}]"
            return f"bounds({name})"
        k = i - self.n_ineq
        return lp.eq_names[k] if k < len(lp.eq_names) else f"eq[{k}]"


def _pivot(T, r, q):
    T[r] /= T[r, q]
    col = T[:, q].copy()
    col[r] = 0.0
    nz = np.abs(col) > 0
    T[nz] -= np.outer(col[nz], T[r])


def _simplex(T, basis, n_cols, tol, max_iter, it0=0):
    """Run primal simplex on tableau ``T`` (objective in the last row)."""
    m = T.shape[0] - 1
    it = it0
    degenerate = 0
    while True:
        d = T[-1, :n_cols]
        if degenerate >= _DEGENERATE_RUN:
            candidates = np.flatnonzero(d < -tol)
            if candidates.size == 0:
                return it
            q = int(candidates[0])
        else:
            q = int(np.argmin(d))
            if d[q] >= -tol:
                return it
        col = T[:m, q]
        pos = col > _PIVOT_TOL
        if not np.any(pos):
            raise UnboundedError(f"objective unbounded along column {q}")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))
        r = int(ties[np.argmin(np.asarray(basis)[ties])])
        degenerate = degenerate + 1 if T[r, -1] <= 1e-12 else 0
        _pivot(T, r, q)
        basis[r] = q
        it += 1
        if it > max_iter:
            raise NumericError(f"simplex iteration cap {max_iter} exceeded")


def solve_lp(lp: LinearProgram, tol=1e-7, max_iter=20000) -> LpSolution:
    """Solve ``lp`` to optimality or raise InfeasibleError/UnboundedError.

    ``tol`` bounds the relative primal residual, the dual infeasibility and
    the relative duality gap of the returned point.
    """
    sf = _StandardForm(lp)
    A, b, m = sf.A, sf.b, sf.m
    n_std = A.shape[1]
    opt_tol = min(tol, 1e-9)

    # slack columns with a +1 entry seed the basis; other rows get artificials
    basis = [-1] * m
    for i in range(sf.n_ineq):
        if sf.sign[i] > 0:
            basis[i] = sf.ny + i
    art_rows = [i for i in range(m) if basis[i] < 0]
    n_art = len(art_rows)
    T = np.zeros((m + 1, n_std + n_art + 1))
    T[:m, :n_std] = A
    T[:m, -1] = b
    for k, i in enumerate(art_rows):
        T[i, n_std + k] = 1.0
        basis[i] = n_std + k

    it = 0
    if n_art:
        T[-1, n_std:n_std + n_art] = 1.0
        for i in art_rows:
            T[-1] -= T[i]
        it = _simplex(T, basis, n_std + n_art, opt_tol, max_iter)
        infeas = -T[-1, -1]
        if infeas > tol * max(1.0, np.abs(b).max(initial=0.0)):
            B = np.column_stack([_column(A, n_std, art_rows, j) for j in basis])
            c_b = np.array([1.0 if j >= n_std else 0.0 for j in basis])
            y = np.linalg.solve(B.T, c_b) * sf.sign
            rows = [sf.row_name(lp, i) for i in np.flatnonzero(np.abs(y) > 1e-9)]
            raise InfeasibleError(
                f"no feasible point (phase-one infeasibility {infeas:.3g}); conflicting rows: "
                + ", ".join(rows[:12]) + (" ..." if len(rows) > 12 else ""),
                certificate=y, rows=rows)
        # drive remaining artificials out of the basis or drop redundant rows
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= n_std:
                cand = np.flatnonzero(np.abs(T[r, :n_std]) > 1e-7)
                if cand.size:
                    q = int(cand[np.argmax(np.abs(T[r, cand]))])
                    _pivot(T, r, q)
                    basis[r] = q
                else:
                    keep[r] = False
        rows = np.flatnonzero(keep)
        T = np.vstack([T[rows], T[-1:]])
        T = np.delete(T, np.s_[n_std:n_std + n_art], axis=1)
        basis = [basis[r] for r in rows]
        A_kept, b_kept = A[rows], b[rows]
    else:
        keep = np.ones(m, dtype=bool)
        A_kept, b_kept = A, b

    T[-1, :] = 0.0
    T[-1, :n_std] = sf.c
    for r, j in enumerate(basis):
        if sf.c[j] != 0.0:
            T[-1] -= sf.c[j] * T[r]
    it = _simplex(T, basis, n_std, opt_tol, max_iter, it)

    B = A_kept[:, basis]
    try:
        y_b = np.linalg.solve(B, b_kept)
        duals = np.linalg.solve(B.T, sf.c[basis])
    except np.linalg.LinAlgError as exc:
        raise NumericError("final simplex basis is singular") from exc
    z = np.zeros(n_std)
    z[basis] = y_b
    z = np.maximum(z, 0.0)
    x = sf.x0 + sf.M @ z[:sf.ny]

    reduced = sf.c - A_kept.T @ duals
    dual_inf = float(max(-reduced.min(initial=0.0), 0.0))
    primal_obj = float(sf.c @ z)
    dual_obj = float(b_kept @ duals)
    gap = abs(primal_obj - dual_obj) / max(1.0, abs(primal_obj))
    scale = max(1.0, np.abs(lp.b_ub).max(initial=0.0), np.abs(lp.b_eq).max(initial=0.0))
    primal_res = max(lp.residuals(x)) / scale
    cost_scale = max(1.0, np.abs(sf.c).max(initial=0.0))
    if primal_res > tol or dual_inf > tol * cost_scale or gap > tol:
        raise NumericError(
            f"solution failed certification: residual {primal_res:.2e}, dual infeasibility "
            f"{dual_inf:.2e}, duality gap {gap:.2e}")

    full = np.zeros(m)
    full[keep] = duals
    full *= sf.sign
    return LpSolution(
        x=x,
        objective=lp.objective(x),
        iterations=it,
        duals_ub=full[:lp.n_ub],
        duals_eq=full[sf.n_ineq:],
        primal_residual=primal_res,
        dual_infeasibility=dual_inf,
        duality_gap=gap,
    )


def _column(A, n_std, art_rows, j):
    if j < n_std:
        return A[:, j]
    e = np.zeros(A.shape[0])
    e[art_rows[j - n_std]] = 1.0
    return e
