"""Dense linear programming via two-phase tableau simplex.

Problem sizes in this package are small (at most a few hundred variables for
the network-bounding LPs), so a dense full-tableau method with careful
tolerance handling beats anything clever. Pivoting is deterministic: Dantzig
pricing with lowest-index tie breaks, switching to Bland's rule after a run
of degenerate pivots so cycling cannot occur.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .tolerances import DEFAULT, Tolerances


class LpError(Exception):
    pass


class NumericalFailure(LpError):
    """Pivot choices fell below the reliable magnitude floor."""


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """max/min objective @ x subject to rows and optional variable bounds.

    rows entries are (coefficients, relation, rhs) with relation one of
    "<=", "=", ">=". bounds is one (lo, hi) pair per variable, either side
    None for unbounded; bounds=None leaves every variable free.
    """

    objective: np.ndarray
    rows: list[tuple[np.ndarray, str, float]] = field(default_factory=list)
    bounds: list[tuple[float | None, float | None]] | None = None
    maximize: bool = True

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        n = self.objective.shape[0]
        checked = []
        for coeffs, rel, rhs in self.rows:
            coeffs = np.asarray(coeffs, dtype=float)
            if coeffs.shape != (n,):
                raise ValueError(f"constraint dimension {coeffs.shape} != ({n},)")
            if rel not in ("<=", "=", ">="):
                raise ValueError(f"unknown relation {rel!r}")
            checked.append((coeffs, rel, float(rhs)))
        self.rows = checked
        if self.bounds is not None and len(self.bounds) != n:
            raise ValueError("bounds length mismatch")

    @property
    def num_vars(self) -> int:
        return self.objective.shape[0]


@dataclass
class LpResult:
    status: Status
    optimum: float
    witness: np.ndarray | None


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    column = T[:, col].copy()
    column[row] = 0.0
    T -= np.outer(column, T[row])
    T[:, col] = 0.0
    T[row, col] = 1.0
    basis[row] = col


def _choose_entering(zrow: np.ndarray, eligible: np.ndarray, tol: float, bland: bool) -> int | None:
    candidates = np.flatnonzero(eligible & (zrow < -tol))
    if candidates.size == 0:
        return None
    if bland:
        return int(candidates[0])
    best = candidates[np.argmin(zrow[candidates])]
    return int(best)


def _choose_leaving(T: np.ndarray, basis: np.ndarray, col: int, tols: Tolerances):
    column = T[:-1, col]
    rhs = T[:-1, -1]
    pos = column > tols.optimality
    if not pos.any():
        # No reliable pivot; distinguish a genuinely nonpositive column
        # (unbounded direction) from one that is merely numerically tiny.
        if np.any(column > tols.pivot_floor):
            raise NumericalFailure("pivot candidates below magnitude floor")
        return None
    ratios = np.full(column.shape, np.inf)
    ratios[pos] = rhs[pos] / column[pos]
    best = ratios.min()
    ties = np.flatnonzero(ratios <= best + tols.feasibility)
    # Smallest basic-variable index among ties (Bland-compatible).
    row = int(ties[np.argmin(basis[ties])])
    return row, best


def _run_simplex(T, basis, eligible, tols: Tolerances) -> Status:
    degenerate = 0
    bland = False
    limit = 20000
    for _ in range(limit):
        col = _choose_entering(T[-1, :-1], eligible, tols.optimality, bland)
        if col is None:
            return Status.OPTIMAL
        leave = _choose_leaving(T, basis, col, tols)
        if leave is None:
            return Status.UNBOUNDED
        row, ratio = leave
        if ratio <= tols.feasibility:
            degenerate += 1
            if degenerate >= tols.degenerate_pivot_limit:
                bland = True
        else:
            degenerate = 0
        _pivot(T, basis, row, col)
    raise NumericalFailure("simplex iteration limit reached")


class _StandardForm:
    """Rewrites a LinearProgram as max c.u, A u {<=,=} b, u >= 0, b >= 0.

    Keeps the bookkeeping needed to map a standard-form witness back onto the
    original variables: every original variable becomes either shifted
    (x = lo + u), reflected (x = hi - u), fixed, or split (x = u+ - u-).
    """

    def __init__(self, lp: LinearProgram):
        n = lp.num_vars
        bounds = lp.bounds if lp.bounds is not None else [(None, None)] * n
        self.kind: list[tuple] = []
        col = 0
        for lo, hi in bounds:
            if lo is not None and hi is not None and lo > hi + 1e-15:
                raise _InfeasibleBounds()
            if lo is not None and hi is not None and hi - lo <= 1e-15:
                self.kind.append(("fixed", float(lo)))
            elif lo is not None:
                self.kind.append(("shift", float(lo), col, None if hi is None else float(hi)))
                col += 1
            elif hi is not None:
                self.kind.append(("reflect", float(hi), col))
                col += 1
            else:
                self.kind.append(("split", col, col + 1))
                col += 2
        self.num_cols = col

        sign = 1.0 if lp.maximize else -1.0
        self.obj_sign = sign
        self.c = np.zeros(col)
        self.const = 0.0
        for j, k in enumerate(self.kind):
            cj = sign * lp.objective[j]
            if k[0] == "fixed":
                self.const += cj * k[1]
            elif k[0] == "shift":
                self.c[k[2]] += cj
                self.const += cj * k[1]
            elif k[0] == "reflect":
                self.c[k[2]] -= cj
                self.const += cj * k[1]
            else:
                self.c[k[1]] += cj
                self.c[k[2]] -= cj

        rows = []
        rels = []
        rhss = []
        for coeffs, rel, rhs in lp.rows:
            row = np.zeros(col)
            shift = 0.0
            for j, k in enumerate(self.kind):
                a = coeffs[j]
                if a == 0.0:
                    continue
                if k[0] == "fixed":
                    shift += a * k[1]
                elif k[0] == "shift":
                    row[k[2]] += a
                    shift += a * k[1]
                elif k[0] == "reflect":
                    row[k[2]] -= a
                    shift += a * k[1]
                else:
                    row[k[1]] += a
                    row[k[2]] -= a
            rows.append(row)
            rels.append(rel)
            rhss.append(rhs - shift)
        # Finite upper bounds of shifted variables become explicit rows.
        for k in self.kind:
            if k[0] == "shift" and k[3] is not None:
                row = np.zeros(col)
                row[k[2]] = 1.0
                rows.append(row)
                rels.append("<=")
                rhss.append(k[3] - k[1])
        self.A = np.array(rows) if rows else np.zeros((0, col))
        self.rels = rels
        self.b = np.array(rhss)

    def recover(self, u: np.ndarray) -> np.ndarray:
        x = np.zeros(len(self.kind))
        for j, k in enumerate(self.kind):
            if k[0] == "fixed":
                x[j] = k[1]
            elif k[0] == "shift":
                x[j] = k[1] + u[k[2]]
            elif k[0] == "reflect":
                x[j] = k[1] - u[k[2]]
            else:
                x[j] = u[k[1]] - u[k[2]]
        return x


class _InfeasibleBounds(Exception):
    pass


def solve_lp(lp: LinearProgram, tols: Tolerances = DEFAULT) -> LpResult:
    """Solve to proven optimality; classify infeasible/unbounded exactly."""
    try:
        sf = _StandardForm(lp)
    except _InfeasibleBounds:
        return LpResult(Status.INFEASIBLE, np.nan, None)

    m = sf.A.shape[0]
    ncols = sf.num_cols
    # Orient rows so every rhs is nonnegative.
    A = sf.A.copy()
    b = sf.b.copy()
    rels = list(sf.rels)
    for i in range(m):
        if b[i] < 0:
            A[i] = -A[i]
            b[i] = -b[i]
            rels[i] = {"<=": ">=", ">=": "<=", "=": "="}[rels[i]]

    n_slack = sum(1 for r in rels if r in ("<=", ">="))
    n_art = sum(1 for r in rels if r in (">=", "="))
    total = ncols + n_slack + n_art
    T = np.zeros((m + 1, total + 1))
    T[:m, :ncols] = A
    T[:m, -1] = b
    basis = np.full(m, -1, dtype=int)
    s = ncols
    a = ncols + n_slack
    art_cols = []
    for i in range(m):
        if rels[i] == "<=":
            T[i, s] = 1.0
            basis[i] = s
            s += 1
        elif rels[i] == ">=":
            T[i, s] = -1.0
            s += 1
            T[i, a] = 1.0
            basis[i] = a
            art_cols.append(a)
            a += 1
        else:
            T[i, a] = 1.0
            basis[i] = a
            art_cols.append(a)
            a += 1

    eligible = np.ones(total, dtype=bool)
    if art_cols:
        # Phase 1: minimise the artificial sum.
        T[-1, art_cols] = 1.0
        for i in range(m):
            if basis[i] in art_cols:
                T[-1] -= T[i]
        status = _run_simplex(T, basis, eligible, tols)
        if status is not Status.OPTIMAL or T[-1, -1] < -tols.feasibility * max(1.0, np.abs(b).max() if m else 1.0):
            return LpResult(Status.INFEASIBLE, np.nan, None)
        # Remove artificials still sitting (at zero) in the basis.
        art_set = set(art_cols)
        keep_rows = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] in art_set:
                row = T[i, :ncols + n_slack]
                nz = np.flatnonzero(np.abs(row) > tols.optimality)
                if nz.size:
                    _pivot(T, basis, i, int(nz[0]))
                else:
                    keep_rows[i] = False
        if not keep_rows.all():
            T = np.vstack([T[:m][keep_rows], T[-1:]])
            basis = basis[keep_rows]
            m = basis.shape[0]
        eligible[art_cols] = False

    # Phase 2 objective row from scratch.
    T[-1, :] = 0.0
    T[-1, :ncols] = -sf.c
    for i in range(m):
        cb = sf.c[basis[i]] if basis[i] < ncols else 0.0
        if cb != 0.0:
            T[-1] += cb * T[i]
    status = _run_simplex(T, basis, eligible, tols)
    if status is Status.UNBOUNDED:
        return LpResult(Status.UNBOUNDED, np.inf if lp.maximize else -np.inf, None)

    u = np.zeros(total)
    u[basis] = T[:m, -1]
    x = sf.recover(u[:ncols])
    optimum = float(lp.objective @ x)
    _verify_witness(lp, x, tols)
    return LpResult(Status.OPTIMAL, optimum, x)


def _verify_witness(lp: LinearProgram, x: np.ndarray, tols: Tolerances) -> None:
    for coeffs, rel, rhs in lp.rows:
        v = float(coeffs @ x)
        scale = max(1.0, abs(rhs), float(np.abs(coeffs).max()) * float(np.abs(x).max() if x.size else 0.0))
        slack = tols.feasibility * scale * 10.0
        ok = (v <= rhs + slack) if rel == "<=" else (v >= rhs - slack) if rel == ">=" else abs(v - rhs) <= slack
        if not ok:
            raise NumericalFailure(f"witness violates {rel} row by {abs(v - rhs):.3e}")
    if lp.bounds is not None:
        for j, (lo, hi) in enumerate(lp.bounds):
            if lo is not None and x[j] < lo - tols.feasibility * max(1.0, abs(lo)) * 10.0:
                raise NumericalFailure("witness below variable lower bound")
            if hi is not None and x[j] > hi + tols.feasibility * max(1.0, abs(hi)) * 10.0:
                raise NumericalFailure("witness above variable upper bound")
