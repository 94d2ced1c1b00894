"""Bounded template polyhedra.

An abstract state is a fixed direction set (the template) plus one support
bound per direction. All operations keep polyhedra canonical: every stored
bound equals the true support value in its direction, so containment is a
componentwise comparison and bisection stays inside the same template
algebra. Templates must be centrally symmetric (each direction's negation is
also a direction); rectangles and octagons are, and custom direction sets
are validated on construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .linprog import LinearProgram, NumericalFailure, Status, solve_lp
from .tolerances import DEFAULT, Tolerances


class GeometryError(Exception):
    pass


class InfeasibleInput(GeometryError):
    """Operation applied to an empty polyhedron."""


class EmptyInput(InfeasibleInput):
    pass


class TemplateMismatch(GeometryError):
    pass


class DegenerateSplit(GeometryError):
    """Requested bisection direction has ~zero extent."""


class DegenerateGeometry(GeometryError):
    """No interior point exists; sampling is impossible."""


def _solve_with_retry(lp: LinearProgram, tols: Tolerances):
    try:
        return solve_lp(lp, tols)
    except NumericalFailure:
        jittered = LinearProgram(
            objective=lp.objective,
            rows=[(c, rel, rhs + 1e-9) for (c, rel, rhs) in lp.rows],
            bounds=lp.bounds,
            maximize=lp.maximize,
        )
        return solve_lp(jittered, tols)


class Template:
    """Ordered direction set defining a family of polyhedra."""

    def __init__(self, directions: np.ndarray, kind: str = "custom",
                 tols: Tolerances = DEFAULT):
        directions = np.asarray(directions, dtype=float)
        if directions.ndim != 2 or directions.shape[0] < 2:
            raise ValueError("template needs a 2d array with >= 2 directions")
        norms = np.linalg.norm(directions, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("zero direction in template")
        self.directions = directions
        self.dimension = directions.shape[1]
        self.kind = kind
        self._tols = tols
        self._axis_index: dict[tuple[int, int], int] = {}
        self.negation = self._match_negations()
        self._check_axis_signs()
        self._check_bounded()
        self.key = hash(np.round(directions, 12).tobytes())

    def __len__(self) -> int:
        return self.directions.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, Template) and np.array_equal(self.directions, other.directions)

    def __hash__(self) -> int:
        return self.key

    def _match_negations(self) -> np.ndarray:
        ds = self.directions
        neg = np.full(len(ds), -1, dtype=int)
        for j, d in enumerate(ds):
            hits = np.flatnonzero(np.all(np.abs(ds + d) <= 1e-12, axis=1))
            if hits.size == 0:
                raise ValueError(
                    "template is not centrally symmetric: direction "
                    f"{j} has no negation; bisection requires one")
            neg[j] = hits[0]
        return neg

    def _check_axis_signs(self) -> None:
        for i in range(self.dimension):
            col = self.directions[:, i]
            if not (np.any(col > 0) and np.any(col < 0)):
                raise ValueError(f"axis {i} is not bounded by the template")

    def _check_bounded(self) -> None:
        # {x : Dx <= 1} bounded iff every axis objective solves finite.
        rows = [(d, "<=", 1.0) for d in self.directions]
        for i in range(self.dimension):
            for sign in (1.0, -1.0):
                c = np.zeros(self.dimension)
                c[i] = sign
                res = solve_lp(LinearProgram(objective=c, rows=rows), self._tols)
                if res.status is not Status.OPTIMAL:
                    raise ValueError("template does not bound the state space")

    def axis_direction_index(self, axis: int, sign: int) -> int | None:
        """Index of the +/- unit direction for an axis, if present."""
        cache_key = (axis, sign)
        if cache_key not in self._axis_index:
            unit = np.zeros(self.dimension)
            unit[axis] = float(sign)
            hits = np.flatnonzero(np.all(np.abs(self.directions - unit) <= 1e-12, axis=1))
            self._axis_index[cache_key] = int(hits[0]) if hits.size else -1
        idx = self._axis_index[cache_key]
        return None if idx < 0 else idx


def rectangle(dimension: int) -> Template:
    eye = np.eye(dimension)
    return Template(np.vstack([eye, -eye]), kind="rect")


def octagon(dimension: int) -> Template:
    eye = np.eye(dimension)
    rows = [eye, -eye]
    for i, j in itertools.combinations(range(dimension), 2):
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            d = np.zeros(dimension)
            d[i], d[j] = si, sj
            rows.append(d[None, :])
    return Template(np.vstack(rows), kind="oct")


def custom(directions) -> Template:
    return Template(np.asarray(directions, dtype=float), kind="custom")


@dataclass(frozen=True)
class Halfspace:
    """normal . x <= offset"""

    normal: np.ndarray
    offset: float


class Polyhedron:
    """Canonical template polyhedron {x : <delta_j, x> <= bounds[j]}."""

    __slots__ = ("template", "bounds", "_tols")

    def __init__(self, template: Template, bounds, *, _canonical: bool = False,
                 tols: Tolerances = DEFAULT):
        self.template = template
        self._tols = tols
        if bounds is None:
            self.bounds = None
            return
        bounds = np.asarray(bounds, dtype=float)
        if bounds.shape != (len(template),):
            raise ValueError("bounds length does not match template")
        if _canonical:
            self.bounds = bounds
        else:
            canon = _canonical_bounds(template, [], bounds_hint=bounds, tols=tols)
            self.bounds = canon

    # -- constructors -----------------------------------------------------

    @staticmethod
    def empty(template: Template) -> "Polyhedron":
        return Polyhedron(template, None, _canonical=True)

    @staticmethod
    def from_box(template: Template, lo, hi, tols: Tolerances = DEFAULT) -> "Polyhedron":
        """Tightest template enclosure of an axis-aligned box (closed form)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(lo > hi):
            return Polyhedron.empty(template)
        D = template.directions
        bounds = np.sum(np.maximum(D * lo, D * hi), axis=1)
        return Polyhedron(template, bounds, _canonical=True, tols=tols)

    @staticmethod
    def from_system(template: Template, rows: list[Halfspace],
                    tols: Tolerances = DEFAULT) -> "Polyhedron":
        """Tightest template enclosure of an arbitrary halfspace system."""
        bounds = _canonical_bounds(template, rows, bounds_hint=None, tols=tols)
        if bounds is None:
            return Polyhedron.empty(template)
        return Polyhedron(template, bounds, _canonical=True, tols=tols)

    # -- basics ------------------------------------------------------------

    @property
    def is_empty(self) -> bool:
        return self.bounds is None

    def dedup_key(self) -> tuple:
        if self.is_empty:
            return (self.template.key, None)
        return (self.template.key, np.round(self.bounds, 9).tobytes())

    def member(self, point, slack: float | None = None) -> bool:
        if self.is_empty:
            return False
        slack = self._tols.feasibility * 10 if slack is None else slack
        return bool(np.all(self.template.directions @ np.asarray(point, dtype=float)
                           <= self.bounds + slack))

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box (support values along +/- axes)."""
        if self.is_empty:
            raise EmptyInput("empty polyhedron has no box")
        n = self.template.dimension
        lo = np.empty(n)
        hi = np.empty(n)
        for i in range(n):
            jp = self.template.axis_direction_index(i, +1)
            jm = self.template.axis_direction_index(i, -1)
            hi[i] = self.bounds[jp] if jp is not None else support_value(self, _unit(n, i, +1))
            lo[i] = -self.bounds[jm] if jm is not None else -support_value(self, _unit(n, i, -1))
        return lo, hi

    def with_rows(self) -> list[Halfspace]:
        return [Halfspace(d, float(b)) for d, b in zip(self.template.directions, self.bounds)]

    def canonicalize(self) -> "Polyhedron":
        """Idempotent: polyhedra are canonical on construction."""
        return self

    def __repr__(self) -> str:
        if self.is_empty:
            return f"Polyhedron(empty, kind={self.template.kind})"
        return f"Polyhedron(kind={self.template.kind}, bounds={np.array2string(self.bounds, precision=4)})"


def _unit(n: int, axis: int, sign: int) -> np.ndarray:
    u = np.zeros(n)
    u[axis] = float(sign)
    return u


def _constraint_rows(template: Template, bounds, extra: list[Halfspace]):
    rows = [(template.directions[j], "<=", float(bounds[j])) for j in range(len(template))] if bounds is not None else []
    rows += [(h.normal, "<=", float(h.offset)) for h in extra]
    return rows


def _canonical_bounds(template: Template, extra: list[Halfspace], bounds_hint,
                      tols: Tolerances):
    """Support value per template direction over the given system.

    Returns None when the system is infeasible. bounds_hint, when given,
    supplies the template-row rhs and acts as a cap on the result.
    """
    rows = _constraint_rows(template, bounds_hint, extra)
    out = np.empty(len(template))
    for j, d in enumerate(template.directions):
        res = _solve_with_retry(LinearProgram(objective=d, rows=rows), tols)
        if res.status is Status.INFEASIBLE:
            return None
        if res.status is Status.UNBOUNDED:
            raise GeometryError("unbounded support direction on a valid template")
        out[j] = res.optimum if bounds_hint is None else min(res.optimum, bounds_hint[j])
    return out


# -- operations -------------------------------------------------------------


def support_value(p: Polyhedron, direction, tols: Tolerances = DEFAULT) -> float:
    """sup over p of <direction, x>, by LP."""
    if p.is_empty:
        raise InfeasibleInput("support of an empty polyhedron")
    d = np.asarray(direction, dtype=float)
    if d.shape != (p.template.dimension,) or not np.any(d):
        raise ValueError("direction must be a nonzero vector of matching dimension")
    res = _solve_with_retry(
        LinearProgram(objective=d, rows=_constraint_rows(p.template, p.bounds, [])), tols)
    if res.status is Status.UNBOUNDED:
        raise GeometryError("unbounded support direction on a valid template")
    if res.status is Status.INFEASIBLE:
        raise InfeasibleInput("support of an empty polyhedron")
    return res.optimum


def contains(outer: Polyhedron, inner: Polyhedron, tols: Tolerances = DEFAULT) -> bool:
    """inner subseteq outer, as a componentwise canonical-bound test."""
    if outer.template != inner.template:
        raise TemplateMismatch("containment requires identical templates")
    if inner.is_empty:
        return True
    if outer.is_empty:
        return False
    return bool(np.all(inner.bounds <= outer.bounds + tols.containment))


def direction_extent(p: Polyhedron, dir_index: int) -> tuple[float, float]:
    """(lower, upper) support range along template direction dir_index."""
    if p.is_empty:
        raise EmptyInput("extent of an empty polyhedron")
    j = dir_index
    upper = float(p.bounds[j])
    lower = -float(p.bounds[p.template.negation[j]])
    return lower, upper


def bisect(p: Polyhedron, dir_index: int, boundary: float, min_frac: float,
           tols: Tolerances = DEFAULT) -> tuple[Polyhedron, Polyhedron]:
    """Split p along a template direction at `boundary`.

    The cut is clamped so each slice keeps at least min_frac of the parent's
    extent along the direction; the halves are canonicalized and partition p
    (disjoint interiors, union equal to p).
    """
    if p.is_empty:
        raise EmptyInput("bisect of an empty polyhedron")
    if not 0.0 < min_frac <= 0.5:
        raise ValueError("min_frac must lie in (0, 0.5]")
    lower, upper = direction_extent(p, dir_index)
    extent = upper - lower
    if extent < tols.width_floor:
        raise DegenerateSplit(f"extent {extent:.3e} below width floor")
    if not lower < boundary < upper:
        raise ValueError("boundary must be strictly inside the support range")
    c = min(max(boundary, lower + min_frac * extent), upper - min_frac * extent)

    neg = p.template.negation[dir_index]
    lo_bounds = p.bounds.copy()
    lo_bounds[dir_index] = c
    hi_bounds = p.bounds.copy()
    hi_bounds[neg] = -c
    if p.template.kind == "rect":
        # Axis cuts keep boxes canonical; skip the LP round.
        low = Polyhedron(p.template, lo_bounds, _canonical=True, tols=tols)
        high = Polyhedron(p.template, hi_bounds, _canonical=True, tols=tols)
    else:
        low = Polyhedron(p.template, lo_bounds, tols=tols)
        high = Polyhedron(p.template, hi_bounds, tols=tols)
    if low.is_empty or high.is_empty:
        raise DegenerateSplit("bisection produced an empty slice")
    return low, high


def intersects_region(p: Polyhedron, region: list[Halfspace],
                      tols: Tolerances = DEFAULT) -> bool:
    """True iff p meets the (closed) conjunction of halfspaces."""
    if p.is_empty:
        return False
    rows = _constraint_rows(p.template, p.bounds, list(region))
    res = _solve_with_retry(
        LinearProgram(objective=np.zeros(p.template.dimension), rows=rows), tols)
    return res.status is Status.OPTIMAL


def chebyshev_center(p: Polyhedron, tols: Tolerances = DEFAULT) -> tuple[np.ndarray, float]:
    """Deepest interior point and its constraint clearance radius."""
    if p.is_empty:
        raise EmptyInput("center of an empty polyhedron")
    n = p.template.dimension
    D = p.template.directions
    norms = np.linalg.norm(D, axis=1)
    rows = [(np.concatenate([D[j], [norms[j]]]), "<=", float(p.bounds[j]))
            for j in range(len(p.template))]
    c = np.zeros(n + 1)
    c[-1] = 1.0
    res = _solve_with_retry(
        LinearProgram(objective=c, rows=rows, bounds=[(None, None)] * n + [(0.0, None)]), tols)
    if res.status is not Status.OPTIMAL:
        raise EmptyInput("center LP infeasible")
    return res.witness[:n], float(res.witness[-1])


def hit_and_run_sample(p: Polyhedron, count: int, seed: int,
                       burn_in: int = 100, tols: Tolerances = DEFAULT) -> np.ndarray:
    """Approximately uniform interior samples, deterministic per seed.

    Chain starts at the Chebyshev center, runs `burn_in` warmup steps, then
    records every step (thinning 1). Raises DegenerateGeometry when the
    polyhedron has no usable interior.
    """
    if p.is_empty:
        raise EmptyInput("cannot sample an empty polyhedron")
    if count < 1:
        raise ValueError("count must be >= 1")
    x, radius = chebyshev_center(p, tols)
    if radius < tols.width_floor:
        raise DegenerateGeometry(f"interior radius {radius:.3e} ~ 0")
    D = p.template.directions
    b = p.bounds
    rng = np.random.default_rng(seed)
    n = p.template.dimension
    out = np.empty((count, n))
    kept = 0
    slack = b - D @ x
    for step in range(burn_in + count):
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        rates = D @ d
        t_hi = np.inf
        t_lo = -np.inf
        pos = rates > 1e-14
        neg = rates < -1e-14
        if pos.any():
            t_hi = np.min(slack[pos] / rates[pos])
        if neg.any():
            t_lo = np.max(slack[neg] / rates[neg])
        if not np.isfinite(t_hi) or not np.isfinite(t_lo) or t_hi <= t_lo:
            t = 0.0
        else:
            shrink = 1e-12 * (t_hi - t_lo)
            t = rng.uniform(t_lo + shrink, t_hi - shrink)
        x = x + t * d
        slack = b - D @ x
        if step >= burn_in:
            out[kept] = x
            kept += 1
    return out


def vertices_2d(rows: list[Halfspace], tols: Tolerances = DEFAULT) -> np.ndarray:
    """Vertex list of a 2d halfspace intersection, ordered by angle.

    Test/plot helper only; quadratic in the number of rows.
    """
    A = np.array([h.normal for h in rows])
    b = np.array([h.offset for h in rows])
    pts = []
    m = len(rows)
    for i in range(m):
        for j in range(i + 1, m):
            M = np.array([A[i], A[j]])
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            v = np.linalg.solve(M, np.array([b[i], b[j]]))
            if np.all(A @ v <= b + 1e-7):
                pts.append(v)
    if not pts:
        return np.zeros((0, 2))
    P = np.unique(np.round(np.array(pts), 9), axis=0)
    centroid = P.mean(axis=0)
    order = np.argsort(np.arctan2(P[:, 1] - centroid[1], P[:, 0] - centroid[0]))
    return P[order]
