import numpy as np
import pytest

from policert import geometry as geo
from policert.geometry import (
    DegenerateSplit,
    Halfspace,
    Polyhedron,
    TemplateMismatch,
    bisect,
    contains,
    hit_and_run_sample,
    intersects_region,
    octagon,
    rectangle,
    support_value,
)


@pytest.fixture(scope="module")
def rect2():
    return rectangle(2)


@pytest.fixture(scope="module")
def oct2():
    return octagon(2)


def unit_box(template):
    return Polyhedron.from_box(template, [0.0, 0.0], [1.0, 1.0])


# -- templates ---------------------------------------------------------------


def test_template_shapes(rect2, oct2):
    assert len(rect2) == 4 and rect2.dimension == 2
    assert len(oct2) == 8
    assert len(octagon(3)) == 6 + 12


def test_template_rejects_unbounded_directions():
    with pytest.raises(ValueError):
        geo.custom([[1.0, 1.0], [-1.0, -1.0]])


def test_template_requires_negations():
    with pytest.raises(ValueError):
        geo.custom([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0]])


# -- support values -----------------------------------------------------------


def test_support_box_face(rect2):
    assert support_value(unit_box(rect2), [1.0, 0.0]) == pytest.approx(1.0, abs=1e-9)


def test_support_box_corner(rect2):
    assert support_value(unit_box(rect2), [1.0, 1.0]) == pytest.approx(2.0, abs=1e-9)


def test_support_triangle_in_octagon(oct2):
    triangle = Polyhedron.from_system(oct2, [
        Halfspace(np.array([-1.0, 0.0]), 0.0),
        Halfspace(np.array([0.0, -1.0]), 0.0),
        Halfspace(np.array([1.0, 1.0]), 1.0),
    ])
    # Brute force over the vertices (0,0), (1,0), (0,1).
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    expected = float(np.max(verts @ np.array([1.0, -1.0])))
    assert expected == 1.0
    assert support_value(triangle, [1.0, -1.0]) == pytest.approx(expected, abs=1e-9)


def test_support_matches_canonical_bounds(oct2):
    p = Polyhedron.from_box(oct2, [-0.3, 0.1], [0.9, 2.0])
    for j, d in enumerate(oct2.directions):
        assert support_value(p, d) == pytest.approx(p.bounds[j], abs=1e-9)


def test_support_empty_raises(rect2):
    with pytest.raises(geo.InfeasibleInput):
        support_value(Polyhedron.empty(rect2), [1.0, 0.0])


# -- containment ---------------------------------------------------------------


def test_contains_nested_boxes(rect2):
    outer = unit_box(rect2)
    inner = Polyhedron.from_box(rect2, [0.2, 0.2], [0.8, 0.8])
    assert contains(outer, inner)
    assert not contains(inner, outer)


def test_contains_shifted_box(rect2):
    outer = unit_box(rect2)
    inner = Polyhedron.from_box(rect2, [0.5, 0.0], [1.5, 1.0])
    assert not contains(outer, inner)


def test_contains_octagon_hulls(oct2):
    outer = unit_box(oct2)
    inner = Polyhedron.from_system(oct2, [
        Halfspace(np.array([1.0, 1.0]), 0.5),
        Halfspace(np.array([-1.0, 0.0]), 0.0),
        Halfspace(np.array([0.0, -1.0]), 0.0),
    ])
    assert np.all(inner.bounds <= outer.bounds + 1e-9)
    assert contains(outer, inner)


def test_contains_template_mismatch(rect2, oct2):
    with pytest.raises(TemplateMismatch):
        contains(unit_box(rect2), unit_box(oct2))


def test_contains_partial_order_on_random_boxes(rect2):
    rng = np.random.default_rng(11)
    boxes = []
    for _ in range(30):
        lo = rng.uniform(-2, 1, size=2)
        hi = lo + rng.uniform(0.1, 2, size=2)
        boxes.append(Polyhedron.from_box(rect2, lo, hi))
    for p in boxes:
        assert contains(p, p)  # reflexive
    for p in boxes:
        for q in boxes:
            if contains(p, q) and contains(q, p):
                assert np.allclose(p.bounds, q.bounds, atol=2e-9)  # antisymmetric
            for r in boxes:
                if contains(p, q) and contains(q, r):
                    assert contains(p, r, geo.Tolerances(containment=3e-9))  # transitive


# -- bisection -----------------------------------------------------------------


def test_bisect_box_at_midpoint(rect2):
    low, high = bisect(unit_box(rect2), 0, 0.5, 0.1)
    assert np.allclose(low.bounds, [0.5, 1.0, 0.0, 0.0])
    assert np.allclose(high.bounds, [1.0, 1.0, -0.5, 0.0])


def test_bisect_clamps_to_min_frac(rect2):
    low, high = bisect(unit_box(rect2), 0, 0.02, 0.1)
    lo_lo, lo_hi = low.box()
    assert lo_hi[0] == pytest.approx(0.1, abs=1e-9)
    hi_lo, _ = high.box()
    assert hi_lo[0] == pytest.approx(0.1, abs=1e-9)


def test_bisect_octagon_diagonal_partitions_support(oct2):
    p = unit_box(oct2)
    j = next(i for i, d in enumerate(oct2.directions) if np.allclose(d, [1.0, 1.0]))
    lo_ext, hi_ext = geo.direction_extent(p, j)
    mid = 0.5 * (lo_ext + hi_ext)
    low, high = bisect(p, j, mid, 0.1)
    assert support_value(low, [1.0, 1.0]) == pytest.approx(mid, abs=1e-9)
    assert -support_value(high, [-1.0, -1.0]) == pytest.approx(mid, abs=1e-9)
    assert support_value(high, [1.0, 1.0]) == pytest.approx(hi_ext, abs=1e-9)
    assert -support_value(low, [-1.0, -1.0]) == pytest.approx(lo_ext, abs=1e-9)


def test_bisect_samples_land_in_exactly_one_half(oct2):
    p = unit_box(oct2)
    pts = hit_and_run_sample(p, 500, seed=3)
    j = 0
    lo_ext, hi_ext = geo.direction_extent(p, j)
    low, high = bisect(p, j, 0.5 * (lo_ext + hi_ext), 0.1)
    for x in pts:
        in_low = low.member(x, slack=0.0)
        in_high = high.member(x, slack=0.0)
        assert in_low or in_high
        boundary = abs(x[j] - 0.5) <= 1e-9
        if not boundary:
            assert in_low != in_high


def test_bisect_degenerate(rect2):
    flat = Polyhedron.from_box(rect2, [0.0, 0.0], [0.0, 1.0])
    with pytest.raises(DegenerateSplit):
        bisect(flat, 0, 0.0, 0.1)


def test_bisect_rejects_outside_boundary(rect2):
    with pytest.raises(ValueError):
        bisect(unit_box(rect2), 0, 1.5, 0.1)


# -- sampling ------------------------------------------------------------------


def test_hit_and_run_membership(rect2):
    p = unit_box(rect2)
    pts = hit_and_run_sample(p, 1000, seed=7)
    assert pts.shape == (1000, 2)
    assert all(p.member(x) for x in pts)


def test_hit_and_run_deterministic(rect2):
    p = unit_box(rect2)
    a = hit_and_run_sample(p, 200, seed=7)
    b = hit_and_run_sample(p, 200, seed=7)
    assert np.array_equal(a, b)
    c = hit_and_run_sample(p, 200, seed=8)
    assert not np.array_equal(a, c)


def test_hit_and_run_uniform_moments(rect2):
    p = unit_box(rect2)
    pts = hit_and_run_sample(p, 10000, seed=21)
    assert np.all(np.abs(pts.mean(axis=0) - 0.5) < 0.05)


def test_hit_and_run_degenerate(rect2):
    flat = Polyhedron.from_box(rect2, [0.0, 0.0], [1.0, 0.0])
    with pytest.raises(geo.DegenerateGeometry):
        hit_and_run_sample(flat, 10, seed=0)


# -- region intersection --------------------------------------------------------


def test_intersects_far_region(rect2):
    region = [Halfspace(np.array([-1.0, 0.0]), -2.0)]  # x >= 2
    assert not intersects_region(unit_box(rect2), region)


def test_intersects_touching_region(rect2):
    region = [Halfspace(np.array([-1.0, 0.0]), -1.0)]  # x >= 1
    assert intersects_region(unit_box(rect2), region)


def test_intersects_corner_region(rect2):
    region = [Halfspace(np.array([-1.0, -1.0]), -1.5)]  # x + y >= 1.5
    assert intersects_region(unit_box(rect2), region)


# -- canonical form --------------------------------------------------------------


def test_canonicalization_idempotent(oct2):
    p = Polyhedron.from_system(oct2, [
        Halfspace(np.array([1.0, 0.0]), 1.0),
        Halfspace(np.array([-1.0, 0.0]), 0.0),
        Halfspace(np.array([0.0, 1.0]), 1.0),
        Halfspace(np.array([0.0, -1.0]), 0.0),
        Halfspace(np.array([1.0, 1.0]), 1.2),
    ])
    again = Polyhedron(oct2, p.bounds)  # force a re-canonicalization pass
    assert np.allclose(p.bounds, again.bounds, atol=1e-9)
    assert p.canonicalize() is p


def test_loose_bounds_are_tightened(oct2):
    loose = np.array([1.0, 1.0, 0.0, 0.0, 5.0, 5.0, 5.0, 5.0])
    p = Polyhedron(oct2, loose)
    assert p.bounds[4] == pytest.approx(2.0, abs=1e-9)  # (1,1) support of unit box


def test_from_system_infeasible_is_empty(rect2):
    p = Polyhedron.from_system(rect2, [
        Halfspace(np.array([1.0, 0.0]), -1.0),
        Halfspace(np.array([-1.0, 0.0]), -1.0),
    ])
    assert p.is_empty
