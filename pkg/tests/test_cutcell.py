import numpy as np
import pytest
from hypothesis import given, strategies as st

from sourceshape import cutcell
from sourceshape.levelset import disk, init_from_expression
from sourceshape.mesh import build_square_mesh


@pytest.mark.parametrize("degree", [1, 2, 5])
def test_rules_integrate_monomials(degree):
    pts, w = cutcell.quadrature_rule(degree)
    assert w.sum() == pytest.approx(1.0)
    # int_T l1^a l2^b dA / |T| = 2 a! b! / (a + b + 2)!
    from math import factorial
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = 2 * factorial(a) * factorial(b) / factorial(a + b + 2)
            assert np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b) == pytest.approx(exact, abs=1e-12)


def test_tie_break_counts_zero_as_positive():
    np.testing.assert_array_equal(cutcell.tie_break(np.array([0.0, -1.0, 2.0])) > 0, [True, False, True])


@given(st.lists(st.floats(-1, 1).filter(lambda v: abs(v) > 1e-6), min_size=3, max_size=3))
def test_clip_partitions_the_triangle(vals):
    nodal = np.array([vals])
    p, b = np.array([0]), np.eye(3)[None]
    neg = cutcell.clip(p, b, nodal, keep="negative")
    pos = cutcell.clip(p, b, nodal, keep="positive")
    total = cutcell.area_fractions(neg[1]).sum() + cutcell.area_fractions(pos[1]).sum()
    assert total == pytest.approx(1.0, abs=1e-12)
    # the linear function keeps its sign on each piece
    for (_, bary), sign in ((neg, -1), (pos, 1)):
        vals_at_vertices = np.einsum("svi,i->sv", bary, nodal[0])
        assert np.all(sign * vals_at_vertices >= -1e-12)


def test_negative_part_of_half_plane_is_exact():
    m = build_square_mesh(9, mode="perturbed", seed=2)
    phi = m.vertices[:, 0] + 0.5 * m.vertices[:, 1] - 0.1
    p, b = cutcell.negative_part(m, phi)
    # area of {x + y/2 < 0.1} in the square: trapezoid
    assert np.sum(cutcell.area_fractions(b) * m.areas[p]) == pytest.approx(2.2, abs=1e-12)


def test_quadrature_on_cut_region_is_exact_for_quadratics():
    m = build_square_mesh(10)
    phi = m.vertices[:, 1] - 0.3   # region y < 0.3
    p, b = cutcell.negative_part(m, phi)
    elem, lam, w = cutcell.quadrature(m, p, b, degree=2)
    x = cutcell.points_of(m, elem, lam)
    # int_{-1}^{1} int_{-1}^{0.3} (x^2 + y) dy dx
    exact = (2 / 3) * 1.3 + 2 * (0.3**2 - 1) / 2
    assert np.sum(w * (x[:, 0] ** 2 + x[:, 1])) == pytest.approx(exact, abs=1e-12)


def test_disk_area_frozen_oracle():
    # reference value from polygon clipping of each element against its zero line
    m = build_square_mesh(50)
    p, b = cutcell.negative_part(m, init_from_expression(m, disk(0, 0, 0.2)))
    assert np.sum(cutcell.area_fractions(b) * m.areas[p]) == pytest.approx(0.124929026791309, abs=1e-12)
