import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stircp.lattice import (
    BoundaryMode,
    DomainError,
    Geometry,
    ball,
    boundary,
    linf_dist_torus,
    neighbors,
)


def test_torus_wraparound_neighbors():
    g = Geometry(1, 10)
    assert set(neighbors(g, (0,))) == {(9,), (1,)}


def test_hardwall_corner_truncates():
    g = Geometry(2, 5, BoundaryMode.HARDWALL)
    assert set(neighbors(g, (0, 0))) == {(1, 0), (0, 1)}


def test_degree_is_2d_on_torus():
    g = Geometry(1, 10)
    for x in range(10):
        assert len(neighbors(g, (x,))) == 2


def test_ball_cardinality():
    g = Geometry(2, 7)
    assert len(ball(g, (3, 3), 2)) == 25


def test_ball_wrap_membership():
    g = Geometry(1, 10)
    assert ball(g, (1,), 2) == {(9,), (0,), (1,), (2,), (3,)}


def test_ball_radius_zero():
    g = Geometry(2, 5)
    assert ball(g, (2, 2), 0) == {(2, 2)}


def test_self_overlapping_ball_rejected():
    g = Geometry(1, 10)
    with pytest.raises(DomainError):
        ball(g, (0,), 5)


def test_boundary_d1():
    g = Geometry(1, 10)
    assert boundary(g, (0,), 3) == {(7,), (3,)}


def test_boundary_ring_d2():
    g = Geometry(2, 7)
    assert len(boundary(g, (3, 3), 1)) == 8


def test_boundary_cardinality_bound():
    # ring of the radius-2 ball in d=2 against the shell-count bound
    g = Geometry(2, 9)
    ring = boundary(g, (4, 4), 2)
    assert len(ring) == 16
    assert len(ring) <= 2 * 2 * (2 * 2 + 1) ** (2 - 1)


def test_invalid_site_raises():
    g = Geometry(2, 5)
    with pytest.raises(DomainError):
        neighbors(g, (5, 0))


@given(r=st.integers(min_value=1, max_value=4))
def test_ball_shell_decomposition(r):
    g = Geometry(2, 11)
    c = (5, 5)
    inner = ball(g, c, r - 1)
    ring = boundary(g, c, r)
    full = ball(g, c, r)
    assert inner | ring == full
    assert not (inner & ring)


@settings(max_examples=40)
@given(
    x=st.integers(min_value=0, max_value=10),
    v=st.integers(min_value=-10, max_value=10),
    r=st.integers(min_value=0, max_value=4),
)
def test_translation_equivariance_on_torus(x, v, r):
    g = Geometry(1, 11)
    shifted_center = ((x + v) % 11,)
    direct = ball(g, shifted_center, r)
    moved = {((s[0] + v) % 11,) for s in ball(g, (x,), r)}
    assert direct == moved


def test_torus_distance():
    g = Geometry(1, 10)
    assert linf_dist_torus(g, (1,), (9,)) == 2


def test_geometry_json_roundtrip():
    g = Geometry(2, 5, BoundaryMode.HARDWALL)
    assert Geometry.from_json(g.to_json()) == g
