import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sobcomp.geometry import (
    CondenserSpec,
    DomainSpec,
    GeometryError,
    SamplingError,
    SetSpec,
    ball_volume,
    cusp_gamma,
    domain_volume,
    membership,
    sample_points,
    sphere_area,
)

coords = st.floats(-5, 5, allow_nan=False)


def test_sphere_area_and_ball_volume_low_dimensions():
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert ball_volume(2, 0.5) == pytest.approx(math.pi / 4)
    assert ball_volume(3) == pytest.approx(4 * math.pi / 3)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_ball_volume_is_area_over_n(n):
    assert ball_volume(n) == pytest.approx(sphere_area(n) / n)


def test_membership_of_model_domains():
    box = DomainSpec.box([0, 0], [2, 1])
    assert box.contains([1.0, 0.5]) and not box.contains([2.0, 0.5])
    ball = DomainSpec.ball([0, 0], 1)
    assert ball.contains([0.5, 0.5]) and not ball.contains([1.0, 0.0])
    ann = DomainSpec.annulus([0, 0], 0.5, 1)
    assert ann.contains([0.75, 0.0]) and not ann.contains([0.25, 0.0])
    h1 = DomainSpec.h1(2)
    assert h1.contains([0.2, 0.5]) and not h1.contains([0.6, 0.5])
    cusp = DomainSpec.cusp([2.0])
    assert cusp.contains([0.2, 0.5]) and not cusp.contains([0.3, 0.5])


def test_closure_contains_boundary_points():
    h1 = DomainSpec.h1(2)
    pts = np.array([[0.0, 0.0], [0.5, 0.5], [0.0, 1.0], [0.5, 1.0]])
    assert h1.closure_contains(pts).all()
    assert not h1.contains(pts).any()


@pytest.mark.parametrize(
    "make",
    [
        lambda: DomainSpec.box([0, 0], [0, 1]),
        lambda: DomainSpec.ball([0, 0], 0),
        lambda: DomainSpec.annulus([0, 0], 1, 0.5),
        lambda: DomainSpec.cusp([0.5]),
        lambda: DomainSpec.cusp([]),
        lambda: DomainSpec.from_record({"kind": "box", "lower": [0]}),
        lambda: DomainSpec.from_record({"kind": "torus"}),
        lambda: DomainSpec.from_record({"kind": "ball", "center": [0, 0], "radius": 1, "colour": 1}),
    ],
)
def test_invalid_domains_raise(make):
    with pytest.raises(GeometryError):
        make()


def test_cusp_gamma_sums_exponents():
    assert cusp_gamma([2.0]) == 3.0
    assert cusp_gamma([1.0, 1.5]) == 3.5


@given(st.lists(st.tuples(coords, st.floats(0.1, 3)), min_size=2, max_size=4))
def test_box_record_round_trip(sides):
    lo = [a for a, _ in sides]
    hi = [a + w for a, w in sides]
    d = DomainSpec.box(lo, hi)
    assert DomainSpec.from_record(d.to_record()) == d


@pytest.mark.parametrize(
    "dom",
    [
        DomainSpec.ball([0.1, 0.2, 0.3], 0.7),
        DomainSpec.annulus([0, 0], 0.25, 0.5),
        DomainSpec.cusp([2.0, 1.0]),
        DomainSpec.h1(3),
    ],
)
def test_domain_record_round_trip(dom):
    assert DomainSpec.from_record(dom.to_record()) == dom


@pytest.mark.parametrize(
    "dom",
    [DomainSpec.box([0, 0], [2, 1]), DomainSpec.ball([0, 0], 1), DomainSpec.annulus([0, 0], 0.3, 1),
     DomainSpec.h1(2), DomainSpec.cusp([2.0])],
)
def test_domain_volume_matches_hit_rate(dom):
    # independent route: fraction of bounding-box points accepted by the membership test
    lo, hi = dom.bounding_box()
    x = lo + (hi - lo) * np.random.default_rng(3).random((400_000, dom.dim))
    est = np.prod(hi - lo) * dom.contains(x).mean()
    assert domain_volume(dom) == pytest.approx(est, rel=0.01)


def test_sample_points_inside_and_reproducible():
    dom = DomainSpec.cusp([2.0])
    a = sample_points(dom, 500, seed=7)
    b = sample_points(dom, 500, seed=7)
    assert a.shape == (500, 2)
    assert np.array_equal(a, b)
    assert dom.contains(a).all()
    assert not np.array_equal(a, sample_points(dom, 500, seed=8))


def test_sample_points_rejects_bad_count():
    with pytest.raises(SamplingError):
        sample_points(DomainSpec.unit_box(2), 0, seed=0)


def test_set_membership():
    ball = SetSpec.ball([0, 0], 1)
    ext = SetSpec.exterior([0, 0], 1)
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    assert membership(ball, pts).tolist() == [True, True, False]
    assert membership(ext, pts).tolist() == [False, True, True]
    ring = SetSpec.difference(SetSpec.ball([0, 0], 2), SetSpec.ball([0, 0], 1))
    assert membership(ring, pts).tolist() == [False, False, True]
    both = SetSpec.union(SetSpec.box([0, 0], [1, 1]), SetSpec.box([2, 0], [3, 1]))
    assert membership(both, np.array([[0.5, 0.5], [1.5, 0.5], [2.5, 0.5]])).tolist() == [True, False, True]


def test_set_diameter():
    assert SetSpec.ball([0, 0], 0.5).diameter() == pytest.approx(1.0)
    assert SetSpec.box([0, 0], [3, 4]).diameter() == pytest.approx(5.0)


def test_set_record_round_trip():
    s = SetSpec.difference(SetSpec.box([0, 0], [2, 1]), SetSpec.ball([1, 0.5], 0.2), SetSpec.exterior([0, 0], 3))
    assert SetSpec.from_record(s.to_record()) == s


def test_ring_condenser_and_record():
    c = CondenserSpec.ring([0, 0], 0.25, 0.5)
    assert c.F0.contains(np.array([[0.25, 0.0]]))[0]
    assert c.F1.contains(np.array([[0.5, 0.0]]))[0]
    assert CondenserSpec.from_record(c.to_record()) == c
    with pytest.raises(GeometryError):
        CondenserSpec.ring([0, 0], 0.5, 0.25)
