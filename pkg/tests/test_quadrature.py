import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as spi

from sobcomp.geometry import DomainSpec, domain_volume
from sobcomp.quadrature import (
    QuadraturePlan,
    QuadratureError,
    ess_sup_estimate,
    integrate,
    level_nodes,
    tree_sum,
)

DOMAINS = [
    DomainSpec.box([0, 0], [2, 1]),
    DomainSpec.ball([0, 0], 1),
    DomainSpec.annulus([0, 0], 0.25, 0.5),
    DomainSpec.h1(2),
    DomainSpec.cusp([2.0]),
    DomainSpec.ball([0, 0, 0], 1),
    DomainSpec.cusp([1.5, 2.0]),
]


def one(x):
    return np.ones(len(x))


@pytest.mark.parametrize("dom", DOMAINS, ids=lambda d: f"{d.kind}{d.dim}")
def test_weights_converge_to_volume(dom):
    r = integrate(one, dom, QuadraturePlan(resolution=16))
    errs = [abs(v - domain_volume(dom)) for v in r.level_values]
    assert errs[-1] <= 5e-3 * domain_volume(dom)
    # midpoint rule on a smooth parametrisation: second order, or exact
    assert errs[-1] <= 0.3 * errs[-2] or errs[-1] <= 1e-12


def test_box_polynomial_against_exact():
    dom = DomainSpec.box([0, 0], [2, 1])
    r = integrate(lambda x: x[:, 0] ** 2 * x[:, 1], dom, QuadraturePlan(resolution=64))
    assert r.value == pytest.approx(8 / 3 * 0.5, rel=1e-4)


def test_ball_radial_moment():
    # int_{B} |x|^2 = 2 pi / 4 in the plane
    r = integrate(lambda x: (x**2).sum(axis=1), DomainSpec.ball([0, 0], 1), QuadraturePlan(resolution=64))
    assert r.value == pytest.approx(math.pi / 2, rel=1e-4)


@pytest.mark.parametrize("k", [-0.5, 0.0, 1.0, 3.0])
def test_cusp_moment_against_scipy(k):
    dom = DomainSpec.cusp([2.0])
    ref, _ = spi.dblquad(lambda x1, xn: xn**k, 0, 1, 0, lambda xn: xn**2)
    r = integrate(lambda x: x[:, -1] ** k, dom, QuadraturePlan(resolution=64, grading=4.0))
    assert r.value == pytest.approx(ref, rel=1e-3)


def test_grading_concentrates_nodes_near_apex():
    dom = DomainSpec.h1(2)
    x1, _ = next(iter(level_nodes(dom, 16, 1.0)))
    x4, _ = next(iter(level_nodes(dom, 16, 4.0)))
    assert x4[:, -1].min() < x1[:, -1].min()


def test_monte_carlo_within_standard_errors():
    dom = DomainSpec.ball([0, 0], 1)
    r = integrate(lambda x: (x**2).sum(axis=1), dom, QuadraturePlan("monte_carlo", resolution=20000, seed=5))
    assert abs(r.value - math.pi / 2) < 5 * r.error_estimate


def test_level_values_and_error_estimate():
    r = integrate(lambda x: np.exp(x[:, 0]), DomainSpec.unit_box(2), QuadraturePlan(resolution=16))
    assert len(r.level_values) == 3
    assert r.error_estimate == pytest.approx(abs(r.level_values[-1] - r.level_values[-2]))
    assert r.value == pytest.approx(math.e - 1, rel=1e-4)
    assert r.converged


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=300))
def test_tree_sum_close_to_fsum(values):
    assert tree_sum(np.array(values)) == pytest.approx(math.fsum(values), abs=1e-6)


def test_worker_count_does_not_change_bits():
    dom = DomainSpec.cusp([2.0])
    plan = QuadraturePlan(resolution=128, grading=4.0)
    f = lambda x: np.sin(7 * x[:, 0]) / (1e-3 + x[:, 1])  # noqa: E731
    ref = integrate(f, dom, plan, workers=1).level_values
    for w in (2, 3, 4):
        assert integrate(f, dom, plan, workers=w).level_values == ref


def test_ess_sup_locates_peak():
    f = lambda x: 1.0 - ((x - 0.3) ** 2).sum(axis=1)  # noqa: E731
    r = ess_sup_estimate(f, DomainSpec.unit_box(2), QuadraturePlan(resolution=32))
    assert r.value == pytest.approx(1.0, abs=1e-3)
    np.testing.assert_allclose(r.location, [0.3, 0.3], atol=0.02)
    assert r.stabilized


def test_non_finite_integrand_raises():
    with pytest.raises(QuadratureError):
        integrate(lambda x: np.full(len(x), np.inf), DomainSpec.unit_box(2))


@pytest.mark.parametrize(
    "kwargs",
    [{"scheme": "sparse"}, {"resolution": 4}, {"refinement_levels": 1}, {"grading": 0.5}],
)
def test_plan_validation(kwargs):
    with pytest.raises(ValueError):
        QuadraturePlan(**kwargs)


def test_graded_inverse_square_root():
    r = integrate(lambda x: x[:, -1] ** -0.5, DomainSpec.box([0.0], [1.0]), QuadraturePlan(resolution=64, grading=2.0))
    assert r.value == pytest.approx(2.0, rel=1e-10)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.8])
def test_grading_gains_an_order_of_magnitude(s):
    dom = DomainSpec.box([0.0], [1.0])
    f = lambda x: x[:, -1] ** -s  # noqa: E731
    exact = 1.0 / (1.0 - s)
    plain = abs(integrate(f, dom, QuadraturePlan(resolution=64, grading=1.0)).value - exact)
    graded = abs(integrate(f, dom, QuadraturePlan(resolution=64, grading=2.0 / (1.0 - s))).value - exact)
    assert graded * 10 <= plain
