import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sobcomp.distortion import (
    ExponentPair,
    InfiniteDistortionError,
    distortion_norm,
    induced_set_function,
    log_dilatation,
    pointwise_dilatation,
)
from sobcomp.geometry import DomainSpec, SetSpec
from sobcomp.mappings import MappingSpec
from sobcomp.quadrature import QuadraturePlan

BOX = DomainSpec.box([0, 0], [2, 1])
DISK = DomainSpec.ball([0, 0], 1)
exps_st = st.tuples(st.floats(1.1, 8), st.floats(0.05, 0.95)).map(lambda t: (t[0], 1 + (t[0] - 1) * t[1]))


def test_exponent_pair_kappa_and_regimes():
    assert ExponentPair.of(4, 2).kappa == 4.0
    assert ExponentPair.of(3).kappa == math.inf and ExponentPair.of(3).regime == "p=q"
    assert ExponentPair.of(math.inf, 2).kappa == 2.0 and ExponentPair.of(math.inf, 2).regime == "p=inf"
    assert ExponentPair.of(4, 2).regime == "q<p"
    with pytest.raises(ValueError):
        ExponentPair.of(2, 3)
    with pytest.raises(ValueError):
        ExponentPair.of(0.5, 0.5)


@pytest.mark.parametrize("p", [1.5, 2.0, 4.0])
def test_identity_has_unit_dilatation(p):
    r = distortion_norm(MappingSpec.identity(2, BOX), BOX, ExponentPair.of(p, p, 2))
    assert r.K_pq == 1.0


def test_identity_integral_regimes_give_volume_powers():
    ident = MappingSpec.identity(2, BOX)
    r = distortion_norm(ident, BOX, ExponentPair.of(4, 2, 2))
    assert r.K_pq == pytest.approx(2.0 ** 0.25, rel=1e-12)
    r = distortion_norm(ident, BOX, ExponentPair.of(math.inf, 3, 2))
    assert r.K_pq == pytest.approx(2.0 ** (1 / 3), rel=1e-12)


@given(exps_st)
def test_linear_map_closed_form(pq):
    p, q = pq
    A = MappingSpec.linear([[2.0, 0.0], [0.0, 1.0]], BOX)
    Kp = 2.0 / 2.0 ** (1 / p)
    e = ExponentPair.of(p, q, 2)
    r = distortion_norm(A, BOX, e, QuadraturePlan(resolution=8))
    assert r.K_pq == pytest.approx(Kp * 2.0 ** (1 / e.kappa), rel=1e-10)


@pytest.mark.parametrize("a", [0.5, 2.0, 4.0])
def test_radial_power_integral_regime_against_closed_form(a):
    # K_p = max(a,1) a^{-1/p} rho^{(a-1)(1-2/p)}; int_disk rho^s = 2 pi / (s + 2)
    p, q = 3.0, 2.0
    e = ExponentPair.of(p, q, 2)
    c = max(a, 1.0) * a ** (-1 / p)
    s = e.kappa * (a - 1) * (1 - 2 / p)
    exact = c * (2 * math.pi / (s + 2)) ** (1 / e.kappa)
    r = distortion_norm(MappingSpec.radial_power(a, 2, [0, 0], DISK), DISK, e, QuadraturePlan(resolution=64))
    assert r.K_pq == pytest.approx(exact, rel=2e-3)


@pytest.mark.parametrize("a", [0.5, 3.0])
def test_conformal_exponent_gives_constant_dilatation(a):
    m = MappingSpec.radial_power(a, 2, [0, 0], DISK)
    r = distortion_norm(m, DISK, ExponentPair.of(2, 2, 2))
    assert r.K_pq == pytest.approx(max(a, 1 / a) ** 0.5, rel=1e-10)


@given(st.floats(0.2, 5), st.floats(1.1, 6), st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_pointwise_scaling_law(lam, p, entries):
    A = np.array(entries).reshape(2, 2) + 3 * np.eye(2)
    x = np.array([0.3, 0.4])
    k1 = pointwise_dilatation(MappingSpec.linear(A), x, p)
    k2 = pointwise_dilatation(MappingSpec.linear(lam * A), x, p)
    assert k2 == pytest.approx(lam ** (1 - 2 / p) * k1, rel=1e-10)


@given(st.floats(1.1, 6), st.lists(st.floats(-2, 2), min_size=8, max_size=8))
def test_submultiplicative_under_composition(p, entries):
    A = np.array(entries[:4]).reshape(2, 2) + 3 * np.eye(2)
    B = np.array(entries[4:]).reshape(2, 2) + 3 * np.eye(2)
    x = np.array([0.1, 0.2])
    fa, fb = MappingSpec.linear(A), MappingSpec.linear(B)
    comp = pointwise_dilatation(MappingSpec.compose(fa, fb), x, p)
    assert comp <= pointwise_dilatation(fa, x, p) * pointwise_dilatation(fb, fa.evaluate(x), p) * (1 + 1e-12)


def test_radial_composition_pointwise_submultiplicative():
    f = MappingSpec.radial_power(2.0, 2, [0, 0], DISK)
    g = MappingSpec.linear([[3.0, 1.0], [0.0, 1.0]])
    x = np.random.default_rng(1).uniform(-0.6, 0.6, (50, 2))
    lhs = pointwise_dilatation(MappingSpec.compose(f, g), x, 3.0)
    rhs = pointwise_dilatation(f, x, 3.0) * pointwise_dilatation(g, f.evaluate(x), 3.0)
    assert np.all(lhs <= rhs * (1 + 1e-12))


@pytest.mark.parametrize("delta", [1.0, 0.1, 0.01, 0.001])
def test_regime_continuity_as_q_approaches_p(delta):
    m = MappingSpec.linear([[2.0, 0.0], [0.0, 1.0]], BOX)
    Kpp = distortion_norm(m, BOX, ExponentPair.of(3, 3, 2)).K_pq
    Kpq = distortion_norm(m, BOX, ExponentPair.of(3, 3 - delta, 2)).K_pq
    e = ExponentPair.of(3, 3 - delta, 2)
    assert abs(Kpq - Kpp) <= Kpp * (2.0 ** (1 / e.kappa) - 1) + 1e-12


def test_degenerate_point_raises():
    sample = SimpleNamespace(log_norm=np.array([0.0, -np.inf]), log_abs_jacobian=np.array([-np.inf, -np.inf]))
    stub = SimpleNamespace(jacobian=lambda x: sample)
    with pytest.raises(InfiniteDistortionError):
        log_dilatation(stub, np.zeros((2, 2)), 2.0)


def test_zero_differential_gives_zero_dilatation():
    sample = SimpleNamespace(log_norm=np.array([-np.inf]), log_abs_jacobian=np.array([-np.inf]))
    stub = SimpleNamespace(jacobian=lambda x: sample)
    assert np.exp(log_dilatation(stub, np.zeros((1, 2)), 2.0))[0] == 0.0


def test_induced_set_function_total_and_additivity():
    m = MappingSpec.linear([[2.0, 0.0], [0.0, 1.0]], BOX)
    e = ExponentPair.of(4, 2, 2)
    plan = QuadraturePlan(resolution=16)
    full = induced_set_function(m, None, e, plan)
    assert full == pytest.approx(distortion_norm(m, BOX, e, plan).K_pq ** e.kappa, rel=1e-12)
    left = SetSpec.box([0, 0], [2.0, 1.0])
    right = SetSpec.difference(SetSpec.of_domain(m.target), left)
    parts = induced_set_function(m, left, e, plan) + induced_set_function(m, right, e, plan)
    assert parts == pytest.approx(full, rel=1e-12)
    assert induced_set_function(m, SetSpec.ball([10, 10], 1), e, plan) == 0.0


def test_induced_set_function_requires_integral_regime():
    m = MappingSpec.identity(2, BOX)
    with pytest.raises(ValueError):
        induced_set_function(m, None, ExponentPair.of(2, 2, 2))


def test_report_record_and_stats():
    m = MappingSpec.radial_power(2.0, 2, [0, 0], DISK)
    r = distortion_norm(m, DISK, ExponentPair.of(3, 2, 2))
    rec = r.to_record()
    assert rec["K_pq"] == r.K_pq
    assert rec["finite_distortion_violations"] == 0
    assert rec["pointwise_stats"]["min"] <= rec["pointwise_stats"]["median"] <= rec["pointwise_stats"]["max"]
    assert r.relative_error == pytest.approx(r.quadrature.relative_error / r.exponents.kappa)


def test_monotone_approach_on_unit_volume_domain():
    box = DomainSpec.unit_box(2)
    m = MappingSpec.radial_power(2.0, 2, [0.5, 0.5], box)
    p = 3.0
    plan = QuadraturePlan(resolution=32)
    Kpp = distortion_norm(m, box, ExponentPair.of(p, p, 2), plan).K_pq
    values = [distortion_norm(m, box, ExponentPair.of(p, p - d, 2), plan).K_pq for d in (0.5, 0.1, 0.01)]
    assert values[0] <= values[1] <= values[2] <= Kpp * (1 + 1e-3)
