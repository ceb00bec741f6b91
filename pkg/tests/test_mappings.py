import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sobcomp.geometry import DomainSpec
from sobcomp.mappings import (
    MappingError,
    MappingSpec,
    SingularPointError,
    adjugate,
    finite_distortion_audit,
    inverse_mapping,
    newton_inverse,
    operator_norm,
)

DISK = DomainSpec.ball([0, 0], 1)

ZOO = [
    MappingSpec.identity(2, DomainSpec.unit_box(2)),
    MappingSpec.linear([[2.0, 0.5], [0.0, 1.0]], DomainSpec.unit_box(2)),
    MappingSpec.radial_power(2.5, 2, [0, 0], DISK),
    MappingSpec.radial_power(0.5, 3, [0, 0, 0], DomainSpec.ball([0, 0, 0], 1)),
    MappingSpec.cusp_map(1.3, [2.0]),
    MappingSpec.cusp_map(0.8, [1.5, 2.0]),
    MappingSpec.compose(MappingSpec.radial_power(2.0, 2, [0, 0], DISK), MappingSpec.linear([[1, 1], [0, 2]])),
]


def interior_points(m, count=40, seed=0):
    dom = m.source
    lo, hi = dom.bounding_box()
    x = lo + (hi - lo) * np.random.default_rng(seed).random((20 * count, m.dim))
    x = x[dom.contains(x)]
    # keep away from the boundary and the singular centre
    keep = np.ones(len(x), bool)
    for i in range(len(x)):
        keep[i] = dom.contains(x[i] * 0.98 + 0.01) and np.linalg.norm(x[i]) > 0.05
    return x[keep][:count]


def fd_jacobian(m, x, h=1e-6):
    cols = []
    for k in range(m.dim):
        e = np.zeros(m.dim)
        e[k] = h
        cols.append((m.evaluate(x + e) - m.evaluate(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.mark.parametrize("m", ZOO, ids=lambda m: m.kind)
def test_jacobian_matches_central_differences(m):
    for x in interior_points(m, 10):
        s = m.jacobian(x)
        np.testing.assert_allclose(np.squeeze(s.matrix), fd_jacobian(m, x), rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("m", ZOO, ids=lambda m: m.kind)
def test_log_quantities_match_raw_matrix(m):
    x = interior_points(m, 20)
    s = m.jacobian(x)
    np.testing.assert_allclose(s.log_abs_jacobian, np.log(np.abs(np.linalg.det(s.matrix))), rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(s.log_norm, np.log(np.linalg.norm(s.matrix, ord=2, axis=(-2, -1))), atol=1e-10)


@pytest.mark.parametrize("m", ZOO, ids=lambda m: m.kind)
def test_inverse_round_trip(m):
    x = interior_points(m, 20)
    np.testing.assert_allclose(m.inverse(m.evaluate(x)), x, atol=1e-10)


@pytest.mark.parametrize("m", [z for z in ZOO if z.kind != "cusp_map"], ids=lambda m: m.kind)
def test_inverse_mapping_is_in_the_zoo(m):
    inv = inverse_mapping(m)
    x = interior_points(m, 20)
    np.testing.assert_allclose(inv.evaluate(m.evaluate(x)), x, atol=1e-10)


def test_cusp_map_has_no_inverse_in_the_zoo():
    with pytest.raises(MappingError):
        inverse_mapping(MappingSpec.cusp_map(1.0, [2.0]))


def test_cusp_inverse_rejects_apex():
    with pytest.raises(SingularPointError):
        MappingSpec.cusp_map(1.0, [2.0]).inverse(np.array([0.0, 0.0]))


def test_newton_agrees_with_closed_inverse():
    m = MappingSpec.radial_power(3.0, 2, [0, 0], DISK)
    y = m.evaluate(np.array([[0.3, 0.4], [-0.2, 0.5]]))
    np.testing.assert_allclose(newton_inverse(m, y, np.full_like(y, 0.5)), m.inverse(y), atol=1e-10)


def test_radial_power_closed_forms():
    a, n = 2.5, 2
    m = MappingSpec.radial_power(a, n, [0, 0], DISK)
    x = np.array([[0.3, 0.4]])
    rho = 0.5
    s = m.jacobian(x)
    assert s.jacobian[0] == pytest.approx(a * rho ** (n * (a - 1)))
    assert s.operator_norm[0] == pytest.approx(a * rho ** (a - 1))
    assert m.target == DomainSpec.ball([0, 0], 1.0)


def test_cusp_map_carries_h1_onto_the_cusp():
    m = MappingSpec.cusp_map(1.0, [2.0])
    x = interior_points(m, 50)
    assert m.target.contains(m.evaluate(x)).all()


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_operator_norm_is_spectral_norm(entries):
    A = np.array(entries).reshape(2, 2)
    assert operator_norm(A) == pytest.approx(np.linalg.norm(A, 2), abs=1e-12)


@given(st.lists(st.floats(-3, 3), min_size=9, max_size=9))
def test_adjugate_identity(entries):
    A = np.array(entries).reshape(3, 3)
    np.testing.assert_allclose(A @ adjugate(A), np.linalg.det(A) * np.eye(3), atol=1e-9)


@pytest.mark.parametrize("m", ZOO, ids=lambda m: m.kind)
def test_record_round_trip(m):
    assert MappingSpec.from_record(m.to_record()) == m


def test_invalid_mappings():
    with pytest.raises(MappingError):
        MappingSpec.linear([[1, 2], [2, 4]])
    with pytest.raises(MappingError):
        MappingSpec.radial_power(-1, 2)
    with pytest.raises(MappingError):
        MappingSpec.from_record({"kind": "shear"})
    with pytest.raises(MappingError):
        MappingSpec.from_record({"kind": "linear", "A": [[1, 0], [0, 1]], "B": 1})


def test_finite_distortion_audit_clean_for_homeomorphisms():
    m = MappingSpec.radial_power(3.0, 2, [0, 0], DISK)
    pts = interior_points(m, 40)
    audit = finite_distortion_audit(m, pts)
    assert audit.points == len(pts) and audit.violations == 0


def test_composition_chain_rule():
    f = MappingSpec.radial_power(2.0, 2, [0, 0], DISK)
    g = MappingSpec.linear([[1.0, 1.0], [0.0, 2.0]])
    h = MappingSpec.compose(f, g)
    x = np.array([0.2, 0.3])
    np.testing.assert_allclose(np.squeeze(h.jacobian(x).matrix), g.A @ np.squeeze(f.jacobian(x).matrix))
    assert math.isclose(float(h.jacobian(x).jacobian), 2.0 * float(f.jacobian(x).jacobian))
