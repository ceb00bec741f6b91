import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sobcomp.capacity import (
    SolverOptions,
    condenser_capacity,
    kruglikov_ratio,
    radial_capacity_oracle,
    relative_condenser,
    ring_capacity_exact,
)
from sobcomp.geometry import CondenserSpec, DomainSpec, SetSpec, domain_volume

FAST = SolverOptions(levels=2, resolution=65)


@given(st.floats(0.05, 0.8), st.floats(1.2, 4.0), st.floats(1.2, 5.0), st.sampled_from([2, 3]))
def test_shooting_oracle_matches_closed_form(r, ratio, p, n):
    R = r * ratio
    assert radial_capacity_oracle(r, R, p, n) == pytest.approx(ring_capacity_exact(r, R, p, n), rel=1e-9)


def test_conformal_ring_closed_form():
    assert ring_capacity_exact(0.25, 0.5, 2, 2) == pytest.approx(2 * math.pi / math.log(2))
    assert ring_capacity_exact(0.25, 0.5, 3, 3) == pytest.approx(4 * math.pi / math.log(2) ** 2)


@given(st.floats(0.2, 5.0), st.floats(1.2, 5.0))
def test_ring_scaling_law(lam, p):
    # cap(lam F0, lam F1) = lam**(n-p) cap(F0, F1)
    base = ring_capacity_exact(0.2, 0.7, p, 2)
    assert ring_capacity_exact(0.2 * lam, 0.7 * lam, p, 2) == pytest.approx(lam ** (2 - p) * base, rel=1e-10)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_grid_ring_capacity_close_to_exact(p):
    res = condenser_capacity(CondenserSpec.ring([0, 0], 0.25, 0.5), p, opts=SolverOptions(levels=3, resolution=129))
    assert res.converged
    assert res.value == pytest.approx(ring_capacity_exact(0.25, 0.5, p, 2), rel=0.03)
    assert "monotone_trend" in res.flags


def test_grid_capacity_obeys_scaling_exactly():
    p = 3.0
    a = condenser_capacity(CondenserSpec.ring([0, 0], 0.25, 0.5), p, opts=FAST)
    b = condenser_capacity(CondenserSpec.ring([0, 0], 0.5, 1.0), p, opts=FAST)
    # similar grids: the discrete energies scale like the continuous ones
    np.testing.assert_allclose(b.per_level_values, np.array(a.per_level_values) * 2.0 ** (2 - p), rtol=1e-6)


def test_plate_monotonicity():
    small = condenser_capacity(CondenserSpec.ring([0, 0], 0.2, 0.5), 2.0, opts=FAST)
    big = condenser_capacity(CondenserSpec.ring([0, 0], 0.3, 0.5), 2.0, opts=FAST)
    assert big.value > small.value


def test_domain_monotonicity():
    E = SetSpec.ball([0, 0], 0.15)
    G_small = DomainSpec.ball([0, 0], 0.4)
    G_big = DomainSpec.ball([0, 0], 0.6)
    c_small = condenser_capacity(relative_condenser(E, G_small), 2.0, opts=FAST)
    c_big = condenser_capacity(relative_condenser(E, G_big), 2.0, opts=FAST)
    assert c_big.value < c_small.value


def test_maximum_principle_and_boundary_values():
    res = condenser_capacity(CondenserSpec.ring([0, 0], 0.25, 0.5), 3.0, opts=FAST)
    g = res.extremal
    u = g.values[g.active]
    assert u.min() >= -1e-12 and u.max() <= 1 + 1e-12
    assert np.all(g.values[g.pinned0] == 0.0)
    assert np.all(g.values[g.pinned1] == 1.0)


def test_extremal_is_radially_symmetric_on_the_grid():
    res = condenser_capacity(CondenserSpec.ring([0, 0], 0.25, 0.5), 2.0, opts=FAST)
    u = res.extremal.as_array()
    np.testing.assert_allclose(u, u.T, atol=1e-6)
    np.testing.assert_allclose(u, u[::-1, :], atol=1e-6)


def test_extremal_grows_with_radius():
    res = condenser_capacity(CondenserSpec.ring([0, 0], 0.25, 0.5), 2.0, opts=FAST)
    g = res.extremal
    x = g.coordinates()
    free = g.active & ~g.pinned0 & ~g.pinned1
    rho, u = np.linalg.norm(x[free], axis=1), g.values[free]
    order = np.argsort(rho)
    # nearly monotone in rho up to grid anisotropy
    assert np.corrcoef(rho[order], u[order])[0, 1] > 0.99


def test_three_dimensional_conformal_ring():
    res = condenser_capacity(CondenserSpec.ring([0, 0, 0], 0.25, 0.5), 3.0, opts=SolverOptions(levels=2, resolution=33))
    assert res.value == pytest.approx(ring_capacity_exact(0.25, 0.5, 3, 3), rel=0.1)


def test_kruglikov_lower_bound_constant_is_positive():
    E = SetSpec.ball([0, 0], 0.15)
    G = DomainSpec.ball([0, 0], 0.5)
    cap = condenser_capacity(relative_condenser(E, G), 3.0, opts=FAST).value
    ratio = kruglikov_ratio(E, G, 3.0, cap)
    assert ratio == pytest.approx(cap * domain_volume(G) ** 2 / 0.3**3)
    assert ratio > 0
    with pytest.raises(ValueError):
        kruglikov_ratio(E, G, 1.0, cap)


def test_result_record_and_csv(tmp_path):
    res = condenser_capacity(CondenserSpec.ring([0, 0], 0.25, 0.5), 2.0, opts=FAST)
    rec = res.to_record()
    assert rec["value"] == res.value and rec["resolutions"] == [33, 65]
    assert res.value == pytest.approx(2 * res.per_level_values[-1] - res.per_level_values[-2])
    path = res.extremal.to_csv(tmp_path / "u.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "x0,x1,u"
    assert len(lines) - 1 == int(res.extremal.active.sum())


def test_iteration_budget_reports_non_convergence():
    opts = SolverOptions(levels=2, resolution=65, grad_tol=1e-15, max_iters=1)
    res = condenser_capacity(CondenserSpec.ring([0, 0], 0.25, 0.5), 3.0, opts=opts)
    assert not res.converged and "non_converged" in res.flags


@pytest.mark.parametrize(
    "kwargs", [{"levels": 0}, {"resolution": 64}, {"levels": 3, "resolution": 9}, {"epsilon_schedule": ()}]
)
def test_solver_options_validation(kwargs):
    with pytest.raises(ValueError):
        SolverOptions(**kwargs)


def test_level_resolutions():
    assert SolverOptions(levels=3, resolution=257).level_resolutions() == [65, 129, 257]


def test_fixed_plates_in_a_larger_ambient():
    # with the plates held fixed, a larger ambient restricts to an admissible function on the smaller one
    F0, F1 = SetSpec.ball([0, 0], 0.1), SetSpec.ball([0.45, 0], 0.1)
    values = []
    for h in (0.3, 0.6):
        cond = CondenserSpec(F0, F1, DomainSpec.box([-h, -h], [h + 0.3, h]))
        values.append(condenser_capacity(cond, 2.0, opts=FAST).per_level_values)
    assert np.all(np.array(values[1]) > np.array(values[0]))
