"""The acceptance matrix: one function per criterion, each returning a ``CriterionOutcome``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .capacity import condenser_capacity, radial_capacity_oracle, ring_capacity_exact
from .distortion import ExponentPair, distortion_integrand, distortion_norm
from .geometry import CondenserSpec, DomainSpec, SetSpec
from .mappings import MappingSpec
from .quadrature import QuadraturePlan, integrate
from .theorems import (
    VerdictReport,
    bump_family,
    cusp_admissible_range,
    cusp_grading,
    cusp_oracle_exponent,
    double_dual,
    dual_exponent,
    duality_exponent_identity,
    holder_exponent,
    verify_capacity_inequality,
    verify_cusp_theorem,
    verify_duality,
    verify_holder,
    verify_operator_inequality,
    verify_set_function,
)

__all__ = ["CriterionOutcome", "CRITERIA", "run_criterion", "full_suite", "closeness"]


@dataclass
class CriterionOutcome:
    number: int
    title: str
    passed: bool
    checks: list[VerdictReport]
    wall_time_ms: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(c.converged for c in self.checks)

    def to_record(self) -> dict:
        return {
            "criterion": self.number,
            "title": self.title,
            "passed": self.passed,
            "check_ids": [c.theorem_id for c in self.checks],
            "details": self.details,
            "wall_time_ms": self.wall_time_ms,
        }


def closeness(theorem_id: str, value: float, expected: float, tol: float, value_src: str, expected_src: str,
              relative: bool = True, **kw) -> VerdictReport:
    """Verdict for |value - expected| (relative by default) <= tol."""
    err = abs(value - expected) / (abs(expected) if relative else 1.0)
    details = {"value": value, "expected": expected, **kw.pop("details", {})}
    return VerdictReport.compare(
        theorem_id, err, tol,
        f"{'relative' if relative else 'absolute'} deviation of {value_src}",
        f"tolerance on agreement with {expected_src}",
        0.0, "pinned tolerance", details=details, **kw,
    )


# ------------------------------------------------------------ criteria


def criterion_identity_norms() -> CriterionOutcome:
    box = DomainSpec.unit_box(2)
    ident = MappingSpec.identity(2, box)
    checks = []
    for p in (1.5, 2.0, 4.0):
        r = distortion_norm(ident, box, ExponentPair.of(p, p, 2))
        checks.append(closeness("identity-norm", r.K_pq, 1.0, 1e-12, f"K_{{{p},{p}}}(id; unit box)", "1",
                                relative=False, converged=r.converged))
    h1 = DomainSpec.h1(2)
    r = distortion_norm(MappingSpec.identity(2, h1), h1, ExponentPair.of(4, 2, 2))
    checks.append(closeness("identity-norm", r.K_pq, 0.5**0.25, 1e-3, "K_{4,2}(id; H_1)", "|H_1|**(1/4)",
                            relative=False, converged=r.converged))
    return CriterionOutcome(1, "identity norms", all(c.passed for c in checks), checks)


CUSP_P, CUSP_Q, CUSP_GAMMAS = 2.5, 1.5, (2.0,)


def criterion_cusp_bound() -> CriterionOutcome:
    a_values = np.linspace(0.05, 1.6, 10)
    checks = [verify_cusp_theorem(float(a), CUSP_GAMMAS, CUSP_P, CUSP_Q) for a in a_values]
    K = [c.lhs for c in checks]
    oracle = [c.details["oracle_relative_error"] for c in checks]
    crossover = [float(a) for a, c in zip(a_values, checks) if c.lhs > c.rhs * (1 + 1e-3)]
    return CriterionOutcome(
        2, "cusp bound over the admissible range",
        all(c.passed for c in checks),
        checks,
        details={"a_values": a_values.tolist(), "K": K, "max_oracle_error": max(oracle),
                 "bound_exceeded_at": crossover},
    )


def criterion_cusp_divergence() -> CriterionOutcome:
    n = len(CUSP_GAMMAS) + 1
    rng = cusp_admissible_range(CUSP_P, CUSP_Q, sum(CUSP_GAMMAS) + 1, n)
    a = 1.1 * rng.hi
    check = verify_cusp_theorem(a, CUSP_GAMMAS, CUSP_P, CUSP_Q)
    e = cusp_oracle_exponent(a, CUSP_GAMMAS, CUSP_P, CUSP_Q)
    return CriterionOutcome(3, "divergence beyond the admissible range", check.passed, [check],
                            details={"a": a, "e": e, "grading": cusp_grading(e)})


def criterion_ring_capacity() -> CriterionOutcome:
    cond = CondenserSpec.ring([0.0, 0.0], 0.25, 0.5)
    checks = []
    for p, tol, ref, src in (
        (2.0, 0.02, 2 * math.pi / math.log(2.0), "2 pi / ln 2"),
        (3.0, 0.03, radial_capacity_oracle(0.25, 0.5, 3.0, 2), "radial shooting oracle"),
    ):
        t0 = time.perf_counter()
        res = condenser_capacity(cond, p)
        checks.append(closeness(
            "ring-capacity", res.value, ref, tol, f"extrapolated grid capacity (p={p})", src,
            converged=res.converged,
            details={"per_level_values": res.per_level_values, "flags": res.flags,
                     "closed_form": ring_capacity_exact(0.25, 0.5, p, 2),
                     "wall_time_ms": 1000 * (time.perf_counter() - t0)},
        ))
    return CriterionOutcome(4, "ring capacity", all(c.passed for c in checks), checks)


def criterion_capacity_equality() -> CriterionOutcome:
    disk = DomainSpec.ball([0.0, 0.0], 1.0)
    mapping = MappingSpec.radial_power(4.0, 2, [0.0, 0.0], disk)
    cond = CondenserSpec.ring([0.0, 0.0], 0.25, 0.5, disk)
    v = verify_capacity_inequality(mapping, ExponentPair.of(2, 2, 2), [cond])
    gap = abs(1.0 - v.lhs / v.rhs)
    tight = VerdictReport.compare(
        "capacity-equality-margin", gap, 0.05, "|1 - lhs/rhs| of the capacity check",
        "equality-case tolerance 0.05", 0.0, "pinned tolerance", converged=v.converged,
    )
    strict = v.lhs <= v.rhs
    return CriterionOutcome(5, "capacity inequality, radial equality case", strict and tight.passed, [v, tight],
                            details={"lhs_le_rhs": strict})


def criterion_operator() -> CriterionOutcome:
    box = DomainSpec.unit_box(2)
    disk = DomainSpec.ball([0.0, 0.0], 1.0)
    maps = [MappingSpec.linear([[2.0, 0.0], [0.0, 1.0]], box), MappingSpec.radial_power(4.0, 2, [0.0, 0.0], disk)]
    plan = QuadraturePlan(resolution=64)
    checks = [verify_operator_inequality(m, ExponentPair.of(2, 2, 2), bump_family(m.target, seed=0), plan)
              for m in maps]
    ok = all(c.lhs <= c.rhs * 1.02 for c in checks)
    return CriterionOutcome(6, "operator inequality over bump functions", ok and all(c.passed for c in checks),
                            checks, details={"ratio_over_K": [c.lhs / c.rhs for c in checks]})


def criterion_duality() -> CriterionOutcome:
    rng = np.random.default_rng([2024, 7])
    triples, worst = [], 0.0
    for _ in range(10):
        n = int(rng.integers(2, 5))
        q = (n - 1) + rng.uniform(0.1, 3.0)
        p = q + rng.uniform(0.1, 3.0)
        left, right = duality_exponent_identity(p, q, n)
        worst = max(worst, abs(left - right) / abs(right))
        triples.append([p, q, n])
    checks = [VerdictReport.compare(
        "duality-exponents", worst, 1e-12, "max relative deviation of q'p'/(q'-p') from pq/((p-q)(n-1))",
        "pinned tolerance", 0.0, "floating point", details={"triples": triples},
    )]
    inv = [dual_exponent(dual_exponent(Fraction(p), 2), 2) - Fraction(p) for p in (1.5, 2, 3, 10)]
    dd = [double_dual(Fraction(p), 2) - Fraction(p) for p in (1.5, 2, 3, 10)]
    checks.append(VerdictReport.compare(
        "duality-involution", float(max(abs(x) for x in inv + dd)), 0.0,
        "max |p'' - p| for n = 2, p in {1.5, 2, 3, 10} (rational arithmetic)", "exact", 0.0, "exact",
    ))
    box = DomainSpec.unit_box(2)
    disk = DomainSpec.ball([0.0, 0.0], 1.0)
    cases = [
        (MappingSpec.identity(2, box), ExponentPair.of(3, 2, 2)),
        (MappingSpec.linear([[2.0, 0.0], [0.0, 1.0]], box), ExponentPair.of(3, 2, 2)),
        (MappingSpec.radial_power(4.0, 2, [0.0, 0.0], disk), ExponentPair.of(3, 2, 2)),
        (MappingSpec.radial_power(4.0, 2, [0.0, 0.0], disk), ExponentPair.of(2, 2, 2)),
    ]
    for m, e in cases:
        v = verify_duality(m, e)
        v.notes.append(f"{m.kind}, p={e.p}, q={e.q}")
        checks.append(v)
    return CriterionOutcome(7, "composition duality", all(c.passed for c in checks), checks)


def criterion_holder() -> CriterionOutcome:
    exps = ExponentPair.of(4, 3, 2)
    gamma = holder_exponent(4, 3, 2)
    box = DomainSpec.unit_box(2)
    disk = DomainSpec.ball([0.0, 0.0], 1.0)
    checks = [
        verify_holder(MappingSpec.identity(2, box), exps, seed=0),
        verify_holder(MappingSpec.linear([[2.0, 0.0], [0.0, 1.0]], box), exps, seed=1),
    ]
    radial = verify_holder(MappingSpec.radial_power(2.0, 2, [0.0, 0.0], disk), exps, seed=2,
                           region=DomainSpec.ball([0.0, 0.0], 1.0 / 16))
    radial.notes.append("base points in B(0, 1/16)")
    checks.append(radial)
    ok = all(c.passed for c in checks[:2]) and radial.details["min_slope"] >= gamma
    return CriterionOutcome(8, "Hoelder exponent", ok, checks,
                            details={"gamma": gamma, "min_slopes": [c.details["min_slope"] for c in checks]})


def set_function_fixture():
    """Linear diag(2,1) on the unit box with a 4-piece partition and 10 nested ball pairs."""
    box = DomainSpec.unit_box(2)
    mapping = MappingSpec.linear([[2.0, 0.0], [0.0, 1.0]], box)
    target = SetSpec.of_domain(mapping.target)
    b1 = SetSpec.box([0.0, 0.0], [0.7, 0.4])
    b2 = SetSpec.box([0.0, 0.0], [1.3, 1.0])
    b3 = SetSpec.box([0.0, 0.0], [2.0, 0.6])
    partition = [b1, SetSpec.difference(b2, b1), SetSpec.difference(b3, b1, b2), SetSpec.difference(target, b1, b2, b3)]
    pairs = [(SetSpec.ball([1.0, 0.5], 0.04 * k), SetSpec.ball([1.0, 0.5], 0.04 * k + 0.03)) for k in range(1, 11)]
    return mapping, partition, pairs


def criterion_set_function() -> CriterionOutcome:
    mapping, partition, pairs = set_function_fixture()
    exps = ExponentPair.of(4, 2, 2)
    checks = verify_set_function(mapping, exps, partition, pairs)
    K = distortion_norm(mapping, mapping.source, exps).K_pq
    full = checks[0].details["full"]
    checks.append(closeness("set-function-total", full, K**exps.kappa, 1e-12, "Phi(full target)", "K_{p,q}**kappa"))
    return CriterionOutcome(9, "induced set function", all(c.passed for c in checks), checks)


def criterion_determinism() -> CriterionOutcome:
    """Quadrature results must not depend on the worker count."""
    h1 = DomainSpec.h1(2)
    cases = [
        (MappingSpec.cusp_map(1.0, (2.0,)), h1, ExponentPair.of(2.5, 1.5, 2)),
        (MappingSpec.radial_power(4.0, 2, [0.0, 0.0], DomainSpec.ball([0.0, 0.0], 1.0)), None,
         ExponentPair.of(3, 2, 2)),
    ]
    plan = QuadraturePlan(resolution=128, grading=4.0)
    diffs = []
    for m, dom, e in cases:
        dom = dom or m.source
        f = distortion_integrand(m, e)
        vals = [integrate(f, dom, plan, workers=w).level_values for w in (1, 2, 3)]
        diffs.append(int(any(v != vals[0] for v in vals[1:])))
    check = VerdictReport.compare(
        "determinism", float(sum(diffs)), 0.0, "number of cases whose level values differ across 1, 2, 3 workers",
        "bit-identical", 0.0, "exact",
    )
    return CriterionOutcome(10, "worker-count independence", check.passed, [check])


CRITERIA: dict[int, Callable[[], CriterionOutcome]] = {
    1: criterion_identity_norms,
    2: criterion_cusp_bound,
    3: criterion_cusp_divergence,
    4: criterion_ring_capacity,
    5: criterion_capacity_equality,
    6: criterion_operator,
    7: criterion_duality,
    8: criterion_holder,
    9: criterion_set_function,
    10: criterion_determinism,
}


def run_criterion(number: int) -> CriterionOutcome:
    t0 = time.perf_counter()
    out = CRITERIA[number]()
    out.wall_time_ms = 1000.0 * (time.perf_counter() - t0)
    return out


def full_suite(numbers=None) -> list[CriterionOutcome]:
    return [run_criterion(k) for k in (numbers or sorted(CRITERIA))]
