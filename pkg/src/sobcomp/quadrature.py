"""Midpoint tensor-grid and Monte Carlo integration over model domains.

Each domain is parametrised by the open unit cube: boxes affinely, balls and
annuli in hyperspherical coordinates, cusps H_g by x_n = t**beta,
x_i = u_i x_n**gamma_i.  Box and cusp domains take the grading substitution
on the last coordinate, which clusters nodes near x_n = 0.

Nodes are processed in blocks of fixed size; block sums are combined by a
fixed pairwise tree, so results do not depend on the number of workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .geometry import DomainSpec, domain_volume, sample_points

__all__ = [
    "QuadraturePlan",
    "QuadratureResult",
    "EssSupResult",
    "QuadratureError",
    "integrate",
    "ess_sup_estimate",
    "level_nodes",
    "tensor_nodes",
    "tree_sum",
    "worker_count",
    "DEFAULT_REL_TOL",
    "CUSP_GRADING",
]

DEFAULT_REL_TOL = 1e-3
CUSP_GRADING = 4.0
BLOCK = 1 << 15

Integrand = Callable[[np.ndarray], np.ndarray]


class QuadratureError(ArithmeticError):
    pass


def worker_count() -> int:
    """Worker cap from SOBCOMP_THREADS (0 or unset = one per CPU)."""
    raw = os.environ.get("SOBCOMP_THREADS", "0").strip() or "0"
    n = int(raw)
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class QuadraturePlan:
    scheme: str = "tensor_grid"
    resolution: int = 32
    grading: float | None = None
    seed: int = 0
    refinement_levels: int = 3

    def __post_init__(self):
        if self.scheme not in ("tensor_grid", "monte_carlo"):
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")
        if self.resolution < 8:
            raise ValueError(f"resolution must be >= 8, got {self.resolution}")
        if self.refinement_levels < 2:
            raise ValueError(f"refinement_levels must be >= 2, got {self.refinement_levels}")
        if self.grading is not None and self.grading < 1:
            raise ValueError(f"grading exponent must be >= 1, got {self.grading}")

    def grading_for(self, domain: DomainSpec) -> float:
        if self.grading is not None:
            return float(self.grading)
        return CUSP_GRADING if domain.kind == "cusp" else 1.0

    def resolutions(self) -> list[int]:
        return [self.resolution * 2**k for k in range(self.refinement_levels)]


@dataclass
class QuadratureResult:
    value: float
    error_estimate: float
    nodes_used: int
    converged: bool
    level_values: list[float] = field(default_factory=list)
    grading: float = 1.0

    @property
    def relative_error(self) -> float:
        return self.error_estimate / max(abs(self.value), 1e-30)


@dataclass
class EssSupResult:
    value: float
    location: np.ndarray
    level_maxima: list[float]
    stabilized: bool
    nodes_used: int

    @property
    def error_estimate(self) -> float:
        if len(self.level_maxima) < 2:
            return 0.0
        return abs(self.level_maxima[-1] - self.level_maxima[-2])


def tree_sum(values: np.ndarray) -> float:
    """Sum in a fixed pairwise order."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        return 0.0
    while v.size > 1:
        if v.size % 2:
            v = np.append(v, 0.0)
        v = v[0::2] + v[1::2]
    return float(v[0])


def _hyperspherical(rho: np.ndarray, ang: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions and angular density for angles in the unit cube."""
    m = len(rho)
    theta = np.empty((m, n - 1))
    theta[:, : n - 2] = math.pi * ang[:, : n - 2]
    theta[:, n - 2] = 2.0 * math.pi * ang[:, n - 2]
    direction = np.empty((m, n))
    sin_prod = np.ones(m)
    dens = np.full(m, math.pi ** (n - 2) * 2.0 * math.pi)
    for k in range(n - 1):
        direction[:, k] = sin_prod * np.cos(theta[:, k])
        if k < n - 2:
            dens *= np.sin(theta[:, k]) ** (n - 2 - k)
        sin_prod = sin_prod * np.sin(theta[:, k])
    direction[:, n - 1] = sin_prod
    return direction, dens


def tensor_nodes(domain: DomainSpec, u: np.ndarray, grading: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Map unit-cube points ``u`` to domain points and volume densities."""
    n = domain.dim
    kind = domain.kind
    beta = float(grading)
    if kind == "box":
        lo, hi = np.array(domain.lower), np.array(domain.upper)
        t = u.copy()
        t[:, -1] = u[:, -1] ** beta
        x = lo + (hi - lo) * t
        w = np.prod(hi - lo) * beta * u[:, -1] ** (beta - 1.0)
        return x, w
    if kind == "cusp":
        g = np.array(domain.gammas)
        xn = u[:, -1] ** beta
        x = np.empty_like(u)
        x[:, -1] = xn
        x[:, :-1] = u[:, :-1] * xn[:, None] ** g
        w = beta * u[:, -1] ** (beta - 1.0) * xn ** (domain.gamma - 1.0)
        return x, w
    if kind in ("ball", "annulus"):
        r0 = domain.inner if kind == "annulus" else 0.0
        rho = r0 + (domain.radius - r0) * u[:, 0]
        direction, dens = _hyperspherical(rho, u[:, 1:], n)
        x = np.array(domain.center) + rho[:, None] * direction
        w = (domain.radius - r0) * rho ** (n - 1) * dens
        return x, w
    raise QuadratureError(f"no tensor parametrisation for domain kind {kind!r}")


def level_nodes(domain: DomainSpec, N: int, grading: float = 1.0) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Midpoint nodes and weights of one level, in fixed-size blocks."""
    n = domain.dim
    total = N**n
    shape = (N,) * n
    for start in range(0, total, BLOCK):
        idx = np.arange(start, min(start + BLOCK, total))
        u = (np.stack(np.unravel_index(idx, shape), axis=-1) + 0.5) / N
        x, w = tensor_nodes(domain, u, grading)
        yield x, w / total


def _check_finite(vals: np.ndarray, x: np.ndarray) -> None:
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        raise QuadratureError(f"non-finite integrand value {vals[i]} at node {x[i].tolist()}")


def _block_sum(f: Integrand, x: np.ndarray, w: np.ndarray) -> float:
    vals = np.asarray(f(x), dtype=float)
    _check_finite(vals, x)
    return tree_sum(vals * w)


def _run_blocks(jobs: list, fn, workers: int | None) -> list:
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def integrate(
    f: Integrand,
    domain: DomainSpec,
    plan: QuadraturePlan | None = None,
    rel_tol: float = DEFAULT_REL_TOL,
    workers: int | None = None,
) -> QuadratureResult:
    """Integrate ``f`` (vectorised over points) over ``domain``.

    Tensor grids report the finest level with the difference to the previous
    level as error estimate; Monte Carlo reports the standard error.
    """
    plan = plan or QuadraturePlan()
    if plan.scheme == "monte_carlo":
        return _integrate_mc(f, domain, plan, rel_tol)
    beta = plan.grading_for(domain)
    values, nodes = [], 0
    for N in plan.resolutions():
        jobs = list(level_nodes(domain, N, beta))
        values.append(tree_sum(np.array(_run_blocks(jobs, lambda x, w: _block_sum(f, x, w), workers))))
        nodes += N**domain.dim
    value = values[-1]
    err = abs(values[-1] - values[-2])
    converged = err / max(abs(value), 1e-30) < rel_tol
    return QuadratureResult(value, err, nodes, converged, values, beta)


def _integrate_mc(f: Integrand, domain: DomainSpec, plan: QuadraturePlan, rel_tol: float) -> QuadratureResult:
    x = sample_points(domain, plan.resolution, plan.seed)
    vals = np.asarray(f(x), dtype=float)
    _check_finite(vals, x)
    vol = domain_volume(domain)
    mean = tree_sum(vals) / len(vals)
    var = tree_sum((vals - mean) ** 2) / max(len(vals) - 1, 1)
    value = vol * mean
    err = vol * math.sqrt(var / len(vals))
    return QuadratureResult(value, err, len(vals), err / max(abs(value), 1e-30) < rel_tol, [value], 1.0)


def ess_sup_estimate(
    f: Integrand, domain: DomainSpec, plan: QuadraturePlan | None = None, workers: int | None = None
) -> EssSupResult:
    """Node maximum over all refinement levels, with its location."""
    plan = plan or QuadraturePlan()
    best, loc = -np.inf, None
    maxima: list[float] = []
    nodes = 0

    def block_max(x, w):
        vals = np.asarray(f(x), dtype=float)
        _check_finite(vals, x)
        i = int(np.argmax(vals))
        return float(vals[i]), x[i]

    if plan.scheme == "monte_carlo":
        levels = [[(sample_points(domain, plan.resolution, plan.seed), None)]]
        sizes = [plan.resolution]
    else:
        beta = plan.grading_for(domain)
        levels = [list(level_nodes(domain, N, beta)) for N in plan.resolutions()]
        sizes = [N**domain.dim for N in plan.resolutions()]
    for jobs, size in zip(levels, sizes):
        level_best = -np.inf
        for value, where in _run_blocks(jobs, block_max, workers):
            if value > level_best:
                level_best = value
            if value > best:
                best, loc = value, where
        maxima.append(level_best)
        nodes += size
    stable = len(maxima) < 2 or abs(maxima[-1] - maxima[-2]) <= 0.01 * abs(maxima[-1])
    return EssSupResult(best, np.asarray(loc), maxima, stable, nodes)
