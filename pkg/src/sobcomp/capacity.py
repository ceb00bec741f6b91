"""Condenser p-capacity by grid minimisation of the p-Dirichlet energy.

The ambient domain is covered by a uniform box grid with multilinear (Q1)
elements.  Gradients are evaluated at the 2**n Gauss points of every active
cell, which keeps the discrete energy free of checkerboard modes.  The energy

    E_eps(u) = sum over Gauss points of w * (|grad u|**2 + eps**2)**(p/2)

is minimised by preconditioned nonlinear conjugate gradients, with a
weighted Laplacian as preconditioner and continuation in eps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import quad, solve_ivp
from scipy.ndimage import distance_transform_edt
from scipy.optimize import brentq

from .geometry import CondenserSpec, DomainSpec, GeometryError, SetSpec, domain_volume, sphere_area

__all__ = [
    "CapacityError",
    "SolverOptions",
    "GridFunction",
    "CapacityResult",
    "ring_capacity_exact",
    "radial_capacity_oracle",
    "condenser_capacity",
    "relative_condenser",
    "kruglikov_ratio",
]

GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))
DEFAULT_EPSILONS = tuple(10.0**-k for k in range(2, 9))


class CapacityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    """Grid and optimiser settings.

    ``resolution`` is the number of nodes per axis on the finest level;
    coarser levels halve the cell count.
    """

    levels: int = 3
    resolution: int = 257
    epsilon_schedule: tuple[float, ...] = DEFAULT_EPSILONS
    grad_tol: float = 1e-8
    max_iters: int = 2000
    stagnation_tol: float = 1e-12
    stagnation_window: int = 25

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        cells = self.resolution - 1
        if cells % (2 ** (self.levels - 1)) or cells // 2 ** (self.levels - 1) < 4:
            raise ValueError(
                f"resolution - 1 = {cells} must be divisible by 2**(levels-1) with at least 4 coarse cells"
            )
        if not self.epsilon_schedule or any(e <= 0 for e in self.epsilon_schedule):
            raise ValueError("epsilon schedule must be a non-empty list of positive values")

    def level_resolutions(self) -> list[int]:
        cells = self.resolution - 1
        return [cells // 2**k + 1 for k in reversed(range(self.levels))]


@dataclass
class GridFunction:
    """Nodal values on a box grid with plate masks."""

    lower: np.ndarray
    upper: np.ndarray
    shape: tuple[int, ...]
    values: np.ndarray
    pinned0: np.ndarray
    pinned1: np.ndarray
    active: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> np.ndarray:
        return (self.upper - self.lower) / (np.array(self.shape) - 1)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, m) for a, b, m in zip(self.lower, self.upper, self.shape)]

    def coordinates(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.shape)

    def to_csv(self, path: str | Path) -> Path:
        """Write active nodes as rows ``x0, ..., x{n-1}, u``."""
        path = Path(path)
        x = self.coordinates()[self.active]
        u = self.values[self.active]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k}" for k in range(self.dim)] + ["u"])
            for row, val in zip(x, u):
                w.writerow([repr(float(c)) for c in row] + [repr(float(val))])
        return path


@dataclass
class CapacityResult:
    value: float
    per_level_values: list[float]
    extremal: GridFunction
    energy_history: list[dict] = field(default_factory=list)
    epsilon_final: float = 0.0
    converged: bool = True
    flags: list[str] = field(default_factory=list)
    resolutions: list[int] = field(default_factory=list)

    @property
    def finest(self) -> float:
        return self.per_level_values[-1]

    def to_record(self) -> dict:
        return {
            "value": self.value,
            "per_level_values": list(self.per_level_values),
            "resolutions": list(self.resolutions),
            "epsilon_final": self.epsilon_final,
            "converged": self.converged,
            "flags": list(self.flags),
            "iterations": sum(h["iterations"] for h in self.energy_history),
        }


def ring_capacity_exact(r: float, R: float, p: float, n: int) -> float:
    """p-capacity of the ring B(R) minus closed B(r) in R^n."""
    if not 0 < r < R:
        raise GeometryError(f"ring requires 0 < r < R, got r={r}, R={R}")
    if p <= 1:
        raise ValueError(f"p must exceed 1, got {p}")
    omega = sphere_area(n)
    if p == n:
        return omega * math.log(R / r) ** (1 - n)
    e = (p - n) / (p - 1)
    return omega * abs((n - p) / (p - 1)) ** (p - 1) * abs(r**e - R**e) ** (1 - p)


def radial_capacity_oracle(r: float, R: float, p: float, n: int) -> float:
    """Ring capacity from the radial Euler-Lagrange equation by shooting.

    Radial minimisers satisfy rho**(n-1) |u'|**(p-1) = C; the flux C is found
    by integrating u' = (C rho**(1-n))**(1/(p-1)) from r to R and matching
    u(R) = 1.  The capacity is then the energy integral of that profile.
    """
    if not 0 < r < R:
        raise GeometryError(f"ring requires 0 < r < R, got r={r}, R={R}")

    def rise(C: float) -> float:
        sol = solve_ivp(
            lambda rho, u: [(C * rho ** (1 - n)) ** (1.0 / (p - 1))],
            (r, R), [0.0], rtol=1e-12, atol=1e-14,
        )
        return sol.y[0, -1] - 1.0

    hi = 1.0
    while rise(hi) < 0:
        hi *= 4.0
    lo = hi
    while rise(lo) > 0:
        lo /= 4.0
    C = brentq(rise, lo, hi, xtol=1e-15, rtol=1e-14)
    energy, _ = quad(lambda rho: (C * rho ** (1 - n)) ** (p / (p - 1)) * rho ** (n - 1), r, R, epsabs=0, epsrel=1e-13)
    return sphere_area(n) * energy


def relative_condenser(E: SetSpec, G: DomainSpec, margin: float = 0.05) -> CondenserSpec:
    """The pair (E; G): plate E against the complement of G."""
    lo, hi = G.bounding_box()
    pad = margin * (hi - lo)
    cover = DomainSpec.box(lo - pad, hi + pad)
    outside = SetSpec.difference(SetSpec.box(cover.lower, cover.upper), SetSpec.of_domain(G))
    return CondenserSpec(E, outside, cover)


def kruglikov_ratio(E: SetSpec, G: DomainSpec, p: float, capacity: float) -> float:
    """capacity**(n-1) |G|**(p-n+1) / diam(E)**p, the implied lower-bound constant."""
    n = G.dim
    if p <= n - 1:
        raise ValueError(f"need p > n - 1 = {n - 1}, got p={p}")
    d = E.diameter()
    if d <= 0:
        raise GeometryError("diam E = 0")
    return capacity ** (n - 1) * domain_volume(G) ** (p - n + 1) / d**p


# ----------------------------------------------------------------- grid assembly


def _gradient_operator(shape: tuple[int, ...], h: np.ndarray, cells: np.ndarray) -> sp.csr_matrix:
    """Rows ordered (gauss point, component, active cell)."""
    n = len(shape)
    diffs = [sp.diags([-np.ones(m - 1), np.ones(m - 1)], [0, 1], shape=(m - 1, m)) / hk for m, hk in zip(shape, h)]
    interp = [
        [sp.diags([(1 - s) * np.ones(m - 1), s * np.ones(m - 1)], [0, 1], shape=(m - 1, m)) for s in GAUSS]
        for m in shape
    ]
    blocks = []
    for gp in product(range(2), repeat=n):
        for k in range(n):
            factors = [diffs[j] if j == k else interp[j][gp[j]] for j in range(n)]
            M = factors[0]
            for f in factors[1:]:
                M = sp.kron(M, f, format="csr")
            blocks.append(sp.csr_matrix(M)[cells])
    return sp.vstack(blocks, format="csr")


class _Problem:
    def __init__(self, cond: CondenserSpec, p: float, N: int):
        self.p = p
        lo, hi = cond.ambient.bounding_box()
        n = len(lo)
        if n not in (2, 3):
            raise CapacityError(f"grid capacities are supported in dimension 2 and 3, got {n}")
        self.n = n
        self.shape = (N,) * n
        self.lower, self.upper = np.asarray(lo, float), np.asarray(hi, float)
        self.h = (self.upper - self.lower) / (N - 1)
        axes = [np.linspace(a, b, N) for a, b in zip(self.lower, self.upper)]
        grids = np.meshgrid(*axes, indexing="ij")
        x = np.stack([g.ravel() for g in grids], axis=-1)
        cgrids = np.meshgrid(*[0.5 * (a[1:] + a[:-1]) for a in axes], indexing="ij")
        centers = np.stack([g.ravel() for g in cgrids], axis=-1)
        cells = np.flatnonzero(cond.ambient.closure_contains(centers))
        if cells.size == 0:
            raise CapacityError("no grid cell lies in the ambient domain")
        self.B = _gradient_operator(self.shape, self.h, cells)
        self.ncell = cells.size
        self.w = float(np.prod(self.h)) / 2**n
        self.active = np.asarray(abs(self.B).sum(axis=0)).ravel() > 0
        hmax = float(self.h.max())
        self.pin0 = cond.F0.contains(x, hmax) & self.active
        self.pin1 = cond.F1.contains(x, hmax) & self.active
        if (self.pin0 & self.pin1).any():
            raise GeometryError("condenser plates overlap on the grid")
        if not self.pin0.any() or not self.pin1.any():
            raise CapacityError("a plate contains no grid node at this resolution")
        self.free = self.active & ~self.pin0 & ~self.pin1
        if not self.free.any():
            raise CapacityError("no free grid nodes between the plates")
        self.x = x

    def gradients(self, u):
        return (self.B @ u).reshape(2**self.n, self.n, self.ncell)

    def energy_grad(self, u, eps):
        g = self.gradients(u)
        s = (g**2).sum(axis=1) + eps**2
        E = self.w * float(np.sum(s ** (self.p / 2)))
        c = self.p * s ** (self.p / 2 - 1)
        grad = self.B.T @ ((c[:, None, :] * g).ravel()) * self.w
        grad[~self.free] = 0.0
        return E, grad

    def weighted_laplacian(self, u, eps):
        s = (self.gradients(u) ** 2).sum(axis=1) + eps**2
        c = np.repeat(self.p * s ** (self.p / 2 - 1), self.n, axis=0).ravel()
        P = (self.B.T @ sp.diags(c) @ self.B) * self.w
        f = self.free
        return P[f][:, f].tocsc()

    def distance_ratio(self):
        d0 = distance_transform_edt(~self.pin0.reshape(self.shape), sampling=self.h).ravel()
        d1 = distance_transform_edt(~self.pin1.reshape(self.shape), sampling=self.h).ravel()
        u = d0 / np.maximum(d0 + d1, 1e-300)
        u[self.pin0] = 0.0
        u[self.pin1] = 1.0
        u[~self.active] = 0.0
        return u

    def harmonic(self, u):
        K = (self.B.T @ self.B) * self.w
        f = self.free
        rhs = -(K[f][:, ~f] @ u[~f])
        out = u.copy()
        Kf = K[f][:, f]
        if self.n == 2:
            out[f] = spla.spsolve(Kf.tocsc(), rhs)
        else:
            ml = pyamg.smoothed_aggregation_solver(Kf.tocsr())
            out[f] = ml.solve(rhs, x0=u[f], tol=1e-12, accel="cg", maxiter=500)
        return out

    def preconditioner(self, u, eps):
        """Solver for the weighted Laplacian: sparse LU in 2D, an AMG V-cycle in 3D."""
        P = self.weighted_laplacian(u, eps)
        if self.n == 2:
            lu = spla.splu(P, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
            return lu.solve
        M = pyamg.smoothed_aggregation_solver(P.tocsr()).aspreconditioner(cycle="V")
        return lambda b: M @ b


def _line_search(prob: _Problem, u, d, eps, E0, g0, max_evals: int = 60):
    """Approximate minimiser of E along d; the energy is convex in the step."""
    dphi0 = float(g0 @ d)
    lo, dlo = 0.0, dphi0
    hi, dhi = None, None
    alpha = 1.0
    best = (0.0, E0, g0)
    lo_state = None
    for _ in range(max_evals):
        E1, g1 = prob.energy_grad(u + alpha * d, eps)
        if not math.isfinite(E1):
            hi, dhi = alpha, math.inf
        else:
            d1 = float(g1 @ d)
            if E1 < best[1]:
                best = (alpha, E1, g1)
            if abs(d1) <= 0.1 * abs(dphi0) and E1 <= E0:
                return alpha, E1, g1
            if d1 < 0:
                lo, dlo = alpha, d1
                lo_state = (alpha, E1, g1)
            else:
                hi, dhi = alpha, d1
        if hi is None:
            alpha *= 2.0
            continue
        width = hi - lo
        if math.isfinite(dhi) and dhi != dlo:
            trial = lo - dlo * width / (dhi - dlo)
        else:
            trial = lo + 0.5 * width
        alpha = min(max(trial, lo + 0.1 * width), hi - 0.1 * width)
    if best[0] == 0.0 and lo_state is not None:
        # energy differences are below rounding; by convexity a point with
        # negative directional derivative still lies downhill of the start
        return lo_state
    return best


def _minimise(prob: _Problem, u, opts: SolverOptions, history: list, N: int):
    f = prob.free
    gref = np.abs(prob.energy_grad(prob.distance_ratio(), opts.epsilon_schedule[0])[1]).max()
    tol = opts.grad_tol * max(gref, 1e-300)
    converged = True
    stagnated = False
    E = math.nan
    for eps in opts.epsilon_schedule:
        E, g = prob.energy_grad(u, eps)
        solve = prob.preconditioner(u, eps) if np.abs(g).max() > tol else None
        d = z_old = g_old = None
        it = flat = 0
        while np.abs(g).max() > tol and it < opts.max_iters:
            z = np.zeros_like(u)
            z[f] = solve(g[f])
            steepest = d is None
            if not steepest:
                beta = max(0.0, float(z @ (g - g_old)) / float(z_old @ g_old))
                d = -z + beta * d
                steepest = beta == 0.0 or d @ g >= 0
            if steepest:
                d = -z
            alpha, E1, g1 = _line_search(prob, u, d, eps, E, g)
            if alpha == 0.0:
                # no progress along d: restart once from the preconditioned gradient
                it += 1
                if steepest:
                    stagnated = True
                    break
                d = None
                continue
            u = u + alpha * d
            flat = flat + 1 if (E - E1) <= opts.stagnation_tol * abs(E) else 0
            g_old, z_old = g, z
            E, g = E1, g1
            it += 1
            if flat >= opts.stagnation_window:
                stagnated = True
                break
        reached = bool(np.abs(g).max() <= tol)
        converged &= reached
        history.append({
            "resolution": N, "epsilon": eps, "iterations": it, "energy": E,
            "grad_max": float(np.abs(g).max()), "reached_tolerance": reached,
        })
        if stagnated:
            break
    return u, E, converged and not stagnated, eps


def condenser_capacity(
    cond: CondenserSpec,
    p: float,
    levels: int | None = None,
    opts: SolverOptions | None = None,
) -> CapacityResult:
    """cp_p(F0, F1; ambient) with u = 0 on F0 and u = 1 on F1.

    Each level is solved independently; the reported value is the Richardson
    extrapolation 2 v_L - v_{L-1} of the two finest levels.
    """
    if p <= 1:
        raise ValueError(f"p must exceed 1, got {p}")
    opts = opts or SolverOptions()
    if levels is not None and levels != opts.levels:
        opts = SolverOptions(levels, opts.resolution, opts.epsilon_schedule, opts.grad_tol, opts.max_iters,
                             opts.stagnation_tol, opts.stagnation_window)
    history: list[dict] = []
    values: list[float] = []
    converged = True
    eps_final = opts.epsilon_schedule[-1]
    prob = u = None
    resolutions = opts.level_resolutions()
    for N in resolutions:
        prob = _Problem(cond, p, N)
        u0 = prob.harmonic(prob.distance_ratio())
        u, E, ok, eps_final = _minimise(prob, u0, opts, history, N)
        values.append(E)
        converged &= ok
    flags = []
    if not converged:
        flags.append("non_converged")
    if len(values) >= 2:
        value = 2.0 * values[-1] - values[-2]
        diffs = np.diff(values)
        if np.all(diffs <= 0) or np.all(diffs >= 0):
            flags.append("monotone_trend")
        else:
            flags.append("non_monotone_trend")
        if len(values) >= 3:
            steps = np.abs(diffs)
            flags.append("mesh_converging" if np.all(steps[1:] < steps[:-1]) else "mesh_not_converging")
    else:
        value = values[-1]
    extremal = GridFunction(prob.lower, prob.upper, prob.shape, u, prob.pin0, prob.pin1, prob.active)
    return CapacityResult(value, values, extremal, history, eps_final, converged, flags, resolutions)
