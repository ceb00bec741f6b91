"""Domains, plate sets and condensers.

Every domain is an open set with an exact volume and a vectorised membership
test.  Plate sets (``SetSpec``) are closed sets used as condenser plates and as
targets of the induced set function; they may be defined through a mapping
(image or preimage of another set).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

__all__ = [
    "DomainSpec",
    "SetSpec",
    "CondenserSpec",
    "GeometryError",
    "SamplingError",
    "contains",
    "membership",
    "cusp_gamma",
    "domain_volume",
    "sample_points",
    "sphere_area",
    "ball_volume",
]

MAX_DIM = 4
SAMPLE_CHUNK = 4096
MIN_ACCEPTANCE = 1e-4


class GeometryError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def ball_volume(n: int, radius: float = 1.0) -> float:
    return sphere_area(n) / n * radius**n


def _as_points(points, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(points, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != dim:
        raise GeometryError(f"point dimension {arr.shape[-1]} does not match domain dimension {dim}")
    return arr, single


def cusp_gamma(exponents: Sequence[float]) -> float:
    """Apex exponent of the cusp H_g with g_i(t) = t**gamma_i."""
    exps = [float(g) for g in exponents]
    if not exps:
        raise GeometryError("cusp exponent list is empty")
    if any(g < 1.0 for g in exps):
        raise GeometryError(f"cusp exponents must be >= 1, got {exps}")
    return math.fsum(exps) + 1.0


@dataclass(frozen=True)
class DomainSpec:
    """An open bounded domain: box, ball, annulus or anisotropic cusp H_g.

    Use the classmethod constructors; they validate the invariants.
    """

    kind: str
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    radius: float = 0.0
    inner: float = 0.0
    gammas: tuple[float, ...] = ()

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "DomainSpec":
        lo = tuple(float(v) for v in lower)
        hi = tuple(float(v) for v in upper)
        if len(lo) != len(hi) or not lo:
            raise GeometryError("box corners must have equal, positive length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise GeometryError(f"box requires lower < upper componentwise, got {lo}, {hi}")
        if len(lo) > MAX_DIM:
            raise GeometryError(f"dimension {len(lo)} exceeds {MAX_DIM}")
        return cls("box", lower=lo, upper=hi)

    @classmethod
    def unit_box(cls, n: int) -> "DomainSpec":
        return cls.box([0.0] * n, [1.0] * n)

    @classmethod
    def ball(cls, center: Sequence[float], radius: float) -> "DomainSpec":
        c = tuple(float(v) for v in center)
        if radius <= 0:
            raise GeometryError(f"ball radius must be positive, got {radius}")
        if not 2 <= len(c) <= MAX_DIM:
            raise GeometryError(f"ball dimension must be in [2, {MAX_DIM}]")
        return cls("ball", center=c, radius=float(radius))

    @classmethod
    def annulus(cls, center: Sequence[float], r: float, R: float) -> "DomainSpec":
        c = tuple(float(v) for v in center)
        if not 0 < r < R:
            raise GeometryError(f"annulus requires 0 < r < R, got r={r}, R={R}")
        if not 2 <= len(c) <= MAX_DIM:
            raise GeometryError(f"annulus dimension must be in [2, {MAX_DIM}]")
        return cls("annulus", center=c, radius=float(R), inner=float(r))

    @classmethod
    def cusp(cls, gammas: Sequence[float]) -> "DomainSpec":
        g = tuple(float(v) for v in gammas)
        cusp_gamma(g)
        if len(g) + 1 > MAX_DIM:
            raise GeometryError(f"dimension {len(g) + 1} exceeds {MAX_DIM}")
        return cls("cusp", gammas=g)

    @classmethod
    def h1(cls, n: int) -> "DomainSpec":
        """The Lipschitz model cusp H_1 (all exponents equal to one)."""
        return cls.cusp([1.0] * (n - 1))

    @property
    def dim(self) -> int:
        if self.kind == "box":
            return len(self.lower)
        if self.kind == "cusp":
            return len(self.gammas) + 1
        return len(self.center)

    @property
    def gamma(self) -> float:
        return cusp_gamma(self.gammas)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "box":
            return np.array(self.lower), np.array(self.upper)
        if self.kind == "cusp":
            return np.zeros(self.dim), np.ones(self.dim)
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def contains(self, points) -> np.ndarray | bool:
        x, single = _as_points(points, self.dim)
        if self.kind == "box":
            inside = np.all((x > self.lower) & (x < self.upper), axis=-1)
        elif self.kind == "ball":
            inside = np.linalg.norm(x - self.center, axis=-1) < self.radius
        elif self.kind == "annulus":
            rho = np.linalg.norm(x - self.center, axis=-1)
            inside = (rho > self.inner) & (rho < self.radius)
        elif self.kind == "cusp":
            xn = x[:, -1]
            inside = (xn > 0) & (xn < 1)
            with np.errstate(invalid="ignore"):
                for i, g in enumerate(self.gammas):
                    inside &= (x[:, i] > 0) & (x[:, i] < np.where(xn > 0, xn, 0.0) ** g)
        else:
            raise GeometryError(f"unknown domain kind {self.kind!r}")
        return bool(inside[0]) if single else inside

    def closure_contains(self, points) -> np.ndarray:
        """Membership in the closed domain (used for grid rasterisation)."""
        x, _ = _as_points(points, self.dim)
        if self.kind == "box":
            return np.all((x >= self.lower) & (x <= self.upper), axis=-1)
        if self.kind == "ball":
            return np.linalg.norm(x - self.center, axis=-1) <= self.radius
        if self.kind == "annulus":
            rho = np.linalg.norm(x - self.center, axis=-1)
            return (rho >= self.inner) & (rho <= self.radius)
        xn = np.clip(x[:, -1], 0.0, None)
        inside = (x[:, -1] >= 0) & (x[:, -1] <= 1)
        for i, g in enumerate(self.gammas):
            inside &= (x[:, i] >= 0) & (x[:, i] <= xn**g)
        return inside

    def to_record(self) -> dict[str, Any]:
        if self.kind == "box":
            return {"kind": "box", "lower": list(self.lower), "upper": list(self.upper)}
        if self.kind == "ball":
            return {"kind": "ball", "center": list(self.center), "radius": self.radius}
        if self.kind == "annulus":
            return {"kind": "annulus", "center": list(self.center), "r": self.inner, "R": self.radius}
        return {"kind": "cusp", "gammas": list(self.gammas)}

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "DomainSpec":
        kind = rec.get("kind")
        allowed = {
            "box": {"lower", "upper"},
            "ball": {"center", "radius"},
            "annulus": {"center", "r", "R"},
            "cusp": {"gammas"},
        }
        if kind not in allowed:
            raise GeometryError(f"unknown domain kind {kind!r}")
        extra = set(rec) - allowed[kind] - {"kind"}
        missing = allowed[kind] - set(rec)
        if extra or missing:
            raise GeometryError(f"{kind} record: unknown keys {sorted(extra)}, missing keys {sorted(missing)}")
        if kind == "box":
            return cls.box(rec["lower"], rec["upper"])
        if kind == "ball":
            return cls.ball(rec["center"], rec["radius"])
        if kind == "annulus":
            return cls.annulus(rec["center"], rec["r"], rec["R"])
        return cls.cusp(rec["gammas"])


def contains(domain: DomainSpec, point) -> np.ndarray | bool:
    return domain.contains(point)


def domain_volume(domain: DomainSpec) -> float:
    n = domain.dim
    if domain.kind == "box":
        return float(np.prod(np.subtract(domain.upper, domain.lower)))
    if domain.kind == "ball":
        return ball_volume(n, domain.radius)
    if domain.kind == "annulus":
        return ball_volume(n, domain.radius) - ball_volume(n, domain.inner)
    # the x_n-section of H_g has measure prod t**gamma_i = t**(gamma-1)
    return 1.0 / domain.gamma


def sample_points(domain: DomainSpec, count: int, seed: int) -> np.ndarray:
    """Uniform points in ``domain`` by rejection from the bounding box.

    Candidates come in fixed-size chunks, chunk ``k`` drawn from the stream
    seeded by ``(seed, k)``, so the output depends only on ``(seed, count)``.
    """
    if count <= 0:
        raise SamplingError(f"count must be positive, got {count}")
    lo, hi = domain.bounding_box()
    accepted: list[np.ndarray] = []
    total = drawn = 0
    chunk = 0
    while total < count:
        rng = np.random.default_rng([seed, chunk])
        cand = lo + (hi - lo) * rng.random((SAMPLE_CHUNK, domain.dim))
        keep = cand[domain.contains(cand)]
        accepted.append(keep)
        total += len(keep)
        drawn += SAMPLE_CHUNK
        chunk += 1
        if drawn >= 16 * SAMPLE_CHUNK and total / drawn < MIN_ACCEPTANCE:
            raise SamplingError(
                f"rejection sampling acceptance rate {total / drawn:.2e} below {MIN_ACCEPTANCE:g} "
                f"for {domain.kind} domain"
            )
        if drawn >= 1 << 40:
            raise SamplingError("sampling budget exhausted")
    return np.concatenate(accepted)[:count]


@dataclass(frozen=True)
class SetSpec:
    """A closed plate set or a target subset.

    kinds:
      ``ball``      closed ball (center, radius)
      ``box``       closed box (lower, upper)
      ``exterior``  complement of the open ball B(center, radius)
      ``segment``   closed segment between ``lower`` and ``upper``
      ``domain``    an open ``DomainSpec``
      ``image``     phi(base), via the exact inverse of ``mapping``
      ``preimage``  phi^{-1}(base), via forward evaluation of ``mapping``
      ``union``     union of ``parts``
      ``difference`` ``parts[0]`` minus the union of ``parts[1:]``
    """

    kind: str
    center: tuple[float, ...] = ()
    radius: float = 0.0
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    domain: DomainSpec | None = None
    mapping: Any = None
    base: "SetSpec | None" = None
    parts: tuple["SetSpec", ...] = field(default=())

    @classmethod
    def ball(cls, center, radius) -> "SetSpec":
        if radius < 0:
            raise GeometryError("ball radius must be non-negative")
        return cls("ball", center=tuple(map(float, center)), radius=float(radius))

    @classmethod
    def box(cls, lower, upper) -> "SetSpec":
        lo, hi = tuple(map(float, lower)), tuple(map(float, upper))
        if any(a > b for a, b in zip(lo, hi)):
            raise GeometryError("box requires lower <= upper")
        return cls("box", lower=lo, upper=hi)

    @classmethod
    def exterior(cls, center, radius) -> "SetSpec":
        return cls("exterior", center=tuple(map(float, center)), radius=float(radius))

    @classmethod
    def segment(cls, start, end) -> "SetSpec":
        return cls("segment", lower=tuple(map(float, start)), upper=tuple(map(float, end)))

    @classmethod
    def of_domain(cls, domain: DomainSpec) -> "SetSpec":
        return cls("domain", domain=domain)

    @classmethod
    def image(cls, mapping, base: "SetSpec") -> "SetSpec":
        return cls("image", mapping=mapping, base=base)

    @classmethod
    def preimage(cls, mapping, base: "SetSpec") -> "SetSpec":
        return cls("preimage", mapping=mapping, base=base)

    @classmethod
    def union(cls, *parts: "SetSpec") -> "SetSpec":
        return cls("union", parts=tuple(parts))

    @classmethod
    def difference(cls, whole: "SetSpec", *removed: "SetSpec") -> "SetSpec":
        return cls("difference", parts=(whole, *removed))

    @property
    def dim(self) -> int | None:
        if self.center:
            return len(self.center)
        if self.lower:
            return len(self.lower)
        if self.domain is not None:
            return self.domain.dim
        if self.base is not None:
            return self.base.dim
        for part in self.parts:
            if part.dim is not None:
                return part.dim
        return None

    def contains(self, points, grid_spacing: float = 0.0) -> np.ndarray:
        """Vectorised membership; ``grid_spacing`` thickens lower-dimensional sets."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        k = self.kind
        if k == "ball":
            return np.linalg.norm(x - self.center, axis=-1) <= self.radius
        if k == "exterior":
            return np.linalg.norm(x - self.center, axis=-1) >= self.radius
        if k == "box":
            return np.all((x >= self.lower) & (x <= self.upper), axis=-1)
        if k == "segment":
            a, b = np.array(self.lower), np.array(self.upper)
            d = b - a
            t = np.clip((x - a) @ d / (d @ d), 0.0, 1.0)
            dist = np.linalg.norm(x - (a + t[:, None] * d), axis=-1)
            return dist <= 0.5 * grid_spacing + 1e-12 * np.sqrt(d @ d)
        if k == "domain":
            return np.asarray(self.domain.contains(x))
        if k == "image":
            src = self.mapping.source
            inside = np.ones(len(x), dtype=bool) if self.mapping.target is None else self.mapping.target.closure_contains(x)
            out = np.zeros(len(x), dtype=bool)
            if inside.any():
                pre = self.mapping.inverse(x[inside])
                ok = self.base.contains(pre, grid_spacing)
                if src is not None:
                    ok &= src.closure_contains(pre)
                out[inside] = ok
            return out
        if k == "preimage":
            src = self.mapping.source
            inside = np.ones(len(x), dtype=bool) if src is None else self._evaluable(x)
            out = np.zeros(len(x), dtype=bool)
            if inside.any():
                out[inside] = self.base.contains(self.mapping.evaluate(x[inside]), grid_spacing)
            return out
        if k == "union":
            out = np.zeros(len(x), dtype=bool)
            for part in self.parts:
                out |= part.contains(x, grid_spacing)
            return out
        if k == "difference":
            out = self.parts[0].contains(x, grid_spacing)
            for part in self.parts[1:]:
                out &= ~part.contains(x, grid_spacing)
            return out
        raise GeometryError(f"unknown set kind {k!r}")

    def _evaluable(self, x: np.ndarray) -> np.ndarray:
        return self.mapping.evaluable(x)

    def diameter(self) -> float:
        if self.kind == "ball":
            return 2.0 * self.radius
        if self.kind in ("box", "segment"):
            return float(np.linalg.norm(np.subtract(self.upper, self.lower)))
        raise GeometryError(f"diameter not available for set kind {self.kind!r}")

    def to_record(self) -> dict[str, Any]:
        if self.kind in ("ball", "exterior"):
            return {"kind": self.kind, "center": list(self.center), "radius": self.radius}
        if self.kind in ("box", "segment"):
            return {"kind": self.kind, "lower": list(self.lower), "upper": list(self.upper)}
        if self.kind == "domain":
            return {"kind": "domain", "domain": self.domain.to_record()}
        if self.kind in ("image", "preimage"):
            return {"kind": self.kind, "mapping": self.mapping.to_record(), "base": self.base.to_record()}
        return {"kind": self.kind, "parts": [p.to_record() for p in self.parts]}

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "SetSpec":
        kind = rec.get("kind")
        if kind in ("ball", "exterior"):
            return getattr(cls, kind)(rec["center"], rec["radius"])
        if kind == "box":
            return cls.box(rec["lower"], rec["upper"])
        if kind == "segment":
            return cls.segment(rec["lower"], rec["upper"])
        if kind == "domain":
            return cls.of_domain(DomainSpec.from_record(rec["domain"]))
        if kind in ("image", "preimage"):
            from .mappings import MappingSpec

            return cls(kind, mapping=MappingSpec.from_record(rec["mapping"]), base=cls.from_record(rec["base"]))
        if kind in ("union", "difference"):
            return cls(kind, parts=tuple(cls.from_record(p) for p in rec["parts"]))
        raise GeometryError(f"unknown set kind {kind!r}")


def membership(target: DomainSpec | SetSpec, points, grid_spacing: float = 0.0) -> np.ndarray:
    if isinstance(target, DomainSpec):
        return np.atleast_1d(target.contains(points))
    return target.contains(points, grid_spacing)


@dataclass(frozen=True)
class CondenserSpec:
    """Plates F0 (u = 0) and F1 (u = 1) inside an ambient domain."""

    F0: SetSpec
    F1: SetSpec
    ambient: DomainSpec

    @classmethod
    def ring(cls, center: Sequence[float], r: float, R: float, ambient: DomainSpec | None = None) -> "CondenserSpec":
        """Closed ball B(c, r) against the complement of the open ball B(c, R)."""
        if not 0 < r < R:
            raise GeometryError(f"ring condenser requires 0 < r < R, got r={r}, R={R}")
        c = tuple(map(float, center))
        if ambient is None:
            ambient = DomainSpec.box([v - R for v in c], [v + R for v in c])
        return cls(SetSpec.ball(c, r), SetSpec.exterior(c, R), ambient)

    def preimage(self, mapping, ambient: DomainSpec | None = None) -> "CondenserSpec":
        amb = ambient if ambient is not None else mapping.source
        if amb is None:
            raise GeometryError("mapping has no source domain; pass the ambient domain explicitly")
        return CondenserSpec(SetSpec.preimage(mapping, self.F0), SetSpec.preimage(mapping, self.F1), amb)

    def to_record(self) -> dict[str, Any]:
        return {"F0": self.F0.to_record(), "F1": self.F1.to_record(), "ambient": self.ambient.to_record()}

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "CondenserSpec":
        if rec.get("kind") == "ring":
            amb = DomainSpec.from_record(rec["ambient"]) if rec.get("ambient") else None
            return cls.ring(rec["center"], rec["r"], rec["R"], amb)
        return cls(SetSpec.from_record(rec["F0"]), SetSpec.from_record(rec["F1"]), DomainSpec.from_record(rec["ambient"]))
