"""Analytic homeomorphisms with exact Jacobians.

All evaluation routines are vectorised over a trailing coordinate axis:
``x`` of shape ``(n,)`` or ``(m, n)``.  Next to the raw Jacobian matrix every
sample carries ``log_norm`` and ``log_abs_jacobian`` computed from the
analytic factorisation of the map, so dilatations stay finite at graded
quadrature nodes where the raw determinant underflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .geometry import DomainSpec, cusp_gamma

__all__ = [
    "MappingSpec",
    "JacobianSample",
    "DistortionAudit",
    "MappingError",
    "SingularPointError",
    "InverseError",
    "evaluate",
    "jacobian",
    "inverse",
    "newton_inverse",
    "inverse_mapping",
    "finite_distortion_audit",
    "operator_norm",
    "adjugate",
]

EPS_J = 1e-12
EPS_D = 1e-12


class MappingError(ValueError):
    pass


class SingularPointError(MappingError):
    pass


class InverseError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def operator_norm(A: np.ndarray) -> np.ndarray:
    """Spectral norm of a stack of n x n matrices.

    n = 2 and n = 3 use the closed-form largest eigenvalue of A^T A; other
    sizes fall back to an SVD.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    if n == 1:
        return np.abs(A[..., 0, 0])
    if n == 2:
        fro2 = np.sum(A * A, axis=(-2, -1))
        det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
        disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0))
        return np.sqrt(0.5 * (fro2 + disc))
    if n == 3:
        S = np.swapaxes(A, -1, -2) @ A
        q = np.trace(S, axis1=-2, axis2=-1) / 3.0
        off = S[..., 0, 1] ** 2 + S[..., 0, 2] ** 2 + S[..., 1, 2] ** 2
        dev = (S[..., 0, 0] - q) ** 2 + (S[..., 1, 1] - q) ** 2 + (S[..., 2, 2] - q) ** 2 + 2.0 * off
        pp = np.sqrt(dev / 6.0)
        safe = np.where(pp > 0, pp, 1.0)
        Bm = (S - q[..., None, None] * np.eye(3)) / safe[..., None, None]
        r = np.clip(np.linalg.det(Bm) / 2.0, -1.0, 1.0)
        lam = np.where(pp > 0, q + 2.0 * pp * np.cos(np.arccos(r) / 3.0), q)
        return np.sqrt(np.maximum(lam, 0.0))
    return np.linalg.norm(A, ord=2, axis=(-2, -1))


def adjugate(A: np.ndarray) -> np.ndarray:
    """adj A with A @ adj A = det(A) I, exact for n <= 3."""
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    if n == 1:
        return np.ones_like(A)
    if n == 2:
        out = np.empty_like(A)
        out[..., 0, 0] = A[..., 1, 1]
        out[..., 1, 1] = A[..., 0, 0]
        out[..., 0, 1] = -A[..., 0, 1]
        out[..., 1, 0] = -A[..., 1, 0]
        return out
    if n == 3:
        c0, c1, c2 = A[..., :, 0], A[..., :, 1], A[..., :, 2]
        return np.stack([np.cross(c1, c2), np.cross(c2, c0), np.cross(c0, c1)], axis=-2)
    det = np.linalg.det(A)
    return det[..., None, None] * np.linalg.inv(A)


@dataclass(frozen=True)
class JacobianSample:
    point: np.ndarray
    matrix: np.ndarray
    operator_norm: np.ndarray
    jacobian: np.ndarray
    adjugate: np.ndarray
    log_norm: np.ndarray
    log_abs_jacobian: np.ndarray


@dataclass(frozen=True)
class DistortionAudit:
    points: int
    violations: int
    eps_J: float
    eps_D: float
    note: str = "sets S (Luzin N failure) and Z = {J = 0} treated as null for the analytic zoo"


def _safe_log(v: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(v))


@dataclass(frozen=True)
class MappingSpec:
    """An analytic homeomorphism ``source -> target``.

    ``composition`` applies ``parts[0]`` first, then ``parts[1]``.
    """

    kind: str
    dim: int
    matrix: tuple[tuple[float, ...], ...] = ()
    a: float = 1.0
    gammas: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    parts: tuple["MappingSpec", ...] = ()
    source: DomainSpec | None = None
    target: DomainSpec | None = None

    # construction -------------------------------------------------------

    @classmethod
    def identity(cls, n: int, source: DomainSpec | None = None) -> "MappingSpec":
        return cls("identity", n, source=source, target=source)

    @classmethod
    def linear(cls, A, source: DomainSpec | None = None, target: DomainSpec | None = None) -> "MappingSpec":
        M = np.asarray(A, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise MappingError("linear map needs a square matrix")
        if abs(np.linalg.det(M)) == 0.0:
            raise MappingError("linear map must be nonsingular (det A != 0)")
        if target is None and source is not None:
            target = _linear_image(M, source)
        return cls("linear", M.shape[0], matrix=tuple(map(tuple, M.tolist())), source=source, target=target)

    @classmethod
    def radial_power(
        cls, a: float, n: int, center: Sequence[float] | None = None, source: DomainSpec | None = None
    ) -> "MappingSpec":
        """x -> c + |x - c|**(a - 1) (x - c)."""
        if a <= 0:
            raise MappingError(f"radial power exponent must be positive, got {a}")
        c = tuple(map(float, center)) if center is not None else (0.0,) * n
        target = None
        if source is not None and source.kind == "ball" and source.center == c:
            target = DomainSpec.ball(c, source.radius**a)
        elif source is not None and source.kind == "annulus" and source.center == c:
            target = DomainSpec.annulus(c, source.inner**a, source.radius**a)
        return cls("radial_power", n, a=float(a), center=c, source=source, target=target)

    @classmethod
    def cusp_map(cls, a: float, gammas: Sequence[float]) -> "MappingSpec":
        """phi_a : H_1 -> H_g, x -> (x_i / x_n * x_n**(a*gamma_i), ..., x_n**a)."""
        if a <= 0:
            raise MappingError(f"cusp map exponent must be positive, got {a}")
        g = tuple(map(float, gammas))
        cusp_gamma(g)
        n = len(g) + 1
        return cls("cusp_map", n, a=float(a), gammas=g, source=DomainSpec.h1(n), target=DomainSpec.cusp(g))

    @classmethod
    def compose(cls, first: "MappingSpec", second: "MappingSpec") -> "MappingSpec":
        if first.dim != second.dim:
            raise MappingError("composition of maps with different dimensions")
        return cls("composition", first.dim, parts=(first, second), source=first.source, target=second.target)

    @property
    def A(self) -> np.ndarray:
        return np.array(self.matrix, dtype=float)

    @property
    def gamma(self) -> float:
        return cusp_gamma(self.gammas)

    # evaluation ---------------------------------------------------------

    def _points(self, x) -> tuple[np.ndarray, bool]:
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        if arr.shape[-1] != self.dim:
            raise MappingError(f"point dimension {arr.shape[-1]} != map dimension {self.dim}")
        return arr, single

    def _check_source(self, x: np.ndarray) -> None:
        if self.source is None:
            return
        inside = np.atleast_1d(self.source.contains(x))
        if not inside.all():
            bad = x[np.argmin(inside)]
            raise MappingError(f"point {bad.tolist()} lies outside the source {self.source.kind} domain")

    def evaluable(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "cusp_map":
            return x[:, -1] > 0
        if self.kind == "composition":
            ok = self.parts[0].evaluable(x)
            y = np.zeros_like(x)
            y[ok] = self.parts[0].evaluate(x[ok])
            return ok & self.parts[1].evaluable(y)
        return np.ones(len(x), dtype=bool)

    def evaluate(self, x, check: bool = False) -> np.ndarray:
        x, single = self._points(x)
        if check:
            self._check_source(x)
        k = self.kind
        if k == "identity":
            y = x.copy()
        elif k == "linear":
            y = x @ self.A.T
        elif k == "radial_power":
            d = x - self.center
            rho = np.linalg.norm(d, axis=-1, keepdims=True)
            with np.errstate(divide="ignore", invalid="ignore"):
                y = self.center + np.where(rho > 0, rho ** (self.a - 1.0), 0.0) * d
        elif k == "cusp_map":
            xn = x[:, -1:]
            if np.any(xn <= 0):
                raise SingularPointError("cusp map is undefined for x_n <= 0")
            ex = self.a * np.array(self.gammas) - 1.0
            y = np.empty_like(x)
            y[:, :-1] = x[:, :-1] * xn**ex
            y[:, -1] = xn[:, 0] ** self.a
        elif k == "composition":
            y = self.parts[1].evaluate(self.parts[0].evaluate(x))
        else:
            raise MappingError(f"unknown mapping kind {k!r}")
        return y[0] if single else y

    def jacobian(self, x, check: bool = False) -> JacobianSample:
        x, single = self._points(x)
        if check:
            self._check_source(x)
        n, m = self.dim, len(x)
        k = self.kind
        if k in ("identity", "linear"):
            A = np.eye(n) if k == "identity" else self.A
            D = np.broadcast_to(A, (m, n, n)).copy()
            nrm = np.full(m, float(operator_norm(A)))
            J = np.full(m, float(np.linalg.det(A)))
            log_norm, log_J = np.log(nrm), _safe_log(J)
        elif k == "radial_power":
            d = x - self.center
            rho = np.linalg.norm(d, axis=-1)
            if self.a != 1.0 and np.any(rho == 0):
                raise SingularPointError(f"radial power map is singular at its center {list(self.center)}")
            safe = np.where(rho > 0, rho, 1.0)
            u = d / safe[:, None]
            s = np.where(rho > 0, safe ** (self.a - 1.0), 1.0)
            D = s[:, None, None] * (np.eye(n) + (self.a - 1.0) * u[:, :, None] * u[:, None, :])
            log_rho = np.log(safe)
            log_norm = (self.a - 1.0) * log_rho + math.log(max(self.a, 1.0))
            log_J = math.log(self.a) + n * (self.a - 1.0) * log_rho
            nrm, J = np.exp(log_norm), np.exp(log_J)
        elif k == "cusp_map":
            xn = x[:, -1]
            if np.any(xn <= 0):
                raise SingularPointError("cusp map Jacobian is singular for x_n <= 0")
            a, g = self.a, np.array(self.gammas)
            log_xn = np.log(xn)
            # D = x_n**(a-1) * M with M bounded on H_1
            M = np.zeros((m, n, n))
            diag = np.exp(np.outer(log_xn, a * (g - 1.0)))
            idx = np.arange(n - 1)
            M[:, idx, idx] = diag
            M[:, idx, n - 1] = (a * g - 1.0) * (x[:, :-1] / xn[:, None]) * diag
            M[:, n - 1, n - 1] = a
            scale = np.exp((a - 1.0) * log_xn)
            D = scale[:, None, None] * M
            log_norm = (a - 1.0) * log_xn + np.log(operator_norm(M))
            log_J = math.log(a) + (a * self.gamma - n) * log_xn
            nrm, J = np.exp(log_norm), np.exp(log_J)
        elif k == "composition":
            first, second = self.parts
            j1 = first.jacobian(x)
            j2 = second.jacobian(first.evaluate(x))
            D = j2.matrix @ j1.matrix
            nrm = operator_norm(D)
            J = j1.jacobian * j2.jacobian
            log_norm, log_J = _safe_log(nrm), j1.log_abs_jacobian + j2.log_abs_jacobian
        else:
            raise MappingError(f"unknown mapping kind {k!r}")
        sample = JacobianSample(
            point=x, matrix=D, operator_norm=nrm, jacobian=J, adjugate=adjugate(D),
            log_norm=np.asarray(log_norm, dtype=float), log_abs_jacobian=np.asarray(log_J, dtype=float),
        )
        if single:
            return JacobianSample(*(np.asarray(v)[0] for v in (
                sample.point, sample.matrix, sample.operator_norm, sample.jacobian,
                sample.adjugate, sample.log_norm, sample.log_abs_jacobian)))
        return sample

    def has_closed_inverse(self) -> bool:
        if self.kind == "composition":
            return all(p.has_closed_inverse() for p in self.parts)
        return True

    def _closed_inverse(self, y: np.ndarray) -> np.ndarray:
        k = self.kind
        if k == "identity":
            return y.copy()
        if k == "linear":
            return np.linalg.solve(self.A, y.T).T
        if k == "radial_power":
            d = y - self.center
            rho = np.linalg.norm(d, axis=-1, keepdims=True)
            with np.errstate(divide="ignore", invalid="ignore"):
                return self.center + np.where(rho > 0, rho ** (1.0 / self.a - 1.0), 0.0) * d
        if k == "cusp_map":
            yn = y[:, -1:]
            if np.any(yn <= 0):
                raise SingularPointError("cusp map inverse is undefined for y_n <= 0")
            xn = yn ** (1.0 / self.a)
            x = np.empty_like(y)
            x[:, :-1] = y[:, :-1] * xn ** (1.0 - self.a * np.array(self.gammas))
            x[:, -1] = xn[:, 0]
            return x
        return self.parts[0]._closed_inverse(self.parts[1]._closed_inverse(y))

    def inverse(self, y, tol: float = 1e-12, method: str = "auto") -> np.ndarray:
        y, single = self._points(y)
        if method == "newton":
            x0 = np.broadcast_to(_newton_start(self), y.shape).copy()
            x = newton_inverse(self, y, x0, tol)
        else:
            x = self._closed_inverse(y)
            res = np.linalg.norm(self.evaluate(x) - y, axis=-1)
            bad = res >= tol * np.maximum(1.0, np.linalg.norm(y, axis=-1))
            if bad.any():
                x[bad] = newton_inverse(self, y[bad], x[bad], tol)
        return x[0] if single else x

    # serialisation ------------------------------------------------------

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {"kind": self.kind}
        if self.kind == "identity":
            rec["n"] = self.dim
        elif self.kind == "linear":
            rec["A"] = [list(r) for r in self.matrix]
        elif self.kind == "radial_power":
            rec.update(a=self.a, n=self.dim, center=list(self.center))
        elif self.kind == "cusp_map":
            rec.update(a=self.a, gammas=list(self.gammas))
        else:
            rec["parts"] = [p.to_record() for p in self.parts]
        if self.source is not None and self.kind not in ("cusp_map", "composition"):
            rec["source"] = self.source.to_record()
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any], source: DomainSpec | None = None) -> "MappingSpec":
        kind = rec.get("kind")
        allowed = {
            "identity": {"n", "source"},
            "linear": {"A", "source"},
            "radial_power": {"a", "n", "center", "source"},
            "cusp_map": {"a", "gammas"},
            "composition": {"parts"},
        }
        if kind not in allowed:
            raise MappingError(f"unknown mapping kind {kind!r}")
        extra = set(rec) - allowed[kind] - {"kind"}
        if extra:
            raise MappingError(f"{kind} record: unknown keys {sorted(extra)}")
        if "source" in rec:
            source = DomainSpec.from_record(rec["source"])
        if kind == "identity":
            n = rec.get("n", source.dim if source is not None else 2)
            return cls.identity(n, source)
        if kind == "linear":
            return cls.linear(rec["A"], source)
        if kind == "radial_power":
            n = rec.get("n", source.dim if source is not None else 2)
            return cls.radial_power(rec["a"], n, rec.get("center"), source)
        if kind == "cusp_map":
            return cls.cusp_map(rec["a"], rec["gammas"])
        first, second = (cls.from_record(p) for p in rec["parts"])
        if first.source is None and source is not None:
            first = cls.from_record(rec["parts"][0], source)
        return cls.compose(first, second)


def _linear_image(A: np.ndarray, source: DomainSpec) -> DomainSpec | None:
    if source.kind == "box" and np.count_nonzero(A - np.diag(np.diag(A))) == 0:
        c1 = np.diag(A) * np.array(source.lower)
        c2 = np.diag(A) * np.array(source.upper)
        return DomainSpec.box(np.minimum(c1, c2), np.maximum(c1, c2))
    if source.kind == "ball":
        s = np.linalg.svd(A, compute_uv=False)
        if np.allclose(s, s[0]):
            return DomainSpec.ball(A @ np.array(source.center), s[0] * source.radius)
    return None


def _newton_start(m: MappingSpec) -> np.ndarray:
    if m.source is not None:
        lo, hi = m.source.bounding_box()
        start = 0.5 * (lo + hi)
        if m.kind == "cusp_map":
            start = np.full(m.dim, 0.25)
            start[-1] = 0.5
        return start
    return np.full(m.dim, 0.5)


def newton_inverse(m: MappingSpec, y: np.ndarray, x0: np.ndarray, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Damped Newton for phi(x) = y, one point at a time.

    Each step is halved until the residual decreases.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    out = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    for i in range(len(y)):
        x = out[i].copy()
        res = m.evaluate(x) - y[i]
        r = float(np.linalg.norm(res))
        scale = max(1.0, float(np.linalg.norm(y[i])))
        it = 0
        while r >= tol * scale:
            if it >= max_iter:
                raise InverseError(f"Newton inversion did not converge in {max_iter} iterations at y={y[i].tolist()}", r)
            step = np.linalg.solve(m.jacobian(x).matrix, res)
            t = 1.0
            while True:
                cand = x - t * step
                if m.evaluable(cand[None])[0] and (m.source is None or m.source.closure_contains(cand[None])[0]):
                    cres = m.evaluate(cand) - y[i]
                    cr = float(np.linalg.norm(cres))
                    if cr < r:
                        break
                t *= 0.5
                if t < 1e-12:
                    raise InverseError(f"Newton line search stalled at y={y[i].tolist()}", r)
            x, res, r = cand, cres, cr
            it += 1
        out[i] = x
    return out


def evaluate(mapping: MappingSpec, x) -> np.ndarray:
    return mapping.evaluate(x, check=True)


def jacobian(mapping: MappingSpec, x) -> JacobianSample:
    return mapping.jacobian(x, check=True)


def inverse(mapping: MappingSpec, y, tol: float = 1e-12) -> np.ndarray:
    return mapping.inverse(y, tol)


def inverse_mapping(mapping: MappingSpec) -> MappingSpec:
    """The inverse as a zoo member, where the zoo is closed under inversion."""
    k = mapping.kind
    src = mapping.target
    if k == "identity":
        return MappingSpec.identity(mapping.dim, src)
    if k == "linear":
        return MappingSpec.linear(np.linalg.inv(mapping.A), src, mapping.source)
    if k == "radial_power":
        return MappingSpec(
            "radial_power", mapping.dim, a=1.0 / mapping.a, center=mapping.center, source=src, target=mapping.source
        )
    if k == "composition":
        first, second = mapping.parts
        return MappingSpec.compose(inverse_mapping(second), inverse_mapping(first))
    raise MappingError(f"{k} has no inverse inside the mapping zoo")


def finite_distortion_audit(mapping: MappingSpec, points, eps_J: float = EPS_J, eps_D: float = EPS_D) -> DistortionAudit:
    """Count sample points with |J| < eps_J while |D phi| > eps_D."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s = mapping.jacobian(pts)
    bad = (np.abs(s.jacobian) < eps_J) & (s.operator_norm > eps_D)
    return DistortionAudit(points=len(pts), violations=int(bad.sum()), eps_J=eps_J, eps_D=eps_D)

