"""Config-driven experiment runner and report emission.

    sobcomp run <config.json> [--dotted.key value ...]
    sobcomp full-suite [--out DIR]
    sobcomp print-schema

Exit status: 0 all checks passed (or report-only task), 1 a check failed,
2 numerical non-convergence, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from .capacity import CapacityError, SolverOptions, condenser_capacity
from .distortion import ExponentPair, distortion_norm
from .geometry import CondenserSpec, DomainSpec, SamplingError
from .mappings import InverseError, MappingSpec
from .quadrature import QuadraturePlan, QuadratureError
from .suite import full_suite
from .theorems import (
    VerdictReport,
    bump_family,
    cusp_admissible_range,
    dual_exponent,
    verify_capacity_inequality,
    verify_cusp_theorem,
    verify_duality,
    verify_holder,
    verify_operator_inequality,
)

EXIT_OK, EXIT_FAILED, EXIT_NONCONVERGED, EXIT_CONFIG = 0, 1, 2, 3

TASKS = ("distortion", "capacity", "verify-operator", "verify-capacity", "verify-duality", "verify-holder",
         "cusp-sweep", "full-suite")


# ------------------------------------------------------------ configuration


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ExponentsConfig(_Strict):
    p: float = 2.0
    q: float | None = None
    n: int | None = None


class QuadratureConfig(_Strict):
    scheme: Literal["tensor_grid", "monte_carlo"] = "tensor_grid"
    resolution: int = 32
    grading: float | None = None
    seed: int = 0
    refinement_levels: int = 3

    def plan(self) -> QuadraturePlan:
        return QuadraturePlan(self.scheme, self.resolution, self.grading, self.seed, self.refinement_levels)


class CapacityConfig(_Strict):
    levels: int = 3
    resolution: int = 257
    epsilon_schedule: list[float] = Field(default_factory=lambda: [10.0**-k for k in range(2, 9)])
    grad_tol: float = 1e-8
    max_iters: int = 2000

    def options(self) -> SolverOptions:
        return SolverOptions(self.levels, self.resolution, tuple(self.epsilon_schedule), self.grad_tol,
                             self.max_iters)


class OutputConfig(_Strict):
    path: str = "sobcomp-out"
    formats: list[Literal["json", "csv"]] = Field(default_factory=lambda: ["json"])


class SweepConfig(_Strict):
    gammas: list[float] = Field(default_factory=lambda: [2.0])
    a_values: list[float] | None = None
    count: int = 10
    a_min: float | None = None
    a_max: float | None = None


class HolderConfig(_Strict):
    pair_count: int = 200
    region: dict | None = None

    @field_validator("region")
    @classmethod
    def _region(cls, v):
        if v is not None:
            DomainSpec.from_record(v)
        return v


class FunctionsConfig(_Strict):
    coordinate_count: int = 20
    mixture_count: int = 80


class ExperimentConfig(_Strict):
    """One experiment; every field except ``task`` has a default."""

    task: Literal["distortion", "capacity", "verify-operator", "verify-capacity", "verify-duality",
                  "verify-holder", "cusp-sweep", "full-suite"]
    mapping: dict | None = None
    domain: dict | None = None
    condensers: list[dict] | None = None
    exponents: ExponentsConfig = Field(default_factory=ExponentsConfig)
    quadrature: QuadratureConfig | None = None
    capacity: CapacityConfig = Field(default_factory=CapacityConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    holder: HolderConfig = Field(default_factory=HolderConfig)
    functions: FunctionsConfig = Field(default_factory=FunctionsConfig)
    criteria: list[int] | None = None
    output: OutputConfig = Field(default_factory=OutputConfig)
    seed: int = 0

    @field_validator("mapping")
    @classmethod
    def _mapping(cls, v):
        if v is not None:
            MappingSpec.from_record(v)
        return v

    @field_validator("domain")
    @classmethod
    def _domain(cls, v):
        if v is not None:
            DomainSpec.from_record(v)
        return v

    @field_validator("condensers")
    @classmethod
    def _condensers(cls, v):
        for rec in v or []:
            CondenserSpec.from_record(rec)
        return v

    @field_validator("criteria")
    @classmethod
    def _criteria(cls, v):
        if v is not None and any(not 1 <= k <= 10 for k in v):
            raise ValueError("criteria are numbered 1 to 10")
        return v

    # derived objects ----------------------------------------------------

    def domain_spec(self) -> DomainSpec:
        if self.domain is not None:
            return DomainSpec.from_record(self.domain)
        n = self.exponents.n or 2
        return DomainSpec.unit_box(n)

    def mapping_spec(self) -> MappingSpec:
        if self.mapping is None:
            dom = self.domain_spec()
            return MappingSpec.identity(dom.dim, dom)
        if self.domain is not None:
            src = DomainSpec.from_record(self.domain)
        else:
            src = DomainSpec.unit_box(int(self.mapping.get("n", self.exponents.n or 2)))
        return MappingSpec.from_record(self.mapping, src)

    def exponent_pair(self, n: int) -> ExponentPair:
        e = self.exponents
        return ExponentPair.of(e.p, e.q, e.n or n)

    def plan(self, default: QuadraturePlan | None = None) -> QuadraturePlan:
        if self.quadrature is None:
            return default or QuadraturePlan()
        return self.quadrature.plan()


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``--a.b value`` / ``--a.b=value`` pairs; values parse as JSON when possible."""
    out = json.loads(json.dumps(raw))
    i = 0
    while i < len(overrides):
        tok = overrides[i]
        if not tok.startswith("--"):
            raise ValueError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, text = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(overrides):
                raise ValueError(f"missing value for --{key}")
            text = overrides[i + 1]
            i += 2
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return out


def load_config(path: str | Path, overrides: list[str] = ()) -> ExperimentConfig:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object")
    return ExperimentConfig.model_validate(apply_overrides(raw, list(overrides)))


# ------------------------------------------------------------ running


def _report(config: ExperimentConfig, results: dict, checks: list[VerdictReport], wall_ms: float,
            node_counts: dict | None = None) -> dict:
    return {
        "toolkit_version": __version__,
        "config": config.model_dump(mode="json"),
        "results": results,
        "checks": [c.to_record() for c in checks],
        "meta": {"seed": config.seed, "wall_time_ms": wall_ms, "node_counts": node_counts or {}},
    }


def _default_condensers(target: DomainSpec) -> list[CondenserSpec]:
    lo, hi = target.bounding_box()
    c = 0.5 * (lo + hi)
    if target.kind == "ball":
        c = np.array(target.center)
    half = 0.5 * float(np.min(hi - lo))
    return [CondenserSpec.ring(c, 0.3 * half, 0.9 * half, target)]


def _sweep_values(config: ExperimentConfig, p: float, q: float) -> list[float]:
    s = config.sweep
    if s.a_values is not None:
        return list(s.a_values)
    n = len(s.gammas) + 1
    rng = cusp_admissible_range(p, q, sum(s.gammas) + 1, n)
    if rng.empty and (s.a_min is None or s.a_max is None):
        raise ValueError(f"admissible range for p={p}, q={q} is empty; give sweep.a_values or a_min/a_max")
    lo = s.a_min if s.a_min is not None else rng.lo + 0.03 * (rng.hi - rng.lo)
    hi = s.a_max if s.a_max is not None else rng.hi - 0.03 * (rng.hi - rng.lo)
    return np.linspace(lo, hi, s.count).tolist()


def run(config: ExperimentConfig) -> tuple[dict, int]:
    """Execute one experiment; returns the report and the exit status."""
    t0 = time.perf_counter()
    checks: list[VerdictReport] = []
    results: dict[str, Any] = {"task": config.task}
    nodes: dict[str, Any] = {}
    report_only = False
    converged = True
    try:
        task = config.task
        if task == "full-suite":
            outcomes = full_suite(config.criteria)
            for o in outcomes:
                checks.extend(o.checks)
            results["criteria"] = [o.to_record() for o in outcomes]
            results["all_passed"] = all(o.passed for o in outcomes)
            failed_criteria = [o.number for o in outcomes if not o.passed]
            results["failed_criteria"] = failed_criteria
        elif task == "distortion":
            m = config.mapping_spec()
            dom = config.domain_spec() if config.domain is not None else m.source
            rep = distortion_norm(m, dom, config.exponent_pair(m.dim), config.plan())
            results["distortion"] = rep.to_record()
            nodes["quadrature"] = rep.quadrature.nodes_used
            converged = rep.converged
            report_only = True
        elif task == "capacity":
            dom = config.domain_spec()
            conds = ([CondenserSpec.from_record(c) for c in config.condensers] if config.condensers
                     else _default_condensers(dom))
            p = config.exponents.p
            out = []
            for k, cond in enumerate(conds):
                res = condenser_capacity(cond, p, opts=config.capacity.options())
                out.append(res.to_record())
                converged &= res.converged
                if "csv" in config.output.formats:
                    path = Path(config.output.path)
                    path.mkdir(parents=True, exist_ok=True)
                    res.extremal.to_csv(path / f"extremal_{k}.csv")
            results["capacities"] = out
            nodes["grid"] = config.capacity.options().level_resolutions()
            report_only = True
        elif task == "verify-operator":
            m = config.mapping_spec()
            fns = bump_family(m.target, config.seed, config.functions.coordinate_count,
                              config.functions.mixture_count)
            checks.append(verify_operator_inequality(m, config.exponent_pair(m.dim), fns, config.plan()))
        elif task == "verify-capacity":
            m = config.mapping_spec()
            conds = ([CondenserSpec.from_record(c) for c in config.condensers] if config.condensers
                     else _default_condensers(m.target))
            checks.append(verify_capacity_inequality(m, config.exponent_pair(m.dim), conds, config.plan(),
                                                     config.capacity.options()))
        elif task == "verify-duality":
            m = config.mapping_spec()
            e = config.exponent_pair(m.dim)
            results["dual_exponents"] = {"p_dual": dual_exponent(e.p, m.dim), "q_dual": dual_exponent(e.q, m.dim)}
            checks.append(verify_duality(m, e, config.plan()))
        elif task == "verify-holder":
            m = config.mapping_spec()
            region = DomainSpec.from_record(config.holder.region) if config.holder.region else None
            checks.append(verify_holder(m, config.exponent_pair(m.dim), config.holder.pair_count, config.seed,
                                        region=region))
        elif task == "cusp-sweep":
            e = config.exponents
            p, q = e.p, (e.q if e.q is not None else e.p)
            a_values = _sweep_values(config, p, q)
            plan = config.plan(None) if config.quadrature is not None else None
            checks.extend(verify_cusp_theorem(a, config.sweep.gammas, p, q, plan) for a in a_values)
            results["a_values"] = a_values
            results["K"] = [c.lhs for c in checks]
    except (QuadratureError, CapacityError, InverseError, SamplingError, ArithmeticError) as exc:
        results["error"] = f"{type(exc).__name__}: {exc}"
        report = _report(config, results, checks, 1000 * (time.perf_counter() - t0), nodes)
        return report, EXIT_NONCONVERGED
    except ValueError as exc:
        results["error"] = f"{type(exc).__name__}: {exc}"
        report = _report(config, results, checks, 1000 * (time.perf_counter() - t0), nodes)
        return report, EXIT_CONFIG
    report = _report(config, results, checks, 1000 * (time.perf_counter() - t0), nodes)
    converged &= all(c.converged for c in checks)
    if not converged:
        return report, EXIT_NONCONVERGED
    if report_only or all(c.passed for c in checks):
        if config.task == "full-suite" and not results["all_passed"]:
            return report, EXIT_FAILED
        return report, EXIT_OK
    return report, EXIT_FAILED


# ------------------------------------------------------------ emission


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps_report(report: dict) -> str:
    """UTF-8 JSON with keys in construction order and shortest round-trip floats."""
    return json.dumps(_clean(report), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


CSV_FIELDS = ["index", "theorem_id", "lhs", "rhs", "margin", "passed", "tolerance", "converged", "label", "notes"]


def _fmt(x) -> str:
    x = _clean(x)
    return repr(x) if isinstance(x, float) else str(x)


def emit_report(report: dict, formats, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = out / "report.json"
        path.write_text(dumps_report(report), encoding="utf-8")
        written.append(path)
    if "csv" in formats:
        path = out / "checks.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_FIELDS)
            for i, c in enumerate(report["checks"]):
                label = c["details"].get("a", "") if isinstance(c.get("details"), dict) else ""
                w.writerow([i, c["theorem_id"], _fmt(c["lhs"]), _fmt(c["rhs"]), _fmt(c["margin"]), c["passed"],
                            _fmt(c["tolerance"]), c["converged"], _fmt(label) if label != "" else "",
                            "; ".join(c["notes"])])
        written.append(path)
    return written


def verdict_table(report: dict) -> str:
    rows = []
    res = report["results"]
    if "distortion" in res:
        rows.append(f"K_pq = {_fmt(res['distortion']['K_pq'])}")
    for k, cap in enumerate(res.get("capacities", [])):
        rows.append(f"capacity[{k}] = {_fmt(cap['value'])}")
    if "criteria" in res:
        for crit in res["criteria"]:
            rows.append(f"criterion {crit['criterion']:>2}  {'PASS' if crit['passed'] else 'FAIL'}  {crit['title']}")
    for c in report["checks"]:
        rows.append(f"  {c['theorem_id']:<28} {'pass' if c['passed'] else 'FAIL'}  "
                    f"lhs={_fmt(c['lhs'])} rhs={_fmt(c['rhs'])}")
    return "\n".join(rows)


# ------------------------------------------------------------ entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sobcomp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config; --dotted.key value overrides config entries")
    r.add_argument("config")
    fs = sub.add_parser("full-suite", help="run the complete acceptance matrix")
    fs.add_argument("--out", default="sobcomp-out")
    fs.add_argument("--formats", default="json,csv")
    sub.add_parser("print-schema", help="print the JSON schema of the experiment config")
    return ap


def main(argv: list[str] | None = None) -> int:
    args, extra = _parser().parse_known_args(argv)
    if args.command == "print-schema":
        if extra:
            print(f"unexpected arguments: {extra}", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps(ExperimentConfig.model_json_schema(), indent=2))
        return EXIT_OK
    try:
        if args.command == "full-suite":
            if extra:
                raise ValueError(f"unexpected arguments: {extra}")
            formats = [f for f in args.formats.split(",") if f]
            config = ExperimentConfig.model_validate(
                {"task": "full-suite", "output": {"path": args.out, "formats": formats}})
        else:
            config = load_config(args.config, extra)
    except ValidationError as exc:
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            print(f"invalid config: {loc}: {err['msg']}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report, status = run(config)
    emit_report(report, config.output.formats, config.output.path)
    print(verdict_table(report))
    if "error" in report["results"]:
        print(report["results"]["error"], file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
