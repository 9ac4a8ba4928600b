"""Command-line front end.

Three subcommands share one metric-loading path:

  curvature   sparse listing of the level-k curvature tensor at a point
  alpha       grid sweep of the invariant ratio with a constancy verdict
  check       named property suite with PASS / FAIL / SKIP per check

Exit codes: 0 success, 1 failed check, 2 bad input, 3 numeric failure.
Output is deterministic for a fixed argument list (seeded sampling, repr
floats, sorted listings); CSV bodies are LF-terminated with a header row
restated in a `# schema:` comment.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from . import family as fam
from . import geodesics as geo
from . import invariants as inv
from .curvature import (
    CurvatureContext,
    DegeneratePlaneError,
    jacobi_operator,
    skew_curvature_operator,
)
from .jets import JetOrderError, NonFiniteError
from .metric import MetricSpec, SignatureError, SingularMetricError, load_metric

__all__ = ["main", "build_parser"]

MAX_K = 8
CHECK_SAMPLES = 50


class CliInputError(ValueError):
    """Bad command-line input; maps to exit code 2."""


_NUMERIC_ERRORS = (
    NonFiniteError,
    SingularMetricError,
    SignatureError,
    JetOrderError,
    geo.StepCollapseError,
    geo.TriangularStructureError,
    fam.IllPosedSampleError,
    DegeneratePlaneError,
    np.linalg.LinAlgError,
    FloatingPointError,
    OverflowError,
    ZeroDivisionError,
)

_INPUT_ERRORS = (
    CliInputError,
    ex.ParseError,
    fam.PositivityError,
    inv.CapsExceededError,
)


# ------------------------------------------------------------------ loading
@dataclass(frozen=True)
class LoadedMetric:
    spec: MetricSpec
    params: fam.FamilyParams | None  # set when the metric is a family member
    label: str


def _parse_family(text: str) -> fam.FamilyParams:
    m = re.fullmatch(r"\s*p\s*=\s*(-?\d+)\s*,\s*f\s*=\s*(.+)", text)
    if m is None:
        raise CliInputError(f"--family must look like p=<int>,f=<expr>, got {text!r}")
    try:
        profile = ex.parse(m.group(2), ("y",))
    except ex.ParseError as err:
        raise CliInputError(f"bad profile expression: {err}") from None
    try:
        return fam.FamilyParams(int(m.group(1)), profile)
    except ValueError as err:
        raise CliInputError(str(err)) from None


def _load_metric(args: argparse.Namespace) -> LoadedMetric:
    if args.family is not None:
        params = _parse_family(args.family)
        spec = fam.build_metric(params)
        label = f"family p={params.p} f={ex.to_text(params.profile)}"
        return LoadedMetric(spec, params, label)
    path = Path(args.spec)
    try:
        spec = load_metric(path)
    except FileNotFoundError:
        raise CliInputError(f"spec file not found: {path}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
        raise CliInputError(f"bad spec file {path}: {err}") from None
    return LoadedMetric(spec, None, f"spec {path}")


def _parse_point(text: str, dim: int) -> tuple[float, ...]:
    parts = [s.strip() for s in text.split(",")]
    try:
        vals = tuple(float(s) for s in parts)
    except ValueError:
        raise CliInputError(f"--point must be comma-separated numbers, got {text!r}") from None
    if len(vals) != dim:
        raise CliInputError(f"--point needs {dim} coordinates, got {len(vals)}")
    return vals


def _parse_grid(text: str) -> tuple[str, np.ndarray]:
    m = re.fullmatch(r"\s*([A-Za-z_]\w*)\s*=\s*([^:]+):([^:]+):(\d+)\s*", text)
    if m is None:
        raise CliInputError(f"--grid must look like var=lo:hi:n, got {text!r}")
    try:
        lo, hi = float(m.group(2)), float(m.group(3))
    except ValueError:
        raise CliInputError(f"bad grid bounds in {text!r}") from None
    n = int(m.group(4))
    if n < 1:
        raise CliInputError("grid needs at least one sample")
    return m.group(1), np.linspace(lo, hi, n)


def _emit(lines: Sequence[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------- curvature
def cmd_curvature(args: argparse.Namespace) -> int:
    loaded = _load_metric(args)
    spec = loaded.spec
    if args.point is None:
        raise CliInputError("curvature needs --point")
    point = _parse_point(args.point, spec.dim)
    k = args.k
    if not 0 <= k <= MAX_K:
        raise CliInputError(f"--k must be in 0..{MAX_K}")

    ctx = CurvatureContext(spec, point, max_deriv=k)
    comp = ctx.curvature(k).components
    cols = ["i1", "i2", "i3", "i4"] + [f"d{j + 1}" for j in range(k)] + ["value"]
    lines = [
        "# jetgeo curvature",
        f"# metric: {loaded.label}",
        f"# point: {','.join(repr(float(v)) for v in point)}",
        f"# k: {k}",
        f"# schema: {','.join(cols)}",
        ",".join(cols),
    ]
    if comp:
        for idx in sorted(comp):
            names = [spec.coords[i] for i in idx]
            lines.append(",".join(names + [repr(float(comp[idx]))]))
    else:
        lines.append("# no non-zero components")
    if loaded.params is not None:
        delta = fam.oracle_delta(loaded.params, point, k, context=ctx)
        lines.append(f"# oracle_max_delta: {repr(float(delta))}")
    _emit(lines, args.out)
    return 0


# ------------------------------------------------------------------- alpha
def cmd_alpha(args: argparse.Namespace) -> int:
    loaded = _load_metric(args)
    if loaded.params is None:
        raise CliInputError("alpha needs --family (the ratio uses the profile)")
    params = loaded.params
    if args.grid is None:
        raise CliInputError("alpha needs --grid y=lo:hi:n")
    var, ys = _parse_grid(args.grid)
    if var != "y":
        raise CliInputError(f"alpha sweeps the y coordinate, got grid over {var!r}")

    rows = []
    jac_delta = 0.0
    for y in ys:
        try:
            a = fam.alpha_closed_form(params, float(y))
            ap = fam.alpha_prime(params, float(y))
        except fam.PositivityError as err:
            raise CliInputError(str(err)) from None
        aj = fam.alpha_via_jacobi(params, fam.base_point(params, float(y)))
        jac_delta = max(jac_delta, abs(aj - a))
        rows.append((float(y), a, ap))

    lines = [
        "# jetgeo alpha",
        f"# metric: {loaded.label}",
        "# schema: y,alpha,alpha_prime",
        "y,alpha,alpha_prime",
    ]
    for y, a, ap in rows:
        lines.append(f"{repr(y)},{repr(a)},{repr(ap)}")
    lines.append(f"# jacobi_max_delta: {repr(float(jac_delta))}")
    lines.append(f"# verdict: {fam.alpha_verdict([r[1] for r in rows])}")
    _emit(lines, args.out)
    return 0


# ------------------------------------------------------------------- check
@dataclass
class CheckResult:
    name: str
    status: str  # PASS | FAIL | SKIP | FAIL-PRECONDITION
    detail: str

    def line(self) -> str:
        return f"{self.name}: {self.status} ({self.detail})"


def _sym_deviation(comp, level: int) -> float:
    """Largest violation of the algebraic identities at one level."""
    worst = 0.0
    for idx, v in comp.items():
        a, b, c, d = idx[:4]
        rest = idx[4:]
        worst = max(worst, abs(v + comp.get((b, a, c, d) + rest, 0.0)))
        worst = max(worst, abs(v + comp.get((a, b, d, c) + rest, 0.0)))
        worst = max(worst, abs(v - comp.get((c, d, a, b) + rest, 0.0)))
        cyc = (
            v
            + comp.get((b, c, a, d) + rest, 0.0)
            + comp.get((c, a, b, d) + rest, 0.0)
        )
        worst = max(worst, abs(cyc))
    return float(worst)


def _bianchi2_deviation(comp1) -> float:
    worst = 0.0
    for (a, b, c, d, e), v in comp1.items():
        s = (
            v
            + comp1.get((a, b, d, e, c), 0.0)
            + comp1.get((a, b, e, c, d), 0.0)
        )
        worst = max(worst, abs(s))
    return float(worst)


def _check_suite(loaded: LoadedMetric, point, seed: int, tol: float) -> list[CheckResult]:
    spec = loaded.spec
    params = loaded.params
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []
    geo_tol = max(tol, 1e-9)

    max_deriv = 2 if params is None else max(2, params.p + 2)
    ctx = CurvatureContext(spec, point, max_deriv=max_deriv)
    comp0 = ctx.curvature(0).components
    comp1 = ctx.curvature(1).components
    scale = max([abs(v) for v in comp0.values()] + [1.0])

    dev = max(_sym_deviation(comp0, 0), _sym_deviation(comp1, 1))
    ok = dev <= tol * scale
    results.append(
        CheckResult("symmetry", "PASS" if ok else "FAIL", f"max deviation {repr(dev)}")
    )

    dev = _bianchi2_deviation(comp1)
    ok = dev <= tol * scale
    results.append(
        CheckResult("bianchi_2", "PASS" if ok else "FAIL", f"max deviation {repr(dev)}")
    )

    if params is not None:
        cat = inv.catalog(3, 2)
        schemas = cat.schemas + inv.random_schemas(100, 3, 2, seed)
        inv_scale = scale
        for k in range(1, 3):
            vals = [abs(j.value()) for j in ctx._level(k).values()]
            inv_scale = max([inv_scale] + vals)
        worst = 0.0
        for schema in schemas:
            worst = max(worst, abs(inv.evaluate(schema, spec, point, context=ctx)))
        ok = worst <= tol * inv_scale
        results.append(
            CheckResult(
                "weyl_vanishing",
                "PASS" if ok else "FAIL",
                f"{len(schemas)} schemas, max |value| {repr(worst)}",
            )
        )

        dev = float(np.max(np.abs(ctx.ricci())))
        ok = dev <= tol * scale
        results.append(
            CheckResult("ricci_flat", "PASS" if ok else "FAIL", f"max |Ric| {repr(dev)}")
        )

        worst = 0.0
        planes = 0
        for _ in range(CHECK_SAMPLES):
            xi = rng.standard_normal(spec.dim)
            jac = jacobi_operator(ctx, xi)
            worst = max(worst, float(np.max(np.abs(jac @ jac))))
            if planes < CHECK_SAMPLES:
                try:
                    sk = skew_curvature_operator(
                        ctx, rng.standard_normal(spec.dim), rng.standard_normal(spec.dim)
                    )
                except DegeneratePlaneError:
                    continue
                planes += 1
                worst = max(worst, float(np.max(np.abs(sk @ sk))))
        ok = worst <= tol * max(scale * scale, 1.0)
        results.append(
            CheckResult(
                "nilpotency", "PASS" if ok else "FAIL", f"max squared-operator entry {repr(worst)}"
            )
        )

        try:
            dev = fam.frame_model_deviation(params, point, context=ctx)
            ok = dev <= max(tol, 1e-9)
            results.append(
                CheckResult(
                    "frame_model", "PASS" if ok else "FAIL", f"max component gap {repr(dev)}"
                )
            )
        except fam.PositivityError as err:
            results.append(CheckResult("frame_model", "FAIL-PRECONDITION", str(err)))
    else:
        vals = []
        for name in ("tau", "r2", "ric2"):
            v = inv.evaluate(inv.NAMED_SCHEMAS[name], spec, point, context=ctx)
            vals.append(f"{name}={repr(float(v))}")
        finite = all(np.isfinite(inv.evaluate(inv.NAMED_SCHEMAS[n], spec, point, context=ctx))
                     for n in ("tau", "r2", "ric2"))
        results.append(
            CheckResult(
                "weyl_control",
                "PASS" if finite else "FAIL",
                "expected-nonzero control: " + ", ".join(vals),
            )
        )
        results.append(CheckResult("ricci_flat", "SKIP", "family metrics only"))
        results.append(CheckResult("nilpotency", "SKIP", "family metrics only"))
        results.append(CheckResult("frame_model", "SKIP", "family metrics only"))

    rep = geo.triangular_report(spec, point)
    v0 = 0.5 * rng.standard_normal(spec.dim)
    prob = geo.GeodesicProblem(spec, tuple(point), velocity=tuple(v0), t_end=1.0)
    rk = geo.solve_geodesic(prob, method="rk")
    en = geo.energy_along(spec, rk)
    drift = float(np.max(np.abs(en - en[0])))
    detail = [f"rk energy drift {repr(drift)}"]
    ok = drift <= geo_tol * max(abs(en[0]), 1.0)
    if rep.ok:
        tri = geo.solve_geodesic(prob, method="triangular")
        gap = float(np.max(np.abs(tri.u - rk.u)))
        detail.append(f"route gap {repr(gap)}")
        ok = ok and gap <= geo_tol
        target = tri.u[-1]
        back = geo.exp_map(spec, point, geo.log_map(spec, point, target))
        rt = float(np.max(np.abs(back - target)))
        detail.append(f"exp(log) gap {repr(rt)}")
        ok = ok and rt <= geo_tol
    else:
        detail.append("direct route skipped: " + "; ".join(rep.blocking))
    results.append(
        CheckResult("geodesic_roundtrip", "PASS" if ok else "FAIL", ", ".join(detail))
    )
    return results


def cmd_check(args: argparse.Namespace) -> int:
    loaded = _load_metric(args)
    spec = loaded.spec
    if args.point is not None:
        point = _parse_point(args.point, spec.dim)
    elif loaded.params is not None:
        point = fam.base_point(loaded.params, 0.0)
    else:
        raise CliInputError("check needs --point for a non-family spec")

    results = _check_suite(loaded, point, args.seed, args.tol)
    lines = [
        "# jetgeo check",
        f"# metric: {loaded.label}",
        f"# point: {','.join(repr(float(v)) for v in point)}",
        f"# seed: {args.seed}",
        f"# tol: {repr(args.tol)}",
    ]
    lines += [r.line() for r in results]
    failed = any(r.status in ("FAIL", "FAIL-PRECONDITION") for r in results)
    lines.append(f"RESULT: {'FAIL' if failed else 'PASS'}")
    _emit(lines, args.out)
    return 1 if failed else 0


# ------------------------------------------------------------------ parser
def _add_common(p: argparse.ArgumentParser, point: bool, grid: bool, k: bool) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--family", metavar="p=<int>,f=<expr>", help="family parameters")
    g.add_argument("--spec", metavar="FILE", help="metric spec JSON file")
    if point:
        p.add_argument("--point", metavar="c1,...,cn", help="evaluation point")
    if grid:
        p.add_argument("--grid", metavar="var=lo:hi:n", help="sweep grid")
    if k:
        p.add_argument("--k", type=int, default=0, metavar="INT",
                       help=f"covariant-derivative order (0..{MAX_K})")
    p.add_argument("--seed", type=int, default=0, metavar="INT",
                   help="seed for randomized sampling")
    p.add_argument("--out", metavar="FILE", help="write output here instead of stdout")
    p.add_argument("--tol", type=float, default=1e-10, metavar="FLOAT",
                   help="tolerance for algebraic checks (integration checks floor at 1e-9)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jetgeo",
        description="Curvature tables, invariant sweeps, and property checks "
        "for symbolic metric specs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curvature", help="sparse level-k curvature listing at a point")
    _add_common(p, point=True, grid=False, k=True)
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser("alpha", help="invariant-ratio sweep over a y grid")
    _add_common(p, point=False, grid=True, k=False)
    p.set_defaults(func=cmd_alpha)

    p = sub.add_parser("check", help="named property suite")
    _add_common(p, point=True, grid=False, k=False)
    p.set_defaults(func=cmd_check)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as err:
        print(f"jetgeo: input error: {err}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as err:
        print(f"jetgeo: numeric failure: {type(err).__name__}: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
