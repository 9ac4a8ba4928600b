"""A family of neutral-signature metrics driven by one profile function.

For an integer p >= -1 and a profile f(y), the chart is

    (x, y, z_0..z_p, xbar, ybar, zbar_0..zbar_p),   dimension 2p + 6,

and the only nonzero metric components are g(x, x) = -2 F with
F = f(y) + sum_i y^(i+1) z_i, plus the constant hyperbolic pairings
g(x, xbar) = g(y, ybar) = g(z_i, zbar_i) = 1.  Signature (p+3, p+3).

Everything curvature-related about this family is independently computable in
closed form; this module carries those closed forms (as oracles for the jet
engine), a curvature-normalized frame, and the scalar

    alpha = f^(p+3) f^(p+5) / (f^(p+4))^2,

which is exposed through two fully independent routes: the closed form above
and a ratio of iterated-derivative curvature contractions on the engine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .curvature import CurvatureContext
from .metric import MetricSpec

__all__ = [
    "FamilyParams",
    "PositivityError",
    "IllPosedSampleError",
    "build_metric",
    "family_coords",
    "base_point",
    "profile_derivs",
    "complete_curvature_symmetries",
    "oracle_nabla_k_r",
    "oracle_delta",
    "alpha_closed_form",
    "alpha_prime",
    "alpha_via_jacobi",
    "alpha_verdict",
    "Frame",
    "normalize_frame",
    "CurvatureModel",
    "reference_model",
    "quotient_model",
    "model_deviation",
    "frame_model_deviation",
    "model_kernel",
]


class PositivityError(ValueError):
    """Profile derivatives violate the positivity the construction needs."""


class IllPosedSampleError(ValueError):
    """The sampled vectors give contractions too small to divide through."""


@dataclass(frozen=True)
class FamilyParams:
    """p >= -1 and a profile expression in the single variable y."""

    p: int
    profile: ex.Expr

    def __post_init__(self):
        if self.p < -1:
            raise ValueError("p must be >= -1")
        extra = ex.free_vars(self.profile) - {"y"}
        if extra:
            raise ex.UnknownVariableError(sorted(extra)[0], 0)

    @staticmethod
    def from_dict(data: Mapping) -> "FamilyParams":
        return FamilyParams(int(data["p"]), ex.parse(str(data["f"]), ("y",)))

    def to_dict(self) -> dict:
        return {"p": self.p, "f": ex.to_text(self.profile)}


def family_coords(p: int) -> tuple[str, ...]:
    zs = tuple(f"z{i}" for i in range(p + 1))
    return ("x", "y") + zs + ("xbar", "ybar") + tuple(f"zbar{i}" for i in range(p + 1))


def _idx(p: int) -> dict[str, int]:
    return {"x": 0, "y": 1, "xbar": p + 3, "ybar": p + 4}


def build_metric(params: FamilyParams) -> MetricSpec:
    p = params.p
    coords = family_coords(p)
    terms: list[ex.Expr] = [params.profile]
    for i in range(p + 1):
        terms.append(ex.Prod((ex.Pow(ex.Var("y"), i + 1), ex.Var(f"z{i}"))))
    big_f = terms[0] if len(terms) == 1 else ex.Sum(tuple(terms))
    comps: dict[tuple[int, int], ex.Expr] = {
        (0, 0): ex.Prod((ex.Const(-2.0), big_f)),
        (0, p + 3): ex.Const(1.0),
        (1, p + 4): ex.Const(1.0),
    }
    for i in range(p + 1):
        comps[(2 + i, p + 5 + i)] = ex.Const(1.0)
    return MetricSpec(coords, comps, (p + 3, p + 3))


def base_point(params: FamilyParams, y: float, z: Sequence[float] | None = None) -> tuple[float, ...]:
    """Point with the given y and z values; all other coordinates zero."""
    p = params.p
    zv = [0.0] * (p + 1) if z is None else [float(v) for v in z]
    if len(zv) != p + 1:
        raise ValueError(f"need {p + 1} z values, got {len(zv)}")
    return (0.0, float(y), *zv, 0.0, 0.0, *([0.0] * (p + 1)))


def profile_derivs(params: FamilyParams, y: float, n: int) -> np.ndarray:
    """[f(y), f'(y), ..., f^(n)(y)] through one jet evaluation."""
    jet = ex.eval_jet(params.profile, {"y": float(y)}, ("y",), n)
    return np.array([jet.extract((k,)) for k in range(n + 1)])


def _fall(n: int, j: int) -> float:
    out = 1.0
    for t in range(j):
        out *= n - t
    return out


# ------------------------------------------------------------------ oracles
def complete_curvature_symmetries(
    roots: Mapping[tuple[int, ...], float]
) -> dict[tuple[int, ...], float]:
    """Close root components under the pair symmetries of the first four
    slots: antisymmetry in (0,1) and in (2,3), symmetry under pair swap.
    Derivative slots are untouched."""
    out: dict[tuple[int, ...], float] = {}
    for idx, v in roots.items():
        (i, j, k, l), tail = idx[:4], idx[4:]
        images = {}
        for (a, b, c, d), s in (((i, j, k, l), 1.0), ((k, l, i, j), 1.0)):
            for swap_ab in (False, True):
                for swap_cd in (False, True):
                    key = (
                        (b if swap_ab else a),
                        (a if swap_ab else b),
                        (d if swap_cd else c),
                        (c if swap_cd else d),
                    )
                    sign = s * (-1.0 if swap_ab else 1.0) * (-1.0 if swap_cd else 1.0)
                    images[key] = sign
        for key, sign in images.items():
            full = key + tail
            w = sign * v
            prev = out.get(full)
            if prev is not None and prev != w:
                raise ValueError(f"inconsistent symmetry images at {full}")
            out[full] = w
    return {k2: v2 for k2, v2 in out.items() if v2 != 0.0}


def oracle_nabla_k_r(
    params: FamilyParams, point: Sequence[float], k: int
) -> dict[tuple[int, ...], float]:
    """Closed-form level-k components at `point`, independent of the engine."""
    p = params.p
    coords = family_coords(p)
    if len(point) != len(coords):
        raise ValueError("point length does not match family dimension")
    y = float(point[1])
    zv = [float(point[2 + i]) for i in range(p + 1)]
    d = profile_derivs(params, y, k + 2)
    ax, ay = 0, 1

    a_val = d[k + 2]
    for i in range(p + 1):
        if i >= k + 1:
            a_val += _fall(i + 1, k + 2) * y ** (i - k - 1) * zv[i]
    roots: dict[tuple[int, ...], float] = {}
    base = (ax, ay, ay, ax) + (ay,) * k
    if a_val != 0.0:
        roots[base] = a_val
    for i in range(p + 1):
        b_val = _fall(i + 1, k + 1) * (y ** (i - k) if i >= k else 0.0)
        if b_val == 0.0:
            continue
        zi = 2 + i
        roots[(ax, ay, zi, ax) + (ay,) * k] = b_val
        for s in range(k):
            tail = tuple(zi if t == s else ay for t in range(k))
            roots[(ax, ay, ay, ax) + tail] = b_val
    return complete_curvature_symmetries(roots)


def oracle_delta(
    params: FamilyParams,
    point: Sequence[float],
    k: int,
    context: CurvatureContext | None = None,
) -> float:
    """Largest absolute gap between engine and closed-form level-k components."""
    ctx = context or CurvatureContext(build_metric(params), point, k)
    engine = {idx: jet.value() for idx, jet in ctx._level(k).items()}
    oracle = oracle_nabla_k_r(params, point, k)
    delta = 0.0
    for idx in set(engine) | set(oracle):
        delta = max(delta, abs(engine.get(idx, 0.0) - oracle.get(idx, 0.0)))
    return delta


# -------------------------------------------------------------------- alpha
def alpha_closed_form(params: FamilyParams, y: float) -> float:
    p = params.p
    d = profile_derivs(params, y, p + 5)
    a, b, c = d[p + 3], d[p + 4], d[p + 5]
    if a <= 0.0 or b <= 0.0:
        raise PositivityError(
            f"profile needs derivative orders {p + 3} and {p + 4} positive at y={y}"
        )
    return float(a * c / (b * b))


def alpha_prime(params: FamilyParams, y: float) -> float:
    """dalpha/dy in closed form."""
    p = params.p
    d = profile_derivs(params, y, p + 6)
    a, b, c, e = d[p + 3], d[p + 4], d[p + 5], d[p + 6]
    if a <= 0.0 or b <= 0.0:
        raise PositivityError(
            f"profile needs derivative orders {p + 3} and {p + 4} positive at y={y}"
        )
    return float((b * c + a * e) / (b * b) - 2.0 * a * c * c / (b * b * b))


def alpha_via_jacobi(
    params: FamilyParams,
    point: Sequence[float],
    x_vec: Sequence[float] | None = None,
    y_vec: Sequence[float] | None = None,
    context: CurvatureContext | None = None,
    aux: np.ndarray | None = None,
) -> float:
    """alpha from the engine alone, as a ratio of iterated-derivative
    curvature contractions; no profile derivatives involved.

    With J_k(v) the metric dual of nabla^k R(v, Y, Y, . ; Y...Y), the vectors
    J_k(X) for k > p are parallel, and

        alpha = <J_{p+1} X, J_{p+3} X> / <J_{p+2} X, J_{p+2} X>

    for any positive-definite auxiliary product and generic X, Y.  `aux` is
    the Gram matrix of that product (identity when omitted)."""
    p = params.p
    ctx = context or CurvatureContext(build_metric(params), point, p + 3)
    m = ctx.dim
    xv = np.zeros(m) if x_vec is None else np.asarray(x_vec, dtype=float)
    yv = np.zeros(m) if y_vec is None else np.asarray(y_vec, dtype=float)
    if x_vec is None:
        xv[0] = 1.0
    if y_vec is None:
        yv[1] = 1.0
    if xv.shape != (m,) or yv.shape != (m,):
        raise ValueError(f"vectors must have length {m}")
    if aux is None:
        h = np.eye(m)
    else:
        h = np.asarray(aux, dtype=float)
        if h.shape != (m, m):
            raise ValueError(f"aux must be a {m}x{m} Gram matrix")

    def jvec(k: int) -> np.ndarray:
        low = ctx.contract_open(k, [xv, yv, yv, None] + [yv] * k, open_slot=3)
        return ctx.ginv0 @ low

    v1 = jvec(p + 1)
    v2 = jvec(p + 2)
    v3 = jvec(p + 3)
    num = float(v1 @ h @ v3)
    den = float(v2 @ h @ v2)
    scale = float(np.linalg.norm(v1) * np.linalg.norm(v3) * np.linalg.norm(h))
    if den <= 1e-12 * max(scale, 1e-280):
        raise IllPosedSampleError("sample vectors give a vanishing denominator")
    return num / den


def alpha_verdict(values: Sequence[float]) -> str:
    v = np.asarray(values, dtype=float)
    if v.size == 0 or not np.isfinite(v).all():
        return "UNDETERMINED"
    if float(np.var(v)) <= 1e-20:
        return "CONSTANT"
    if float(np.max(v) - np.min(v)) >= 1e-2:
        return "NON-CONSTANT"
    return "UNDETERMINED"


# -------------------------------------------------------------------- frame
@dataclass(frozen=True)
class Frame:
    """Curvature-normalized frame at a point, raw and rescaled.

    Vector order: X, Y, Z_0..Z_p, Xbar, Ybar, Zbar_0..Zbar_p."""

    params: FamilyParams
    point: tuple[float, ...]
    a: np.ndarray
    b: np.ndarray
    eps0: float
    eps1: float
    raw: tuple[np.ndarray, ...]
    rescaled: tuple[np.ndarray, ...]


def normalize_frame(
    params: FamilyParams,
    point: Sequence[float],
    context: CurvatureContext | None = None,
) -> Frame:
    p = params.p
    spec = build_metric(params)
    m = spec.dim
    pt = tuple(float(v) for v in point)
    env = spec.env_at(pt)
    y = env["y"]

    d = profile_derivs(params, y, p + 4)
    if d[p + 4] == 0.0:
        raise PositivityError(f"profile derivative order {p + 4} vanishes at y={y}")
    eps1 = float(d[p + 3] / d[p + 4])
    norm_sq = eps1 ** (p + 3) * float(d[p + 3])
    if norm_sq <= 0.0:
        raise PositivityError(
            f"curvature normalization needs eps1^(p+3) f^(p+3) > 0 at y={y}; got {norm_sq}"
        )
    eps0 = norm_sq ** -0.5

    big_f = d[0] + sum(y ** (i + 1) * env[f"z{i}"] for i in range(p + 1))
    ixb, iyb = p + 3, p + 4
    xvec = np.zeros(m)
    xvec[0] = 1.0
    xvec[ixb] = big_f

    a = np.zeros(max(p + 1, 0))
    bmat = np.zeros((max(p + 1, 0),) * 2)
    if p >= 0:
        ctx = context if context is not None and context.max_deriv >= p else None
        if ctx is None:
            ctx = CurvatureContext(spec, pt, max(p, 0))

        def yvec_with(coeffs: np.ndarray) -> np.ndarray:
            v = np.zeros(m)
            v[1] = 1.0
            for j in range(p + 1):
                v[2 + j] = coeffs[j]
            return v

        # the vanishing conditions are affine in each a_k once a_{k+1..p}
        # are fixed, so one extra probe extracts the exact slope
        for k in range(p, -1, -1):
            def phi(t: float) -> float:
                c = a.copy()
                c[k] = t
                yv = yvec_with(c)
                return ctx.contract(k, [xvec, yv, yv, xvec] + [yv] * k)

            c0 = phi(0.0)
            slope = phi(1.0) - c0
            if slope == 0.0:
                raise IllPosedSampleError(
                    f"curvature contraction cannot determine frame coefficient {k}"
                )
            a[k] = -c0 / slope

        yvec = yvec_with(a)
        mat = np.zeros((p + 1, p + 1))
        for k in range(p + 1):
            for l in range(p + 1):
                ecol = np.zeros(m)
                ecol[2 + l] = 1.0
                mat[k, l] = ctx.contract(k, [xvec, yvec, ecol, xvec] + [yvec] * k)
        # rows of bmat solve sum_l bmat[j, l] mat[k, l] = delta_jk; mat is
        # upper triangular with nonzero diagonal, back-substitute upward
        for j in range(p + 1):
            for k in range(p, -1, -1):
                s = 1.0 if k == j else 0.0
                for l in range(k + 1, p + 1):
                    s -= mat[k, l] * bmat[j, l]
                if mat[k, k] == 0.0:
                    raise IllPosedSampleError(
                        f"degenerate frame normalization at diagonal {k}"
                    )
                bmat[j, k] = s / mat[k, k]
    else:
        yvec = np.zeros(m)
        yvec[1] = 1.0

    zvecs = []
    for i in range(p + 1):
        v = np.zeros(m)
        for l in range(p + 1):
            v[2 + l] = bmat[i, l]
        zvecs.append(v)

    xbar = np.zeros(m)
    xbar[ixb] = 1.0
    ybar = np.zeros(m)
    ybar[iyb] = 1.0
    zbars = []
    if p >= 0:
        bhat = np.linalg.inv(bmat)
        for i in range(p + 1):
            v = np.zeros(m)
            v[iyb] = -float(a @ bhat[:, i])
            for j in range(p + 1):
                v[p + 5 + j] = bhat[j, i]
            zbars.append(v)

    raw = (xvec, yvec, *zvecs, xbar, ybar, *zbars)
    scaled = [eps0 * xvec, eps1 * yvec]
    for i in range(p + 1):
        scaled.append(eps0 ** -2 * eps1 ** -(i + 1) * zvecs[i])
    scaled.append(xbar / eps0)
    scaled.append(ybar / eps1)
    for i in range(p + 1):
        scaled.append(eps0 ** 2 * eps1 ** (i + 1) * zbars[i])
    return Frame(params, pt, a, bmat, eps0, eps1, raw, tuple(scaled))


# -------------------------------------------------------------------- model
@dataclass(frozen=True)
class CurvatureModel:
    """Level-by-level component dictionaries on a q-dimensional space."""

    dim: int
    levels: tuple[Mapping[tuple[int, ...], float], ...]

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1


def reference_model(p: int, k_max: int | None = None) -> CurvatureModel:
    """The universal frame components for the family: levels k <= p + 2 do
    not depend on the profile.  Lives on the span of (X, Y, Z_0..Z_p)."""
    if p < -1:
        raise ValueError("p must be >= -1")
    if k_max is None:
        k_max = p + 2
    if k_max > p + 2:
        raise ValueError(f"reference model is universal only up to level {p + 2}")
    q = p + 3
    levels = []
    for k in range(k_max + 1):
        roots: dict[tuple[int, ...], float] = {}
        if k in (p + 1, p + 2):
            roots[(0, 1, 1, 0) + (1,) * k] = 1.0
        if 0 <= k <= p:
            zi = 2 + k
            roots[(0, 1, zi, 0) + (1,) * k] = 1.0
            for s in range(k):
                tail = tuple(zi if t == s else 1 for t in range(k))
                roots[(0, 1, 1, 0) + tail] = 1.0
        levels.append(complete_curvature_symmetries(roots))
    return CurvatureModel(q, tuple(levels))


def _frame_components(
    ctx: CurvatureContext, k: int, reps: Sequence[np.ndarray]
) -> dict[tuple[int, ...], float]:
    """Transform the sparse level-k tensor into the span of `reps`."""
    q = len(reps)
    pmat = np.asarray(reps, dtype=float)
    cur: dict[tuple[int, ...], float] = {
        idx: jet.value() for idx, jet in ctx._level(k).items() if jet.value() != 0.0
    }
    for s in range(4 + k):
        nxt: dict[tuple[int, ...], float] = {}
        for idx, v in cur.items():
            col = pmat[:, idx[s]]
            for j in range(q):
                w = col[j] * v
                if w == 0.0:
                    continue
                key = idx[:s] + (j,) + idx[s + 1:]
                nxt[key] = nxt.get(key, 0.0) + w
        cur = {k2: v2 for k2, v2 in nxt.items() if v2 != 0.0}
    return cur


def quotient_model(
    params: FamilyParams,
    point: Sequence[float],
    k_max: int | None = None,
    context: CurvatureContext | None = None,
) -> CurvatureModel:
    """Engine curvature contracted onto the rescaled unbarred frame span.

    The barred frame directions insert to zero at every slot, so this is the
    curvature model induced on the quotient by that kernel."""
    p = params.p
    if k_max is None:
        k_max = p + 2
    ctx = context if context is not None and context.max_deriv >= k_max else None
    if ctx is None:
        ctx = CurvatureContext(build_metric(params), point, max(k_max, max(p, 0)))
    frame = normalize_frame(params, point, context=ctx)
    reps = frame.rescaled[: p + 3]
    levels = tuple(_frame_components(ctx, k, reps) for k in range(k_max + 1))
    return CurvatureModel(p + 3, levels)


def model_deviation(got: CurvatureModel, want: CurvatureModel) -> float:
    """Largest absolute component gap across shared levels, union support."""
    if got.dim != want.dim:
        raise ValueError("models live on different dimensions")
    n = min(got.max_level, want.max_level)
    delta = 0.0
    for k in range(n + 1):
        for idx in set(got.levels[k]) | set(want.levels[k]):
            delta = max(
                delta,
                abs(got.levels[k].get(idx, 0.0) - want.levels[k].get(idx, 0.0)),
            )
    return float(delta)


def frame_model_deviation(
    params: FamilyParams,
    point: Sequence[float],
    k_max: int | None = None,
    context: CurvatureContext | None = None,
) -> float:
    """How far the engine frame components sit from the universal model."""
    p = params.p
    if k_max is None:
        k_max = p + 2
    got = quotient_model(params, point, k_max, context)
    want = reference_model(p, min(k_max, p + 2))
    return model_deviation(got, want)


def model_kernel(
    ctx: CurvatureContext, k_max: int, rank_tol: float = 1e-12
) -> np.ndarray:
    """Orthonormal basis (columns) of the joint insertion kernel of levels
    0..k_max: vectors giving zero in every slot of every component."""
    m = ctx.dim
    rows: dict[tuple, np.ndarray] = {}
    for k in range(k_max + 1):
        for idx, jet in ctx._level(k).items():
            v = jet.value()
            if v == 0.0:
                continue
            for s in range(4 + k):
                key = (k, s, idx[:s] + idx[s + 1:])
                row = rows.get(key)
                if row is None:
                    row = np.zeros(m)
                    rows[key] = row
                row[idx[s]] += v
    if not rows:
        return np.eye(m)
    mat = np.array(list(rows.values()))
    _u, sig, vh = np.linalg.svd(mat)
    rank = int(np.sum(sig > rank_tol * sig[0]))
    return vh[rank:].T
