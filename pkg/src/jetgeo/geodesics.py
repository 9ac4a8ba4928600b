"""Geodesics through two independent routes.

Route one is standard adaptive Runge-Kutta on the first-order system.  Route
two exploits structural triangularity: when every coordinate is either free
(no force term at all) or forced only by free coordinates, the free ones are
exactly affine in t and the forced ones are plain integrals

    u_c(t) = u_c(0) + v_c(0) t - int_0^t (t - r) G_c(r) dr,

with G_c the Christoffel force evaluated along the known affine part; the
two-point problem on [0, 1] closes the same way with

    v_c(0) = u_c(1) - u_c(0) + int_0^1 (1 - r) G_c(r) dr.

The structural check is conservative on the symbolic side (free-variable
sets of the metric components) and numeric on the inverse-metric side
(nonzero pattern and constancy probed at jittered points).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import expr as ex
from .jets import jet_space
from .metric import MetricSpec

__all__ = [
    "GeodesicProblem",
    "Trajectory",
    "ChristoffelPointEvaluator",
    "StepCollapseError",
    "TriangularStructureError",
    "TriangularReport",
    "triangular_report",
    "integrate_ivp",
    "triangular_ivp",
    "triangular_bvp",
    "solve_geodesic",
    "exp_map",
    "log_map",
    "energy_along",
    "adaptive_simpson",
    "trajectory_csv",
]


class StepCollapseError(RuntimeError):
    """The adaptive integrator failed to reach the end of the interval."""


class TriangularStructureError(ValueError):
    """The metric is not structurally triangular for the direct solver."""


@dataclass(frozen=True)
class Trajectory:
    """Sampled geodesic: times (n,), positions (n, m), velocities (n, m)."""

    t: np.ndarray
    u: np.ndarray
    du: np.ndarray


@dataclass(frozen=True)
class GeodesicProblem:
    """Initial-value (velocity given) or two-point (target given) problem."""

    spec: MetricSpec
    start: tuple[float, ...]
    velocity: tuple[float, ...] | None = None
    target: tuple[float, ...] | None = None
    t_end: float = 1.0

    def __post_init__(self):
        if (self.velocity is None) == (self.target is None):
            raise ValueError("give exactly one of velocity or target")
        m = self.spec.dim
        for name in ("start", "velocity", "target"):
            val = getattr(self, name)
            if val is not None:
                if len(val) != m:
                    raise ValueError(f"{name} must have length {m}")
                object.__setattr__(self, name, tuple(float(v) for v in val))
        if self.target is not None and self.t_end != 1.0:
            raise ValueError("two-point problems are posed on [0, 1]")
        if self.t_end <= 0.0:
            raise ValueError("t_end must be positive")


class ChristoffelPointEvaluator:
    """Pointwise geodesic force for a metric.

    Keeps the structurally nonzero first-kind triples; each call evaluates
    order-1 jets of the varying metric entries and solves g acc = -w with
    w_d = sum over velocities of du^a du^b Gamma_abd."""

    def __init__(self, spec: MetricSpec):
        self.spec = spec
        m = spec.dim
        self.active = spec.active_vars
        act_pos = {v: i for i, v in enumerate(self.active)}
        self._act_idx = {spec.coords.index(v): act_pos[v] for v in self.active}
        # Coefficient slot of each first derivative in an order-1 jet; the
        # graded-lex layout does not follow variable order, so look it up.
        self._grad_slot: dict[int, int] = {}
        if self.active:
            sp1 = jet_space(self.active, 1)
            for v, pos in self._act_idx.items():
                unit = tuple(1 if k == pos else 0 for k in range(sp1.n))
                self._grad_slot[v] = sp1.rank[unit]
        zero = ex.Const(0.0)
        self._entries = []  # (i, j, expr) for i <= j, structurally nonzero
        fv = {}
        for i in range(m):
            for j in range(i, m):
                e = spec.components[i][j]
                if e == zero:
                    continue
                self._entries.append((i, j, e))
                fv[(i, j)] = ex.free_vars(e)

        def dep(v: int, pair: tuple[int, int]) -> bool:
            key = (min(pair), max(pair))
            return key in fv and spec.coords[v] in fv[key]

        triples = set()
        for (i, j) in list(fv):
            for v in self._act_idx:
                for pair in ((i, j), (j, i)):
                    triples.add((v, pair[0], pair[1]))
                    triples.add((pair[0], v, pair[1]))
                    triples.add((pair[0], pair[1], v))
        self.triples = tuple(
            (a, b, d) for (a, b, d) in sorted(triples)
            if dep(a, (b, d)) or dep(b, (a, d)) or dep(d, (a, b))
        )

    def metric_and_grad(self, point: Sequence[float]) -> tuple[np.ndarray, dict]:
        m = self.spec.dim
        env = self.spec.env_at(point)
        g = np.zeros((m, m))
        grad: dict[tuple[int, int, int], float] = {}
        for i, j, e in self._entries:
            if ex.free_vars(e):
                jet = ex.eval_jet(e, env, self.active, 1)
                g[i, j] = g[j, i] = jet.value()
                for v, slot in self._grad_slot.items():
                    c = jet.coef[slot]
                    if c != 0.0:
                        grad[(v, i, j)] = grad[(v, j, i)] = c
            else:
                g[i, j] = g[j, i] = ex.eval_point(e, env)
        return g, grad

    def gamma_first(self, point: Sequence[float]) -> dict[tuple[int, int, int], float]:
        _, grad = self.metric_and_grad(point)
        out = {}
        for a, b, d in self.triples:
            v = 0.5 * (
                grad.get((a, b, d), 0.0)
                + grad.get((b, a, d), 0.0)
                - grad.get((d, a, b), 0.0)
            )
            if v != 0.0:
                out[(a, b, d)] = v
        return out

    def force(self, point: Sequence[float], velocity: np.ndarray) -> np.ndarray:
        """G with lower index raised: g^{cd} w_d; acceleration is -G."""
        g, grad = self.metric_and_grad(point)
        w = np.zeros(self.spec.dim)
        for a, b, d in self.triples:
            vv = velocity[a] * velocity[b]
            if vv == 0.0:
                continue
            w[d] += vv * 0.5 * (
                grad.get((a, b, d), 0.0)
                + grad.get((b, a, d), 0.0)
                - grad.get((d, a, b), 0.0)
            )
        return np.linalg.solve(g, w)


# ------------------------------------------------------------ structure
@dataclass(frozen=True)
class TriangularReport:
    ok: bool
    free: tuple[str, ...]    # coordinates with no force term at all
    forced: tuple[str, ...]  # coordinates forced purely by free ones
    blocking: tuple[str, ...]


def _inverse_probe(
    spec: MetricSpec, point: Sequence[float], tol: float = 1e-11, probes: int = 7
) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero pattern of the inverse metric and per-entry constancy, from
    jittered samples around `point`.  Numeric, not a proof."""
    rng = np.random.default_rng(20_260_817)
    base = np.asarray(point, dtype=float)
    mats = [np.linalg.inv(spec.value(base))]
    for _ in range(probes):
        q = base + rng.uniform(0.05, 0.45, size=base.size) * (1.0 + np.abs(base))
        try:
            mats.append(np.linalg.inv(spec.value(q)))
        except np.linalg.LinAlgError:
            continue  # probe landed on a degenerate point; skip it
    if len(mats) < 3:
        # not enough evidence; report everything as varying and nonzero
        full = np.ones((spec.dim, spec.dim), dtype=bool)
        return full, ~full
    stack = np.stack(mats)
    scale = max(float(np.max(np.abs(stack))), 1.0)
    nonzero = np.max(np.abs(stack), axis=0) > tol * scale
    constant = np.max(np.abs(stack - stack[0]), axis=0) <= tol * scale
    return nonzero, constant


def triangular_report(spec: MetricSpec, point: Sequence[float]) -> TriangularReport:
    """Classify coordinates for the direct solver.

    A coordinate is free when no force component can reach it; it is
    admissibly forced when its force involves only free velocities and only
    free position dependence.  Metric-side dependence is symbolic; the
    inverse pattern is probed numerically near `point`."""
    m = spec.dim
    zero = ex.Const(0.0)
    fv: dict[tuple[int, int], frozenset[str]] = {}
    for i in range(m):
        for j in range(i, m):
            e = spec.components[i][j]
            if e != zero:
                fv[(i, j)] = ex.free_vars(e)
                fv[(j, i)] = fv[(i, j)]
    act = set(spec.coords.index(v) for v in spec.active_vars)
    gamma_nz: dict[int, set[tuple[int, int]]] = {}
    gamma_dep: dict[int, set[str]] = {}
    for (i, j), names in list(fv.items()):
        if not names:
            continue
        for v in (spec.coords.index(nm) for nm in names):
            for (a, b, d) in ((v, i, j), (i, v, j), (i, j, v)):
                gamma_nz.setdefault(d, set()).add((a, b))
                gamma_dep.setdefault(d, set()).update(
                    fv.get((b, d), frozenset()),
                    fv.get((a, d), frozenset()),
                    fv.get((a, b), frozenset()),
                )
    inv_nonzero, inv_constant = _inverse_probe(spec, point)
    all_metric_vars: set[str] = set()
    for names in fv.values():
        all_metric_vars |= names

    force_pairs: dict[int, set[tuple[int, int]]] = {}
    force_dep: dict[int, set[str]] = {}
    for d, pairs in gamma_nz.items():
        for c in range(m):
            if not inv_nonzero[c, d]:
                continue
            force_pairs.setdefault(c, set()).update(pairs)
            dep = force_dep.setdefault(c, set())
            dep |= gamma_dep[d]
            if not inv_constant[c, d]:
                dep |= all_metric_vars

    free = [c for c in range(m) if c not in force_pairs]
    free_set = set(free)
    forced = sorted(force_pairs)
    blocking: list[str] = []
    for c in forced:
        bad_vel = sorted(
            {a for ab in force_pairs[c] for a in ab} - free_set
        )
        if bad_vel:
            blocking.append(
                f"force on {spec.coords[c]} involves non-free velocities "
                + ",".join(spec.coords[a] for a in bad_vel)
            )
        bad_pos = sorted(
            spec.coords.index(nm) for nm in force_dep[c]
            if spec.coords.index(nm) not in free_set
        )
        if bad_pos:
            blocking.append(
                f"force on {spec.coords[c]} depends on non-free positions "
                + ",".join(spec.coords[a] for a in bad_pos)
            )
    return TriangularReport(
        ok=not blocking,
        free=tuple(spec.coords[c] for c in free),
        forced=tuple(spec.coords[c] for c in forced),
        blocking=tuple(blocking),
    )


# ------------------------------------------------------------- quadrature
def adaptive_simpson(
    f: Callable[[float], np.ndarray],
    a: float,
    b: float,
    tol: float,
    max_depth: int = 28,
) -> np.ndarray:
    """Vector-valued adaptive Simpson integral of f over [a, b]."""
    fa, fb = f(a), f(b)
    mid = 0.5 * (a + b)
    fm = f(mid)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a_, m_, b_, fa_, fm_, fb_, s, tol_, depth):
        lm = 0.5 * (a_ + m_)
        rm = 0.5 * (m_ + b_)
        flm, frm = f(lm), f(rm)
        left = (m_ - a_) / 6.0 * (fa_ + 4.0 * flm + fm_)
        right = (b_ - m_) / 6.0 * (fm_ + 4.0 * frm + fb_)
        s2 = left + right
        err = float(np.max(np.abs(s2 - s)))
        # tol is relative to the segment magnitude with an absolute floor;
        # a purely absolute test never terminates on long horizons where the
        # moment integrands are large
        scale = max(1.0, float(np.max(np.abs(s2))))
        if depth >= max_depth or err <= 15.0 * tol_ * scale:
            return s2 + (s2 - s) / 15.0
        half = 0.5 * tol_
        return rec(a_, lm, m_, fa_, flm, fm_, left, half, depth + 1) + rec(
            m_, rm, b_, fm_, frm, fb_, right, half, depth + 1
        )

    return rec(a, mid, b, fa, fm, fb, whole, tol, 0)


# ---------------------------------------------------------------- solvers
def integrate_ivp(
    spec: MetricSpec,
    start: Sequence[float],
    velocity: Sequence[float],
    t_end: float = 1.0,
    n_samples: int = 101,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> Trajectory:
    """Runge-Kutta route (DOP853) for the geodesic initial-value problem."""
    m = spec.dim
    ev = ChristoffelPointEvaluator(spec)
    u0 = np.asarray(start, dtype=float)
    v0 = np.asarray(velocity, dtype=float)

    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        u, du = y[:m], y[m:]
        return np.concatenate([du, -ev.force(u, du)])

    grid = np.linspace(0.0, float(t_end), n_samples)
    res = solve_ivp(
        rhs,
        (0.0, float(t_end)),
        np.concatenate([u0, v0]),
        method="DOP853",
        t_eval=grid,
        rtol=rtol,
        atol=atol,
    )
    if not res.success:
        raise StepCollapseError(f"integrator stopped early: {res.message}")
    y = res.y.T
    return Trajectory(res.t.copy(), y[:, :m].copy(), y[:, m:].copy())


def _forced_force_fn(
    spec: MetricSpec,
    ev: ChristoffelPointEvaluator,
    u0: np.ndarray,
    v0: np.ndarray,
    free_idx: np.ndarray,
) -> Callable[[float], np.ndarray]:
    m = spec.dim

    def gfun(r: float) -> np.ndarray:
        point = u0.copy()  # forced coordinates pinned at start values
        point[free_idx] = u0[free_idx] + r * v0[free_idx]
        vel = np.zeros(m)
        vel[free_idx] = v0[free_idx]
        return ev.force(point, vel)

    return gfun


def _cumulative_moments(
    gfun: Callable[[float], np.ndarray],
    grid: np.ndarray,
    m: int,
    tol: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Running integrals of G and of r G over the sample grid."""
    n = grid.size
    k1 = np.zeros((n, m))
    k2 = np.zeros((n, m))
    span = max(grid[-1] - grid[0], 1e-300)

    def fboth(r: float) -> np.ndarray:
        g = gfun(r)
        return np.concatenate([g, r * g])

    for j in range(1, n):
        seg = adaptive_simpson(
            fboth, grid[j - 1], grid[j],
            tol * max((grid[j] - grid[j - 1]) / span, 1e-6),
        )
        k1[j] = k1[j - 1] + seg[:m]
        k2[j] = k2[j - 1] + seg[m:]
    return k1, k2


def triangular_ivp(
    spec: MetricSpec,
    start: Sequence[float],
    velocity: Sequence[float],
    t_end: float = 1.0,
    n_samples: int = 101,
    tol: float = 1e-12,
) -> Trajectory:
    """Direct-quadrature route; needs the triangular structure to hold."""
    rep = triangular_report(spec, start)
    if not rep.ok:
        raise TriangularStructureError("; ".join(rep.blocking))
    m = spec.dim
    u0 = np.asarray(start, dtype=float)
    v0 = np.asarray(velocity, dtype=float)
    free_idx = np.array([spec.coords.index(v) for v in rep.free], dtype=int)
    ev = ChristoffelPointEvaluator(spec)
    grid = np.linspace(0.0, float(t_end), n_samples)
    gfun = _forced_force_fn(spec, ev, u0, v0, free_idx)
    k1, k2 = _cumulative_moments(gfun, grid, m, tol)
    # no force reaches free coordinates; drop solve round-off so they stay
    # exactly affine
    k1[:, free_idx] = 0.0
    k2[:, free_idx] = 0.0
    # u(t) = u0 + v0 t - (t K1 - K2); du = v0 - K1
    u = u0[None, :] + grid[:, None] * v0[None, :] - (grid[:, None] * k1 - k2)
    du = v0[None, :] - k1
    return Trajectory(grid, u, du)


def triangular_bvp(
    spec: MetricSpec,
    start: Sequence[float],
    target: Sequence[float],
    n_samples: int = 101,
    tol: float = 1e-12,
) -> Trajectory:
    """Two-point problem on [0, 1]; the forced velocities close in one
    quadrature because their force involves free coordinates only."""
    rep = triangular_report(spec, start)
    if not rep.ok:
        raise TriangularStructureError("; ".join(rep.blocking))
    m = spec.dim
    u0 = np.asarray(start, dtype=float)
    u1 = np.asarray(target, dtype=float)
    v0 = u1 - u0  # exact for free coordinates; corrected below for forced
    free_idx = np.array([spec.coords.index(v) for v in rep.free], dtype=int)
    ev = ChristoffelPointEvaluator(spec)
    gfun = _forced_force_fn(spec, ev, u0, v0, free_idx)

    def fmom(r: float) -> np.ndarray:
        return (1.0 - r) * gfun(r)

    corr = adaptive_simpson(fmom, 0.0, 1.0, tol)
    forced_idx = np.array(
        [spec.coords.index(v) for v in rep.forced], dtype=int
    )
    if forced_idx.size:
        v0[forced_idx] += corr[forced_idx]
    return triangular_ivp(spec, u0, v0, 1.0, n_samples, tol)


def solve_geodesic(
    problem: GeodesicProblem,
    method: str = "auto",
    n_samples: int = 101,
    tol: float = 1e-12,
) -> Trajectory:
    """Dispatch a GeodesicProblem to a route; `method` is auto, rk, or
    triangular (two-point problems always need the triangular route)."""
    if method not in ("auto", "rk", "triangular"):
        raise ValueError(f"unknown method {method!r}")
    if problem.target is not None:
        return triangular_bvp(problem.spec, problem.start, problem.target,
                              n_samples, tol)
    if method == "rk":
        return integrate_ivp(problem.spec, problem.start, problem.velocity,
                             problem.t_end, n_samples)
    if method == "triangular":
        return triangular_ivp(problem.spec, problem.start, problem.velocity,
                              problem.t_end, n_samples, tol)
    rep = triangular_report(problem.spec, problem.start)
    if rep.ok:
        return triangular_ivp(problem.spec, problem.start, problem.velocity,
                              problem.t_end, n_samples, tol)
    return integrate_ivp(problem.spec, problem.start, problem.velocity,
                         problem.t_end, n_samples)


def exp_map(
    spec: MetricSpec,
    start: Sequence[float],
    velocity: Sequence[float],
    method: str = "auto",
) -> np.ndarray:
    traj = solve_geodesic(
        GeodesicProblem(spec, tuple(start), velocity=tuple(velocity)), method
    )
    return traj.u[-1].copy()


def log_map(spec: MetricSpec, start: Sequence[float], target: Sequence[float]) -> np.ndarray:
    traj = triangular_bvp(spec, start, target)
    return traj.du[0].copy()


def energy_along(spec: MetricSpec, traj: Trajectory) -> np.ndarray:
    """g(du, du) at each sample; constant along exact geodesics."""
    out = np.empty(traj.t.size)
    for j in range(traj.t.size):
        g = spec.value(traj.u[j])
        out[j] = float(traj.du[j] @ g @ traj.du[j])
    return out


def trajectory_csv(traj: Trajectory) -> str:
    m = traj.u.shape[1]
    head = ["t"] + [f"u_{i+1}" for i in range(m)] + [f"du_{i+1}" for i in range(m)]
    lines = [",".join(head)]
    for j in range(traj.t.size):
        row = [repr(float(traj.t[j]))]
        row += [repr(float(v)) for v in traj.u[j]]
        row += [repr(float(v)) for v in traj.du[j]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
