"""Curvature of a metric at a point, to any requested covariant order.

Everything is computed through truncated Taylor jets in the coordinates the
metric actually depends on.  A `CurvatureContext` fixes a metric, a base
point, and `max_deriv`; it then carries jets of total order

    metric            max_deriv + 2
    Christoffel       max_deriv + 1
    curvature level k max_deriv - k      (level k = k-th covariant derivative)

so the level-k components still hold enough derivative information to feed
level k + 1.  Truncating both factors of a product to the output order first
is exact, because multiplication never moves low-order coefficients up.

Component dictionaries are sparse: keys are index tuples, values jets, and
missing keys are exact zeros.  Support is propagated level to level (a new
nonzero needs either a derivative of an old one or a Christoffel hook into
one), and an exhaustive all-indices evaluator is kept alongside as a slow
cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product as iproduct
from typing import Mapping, Sequence

import numpy as np

from .jets import Jet, JetOrderError, jet_space
from . import expr as ex
from .metric import MetricSpec

__all__ = [
    "CurvatureContext",
    "Christoffels",
    "TensorField",
    "DegeneratePlaneError",
    "christoffel",
    "riemann",
    "nabla_k_r",
    "scalar_curvature",
    "jacobi_operator",
    "skew_curvature_operator",
    "DENSE_CAP",
]

DENSE_CAP = 10_000_000


class DegeneratePlaneError(ValueError):
    """The requested 2-plane is degenerate for the metric at the point."""


@dataclass(frozen=True)
class Christoffels:
    """Point values of both Christoffel kinds; keys (a, b, c), zeros omitted.

    `first[(a, b, c)]` lowers all indices; `second[(a, b, c)]` has upper c.
    """

    dim: int
    first: Mapping[tuple[int, int, int], float]
    second: Mapping[tuple[int, int, int], float]


@dataclass(frozen=True)
class TensorField:
    """Point values of a level-k curvature tensor (4 + k lower slots)."""

    dim: int
    level: int
    components: Mapping[tuple[int, ...], float]

    @property
    def rank(self) -> int:
        return 4 + self.level

    def dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        n = self.dim ** self.rank
        if n > cap:
            raise ValueError(f"dense tensor would hold {n} entries, cap is {cap}")
        out = np.zeros((self.dim,) * self.rank)
        for idx, v in self.components.items():
            out[idx] = v
        return out

    def contract(self, vectors: Sequence[np.ndarray]) -> float:
        if len(vectors) != self.rank:
            raise ValueError(f"need {self.rank} vectors, got {len(vectors)}")
        total = 0.0
        for idx, v in self.components.items():
            w = v
            for s, i in enumerate(idx):
                w *= vectors[s][i]
            total += w
        return total


class CurvatureContext:
    """Jets of the curvature hierarchy of `spec` at `point`.

    `max_deriv` is the highest covariant-derivative level that can be read
    out of this context; asking beyond it raises JetOrderError.
    """

    def __init__(self, spec: MetricSpec, point: Sequence[float], max_deriv: int = 0):
        if max_deriv < 0:
            raise ValueError("max_deriv must be >= 0")
        spec.validate_at(point)
        self.spec = spec
        self.point = tuple(float(v) for v in point)
        self.max_deriv = int(max_deriv)
        self.order = self.max_deriv + 2
        self.dim = spec.dim
        self.coords = spec.coords

        env = spec.env_at(point)
        self.active = spec.active_vars
        self.act_idx = tuple(self.coords.index(v) for v in self.active)
        self._act_set = frozenset(self.act_idx)
        self._space = jet_space(self.active, self.order)

        # metric jets, both index orders sharing one object
        self._g: dict[tuple[int, int], Jet] = {}
        for i in range(self.dim):
            for j in range(i, self.dim):
                e = spec.components[i][j]
                if isinstance(e, ex.Const) and e.value == 0.0:
                    continue
                jet = ex.eval_jet(e, env, self.active, self.order)
                if jet.is_zero():
                    continue
                self._g[(i, j)] = jet
                self._g[(j, i)] = jet
        self._g_by_row: dict[int, list[tuple[int, Jet]]] = {}
        for (i, j), jet in self._g.items():
            self._g_by_row.setdefault(i, []).append((j, jet))

        # constant part taken from the jets themselves so that the Neumann
        # inverse is exact against them, not against a reevaluation
        g0 = np.zeros((self.dim, self.dim))
        for (i, j), jet in self._g.items():
            g0[i, j] = jet.value()
        self.g0 = g0
        h0 = np.linalg.inv(g0)
        self.ginv0 = 0.5 * (h0 + h0.T)

        self._ginv = self._neumann_inverse()
        self._gamma1 = self._christoffel_first()
        self._gamma2 = self._christoffel_second()

        # hooks for covariant-derivative terms: fwd[(a, b)] lists (c, jet)
        # with lower pair (a, b) and upper c; rev[c] lists the pairs.
        self._fwd: dict[tuple[int, int], list[tuple[int, Jet]]] = {}
        self._rev: dict[int, list[tuple[int, int]]] = {}
        for (a, b, c), jet in self._gamma2.items():
            self._fwd.setdefault((a, b), []).append((c, jet))
            self._rev.setdefault(c, []).append((a, b))

        self._levels: list[dict[tuple[int, ...], Jet]] = []

    # ------------------------------------------------------------ plumbing
    def _neumann_inverse(self) -> dict[tuple[int, int], Jet]:
        """Inverse-metric jets at full order.

        With g = g0 + N and N free of constant term, N is nilpotent in the
        truncated algebra, so `order` sweeps of S <- h0 - h0 N S land on the
        exact truncated inverse.
        """
        m = self.dim
        h0 = self.ginv0
        space = self._space
        nil: dict[tuple[int, int], Jet] = {}
        for (i, j), jet in self._g.items():
            if i > j:
                continue
            c = jet.coef.copy()
            c[0] = 0.0
            if not c.any():
                continue
            nj = Jet(space, c)
            nil[(i, j)] = nj
            if i != j:
                nil[(j, i)] = nj
        base: dict[tuple[int, int], Jet] = {}
        for i in range(m):
            for j in range(m):
                if h0[i, j] != 0.0:
                    base[(i, j)] = space.constant(h0[i, j])
        if not nil:
            return base
        s = dict(base)
        for _ in range(self.order):
            t: dict[tuple[int, int], Jet] = {}
            for (a, b), nj in nil.items():
                for c in range(m):
                    sj = s.get((b, c))
                    if sj is None:
                        continue
                    term = nj * sj
                    prev = t.get((a, c))
                    t[(a, c)] = term if prev is None else prev + term
            nxt = dict(base)
            for (a, c), tj in t.items():
                for i in range(m):
                    if h0[i, a] == 0.0:
                        continue
                    term = tj.scaled(h0[i, a])
                    prev = nxt.get((i, c))
                    nxt[(i, c)] = (-term) if prev is None else prev - term
            s = nxt
        # The sweeps are exact in exact arithmetic, so coefficients at machine
        # noise relative to the whole inverse are roundoff images of structural
        # zeros.  Left in place they make mathematically-zero Christoffel
        # symbols merely tiny, and those breed spurious curvature support that
        # grows exponentially with the derivative level.
        scale = max((np.max(np.abs(j.coef)) for j in s.values()), default=0.0)
        floor = 64.0 * np.finfo(float).eps * scale
        cleaned: dict[int, Jet | None] = {}
        out: dict[tuple[int, int], Jet] = {}
        for key, jet in s.items():
            mark = id(jet)
            if mark not in cleaned:
                coef = np.where(np.abs(jet.coef) <= floor, 0.0, jet.coef)
                cleaned[mark] = Jet(jet.space, coef) if coef.any() else None
            cj = cleaned[mark]
            if cj is not None:
                out[key] = cj
        return out

    def _christoffel_first(self) -> dict[tuple[int, int, int], Jet]:
        cand: set[tuple[int, int, int]] = set()
        for (i, j) in self._g:
            for v in self.act_idx:
                cand.add((v, i, j))
                cand.add((i, v, j))
                cand.add((i, j, v))
        out: dict[tuple[int, int, int], Jet] = {}
        for (a, b, c) in cand:
            acc = None
            for var, pair, sign in ((a, (b, c), 1.0), (b, (a, c), 1.0), (c, (a, b), -1.0)):
                if var not in self._act_set:
                    continue
                gj = self._g.get(pair)
                if gj is None:
                    continue
                term = gj.deriv(self.coords[var]).scaled(0.5 * sign)
                acc = term if acc is None else acc + term
            if acc is not None and not acc.is_zero():
                out[(a, b, c)] = acc
        return out

    def _christoffel_second(self) -> dict[tuple[int, int, int], Jet]:
        ord1 = self.order - 1
        by_col: dict[int, list[tuple[int, Jet]]] = {}
        for (c, d), jet in self._ginv.items():
            by_col.setdefault(d, []).append((c, jet.truncated(ord1)))
        acc: dict[tuple[int, int, int], Jet] = {}
        for (a, b, d), g1 in self._gamma1.items():
            for c, hj in by_col.get(d, ()):
                term = hj * g1
                key = (a, b, c)
                prev = acc.get(key)
                acc[key] = term if prev is None else prev + term
        return {k: v for k, v in acc.items() if not v.is_zero()}

    # ------------------------------------------------------------ curvature
    def _edge_value(self, i: int, j: int, k: int, l: int, ord0: int) -> Jet | None:
        # one orientation: (d_i Gamma_jk^m) g_ml + Gamma_jk^m Gamma_iml
        acc = None
        for m_, gamma2 in self._fwd.get((j, k), ()):
            if i in self._act_set:
                gj = self._g.get((m_, l))
                if gj is not None:
                    term = gamma2.deriv(self.coords[i]) * gj.truncated(ord0)
                    acc = term if acc is None else acc + term
            g1 = self._gamma1.get((i, m_, l))
            if g1 is not None:
                term = gamma2.truncated(ord0) * g1.truncated(ord0)
                acc = term if acc is None else acc + term
        return acc

    def _riemann_jets(self) -> dict[tuple[int, int, int, int], Jet]:
        ord0 = self.order - 2
        gamma1_by_mid: dict[int, list[tuple[int, int]]] = {}
        for (a, b, c) in self._gamma1:
            gamma1_by_mid.setdefault(b, []).append((a, c))
        cand: set[tuple[int, int, int, int]] = set()
        for (q, k), lst in self._fwd.items():
            for m_, _ in lst:
                for l, _ in self._g_by_row.get(m_, ()):
                    for i in self.act_idx:
                        cand.add((i, q, k, l))
                        cand.add((q, i, k, l))
                for i, l in gamma1_by_mid.get(m_, ()):
                    cand.add((i, q, k, l))
                    cand.add((q, i, k, l))
        out: dict[tuple[int, int, int, int], Jet] = {}
        for (i, j, k, l) in cand:
            a = self._edge_value(i, j, k, l, ord0)
            b = self._edge_value(j, i, k, l, ord0)
            if b is not None:
                a = (-b) if a is None else a - b
            if a is not None and not a.is_zero():
                out[(i, j, k, l)] = a
        return out

    def _nabla_value(
        self,
        prev: Mapping[tuple[int, ...], Jet],
        base_idx: tuple[int, ...],
        m_: int,
        ord_out: int,
    ) -> Jet | None:
        acc = None
        tj = prev.get(base_idx)
        if tj is not None and m_ in self._act_set:
            acc = tj.deriv(self.coords[m_])
        for s, i_s in enumerate(base_idx):
            for a, gamma2 in self._fwd.get((m_, i_s), ()):
                rep = prev.get(base_idx[:s] + (a,) + base_idx[s + 1:])
                if rep is None:
                    continue
                term = gamma2.truncated(ord_out) * rep.truncated(ord_out)
                acc = (-term) if acc is None else acc - term
        return acc

    def _nabla_step(
        self, prev: Mapping[tuple[int, ...], Jet], ord_out: int
    ) -> dict[tuple[int, ...], Jet]:
        cand: set[tuple[int, ...]] = set()
        for idx in prev:
            for m_ in self.act_idx:
                cand.add(idx + (m_,))
            for s, a in enumerate(idx):
                for (m_, i_) in self._rev.get(a, ()):
                    cand.add(idx[:s] + (i_,) + idx[s + 1:] + (m_,))
        out: dict[tuple[int, ...], Jet] = {}
        for full in cand:
            jet = self._nabla_value(prev, full[:-1], full[-1], ord_out)
            if jet is not None and not jet.is_zero():
                out[full] = jet
        return out

    def _level(self, k: int) -> dict[tuple[int, ...], Jet]:
        if k < 0:
            raise ValueError("level must be >= 0")
        if k > self.max_deriv:
            raise JetOrderError(
                f"level {k} needs max_deriv >= {k}, context was built with {self.max_deriv}"
            )
        while len(self._levels) <= k:
            n = len(self._levels)
            if n == 0:
                self._levels.append(self._riemann_jets())
            else:
                ord_out = self.order - 2 - n
                self._levels.append(self._nabla_step(self._levels[n - 1], ord_out))
        return self._levels[k]

    # ------------------------------------------------------------- read-out
    def christoffels(self) -> Christoffels:
        first = {k: j.value() for k, j in self._gamma1.items() if j.value() != 0.0}
        second = {k: j.value() for k, j in self._gamma2.items() if j.value() != 0.0}
        return Christoffels(self.dim, first, second)

    def curvature(self, k: int = 0) -> TensorField:
        comp = {idx: j.value() for idx, j in self._level(k).items() if j.value() != 0.0}
        return TensorField(self.dim, k, comp)

    def support(self, k: int = 0) -> frozenset[tuple[int, ...]]:
        """Index tuples whose level-k jet is not identically zero here."""
        return frozenset(self._level(k))

    def ricci(self) -> np.ndarray:
        rho = np.zeros((self.dim, self.dim))
        for (i, a, b, j), jet in self._level(0).items():
            w = self.ginv0[i, j]
            if w != 0.0:
                rho[a, b] += w * jet.value()
        return rho

    def scalar(self) -> float:
        rho = self.ricci()
        return float(np.sum(self.ginv0 * rho))

    def contract(self, k: int, vectors: Sequence[np.ndarray]) -> float:
        """Full contraction of the level-k tensor with 4 + k vectors."""
        if len(vectors) != 4 + k:
            raise ValueError(f"need {4 + k} vectors, got {len(vectors)}")
        total = 0.0
        for idx, jet in self._level(k).items():
            w = jet.value()
            if w == 0.0:
                continue
            for s, i in enumerate(idx):
                w *= vectors[s][i]
            total += w
        return total

    def contract_open(
        self, k: int, vectors: Sequence[np.ndarray | None], open_slot: int
    ) -> np.ndarray:
        """Contract all slots except `open_slot`; returns a lower-index vector."""
        if len(vectors) != 4 + k:
            raise ValueError(f"need {4 + k} vector entries, got {len(vectors)}")
        out = np.zeros(self.dim)
        for idx, jet in self._level(k).items():
            w = jet.value()
            if w == 0.0:
                continue
            for s, i in enumerate(idx):
                if s == open_slot:
                    continue
                w *= vectors[s][i]
            out[idx[open_slot]] += w
        return out

    # --------------------------------------------------- exhaustive oracles
    def level_exhaustive(self, k: int, cap: int = 2_000_000) -> dict[tuple[int, ...], Jet]:
        """Recompute level k over every index tuple; cross-check for support
        propagation, exponential in k."""
        if self.dim ** (4 + k) > cap:
            raise ValueError("exhaustive enumeration over cap")
        ord0 = self.order - 2
        full: dict[tuple[int, ...], Jet] = {}
        for (i, j, p, l) in iproduct(range(self.dim), repeat=4):
            a = self._edge_value(i, j, p, l, ord0)
            b = self._edge_value(j, i, p, l, ord0)
            if b is not None:
                a = (-b) if a is None else a - b
            if a is not None and not a.is_zero():
                full[(i, j, p, l)] = a
        for n in range(1, k + 1):
            ord_out = self.order - 2 - n
            if ord_out < 0:
                raise JetOrderError(
                    f"level {n} needs max_deriv >= {n}, context was built with {self.max_deriv}"
                )
            nxt: dict[tuple[int, ...], Jet] = {}
            for idx in iproduct(range(self.dim), repeat=4 + n):
                jet = self._nabla_value(full, idx[:-1], idx[-1], ord_out)
                if jet is not None and not jet.is_zero():
                    nxt[idx] = jet
            full = nxt
        return full


# ------------------------------------------------------------ one-shot API
def christoffel(spec: MetricSpec, point: Sequence[float]) -> Christoffels:
    return CurvatureContext(spec, point, 0).christoffels()

def riemann(spec: MetricSpec, point: Sequence[float]) -> TensorField:
    return CurvatureContext(spec, point, 0).curvature(0)

def nabla_k_r(spec: MetricSpec, point: Sequence[float], k: int) -> TensorField:
    return CurvatureContext(spec, point, max_deriv=k).curvature(k)

def scalar_curvature(spec: MetricSpec, point: Sequence[float]) -> float:
    return CurvatureContext(spec, point, 0).scalar()


# ------------------------------------------------------------- operators
def jacobi_operator(ctx: CurvatureContext, direction: Sequence[float]) -> np.ndarray:
    """Matrix of v -> metric-dual of R(v, X, X, .) for X = `direction`."""
    x = np.asarray(direction, dtype=float)
    if x.shape != (ctx.dim,):
        raise ValueError(f"direction must have length {ctx.dim}")
    low = np.zeros((ctx.dim, ctx.dim))
    for (d, i, j, l), jet in ctx._level(0).items():
        w = jet.value() * x[i] * x[j]
        if w != 0.0:
            low[d, l] += w
    return ctx.ginv0 @ low.T


def _plane_basis(
    g0: np.ndarray, e1: np.ndarray, e2: np.ndarray, tol: float = 1e-12
) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal oriented basis of span{e1, e2}, unit up to sign.

    Raises DegeneratePlaneError when the induced form on the plane is
    degenerate (or the vectors are dependent)."""
    q11 = float(e1 @ g0 @ e1)
    q12 = float(e1 @ g0 @ e2)
    q22 = float(e2 @ g0 @ e2)
    scale = max(abs(q11), abs(q12), abs(q22))
    det = q11 * q22 - q12 * q12
    if scale == 0.0 or abs(det) <= tol * scale * scale:
        raise DegeneratePlaneError("degenerate 2-plane for this metric")
    for c1, c2 in ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0)):
        q = c1 * c1 * q11 + 2.0 * c1 * c2 * q12 + c2 * c2 * q22
        if abs(q) > tol * scale:
            break
    else:
        raise DegeneratePlaneError("no non-null vector found in the plane")
    eps1 = 1.0 if q > 0 else -1.0
    s1 = abs(q) ** 0.5
    u1 = (c1 * e1 + c2 * e2) / s1
    a1, a2 = c1 / s1, c2 / s1
    # the other generator: e2 unless u1 came from it alone
    w, w1, w2 = (e2, 0.0, 1.0) if (c1, c2) != (0.0, 1.0) else (e1, 1.0, 0.0)
    proj = eps1 * float(w @ g0 @ u1)
    v = w - proj * u1
    b1, b2 = w1 - proj * a1, w2 - proj * a2
    qv = float(v @ g0 @ v)
    if abs(qv) <= tol * max(1.0, scale):
        raise DegeneratePlaneError("degenerate 2-plane for this metric")
    s2 = abs(qv) ** 0.5
    u2 = v / s2
    b1, b2 = b1 / s2, b2 / s2
    if a1 * b2 - a2 * b1 < 0.0:
        u2 = -u2
    return u1, u2


def skew_curvature_operator(
    ctx: CurvatureContext, e1: Sequence[float], e2: Sequence[float]
) -> np.ndarray:
    """Matrix of v -> metric-dual of R(u1, u2, v, .), with (u1, u2) the
    oriented orthonormalization of the given plane."""
    u1, u2 = _plane_basis(ctx.g0, np.asarray(e1, float), np.asarray(e2, float))
    low = np.zeros((ctx.dim, ctx.dim))
    for (i, j, d, l), jet in ctx._level(0).items():
        w = jet.value() * u1[i] * u2[j]
        if w != 0.0:
            low[d, l] += w
    return ctx.ginv0 @ low.T
