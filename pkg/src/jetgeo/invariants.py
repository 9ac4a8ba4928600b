"""Scalar curvature invariants as contraction schemas.

A schema is a list of factors, the j-th being the level-k_j curvature tensor
(4 + k_j lower slots), together with a perfect matching on all slots; each
matched pair is contracted with the inverse metric.  Slots are numbered
globally, factor by factor.

The text form is `R,dR|((0,3),(1,2))`: factor names use one `d` per
derivative level, and the pairing is written without spaces.  Round-trips
through `to_line`/`from_line` are exact.

Two schemas that differ only by reordering factors of equal level describe
the same invariant; `canonical_key` quotients that out and `catalog` only
emits canonical representatives.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import permutations
from random import Random
from typing import Iterable, Sequence

import numpy as np

from .curvature import CurvatureContext
from .metric import MetricSpec

__all__ = [
    "ContractionSchema",
    "CapsExceededError",
    "NAMED_SCHEMAS",
    "catalog",
    "CatalogResult",
    "random_schemas",
    "evaluate",
    "evaluate_dense",
    "matching_count",
]

MAX_FACTORS = 3
MAX_DERIV = 4
MAX_EXHAUSTIVE_LIMIT = 10_000
WORK_LIMIT = 10_000_000


class CapsExceededError(RuntimeError):
    """A combinatorial request went past the module's hard limits."""


def _slots(factors: Sequence[int]) -> int:
    return sum(4 + k for k in factors)


def matching_count(n_slots: int) -> int:
    """Number of perfect matchings on n_slots points (0 when odd)."""
    if n_slots % 2:
        return 0
    out = 1
    for v in range(n_slots - 1, 0, -2):
        out *= v
    return out


@dataclass(frozen=True)
class ContractionSchema:
    """Factors (derivative level of each) and a perfect matching of all slots."""

    factors: tuple[int, ...]
    pairing: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.factors:
            raise ValueError("schema needs at least one factor")
        if any(k < 0 for k in self.factors):
            raise ValueError("factor levels must be >= 0")
        n = _slots(self.factors)
        norm = tuple(sorted((min(a, b), max(a, b)) for a, b in self.pairing))
        seen = [s for p in norm for s in p]
        if sorted(seen) != list(range(n)):
            raise ValueError(f"pairing is not a perfect matching of {n} slots")
        if any(a == b for a, b in norm):
            raise ValueError("a slot cannot pair with itself")
        object.__setattr__(self, "factors", tuple(int(k) for k in self.factors))
        object.__setattr__(self, "pairing", norm)

    @property
    def n_slots(self) -> int:
        return _slots(self.factors)

    def canonical_key(self) -> tuple[tuple[int, ...], tuple[tuple[int, int], ...]]:
        """Identity under reordering of equal-level factors."""
        order = sorted(range(len(self.factors)), key=lambda i: self.factors[i])
        sorted_factors = tuple(self.factors[i] for i in order)
        offs_new = [0]
        for k in sorted_factors[:-1]:
            offs_new.append(offs_new[-1] + 4 + k)
        offs_old = [0]
        for k in self.factors[:-1]:
            offs_old.append(offs_old[-1] + 4 + k)
        # group canonical positions by level, permute within each group
        groups: dict[int, list[int]] = {}
        for pos, k in enumerate(sorted_factors):
            groups.setdefault(k, []).append(pos)
        sources: dict[int, list[int]] = {}
        for i, k in enumerate(self.factors):
            sources.setdefault(k, []).append(i)
        best: tuple[tuple[int, int], ...] | None = None
        levels = sorted(groups)
        perms_per_level = [list(permutations(sources[k])) for k in levels]

        def rec(li: int, assign: dict[int, int]):
            nonlocal best
            if li == len(levels):
                remap: dict[int, int] = {}
                for old_i, new_pos in assign.items():
                    w = 4 + self.factors[old_i]
                    for t in range(w):
                        remap[offs_old[old_i] + t] = offs_new[new_pos] + t
                pairs = tuple(sorted(
                    (min(remap[a], remap[b]), max(remap[a], remap[b]))
                    for a, b in self.pairing
                ))
                if best is None or pairs < best:
                    best = pairs
                return
            k = levels[li]
            for perm in perms_per_level[li]:
                nxt = dict(assign)
                for old_i, new_pos in zip(perm, groups[k]):
                    nxt[old_i] = new_pos
                rec(li + 1, nxt)

        rec(0, {})
        assert best is not None
        return (sorted_factors, best)

    def canonical(self) -> "ContractionSchema":
        f, p = self.canonical_key()
        return ContractionSchema(f, p)

    def to_line(self) -> str:
        names = ",".join("d" * k + "R" for k in self.factors)
        body = ",".join(f"({a},{b})" for a, b in self.pairing)
        return f"{names}|({body})"

    @staticmethod
    def from_line(line: str) -> "ContractionSchema":
        try:
            names, body = line.strip().split("|", 1)
        except ValueError:
            raise ValueError(f"schema line needs one '|': {line!r}") from None
        factors = []
        for name in names.split(","):
            m = re.fullmatch(r"(d*)R", name.strip())
            if m is None:
                raise ValueError(f"bad factor name {name!r}")
            factors.append(len(m.group(1)))
        pairs = [(int(a), int(b)) for a, b in re.findall(r"\((\d+),(\d+)\)", body)]
        inner = "(" + ",".join(f"({a},{b})" for a, b in pairs) + ")"
        if body.replace(" ", "") != inner:
            raise ValueError(f"bad pairing text {body!r}")
        return ContractionSchema(tuple(factors), tuple(pairs))


NAMED_SCHEMAS: dict[str, ContractionSchema] = {
    "tau": ContractionSchema((0,), ((0, 3), (1, 2))),
    "ric2": ContractionSchema((0, 0), ((0, 3), (4, 7), (1, 5), (2, 6))),
    "r2": ContractionSchema((0, 0), ((0, 4), (1, 5), (2, 6), (3, 7))),
    "grad_r2": ContractionSchema((1, 1), ((0, 5), (1, 6), (2, 7), (3, 8), (4, 9))),
    "rrr_trace": ContractionSchema(
        (0, 0, 0), ((2, 4), (3, 5), (6, 8), (7, 9), (10, 0), (11, 1))
    ),
    "rrr_interlock": ContractionSchema(
        (0, 0, 0), ((0, 4), (2, 6), (1, 8), (3, 10), (5, 9), (7, 11))
    ),
    "lap_tau": ContractionSchema((2,), ((0, 3), (1, 2), (4, 5))),
}


def _factor_lists(max_factors: int, max_deriv: int) -> Iterable[tuple[int, ...]]:
    def rec(prefix: tuple[int, ...], lo: int):
        if prefix:
            yield prefix
        if len(prefix) == max_factors:
            return
        for k in range(lo, max_deriv + 1):
            yield from rec(prefix + (k,), k)

    yield from rec((), 0)


def _all_matchings(slots: list[int]) -> Iterable[tuple[tuple[int, int], ...]]:
    if not slots:
        yield ()
        return
    a = slots[0]
    for i in range(1, len(slots)):
        b = slots[i]
        rest = slots[1:i] + slots[i + 1:]
        for tail in _all_matchings(rest):
            yield ((a, b),) + tail


@dataclass(frozen=True)
class CatalogResult:
    schemas: tuple[ContractionSchema, ...]
    skipped: tuple[tuple[int, ...], ...]  # factor lists past the matching limit


def catalog(
    max_factors: int, max_deriv: int, exhaustive_limit: int = 1000
) -> CatalogResult:
    """All canonical schemas over factor lists whose matching count stays
    within `exhaustive_limit`; larger factor lists are reported as skipped."""
    if max_factors < 1 or max_factors > MAX_FACTORS:
        raise CapsExceededError(f"max_factors must be in 1..{MAX_FACTORS}")
    if max_deriv < 0 or max_deriv > MAX_DERIV:
        raise CapsExceededError(f"max_deriv must be in 0..{MAX_DERIV}")
    if exhaustive_limit < 1 or exhaustive_limit > MAX_EXHAUSTIVE_LIMIT:
        raise CapsExceededError(f"exhaustive_limit must be in 1..{MAX_EXHAUSTIVE_LIMIT}")
    seen: set = set()
    out: list[ContractionSchema] = []
    skipped: list[tuple[int, ...]] = []
    for factors in _factor_lists(max_factors, max_deriv):
        n = _slots(factors)
        cnt = matching_count(n)
        if cnt == 0:
            continue
        if cnt > exhaustive_limit:
            skipped.append(factors)
            continue
        for pairing in _all_matchings(list(range(n))):
            sch = ContractionSchema(factors, pairing)
            key = sch.canonical_key()
            if key in seen:
                continue
            seen.add(key)
            out.append(ContractionSchema(*key))
    out.sort(key=lambda s: (len(s.factors), s.factors, s.pairing))
    return CatalogResult(tuple(out), tuple(skipped))


def random_schemas(
    count: int, max_factors: int, max_deriv: int, seed: int
) -> tuple[ContractionSchema, ...]:
    """Deterministic sample of distinct canonical schemas (may return fewer
    than `count` when the space is small)."""
    if max_factors < 1 or max_factors > MAX_FACTORS:
        raise CapsExceededError(f"max_factors must be in 1..{MAX_FACTORS}")
    if max_deriv < 0 or max_deriv > MAX_DERIV:
        raise CapsExceededError(f"max_deriv must be in 0..{MAX_DERIV}")
    rng = Random(seed)
    pool = [f for f in _factor_lists(max_factors, max_deriv) if _slots(f) % 2 == 0]
    seen: set = set()
    out: list[ContractionSchema] = []
    attempts = 0
    while len(out) < count and attempts < 200 * max(1, count):
        attempts += 1
        factors = pool[rng.randrange(len(pool))]
        slots = list(range(_slots(factors)))
        rng.shuffle(slots)
        pairing = tuple((slots[2 * i], slots[2 * i + 1]) for i in range(len(slots) // 2))
        sch = ContractionSchema(factors, pairing)
        key = sch.canonical_key()
        if key in seen:
            continue
        seen.add(key)
        out.append(ContractionSchema(*key))
    return tuple(out)


# ------------------------------------------------------------- evaluation
def evaluate(
    schema: ContractionSchema,
    spec: MetricSpec,
    point: Sequence[float],
    context: CurvatureContext | None = None,
    work_limit: int = WORK_LIMIT,
) -> float:
    """Value of the invariant at `point`, summed over sparse factor supports."""
    ctx = context or CurvatureContext(spec, point, max(schema.factors))
    comps = []
    for k in schema.factors:
        vals = [(idx, jet.value()) for idx, jet in ctx._level(k).items()
                if jet.value() != 0.0]
        comps.append(vals)
    work = 1
    for vals in comps:
        work *= max(1, len(vals))
    if work > work_limit:
        raise CapsExceededError(f"evaluation needs {work} support combinations")
    offs = [0]
    for k in schema.factors[:-1]:
        offs.append(offs[-1] + 4 + k)
    g = ctx.ginv0
    total = 0.0

    def rec(fi: int, slot_val: list[int], weight: float):
        nonlocal total
        if fi == len(comps):
            w = weight
            for a, b in schema.pairing:
                w *= g[slot_val[a], slot_val[b]]
                if w == 0.0:
                    return
            total += w
            return
        off = offs[fi]
        width = 4 + schema.factors[fi]
        for idx, v in comps[fi]:
            slot_val[off:off + width] = idx
            rec(fi + 1, slot_val, weight * v)

    if all(comps_k for comps_k in comps):
        rec(0, [0] * schema.n_slots, 1.0)
    return float(total)


def evaluate_dense(
    schema: ContractionSchema,
    spec: MetricSpec,
    point: Sequence[float],
    context: CurvatureContext | None = None,
) -> float:
    """Same invariant through dense arrays and einsum; slow cross-check."""
    ctx = context or CurvatureContext(spec, point, max(schema.factors))
    n = schema.n_slots
    if n + len(schema.pairing) > 26:
        raise CapsExceededError("too many slots for the dense evaluator")
    letters = "abcdefghijklmnopqrstuvwxyz"
    slot_letter = [letters[i] for i in range(n)]
    pair_letter = {}
    li = n
    subs = []
    ops = []
    off = 0
    for k in schema.factors:
        t = ctx.curvature(k).dense()
        ops.append(t)
        subs.append("".join(slot_letter[off:off + 4 + k]))
        off += 4 + k
    for a, b in schema.pairing:
        pair_letter[(a, b)] = (slot_letter[a], slot_letter[b])
        ops.append(ctx.ginv0)
        subs.append(slot_letter[a] + slot_letter[b])
    expr_str = ",".join(subs) + "->"
    return float(np.einsum(expr_str, *ops, optimize=True))
