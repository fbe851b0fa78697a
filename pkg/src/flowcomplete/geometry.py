"""Manifolds as open subsets of R^n, vector fields on them, tagged points.

The state space M is carved out of R^n by an open-set predicate; a vector
field is a tuple of autonomous component expressions on M.  A tagged point
(s, x) lives on the product line-times-M that underlies the completion
construction; the tag s is the coordinate on the line factor.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import expr as ex

__all__ = [
    "Point",
    "ManifoldSpec",
    "VectorFieldSpec",
    "TaggedPoint",
    "ExistenceWindow",
    "OutsideDomainError",
    "contains",
    "field_at",
    "norm",
    "dist",
]

Point = tuple[float, ...]


class OutsideDomainError(ValueError):
    """A point was required to lie in M but does not."""


def norm(x: Sequence[float]) -> float:
    return math.sqrt(sum(v * v for v in x))


def dist(x: Sequence[float], y: Sequence[float]) -> float:
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)))


@dataclass(frozen=True)
class ManifoldSpec:
    """Open subset of R^n given by a membership predicate.

    ``margin`` optionally gives a lower bound on the distance from a point of
    M to the complement; escape detection uses it to catch trajectories that
    graze or pierce a thin excluded set that pointwise sampling would miss.
    """

    dimension: int
    inside: ex.Predicate
    margin: ex.Expression | None = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        used = ex.variables_used(self.inside)
        if "t" in used:
            raise ValueError("membership predicate must not depend on t")
        self._check_vars(used, "inside predicate")
        if self.margin is not None:
            mused = ex.variables_used(self.margin)
            if "t" in mused:
                raise ValueError("margin expression must not depend on t")
            self._check_vars(mused, "margin expression")
        object.__setattr__(self, "_inside_fn", ex.compile_predicate(self.inside))
        object.__setattr__(
            self, "_margin_fn",
            ex.compile_expression(self.margin) if self.margin is not None else None)

    def _check_vars(self, used: set[str], what: str):
        for name in used:
            if name != "t" and int(name[1:]) > self.dimension:
                raise ValueError(f"{what} references {name} but dimension is {self.dimension}")

    def contains(self, x: Sequence[float]) -> bool:
        if len(x) != self.dimension:
            raise ValueError(f"point has dimension {len(x)}, manifold has {self.dimension}")
        return self._inside_fn(x)

    def margin_at(self, x: Sequence[float]) -> float | None:
        if self._margin_fn is None:
            return None
        return self._margin_fn(x, 0.0)


def _ambient_manifold(dimension: int) -> ManifoldSpec:
    # all of R^n: a constant-true comparison keeps the predicate grammar closed
    return ManifoldSpec(dimension=dimension, inside=ex.parse_predicate("0 < 1"))


@dataclass(frozen=True)
class VectorFieldSpec:
    """A vector field on a manifold: one autonomous component expression per axis.

    ``oracle_flow`` optionally gives the closed-form time-t flow map as
    expressions in (x1..xn, t); test scenarios use it as an independent check
    on the integrator.
    """

    manifold: ManifoldSpec
    rhs: tuple[ex.Expression, ...]
    oracle_flow: tuple[ex.Expression, ...] | None = None

    def __post_init__(self):
        n = self.manifold.dimension
        if len(self.rhs) != n:
            raise ValueError(f"rhs has {len(self.rhs)} components, expected {n}")
        for i, component in enumerate(self.rhs):
            used = ex.variables_used(component)
            if "t" in used:
                raise ValueError(f"rhs component {i + 1} depends on t; fields are autonomous")
            for name in used:
                if int(name[1:]) > n:
                    raise ValueError(f"rhs component {i + 1} references {name} beyond dimension {n}")
        if self.oracle_flow is not None and len(self.oracle_flow) != n:
            raise ValueError(f"oracle flow has {len(self.oracle_flow)} components, expected {n}")
        object.__setattr__(self, "_rhs_fns", tuple(ex.compile_expression(c) for c in self.rhs))
        object.__setattr__(
            self, "_oracle_fns",
            tuple(ex.compile_expression(c) for c in self.oracle_flow)
            if self.oracle_flow is not None else None)

    @property
    def dimension(self) -> int:
        return self.manifold.dimension

    def __call__(self, x: Sequence[float]) -> Point:
        # raw componentwise evaluation, no membership check (integrator stages
        # may momentarily step outside M)
        return tuple(f(x, 0.0) for f in self._rhs_fns)

    def oracle_at(self, x: Sequence[float], t: float) -> Point:
        if self._oracle_fns is None:
            raise ValueError("this field has no closed-form flow")
        return tuple(f(x, t) for f in self._oracle_fns)

    def on_ambient_space(self) -> "VectorFieldSpec":
        """The same field with the domain predicate dropped (all of R^n).

        Used to continue trajectories formally through thin excluded sets,
        e.g. when assigning a common base location to doubled completion
        points.
        """
        return VectorFieldSpec(manifold=_ambient_manifold(self.dimension), rhs=self.rhs,
                               oracle_flow=self.oracle_flow)


def contains(m: ManifoldSpec, x: Sequence[float]) -> bool:
    return m.contains(x)


def field_at(v: VectorFieldSpec, x: Sequence[float]) -> Point:
    if not v.manifold.contains(x):
        raise OutsideDomainError(f"point {tuple(x)} is not in the domain")
    return v(x)


@dataclass(frozen=True)
class TaggedPoint:
    """A pair (s, x): tag on the line factor, base point in M."""

    s: float
    x: Point

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "s", float(self.s))


@dataclass(frozen=True)
class ExistenceWindow:
    """Open time interval around 0 on which the flow through a point exists.

    ``t_minus``/``t_plus`` are the window endpoints; an unbounded side is
    recorded as the probe horizon with the corresponding ``*_bounded`` flag
    cleared.  ``quality`` is "certified_by_oracle" when a closed-form flow
    cross-checked the numerics, else "numerically_estimated".
    """

    t_minus: float
    t_plus: float
    minus_bounded: bool
    plus_bounded: bool
    quality: str = "numerically_estimated"

    def __post_init__(self):
        if not (self.t_minus < 0.0 < self.t_plus):
            raise ValueError("existence window must be an open interval containing 0")


def sample_points(
    m: ManifoldSpec,
    box: Sequence[tuple[float, float]],
    count: int,
    rng: random.Random,
    max_tries: int = 10000,
) -> list[Point]:
    """Random points of M inside an axis-aligned box (rejection sampling)."""
    out: list[Point] = []
    for _ in range(max_tries):
        if len(out) >= count:
            break
        x = tuple(rng.uniform(lo, hi) for lo, hi in box)
        try:
            if m.contains(x):
                out.append(x)
        except ex.EvaluationError:
            continue
    return out


def grid_points(box: Sequence[tuple[float, float]], counts: Sequence[int]) -> list[Point]:
    """Regular lattice over a box, inclusive of endpoints."""
    axes = []
    for (lo, hi), k in zip(box, counts):
        if k < 2:
            axes.append([0.5 * (lo + hi)])
        else:
            step = (hi - lo) / (k - 1)
            axes.append([lo + i * step for i in range(k)])
    return [tuple(p) for p in itertools.product(*axes)]
