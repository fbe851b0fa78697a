"""Tagged-point representation of the completed phase space.

A completion point is the orbit of a tagged point (s, x) under the extended
field (unit drift on the tag line paired with the field on M).  Equality of
completion points is a flow predicate on representatives, never a structural
comparison: (s, x) and (s + dt, y) name the same point exactly when the
time-dt flow carries x to y inside M.

Charts are indexed by a tag: the chart-s coordinate of a point is the base
of its unique representative with tag s, when one exists.  Chart transitions
are time-(s - r) flow maps.  The induced flow on the completed space is pure
tag arithmetic and therefore total; it never integrates.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from typing import Sequence

from . import expr as ex
from .geometry import (
    OutsideDomainError,
    Point,
    TaggedPoint,
    VectorFieldSpec,
    dist,
    norm,
)
from .integrator import FlowOutcome, FlowStatus, IntegratorConfig, flow

__all__ = [
    "CompletionPoint",
    "ChartHandle",
    "CompletionConfig",
    "MorphismSpec",
    "Completion",
    "UnknownVerdictError",
    "NotInChartError",
    "NotInOverlapError",
    "TargetNotCompleteError",
    "EquivarianceError",
    "check_equivariance",
]


class UnknownVerdictError(Exception):
    """The numerics were inconclusive; no verdict can be given honestly."""


class NotInChartError(Exception):
    """The point has no representative with the requested tag."""

    def __init__(self, message: str, escape_time: float | None = None):
        super().__init__(message)
        self.escape_time = escape_time


class NotInOverlapError(Exception):
    """The chart transition is undefined at this base point."""

    def __init__(self, message: str, escape_time: float | None = None):
        super().__init__(message)
        self.escape_time = escape_time


class TargetNotCompleteError(Exception):
    """The morphism target field escaped; it is not complete at the needed horizon."""


class EquivarianceError(ValueError):
    """A morphism claimed to intertwine the fields but fails the spot check."""


@dataclass(frozen=True, eq=False)
class CompletionPoint:
    """One point of the completed space, named by an arbitrary representative.

    Structural equality is deliberately disabled; use
    :meth:`Completion.same_point`.
    """

    rep: TaggedPoint

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"CompletionPoint(s={self.rep.s!r}, x={self.rep.x!r})"


@dataclass(frozen=True)
class ChartHandle:
    s: float


@dataclass(frozen=True)
class CompletionConfig:
    # base matching tolerance; scaled by tag gap and local field magnitude
    match_tol: float = 1e-6
    # integer chart grid {-H..H} used by orbit and common-chart searches
    chart_half_width: int = 10
    # time horizon for orbit searches
    orbit_horizon: float = 10.0


@dataclass(frozen=True)
class MorphismSpec:
    """A smooth map into a target field, expected to intertwine the dynamics."""

    name: str
    target: VectorFieldSpec
    components: tuple[ex.Expression, ...]
    claimed_equivariant: bool = True

    def __post_init__(self):
        if len(self.components) != self.target.dimension:
            raise ValueError(
                f"morphism {self.name!r} has {len(self.components)} components, "
                f"target dimension is {self.target.dimension}")
        object.__setattr__(
            self, "_fns", tuple(ex.compile_expression(c) for c in self.components))

    def __call__(self, x: Sequence[float]) -> Point:
        return tuple(f(x, 0.0) for f in self._fns)


def check_equivariance(m: MorphismSpec, source: VectorFieldSpec, points: Sequence[Point],
                       tol: float = 1e-4, h: float = 1e-5) -> None:
    """Spot-check that the morphism intertwines the fields, by finite differences."""
    for x in points:
        vx = source(x)
        fx = m(x)
        yf = m.target(fx)
        xp = tuple(a + h * b for a, b in zip(x, vx))
        xm = tuple(a - h * b for a, b in zip(x, vx))
        push = tuple((a - b) / (2 * h) for a, b in zip(m(xp), m(xm)))
        if dist(push, yf) > tol * (1.0 + norm(yf)):
            raise EquivarianceError(
                f"morphism {m.name!r} is not equivariant at {x}: "
                f"pushforward {push} vs target field {yf}")


class Completion:
    """Queries on the flow completion of one vector field."""

    def __init__(self, field: VectorFieldSpec, integrator_cfg: IntegratorConfig | None = None,
                 cfg: CompletionConfig | None = None):
        self.field = field
        self.integrator_cfg = integrator_cfg or IntegratorConfig()
        self.cfg = cfg or CompletionConfig()
        self._ambient = field.on_ambient_space()

    # -- construction -------------------------------------------------------

    def embed(self, s: float, x: Sequence[float]) -> CompletionPoint:
        x = tuple(float(c) for c in x)
        if not self.field.manifold.contains(x):
            raise OutsideDomainError(f"cannot embed {x}: not in the domain")
        return CompletionPoint(TaggedPoint(float(s), x))

    def chart(self, s: float) -> ChartHandle:
        return ChartHandle(float(s))

    # -- equality and charts -------------------------------------------------

    def match_tolerance(self, dt: float, at: Sequence[float]) -> float:
        speed = norm(self.field(at))
        return self.cfg.match_tol * (1.0 + abs(dt)) * (1.0 + speed)

    def same_point(self, p: CompletionPoint, q: CompletionPoint) -> bool:
        dt = q.rep.s - p.rep.s
        forward = flow(self.field, p.rep.x, dt, self.integrator_cfg)
        if forward.completed:
            return dist(forward.endpoint, q.rep.x) <= self.match_tolerance(dt, q.rep.x)
        if forward.escaped:
            # cross-check the reverse leg before concluding the points differ
            back = flow(self.field, q.rep.x, -dt, self.integrator_cfg)
            if back.completed:
                return dist(back.endpoint, p.rep.x) <= self.match_tolerance(dt, p.rep.x)
            if back.escaped:
                return False
        raise UnknownVerdictError(
            f"equality of {p!r} and {q!r} is undecided: integration inconclusive")

    def in_chart(self, p: CompletionPoint, c: ChartHandle) -> bool:
        dt = c.s - p.rep.s
        if dt == 0.0:
            return True
        outcome = flow(self.field, p.rep.x, dt, self.integrator_cfg)
        if outcome.completed:
            return True
        if outcome.escaped:
            return False
        raise UnknownVerdictError(f"chart membership at tag {c.s} is undecided")

    def to_chart(self, p: CompletionPoint, c: ChartHandle) -> Point:
        dt = c.s - p.rep.s
        if dt == 0.0:
            return p.rep.x
        outcome = flow(self.field, p.rep.x, dt, self.integrator_cfg)
        if outcome.completed:
            return outcome.endpoint
        if outcome.escaped:
            raise NotInChartError(
                f"{p!r} has no tag-{c.s} representative: flow leaves the domain "
                f"near t={outcome.escape_time_estimate!r}",
                escape_time=outcome.escape_time_estimate)
        raise UnknownVerdictError(f"chart coordinate at tag {c.s} is undecided")

    def transition(self, r: float, s: float, x: Sequence[float]) -> Point:
        x = tuple(float(c) for c in x)
        if not self.field.manifold.contains(x):
            raise OutsideDomainError(f"transition source {x} is not in the domain")
        if s == r:
            return x
        outcome = flow(self.field, x, s - r, self.integrator_cfg)
        if outcome.completed:
            return outcome.endpoint
        if outcome.escaped:
            raise NotInOverlapError(
                f"{x} is not in the overlap of charts {r} and {s}: escape near "
                f"t={outcome.escape_time_estimate!r}",
                escape_time=outcome.escape_time_estimate)
        raise UnknownVerdictError(f"transition {r}->{s} undecided at {x}")

    # -- induced complete flow ------------------------------------------------

    def complete_flow(self, p: CompletionPoint, t: float) -> CompletionPoint:
        # pure tag arithmetic: total for every t by construction
        return CompletionPoint(TaggedPoint(p.rep.s - t, p.rep.x))

    def ambient_shadow(self, p: CompletionPoint) -> Point | None:
        """Tag-0 base location along the field continued over all of R^n.

        Where the in-domain pullback to tag 0 exists this equals the chart-0
        coordinate; over a doubled locus it continues formally through the
        thin excluded set, which is what makes doubled partners comparable.
        Returns None when even the ambient flow fails (blow-up or a genuine
        singularity of the field expressions).
        """
        if p.rep.s == 0.0:
            return p.rep.x
        outcome = flow(self._ambient, p.rep.x, -p.rep.s, self.integrator_cfg)
        if outcome.completed:
            return outcome.endpoint
        return None

    # -- morphism lifting ------------------------------------------------------

    def lift(self, morphism: MorphismSpec, p: CompletionPoint) -> Point:
        fx = morphism(p.rep.x)
        if not morphism.target.manifold.contains(fx):
            raise TargetNotCompleteError(
                f"morphism {morphism.name!r} maps {p.rep.x} outside the target domain")
        if p.rep.s == 0.0:
            return fx
        outcome = flow(morphism.target, fx, -p.rep.s, self.integrator_cfg)
        if outcome.completed:
            return outcome.endpoint
        if outcome.escaped:
            raise TargetNotCompleteError(
                f"target field of {morphism.name!r} is not complete: escape near "
                f"t={outcome.escape_time_estimate!r} while lifting tag {p.rep.s}")
        raise UnknownVerdictError(f"lift along {morphism.name!r} is undecided")

    # -- orbit queries ----------------------------------------------------------

    def same_orbit_base(self, x: Sequence[float], y: Sequence[float],
                        horizon: float | None = None) -> bool | None:
        """Whether y lies on the trajectory of x within the horizon.

        Shooting on a coarse time grid from the dense trajectory, refined by
        local minimization of the endpoint distance.  Returns None (unknown)
        when the numerics were inconclusive and no match was found.
        """
        x = tuple(float(c) for c in x)
        y = tuple(float(c) for c in y)
        if not self.field.manifold.contains(x) or not self.field.manifold.contains(y):
            raise OutsideDomainError("orbit query requires points of the domain")
        horizon = horizon or self.cfg.orbit_horizon
        if dist(x, y) <= self.match_tolerance(0.0, y):
            return True
        saw_inconclusive = False
        best = math.inf
        for signed in (horizon, -horizon):
            outcome = flow(self.field, x, signed, self.integrator_cfg)
            if outcome.status is FlowStatus.INCONCLUSIVE:
                saw_inconclusive = True
            samples = list(outcome.dense_samples)
            if not samples:
                continue
            gaps = [dist(xs, y) for _, xs in samples]
            order = sorted(range(len(samples)), key=lambda i: gaps[i])
            for idx in order[:2]:
                t_anchor, x_anchor = samples[idx]
                span = max(abs(samples[min(idx + 1, len(samples) - 1)][0] - t_anchor),
                           abs(t_anchor - samples[max(idx - 1, 0)][0]), 1e-3)
                t_local, d_local = self._refine_closest(x_anchor, y, span)
                t_total = t_anchor + t_local
                if d_local <= self.match_tolerance(t_total, y):
                    return True
                best = min(best, d_local)
        if saw_inconclusive:
            return None
        return False

    def _refine_closest(self, x_anchor: Point, y: Point, span: float) -> tuple[float, float]:
        # golden-section on the endpoint distance of short legs from the anchor
        def g(dt: float) -> float:
            if dt == 0.0:
                return dist(x_anchor, y)
            leg = flow(self.field, x_anchor, dt, self.integrator_cfg)
            if leg.completed:
                return dist(leg.endpoint, y)
            return math.inf

        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = -span, span
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        gc, gd = g(c), g(d)
        while b - a > 1e-9 * (1.0 + span):
            if gc < gd:
                b, d, gd = d, c, gc
                c = b - invphi * (b - a)
                gc = g(c)
            else:
                a, c, gc = c, d, gd
                d = a + invphi * (b - a)
                gd = g(d)
        if gc < gd:
            return c, gc
        return d, gd

    def same_orbit(self, p: CompletionPoint, q: CompletionPoint,
                   horizon: float | None = None) -> bool | None:
        """Whether p and q lie on one orbit of the induced complete flow.

        Searches the integer chart grid for a common chart and compares the
        chart coordinates there; when the two points share no chart (the
        doubled-branch situation) it falls back to comparing representative
        base orbits directly, which decides the question completely.
        """
        horizon = horizon or self.cfg.orbit_horizon
        half = self.cfg.chart_half_width
        for c in sorted(range(-half, half + 1), key=lambda v: (abs(v), v)):
            handle = ChartHandle(float(c))
            try:
                if self.in_chart(p, handle) and self.in_chart(q, handle):
                    xp = self.to_chart(p, handle)
                    xq = self.to_chart(q, handle)
                    return self.same_orbit_base(xp, xq, horizon)
            except UnknownVerdictError:
                continue
        return self.same_orbit_base(p.rep.x, q.rep.x, horizon)
