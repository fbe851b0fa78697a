"""Non-separability probing and the doubled-locus identification report.

Two distinct completion points that project to the same base location are
probed by flowing small perturbations of one representative across the tag
gap to the other: if the probe images close in on the target as the probe
radius shrinks, the pair is declared non-separable; if every completed probe
stays far away, or every probe dies long before the comparison tag, the pair
is declared separated.  Both verdicts are heuristic (a certificate for
disjoint saturated neighborhoods is beyond numerics) and an explicit unknown
verdict absorbs numeric failure.
"""

from __future__ import annotations

import concurrent.futures
import math
import random
import zlib
from dataclasses import dataclass, field, replace
from typing import Sequence

from .completion import Completion, CompletionPoint, UnknownVerdictError
from .expr import EvaluationError
from .geometry import Point, TaggedPoint, dist, norm
from .integrator import FlowStatus, flow

__all__ = [
    "ProbeConfig",
    "EvidenceLevel",
    "SeparabilityVerdict",
    "separability_test",
    "InvarianceResult",
    "nonseparability_flow_invariance",
    "LocationCell",
    "NonSeparableEdge",
    "IdentificationReport",
    "identification_report",
    "DisjointSets",
]

EQUAL = "equal"
SEPARATED = "separated"
NON_SEPARABLE = "non_separable"
UNKNOWN = "unknown"

SINGLE = "single"
DOUBLED_SEPARATED = "doubled_separated"
DOUBLED_NONSEPARABLE = "doubled_nonseparable"

LOCALLY_MANIFOLD = "locally_manifold"
BRANCHING_DETECTED = "branching_detected"


@dataclass(frozen=True)
class ProbeConfig:
    radii: tuple[float, ...] = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
    # probe directions per radius level scale with dimension: 8 * n
    directions_per_dim: int = 8
    merge_tol: float = 1e-4
    seed: int = 0
    # escапe-time refinement is relaxed for probes: the verdicts only need
    # escape times located to coarse accuracy
    probe_escape_refine_tol: float = 1e-6
    refine_iterations: int = 60
    # fraction of |delta| by which probe escape times must fall short of the
    # comparison tag for the all-escaped separated clause
    escape_gap: float = 0.01


@dataclass(frozen=True)
class EvidenceLevel:
    radius: float
    best_probe: Point
    image_distance: float


@dataclass(frozen=True)
class SeparabilityVerdict:
    kind: str
    evidence: tuple[EvidenceLevel, ...] = ()
    # smallest tested radius at which all completed probes kept their distance
    separated_radius: float | None = None
    note: str = ""


def _probe_seed(seed: int, p: TaggedPoint, q: TaggedPoint, side: int) -> int:
    text = f"{seed}|{p.s!r}|{p.x!r}|{q.s!r}|{q.x!r}|{side}"
    return zlib.crc32(text.encode("utf-8"))


def _directions(n: int, count: int, rng: random.Random) -> list[Point]:
    if n == 1:
        return [(1.0,), (-1.0,)]
    if n == 2:
        offset = rng.uniform(0.0, 2.0 * math.pi / count)
        return [(math.cos(offset + 2.0 * math.pi * i / count),
                 math.sin(offset + 2.0 * math.pi * i / count)) for i in range(count)]
    dirs = []
    for _ in range(count):
        vec = [rng.gauss(0.0, 1.0) for _ in range(n)]
        length = norm(vec) or 1.0
        dirs.append(tuple(v / length for v in vec))
    return dirs


def _nelder_mead(objective, start: Point, step: float, iterations: int) -> tuple[Point, float]:
    """Tiny derivative-free simplex minimizer over probe offsets."""
    n = len(start)
    simplex = [tuple(start)]
    for i in range(n):
        vertex = list(start)
        vertex[i] += step
        simplex.append(tuple(vertex))
    values = [objective(v) for v in simplex]
    for _ in range(iterations):
        order = sorted(range(n + 1), key=lambda i: values[i])
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        centroid = tuple(sum(v[i] for v in simplex[:-1]) / n for i in range(n))
        worst = simplex[-1]
        refl = tuple(c + (c - w) for c, w in zip(centroid, worst))
        f_refl = objective(refl)
        if f_refl < values[0]:
            expa = tuple(c + 2.0 * (c - w) for c, w in zip(centroid, worst))
            f_expa = objective(expa)
            if f_expa < f_refl:
                simplex[-1], values[-1] = expa, f_expa
            else:
                simplex[-1], values[-1] = refl, f_refl
        elif f_refl < values[-2]:
            simplex[-1], values[-1] = refl, f_refl
        else:
            contr = tuple(c + 0.5 * (w - c) for c, w in zip(centroid, worst))
            f_contr = objective(contr)
            if f_contr < values[-1]:
                simplex[-1], values[-1] = contr, f_contr
            else:
                best = simplex[0]
                simplex = [best] + [
                    tuple(b + 0.5 * (v - b) for b, v in zip(best, vertex))
                    for vertex in simplex[1:]
                ]
                values = [values[0]] + [objective(v) for v in simplex[1:]]
    order = sorted(range(n + 1), key=lambda i: values[i])
    return simplex[order[0]], values[order[0]]


@dataclass
class _SideResult:
    kind: str
    evidence: tuple[EvidenceLevel, ...]
    separated_radius: float | None
    note: str = ""


def _probe_side(comp: Completion, center: TaggedPoint, target: TaggedPoint,
                pcfg: ProbeConfig, side: int) -> _SideResult:
    v = comp.field
    n = v.dimension
    delta = target.s - center.s
    run_cfg = replace(comp.integrator_cfg, escape_refine_tol=pcfg.probe_escape_refine_tol)
    rng = random.Random(_probe_seed(pcfg.seed, center, target, side))
    count = pcfg.directions_per_dim * n

    saw_inconclusive = False
    escape_near_target = False
    any_escape = False

    def probe(offset: Point) -> float:
        nonlocal saw_inconclusive, escape_near_target, any_escape
        x = tuple(c + o for c, o in zip(center.x, offset))
        try:
            if not v.manifold.contains(x):
                return math.inf
            outcome = flow(v, x, delta, run_cfg)
        except EvaluationError:
            return math.inf
        if outcome.completed:
            return dist(outcome.endpoint, target.x)
        if outcome.escaped:
            any_escape = True
            tau = outcome.escape_time_estimate
            if abs(delta) - abs(tau) <= pcfg.escape_gap * (1.0 + abs(delta)):
                escape_near_target = True
            return math.inf
        saw_inconclusive = True
        return math.inf

    evidence: list[EvidenceLevel] = []
    best_offset: Point | None = None
    best_distance = math.inf
    smallest_level_min: float | None = None

    for rho in pcfg.radii:
        level_best: tuple[float, Point] | None = None
        for direction in _directions(n, count, rng):
            offset = tuple(rho * d for d in direction)
            value = probe(offset)
            if value < (level_best[0] if level_best else math.inf):
                level_best = (value, offset)
        if level_best and math.isfinite(level_best[0]):
            # sharpen the direction within the level: offsets are projected to
            # the sphere of radius rho, so the recorded distances keep their
            # per-radius scale and the evidence cadence stays comparable
            # across levels
            def sphere_objective(offset: Point, rho=rho) -> float:
                length = norm(offset)
                if length == 0.0:
                    return math.inf
                return probe(tuple(o * rho / length for o in offset))

            refined_offset, refined_value = _nelder_mead(
                sphere_objective, level_best[1], 0.3 * rho, iterations=10)
            if refined_value < level_best[0]:
                length = norm(refined_offset)
                refined_offset = tuple(o * rho / length for o in refined_offset)
                level_best = (refined_value, refined_offset)
            probe_point = tuple(c + o for c, o in zip(center.x, level_best[1]))
            evidence.append(EvidenceLevel(rho, probe_point, level_best[0]))
            if level_best[0] < best_distance:
                best_distance, best_offset = level_best[0], level_best[1]
            smallest_level_min = level_best[0]
        else:
            smallest_level_min = None

    if best_offset is not None:
        # final sharpening: how close can a completed probe image get to the
        # target?  Offsets stay capped at the coarsest schedule radius; the
        # probe must remain a local perturbation of the center
        cap = pcfg.radii[0]

        def capped(offset: Point) -> float:
            length = norm(offset)
            if length > cap:
                offset = tuple(o * cap / length for o in offset)
            return probe(offset)

        final_offset, final_value = _nelder_mead(
            capped, best_offset, 0.25 * norm(best_offset), pcfg.refine_iterations)
        if math.isfinite(final_value) and final_value < best_distance:
            length = norm(final_offset)
            if length > cap:
                final_offset = tuple(o * cap / length for o in final_offset)
            probe_point = tuple(c + o for c, o in zip(center.x, final_offset))
            evidence.append(EvidenceLevel(norm(final_offset), probe_point, final_value))
            best_distance = final_value

    # non-separable: the recorded distances keep collapsing and end below
    # the merge tolerance
    if len(evidence) >= 3:
        d1, d2, d3 = (lvl.image_distance for lvl in evidence[-3:])
        if d2 <= 0.5 * d1 and d3 <= 0.5 * d2 and d3 <= pcfg.merge_tol:
            return _SideResult(NON_SEPARABLE, tuple(evidence), None)

    completed_levels = [lvl for lvl in evidence]
    gap = 10.0 * pcfg.merge_tol
    smallest_ok = smallest_level_min is None or smallest_level_min >= gap
    if smallest_ok and not saw_inconclusive:
        if completed_levels and best_distance >= gap:
            return _SideResult(SEPARATED, tuple(evidence), pcfg.radii[-1])
        if not completed_levels and any_escape and not escape_near_target:
            return _SideResult(
                SEPARATED, tuple(evidence), pcfg.radii[-1],
                note="all probes left the domain well before the comparison tag")
    return _SideResult(UNKNOWN, tuple(evidence), None,
                       note="probe evidence is neither collapsing nor cleanly clear")


def separability_test(comp: Completion, p: CompletionPoint, q: CompletionPoint,
                      pcfg: ProbeConfig | None = None) -> SeparabilityVerdict:
    """Classify a pair of completion points: equal, separated, non-separable, unknown."""
    pcfg = pcfg or ProbeConfig()
    try:
        if comp.same_point(p, q):
            return SeparabilityVerdict(EQUAL)
    except UnknownVerdictError:
        return SeparabilityVerdict(UNKNOWN, note="equality check was inconclusive")
    forward = _probe_side(comp, p.rep, q.rep, pcfg, side=0)
    backward = _probe_side(comp, q.rep, p.rep, pcfg, side=1)
    if forward.kind == backward.kind and forward.kind != UNKNOWN:
        return SeparabilityVerdict(forward.kind, forward.evidence,
                                   forward.separated_radius, note=forward.note)
    return SeparabilityVerdict(
        UNKNOWN, forward.evidence, None,
        note=f"sides disagree or are unknown ({forward.kind} vs {backward.kind})")


@dataclass(frozen=True)
class InvarianceResult:
    confirmed: bool
    confirmed_times: tuple[float, ...]
    refuted_times: tuple[float, ...]
    unknown_times: tuple[float, ...]


def nonseparability_flow_invariance(comp: Completion, p: CompletionPoint, q: CompletionPoint,
                                    times: Sequence[float],
                                    pcfg: ProbeConfig | None = None) -> InvarianceResult:
    """Check that the complete flow carries a non-separable pair to non-separable pairs.

    Unknown verdicts are reported as failures to confirm, kept distinct from
    outright refutations.
    """
    pcfg = pcfg or ProbeConfig()
    base = separability_test(comp, p, q, pcfg)
    if base.kind != NON_SEPARABLE:
        raise ValueError(f"invariance check requires a non-separable pair, got {base.kind}")
    confirmed, refuted, unknown = [], [], []
    for t in times:
        verdict = separability_test(comp, comp.complete_flow(p, t), comp.complete_flow(q, t),
                                    pcfg)
        if verdict.kind == NON_SEPARABLE:
            confirmed.append(t)
        elif verdict.kind == UNKNOWN:
            unknown.append(t)
        else:
            refuted.append(t)
    return InvarianceResult(confirmed=not refuted and not unknown,
                            confirmed_times=tuple(confirmed), refuted_times=tuple(refuted),
                            unknown_times=tuple(unknown))


# ---------------------------------------------------------------------------
# Identification report
# ---------------------------------------------------------------------------

class DisjointSets:
    """Union-find with path compression over integer indices."""

    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


@dataclass(frozen=True)
class LocationCell:
    position: Point
    class_count: int
    classification: str  # single / doubled_separated / doubled_nonseparable / unknown
    verdict: str | None
    # classes seen on the two sides of the locus through this location
    side_counts: tuple[int, int] | None
    class_sizes: tuple[int, ...]


@dataclass(frozen=True)
class NonSeparableEdge:
    position: Point
    class_a: int
    class_b: int


@dataclass(frozen=True)
class IdentificationReport:
    scenario: str
    tags: tuple[float, ...]
    box: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]
    cells: tuple[LocationCell, ...]
    edges: tuple[NonSeparableEdge, ...]
    class_count: int
    classification_counts: dict
    quotient_diagnostic: str
    unknown_cells: tuple[Point, ...]

    def cell_at(self, position: Sequence[float], tol: float = 1e-6) -> LocationCell | None:
        for cell in self.cells:
            if dist(cell.position, position) <= tol:
                return cell
        return None


def _cluster_by_position(points: list[Point], tol: float) -> list[list[int]]:
    """Group indices whose positions coincide within tol (hash buckets + neighbors)."""
    if not points:
        return []
    n = len(points[0])
    buckets: dict[tuple[int, ...], list[int]] = {}
    keys: list[tuple[int, ...]] = []
    for i, pt in enumerate(points):
        key = tuple(int(math.floor(c / tol)) for c in pt)
        keys.append(key)
        buckets.setdefault(key, []).append(i)
    dsu = DisjointSets(len(points))
    offsets = [()]
    for _ in range(n):
        offsets = [o + (d,) for o in offsets for d in (-1, 0, 1)]
    for i, pt in enumerate(points):
        for off in offsets:
            key = tuple(k + d for k, d in zip(keys[i], off))
            for j in buckets.get(key, ()):
                if j > i and dist(pt, points[j]) <= tol:
                    dsu.union(i, j)
    groups: dict[int, list[int]] = {}
    for i in range(len(points)):
        groups.setdefault(dsu.find(i), []).append(i)
    return list(groups.values())


def identification_report(comp: Completion, tags: Sequence[float], base_grid: Sequence[Point],
                          pcfg: ProbeConfig | None = None, scenario_name: str = "",
                          box: Sequence[tuple[float, float]] = (),
                          counts: Sequence[int] = (), spacing: float | None = None,
                          jobs: int = 1) -> IdentificationReport:
    """Materialize completion points over a grid and classify the doubled loci.

    Embeds every (tag, base point) pair, merges equal completion points into
    classes (equality tested along each trajectory of the formal ambient
    continuation, where equal points must lie), groups classes by their
    common base location, and runs the separability probe between distinct
    classes over one location.  Locations are grid cells of the report.
    """
    pcfg = pcfg or ProbeConfig()
    v = comp.field
    manifold = v.manifold

    cloud: list[TaggedPoint] = []
    for g in base_grid:
        try:
            inside = manifold.contains(g)
        except EvaluationError:
            inside = False
        if not inside:
            continue
        for s in tags:
            cloud.append(TaggedPoint(float(s), tuple(g)))

    shadows: list[Point | None] = []
    unknown_positions: list[Point] = []
    for tp in cloud:
        shadow = comp.ambient_shadow(CompletionPoint(tp))
        shadows.append(shadow)
        if shadow is None:
            unknown_positions.append(tp.x)

    known = [i for i, s in enumerate(shadows) if s is not None]
    loc_tol = 1e-5
    if box:
        # the report covers the scanned box; orbits whose base location falls
        # outside it are out of scope
        slack = (_infer_spacing(base_grid) / 2.0) if base_grid else 0.0
        known = [i for i in known
                 if all(lo - slack <= c <= hi + slack
                        for c, (lo, hi) in zip(shadows[i], box))]
    clusters = _cluster_by_position([shadows[i] for i in known], loc_tol)

    # merge equal completion points: within one shadow cluster the tagged
    # points lie on a single formally-continued trajectory, so equality holds
    # exactly on tag-intervals and testing consecutive tags suffices
    dsu = DisjointSets(len(cloud))
    cluster_unknowns: set[int] = set()
    for ci, members in enumerate(clusters):
        idx = sorted((known[m] for m in members), key=lambda i: cloud[i].s)
        for a, b in zip(idx, idx[1:]):
            try:
                if comp.same_point(CompletionPoint(cloud[a]), CompletionPoint(cloud[b])):
                    dsu.union(a, b)
            except UnknownVerdictError:
                cluster_unknowns.add(ci)

    # per-cluster classes
    cluster_positions: list[Point] = []
    cluster_classes: list[list[int]] = []  # cloud root indices
    for members in clusters:
        idx = [known[m] for m in members]
        roots = sorted({dsu.find(i) for i in idx})
        mean = tuple(
            sum(shadows[i][d] for i in idx) / len(idx)
            for d in range(v.dimension))
        cluster_positions.append(mean)
        cluster_classes.append(roots)

    members_of: dict[int, list[int]] = {}
    for i in known:
        members_of.setdefault(dsu.find(i), []).append(i)
    class_size = {root: len(members) for root, members in members_of.items()}

    def class_representative(root: int) -> CompletionPoint:
        best = min(members_of[root], key=lambda i: (abs(cloud[i].s), cloud[i].s))
        return CompletionPoint(cloud[best])

    # separability between distinct classes over one location
    multi = [ci for ci, roots in enumerate(cluster_classes) if len(roots) >= 2]
    verdicts: dict[int, str] = {}
    edge_list: list[NonSeparableEdge] = []

    def judge(ci: int) -> tuple[int, str, list[tuple[int, int]]]:
        roots = cluster_classes[ci]
        kinds = []
        nonsep_pairs = []
        for ai in range(len(roots)):
            for bi in range(ai + 1, len(roots)):
                verdict = separability_test(comp, class_representative(roots[ai]),
                                            class_representative(roots[bi]), pcfg)
                kinds.append(verdict.kind)
                if verdict.kind == NON_SEPARABLE:
                    nonsep_pairs.append((roots[ai], roots[bi]))
        if any(k == NON_SEPARABLE for k in kinds):
            overall = NON_SEPARABLE
        elif kinds and all(k == SEPARATED for k in kinds):
            overall = SEPARATED
        else:
            overall = UNKNOWN
        return ci, overall, nonsep_pairs

    if jobs > 1 and len(multi) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(judge, multi))
    else:
        results = [judge(ci) for ci in multi]
    for ci, overall, nonsep_pairs in results:
        verdicts[ci] = overall
        for a, b in nonsep_pairs:
            edge_list.append(NonSeparableEdge(cluster_positions[ci], a, b))

    # sheet counts across the locus through each multi-class location
    if spacing is None:
        spacing = _infer_spacing(base_grid)
    count_at: dict[tuple[int, ...], int] = {}
    cluster_by_key: dict[tuple[int, ...], int] = {}
    snap = max(spacing / 2.0, loc_tol)
    for ci, pos in enumerate(cluster_positions):
        key = tuple(int(round(c / snap)) for c in pos)
        cluster_by_key[key] = ci
        count_at[key] = len(cluster_classes[ci])

    nonsep_positions = [cluster_positions[ci] for ci in multi
                        if verdicts.get(ci) == NON_SEPARABLE]
    side_counts: dict[int, tuple[int, int] | None] = {}
    for ci in multi:
        side_counts[ci] = _sheet_counts(
            cluster_positions[ci], nonsep_positions, count_at, snap, spacing, v.dimension)

    # assemble cells
    cells = []
    classification_counts = {SINGLE: 0, DOUBLED_SEPARATED: 0, DOUBLED_NONSEPARABLE: 0,
                             UNKNOWN: 0}
    for ci, pos in enumerate(cluster_positions):
        roots = cluster_classes[ci]
        if ci in cluster_unknowns:
            classification = UNKNOWN
            verdict = UNKNOWN
        elif len(roots) == 1:
            classification = SINGLE
            verdict = None
        else:
            verdict = verdicts.get(ci, UNKNOWN)
            classification = {NON_SEPARABLE: DOUBLED_NONSEPARABLE,
                              SEPARATED: DOUBLED_SEPARATED}.get(verdict, UNKNOWN)
        classification_counts[classification] += 1
        if classification == UNKNOWN:
            unknown_positions.append(pos)
        cells.append(LocationCell(
            position=pos, class_count=len(roots), classification=classification,
            verdict=verdict, side_counts=side_counts.get(ci),
            class_sizes=tuple(class_size.get(r, 0) for r in roots)))
    cells.sort(key=lambda c: c.position)

    diagnostic = LOCALLY_MANIFOLD
    for cell in cells:
        if cell.classification == DOUBLED_NONSEPARABLE and cell.side_counts is not None:
            lo, hi = cell.side_counts
            if lo > 0 and hi > 0 and lo != hi:
                diagnostic = BRANCHING_DETECTED
                break

    n_classes = len({root for roots in cluster_classes for root in roots})
    return IdentificationReport(
        scenario=scenario_name, tags=tuple(float(s) for s in tags),
        box=tuple(tuple(b) for b in box), counts=tuple(counts), cells=tuple(cells),
        edges=tuple(edge_list), class_count=n_classes,
        classification_counts=classification_counts, quotient_diagnostic=diagnostic,
        unknown_cells=tuple(unknown_positions))


def _infer_spacing(base_grid: Sequence[Point]) -> float:
    xs = sorted({g[0] for g in base_grid})
    gaps = [b - a for a, b in zip(xs, xs[1:]) if b - a > 1e-12]
    return min(gaps) if gaps else 0.1


def _sheet_counts(position: Point, nonsep_positions: list[Point],
                  count_at: dict, snap: float, spacing: float,
                  dimension: int) -> tuple[int, int] | None:
    """Class counts on the two sides of the locus through a doubled location.

    The locus direction is estimated from nearby doubled locations; the ring
    of base offsets at radius five grid spacings is split by the locus normal
    and ring points sitting on the locus itself are excluded.
    """
    if dimension != 2:
        return None
    nearby = [p for p in nonsep_positions
              if 1e-9 < dist(p, position) <= 6.0 * spacing]
    if nearby:
        mx = sum(p[0] - position[0] for p in nearby) / len(nearby)
        my = sum(p[1] - position[1] for p in nearby) / len(nearby)
        sxx = sum((p[0] - position[0]) ** 2 for p in nearby) / len(nearby)
        sxy = sum((p[0] - position[0]) * (p[1] - position[1]) for p in nearby) / len(nearby)
        syy = sum((p[1] - position[1]) ** 2 for p in nearby) / len(nearby)
        # principal axis of the scatter of nearby doubled locations
        theta = 0.5 * math.atan2(2.0 * sxy, sxx - syy)
        tangent = (math.cos(theta), math.sin(theta))
    else:
        tangent = (1.0, 0.0)
    normal = (-tangent[1], tangent[0])
    radius = 5.0 * spacing
    lo_counts: list[int] = []
    hi_counts: list[int] = []
    for k in range(8):
        angle = 2.0 * math.pi * k / 8.0
        offset = (radius * math.cos(angle), radius * math.sin(angle))
        signed = offset[0] * normal[0] + offset[1] * normal[1]
        if abs(signed) < 0.9 * spacing:
            continue  # on the locus itself
        ring = (position[0] + offset[0], position[1] + offset[1])
        key = tuple(int(round(c / snap)) for c in ring)
        if key not in count_at:
            continue
        (hi_counts if signed > 0 else lo_counts).append(count_at[key])
    if not lo_counts and not hi_counts:
        return None

    def mode(values: list[int]) -> int:
        if not values:
            return 0
        return max(sorted(set(values)), key=values.count)

    return (mode(lo_counts), mode(hi_counts))
