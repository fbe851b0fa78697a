"""Scenario files: named fields with domains, oracles, grids, and fixtures.

A scenario is a YAML document with named sections (``manifold``, ``field``,
``oracle``, ``morphisms``, ``grids``, ``fixtures``, ``config``) and a
``schema_version`` key; expressions are strings in the expression language.
The built-in library covers the two doubled-plane constructions plus three
closed-form reference fields used as integrator oracles.  See
docs/scenario_schema.md for the documented schema.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field, fields as dc_fields
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import expr as ex
from .completion import MorphismSpec, check_equivariance
from .geometry import ManifoldSpec, Point, TaggedPoint, VectorFieldSpec, grid_points
from .integrator import IntegratorConfig

__all__ = [
    "Scenario",
    "GridSpec",
    "Fixtures",
    "EscapeFixture",
    "PairFixture",
    "ScenarioFormatError",
    "load_scenario",
    "save_scenario",
    "builtin",
    "BUILTIN_NAMES",
]

SCHEMA_VERSION = 1
BUILTIN_NAMES = ("example2", "example3", "blowup1d", "rotation2d", "linear1d")


class ScenarioFormatError(ValueError):
    """Schema violation, reported with the path of the offending field."""


@dataclass(frozen=True)
class GridSpec:
    tags: tuple[float, ...]
    box: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]

    def base_points(self) -> list[Point]:
        return grid_points(self.box, self.counts)

    @property
    def spacing(self) -> float:
        return min((hi - lo) / (k - 1) for (lo, hi), k in zip(self.box, self.counts) if k > 1)


@dataclass(frozen=True)
class EscapeFixture:
    x0: Point
    t: float
    escape_time: float
    tol: float
    origin: str


@dataclass(frozen=True)
class PairFixture:
    p: TaggedPoint
    q: TaggedPoint
    verdict: str  # "non_separable" | "separated"
    origin: str


@dataclass(frozen=True)
class Fixtures:
    escapes: tuple[EscapeFixture, ...] = ()
    separability_pairs: tuple[PairFixture, ...] = ()
    invariance_times: tuple[float, ...] = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    field: VectorFieldSpec
    morphisms: tuple[MorphismSpec, ...]
    grids: GridSpec
    fixtures: Fixtures
    config: IntegratorConfig

    def morphism(self, name: str) -> MorphismSpec:
        for m in self.morphisms:
            if m.name == name:
                return m
        raise KeyError(f"scenario {self.name!r} has no morphism {name!r}; "
                       f"available: {[m.name for m in self.morphisms]}")


# ---------------------------------------------------------------------------
# Validation helpers
# ---------------------------------------------------------------------------

def _need(doc: dict, key: str, path: str) -> Any:
    if not isinstance(doc, dict) or key not in doc:
        raise ScenarioFormatError(f"{path}.{key}: required field is missing")
    return doc[key]


def _as_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFormatError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _as_point(value: Any, path: str) -> Point:
    if not isinstance(value, (list, tuple)) or not value:
        raise ScenarioFormatError(f"{path}: expected a coordinate list, got {value!r}")
    return tuple(_as_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _parse_expr(source: Any, path: str) -> ex.Expression:
    if not isinstance(source, str):
        raise ScenarioFormatError(f"{path}: expected an expression string, got {source!r}")
    try:
        return ex.parse_expression(source)
    except ex.ParseError as err:
        raise ScenarioFormatError(f"{path}: {err}") from None


def _parse_pred(source: Any, path: str) -> ex.Predicate:
    if not isinstance(source, str):
        raise ScenarioFormatError(f"{path}: expected a predicate string, got {source!r}")
    try:
        return ex.parse_predicate(source)
    except ex.ParseError as err:
        raise ScenarioFormatError(f"{path}: {err}") from None


def _load_manifold(doc: Any, path: str) -> ManifoldSpec:
    dim = _need(doc, "dimension", path)
    if not isinstance(dim, int) or dim < 1:
        raise ScenarioFormatError(f"{path}.dimension: expected a positive integer, got {dim!r}")
    inside = _parse_pred(_need(doc, "inside", path), f"{path}.inside")
    margin = None
    if doc.get("margin") is not None:
        margin = _parse_expr(doc["margin"], f"{path}.margin")
    try:
        return ManifoldSpec(dimension=dim, inside=inside, margin=margin)
    except ValueError as err:
        raise ScenarioFormatError(f"{path}: {err}") from None


def _load_field(doc: Any, manifold: ManifoldSpec, path: str) -> VectorFieldSpec:
    rhs_doc = _need(doc, "rhs", path)
    if not isinstance(rhs_doc, list) or len(rhs_doc) != manifold.dimension:
        raise ScenarioFormatError(
            f"{path}.rhs: expected {manifold.dimension} component expression(s)")
    rhs = tuple(_parse_expr(c, f"{path}.rhs[{i}]") for i, c in enumerate(rhs_doc))
    oracle = None
    if doc.get("oracle") is not None:
        odoc = doc["oracle"]
        if not isinstance(odoc, list) or len(odoc) != manifold.dimension:
            raise ScenarioFormatError(
                f"{path}.oracle: expected {manifold.dimension} component expression(s)")
        oracle = tuple(_parse_expr(c, f"{path}.oracle[{i}]") for i, c in enumerate(odoc))
    try:
        return VectorFieldSpec(manifold=manifold, rhs=rhs, oracle_flow=oracle)
    except ValueError as err:
        raise ScenarioFormatError(f"{path}: {err}") from None


def _load_grids(doc: Any, dimension: int, path: str) -> GridSpec:
    if doc is None:
        doc = {}
    tags = doc.get("tags", [-3, -2, -1, 0, 1, 2, 3])
    if not isinstance(tags, list) or not tags:
        raise ScenarioFormatError(f"{path}.tags: expected a non-empty list")
    tags = tuple(_as_number(v, f"{path}.tags[{i}]") for i, v in enumerate(tags))
    box_doc = doc.get("box", [[-2.0, 2.0]] * dimension)
    if not isinstance(box_doc, list) or len(box_doc) != dimension:
        raise ScenarioFormatError(f"{path}.box: expected {dimension} [lo, hi] pair(s)")
    box = []
    for i, pair in enumerate(box_doc):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ScenarioFormatError(f"{path}.box[{i}]: expected [lo, hi]")
        lo, hi = (_as_number(v, f"{path}.box[{i}]") for v in pair)
        if not lo < hi:
            raise ScenarioFormatError(f"{path}.box[{i}]: need lo < hi")
        box.append((lo, hi))
    counts_doc = doc.get("counts", [21] * dimension)
    if not isinstance(counts_doc, list) or len(counts_doc) != dimension:
        raise ScenarioFormatError(f"{path}.counts: expected {dimension} integer(s)")
    counts = []
    for i, c in enumerate(counts_doc):
        if not isinstance(c, int) or c < 2:
            raise ScenarioFormatError(f"{path}.counts[{i}]: expected an integer >= 2")
        counts.append(c)
    return GridSpec(tags=tags, box=tuple(box), counts=tuple(counts))


def _load_fixtures(doc: Any, dimension: int, path: str) -> Fixtures:
    if doc is None:
        return Fixtures()
    escapes = []
    for i, edoc in enumerate(doc.get("escapes", []) or []):
        p = f"{path}.escapes[{i}]"
        escapes.append(EscapeFixture(
            x0=_as_point(_need(edoc, "x0", p), f"{p}.x0"),
            t=_as_number(_need(edoc, "t", p), f"{p}.t"),
            escape_time=_as_number(_need(edoc, "escape_time", p), f"{p}.escape_time"),
            tol=_as_number(edoc.get("tol", 1e-6), f"{p}.tol"),
            origin=str(edoc.get("origin", "")),
        ))
    pairs = []
    for i, pdoc in enumerate(doc.get("separability_pairs", []) or []):
        p = f"{path}.separability_pairs[{i}]"
        verdict = _need(pdoc, "verdict", p)
        if verdict not in ("non_separable", "separated"):
            raise ScenarioFormatError(f"{p}.verdict: expected non_separable or separated")
        pairs.append(PairFixture(
            p=_load_tagged(_need(pdoc, "p", p), f"{p}.p", dimension),
            q=_load_tagged(_need(pdoc, "q", p), f"{p}.q", dimension),
            verdict=verdict,
            origin=str(pdoc.get("origin", "")),
        ))
    times = tuple(_as_number(v, f"{path}.invariance_times[{i}]")
                  for i, v in enumerate(doc.get("invariance_times", []) or []))
    return Fixtures(escapes=tuple(escapes), separability_pairs=tuple(pairs),
                    invariance_times=times)


def _load_tagged(doc: Any, path: str, dimension: int) -> TaggedPoint:
    if not isinstance(doc, list) or len(doc) != 2:
        raise ScenarioFormatError(f"{path}: expected [tag, [coordinates]]")
    s = _as_number(doc[0], f"{path}[0]")
    x = _as_point(doc[1], f"{path}[1]")
    if len(x) != dimension:
        raise ScenarioFormatError(f"{path}[1]: expected {dimension} coordinate(s)")
    return TaggedPoint(s=s, x=x)


def _load_config(doc: Any, path: str) -> IntegratorConfig:
    if doc is None:
        return IntegratorConfig()
    if not isinstance(doc, dict):
        raise ScenarioFormatError(f"{path}: expected a mapping of option overrides")
    known = {f.name for f in dc_fields(IntegratorConfig)}
    overrides = {}
    for key, value in doc.items():
        if key not in known:
            raise ScenarioFormatError(f"{path}.{key}: unknown option (known: {sorted(known)})")
        overrides[key] = _as_number(value, f"{path}.{key}")
    try:
        return IntegratorConfig(**overrides)
    except ValueError as err:
        raise ScenarioFormatError(f"{path}: {err}") from None


def _check_rhs_evaluability(v: VectorFieldSpec, grids: GridSpec, path: str) -> None:
    # coarse lattice over the scenario box: the field must evaluate wherever
    # the membership predicate holds
    counts = tuple(min(k, 9) for k in grids.counts)
    for x in grid_points(grids.box, counts):
        try:
            if not v.manifold.contains(x):
                continue
            v(x)
        except ex.EvaluationError as err:
            raise ScenarioFormatError(
                f"{path}.rhs: fails to evaluate at in-domain point {x}: {err}") from None


def _sample_inside(v: VectorFieldSpec, grids: GridSpec, count: int) -> list[Point]:
    rng = random.Random(20240 + v.dimension)
    out = []
    for _ in range(10 * count):
        if len(out) >= count:
            break
        x = tuple(rng.uniform(lo, hi) for lo, hi in grids.box)
        try:
            if v.manifold.contains(x):
                out.append(x)
        except ex.EvaluationError:
            continue
    return out


# ---------------------------------------------------------------------------
# Load / save
# ---------------------------------------------------------------------------

def _scenario_from_doc(doc: Any, origin: str) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioFormatError("scenario: top level must be a mapping")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioFormatError(
            f"scenario.schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    name = doc.get("name") or Path(origin).stem
    if not isinstance(name, str) or not name:
        raise ScenarioFormatError("scenario.name: expected a non-empty string")
    manifold = _load_manifold(_need(doc, "manifold", "scenario"), "scenario.manifold")
    field_spec = _load_field(_need(doc, "field", "scenario"), manifold, "scenario.field")
    grids = _load_grids(doc.get("grids"), manifold.dimension, "scenario.grids")
    _check_rhs_evaluability(field_spec, grids, "scenario.field")
    config = _load_config(doc.get("config"), "scenario.config")

    morphisms = []
    for i, mdoc in enumerate(doc.get("morphisms", []) or []):
        path = f"scenario.morphisms[{i}]"
        mname = _need(mdoc, "name", path)
        target_doc = _need(mdoc, "target", path)
        target_manifold = _load_manifold(_need(target_doc, "manifold", f"{path}.target"),
                                         f"{path}.target.manifold")
        target = _load_field(target_doc, target_manifold, f"{path}.target")
        comp_doc = _need(mdoc, "map", path)
        if not isinstance(comp_doc, list) or len(comp_doc) != target.dimension:
            raise ScenarioFormatError(
                f"{path}.map: expected {target.dimension} component expression(s)")
        components = tuple(_parse_expr(c, f"{path}.map[{i}]") for i, c in enumerate(comp_doc))
        claimed = bool(mdoc.get("claimed_equivariant", True))
        morphism = MorphismSpec(name=str(mname), target=target, components=components,
                                claimed_equivariant=claimed)
        if claimed:
            points = _sample_inside(field_spec, grids, 25)
            check_equivariance(morphism, field_spec, points)
        morphisms.append(morphism)

    fixtures = _load_fixtures(doc.get("fixtures"), manifold.dimension, "scenario.fixtures")
    for i, fx in enumerate(fixtures.escapes):
        if len(fx.x0) != manifold.dimension:
            raise ScenarioFormatError(
                f"scenario.fixtures.escapes[{i}].x0: expected {manifold.dimension} coordinate(s)")
    return Scenario(name=name, field=field_spec, morphisms=tuple(morphisms), grids=grids,
                    fixtures=fixtures, config=config)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scenario file {path} does not exist")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as err:
            raise ScenarioFormatError(f"scenario: not valid YAML: {err}") from None
    return _scenario_from_doc(doc, str(path))


def loads_scenario(text: str, name_hint: str = "scenario") -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ScenarioFormatError(f"scenario: not valid YAML: {err}") from None
    return _scenario_from_doc(doc, name_hint)


def _field_to_doc(v: VectorFieldSpec) -> dict:
    doc: dict[str, Any] = {"rhs": [ex.to_source(c) for c in v.rhs]}
    if v.oracle_flow is not None:
        doc["oracle"] = [ex.to_source(c) for c in v.oracle_flow]
    return doc


def _manifold_to_doc(m: ManifoldSpec) -> dict:
    doc: dict[str, Any] = {
        "dimension": m.dimension,
        "inside": ex.predicate_to_source(m.inside),
    }
    if m.margin is not None:
        doc["margin"] = ex.to_source(m.margin)
    return doc


def scenario_to_doc(sc: Scenario) -> dict:
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "manifold": _manifold_to_doc(sc.field.manifold),
        "field": _field_to_doc(sc.field),
        "grids": {
            "tags": list(sc.grids.tags),
            "box": [list(pair) for pair in sc.grids.box],
            "counts": list(sc.grids.counts),
        },
    }
    if sc.morphisms:
        morphs = []
        for m in sc.morphisms:
            target_doc = _field_to_doc(m.target)
            target_doc["manifold"] = _manifold_to_doc(m.target.manifold)
            morphs.append({
                "name": m.name,
                "map": [ex.to_source(c) for c in m.components],
                "claimed_equivariant": m.claimed_equivariant,
                "target": target_doc,
            })
        doc["morphisms"] = morphs
    fx = sc.fixtures
    if fx.escapes or fx.separability_pairs or fx.invariance_times:
        fdoc: dict[str, Any] = {}
        if fx.escapes:
            fdoc["escapes"] = [
                {"x0": list(e.x0), "t": e.t, "escape_time": e.escape_time, "tol": e.tol,
                 "origin": e.origin}
                for e in fx.escapes]
        if fx.separability_pairs:
            fdoc["separability_pairs"] = [
                {"p": [pr.p.s, list(pr.p.x)], "q": [pr.q.s, list(pr.q.x)],
                 "verdict": pr.verdict, "origin": pr.origin}
                for pr in fx.separability_pairs]
        if fx.invariance_times:
            fdoc["invariance_times"] = list(fx.invariance_times)
        doc["fixtures"] = fdoc
    if sc.config != IntegratorConfig():
        defaults = IntegratorConfig()
        doc["config"] = {
            f.name: getattr(sc.config, f.name)
            for f in dc_fields(IntegratorConfig)
            if getattr(sc.config, f.name) != getattr(defaults, f.name)
        }
    return doc


def save_scenario(sc: Scenario, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario_to_doc(sc), fh, sort_keys=False)


def builtin(name: str) -> Scenario:
    """Load one of the built-in scenarios by name."""
    if name not in BUILTIN_NAMES:
        raise KeyError(f"unknown built-in scenario {name!r}; available: {BUILTIN_NAMES}")
    text = resources.files("flowcomplete").joinpath("data", f"{name}.yaml").read_text("utf-8")
    return loads_scenario(text, name)


def resolve_scenario(name_or_path: str) -> Scenario:
    """Accept a built-in name or a path to a scenario file."""
    if name_or_path in BUILTIN_NAMES:
        return builtin(name_or_path)
    return load_scenario(name_or_path)
