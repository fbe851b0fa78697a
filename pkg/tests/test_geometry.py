import math
import random

import pytest

from flowcomplete.expr import parse_expression, parse_predicate
from flowcomplete.geometry import (
    ExistenceWindow,
    ManifoldSpec,
    OutsideDomainError,
    TaggedPoint,
    VectorFieldSpec,
    contains,
    field_at,
    grid_points,
    sample_points,
)


class TestManifoldSpec:
    def test_membership_punctured_plane(self, example2):
        m = example2.field.manifold
        assert contains(m, (0.0, 0.0)) is False
        assert contains(m, (1.0, 0.0)) is True

    def test_membership_excluded_segment(self, example3):
        m = example3.field.manifold
        assert contains(m, (0.0, 1.5)) is True
        assert contains(m, (0.0, 0.5)) is False

    def test_dimension_mismatch(self, example2):
        with pytest.raises(ValueError):
            example2.field.manifold.contains((1.0,))

    def test_predicate_variable_beyond_dimension(self):
        with pytest.raises(ValueError, match="x3"):
            ManifoldSpec(dimension=2, inside=parse_predicate("x3 > 0"))

    def test_margin_lower_bounds_distance(self, example3):
        m = example3.field.manifold
        assert m.margin_at((0.5, 0.0)) == pytest.approx(0.5)
        assert m.margin_at((0.0, 1.5)) == pytest.approx(0.5)
        assert m.margin_at((3.0, 4.0)) == pytest.approx(math.hypot(3.0, 3.0))


class TestVectorFieldSpec:
    def test_field_at_examples(self, example2, blowup1d, rotation2d):
        assert field_at(example2.field, (3.0, 4.0)) == (1.0, 0.0)
        assert field_at(blowup1d.field, (2.0,)) == (4.0,)
        assert field_at(rotation2d.field, (1.0, 0.0)) == (0.0, 1.0)

    def test_field_at_outside_domain(self, example2):
        with pytest.raises(OutsideDomainError):
            field_at(example2.field, (0.0, 0.0))

    def test_rhs_must_be_autonomous(self):
        m = ManifoldSpec(dimension=1, inside=parse_predicate("0 < 1"))
        with pytest.raises(ValueError, match="autonomous"):
            VectorFieldSpec(manifold=m, rhs=(parse_expression("t"),))

    def test_rhs_component_count(self):
        m = ManifoldSpec(dimension=2, inside=parse_predicate("0 < 1"))
        with pytest.raises(ValueError, match="components"):
            VectorFieldSpec(manifold=m, rhs=(parse_expression("x1"),))

    def test_ambient_variant_drops_the_domain(self, example2):
        ambient = example2.field.on_ambient_space()
        assert ambient.manifold.contains((0.0, 0.0)) is True
        assert ambient((0.0, 0.0)) == (1.0, 0.0)

    @pytest.mark.parametrize("name", ["example2", "example3", "blowup1d", "rotation2d",
                                      "linear1d"])
    def test_field_matches_oracle_time_derivative(self, name, request):
        # d/dt of the closed-form flow at t=0 must reproduce the field
        scenario = request.getfixturevalue(name)
        v = scenario.field
        rng = random.Random(7)
        pts = sample_points(v.manifold, scenario.grids.box, 100, rng)
        assert len(pts) == 100
        h = 1e-5
        for x in pts:
            fwd = v.oracle_at(x, h)
            bwd = v.oracle_at(x, -h)
            fd = tuple((a - b) / (2 * h) for a, b in zip(fwd, bwd))
            vx = field_at(v, x)
            assert max(abs(a - b) for a, b in zip(fd, vx)) <= 1e-6


class TestTaggedPointAndWindow:
    def test_tagged_point_coerces_floats(self):
        tp = TaggedPoint(1, (2, 3))
        assert tp.s == 1.0 and tp.x == (2.0, 3.0)

    def test_window_must_contain_zero(self):
        with pytest.raises(ValueError):
            ExistenceWindow(t_minus=0.5, t_plus=1.0, minus_bounded=True, plus_bounded=True)
        ExistenceWindow(t_minus=-1.0, t_plus=1.0, minus_bounded=True, plus_bounded=True)


def test_grid_points_shape():
    pts = grid_points(((-1.0, 1.0), (0.0, 2.0)), (3, 5))
    assert len(pts) == 15
    assert pts[0] == (-1.0, 0.0)
    assert pts[-1] == (1.0, 2.0)
