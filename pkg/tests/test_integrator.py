import math
import random

import pytest

from flowcomplete.expr import parse_expression, parse_predicate
from flowcomplete.geometry import ManifoldSpec, OutsideDomainError, VectorFieldSpec, dist
from flowcomplete.integrator import (
    FlowStatus,
    IntegratorConfig,
    existence_window,
    flow,
    order_check,
)


def make_field(dim, rhs, inside="0 < 1", margin=None, oracle=None):
    m = ManifoldSpec(
        dimension=dim,
        inside=parse_predicate(inside),
        margin=parse_expression(margin) if margin else None,
    )
    return VectorFieldSpec(
        manifold=m,
        rhs=tuple(parse_expression(c) for c in rhs),
        oracle_flow=tuple(parse_expression(c) for c in oracle) if oracle else None,
    )


class TestFlowBasics:
    def test_shift_off_axis(self, example2):
        # closed form: (x, y) -> (x + t, y), valid off the doubled locus
        out = flow(example2.field, (-1.0, 0.5), 2.0)
        assert out.status is FlowStatus.COMPLETED
        assert dist(out.endpoint, (1.0, 0.5)) <= 1e-8

    def test_zero_time_is_identity(self, example2):
        out = flow(example2.field, (-1.0, 0.5), 0.0)
        assert out.status is FlowStatus.COMPLETED
        assert out.endpoint == (-1.0, 0.5)

    def test_outside_domain_start(self, example2):
        with pytest.raises(OutsideDomainError):
            flow(example2.field, (0.0, 0.0), 1.0)

    def test_zero_field_is_exact(self):
        v = make_field(2, ("0", "0"))
        out = flow(v, (0.3, -0.7), 5.0)
        assert out.status is FlowStatus.COMPLETED
        assert out.endpoint == (0.3, -0.7)

    def test_backward_flow(self, example2):
        out = flow(example2.field, (1.0, 0.5), -3.0)
        assert out.status is FlowStatus.COMPLETED
        assert dist(out.endpoint, (-2.0, 0.5)) <= 1e-8

    def test_dense_samples_are_ordered_and_inside(self, example2):
        out = flow(example2.field, (-1.0, 0.5), 2.0)
        times = [t for t, _ in out.dense_samples]
        assert times == sorted(times)
        assert times[0] == 0.0
        for _, x in out.dense_samples:
            assert example2.field.manifold.contains(x)

    def test_stats_populated(self, rotation2d):
        out = flow(rotation2d.field, (1.0, 0.0), 3.0)
        assert out.stats.steps > 0
        assert out.stats.max_error_estimate > 0.0


class TestEscapeDetection:
    def test_axis_trajectory_hits_the_puncture(self, example2):
        # the line y=0 reaches the excluded origin at exactly t=1
        out = flow(example2.field, (-1.0, 0.0), 2.0)
        assert out.status is FlowStatus.ESCAPED
        assert out.escape_time_estimate == pytest.approx(1.0, abs=1e-8)

    def test_escape_invariants(self, example2):
        out = flow(example2.field, (-1.0, 0.0), 2.0)
        tau = out.escape_time_estimate
        assert abs(tau) < 2.0
        for t, x in out.dense_samples:
            assert abs(t) < abs(tau)
            assert example2.field.manifold.contains(x)

    def test_escape_backward(self, example2):
        out = flow(example2.field, (1.0, 0.0), -2.0)
        assert out.status is FlowStatus.ESCAPED
        assert out.escape_time_estimate == pytest.approx(-1.0, abs=1e-8)

    def test_escape_monotonicity(self, example2):
        # once the escape is located, shorter requests past it agree on tau
        for t_req in (1.2, 1.5, 1.9):
            out = flow(example2.field, (-1.0, 0.0), t_req)
            assert out.status is FlowStatus.ESCAPED
            assert out.escape_time_estimate == pytest.approx(1.0, abs=1e-8)

    def test_trajectory_ending_on_the_boundary_escapes(self, example2):
        # endpoint would land exactly on the excluded point
        out = flow(example2.field, (-1.0, 0.0), 1.0)
        assert out.status is FlowStatus.ESCAPED
        assert out.escape_time_estimate == pytest.approx(1.0, abs=1e-6)

    def test_near_miss_does_not_escape(self, example2):
        out = flow(example2.field, (-1.0, 1e-5), 2.0)
        assert out.status is FlowStatus.COMPLETED
        assert dist(out.endpoint, (1.0, 1e-5)) <= 1e-8

    def test_segment_crossing_escapes(self, example3):
        out = flow(example3.field, (-1.0, 0.5), 2.0)
        assert out.status is FlowStatus.ESCAPED
        assert out.escape_time_estimate == pytest.approx(1.0, abs=1e-8)

    def test_segment_overflight_completes(self, example3):
        out = flow(example3.field, (-1.0, 1.5), 2.0)
        assert out.status is FlowStatus.COMPLETED
        assert dist(out.endpoint, (1.0, 1.5)) <= 1e-8

    def test_blowup_reported_as_escape(self, blowup1d):
        # x/(1 - t x) diverges at t = 1/x
        out = flow(blowup1d.field, (1.0,), 2.0)
        assert out.status is FlowStatus.ESCAPED
        assert out.escape_time_estimate == pytest.approx(1.0, abs=1e-6)

    def test_blowup_backward(self, blowup1d):
        out = flow(blowup1d.field, (-1.0,), -2.0)
        assert out.status is FlowStatus.ESCAPED
        assert out.escape_time_estimate == pytest.approx(-1.0, abs=1e-6)

    def test_predicate_violation_without_margin(self):
        # half plane x1 < 1 without a margin hint: the sampled predicate
        # flips on an interval, so plain bisection locates the exit
        v = make_field(1, ("1",), inside="x1 < 1")
        out = flow(v, (0.0,), 2.0)
        assert out.status is FlowStatus.ESCAPED
        assert out.escape_time_estimate == pytest.approx(1.0, abs=1e-8)

    def test_singular_rhs_is_inconclusive(self):
        # the field blows up in slope but not in norm; the step floor
        # triggers an honest refusal rather than a fabricated crossing
        v = make_field(1, ("1/(1 - x1)",))
        out = flow(v, (0.0,), 2.0)
        assert out.status is FlowStatus.INCONCLUSIVE


class TestAgainstClosedForms:
    def test_linear_endpoint_error(self, linear1d):
        out = flow(linear1d.field, (1.0,), 1.0)
        assert out.status is FlowStatus.COMPLETED
        assert abs(out.endpoint[0] - math.e) <= 1e-8

    def test_rotation_full_turn(self, rotation2d):
        out = flow(rotation2d.field, (1.0, 0.0), 2.0 * math.pi)
        assert out.status is FlowStatus.COMPLETED
        assert dist(out.endpoint, (1.0, 0.0)) <= 1e-7

    @pytest.mark.parametrize("name", ["example2", "blowup1d", "rotation2d", "linear1d"])
    def test_oracle_agreement(self, name, request):
        scenario = request.getfixturevalue(name)
        v = scenario.field
        rng = random.Random(11)
        checked = 0
        while checked < 30:
            x = tuple(rng.uniform(lo, hi) for lo, hi in scenario.grids.box)
            t = rng.uniform(-1.0, 1.0)
            if not v.manifold.contains(x):
                continue
            try:
                ref = v.oracle_at(x, t)
            except Exception:
                continue
            if any(abs(c) > 50 for c in ref):
                continue
            out = flow(v, x, t)
            if out.status is not FlowStatus.COMPLETED:
                continue
            assert dist(out.endpoint, ref) <= 1e-6
            checked += 1

    def test_group_law_and_inversion(self, rotation2d):
        v = rotation2d.field
        rng = random.Random(3)
        for _ in range(60):
            x = (rng.uniform(-2, 2), rng.uniform(-2, 2))
            t1 = rng.uniform(-3, 3)
            t2 = rng.uniform(-3, 3)
            a = flow(v, x, t1)
            b = flow(v, a.endpoint, t2)
            c = flow(v, x, t1 + t2)
            assert dist(b.endpoint, c.endpoint) <= 1e-6
            back = flow(v, a.endpoint, -t1)
            assert dist(back.endpoint, x) <= 1e-6


class TestExistenceWindow:
    def test_blocked_forward_free_backward(self, example2):
        w = existence_window(example2.field, (-1.0, 0.0), 10.0)
        assert w.t_plus == pytest.approx(1.0, abs=1e-8)
        assert w.plus_bounded is True
        assert w.t_minus == -10.0 and w.minus_bounded is False
        assert w.quality == "certified_by_oracle"

    def test_free_line(self, example2):
        w = existence_window(example2.field, (-1.0, 0.5), 10.0)
        assert w.plus_bounded is False and w.minus_bounded is False
        assert w.t_plus == 10.0 and w.t_minus == -10.0

    def test_complete_field(self, rotation2d):
        w = existence_window(rotation2d.field, (1.0, 0.0), 10.0)
        assert w.plus_bounded is False and w.minus_bounded is False
        assert w.quality == "certified_by_oracle"

    def test_blowup_window(self, blowup1d):
        w = existence_window(blowup1d.field, (1.0,), 10.0)
        assert w.t_plus == pytest.approx(1.0, abs=1e-6)
        assert w.plus_bounded is True
        assert w.minus_bounded is False

    def test_horizon_must_be_positive(self, example2):
        with pytest.raises(ValueError):
            existence_window(example2.field, (-1.0, 0.5), -1.0)


class TestOrderCheck:
    def test_rotation_order(self, rotation2d):
        result = order_check(rotation2d.field, (1.0, 0.0), 2.0 * math.pi)
        assert 3.8 <= result.order_estimate <= 5.5

    def test_linear_order(self, linear1d):
        result = order_check(linear1d.field, (1.0,), 1.0)
        assert 3.8 <= result.order_estimate <= 5.5

    def test_requires_oracle(self):
        v = make_field(1, ("1",))
        with pytest.raises(ValueError, match="closed-form"):
            order_check(v, (0.0,), 1.0)


class TestConfigValidation:
    def test_bad_step_bounds(self):
        with pytest.raises(ValueError):
            IntegratorConfig(min_step=1.0, max_step=0.5)

    def test_bad_tolerances(self):
        with pytest.raises(ValueError):
            IntegratorConfig(rel_tol=-1e-9)
