import math

import pytest
from hypothesis import given, strategies as st

from fbsched.cost import CostAccumulator, CostFunction, accumulate, cost_at, total_cost
from fbsched.errors import ConfigurationError, DomainError
from fbsched.tasks import TaskSpec, assign_rm_priorities, ll_bound, requested_utilization


def _tasks(periods, c=0.001):
    return [TaskSpec(i + 1, "control", h, c) for i, h in enumerate(periods)]


def test_requested_utilization_overload_example():
    c = (0.004, 0.0046, 0.0057, 0.002)
    h = (0.017, 0.014, 0.012, 0.010)
    tasks = [TaskSpec(i + 1, "control", hi, ci) for i, (ci, hi) in enumerate(zip(c, h))]
    assert requested_utilization(tasks) == pytest.approx(4 / 17 + 4.6 / 14 + 5.7 / 12 + 0.2, rel=1e-12)


def test_ll_bound_values():
    assert ll_bound(1) == pytest.approx(1.0)
    assert ll_bound(2) == pytest.approx(2 * (math.sqrt(2) - 1))
    assert ll_bound(4) == pytest.approx(0.75683, abs=1e-5)
    with pytest.raises(DomainError):
        ll_bound(0)


@given(st.integers(1, 500))
def test_ll_bound_decreases_towards_ln2(n):
    assert math.log(2) < ll_bound(n) <= 1.0
    assert ll_bound(n + 1) < ll_bound(n)


@given(st.lists(st.floats(0.002, 0.2), min_size=1, max_size=8))
def test_rm_priorities_follow_periods(periods):
    tasks = _tasks(periods) + [TaskSpec(0, "fbs", 0.4, 0.0)]
    out = {t.id: t for t in assign_rm_priorities(tasks)}
    assert out[0].priority == 0
    ranked = sorted((t for t in out.values() if t.kind != "fbs"), key=lambda t: t.priority)
    assert [t.period for t in ranked] == sorted(periods)
    assert len({t.priority for t in out.values()}) == len(out)


def test_rm_rejects_duplicates_and_two_schedulers():
    with pytest.raises(ConfigurationError):
        assign_rm_priorities(_tasks([0.01]) + _tasks([0.02]))
    with pytest.raises(ConfigurationError):
        assign_rm_priorities([TaskSpec(0, "fbs", 0.4, 0.0), TaskSpec(1, "fbs", 0.4, 0.0)])


@pytest.mark.parametrize("kw, exc", [(dict(period=0.0), DomainError),
                                     (dict(execution_time=-1e-3), DomainError),
                                     (dict(kind="other"), ConfigurationError)])
def test_taskspec_validation(kw, exc):
    args = dict(id=1, kind="control", period=0.01, execution_time=0.001)
    args.update(kw)
    with pytest.raises(exc):
        TaskSpec(**args)


def test_reciprocal_cost_and_derivatives():
    j = CostFunction.reciprocal(43.0, alpha=0.5, weight=2.0)
    assert j.value(10.0) == pytest.approx(0.5 + 4.3)
    assert j.deriv(10.0) == pytest.approx(-0.43)
    assert j.deriv2(10.0) == pytest.approx(0.086)
    assert cost_at(j, 43.0) == pytest.approx(1.5)
    with pytest.raises(DomainError):
        cost_at(j, 0.0)


def test_accumulator_left_rectangle():
    acc = CostAccumulator()
    acc = accumulate(acc, 0.1, 0.2, 0.5)
    acc = accumulate(acc, 1.0, 0.0, 0.25)
    assert acc.total == pytest.approx(0.5 * 0.05 + 0.25)
    with pytest.raises(DomainError):
        accumulate(acc, 0.0, 0.0, -1e-3)
    assert total_cost([acc, 1.0], [2.0, 0.5]) == pytest.approx(2 * acc.total + 0.5)
    with pytest.raises(ConfigurationError):
        total_cost([1.0], [1.0, 1.0])
