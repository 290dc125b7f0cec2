import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinoloco.curriculum import (
    CurriculumState,
    sample_command,
    threshold_met,
    update,
    update_cycle_time,
    update_velocity_range,
)
from kinoloco.errors import InvalidConfigError, InvalidInputError


class TestThreshold:
    @pytest.mark.parametrize(
        "r,expected", [(0.85, True), (0.79, False), (0.8, True)]
    )
    def test_values(self, r, expected):
        assert threshold_met(r, 1.0, 0.8) is expected

    @pytest.mark.parametrize("r_max", [0.0, -1.0])
    def test_nonpositive_max(self, r_max):
        with pytest.raises(InvalidInputError):
            threshold_met(0.5, r_max, 0.8)


class TestVelocityRange:
    def test_increment(self):
        assert update_velocity_range(CurriculumState(v_max=1.0), 0.9, 1.0).v_max == 1.5

    def test_not_met(self):
        state = CurriculumState(v_max=1.0)
        assert update_velocity_range(state, 0.1, 1.0) == state

    def test_cap(self):
        state = CurriculumState(v_max=3.5)
        assert update_velocity_range(state, 1.0, 1.0).v_max == 3.5

    def test_vmin_untouched(self):
        assert update_velocity_range(CurriculumState(v_min=0.0), 1.0, 1.0).v_min == 0.0


class TestCycleTime:
    def test_shrink(self):
        assert update_cycle_time(CurriculumState(cycle_time=0.64), 1.0, 1.0).cycle_time == pytest.approx(
            0.608, abs=1e-15
        )

    def test_floor(self):
        assert update_cycle_time(CurriculumState(cycle_time=0.50), 1.0, 1.0).cycle_time == 0.48

    def test_not_met(self):
        state = CurriculumState(cycle_time=0.64)
        assert update_cycle_time(state, 0.0, 1.0) == state


def test_invalid_state_rejected():
    with pytest.raises(InvalidConfigError):
        CurriculumState(v_max=4.0)
    with pytest.raises(InvalidConfigError):
        CurriculumState(cycle_time=0.3)
    with pytest.raises(InvalidConfigError):
        CurriculumState(lambda_threshold=0.0)


# Hand-derived replay: gate (lambda = 0.8) opens on 0.9, 0.8, 1.0 and stays shut on 0.5, 0.79.
SCRIPT = [0.9, 0.5, 0.8, 0.79, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
EXPECTED = [
    (1.5, 0.64 * 0.95),
    (1.5, 0.64 * 0.95),
    (2.0, 0.64 * 0.95 * 0.95),
    (2.0, 0.64 * 0.95 * 0.95),
    (2.5, 0.64 * 0.95**3),
    (3.0, 0.64 * 0.95**4),
    (3.5, 0.64 * 0.95**5),
    (3.5, 0.48),
    (3.5, 0.48),
    (3.5, 0.48),
]


def test_scripted_replay():
    state = CurriculumState()
    for r, (v_max, cycle) in zip(SCRIPT, EXPECTED):
        state, _ = update(state, r, 1.0)
        assert state.v_max == v_max
        assert state.cycle_time == pytest.approx(cycle, rel=1e-12)
    # 0.64 * 0.95**5 = 0.49522... > 0.48, and one more shrink (0.4704...) hits the floor.
    assert 0.64 * 0.95**5 > 0.48 > 0.64 * 0.95**6


def test_coupled_gating_reports_fire():
    _, fired = update(CurriculumState(), 0.81, 1.0)
    assert fired
    state, fired = update(CurriculumState(velocity_enabled=False), 0.81, 1.0)
    assert fired and state.v_max == 1.0 and state.cycle_time < 0.64


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60))
def test_monotone_and_bounded(gates):
    state = CurriculumState()
    for r in gates:
        new, _ = update(state, r, 1.0)
        assert new.v_max >= state.v_max
        assert new.cycle_time <= state.cycle_time
        assert new.v_max <= 3.5 and new.cycle_time >= 0.48
        state = new


def test_replay_determinism(rng):
    gates = rng.uniform(0.5, 1.0, 200)
    runs = []
    for _ in range(2):
        state, trace = CurriculumState(), []
        for r in gates:
            state, _ = update(state, float(r), 1.0)
            trace.append(dataclasses.astuple(state))
        runs.append(trace)
    assert runs[0] == runs[1]


class TestSampleCommand:
    def test_degenerate(self, rng):
        state = CurriculumState(v_min=0.0, v_max=0.0)
        assert np.all(sample_command(state, rng, 1000)[:, 0] == 0.0)

    def test_mean(self):
        state = CurriculumState(v_max=2.0)
        samples = sample_command(state, np.random.default_rng(0), 100_000)
        assert abs(samples[:, 0].mean() - 1.0) <= 0.02
        assert np.all(np.abs(samples[:, 1]) <= 0.3) and np.all(np.abs(samples[:, 2]) <= 0.3)

    def test_seeded(self):
        a = sample_command(CurriculumState(), np.random.default_rng(7), 50)
        b = sample_command(CurriculumState(), np.random.default_rng(7), 50)
        np.testing.assert_array_equal(a, b)

    def test_single_shape(self, rng):
        assert sample_command(CurriculumState(), rng).shape == (3,)
