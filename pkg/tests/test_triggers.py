import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import etconsensus as ec
from etconsensus.errors import GraphError, ParameterError
from etconsensus.triggers import BroadcastState, TriggerSpec, control_input, trigger_value


class TestTriggerSpec:
    def test_static_forces_zero_decay(self):
        spec = TriggerSpec("static", 0.5, 0.3)
        assert spec.decay == 0.0

    def test_static_equals_dynamic_with_zero_decay(self):
        static = TriggerSpec("static", 0.5)
        dynamic = TriggerSpec("dynamic", 0.5, 0.0)
        for t in (0.0, 1.0, 17.3):
            assert static.threshold_at(t) == dynamic.threshold_at(t)

    @pytest.mark.parametrize("kind,thr,decay", [
        ("weird", 0.5, 0.0), ("static", 0.0, 0.0), ("dynamic", -1.0, 0.1),
        ("dynamic", 0.5, -0.1),
    ])
    def test_invalid_specs(self, kind, thr, decay):
        with pytest.raises(ParameterError):
            TriggerSpec(kind, thr, decay)


class TestTriggerValue:
    def test_static_no_error_no_event(self):
        spec = TriggerSpec("static", 0.5)
        assert trigger_value(spec, 3.0, 0.0) == pytest.approx(-0.5)

    def test_dynamic_boundary_is_not_an_event(self):
        spec = TriggerSpec("dynamic", 0.5, 0.06)
        assert trigger_value(spec, 0.0, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_dynamic_decayed_threshold_fires(self):
        # Independent scalar evaluation: 0.3 - 0.5*exp(-0.6).
        spec = TriggerSpec("dynamic", 0.5, 0.06)
        value = trigger_value(spec, 10.0, 0.3)
        assert value == pytest.approx(0.3 - 0.5 * math.exp(-0.6), abs=1e-15)
        assert value == pytest.approx(0.02559418195298589, abs=1e-15)
        assert value > 0

    @settings(max_examples=50, deadline=None)
    @given(t=st.floats(0, 100), e=st.floats(-10, 10))
    def test_total_function(self, t, e):
        spec = TriggerSpec("dynamic", 0.5, 0.06)
        value = trigger_value(spec, t, e)
        assert math.isfinite(value)
        assert value == abs(e) - 0.5 * math.exp(-0.06 * t)


class TestBroadcastState:
    def test_initialization_has_zero_errors(self):
        state = BroadcastState.initial([1.0, 2.0], 0.0)
        assert np.array_equal(state.errors([1.0, 2.0]), [0.0, 0.0])
        assert state.events == []

    def test_no_fire_when_errors_zero(self):
        state = BroadcastState.initial([1.0, 2.0], 0.0)
        fired = state.apply_events([1.0, 2.0], 1.0, TriggerSpec("static", 0.5))
        assert fired == []
        assert state.events == []

    def test_single_agent_fires_and_resets(self):
        state = BroadcastState.initial([1.0, 2.0], 0.0)
        fired = state.apply_events([1.8, 2.1], 1.5, TriggerSpec("static", 0.5))
        assert fired == [1]
        assert state.broadcast.tolist() == [1.8, 2.0]
        assert state.errors([1.8, 2.1])[0] == 0.0
        assert state.events == [(1, 1.5, 1.8)]

    def test_simultaneous_symmetric_crossing(self):
        # Symmetric two-agent state: both errors cross together, both fire
        # with identical timestamps.
        state = BroadcastState.initial([-1.0, 1.0], 0.0)
        fired = state.apply_events([-0.4, 0.4], 2.0, TriggerSpec("static", 0.5))
        assert fired == [1, 2]
        times = {t for _, t, _ in state.events}
        assert times == {2.0}

    def test_threshold_equality_does_not_fire(self):
        state = BroadcastState.initial([0.0], 0.0)
        fired = state.apply_events([0.5], 0.0, TriggerSpec("static", 0.5))
        assert fired == []


class TestControlInput:
    def test_consensus_broadcast_gives_zero(self, triangle):
        u = control_input(triangle.incidence, [1.0, 1.0, 1.0],
                          [2.0, 2.0, 2.0], 1.0)
        assert np.allclose(u, 0.0, atol=1e-14)

    def test_two_node_direct_product(self, two_node):
        u = control_input(two_node.incidence, [1.0], [0.0, 1.0], 1.0)
        assert np.allclose(u, [1.0, -1.0], atol=1e-14)

    def test_input_sums_to_zero_on_random_broadcasts(self, union_topology, rng):
        for _ in range(100):
            w = rng.uniform(0, 2, size=6)
            xh = rng.normal(size=4)
            u = control_input(union_topology.incidence, w, xh, 1.7)
            assert abs(u.sum()) < 1e-12

    def test_dimension_and_gain_validation(self, two_node):
        with pytest.raises(GraphError, match="mismatch"):
            control_input(two_node.incidence, [1.0, 2.0], [0.0, 1.0], 1.0)
        with pytest.raises(ParameterError, match="gain"):
            control_input(two_node.incidence, [1.0], [0.0, 1.0], 0.0)
