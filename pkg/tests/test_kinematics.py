import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chunkdrift.errors import InvalidPair, InvalidState
from chunkdrift.kinematics import (
    Chunk,
    DeltaAction,
    EEState,
    StateTrajectory,
    accumulated_drift,
    integrate,
    rollout,
    step,
)


def test_step_adds_componentwise():
    s = EEState([0.1, 0.2, 0.3], [0.0, 0.1, 0.0], 0.5)
    a = DeltaAction([0.01, -0.02, 0.0], [0.0, 0.0, 0.05], -0.1)
    out = step(s, a)
    np.testing.assert_allclose(out.as_vector(), s.as_vector() + a.as_vector())


def test_gripper_is_clamped():
    s = EEState(np.zeros(3), gripper=0.95)
    assert step(s, DeltaAction(np.zeros(3), dgrip=0.2)).gripper == 1.0
    assert step(EEState(np.zeros(3), gripper=0.05), DeltaAction(np.zeros(3), dgrip=-0.2)).gripper == 0.0


def test_zero_action_is_identity():
    s = EEState([0.3, -0.1, 0.2], [0.01, 0.02, 0.03], 0.4)
    assert step(s, DeltaAction.zero()) == s


@pytest.mark.parametrize("bad", [[np.nan, 0, 0], [np.inf, 0, 0]])
def test_non_finite_state_rejected(bad):
    with pytest.raises(InvalidState):
        EEState(bad)
    with pytest.raises(InvalidState):
        DeltaAction(bad)


def test_gripper_out_of_range_rejected():
    with pytest.raises(InvalidState):
        EEState(np.zeros(3), gripper=1.5)


def test_empty_rollout_is_single_state():
    traj = rollout(EEState.origin(), [])
    assert len(traj) == 1
    assert traj.final == EEState.origin()


def test_rollout_matches_repeated_step():
    rng = np.random.default_rng(3)
    acts = [DeltaAction(*rng.normal(0, 0.01, (2, 3)), 0.0) for _ in range(20)]
    s = EEState([0.1, 0.0, 0.2], gripper=0.5)
    traj = rollout(s, acts)
    cur = s
    for a in acts:
        cur = step(cur, a)
    assert traj.final == cur
    assert len(traj) == 21


def test_uniform_motion_final_position():
    acts = [DeltaAction([0.01, 0.0, 0.0]) for _ in range(10)]
    traj = rollout(EEState.origin(), acts)
    assert traj.final.position[0] == pytest.approx(0.1, abs=1e-15)


def test_accumulated_drift_constant_offset():
    clean = np.zeros((3, 7))
    poisoned = clean.copy()
    poisoned[:, 0] = 0.002
    np.testing.assert_allclose(accumulated_drift(clean, poisoned), [0.006, 0, 0, 0, 0, 0, 0], atol=1e-15)


def test_accumulated_drift_length_mismatch():
    with pytest.raises(InvalidPair):
        accumulated_drift(np.zeros((3, 7)), np.zeros((4, 7)))


def test_chunk_prediction_lookup():
    deltas = np.arange(21, dtype=float).reshape(3, 7)
    ch = Chunk(deltas, planned_at=5)
    assert ch.K == 3
    np.testing.assert_array_equal(ch.prediction_for(6), deltas[1])
    assert ch.prediction_for(4) is None
    assert ch.prediction_for(8) is None


def test_chunk_shape_validation():
    with pytest.raises(InvalidState):
        Chunk(np.zeros((2, 6)))


def test_trajectory_requires_positive_dt():
    with pytest.raises(InvalidState):
        StateTrajectory(np.zeros((2, 7)), dt=0.0)


def test_integrate_matches_step_bitwise():
    rng = np.random.default_rng(11)
    deltas = rng.normal(0, 0.01, (40, 7))
    deltas[:, 6] = 0.0
    x0 = np.array([0.1, 0.2, 0.3, 0.0, 0.0, 0.0, 0.5])
    out = integrate(x0, deltas)
    cur = EEState.from_vector(x0)
    for k in range(40):
        cur = step(cur, DeltaAction.from_vector(deltas[k]))
        assert np.array_equal(out[k + 1], cur.as_vector())


small = arrays(np.float64, (15, 7), elements=st.floats(-0.05, 0.05))


@settings(max_examples=60, deadline=None)
@given(clean=small, delta=small)
def test_drift_identity_property(clean, delta):
    clean[:, 6] = 0.0
    delta[:, 6] = 0.0
    poisoned = clean + delta
    s0 = EEState([0.1, 0.0, 0.2], gripper=0.5)
    diff = rollout(s0, poisoned).final.as_vector() - rollout(s0, clean).final.as_vector()
    np.testing.assert_allclose(diff, accumulated_drift(clean, poisoned), atol=1e-12)
