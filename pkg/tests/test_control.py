import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cotdrive import kernels
from cotdrive.control import (
    ControlCommand,
    PIDController,
    heading_error,
    lateral_control,
    longitudinal_control,
)
from cotdrive.world import EgoState, Pose2D

from oracles import pid_reference


def test_longitudinal_constant_error_fixture():
    # 0.3 * 10 + 0.05 * mean(10) = 3.5
    pid = PIDController.longitudinal()
    assert pid.step(10.0) == pytest.approx(3.5, abs=1e-12)
    assert pid.step(10.0) == pytest.approx(3.5, abs=1e-12)


def test_lateral_quarter_pi_fixture():
    pid = PIDController.lateral()
    assert pid.step(math.pi / 4) == pytest.approx(1.1 * math.pi / 4, abs=1e-12)
    assert 1.1 * math.pi / 4 == pytest.approx(0.8639, abs=1e-4)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=60),
       st.sampled_from([(0.3, 0.05, 0.0, 20), (0.8, 0.3, 0.0, 10), (1.0, 0.5, 0.2, 3)]))
def test_pid_matches_reference(errors, gains):
    pid = PIDController(*gains)
    got = [pid.step(e) for e in errors]
    assert got == pytest.approx(pid_reference(*gains, errors), abs=1e-9)


@given(st.lists(st.floats(-50, 50), min_size=0, max_size=40), st.floats(-50, 50))
def test_ring_kernel_matches_deque(history, err):
    pid = PIDController(0.7, 0.4, 0.1, 10)
    for e in history:
        pid.step(e)
    buf, count, head = pid.ring_state()
    out, _, _ = kernels._pid(buf.copy(), count, head, err, 0.7, 0.4, 0.1, 0.05)
    assert out == pytest.approx(pid.step(err), abs=1e-9)


def test_pid_rejects_bad_input():
    with pytest.raises(ValueError):
        PIDController(1, 0, 0, 0)
    with pytest.raises(ValueError):
        PIDController.longitudinal().step(float("nan"))


def test_copy_is_independent():
    pid = PIDController.longitudinal()
    pid.step(5.0)
    twin = pid.copy()
    twin.step(100.0)
    assert list(pid.buffer) == [5.0]


def test_longitudinal_split_and_clamp():
    assert longitudinal_control(0.0, 0.0, PIDController.longitudinal()) == (0.0, 1.0)
    assert longitudinal_control(0.0, 40.0, PIDController.longitudinal()) == (1.0, 0.0)
    thr, brk = longitudinal_control(42.0, 40.0, PIDController.longitudinal())
    assert thr == 0.0 and brk == pytest.approx(0.7)
    with pytest.raises(ValueError):
        longitudinal_control(-1.0, 10.0, PIDController.longitudinal())


def test_brake_target_leaves_pid_untouched():
    pid = PIDController.longitudinal()
    longitudinal_control(30.0, 0.0, pid)
    assert len(pid.buffer) == 0


def test_lateral_control():
    ego = EgoState(Pose2D(0, 0))
    assert heading_error(ego, (1.0, 1.0)) == pytest.approx(math.pi / 4)
    assert lateral_control(ego, (1.0, 0.0), PIDController.lateral()) == 0.0
    assert lateral_control(ego, (-1.0, 0.01), PIDController.lateral()) == 1.0
    assert lateral_control(ego, (-1.0, -0.01), PIDController.lateral()) == -1.0
    with pytest.raises(ValueError):
        lateral_control(ego, (0.0, 0.0), PIDController.lateral())


def test_command_exclusive():
    with pytest.raises(ValueError):
        ControlCommand(0.5, 0.5)
    assert ControlCommand(0.5, 0.0, -0.2).steer == -0.2


def test_ring_state_layout():
    pid = PIDController(1, 1, 0, 3)
    for e in (1.0, 2.0):
        pid.step(e)
    buf, count, head = pid.ring_state()
    assert np.array_equal(buf, [1.0, 2.0, 0.0]) and (count, head) == (2, 2)
