import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixsim.geometry import PlannedPath, Pose2
from mixsim.plant import (
    ControllerGains,
    Plant,
    PlantParams,
    PlantState,
    pi_speed,
    stanley_steer,
    step_plant,
)

PARAMS = PlantParams()
GAINS = ControllerGains()


def run_speed_loop(target, n_ticks, dt=0.1, initial_speed=0.0):
    plant = Plant(PARAMS, PlantState(Pose2(0, 0, 0), speed=initial_speed))
    integral = 0.0
    trace = []
    for _ in range(n_ticks):
        a, integral = pi_speed(target, plant.state.speed, integral, dt, GAINS, PARAMS)
        plant.tick(a, 0.0, dt)
        trace.append(plant.state.speed)
    return plant, np.asarray(trace)


# --- step_plant ------------------------------------------------------------

def test_straight_line_motion_exact():
    s = PlantState(Pose2(0, 0, 0), speed=2.0)
    out = step_plant(s, 0.0, 0.0, 0.1, PARAMS)
    assert out.pose.x == 0.2
    assert out.pose.y == 0.0
    assert out.pose.heading == 0.0
    assert out.speed == 2.0


def test_no_reverse_from_rest():
    s = PlantState(Pose2(0, 0, 0), speed=0.0)
    out = step_plant(s, -1.0, 0.0, 0.05, PARAMS)
    assert out.speed == 0.0
    assert out.pose == s.pose


def test_heading_rate_matches_fine_step_oracle():
    # 1 s at v=2, steer=0.1: coarse integration vs a 10^4-substep oracle.
    s = PlantState(Pose2(0, 0, 0), speed=2.0)
    coarse = s
    for _ in range(100):
        coarse = step_plant(coarse, 0.0, 0.1, 0.01, PARAMS)
    fine = PlantState(Pose2(0, 0, 0), speed=2.0)
    fine_dt = 1e-4
    for _ in range(10_000):
        fine = step_plant(fine, 0.0, 0.1, fine_dt, PARAMS)
    expect = 2.0 / PARAMS.wheelbase * math.tan(0.1) * 1.0
    assert coarse.pose.heading == pytest.approx(expect, abs=1e-3)
    assert coarse.pose.heading == pytest.approx(fine.pose.heading, abs=1e-3)


def test_zero_everything_is_fixed_point():
    s = PlantState(Pose2(1.0, 2.0, 0.5), speed=0.0)
    assert step_plant(s, 0.0, 0.0, 0.05, PARAMS) == s


@settings(max_examples=200)
@given(
    st.floats(-10, 10), st.floats(-5, 5),
    st.floats(0, 11.1), st.floats(0.001, 0.1),
)
def test_clamps_hold_for_any_command(accel, steer, speed, dt):
    s = PlantState(Pose2(0, 0, 0), speed=speed)
    out = step_plant(s, accel, steer, dt, PARAMS)
    assert 0.0 <= out.speed <= PARAMS.v_max
    assert abs(out.steer_angle) <= PARAMS.steer_max


def test_dt_bounds_enforced():
    s = PlantState(Pose2(0, 0, 0))
    with pytest.raises(ValueError):
        step_plant(s, 0, 0, 0.2, PARAMS)
    with pytest.raises(ValueError):
        step_plant(s, 0, 0, 0.0, PARAMS)


def test_actuation_latency_delays_commands():
    plant = Plant(PARAMS, PlantState(Pose2(0, 0, 0), speed=0.0))
    plant.tick(1.0, 0.0, 0.1)  # applies 0.2 s later
    assert plant.state.speed == 0.0
    plant.tick(1.0, 0.0, 0.1)
    assert plant.state.speed == 0.0
    plant.tick(1.0, 0.0, 0.1)  # first command now active
    assert plant.state.speed > 0.0


# --- pi_speed --------------------------------------------------------------

def test_pure_p_term():
    gains = ControllerGains(kp=0.5, ki=0.0)
    a, integral = pi_speed(2.0, 1.0, 0.0, 0.1, gains, PARAMS)
    assert a == pytest.approx(0.5 - 0.0)
    assert integral == pytest.approx(0.1)


def test_at_setpoint_zero_output():
    a, integral = pi_speed(2.0, 2.0, 0.0, 0.1, GAINS, PARAMS)
    assert a == 0.0 and integral == 0.0


def test_output_clamped_to_plant_limits():
    a, _ = pi_speed(100.0, 0.0, 0.0, 0.1, GAINS, PARAMS)
    assert a == PARAMS.accel_max
    a, _ = pi_speed(0.0, 100.0, 0.0, 0.1, GAINS, PARAMS)
    assert a == -PARAMS.brake_max


def test_integral_anti_windup():
    integral = 0.0
    for _ in range(1000):
        _, integral = pi_speed(10.0, 0.0, integral, 0.1, GAINS, PARAMS)
    assert integral == GAINS.integral_clamp


def test_pi_monotone_in_target():
    prev = -math.inf
    for target in np.linspace(0, 3, 20):
        a, _ = pi_speed(target, 1.0, 0.1, 0.1, GAINS, PARAMS)
        assert a >= prev
        prev = a


def test_closed_loop_speed_settles_within_10s():
    _, trace = run_speed_loop(2.0, n_ticks=100)
    outside = np.abs(trace - 2.0) > 0.05
    assert not outside[-1], "never settled"
    settle_tick = int(np.nonzero(outside)[0].max()) + 1 if outside.any() else 0
    assert (settle_tick + 1) * 0.1 < 10.0


# --- stanley ---------------------------------------------------------------

def test_on_path_aligned_zero_steer():
    path = PlannedPath([(0, 0), (50, 0)])
    s = PlantState(Pose2(10, 0, 0), speed=2.0)
    assert stanley_steer(s, path, GAINS, PARAMS) == 0.0


def test_cross_track_formula_value():
    # 1 m right of the path (negative cross-track), aligned heading:
    # steer = atan(k * 1 / (v + vs)) with k=1, v=2, vs=0.1.
    gains = ControllerGains(k_stanley=1.0, v_softening=0.1)
    path = PlannedPath([(0, 0), (50, 0)])
    s = PlantState(Pose2(10, -1.0, 0), speed=2.0)
    assert stanley_steer(s, path, gains, PARAMS) == pytest.approx(math.atan(1.0 / 2.1))


def test_steer_odd_in_cross_track():
    path = PlannedPath([(0, 0), (50, 0)])
    for offset in (0.3, 1.0, 2.5):
        left = stanley_steer(PlantState(Pose2(10, offset, 0), speed=2.0), path, GAINS, PARAMS)
        right = stanley_steer(PlantState(Pose2(10, -offset, 0), speed=2.0), path, GAINS, PARAMS)
        assert left == pytest.approx(-right)
        assert right > 0  # right of path -> steer left (positive)


def test_steer_clamped():
    path = PlannedPath([(0, 0), (50, 0)])
    s = PlantState(Pose2(10, -50.0, 2.0), speed=0.0)
    assert abs(stanley_steer(s, path, GAINS, PARAMS)) <= PARAMS.steer_max


def test_closed_loop_lateral_convergence():
    path = PlannedPath([(0, 0), (200, 0)])
    plant = Plant(PARAMS, PlantState(Pose2(0, 2.0, 0), speed=2.0))
    integral = 0.0
    overshoot = 0.0
    trace = []
    for _ in range(150):  # 15 s
        a, integral = pi_speed(2.0, plant.state.speed, integral, 0.1, GAINS, PARAMS)
        steer = stanley_steer(plant.state, path, GAINS, PARAMS)
        plant.tick(a, steer, 0.1)
        e = plant.state.pose.y
        overshoot = max(overshoot, -e)
        trace.append(abs(e))
    trace = np.asarray(trace)
    outside = trace >= 0.05
    assert not outside[-1], "never converged"
    settle_tick = int(np.nonzero(outside)[0].max()) + 1 if outside.any() else 0
    assert (settle_tick + 1) * 0.1 < 15.0
    assert overshoot < 0.3
