"""Desk-scale vehicle: kinematic bicycle with clamped actuation and delay,
plus the PI longitudinal and Stanley lateral controllers that track the
planned path.

The bicycle (x' = v cos h, y' = v sin h, h' = v/L tan d, v' = a) is stepped
with semi-implicit Euler: speed first, then pose with the new speed.  The
published gains below were tuned against the closed-loop convergence tests
and ship as the package defaults; the real vehicle's gains are unknown.

Steering sign: positive steer turns counter-clockwise (left).  The Stanley
cross-track term therefore enters with the sign that steers back toward the
path: a vehicle left of the path (positive cross-track per path_frame)
receives a negative steer contribution.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

from .geometry import PlannedPath, Pose2, path_frame, wrap_angle


@dataclass(frozen=True)
class PlantParams:
    wheelbase: float = 1.75          # m, GEM-class surrogate
    v_max: float = 11.1              # m/s (~25 mph top speed)
    steer_max: float = 0.6           # rad
    accel_max: float = 1.5           # m/s^2
    brake_max: float = 3.0           # m/s^2 (deceleration magnitude)
    latency: float = 0.2             # s command-to-actuation delay
    substep: float = 0.05            # s integrator step

    def __post_init__(self):
        for name in ("wheelbase", "v_max", "steer_max", "accel_max", "brake_max", "substep"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.latency < 0:
            raise ValueError("latency must be >= 0")


@dataclass(frozen=True)
class ControllerGains:
    kp: float = 1.5
    ki: float = 0.3
    k_stanley: float = 0.9
    v_softening: float = 0.6         # m/s
    integral_clamp: float = 0.5      # m (anti-windup bound on the error integral)

    def __post_init__(self):
        if min(self.kp, self.ki, self.k_stanley) < 0:
            raise ValueError("gains must be >= 0")
        if self.v_softening <= 0:
            raise ValueError("v_softening must be positive")


@dataclass(frozen=True)
class PlantState:
    pose: Pose2
    speed: float = 0.0
    steer_angle: float = 0.0


def step_plant(
    state: PlantState, accel: float, steer_cmd: float, dt: float, params: PlantParams
) -> PlantState:
    """One integrator step with the given effective commands (no latency here;
    the Plant wrapper owns the delay line)."""
    if not 0.0 < dt <= 0.1:
        raise ValueError("dt must be in (0, 0.1]")
    steer = min(max(steer_cmd, -params.steer_max), params.steer_max)
    speed = min(max(state.speed + accel * dt, 0.0), params.v_max)
    h = state.pose.heading
    x = state.pose.x + speed * math.cos(h) * dt
    y = state.pose.y + speed * math.sin(h) * dt
    heading = wrap_angle(h + speed / params.wheelbase * math.tan(steer) * dt)
    return PlantState(Pose2(x, y, heading), speed, steer)


def pi_speed(
    target: float,
    current: float,
    integral_state: float,
    dt: float,
    gains: ControllerGains,
    params: PlantParams,
):
    """PI acceleration command; returns (accel, new_integral_state)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = target - current
    integral = integral_state + e * dt
    integral = min(max(integral, -gains.integral_clamp), gains.integral_clamp)
    a = gains.kp * e + gains.ki * integral
    a = min(max(a, -params.brake_max), params.accel_max)
    return a, integral


def stanley_steer(
    state: PlantState, path: PlannedPath, gains: ControllerGains, params: PlantParams
) -> float:
    """Stanley lateral law: heading error plus arctan of scaled cross-track."""
    _, e, heading_ref = path_frame(path, (state.pose.x, state.pose.y))
    heading_err = wrap_angle(heading_ref - state.pose.heading)
    cross = math.atan2(gains.k_stanley * -e, state.speed + gains.v_softening)
    steer = heading_err + cross
    return min(max(steer, -params.steer_max), params.steer_max)


class Plant:
    """Simulation-loop-owned vehicle: delay line + substepped integrator.

    Commands issued via `tick` take effect `latency` seconds later (rounded
    to whole substeps), mirroring the actuation delay of a real drive-by-wire
    platform.
    """

    def __init__(self, params: PlantParams, initial: PlantState):
        self.params = params
        self.state = initial
        self._step_count = 0
        self._lat_steps = round(params.latency / params.substep)
        self._queue: deque[tuple[int, float, float]] = deque()
        self._effective = (0.0, 0.0)

    def tick(self, accel: float, steer: float, dt_tick: float) -> PlantState:
        """Issue a command and advance the plant by one harness tick."""
        n = max(round(dt_tick / self.params.substep), 1)
        self._queue.append((self._step_count + self._lat_steps, accel, steer))
        for _ in range(n):
            while self._queue and self._queue[0][0] <= self._step_count:
                _, a, s = self._queue.popleft()
                self._effective = (a, s)
            a, s = self._effective
            self.state = step_plant(self.state, a, s, self.params.substep, self.params)
            self._step_count += 1
        return self.state
