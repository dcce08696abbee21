"""Scenario authoring: declarative actors on timed waypoint tracks, a trigger
zone that starts them, the ego plan, lighting, and difficulty knobs.

Scenario files are UTF-8 JSON, one scenario per file (schema in
`load_scenario`).  Static actors (a single waypoint) exist from episode
start; moving actors spawn the moment the trigger fires.  Waypoint motion is
piecewise-linear at constant velocity, which keeps runs reproducible and
matches the constant-velocity model the autonomy stack assumes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import PlannedPath, Pose2, path_frame, wrap_angle
from .render.shading import LightEnvironment

SCENARIO_KINDS = (
    "static_obstacle",
    "jaywalker",
    "jaywalker_occluded",
    "traffic_light_violation",
    "custom",
)
GOAL_RULES = ("near_static_obstacle_5m", "path_end_1p5m")


class ScenarioError(ValueError):
    """Parse or validation failure; the message names the offending field."""


@dataclass(frozen=True)
class Waypoint:
    t: float
    pose: Pose2
    z_offset: float = 0.0


@dataclass(frozen=True)
class ActorTrack:
    actor_id: str
    asset_ref: str
    waypoints: tuple[Waypoint, ...]
    half_length: float
    half_width: float
    animation: str | None = None
    states: tuple[tuple[float, str], ...] = ()

    def __post_init__(self):
        if not self.waypoints:
            raise ScenarioError(f"actor {self.actor_id!r}: needs at least one waypoint")
        times = [w.t for w in self.waypoints]
        if times[0] != 0.0:
            raise ScenarioError(f"actor {self.actor_id!r}: waypoint times must start at 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioError(
                f"actor {self.actor_id!r}: waypoint times not strictly increasing"
            )
        if self.half_length <= 0 or self.half_width <= 0:
            raise ScenarioError(f"actor {self.actor_id!r}: footprint extents must be positive")

    @property
    def is_moving(self) -> bool:
        return len(self.waypoints) > 1


@dataclass(frozen=True)
class TriggerZone:
    center: tuple[float, float]
    radius: float
    speed_min: float = 0.0
    speed_max: float = float("inf")

    def __post_init__(self):
        if self.radius <= 0:
            raise ScenarioError("trigger.radius must be positive")
        if not 0 <= self.speed_min <= self.speed_max:
            raise ScenarioError("trigger.speed_range must satisfy 0 <= lo <= hi")


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    actors: tuple[ActorTrack, ...]
    trigger: TriggerZone
    ego_path: PlannedPath
    ego_start: Pose2
    ego_speed: float
    lighting: LightEnvironment
    hyper_params: dict = field(default_factory=dict)
    goal_rule: str = "path_end_1p5m"

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ScenarioError(f"kind must be one of {SCENARIO_KINDS}, got {self.kind!r}")
        if self.goal_rule not in GOAL_RULES:
            raise ScenarioError(f"goal_rule must be one of {GOAL_RULES}")
        ids = [a.actor_id for a in self.actors]
        if len(set(ids)) != len(ids):
            raise ScenarioError("actor ids must be unique")

    def static_actors(self):
        return [a for a in self.actors if not a.is_moving]

    def moving_actors(self):
        return [a for a in self.actors if a.is_moving]


@dataclass(frozen=True)
class ScenarioState:
    triggered: bool = False
    trigger_time: float | None = None
    active_poses: dict = field(default_factory=dict)  # actor_id -> (Pose2, z_offset)

    def __post_init__(self):
        if self.triggered != (self.trigger_time is not None):
            raise ScenarioError("trigger_time must be set iff triggered")


def check_trigger(
    state: ScenarioState, ego: Pose2, ego_speed: float, zone: TriggerZone, now: float
) -> ScenarioState:
    """Latch the trigger once the ego enters the zone in the speed range."""
    if state.triggered:
        return state
    d = math.hypot(ego.x - zone.center[0], ego.y - zone.center[1])
    if d <= zone.radius and zone.speed_min <= ego_speed <= zone.speed_max:
        return replace(state, triggered=True, trigger_time=now)
    return state


def sample_actor_pose(track: ActorTrack, t_since_trigger: float):
    """Piecewise-linear pose at time t; clamped to the first/last waypoint.

    Heading interpolates along the shortest angular arc.
    """
    wps = track.waypoints
    if t_since_trigger <= wps[0].t:
        return wps[0].pose, wps[0].z_offset
    if t_since_trigger >= wps[-1].t:
        return wps[-1].pose, wps[-1].z_offset
    hi = next(i for i, w in enumerate(wps) if w.t > t_since_trigger)
    a, b = wps[hi - 1], wps[hi]
    u = (t_since_trigger - a.t) / (b.t - a.t)
    x = a.pose.x + u * (b.pose.x - a.pose.x)
    y = a.pose.y + u * (b.pose.y - a.pose.y)
    heading = wrap_angle(a.pose.heading + u * wrap_angle(b.pose.heading - a.pose.heading))
    z = a.z_offset + u * (b.z_offset - a.z_offset)
    return Pose2(x, y, heading), z


def sample_actor_state(track: ActorTrack, t_since_trigger: float) -> str | None:
    """Scripted property timeline (e.g. a light color); latest state at t."""
    current = None
    for t, name in track.states:
        if t <= t_since_trigger:
            current = name
    return current


def advance_state(scenario: Scenario, state: ScenarioState, now: float) -> ScenarioState:
    """Recompute the active actor pose map for simulation time `now`."""
    poses = {}
    for actor in scenario.static_actors():
        poses[actor.actor_id] = (actor.waypoints[0].pose, actor.waypoints[0].z_offset)
    if state.triggered:
        t = now - state.trigger_time
        for actor in scenario.moving_actors():
            poses[actor.actor_id] = sample_actor_pose(actor, t)
    return replace(state, active_poses=poses)


def randomize_spawn(scenario: Scenario, seed: int) -> Scenario:
    """Shift each moving actor's track along its walk direction by a
    seed-deterministic offset inside the `spawn_band` hyper-parameter (m)."""
    band = float(scenario.hyper_params.get("spawn_band", 0.0))
    movers = scenario.moving_actors()
    if not movers or band == 0.0:
        return scenario
    rng = np.random.default_rng(seed)
    new_actors = []
    for actor in scenario.actors:
        if not actor.is_moving:
            new_actors.append(actor)
            continue
        first, last = actor.waypoints[0].pose, actor.waypoints[-1].pose
        dx, dy = last.x - first.x, last.y - first.y
        norm = math.hypot(dx, dy)
        if norm < 1e-12:
            ux, uy = math.cos(first.heading), math.sin(first.heading)
        else:
            ux, uy = dx / norm, dy / norm
        off = rng.uniform(-band / 2.0, band / 2.0)
        shifted = tuple(
            Waypoint(
                w.t,
                Pose2(w.pose.x + off * ux, w.pose.y + off * uy, w.pose.heading),
                w.z_offset,
            )
            for w in actor.waypoints
        )
        new_actors.append(replace(actor, waypoints=shifted))
    return replace(scenario, actors=tuple(new_actors))


# --- difficulty knobs ------------------------------------------------------

def _retime_track(actor: ActorTrack, speed: float) -> ActorTrack:
    """Retime so motion segments run at `speed`; standing segments keep
    their duration.  Idempotent."""
    if speed <= 0:
        raise ScenarioError("hyper_params.walker_speed must be positive")
    times = [0.0]
    for a, b in zip(actor.waypoints, actor.waypoints[1:]):
        dist = math.hypot(b.pose.x - a.pose.x, b.pose.y - a.pose.y)
        dt = dist / speed if dist > 1e-12 else (b.t - a.t)
        times.append(times[-1] + dt)
    shifted = tuple(
        Waypoint(t, w.pose, w.z_offset) for t, w in zip(times, actor.waypoints)
    )
    return replace(actor, waypoints=shifted)


def conflict_arc_length(scenario: Scenario, sample_step: float = 0.05) -> float | None:
    """Ego-path arc length of the closest approach of the first moving actor.

    Densifies the actor's track and projects the nearest sample onto the
    path.  None when the scenario has no moving actor.
    """
    movers = scenario.moving_actors()
    if not movers:
        return None
    track = movers[0]
    pts = []
    for a, b in zip(track.waypoints, track.waypoints[1:]):
        dist = math.hypot(b.pose.x - a.pose.x, b.pose.y - a.pose.y)
        n = max(int(dist / sample_step), 1)
        for u in np.linspace(0.0, 1.0, n + 1):
            pts.append((a.pose.x + u * (b.pose.x - a.pose.x),
                        a.pose.y + u * (b.pose.y - a.pose.y)))
    if len(track.waypoints) == 1:
        pts = [(track.waypoints[0].pose.x, track.waypoints[0].pose.y)]
    best_s, best_d = 0.0, float("inf")
    for p in pts:
        s, e, _ = path_frame(scenario.ego_path, p)
        d = abs(e) if e != 0.0 else math.hypot(*(np.asarray(p) - scenario.ego_path.point_at(s)))
        if d < best_d:
            best_d, best_s = d, s
    return best_s


def apply_hyper_params(scenario: Scenario) -> Scenario:
    """Expand the difficulty knobs into concrete scenario fields.

    Supported keys: `walker_speed` (m/s, retimes moving actors),
    `trigger_radius` (m), `trigger_distance` (m of ego arc length between
    the trigger point and the conflict point of the first moving actor).
    Unknown keys are carried through untouched.  Idempotent.
    """
    hp = scenario.hyper_params
    out = scenario
    if "walker_speed" in hp:
        actors = tuple(
            _retime_track(a, float(hp["walker_speed"])) if a.is_moving else a
            for a in out.actors
        )
        out = replace(out, actors=actors)
    if "trigger_radius" in hp:
        r = float(hp["trigger_radius"])
        out = replace(out, trigger=replace(out.trigger, radius=r))
    if "trigger_distance" in hp:
        s_conflict = conflict_arc_length(out)
        if s_conflict is not None:
            s_trig = max(s_conflict - float(hp["trigger_distance"]), 0.0)
            cx, cy = out.ego_path.point_at(s_trig)
            out = replace(out, trigger=replace(out.trigger, center=(float(cx), float(cy))))
    return out


# --- serialization ---------------------------------------------------------

def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ScenarioError(f"missing field {where}.{key}" if where else f"missing field {key}")
    return mapping[key]


def load_scenario(text: str, assets=None) -> Scenario:
    """Parse and validate a scenario JSON document.

    When an asset library is supplied, every actor asset reference (and
    animation) must resolve or loading fails.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc

    name = _require(raw, "name", "")
    kind = _require(raw, "kind", "")

    trig = _require(raw, "trigger", "")
    speed_range = trig.get("speed_range", [0.0, float("inf")])
    trigger = TriggerZone(
        center=tuple(float(v) for v in _require(trig, "center", "trigger")),
        radius=float(_require(trig, "radius", "trigger")),
        speed_min=float(speed_range[0]),
        speed_max=float(speed_range[1]),
    )

    ego = _require(raw, "ego", "")
    sx, sy, sh = (float(v) for v in _require(ego, "start", "ego"))
    try:
        path = PlannedPath(_require(ego, "path", "ego"))
    except ValueError as exc:
        raise ScenarioError(f"ego.path: {exc}") from exc

    actors = []
    for i, a in enumerate(raw.get("actors", [])):
        where = f"actors[{i}]"
        wps = []
        for w in _require(a, "waypoints", where):
            t, x, y, heading = (float(v) for v in w[:4])
            z = float(w[4]) if len(w) > 4 else 0.0
            wps.append(Waypoint(t, Pose2(x, y, heading), z))
        fp = _require(a, "footprint", where)
        actors.append(
            ActorTrack(
                actor_id=str(_require(a, "id", where)),
                asset_ref=str(_require(a, "asset", where)),
                waypoints=tuple(wps),
                half_length=float(fp[0]),
                half_width=float(fp[1]),
                animation=a.get("animation"),
                states=tuple((float(t), str(s)) for t, s in a.get("states", [])),
            )
        )

    light_raw = _require(raw, "lighting", "")
    lighting = LightEnvironment(
        sun_dir=_require(light_raw, "sun_dir", "lighting"),
        sun_radiance=_require(light_raw, "sun_rgb", "lighting"),
        ambient_radiance=_require(light_raw, "ambient_rgb", "lighting"),
    )

    scenario = Scenario(
        name=str(name),
        kind=str(kind),
        actors=tuple(actors),
        trigger=trigger,
        ego_path=path,
        ego_start=Pose2(sx, sy, sh),
        ego_speed=float(ego.get("speed", 0.0)),
        lighting=lighting,
        hyper_params=dict(raw.get("hyper_params", {})),
        goal_rule=str(ego.get("goal_rule", "path_end_1p5m")),
    )

    if assets is not None:
        for actor in scenario.actors:
            assets.resolve(actor.asset_ref, actor.animation)

    return apply_hyper_params(scenario)


def serialize_scenario(scenario: Scenario) -> str:
    doc = {
        "name": scenario.name,
        "kind": scenario.kind,
        "trigger": {
            "center": list(scenario.trigger.center),
            "radius": scenario.trigger.radius,
            "speed_range": [scenario.trigger.speed_min, scenario.trigger.speed_max],
        },
        "ego": {
            "start": [scenario.ego_start.x, scenario.ego_start.y, scenario.ego_start.heading],
            "speed": scenario.ego_speed,
            "path": scenario.ego_path.waypoints.tolist(),
            "goal_rule": scenario.goal_rule,
        },
        "actors": [
            {
                "id": a.actor_id,
                "asset": a.asset_ref,
                "footprint": [a.half_length, a.half_width],
                "waypoints": [
                    [w.t, w.pose.x, w.pose.y, w.pose.heading, w.z_offset] for w in a.waypoints
                ],
                **({"animation": a.animation} if a.animation else {}),
                **({"states": [[t, s] for t, s in a.states]} if a.states else {}),
            }
            for a in scenario.actors
        ],
        "lighting": {
            "sun_dir": scenario.lighting.sun_dir.tolist(),
            "sun_rgb": scenario.lighting.sun_radiance.tolist(),
            "ambient_rgb": scenario.lighting.ambient_radiance.tolist(),
        },
        "hyper_params": scenario.hyper_params,
    }
    return json.dumps(doc, indent=2, sort_keys=True)
