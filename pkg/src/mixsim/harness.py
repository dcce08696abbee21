"""Closed-loop episode runner: trigger -> animate -> insert-render -> agent
-> controllers -> plant -> metrics, stepped in simulation time at a fixed
tick rate so outcomes are machine-independent and byte-reproducible.

Collisions are recorded without ending the run; an episode terminates on
goal, on the 100 s limit, or (replay mode) when the recording runs out.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .autonomy import (
    AgentCommand,
    AgentObservation,
    ConstantCruiseAgent,
    DetectorParams,
    ModularAgent,
    PlannerParams,
    TrackerParams,
)
from .evaluation import (
    GOAL_PENALTY_S,
    CollisionEvent,
    EpisodeReport,
    aggregate,
    check_collision,
    latency_report,
    render_latency_table,
    time_to_goal,
)
from .geometry import Obb2, Pose3, ego_camera_pose
from .plant import ControllerGains, Plant, PlantParams, PlantState, pi_speed, stanley_steer
from .render.composite import InsertionRenderer
from .render.mesh import AssetLibrary
from .render.raster import RenderConfig
from .scenario import (
    Scenario,
    ScenarioState,
    advance_state,
    apply_hyper_params,
    check_trigger,
    load_scenario,
    randomize_spawn,
)
from .streams import ReplaySource, SyntheticSource, ingest_stream


class EpisodeError(Exception):
    pass


@dataclass
class RunConfig:
    scenario_paths: list = field(default_factory=list)
    agent: str = "modular"               # modular | constant | external=HOST:PORT
    seeds: list = field(default_factory=lambda: [0])
    tick_rate: float = 10.0
    out_dir: str | None = None
    stream_dir: str | None = None        # replay when set; synthetic otherwise
    realtime: bool = False
    dump_frames: bool = False
    asset_root: str | None = None
    episode_limit_s: float = GOAL_PENALTY_S
    synthetic_cam: object = None         # CameraModel override for synthetic mode
    cam_height: float = 1.5
    ego_half_length: float = 1.25
    ego_half_width: float = 0.7
    ego_inflation: float = 0.0           # optional safety margin on the ego box
    plant: PlantParams = field(default_factory=PlantParams)
    gains: ControllerGains = field(default_factory=ControllerGains)
    render: RenderConfig = field(default_factory=RenderConfig)
    detector: DetectorParams = field(default_factory=DetectorParams)
    tracker: TrackerParams = field(default_factory=TrackerParams)
    planner: PlannerParams = field(default_factory=PlannerParams)
    variations: list = field(default_factory=list)  # [{"name", "hyper_params"}]

    def __post_init__(self):
        if self.tick_rate <= 0:
            raise ValueError("tick_rate must be positive")

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        raw = json.loads(text)
        kwargs = {}
        simple = {
            "scenario_paths", "agent", "seeds", "tick_rate", "out_dir", "stream_dir",
            "realtime", "dump_frames", "asset_root", "episode_limit_s", "cam_height",
            "ego_half_length", "ego_half_width", "ego_inflation", "variations",
        }
        for key in simple & raw.keys():
            kwargs[key] = raw[key]
        for key, ctor in (
            ("plant", PlantParams), ("gains", ControllerGains), ("render", RenderConfig),
            ("detector", DetectorParams), ("tracker", TrackerParams),
            ("planner", PlannerParams),
        ):
            if key in raw:
                kwargs[key] = ctor(**raw[key])
        return cls(**kwargs)


def make_agent(spec: str, config: RunConfig):
    if spec == "modular":
        return ModularAgent(config.detector, config.tracker, config.planner)
    if spec in ("constant", "constant_cruise"):
        return ConstantCruiseAgent(config.planner.cruise_speed)
    if spec.startswith("external="):
        from .bridge import ExternalAgentBridge

        return ExternalAgentBridge(spec.split("=", 1)[1])
    raise ValueError(f"unknown agent {spec!r}")


def scenario_variation(scenario: Scenario, overrides: dict) -> Scenario:
    """Merge hyper-parameter overrides and re-expand the difficulty knobs."""
    merged = dict(scenario.hyper_params)
    merged.update(overrides)
    return apply_hyper_params(replace(scenario, hyper_params=merged))


def _ego_box(state: PlantState, config: RunConfig) -> Obb2:
    return Obb2(
        state.pose,
        config.ego_half_length + config.ego_inflation,
        config.ego_half_width + config.ego_inflation,
    )


def _actor_boxes(scenario: Scenario, state: ScenarioState):
    boxes = []
    by_id = {a.actor_id: a for a in scenario.actors}
    for actor_id, (pose, _z) in state.active_poses.items():
        actor = by_id[actor_id]
        boxes.append((actor_id, Obb2(pose, actor.half_length, actor.half_width)))
    return boxes


def _posed_meshes(scenario: Scenario, state: ScenarioState, assets: AssetLibrary,
                  now: float, keyframe_fps: float):
    out = []
    by_id = {a.actor_id: a for a in scenario.actors}
    t_anim = (now - state.trigger_time) if state.triggered else now
    for actor_id, (pose, z) in sorted(state.active_poses.items()):
        actor = by_id[actor_id]
        meshes = assets.load(actor.asset_ref, actor.animation)
        k = int(t_anim * keyframe_fps) % len(meshes) if len(meshes) > 1 else 0
        out.append((meshes[k], Pose3.from_pose2(pose, z)))
    return out


def _static_obstacle_position(scenario: Scenario):
    statics = scenario.static_actors()
    if not statics:
        return None
    w = statics[0].waypoints[0]
    return (w.pose.x, w.pose.y)


def run_episode(
    config: RunConfig,
    scenario: Scenario,
    seed: int,
    agent=None,
    source=None,
    assets: AssetLibrary | None = None,
    on_tick=None,
) -> tuple[EpisodeReport, list[str]]:
    """Run one episode; returns the report and the per-tick JSON log lines.

    Deterministic for fixed (config, scenario, seed, stream bytes): all
    timing-sensitive stages are logged but never feed back into control.
    `on_tick(tick, t, frame, info)` fires after compositing and before the
    agent phase (the teleop service broadcasts from it).
    """
    assets = assets or AssetLibrary(config.asset_root)
    scenario = randomize_spawn(scenario, seed)
    agent = agent or make_agent(config.agent, config)
    if hasattr(agent, "reset"):
        agent.reset()
    if source is None:
        if config.stream_dir:
            source = ingest_stream(config.stream_dir)
        elif config.synthetic_cam is not None:
            source = SyntheticSource(cam=config.synthetic_cam)
        else:
            source = SyntheticSource()
    replay = isinstance(source, ReplaySource)

    dt = 1.0 / config.tick_rate
    plant = Plant(config.plant, PlantState(scenario.ego_start, speed=scenario.ego_speed))
    renderer = InsertionRenderer(scenario.lighting, config.render)
    state = ScenarioState()
    integral = 0.0
    log_lines: list[str] = []
    stage_log: list[dict] = []
    events: list[CollisionEvent] = []
    collided_actors: set[str] = set()
    goal_time = None
    obstacle_pos = _static_obstacle_position(scenario)
    path = scenario.ego_path

    max_ticks = int(round(config.episode_limit_s * config.tick_rate))
    if replay:
        max_ticks = min(max_ticks, len(source))

    frames_dir = None
    if config.dump_frames and config.out_dir:
        frames_dir = Path(config.out_dir) / "frames"
        frames_dir.mkdir(parents=True, exist_ok=True)

    for k in range(max_ticks):
        t_now = k * dt
        tick_wall0 = time.perf_counter()
        ego_state = plant.state

        if replay:
            cam_pose = source.pose(k)
            frame = source.frame(k, t_now)
        else:
            cam_pose = ego_camera_pose(ego_state.pose, config.cam_height)
            frame = source.frame(k, t_now, cam_pose)

        state = check_trigger(state, ego_state.pose, ego_state.speed, scenario.trigger, t_now)
        state = advance_state(scenario, state, t_now)

        try:
            posed = _posed_meshes(scenario, state, assets, t_now, config.render.keyframe_fps)
            composited, render_times = renderer.insert(frame, posed)
        except Exception as exc:
            raise EpisodeError(f"render failed at tick {k}: {exc}") from exc

        if on_tick is not None:
            on_tick(
                k,
                t_now,
                composited,
                {
                    "triggered": state.triggered,
                    "collided": bool(events),
                    "goal": goal_time is not None,
                    "speed": ego_state.speed,
                },
            )

        obs = AgentObservation(composited, ego_state, path, k, t_now)
        t_agent0 = time.perf_counter()
        try:
            cmd = agent.step(obs)
        except Exception as exc:
            raise EpisodeError(f"agent failed at tick {k}: {exc}") from exc
        agent_ms = (time.perf_counter() - t_agent0) * 1e3

        if cmd.desired_speed is not None:
            target = cmd.desired_speed
        else:
            target = config.planner.cruise_speed * (1.0 - min(max(cmd.brake, 0.0), 1.0))
        accel, integral = pi_speed(
            target, ego_state.speed, integral, dt, config.gains, config.plant
        )
        steer = (
            cmd.steer_override
            if cmd.steer_override is not None
            else stanley_steer(ego_state, path, config.gains, config.plant)
        )
        new_state = plant.tick(accel, steer, dt)
        t_next = (k + 1) * dt

        collision_state = advance_state(scenario, state, t_next)
        tick_events = check_collision(
            _ego_box(new_state, config), _actor_boxes(scenario, collision_state),
            tick=k, time=t_next,
        )
        events.extend(tick_events)
        collided_actors.update(e.actor_id for e in tick_events)

        if goal_time is None:
            if scenario.goal_rule == "near_static_obstacle_5m":
                if obstacle_pos is None:
                    raise EpisodeError(
                        "scenario uses near_static_obstacle_5m but has no static actor"
                    )
                reached = (
                    math.hypot(
                        new_state.pose.x - obstacle_pos[0], new_state.pose.y - obstacle_pos[1]
                    )
                    <= 5.0
                )
            else:
                ex, ey = path.end
                reached = math.hypot(new_state.pose.x - ex, new_state.pose.y - ey) <= 1.5
            if reached:
                goal_time = t_next

        divergence = None
        if replay:
            divergence = float(
                math.hypot(
                    new_state.pose.x - cam_pose.translation[0],
                    new_state.pose.y - cam_pose.translation[1],
                )
            )

        stage_times = dict(render_times)
        stage_times["agent_ms"] = agent_ms
        stage_log.append(stage_times)

        row = {
            "tick": k,
            "t": t_next,
            "ego": [new_state.pose.x, new_state.pose.y, new_state.pose.heading,
                    new_state.speed],
            "cmd": {
                "desired_speed": cmd.desired_speed,
                "brake": cmd.brake,
                "steer_override": cmd.steer_override,
                "accel": accel,
                "steer": steer,
            },
            "triggered": state.triggered,
            "collisions": sorted(e.actor_id for e in tick_events),
            "goal": goal_time is not None,
        }
        if divergence is not None:
            row["replay_divergence_m"] = divergence
        log_lines.append(json.dumps(row, sort_keys=True))

        if frames_dir is not None:
            from PIL import Image

            Image.fromarray(composited.color).save(frames_dir / f"{k:06d}.png")

        if goal_time is not None:
            break
        if config.realtime:
            remaining = dt - (time.perf_counter() - tick_wall0)
            if remaining > 0:
                time.sleep(remaining)

    tick_positions = []
    for line in log_lines:
        row = json.loads(line)
        tick_positions.append((row["t"], row["ego"][0], row["ego"][1]))
    ttg = time_to_goal(
        tick_positions, scenario.goal_rule, path, obstacle_pos, limit=config.episode_limit_s
    )

    latency = {}
    if stage_log:
        latency = latency_report(stage_log)

    report = EpisodeReport(
        scenario=scenario.name,
        kind=scenario.kind,
        agent=getattr(agent, "name", config.agent),
        seed=seed,
        hyper_params=dict(scenario.hyper_params),
        collided=bool(events),
        collision_events=events,
        time_to_goal=ttg,
        tick_count=len(log_lines),
        latency=latency,
        diagnostics={"collided_actors": sorted(collided_actors)},
    )
    return report, log_lines


def run_suite(config: RunConfig, assets: AssetLibrary | None = None):
    """All (scenario, variation, seed) combinations; returns
    (BenchmarkTable, reports).  Episode failures are recorded and skipped."""
    if not config.scenario_paths:
        raise ValueError("suite needs at least one scenario")
    assets = assets or AssetLibrary(config.asset_root)
    out_dir = Path(config.out_dir) if config.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    reports = []
    failures = []
    for path in config.scenario_paths:
        base = load_scenario(Path(path).read_text(), assets=assets)
        variations = config.variations or [{"name": "base", "hyper_params": {}}]
        for var in variations:
            scenario = scenario_variation(base, var.get("hyper_params", {}))
            if var.get("name") and var["name"] != "base":
                scenario = replace(scenario, name=f"{base.name}@{var['name']}")
            for seed in config.seeds:
                try:
                    report, lines = run_episode(config, scenario, seed, assets=assets)
                except EpisodeError as exc:
                    failures.append({"scenario": scenario.name, "seed": seed, "error": str(exc)})
                    continue
                reports.append(report)
                if out_dir:
                    stem = f"{scenario.name}__seed{seed}"
                    (out_dir / f"{stem}.report.json").write_text(report.to_json())
                    (out_dir / f"{stem}.ticks.jsonl").write_text("\n".join(lines) + "\n")

    if not reports:
        raise EpisodeError(f"no episode succeeded; failures: {failures}")
    table = aggregate(reports)
    if out_dir:
        (out_dir / "benchmark.json").write_text(table.to_json())
        (out_dir / "benchmark.txt").write_text(table.render_text() + "\n")
        (out_dir / "failures.json").write_text(json.dumps(failures, indent=2))
        if reports[0].latency:
            (out_dir / "latency.txt").write_text(
                render_latency_table(reports[0].latency) + "\n"
            )
    return table, reports
