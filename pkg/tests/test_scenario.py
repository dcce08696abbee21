import json
import math

import numpy as np
import pytest

from mixsim.geometry import Pose2
from mixsim.scenario import (
    ActorTrack,
    Scenario,
    ScenarioError,
    ScenarioState,
    TriggerZone,
    Waypoint,
    advance_state,
    apply_hyper_params,
    check_trigger,
    load_scenario,
    randomize_spawn,
    sample_actor_pose,
    sample_actor_state,
    serialize_scenario,
)


def minimal_doc(**overrides):
    doc = {
        "name": "minimal",
        "kind": "static_obstacle",
        "trigger": {"center": [5.0, 0.0], "radius": 5.0, "speed_range": [0.0, 10.0]},
        "ego": {
            "start": [0.0, 0.0, 0.0],
            "speed": 2.0,
            "path": [[0.0, 0.0], [30.0, 0.0]],
            "goal_rule": "near_static_obstacle_5m",
        },
        "actors": [
            {
                "id": "crate",
                "asset": "cube",
                "footprint": [0.5, 0.5],
                "waypoints": [[0.0, 20.0, 0.0, 0.0, 0.0]],
            }
        ],
        "lighting": {
            "sun_dir": [0.2, 0.1, 1.0],
            "sun_rgb": [2.5, 2.4, 2.3],
            "ambient_rgb": [0.25, 0.27, 0.3],
        },
        "hyper_params": {},
    }
    doc.update(overrides)
    return doc


def jaywalker_doc():
    return {
        "name": "jaywalker-test",
        "kind": "jaywalker",
        "trigger": {"center": [10.0, 0.0], "radius": 10.0, "speed_range": [0.5, 5.0]},
        "ego": {
            "start": [0.0, 0.0, 0.0],
            "speed": 2.0,
            "path": [[0.0, 0.0], [40.0, 0.0]],
            "goal_rule": "path_end_1p5m",
        },
        "actors": [
            {
                "id": "walker",
                "asset": "walker",
                "footprint": [0.3, 0.3],
                "waypoints": [
                    [0.0, 25.0, 6.0, -math.pi / 2, 0.0],
                    [8.0, 25.0, -6.0, -math.pi / 2, 0.0],
                ],
            }
        ],
        "lighting": {
            "sun_dir": [0.2, 0.1, 1.0],
            "sun_rgb": [2.5, 2.4, 2.3],
            "ambient_rgb": [0.25, 0.27, 0.3],
        },
        "hyper_params": {"walker_speed": 1.5, "spawn_band": 4.0},
    }


def test_minimal_scenario_loads():
    sc = load_scenario(json.dumps(minimal_doc()))
    assert sc.name == "minimal"
    assert len(sc.actors) == 1
    assert not sc.actors[0].is_moving


def test_non_monotone_waypoint_times_rejected():
    doc = minimal_doc()
    doc["actors"][0]["waypoints"] = [
        [0.0, 20.0, 0.0, 0.0, 0.0],
        [2.0, 21.0, 0.0, 0.0, 0.0],
        [2.0, 22.0, 0.0, 0.0, 0.0],
    ]
    with pytest.raises(ScenarioError, match="not strictly increasing"):
        load_scenario(json.dumps(doc))


def test_malformed_json_rejected():
    with pytest.raises(ScenarioError, match="not valid JSON"):
        load_scenario("{nope")


def test_missing_field_named_in_error():
    doc = minimal_doc()
    del doc["trigger"]
    with pytest.raises(ScenarioError, match="trigger"):
        load_scenario(json.dumps(doc))


def test_unresolved_asset_reference():
    class EmptyLibrary:
        def resolve(self, key, animation=None):
            raise ScenarioError(f"unresolved asset reference {key!r}")

    with pytest.raises(ScenarioError, match="unresolved asset"):
        load_scenario(json.dumps(minimal_doc()), assets=EmptyLibrary())


def test_jaywalker_fixture_sampled_position():
    # walker_speed 1.5 m/s: at t = 2 s the walker is 3 m along its track
    sc = load_scenario(json.dumps(jaywalker_doc()))
    walker = sc.actors[0]
    pose, z = sample_actor_pose(walker, 2.0)
    assert pose.x == pytest.approx(25.0)
    assert pose.y == pytest.approx(6.0 - 3.0)
    assert z == 0.0


def test_round_trip_field_for_field():
    sc = load_scenario(json.dumps(jaywalker_doc()))
    sc2 = load_scenario(serialize_scenario(sc))
    assert sc2.name == sc.name and sc2.kind == sc.kind
    assert sc2.goal_rule == sc.goal_rule
    assert sc2.ego_start == sc.ego_start and sc2.ego_speed == sc.ego_speed
    assert np.array_equal(sc2.ego_path.waypoints, sc.ego_path.waypoints)
    assert sc2.trigger == sc.trigger
    assert sc2.hyper_params == sc.hyper_params
    assert np.array_equal(sc2.lighting.sun_dir, sc.lighting.sun_dir)
    assert np.array_equal(sc2.lighting.sun_radiance, sc.lighting.sun_radiance)
    assert sc2.actors == sc.actors


# --- trigger ---------------------------------------------------------------

def test_trigger_fires_inside_zone_in_speed_range():
    zone = TriggerZone((0, 0), 5.0, 1.0, 3.0)
    state = check_trigger(ScenarioState(), Pose2(4.9, 0, 0), 1.5, zone, now=2.0)
    assert state.triggered and state.trigger_time == 2.0


def test_trigger_speed_gate():
    zone = TriggerZone((0, 0), 5.0, 1.0, 3.0)
    state = check_trigger(ScenarioState(), Pose2(4.9, 0, 0), 0.5, zone, now=2.0)
    assert not state.triggered
    state = check_trigger(state, Pose2(4.9, 0, 0), 3.5, zone, now=2.5)
    assert not state.triggered


def test_trigger_latches():
    zone = TriggerZone((0, 0), 5.0, 1.0, 3.0)
    state = check_trigger(ScenarioState(), Pose2(1, 0, 0), 2.0, zone, now=1.0)
    assert state.triggered
    state2 = check_trigger(state, Pose2(100, 0, 0), 0.0, zone, now=9.0)
    assert state2.triggered and state2.trigger_time == 1.0


def test_trigger_latch_property_over_random_sequences():
    rng = np.random.default_rng(0)
    zone = TriggerZone((0, 0), 3.0, 0.5, 4.0)
    state = ScenarioState()
    ever = False
    for k in range(200):
        state = check_trigger(
            state, Pose2(rng.uniform(-6, 6), rng.uniform(-6, 6), 0), rng.uniform(0, 5), zone, k * 0.1
        )
        ever = ever or state.triggered
        if ever:
            assert state.triggered


# --- sampling --------------------------------------------------------------

def walk_track(points, footprint=(0.3, 0.3)):
    return ActorTrack(
        "a", "walker",
        tuple(Waypoint(t, Pose2(x, y, h)) for t, x, y, h in points),
        *footprint,
    )


def test_sample_linear_midpoint():
    track = walk_track([(0, 0, 0, 0), (10, 10, 0, 0)])
    pose, _ = sample_actor_pose(track, 5.0)
    assert (pose.x, pose.y, pose.heading) == (5.0, 0.0, 0.0)


def test_sample_holds_past_end_and_before_start():
    track = walk_track([(0, 0, 0, 0), (10, 10, 0, 0)])
    assert sample_actor_pose(track, 12.0)[0].x == 10.0
    assert sample_actor_pose(track, 0.0)[0].x == 0.0


def test_sample_heading_shortest_arc():
    h0, h1 = math.radians(170), math.radians(-170)
    track = walk_track([(0, 0, 0, h0), (10, 0, 0, h1)])
    pose, _ = sample_actor_pose(track, 5.0)
    assert pose.heading == pytest.approx(math.pi)


def test_sample_continuity():
    rng = np.random.default_rng(4)
    track = walk_track([(0, 0, 0, 0.4), (3, 2, 1, -2.8), (7, -1, 4, 2.9)])
    for _ in range(100):
        t = rng.uniform(0, 8)
        p0, z0 = sample_actor_pose(track, t)
        p1, z1 = sample_actor_pose(track, t + 1e-6)
        assert abs(p1.x - p0.x) < 1e-4 and abs(p1.y - p0.y) < 1e-4
        assert abs(p1.heading - p0.heading) < 1e-4 or \
            abs(abs(p1.heading - p0.heading) - 2 * math.pi) < 1e-4


def test_scripted_states_sampled_latest_wins():
    track = ActorTrack(
        "light", "pole", (Waypoint(0.0, Pose2(0, 0, 0)),), 0.2, 0.2,
        states=((0.0, "green"), (4.0, "red")),
    )
    assert sample_actor_state(track, 1.0) == "green"
    assert sample_actor_state(track, 4.0) == "red"
    assert sample_actor_state(track, -1.0) is None


def test_advance_state_static_always_moving_after_trigger():
    sc = load_scenario(json.dumps(jaywalker_doc()))
    idle = advance_state(sc, ScenarioState(), now=3.0)
    assert "walker" not in idle.active_poses
    fired = ScenarioState(triggered=True, trigger_time=2.0)
    live = advance_state(sc, fired, now=4.0)
    pose, _ = live.active_poses["walker"]
    assert pose.y == pytest.approx(6.0 - 1.5 * 2.0)


# --- randomize_spawn -------------------------------------------------------

def test_randomize_spawn_deterministic():
    sc = load_scenario(json.dumps(jaywalker_doc()))
    a = randomize_spawn(sc, 42)
    b = randomize_spawn(sc, 42)
    assert a.actors == b.actors


def test_randomize_spawn_zero_band_is_identity():
    doc = jaywalker_doc()
    doc["hyper_params"]["spawn_band"] = 0.0
    sc = load_scenario(json.dumps(doc))
    assert randomize_spawn(sc, 7) is sc


def test_randomize_spawn_static_only_unchanged():
    sc = load_scenario(json.dumps(minimal_doc()))
    assert randomize_spawn(sc, 3) is sc


def test_randomize_spawn_band_containment_over_seeds():
    sc = load_scenario(json.dumps(jaywalker_doc()))
    nominal = sc.actors[0].waypoints[0].pose
    starts = set()
    for seed in range(100):
        moved = randomize_spawn(sc, seed).actors[0].waypoints[0].pose
        d = math.hypot(moved.x - nominal.x, moved.y - nominal.y)
        assert d <= 2.0 + 1e-12  # band 4 -> within +-2 m of nominal
        starts.add((round(moved.x, 6), round(moved.y, 6)))
    assert len(starts) > 50  # actually randomized


# --- hyper params ----------------------------------------------------------

def test_walker_speed_retimes_track():
    sc = load_scenario(json.dumps(jaywalker_doc()))
    walker = sc.actors[0]
    assert walker.waypoints[-1].t == pytest.approx(12.0 / 1.5)  # 12 m at 1.5 m/s


def test_walker_speed_keeps_standing_segments():
    doc = jaywalker_doc()
    doc["actors"][0]["waypoints"] = [
        [0.0, 25.0, 6.0, -math.pi / 2, 0.0],
        [4.0, 25.0, 0.0, -math.pi / 2, 0.0],
        [30.0, 25.0, 0.0, -math.pi / 2, 0.0],  # stands for 26 s
    ]
    sc = load_scenario(json.dumps(doc))
    wps = sc.actors[0].waypoints
    assert wps[1].t == pytest.approx(6.0 / 1.5)
    assert wps[2].t - wps[1].t == pytest.approx(26.0)


def test_trigger_distance_places_trigger_on_path():
    doc = jaywalker_doc()
    doc["hyper_params"]["trigger_distance"] = 10.0
    sc = load_scenario(json.dumps(doc))
    # Walker crosses the path at x = 25; trigger must sit 10 m earlier.
    assert sc.trigger.center[0] == pytest.approx(15.0, abs=0.1)
    assert sc.trigger.center[1] == pytest.approx(0.0, abs=1e-9)


def test_hyper_param_expansion_idempotent():
    doc = jaywalker_doc()
    doc["hyper_params"]["trigger_distance"] = 8.0
    sc = load_scenario(json.dumps(doc))
    again = apply_hyper_params(sc)
    assert again.actors == sc.actors
    assert again.trigger == sc.trigger
