"""Modular autonomy: geometric obstacle detection from the composited depth
map, greedy bird's-eye-view track association, constant-velocity forecasting,
and rule-based stop/go longitudinal planning.

The detector replaces learned segmentation with depth clustering but keeps
the same downstream localization rule: each cluster is summarized by the
median of its back-projected x and y coordinates.  The planner forecasts in
fixed steps over a fixed horizon and stops when a track enters the collision
radius of a predicted ego position the ego can actually reach within the
travel-distance gate.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .frame import FrameRGBD
from .geometry import PlannedPath, Pose2, back_project, path_cross_track_batch, path_frame
from .plant import PlantState


@dataclass(frozen=True)
class Detection:
    position: tuple[float, float]   # ego BEV frame (x forward-ish: ego-local axes), m
    extent_hint: float              # m, max BEV spread of the cluster
    pixel_count: int


@dataclass(frozen=True)
class Track:
    track_id: int
    position: tuple[float, float]   # world frame, m
    velocity: tuple[float, float]   # world frame, m/s
    age: int = 1
    misses: int = 0


@dataclass(frozen=True)
class AgentCommand:
    """Either a desired speed or a normalized brake, plus optional steer."""

    desired_speed: float | None = None
    brake: float | None = None
    steer_override: float | None = None

    def __post_init__(self):
        if (self.desired_speed is None) == (self.brake is None):
            raise ValueError("exactly one of desired_speed / brake must be set")


@dataclass(frozen=True)
class AgentObservation:
    frame: FrameRGBD
    ego: PlantState
    path: PlannedPath
    tick: int
    t: float

    def __post_init__(self):
        if self.frame.timestamp > self.t + 1e-9:
            raise ValueError("observation frame is from the future")


@dataclass(frozen=True)
class DetectorParams:
    corridor_half_width: float = 1.5
    ground_tolerance: float = 0.2
    max_height: float = 3.5
    cell_size: float = 0.25
    min_cluster_size: int = 30
    max_range: float = 40.0
    min_range: float = 0.3


@dataclass(frozen=True)
class TrackerParams:
    gate: float = 2.0
    smoothing_alpha: float = 0.5
    max_misses: int = 5


@dataclass(frozen=True)
class PlannerParams:
    step: float = 0.2          # s between forecast samples
    horizon: float = 10.0      # s of lookahead
    collision_radius: float = 3.0
    travel_gate: float = 5.0   # m of ego travel within which conflicts stop us
    cruise_speed: float = 2.0
    use_travel_gate: bool = True


def detect_obstacles(
    frame: FrameRGBD,
    ego_pose: Pose2,
    path: PlannedPath,
    params: DetectorParams = DetectorParams(),
) -> list[Detection]:
    """Cluster above-ground depth points inside the path corridor.

    Returns one Detection per grid-connected cluster with enough source
    pixels, positioned at the cluster's median world x/y expressed in the
    ego frame.
    """
    depth = np.asarray(frame.depth, dtype=np.float64)
    h, w = depth.shape
    valid = (depth >= params.min_range) & (depth <= params.max_range)
    if not valid.any():
        return []
    rows, cols = np.nonzero(valid)
    z = depth[rows, cols]
    pc = back_project(cols + 0.5, rows + 0.5, z, frame.cam)
    pw = frame.cam_pose.transform(pc)

    above = (pw[:, 2] > params.ground_tolerance) & (pw[:, 2] <= params.max_height)
    pw = pw[above]
    if pw.shape[0] == 0:
        return []
    near_path = path_cross_track_batch(path, pw[:, :2]) <= params.corridor_half_width
    pw = pw[near_path]
    if pw.shape[0] == 0:
        return []

    cx = np.floor(pw[:, 0] / params.cell_size).astype(np.int64)
    cy = np.floor(pw[:, 1] / params.cell_size).astype(np.int64)
    cells: dict[tuple[int, int], list[int]] = {}
    for i, key in enumerate(zip(cx.tolist(), cy.tolist())):
        cells.setdefault(key, []).append(i)

    seen: set[tuple[int, int]] = set()
    detections = []
    for start in sorted(cells):
        if start in seen:
            continue
        queue = deque([start])
        seen.add(start)
        members: list[int] = []
        while queue:
            cell = queue.popleft()
            members.extend(cells[cell])
            x0, y0 = cell
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    nb = (x0 + dx, y0 + dy)
                    if nb in cells and nb not in seen:
                        seen.add(nb)
                        queue.append(nb)
        if len(members) < params.min_cluster_size:
            continue
        pts = pw[members]
        med = np.median(pts[:, :2], axis=0)
        spread = float(max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1])))
        local = ego_pose.to_local(med)
        detections.append(
            Detection(
                position=(float(local[0]), float(local[1])),
                extent_hint=spread,
                pixel_count=len(members),
            )
        )
    detections.sort(key=lambda d: d.position)
    return detections


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int], ...]        # (track index, detection index)
    unmatched_tracks: tuple[int, ...]
    unmatched_detections: tuple[int, ...]


def associate_greedy(tracks: list[Track], det_points: np.ndarray, gate: float) -> Matching:
    """Repeatedly match the globally closest (track, detection) pair under
    the gate; ties break on (track id, detection index)."""
    if gate <= 0:
        raise ValueError("gate must be positive")
    det_points = np.asarray(det_points, dtype=np.float64).reshape(-1, 2)
    candidates = []
    for ti, track in enumerate(tracks):
        for di in range(det_points.shape[0]):
            d = math.hypot(
                track.position[0] - det_points[di, 0], track.position[1] - det_points[di, 1]
            )
            if d <= gate:
                candidates.append((d, track.track_id, di, ti))
    candidates.sort()
    used_t: set[int] = set()
    used_d: set[int] = set()
    pairs = []
    for _, _, di, ti in candidates:
        if ti in used_t or di in used_d:
            continue
        pairs.append((ti, di))
        used_t.add(ti)
        used_d.add(di)
    return Matching(
        pairs=tuple(pairs),
        unmatched_tracks=tuple(i for i in range(len(tracks)) if i not in used_t),
        unmatched_detections=tuple(i for i in range(det_points.shape[0]) if i not in used_d),
    )


def update_tracks(
    tracks: list[Track],
    matching: Matching,
    det_points: np.ndarray,
    dt: float,
    params: TrackerParams = TrackerParams(),
    next_id: int = 0,
) -> tuple[list[Track], int]:
    """Linear motion model update: matched tracks blend a finite-difference
    velocity, unmatched tracks coast and eventually drop, leftover
    detections spawn fresh zero-velocity tracks."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    det_points = np.asarray(det_points, dtype=np.float64).reshape(-1, 2)
    a = params.smoothing_alpha
    out: list[Track] = []
    for ti, di in matching.pairs:
        track = tracks[ti]
        px, py = det_points[di]
        vx = a * ((px - track.position[0]) / dt) + (1 - a) * track.velocity[0]
        vy = a * ((py - track.position[1]) / dt) + (1 - a) * track.velocity[1]
        out.append(
            replace(
                track,
                position=(float(px), float(py)),
                velocity=(float(vx), float(vy)),
                age=track.age + 1,
                misses=0,
            )
        )
    for ti in matching.unmatched_tracks:
        track = tracks[ti]
        if track.misses + 1 > params.max_misses:
            continue
        out.append(
            replace(
                track,
                position=(
                    track.position[0] + track.velocity[0] * dt,
                    track.position[1] + track.velocity[1] * dt,
                ),
                age=track.age + 1,
                misses=track.misses + 1,
            )
        )
    for di in matching.unmatched_detections:
        out.append(
            Track(
                track_id=next_id,
                position=(float(det_points[di, 0]), float(det_points[di, 1])),
                velocity=(0.0, 0.0),
            )
        )
        next_id += 1
    out.sort(key=lambda t: t.track_id)
    return out, next_id


def plan_speed(
    tracks: list[Track],
    ego: PlantState,
    path: PlannedPath,
    params: PlannerParams = PlannerParams(),
) -> AgentCommand:
    """Stop/go decision from constant-velocity forecasts of ego and tracks."""
    if not tracks:
        return AgentCommand(desired_speed=params.cruise_speed)
    s0, _, _ = path_frame(path, (ego.pose.x, ego.pose.y))
    v = ego.speed
    n_steps = int(round(params.horizon / params.step))
    for k in range(n_steps + 1):
        t = k * params.step
        s_k = min(s0 + v * t, path.length)
        ego_pt = path.point_at(s_k)
        travel = s_k - s0
        if params.use_travel_gate and travel > params.travel_gate:
            break
        for track in tracks:
            ox = track.position[0] + track.velocity[0] * t
            oy = track.position[1] + track.velocity[1] * t
            if math.hypot(ox - ego_pt[0], oy - ego_pt[1]) <= params.collision_radius:
                return AgentCommand(desired_speed=0.0)
    return AgentCommand(desired_speed=params.cruise_speed)


class ConstantCruiseAgent:
    """Baseline that never reacts; used for forced-collision fixtures."""

    name = "constant_cruise"

    def __init__(self, cruise_speed: float = 2.0):
        self.cruise_speed = cruise_speed

    def step(self, obs: AgentObservation) -> AgentCommand:
        return AgentCommand(desired_speed=self.cruise_speed)

    def reset(self):
        pass


class ModularAgent:
    """detect -> associate -> update -> plan, with per-episode track state."""

    name = "modular"

    def __init__(
        self,
        detector: DetectorParams = DetectorParams(),
        tracker: TrackerParams = TrackerParams(),
        planner: PlannerParams = PlannerParams(),
    ):
        self.detector = detector
        self.tracker = tracker
        self.planner = planner
        self.reset()

    def reset(self):
        self.tracks: list[Track] = []
        self._next_id = 0
        self._last_t: float | None = None

    def step(self, obs: AgentObservation) -> AgentCommand:
        ego_pose = obs.ego.pose
        detections = detect_obstacles(obs.frame, ego_pose, obs.path, self.detector)
        det_world = (
            ego_pose.to_world(np.asarray([d.position for d in detections]))
            if detections
            else np.zeros((0, 2))
        )
        dt = obs.t - self._last_t if self._last_t is not None else None
        self._last_t = obs.t
        if dt is None or dt <= 0:
            matching = Matching((), tuple(range(len(self.tracks))), tuple(range(len(detections))))
            self.tracks, self._next_id = update_tracks(
                self.tracks, matching, det_world, 1.0, self.tracker, self._next_id
            )
        else:
            matching = associate_greedy(self.tracks, det_world, self.tracker.gate)
            self.tracks, self._next_id = update_tracks(
                self.tracks, matching, det_world, dt, self.tracker, self._next_id
            )
        return plan_speed(self.tracks, obs.ego, obs.path, self.planner)
