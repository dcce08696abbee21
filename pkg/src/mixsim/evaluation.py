"""Episode scoring and reality-gap image metrics.

Collision rate counts episodes with at least one ego/actor oriented-box
overlap; goal-reaching time is penalized at 100 s when the goal is never
reached inside the episode limit.  Image metrics (PSNR, SSIM on BT.601
luma, outlier percentage at threshold 25.5) quantify how far composited
frames sit from reference captures.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Obb2, PlannedPath, obb_overlap
from .render.color import luma601

PSNR_CAP = 99.0
GOAL_PENALTY_S = 100.0
OUTLIER_THRESHOLD = 25.5


@dataclass(frozen=True)
class CollisionEvent:
    tick: int
    time: float
    actor_id: str
    ego_box: Obb2
    actor_box: Obb2


def check_collision(ego: Obb2, actors: list[tuple[str, Obb2]], tick: int = 0, time: float = 0.0):
    """One event per overlapping actor at this tick."""
    return [
        CollisionEvent(tick, time, actor_id, ego, box)
        for actor_id, box in actors
        if obb_overlap(ego, box)
    ]


def time_to_goal(
    tick_log,
    goal_rule: str,
    path: PlannedPath,
    static_obstacle=None,
    limit: float = GOAL_PENALTY_S,
) -> float:
    """First time the goal condition holds; the penalty value when it never
    does.  tick_log is a time-ordered iterable of (t, x, y)."""
    if goal_rule == "near_static_obstacle_5m":
        if static_obstacle is None:
            raise ValueError("goal_rule near_static_obstacle_5m requires an obstacle position")
        ox, oy = float(static_obstacle[0]), float(static_obstacle[1])

        def reached(x, y):
            return math.hypot(x - ox, y - oy) <= 5.0

    elif goal_rule == "path_end_1p5m":
        ex, ey = path.end

        def reached(x, y):
            return math.hypot(x - ex, y - ey) <= 1.5

    else:
        raise ValueError(f"unknown goal_rule {goal_rule!r}")

    for t, x, y in tick_log:
        if t > limit:
            break
        if reached(x, y):
            return float(t)
    return float(limit)


@dataclass
class EpisodeReport:
    scenario: str
    kind: str
    agent: str
    seed: int
    hyper_params: dict
    collided: bool
    collision_events: list
    time_to_goal: float
    tick_count: int
    latency: dict = field(default_factory=dict)  # stage -> {mean_ms, p95_ms}
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.collided != bool(self.collision_events):
            raise ValueError("collided flag must mirror the event list")
        if not 0.0 < self.time_to_goal <= GOAL_PENALTY_S:
            if self.time_to_goal != 0.0:  # goal can hold at the very first tick
                raise ValueError("time_to_goal must lie in (0, 100]")

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "kind": self.kind,
            "agent": self.agent,
            "seed": self.seed,
            "hyper_params": self.hyper_params,
            "collided": self.collided,
            "collisions": [
                {"tick": e.tick, "t": e.time, "actor": e.actor_id}
                for e in self.collision_events
            ],
            "time_to_goal_s": self.time_to_goal,
            "ticks": self.tick_count,
            "latency": self.latency,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class BenchmarkTable:
    cells: dict  # (agent, kind) -> {"collision_rate", "mean_time_s", "runs"}

    def to_dict(self):
        return {
            f"{agent}|{kind}": stats for (agent, kind), stats in sorted(self.cells.items())
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def render_text(self) -> str:
        agents = sorted({a for a, _ in self.cells})
        kinds = sorted({k for _, k in self.cells})
        name_w = max([len(a) for a in agents] + [10])
        col_w = max([len(k) for k in kinds] + [20])
        lines = []
        header = " " * name_w + " | " + " | ".join(k.center(col_w) for k in kinds)
        sub = (
            "Agent".ljust(name_w)
            + " | "
            + " | ".join(("Coll.Rate  TimeToGoal").center(col_w) for _ in kinds)
        )
        lines.append(header)
        lines.append(sub)
        lines.append("-" * len(sub))
        for agent in agents:
            cols = []
            for kind in kinds:
                stats = self.cells.get((agent, kind))
                if stats is None:
                    cols.append("-".center(col_w))
                else:
                    cols.append(
                        f"{stats['collision_rate']:.3f}      {stats['mean_time_s']:.2f}".center(col_w)
                    )
            lines.append(agent.ljust(name_w) + " | " + " | ".join(cols))
        return "\n".join(lines)


def aggregate(reports: list[EpisodeReport]) -> BenchmarkTable:
    """Mean collision rate and goal time per (agent, scenario kind)."""
    if not reports:
        raise ValueError("cannot aggregate an empty report list")
    cells: dict = {}
    for r in reports:
        cells.setdefault((r.agent, r.kind), []).append(r)
    out = {}
    for key, rs in cells.items():
        out[key] = {
            "collision_rate": sum(r.collided for r in rs) / len(rs),
            "mean_time_s": sum(r.time_to_goal for r in rs) / len(rs),
            "runs": len(rs),
        }
    return BenchmarkTable(out)


# --- image metrics -----------------------------------------------------------

def _check_pair(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(255^2 / MSE) over all channels; capped at 99 dB."""
    _check_pair(a, b)
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(255.0**2 / mse), PSNR_CAP)


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable 2-D correlation, valid region only."""
    n = len(k)
    rows = img.shape[0] - n + 1
    tmp = np.zeros((rows, img.shape[1]))
    for i in range(n):
        tmp += k[i] * img[i : i + rows, :]
    cols = img.shape[1] - n + 1
    out = np.zeros((rows, cols))
    for i in range(n):
        out += k[i] * tmp[:, i : i + cols]
    return out


def ssim(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5) -> float:
    """Mean local SSIM on BT.601 luma; Gaussian window, L=255, K1/K2 standard."""
    _check_pair(a, b)
    if min(a.shape[0], a.shape[1]) < window:
        raise ValueError(f"images must be at least {window} px on each side")
    x = luma601(a.astype(np.float64)) if a.ndim == 3 else a.astype(np.float64)
    y = luma601(b.astype(np.float64)) if b.ndim == 3 else b.astype(np.float64)
    k = _gaussian_kernel(window, sigma)
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    mu_x = _filter_valid(x, k)
    mu_y = _filter_valid(y, k)
    sxx = _filter_valid(x * x, k) - mu_x * mu_x
    syy = _filter_valid(y * y, k) - mu_y * mu_y
    sxy = _filter_valid(x * y, k) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def outlier_pct(a: np.ndarray, b: np.ndarray, threshold: float = OUTLIER_THRESHOLD) -> float:
    """Percent of pixels whose mean absolute channel error exceeds threshold."""
    _check_pair(a, b)
    err = np.abs(a.astype(np.float64) - b.astype(np.float64))
    if err.ndim == 3:
        err = err.mean(axis=2)
    return float(100.0 * (err > threshold).sum() / err.size)


@dataclass(frozen=True)
class RealityGapReport:
    psnr_db: float
    ssim: float
    outlier_pct: float
    mae: tuple[float, float, float]

    def to_json(self) -> str:
        return json.dumps(
            {
                "psnr_db": self.psnr_db,
                "ssim": self.ssim,
                "outlier_pct": self.outlier_pct,
                "mae_rgb": list(self.mae),
            },
            indent=2,
            sort_keys=True,
        )


def reality_gap(a: np.ndarray, b: np.ndarray) -> RealityGapReport:
    _check_pair(a, b)
    mae = np.abs(a.astype(np.float64) - b.astype(np.float64)).reshape(-1, 3).mean(axis=0)
    return RealityGapReport(
        psnr_db=psnr(a, b),
        ssim=ssim(a, b),
        outlier_pct=outlier_pct(a, b),
        mae=tuple(float(v) for v in mae),
    )


# --- latency -------------------------------------------------------------------

def latency_report(stage_log: list[dict]) -> dict:
    """Per-stage mean/p95 (ms) plus end-to-end total and FPS.

    stage_log: one dict per tick mapping stage name -> milliseconds.
    """
    if not stage_log:
        raise ValueError("empty timing log")
    stages = sorted({name for entry in stage_log for name in entry})
    out = {}
    for name in stages:
        vals = np.asarray([entry.get(name, 0.0) for entry in stage_log])
        out[name] = {
            "mean_ms": float(vals.mean()),
            "p95_ms": float(np.percentile(vals, 95)),
        }
    totals = np.asarray([sum(entry.values()) for entry in stage_log])
    mean_total = float(totals.mean())
    out["total"] = {"mean_ms": mean_total, "p95_ms": float(np.percentile(totals, 95))}
    out["fps"] = 1000.0 / mean_total if mean_total > 0 else float("inf")
    return out


def render_latency_table(report: dict) -> str:
    """Aligned text table of the per-stage runtime breakdown."""
    stages = [k for k in report if k not in ("fps",)]
    rows = ["Stage".ljust(16) + "Mean (ms)".rjust(12) + "P95 (ms)".rjust(12)]
    rows.append("-" * 40)
    for name in stages:
        rows.append(
            name.ljust(16)
            + f"{report[name]['mean_ms']:.2f}".rjust(12)
            + f"{report[name]['p95_ms']:.2f}".rjust(12)
        )
    rows.append(f"Throughput: {report['fps']:.1f} FPS")
    return "\n".join(rows)
