"""Dynamic window local planner over (speed, turn-rate) candidates.

The planner enumerates velocity pairs reachable within one control period
under acceleration limits, rolls each pair out as a constant-velocity arc,
scores the arcs for goal alignment, obstacle clearance, and speed, and
returns the cheapest candidate under a deterministic tie-break.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .angles import angle_diff
from .radar import RadarFrame
from .world import ScanFrame


class NoFeasibleTrajectoryError(RuntimeError):
    """Every candidate in the window collides; caller decides what to do."""


class DwaConfigError(ValueError):
    """Planner configuration violates its bounds."""


DEFAULT_PLANNING_PERIOD = 1.0  # seconds; matches a 1 Hz control loop


@dataclass(frozen=True)
class DwaConfig:
    """Window limits, rollout horizon, and cost weights."""

    v_max: float
    v_min: float = 0.0
    omega_max: float = 0.5
    accel_v: float = 0.2
    accel_omega: float = 0.3
    v_resolution: float = 0.05
    omega_resolution: float = 0.05
    horizon_t: float = 6.0
    rollout_dt: float = 0.5
    g_goal: float = 1.0
    g_obstacle: float = 1.0
    g_speed: float = 1.0
    d_threshold: float = 2.5

    def __post_init__(self):
        if self.v_min > self.v_max:
            raise DwaConfigError(f"v_min {self.v_min} exceeds v_max {self.v_max}")
        if self.v_resolution <= 0 or self.omega_resolution <= 0:
            raise DwaConfigError("resolutions must be positive")
        if not (self.horizon_t >= self.rollout_dt > 0):
            raise DwaConfigError("need horizon_t >= rollout_dt > 0")
        if min(self.g_goal, self.g_obstacle, self.g_speed) < 0:
            raise DwaConfigError("cost weights must be >= 0")
        if self.omega_max < 0 or self.accel_v < 0 or self.accel_omega < 0:
            raise DwaConfigError("omega_max and accelerations must be >= 0")
        if self.d_threshold < 0:
            raise DwaConfigError("d_threshold must be >= 0")


def load_dwa_config(source):
    """DwaConfig from a YAML path or a plain mapping."""
    if not isinstance(source, dict):
        source = yaml.safe_load(Path(source).read_text())
    if not isinstance(source, dict):
        raise DwaConfigError("planner config must be a mapping")
    try:
        return DwaConfig(**{k: float(v) for k, v in source.items()})
    except TypeError as e:
        raise DwaConfigError(f"bad planner config: {e}")


@dataclass(frozen=True, eq=False)
class Candidate:
    """One scored window entry. cost_total may be +inf (collision)."""

    v: float
    omega: float
    trajectory: np.ndarray          # (n+1, 3) poses, start included
    cost_goal: float
    cost_obstacle: float
    cost_speed: float
    cost_total: float


def _axis_values(lo, hi, res):
    # endpoints always included; interior points on the resolution grid
    if hi <= lo:
        return [lo]
    vals = []
    k = 0
    while True:
        x = lo + k * res
        if x >= hi - 1e-12:
            break
        vals.append(x)
        k += 1
    vals.append(hi)
    return vals


def dynamic_window(current_v, current_omega, config, window_dt=DEFAULT_PLANNING_PERIOD):
    """Velocity pairs reachable within window_dt, gridded at the resolutions.

    Pairs come out in deterministic enumeration order: v ascending, then
    omega ascending. A zero acceleration limit freezes that axis at the
    current value. If the current velocity sits outside the global bounds
    the window collapses onto the nearest bound.
    """
    v_lo = max(config.v_min, current_v - config.accel_v * window_dt)
    v_hi = min(config.v_max, current_v + config.accel_v * window_dt)
    if v_lo > v_hi:
        v_lo = v_hi = config.v_min if current_v < config.v_min else config.v_max
    w_lo = max(-config.omega_max, current_omega - config.accel_omega * window_dt)
    w_hi = min(config.omega_max, current_omega + config.accel_omega * window_dt)
    if w_lo > w_hi:
        w_lo = w_hi = -config.omega_max if current_omega < 0 else config.omega_max
    return [
        (v, w)
        for v in _axis_values(v_lo, v_hi, config.v_resolution)
        for w in _axis_values(w_lo, w_hi, config.omega_resolution)
    ]


def rollout(v, omega, start, horizon_t, rollout_dt):
    """Constant-velocity arc: psi += omega dt, then advance along heading.

    Returns an (n+1, 3) array of (x, y, psi) including the start pose,
    n = ceil(horizon_t / rollout_dt).
    """
    n = int(math.ceil(horizon_t / rollout_dt))
    k = np.arange(1, n + 1)
    psi = start.psi + omega * rollout_dt * k
    x = start.x + v * rollout_dt * np.cumsum(np.cos(psi))
    y = start.y + v * rollout_dt * np.cumsum(np.sin(psi))
    out = np.empty((n + 1, 3))
    out[0] = (start.x, start.y, start.psi)
    out[1:, 0] = x
    out[1:, 1] = y
    out[1:, 2] = psi
    return out


def min_obstacle_clearance(trajectory, obstacle_points):
    """Smallest point-to-point distance between the path and the obstacles."""
    if len(obstacle_points) == 0:
        return math.inf
    obs = np.asarray(obstacle_points, dtype=float)
    dx = trajectory[:, 0:1] - obs[None, :, 0]
    dy = trajectory[:, 1:2] - obs[None, :, 1]
    return float(np.hypot(dx, dy).min())


def score(trajectory, v, goal, obstacle_points, config):
    """Component costs of one candidate trajectory.

    Goal cost is the absolute wrapped heading error at the endpoint toward
    the goal; the obstacle term is G/d_min over the whole path and +inf
    once d_min falls to d_threshold or below; speed cost rewards going fast.
    """
    ex, ey, epsi = trajectory[-1]
    theta_goal = math.atan2(goal[1] - ey, goal[0] - ex)
    c_goal = config.g_goal * abs(float(angle_diff(theta_goal, epsi)))

    d_min = min_obstacle_clearance(trajectory, obstacle_points)
    if d_min > config.d_threshold:
        c_obstacle = config.g_obstacle / d_min  # inf clearance -> free of charge
    else:
        c_obstacle = math.inf

    c_speed = config.g_speed * (config.v_max - v)
    return c_goal, c_obstacle, c_speed, c_goal + c_obstacle + c_speed


@dataclass(frozen=True, eq=False)
class PlanResult:
    v: float
    omega: float
    chosen: Candidate
    candidates: list


def plan_step(
    pose, current_v, current_omega, goal, obstacle_points, config,
    window_dt=DEFAULT_PLANNING_PERIOD,
):
    """Enumerate the window, score every rollout, return the cheapest.

    Tie-break order: lowest cost, then higher v, then omega closest to zero,
    then enumeration order. Raises NoFeasibleTrajectoryError when every
    candidate collides.
    """
    obs = np.asarray(obstacle_points, dtype=float).reshape(-1, 2)
    candidates = []
    best = None
    best_key = None
    for v, omega in dynamic_window(current_v, current_omega, config, window_dt):
        traj = rollout(v, omega, pose, config.horizon_t, config.rollout_dt)
        c_goal, c_obs, c_speed, c_total = score(traj, v, goal, obs, config)
        cand = Candidate(
            v=v, omega=omega, trajectory=traj,
            cost_goal=c_goal, cost_obstacle=c_obs, cost_speed=c_speed, cost_total=c_total,
        )
        candidates.append(cand)
        key = (c_total, -v, abs(omega))
        if best_key is None or key < best_key:
            best, best_key = cand, key
    if not math.isfinite(best.cost_total):
        raise NoFeasibleTrajectoryError(
            f"all {len(candidates)} window candidates collide within d_threshold"
        )
    return PlanResult(v=best.v, omega=best.omega, chosen=best, candidates=candidates)


def radar_to_obstacles(source, cell=None):
    """Obstacle points (earth-frame meters) from a radar frame or scan.

    Radar frames map set pixels to their pixel-center metric coordinates
    through the frame's extent. Scans contribute their hit points directly.
    Pass cell (meters) to decimate to one point per grid cell, keeping the
    first point encountered in deterministic iteration order.
    """
    if isinstance(source, RadarFrame):
        if source.extent is None:
            raise ValueError("radar frame carries no extent metadata")
        x_min, x_max, y_min, y_max = source.extent
        g = source.pixels.shape[0]
        idx = np.argwhere(source.pixels > 0)
        pts = np.empty((len(idx), 2))
        pts[:, 0] = x_min + (idx[:, 0] + 0.5) * (x_max - x_min) / g
        pts[:, 1] = y_min + (idx[:, 1] + 0.5) * (y_max - y_min) / g
    elif isinstance(source, ScanFrame):
        pts = np.asarray(source.points, dtype=float).reshape(-1, 2).copy()
    else:
        raise TypeError(f"expected RadarFrame or ScanFrame, got {type(source).__name__}")

    if cell is not None and len(pts):
        if cell <= 0:
            raise ValueError(f"cell must be positive, got {cell}")
        keys = np.floor(pts / cell).astype(np.int64)
        _, first = np.unique(keys, axis=0, return_index=True)
        pts = pts[np.sort(first)]
    return pts


def write_candidates_csv(candidates, path):
    """Per-candidate cost dump for offline plotting of trajectory fans."""
    lines = ["v,omega,cost_goal,cost_obstacle,cost_speed,cost_total"]
    for c in candidates:
        lines.append(
            f"{c.v!r},{c.omega!r},{c.cost_goal!r},{c.cost_obstacle!r},"
            f"{c.cost_speed!r},{c.cost_total!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
