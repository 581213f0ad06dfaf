"""Episodic goal-reaching environment over the vessel dynamics.

One environment step is one second of simulated time. Observations pack
goal distance, heading, body velocities and accelerations, the previous
action, and a ring of range readings; rewards combine distance, progress,
and heading terms with a terminal bonus or penalty.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .angles import angle_diff, wrap_angle
from .dynamics import (
    ControlCommand,
    Pose,
    ZERO_WIND,
    absolute_velocity,
    acceleration,
    state_at_rest,
    step,
    thruster_allocation,
)
from .world import ObstacleWorld, SplitMix64, min_obstacle_distance, raycast_scan

logger = logging.getLogger(__name__)


class EnvConfigError(ValueError):
    """Environment wiring is incomplete or unusable."""


def bundled_goal_world(with_obstacles=True):
    """The fixed training scene: spawn at the origin, goal 60 m east.

    Two square boulders flank the direct route without blocking it, so a
    straight-ahead run stays clear while wandering policies can collide.
    """
    polygons = ()
    if with_obstacles:
        polygons = (
            np.array([[26.0, 14.0], [34.0, 14.0], [34.0, 22.0], [26.0, 22.0]]),
            np.array([[24.0, -24.0], [32.0, -24.0], [32.0, -16.0], [24.0, -16.0]]),
        )
    return ObstacleWorld(
        polygons=polygons,
        goal=np.array([60.0, 0.0]),
        spawn=Pose(0.0, 0.0, 0.0),
    )


class EpisodeFinishedError(RuntimeError):
    """step() called after the episode already terminated."""


THRUST_BOUNDS = (0.0, 1.0)
ANGLE_BOUNDS = (0.4, 0.6)   # narrow steering band keeps the action space tame


@dataclass(frozen=True)
class RewardConfig:
    """Weights and terminal bookkeeping for the reward."""

    g_distance: float = 0.01
    g_direction: float = 1.0
    g_heading: float = 0.1
    terminal_bonus: float = 500.0
    terminal_penalty: float = -500.0
    goal_radius: float = 5.0
    max_steps: int = 300

    def __post_init__(self):
        if self.goal_radius <= 0:
            raise EnvConfigError(f"goal_radius must be positive, got {self.goal_radius}")
        if self.max_steps < 1:
            raise EnvConfigError(f"max_steps must be >= 1, got {self.max_steps}")


def compute_reward(prev_state, new_state, outcome, goal, config):
    """Reward components between two step-boundary states.

    Returns (r_distance, r_direction, r_heading, r_end, total). The heading
    term penalizes the absolute wrapped error between the bearing to the
    goal and the vessel heading, so it peaks (at zero) facing the goal.
    """
    gx, gy = float(goal[0]), float(goal[1])
    d_prev = math.hypot(gx - prev_state.pose.x, gy - prev_state.pose.y)
    d_new = math.hypot(gx - new_state.pose.x, gy - new_state.pose.y)

    r_distance = -d_new
    r_direction = d_prev - d_new
    bearing = math.atan2(gy - new_state.pose.y, gx - new_state.pose.x)
    r_heading = -abs(float(angle_diff(bearing, new_state.pose.psi)))

    if outcome == "goal":
        r_end = config.terminal_bonus
    elif outcome in ("collision", "timeout", "aborted"):
        r_end = config.terminal_penalty
    else:
        r_end = 0.0

    total = (config.g_distance * r_distance
             + config.g_direction * r_direction
             + config.g_heading * r_heading
             + r_end)
    return r_distance, r_direction, r_heading, r_end, total


class VesselEnv:
    """Fixed-scenario episodic environment; start, goal, obstacles never move.

    The action is (thrust_norm, angle_norm) for a single azimuth thruster,
    clamped into THRUST_BOUNDS x ANGLE_BOUNDS before application. One call
    to step() integrates one second of dynamics.
    """

    def __init__(
        self,
        world,
        params,
        reward_config=None,
        n_beams=36,
        sensor_range=100.0,
        control_period=1.0,
        sim_dt=0.02,
    ):
        if world.goal is None:
            raise EnvConfigError("world has no goal position")
        if world.spawn is None:
            raise EnvConfigError("world has no spawn pose")
        if len(params.thrusters) != 1:
            raise EnvConfigError("environment drives a single-thruster vessel")
        if n_beams < 1:
            raise EnvConfigError(f"n_beams must be >= 1, got {n_beams}")
        if sensor_range <= 0:
            raise EnvConfigError(f"sensor_range must be positive, got {sensor_range}")
        if control_period <= 0 or sim_dt <= 0 or control_period < sim_dt:
            raise EnvConfigError("need control_period >= sim_dt > 0")
        self.world = world
        self.params = params
        self.reward_config = reward_config or RewardConfig()
        self.n_beams = n_beams
        self.sensor_range = sensor_range
        self.control_period = control_period
        self.sim_dt = sim_dt
        self.footprint_radius = params.length / 2.0
        self._n_sub = max(1, round(control_period / sim_dt))
        self._state = None
        self._done = True
        self._steps = 0
        self._a_prev = (0.0, 0.5)
        self._last_seed = None

    @property
    def observation_length(self):
        return 10 + self.n_beams

    @property
    def state(self):
        return self._state

    @property
    def goal(self):
        return np.asarray(self.world.goal, dtype=float)

    def reset(self, seed=None):
        """Place the vessel at the spawn, at rest over ground, and observe.

        The scenario itself is fixed, so the seed only tags the episode;
        identical seeds trivially reproduce identical episodes.
        """
        self._last_seed = seed
        self._state = state_at_rest(self.world.spawn, self.world.current)
        self._done = False
        self._steps = 0
        self._a_prev = (0.0, 0.5)
        return self._observe()

    def step(self, action):
        """Apply (thrust, angle) for one control period.

        Returns (observation, reward, done, info). info carries the outcome
        label (empty while running), the raw reward components, and whether
        the action was clamped.
        """
        if self._state is None:
            raise EpisodeFinishedError("reset() must be called before step()")
        if self._done:
            raise EpisodeFinishedError("episode finished; call reset()")
        thrust, angle = float(action[0]), float(action[1])
        if not (math.isfinite(thrust) and math.isfinite(angle)):
            raise ValueError(f"non-finite action ({action[0]}, {action[1]})")
        clamped = not (THRUST_BOUNDS[0] <= thrust <= THRUST_BOUNDS[1]
                       and ANGLE_BOUNDS[0] <= angle <= ANGLE_BOUNDS[1])
        thrust = min(THRUST_BOUNDS[1], max(THRUST_BOUNDS[0], thrust))
        angle = min(ANGLE_BOUNDS[1], max(ANGLE_BOUNDS[0], angle))

        prev_state = self._state
        cmd = ControlCommand((thrust,), (angle,))
        state = self._state
        outcome = ""
        for _ in range(self._n_sub):
            state = step(state, cmd, self.world.current, ZERO_WIND,
                         self.params, dt=self.sim_dt)
            pos = (state.pose.x, state.pose.y)
            if min_obstacle_distance(self.world, pos) <= self.footprint_radius:
                outcome = "collision"
                break
            if math.hypot(self.goal[0] - pos[0], self.goal[1] - pos[1]) \
                    <= self.reward_config.goal_radius:
                outcome = "goal"
                break
        self._state = state
        self._steps += 1
        self._a_prev = (thrust, angle)

        if not outcome and self._steps >= self.reward_config.max_steps:
            outcome = "timeout"
        self._done = bool(outcome)

        r_dist, r_dir, r_head, r_end, reward = compute_reward(
            prev_state, state, outcome, self.goal, self.reward_config)
        obs = self._observe()
        info = {
            "outcome": outcome,
            "rewards": {
                "distance": r_dist,
                "direction": r_dir,
                "heading": r_head,
                "end": r_end,
            },
            "clamped": clamped,
            "d_goal": -r_dist,
            "t": state.t,
            "steps": self._steps,
        }
        return obs, reward, self._done, info

    def _observe(self):
        state = self._state
        pose = state.pose
        d_goal = math.hypot(self.goal[0] - pose.x, self.goal[1] - pose.y)
        nu_abs = absolute_velocity(state.nu_r, pose.psi, self.world.current)
        cmd = ControlCommand((self._a_prev[0],), (self._a_prev[1],))
        tau = thruster_allocation(cmd, self.params)
        nu_dot = acceleration(self.params, state.nu_r.as_array(), tau)
        scan = raycast_scan(self.world, pose, n_beams=self.n_beams,
                            max_range=self.sensor_range, timestamp=state.t)
        obs = np.empty(10 + self.n_beams)
        obs[0] = d_goal
        obs[1] = pose.psi
        obs[2:5] = (nu_abs.u, nu_abs.v, nu_abs.r)
        obs[5:8] = nu_dot
        obs[8:10] = self._a_prev
        obs[10:] = scan.ranges
        return obs


@dataclass(frozen=True)
class EpisodeStats:
    episode_index: int
    steps: int
    outcome: str
    cumulative_reward: float
    success_rate_running: float


class RandomPolicy:
    """Uniform draws over the action box, deterministic per seed."""

    def __init__(self, seed=0):
        self._rng = SplitMix64(seed)

    def __call__(self, obs):
        return (self._rng.uniform(*THRUST_BOUNDS),
                self._rng.uniform(*ANGLE_BOUNDS))


class ScriptedPolicy:
    """Proportional goal-seeker: fixed cruise thrust, steer at the bearing.

    Reads pose and goal from the environment it was built for; the packed
    observation does not expose the goal bearing directly.
    """

    def __init__(self, env, cruise_thrust=0.5, gain=0.3):
        self.env = env
        self.cruise_thrust = cruise_thrust
        self.gain = gain
        # a stern-mounted thruster needs the opposite deflection
        self._sign = 1.0 if env.params.thrusters[0].dx > 0 else -1.0

    def __call__(self, obs):
        pose = self.env.state.pose
        goal = self.env.goal
        bearing = math.atan2(goal[1] - pose.y, goal[0] - pose.x)
        err = float(angle_diff(bearing, pose.psi))
        angle = 0.5 + self._sign * self.gain * err
        angle = min(ANGLE_BOUNDS[1], max(ANGLE_BOUNDS[0], angle))
        return (self.cruise_thrust, angle)


def run_policy(env, policy, n_episodes, step_log=None):
    """Roll the policy for n_episodes; returns one EpisodeStats per episode.

    A policy returning a non-finite action aborts its episode: the episode
    is recorded as a failure with outcome "aborted" and the run continues.
    step_log, if given, is a list that receives one row dict per step.
    """
    stats = []
    successes = 0
    for ep in range(n_episodes):
        obs = env.reset(seed=ep)
        total = 0.0
        steps = 0
        outcome = ""
        done = False
        while not done:
            action = policy(obs)
            try:
                obs, reward, done, info = env.step(action)
            except ValueError as err:
                logger.warning("episode %d aborted: %s", ep, err)
                outcome = "aborted"
                _, _, _, r_end, reward = compute_reward(
                    env.state, env.state, outcome, env.goal, env.reward_config)
                total += reward
                steps += 1
                break
            total += reward
            steps = info["steps"]
            outcome = info["outcome"]
            if step_log is not None:
                step_log.append({
                    "episode": ep,
                    "step": steps,
                    "d_goal": info["d_goal"],
                    "theta": float(obs[1]),
                    "thrust": float(action[0]),
                    "angle": float(action[1]),
                    "r_distance": info["rewards"]["distance"],
                    "r_direction": info["rewards"]["direction"],
                    "r_heading": info["rewards"]["heading"],
                    "r_end": info["rewards"]["end"],
                    "reward": reward,
                    "outcome": outcome,
                })
        if outcome == "goal":
            successes += 1
        stats.append(EpisodeStats(
            episode_index=ep,
            steps=steps,
            outcome=outcome,
            cumulative_reward=total,
            success_rate_running=successes / (ep + 1),
        ))
    return stats


STEP_LOG_COLUMNS = (
    "episode", "step", "d_goal", "theta", "thrust", "angle",
    "r_distance", "r_direction", "r_heading", "r_end", "reward", "outcome",
)


def write_step_log_csv(rows, path):
    lines = [",".join(STEP_LOG_COLUMNS)]
    for row in rows:
        lines.append(",".join(
            row[c] if c == "outcome" else repr(float(row[c]))
            for c in STEP_LOG_COLUMNS))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_csv(stats, path):
    lines = ["episode,steps,outcome,cumulative_reward,success_rate_running"]
    for s in stats:
        lines.append(f"{s.episode_index},{s.steps},{s.outcome},"
                     f"{s.cumulative_reward!r},{s.success_rate_running!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
