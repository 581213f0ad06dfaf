"""Closed-loop controllers: speed-holding PID and the local-planner driver.

The driver translates planner output (speed, turn rate) into normalized
thruster commands using a thrust-to-steady-speed table calibrated against
the vessel dynamics, plus proportional steering on the turn-rate error.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import dwa as dwa_mod
from .dynamics import (
    ControlCommand,
    CurrentSpec,
    Pose,
    ZERO_WIND,
    absolute_velocity,
    ground_velocity,
    state_at_rest,
    step,
)
from .world import min_obstacle_distance, raycast_scan


class SimplePid:
    """Textbook PID on a scalar error with a clamped integrator.

    compute(desired, measured) returns the control output, clamped into
    [out_min, out_max]. The integrator is bounded so its own contribution
    cannot exceed the output span (basic anti-windup).
    """

    def __init__(self, kp, ki, kd, dt=0.1, out_min=0.0, out_max=1.0):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if out_min >= out_max:
            raise ValueError("out_min must be below out_max")
        self.kp = kp
        self.ki = ki
        self.kd = kd
        self.dt = dt
        self.out_min = out_min
        self.out_max = out_max
        self.reset()

    def reset(self):
        self._integral = 0.0
        self._prev_error = None

    def compute(self, desired, measured):
        error = desired - measured
        if self._prev_error is None:
            derivative = 0.0
        else:
            derivative = (error - self._prev_error) / self.dt
        self._prev_error = error

        self._integral += error * self.dt
        if self.ki > 0.0:
            bound = (self.out_max - self.out_min) / self.ki
            self._integral = min(bound, max(-bound, self._integral))

        out = self.kp * error + self.ki * self._integral + self.kd * derivative
        return min(self.out_max, max(self.out_min, out))


PID_GAINS = (1.5, 1.0, 0.2)  # speed-hold gains used by the bundled demo
CONTROL_DT = 0.1             # 10 Hz control tick for the PID loop


def run_speed_hold(
    params,
    desired_speed,
    duration=60.0,
    gains=PID_GAINS,
    current=CurrentSpec(),
    wind=ZERO_WIND,
    sim_dt=0.02,
    control_dt=CONTROL_DT,
):
    """PID speed-hold loop: measure ground speed, set thrust, angle neutral.

    Returns (times, speeds, thrusts) sampled once per control tick. Speed is
    the planar ground-speed magnitude, the same quantity a satnav reports.
    """
    pid = SimplePid(*gains, dt=control_dt)
    state = state_at_rest(Pose(0.0, 0.0, 0.0), current)
    n_sub = max(1, round(control_dt / sim_dt))
    n_ticks = int(round(duration / control_dt))
    times = np.empty(n_ticks)
    speeds = np.empty(n_ticks)
    thrusts = np.empty(n_ticks)
    n_thrusters = len(params.thrusters)
    for k in range(n_ticks):
        vel = ground_velocity(state, current)
        speed = math.hypot(vel[0], vel[1])
        thrust = pid.compute(desired_speed, speed)
        cmd = ControlCommand((thrust,) * n_thrusters, (0.5,) * n_thrusters)
        for _ in range(n_sub):
            state = step(state, cmd, current, wind, params, dt=sim_dt)
        times[k] = state.t
        speeds[k] = speed
        thrusts[k] = thrust
    return times, speeds, thrusts


class ThrustSpeedTable:
    """Static map between normalized thrust and steady surge speed.

    Calibrated by running the vessel model straight ahead at fixed thrust
    until the surge acceleration dies out. Monotone by construction, so the
    inverse lookup is a plain interpolation with saturation at the ends.
    """

    def __init__(self, thrusts, speeds):
        thrusts = np.asarray(thrusts, dtype=float)
        speeds = np.asarray(speeds, dtype=float)
        if thrusts.shape != speeds.shape or thrusts.ndim != 1 or len(thrusts) < 2:
            raise ValueError("need matching 1-d thrust and speed arrays, length >= 2")
        if np.any(np.diff(thrusts) <= 0):
            raise ValueError("thrust grid must be strictly increasing")
        if np.any(np.diff(speeds) < 0):
            raise ValueError("speeds must be non-decreasing with thrust")
        self.thrusts = thrusts
        self.speeds = speeds

    @classmethod
    def calibrate(cls, params, n_points=11, dt=0.02, settle_tol=1e-4, t_max=300.0):
        """Build the table by simulating each thrust level to steady state."""
        thrusts = np.linspace(0.0, 1.0, n_points)
        n_thrusters = len(params.thrusters)
        speeds = np.empty(n_points)
        current = CurrentSpec()
        for i, thr in enumerate(thrusts):
            cmd = ControlCommand((float(thr),) * n_thrusters, (0.5,) * n_thrusters)
            state = state_at_rest(Pose(0.0, 0.0, 0.0), current)
            prev_u = 0.0
            while state.t < t_max:
                state = step(state, cmd, current, ZERO_WIND, params, dt=dt)
                u = state.nu_r.u
                if abs(u - prev_u) < settle_tol * dt:
                    break
                prev_u = u
            speeds[i] = state.nu_r.u
        return cls(thrusts, speeds)

    @property
    def max_speed(self):
        return float(self.speeds[-1])

    def speed_for_thrust(self, thrust):
        return float(np.interp(thrust, self.thrusts, self.speeds))

    def thrust_for_speed(self, speed):
        return float(np.interp(speed, self.speeds, self.thrusts))


@dataclass
class DwaDriver:
    """Glue from planner velocities to a single azimuth thruster.

    Speed tracks through the calibrated table (feedforward); turn rate
    tracks through proportional control on the rate error, mapped to a
    thruster angle with saturation at the hardware limits. The steering
    sign flips with the thruster's longitudinal position: a stern unit
    must point the other way to produce the same moment as a bow unit.
    """

    params: object
    table: ThrustSpeedTable
    config: dwa_mod.DwaConfig
    steer_gain: float = 2.0

    def __post_init__(self):
        if len(self.params.thrusters) != 1:
            raise ValueError("driver expects a single-thruster vessel")
        if self.params.thrusters[0].dx == 0.0:
            raise ValueError("thruster at midships cannot steer by angle")

    def command(self, v_desired, omega_desired, r_measured):
        thruster = self.params.thrusters[0]
        thrust = self.table.thrust_for_speed(v_desired)
        # yaw moment is F dx sin(theta): a stern thruster needs the
        # opposite deflection of a bow thruster for the same turn
        sign = 1.0 if thruster.dx > 0 else -1.0
        theta = sign * self.steer_gain * (omega_desired - r_measured)
        angle_norm = thruster.normalized_from_angle(theta)
        return ControlCommand((thrust,), (angle_norm,))

    def plan(self, state, current, goal, obstacle_points, window_dt=None,
             speed_limit=None):
        """One planning tick: window search plus thruster mapping.

        speed_limit caps the commanded speed after planning; the caller
        uses it to slow down near the goal so the turn radius shrinks.
        """
        nu_abs = absolute_velocity(state.nu_r, state.pose.psi, current)
        if window_dt is None:
            window_dt = dwa_mod.DEFAULT_PLANNING_PERIOD
        result = dwa_mod.plan_step(
            state.pose, nu_abs.u, nu_abs.r, goal, obstacle_points,
            self.config, window_dt,
        )
        v_cmd = result.v if speed_limit is None else min(result.v, speed_limit)
        cmd = self.command(v_cmd, result.omega, nu_abs.r)
        return cmd, result


def channel_carrot(layout, position, lookahead):
    """Point on the channel centerline `lookahead` meters past the vessel.

    The vessel position is projected onto the centerline polyline; the
    returned target sits `lookahead` meters further along it, clamped to
    the channel end. Steering at a moving point on the centerline keeps
    the planner out of dead-end pockets along the banks.
    """
    pts = layout.centerline
    pos = np.asarray(position, dtype=float)
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    stations = np.concatenate([[0.0], np.cumsum(seg_len)])

    best_d = math.inf
    best_s = 0.0
    for i in range(len(seg)):
        if seg_len[i] == 0.0:
            continue
        t = np.dot(pos - pts[i], seg[i]) / (seg_len[i] ** 2)
        t = min(1.0, max(0.0, t))
        p = pts[i] + t * seg[i]
        d = math.hypot(*(pos - p))
        if d < best_d:
            best_d = d
            best_s = stations[i] + t * seg_len[i]

    s = min(best_s + lookahead, stations[-1])
    i = int(np.searchsorted(stations, s, side="right") - 1)
    i = min(i, len(seg) - 1)
    frac = (s - stations[i]) / seg_len[i] if seg_len[i] > 0 else 0.0
    return pts[i] + frac * seg[i]


@dataclass
class TransitResult:
    """Outcome of one closed-loop channel run."""

    reached_goal: bool
    collided: bool
    aborted: str
    steps: int
    sim_time: float
    min_clearance: float
    trajectory: np.ndarray  # (n, 4): t, x, y, psi at planning ticks
    plan_log: list = field(default_factory=list)


def default_driver_config(table):
    """Planner limits matched to the bundled ferry's envelope."""
    return dwa_mod.DwaConfig(
        v_max=min(table.max_speed, 1.2),  # keeps stopping distance short
        v_min=0.0,
        omega_max=0.4,
        accel_v=0.15,
        accel_omega=0.2,
        v_resolution=0.1,
        omega_resolution=0.05,
        horizon_t=8.0,
        rollout_dt=0.8,
        g_goal=1.0,
        g_obstacle=20.0,
        g_speed=0.3,
        d_threshold=3.0,
    )


def navigate(
    world,
    params,
    table,
    config=None,
    goal_radius=5.0,
    t_max=600.0,
    plan_period=1.0,
    sim_dt=0.02,
    n_beams=72,
    sensor_range=150.0,
    footprint_radius=None,
    wind=ZERO_WIND,
    lookahead=35.0,
    record_candidates=False,
    trace=None,
    trace_every=5,
):
    """Drive the vessel from the world's spawn to its goal with the planner.

    Sensing is a fresh raycast scan each planning tick, decimated to a 2 m
    grid. Worlds that carry a channel layout are followed via a lookahead
    point on the centerline; success is still measured against the world
    goal. Collision is checked against the world every dynamics step. The
    run ends at the goal circle, on collision, on planner starvation, or
    at the time limit, whichever comes first.

    trace, if given, is a list receiving a full state row every
    trace_every dynamics steps: (t, x, y, psi, u, v, r, thrust, angle).
    """
    if config is None:
        config = default_driver_config(table)
    if footprint_radius is None:
        footprint_radius = params.length / 2.0
    driver = DwaDriver(params=params, table=table, config=config)
    current = world.current
    state = state_at_rest(world.spawn, current)
    goal = np.asarray(world.goal, dtype=float)

    n_sub = max(1, round(plan_period / sim_dt))
    rows = []
    plan_log = []
    min_clear = math.inf
    aborted = ""
    reached = False
    collided = False
    steps = 0
    max_ticks = int(math.ceil(t_max / plan_period))
    for _ in range(max_ticks):
        pos = np.array([state.pose.x, state.pose.y])
        if np.hypot(*(goal - pos)) <= goal_radius:
            reached = True
            break
        scan = raycast_scan(world, state.pose, n_beams=n_beams,
                            max_range=sensor_range, timestamp=state.t)
        obstacles = dwa_mod.radar_to_obstacles(scan, cell=2.0)
        if world.channel is not None:
            target = channel_carrot(world.channel, pos, lookahead)
        else:
            target = goal
        d_goal = float(np.hypot(*(goal - pos)))
        speed_limit = 0.1 + 0.05 * d_goal  # creep up on the goal circle
        try:
            cmd, result = driver.plan(state, current, target, obstacles,
                                      speed_limit=speed_limit)
        except dwa_mod.NoFeasibleTrajectoryError:
            aborted = f"no feasible trajectory at step {steps}"
            break
        rows.append((state.t, state.pose.x, state.pose.y, state.pose.psi))
        if record_candidates:
            plan_log.append(result)
        for _ in range(n_sub):
            state = step(state, cmd, current, wind, params, dt=sim_dt)
            steps += 1
            clearance = min_obstacle_distance(world, (state.pose.x, state.pose.y))
            min_clear = min(min_clear, clearance)
            if trace is not None and steps % trace_every == 0:
                trace.append((state.t, state.pose.x, state.pose.y, state.pose.psi,
                              state.nu_r.u, state.nu_r.v, state.nu_r.r,
                              cmd.thrust[0], cmd.angle[0]))
            if clearance <= footprint_radius:
                collided = True
                break
        if collided:
            break

    if not reached and not collided and not aborted:
        pos = np.array([state.pose.x, state.pose.y])
        if np.hypot(*(goal - pos)) <= goal_radius:
            reached = True
        else:
            aborted = "time limit"

    rows.append((state.t, state.pose.x, state.pose.y, state.pose.psi))
    return TransitResult(
        reached_goal=reached,
        collided=collided,
        aborted=aborted,
        steps=steps,
        sim_time=state.t,
        min_clearance=min_clear,
        trajectory=np.array(rows),
        plan_log=plan_log,
    )
