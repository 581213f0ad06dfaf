"""Declarative simulation runs from YAML documents.

A scenario names a vessel model, a world (explicit file, generated
channel, or none), ambient current/wind (fixed or stepwise schedules),
exactly one controller, and the outputs to write. Runs are deterministic:
the same document produces byte-identical CSV files.
"""

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .angles import angle_diff
from .control import (
    DwaDriver,
    SimplePid,
    ThrustSpeedTable,
    default_driver_config,
    navigate,
)
from .dwa import DwaConfig, load_dwa_config
from .dynamics import (
    ControlCommand,
    CurrentSpec,
    Pose,
    WindForce,
    ZERO_WIND,
    ground_velocity,
    load_model,
    state_at_rest,
    step,
    with_current_changed,
)
from .rlenv import ANGLE_BOUNDS, THRUST_BOUNDS, RandomPolicy
from .world import (
    ObstacleWorld,
    PcgParams,
    generate_channel,
    load_world,
    min_obstacle_distance,
    moored_rectangles,
    world_from_dict,
)


class ScenarioFormatError(ValueError):
    """Scenario document fails validation; message names the field."""


_SCENARIOS_DIR = Path(__file__).parent / "scenarios"
_WORLDS_DIR = Path(__file__).parent / "worlds"


def bundled_scenarios():
    return sorted(p.stem.replace("_", "-") for p in _SCENARIOS_DIR.glob("*.yaml"))


def resolve_scenario_path(ref):
    """Filesystem path for a scenario reference: a path or a bundled name."""
    path = Path(ref)
    if path.exists():
        return path
    bundled = _SCENARIOS_DIR / (str(ref).replace("-", "_") + ".yaml")
    if bundled.exists():
        return bundled
    raise ScenarioFormatError(f"scenario not found: {ref}")


TRAJECTORY_COLUMNS = ("t", "x", "y", "psi", "u", "v", "r", "thrust", "angle")
CONTROLLER_TYPES = ("open-loop", "pid", "dwa", "policy")


@dataclass
class ScenarioResult:
    trajectory: np.ndarray  # rows of TRAJECTORY_COLUMNS
    summary: dict
    paths: dict
    world: object = None


def load_scenario(source):
    """Parse and validate a scenario document (path, bundled name, or mapping)."""
    if isinstance(source, (str, Path)):
        doc = yaml.safe_load(resolve_scenario_path(source).read_text())
    else:
        doc = source
    if not isinstance(doc, dict):
        raise ScenarioFormatError("scenario must be a mapping")
    if "vessel" not in doc:
        raise ScenarioFormatError("missing field: vessel")
    controller = doc.get("controller")
    if not isinstance(controller, dict) or "type" not in controller:
        raise ScenarioFormatError("missing field: controller.type")
    ctype = controller["type"]
    if ctype not in CONTROLLER_TYPES:
        raise ScenarioFormatError(
            f"controller.type must be one of {CONTROLLER_TYPES}, got {ctype!r}")
    if "world" in doc and "pcg" in doc:
        raise ScenarioFormatError("world and pcg are mutually exclusive")
    if "moored" in doc and "pcg" not in doc:
        raise ScenarioFormatError("moored requires pcg")
    duration = doc.get("duration", 60.0)
    if not isinstance(duration, (int, float)) or duration <= 0:
        raise ScenarioFormatError(f"duration must be positive, got {duration!r}")
    if ctype == "open-loop":
        script = controller.get("script")
        if not isinstance(script, list) or not script:
            raise ScenarioFormatError("controller.script must be a non-empty list")
        times = [entry.get("t", None) for entry in script]
        if any(t is None for t in times):
            raise ScenarioFormatError("controller.script entries need a t field")
        if times != sorted(times) or times[0] != 0:
            raise ScenarioFormatError("controller.script must start at t=0, sorted by t")
    if ctype == "pid" and "target_speed" not in controller:
        raise ScenarioFormatError("missing field: controller.target_speed")
    if ctype == "policy" and controller.get("name") not in ("scripted", "random"):
        raise ScenarioFormatError("controller.name must be scripted or random")
    if ctype == "dwa":
        for key in ("current", "wind"):
            if isinstance(doc.get(key), list):
                raise ScenarioFormatError(f"{key} schedules not supported with dwa")
    return doc


def _parse_current(entry):
    if entry is None:
        return CurrentSpec()
    heading = entry.get("heading", None)
    if heading is None:
        heading = math.radians(entry.get("heading_deg", 0.0))
    return CurrentSpec(float(entry.get("speed", 0.0)), float(heading))


def _parse_wind(entry):
    if entry is None:
        return ZERO_WIND
    return WindForce(float(entry.get("tau_x", 0.0)),
                     float(entry.get("tau_y", 0.0)),
                     float(entry.get("tau_n", 0.0)))


def _parse_schedule(value, parse_one, label):
    """Fixed value or stepwise schedule [(t, spec), ...] sorted by t."""
    if isinstance(value, list):
        entries = []
        for item in value:
            if "t" not in item:
                raise ScenarioFormatError(f"{label} schedule entries need a t field")
            entries.append((float(item["t"]), parse_one(item)))
        if [t for t, _ in entries] != sorted(t for t, _ in entries):
            raise ScenarioFormatError(f"{label} schedule must be sorted by t")
        if not entries or entries[0][0] != 0.0:
            raise ScenarioFormatError(f"{label} schedule must start at t=0")
        return entries
    return [(0.0, parse_one(value))]


def world_from_doc(doc, base_dir):
    if isinstance(doc.get("world"), dict):
        world = world_from_dict(doc["world"])
    elif "world" in doc:
        ref = doc["world"]
        path = Path(ref)
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            bundled = _WORLDS_DIR / (str(ref).replace("-", "_") + ".yaml")
            if bundled.exists():
                path = bundled
            else:
                raise ScenarioFormatError(f"world not found: {ref}")
        world = load_world(path)
    elif "pcg" in doc:
        pcg = doc["pcg"]
        try:
            params = PcgParams(**{k: (tuple(v) if isinstance(v, list) else v)
                                  for k, v in pcg.items()})
        except TypeError as err:
            raise ScenarioFormatError(f"pcg: {err}")
        world = generate_channel(params)
        if "moored" in doc:
            m = doc["moored"]
            boats = moored_rectangles(world.channel,
                                      count=int(m.get("count", 3)),
                                      seed=int(m.get("seed", params.seed)))
            world = world.with_extra_polygons(boats)
    else:
        world = ObstacleWorld()
    if "spawn" in doc:
        spawn = doc["spawn"] or {}
        pose = Pose(float(spawn.get("x", 0.0)), float(spawn.get("y", 0.0)),
                    math.radians(float(spawn.get("psi_deg", 0.0))))
        world = dataclasses.replace(world, spawn=pose)
    if "goal" in doc:
        world = dataclasses.replace(
            world, goal=np.asarray(doc["goal"], dtype=float))
    return world


def vessel_from_doc(doc):
    ref = doc["vessel"]
    try:
        return load_model(ref)
    except Exception as err:
        raise ScenarioFormatError(f"vessel {ref!r}: {err}")


class _OpenLoopController:
    """Piecewise-constant thrust/angle from the script entries."""

    period = 0.1

    def __init__(self, script, n_thrusters):
        self.script = script
        self.n = n_thrusters

    def command(self, state, world):
        entry = self.script[0]
        for candidate in self.script:
            if candidate["t"] <= state.t:
                entry = candidate
        thrust = float(entry.get("thrust", 0.0))
        angle = float(entry.get("angle", 0.5))
        return ControlCommand((thrust,) * self.n, (angle,) * self.n)


class _PidController:
    """Ground-speed hold at 10 Hz, thruster straight."""

    period = 0.1

    def __init__(self, controller_doc, n_thrusters):
        gains = controller_doc.get("gains", (1.5, 1.0, 0.2))
        if len(gains) != 3:
            raise ScenarioFormatError("controller.gains must have 3 entries")
        self.pid = SimplePid(*[float(g) for g in gains], dt=self.period)
        self.target = float(controller_doc["target_speed"])
        self.n = n_thrusters
        self._current = None

    def command(self, state, world):
        vel = ground_velocity(state, self._current)
        speed = math.hypot(vel[0], vel[1])
        thrust = self.pid.compute(self.target, speed)
        return ControlCommand((thrust,) * self.n, (0.5,) * self.n)


class _PolicyController:
    """Bundled policy adapters driving the vessel at 1 Hz."""

    period = 1.0

    def __init__(self, controller_doc, params):
        name = controller_doc["name"]
        if name == "random":
            self._policy = RandomPolicy(seed=int(controller_doc.get("seed", 0)))
            self._scripted = False
        else:
            self._scripted = True
            self.gain = float(controller_doc.get("gain", 0.3))
            self.cruise = float(controller_doc.get("cruise_thrust", 0.5))
            self._sign = 1.0 if params.thrusters[0].dx > 0 else -1.0

    def command(self, state, world):
        if not self._scripted:
            thrust, angle = self._policy(None)
        else:
            if world.goal is None:
                raise ScenarioFormatError("scripted policy needs a world goal")
            bearing = math.atan2(world.goal[1] - state.pose.y,
                                 world.goal[0] - state.pose.x)
            err = float(angle_diff(bearing, state.pose.psi))
            angle = 0.5 + self._sign * self.gain * err
            angle = min(ANGLE_BOUNDS[1], max(ANGLE_BOUNDS[0], angle))
            thrust = self.cruise
        return ControlCommand((thrust,), (angle,))


def run_scenario(source, base_dir=None):
    """Execute a scenario document; returns trajectory rows and a summary.

    Output files named under outputs: are written relative to base_dir
    (the scenario file's directory when source is a path).
    """
    if isinstance(source, (str, Path)):
        source = resolve_scenario_path(source)
        if base_dir is None:
            base_dir = source.resolve().parent
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    doc = load_scenario(source)
    params = vessel_from_doc(doc)
    world = world_from_doc(doc, base_dir)
    duration = float(doc.get("duration", 60.0))
    sim_dt = float(doc.get("dt", 0.02))
    ctype = doc["controller"]["type"]

    if ctype == "dwa":
        if "current" in doc:
            world = dataclasses.replace(world,
                                        current=_parse_current(doc["current"]))
        rows, summary = _run_dwa(doc, params, world, duration, sim_dt)
    else:
        rows, summary = _run_master_loop(doc, params, world, duration, sim_dt, ctype)

    trajectory = np.array(rows)
    paths = _write_outputs(doc, base_dir, trajectory, summary)
    return ScenarioResult(trajectory=trajectory, summary=summary, paths=paths,
                          world=world)


def _run_dwa(doc, params, world, duration, sim_dt):
    controller = doc["controller"]
    table = ThrustSpeedTable.calibrate(params)
    if "config" in controller:
        config = load_dwa_config(controller["config"])
    else:
        config = default_driver_config(table)
    wind = _parse_wind(doc["wind"]) if "wind" in doc else world.wind
    trace = []
    result = navigate(world, params, table, config=config, t_max=duration,
                      sim_dt=sim_dt, wind=wind, trace=trace)
    summary = {
        "outcome": ("goal" if result.reached_goal
                    else "collision" if result.collided
                    else "timeout"),
        "detail": result.aborted,
        "sim_time": float(result.sim_time),
        "steps": int(result.steps),
        "min_clearance": (None if math.isinf(result.min_clearance)
                          else float(result.min_clearance)),
    }
    return trace, summary


def _run_master_loop(doc, params, world, duration, sim_dt, ctype):
    n_thrusters = len(params.thrusters)
    controller_doc = doc["controller"]
    if ctype == "open-loop":
        controller = _OpenLoopController(controller_doc["script"], n_thrusters)
    elif ctype == "pid":
        controller = _PidController(controller_doc, n_thrusters)
    else:
        if n_thrusters != 1:
            raise ScenarioFormatError("policy controller needs a single thruster")
        controller = _PolicyController(controller_doc, params)

    if "current" in doc:
        current_schedule = _parse_schedule(doc["current"], _parse_current, "current")
    else:
        current_schedule = [(0.0, world.current)]
    if "wind" in doc:
        wind_schedule = _parse_schedule(doc["wind"], _parse_wind, "wind")
    else:
        wind_schedule = [(0.0, world.wind)]
    current = current_schedule[0][1]
    wind = wind_schedule[0][1]
    next_current = 1
    next_wind = 1

    state = state_at_rest(world.spawn, current)
    footprint = params.length / 2.0
    has_obstacles = len(world.segments()) > 0
    goal = world.goal
    goal_radius = float(doc.get("goal_radius", 5.0))

    n_sub = max(1, round(controller.period / sim_dt))
    sample_every = max(1, round(float(doc.get("sample_period", 0.1)) / sim_dt))
    n_steps = int(round(duration / sim_dt))
    # initial row: at rest over ground, nothing commanded yet
    rows = [(state.t, state.pose.x, state.pose.y, state.pose.psi,
             state.nu_r.u, state.nu_r.v, state.nu_r.r, 0.0, 0.5)]
    outcome = "completed"
    min_clear = math.inf
    if isinstance(controller, _PidController):
        controller._current = current

    k = 0
    while k < n_steps:
        while next_current < len(current_schedule) \
                and state.t >= current_schedule[next_current][0] - 1e-9:
            new = current_schedule[next_current][1]
            state = with_current_changed(state, current, new)
            current = new
            if isinstance(controller, _PidController):
                controller._current = current
            next_current += 1
        while next_wind < len(wind_schedule) \
                and state.t >= wind_schedule[next_wind][0] - 1e-9:
            wind = wind_schedule[next_wind][1]
            next_wind += 1
        cmd = controller.command(state, world)
        for _ in range(n_sub):
            state = step(state, cmd, current, wind, params, dt=sim_dt)
            k += 1
            if k % sample_every == 0:
                rows.append((state.t, state.pose.x, state.pose.y, state.pose.psi,
                             state.nu_r.u, state.nu_r.v, state.nu_r.r,
                             cmd.thrust[0], cmd.angle[0]))
            if has_obstacles:
                clear = min_obstacle_distance(world, (state.pose.x, state.pose.y))
                min_clear = min(min_clear, clear)
                if clear <= footprint:
                    outcome = "collision"
                    break
            if goal is not None and math.hypot(goal[0] - state.pose.x,
                                               goal[1] - state.pose.y) <= goal_radius:
                outcome = "goal"
                break
            if k >= n_steps:
                break
        if outcome != "completed":
            break

    summary = {
        "outcome": outcome,
        "sim_time": float(state.t),
        "final_x": float(state.pose.x),
        "final_y": float(state.pose.y),
        "final_psi": float(state.pose.psi),
        "min_clearance": None if math.isinf(min_clear) else float(min_clear),
    }
    if goal is not None:
        summary["distance_to_goal"] = float(
            math.hypot(goal[0] - state.pose.x, goal[1] - state.pose.y))
    return rows, summary


def write_trajectory_csv(trajectory, path):
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for row in np.atleast_2d(trajectory):
        if len(row) == 0:
            continue
        lines.append(",".join(repr(float(x)) for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_outputs(doc, base_dir, trajectory, summary):
    outputs = doc.get("outputs") or {}
    paths = {}
    if "trajectory" in outputs:
        path = Path(outputs["trajectory"])
        if not path.is_absolute():
            path = base_dir / path
        path.parent.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(trajectory, path)
        paths["trajectory"] = path
    if "summary" in outputs:
        path = Path(outputs["summary"])
        if not path.is_absolute():
            path = base_dir / path
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            yaml.safe_dump(summary, fh, sort_keys=True)
        paths["summary"] = path
    return paths
