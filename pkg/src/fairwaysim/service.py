"""Line-delimited JSON control service for a single vessel session.

One simulation session per server process. Clients connect over TCP,
receive a one-line banner, then exchange newline-terminated JSON
documents: requests {id, method, params} and responses {id, ok,
result | error}. The id is echoed verbatim; responses per connection
come back in request order. Errors are in-band and never drop the
connection.

Time only advances through sim_step / env_step in lockstep mode, or
through the wall-clock pacing thread in realtime mode, never both.
Episode stepping (env_reset / env_step) owns its own state: raw
sim_step calls between episode steps do not alter the open episode.
"""

import base64
import json
import logging
import socketserver
import threading

import numpy as np

from .dynamics import (
    ControlCommand,
    CurrentSpec,
    WindForce,
    absolute_velocity,
    load_model,
    state_at_rest,
    step,
    with_current_changed,
)
from .radar import RadarConfig, frame_from_scan
from .rlenv import (
    ANGLE_BOUNDS,
    THRUST_BOUNDS,
    EpisodeFinishedError,
    VesselEnv,
    bundled_goal_world,
)
from .world import PcgParams, generate_channel, moored_rectangles, raycast_scan

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
DEFAULT_PORT = 7332


class ModeViolationError(RuntimeError):
    """Stepping method called in the wrong session mode."""


def _require_number(params, key, default=None):
    value = params.get(key, default)
    if value is None:
        raise ValueError(f"missing parameter: {key}")
    if not isinstance(value, (int, float)) or isinstance(value, bool) \
            or not np.isfinite(value):
        raise ValueError(f"parameter {key} must be a finite number, got {value!r}")
    return float(value)


class SimSession:
    """One vessel simulation shared by all connections.

    Every mutation and query runs under the session lock, so concurrent
    connections see a serialized command stream.
    """

    def __init__(self, world=None, params=None, mode="lockstep", dt=0.02,
                 n_beams=36, sensor_range=100.0):
        if mode not in ("lockstep", "realtime"):
            raise ValueError(f"mode must be lockstep or realtime, got {mode!r}")
        self.world = world if world is not None else bundled_goal_world()
        self.params = params if params is not None else load_model("harbor-ferry-5m")
        self.mode = mode
        self.dt = float(dt)
        self.n_beams = int(n_beams)
        self.sensor_range = float(sensor_range)
        self.lock = threading.RLock()
        self.current = self.world.current
        self.wind = self.world.wind
        self.state = state_at_rest(self.world.spawn, self.current)
        self.controls = (0.0, 0.5)
        self.env = None
        self.episodes = []
        self._ep_reward = 0.0
        self._ep_index = -1
        self._successes = 0
        self._clock = None
        self._stop = threading.Event()

    # -- realtime pacing ----------------------------------------------------

    def start_clock(self):
        """Begin wall-clock stepping (realtime mode only; idempotent)."""
        if self.mode != "realtime" or self._clock is not None:
            return
        self._stop.clear()
        self._clock = threading.Thread(target=self._run_clock, daemon=True)
        self._clock.start()

    def stop_clock(self):
        self._stop.set()
        if self._clock is not None:
            self._clock.join(timeout=2.0)
            self._clock = None

    def _run_clock(self):
        while not self._stop.wait(self.dt):
            with self.lock:
                self._advance(1)

    # -- shared helpers ------------------------------------------------------

    def _advance(self, n):
        n_thr = len(self.params.thrusters)
        cmd = ControlCommand((self.controls[0],) * n_thr,
                             (self.controls[1],) * n_thr)
        for _ in range(n):
            self.state = step(self.state, cmd, self.current, self.wind,
                              self.params, dt=self.dt)

    def _state_doc(self):
        nu = absolute_velocity(self.state.nu_r, self.state.pose.psi, self.current)
        return {
            "t": self.state.t,
            "pose": {"x": self.state.pose.x, "y": self.state.pose.y,
                     "psi": self.state.pose.psi},
            "nu_r": [self.state.nu_r.u, self.state.nu_r.v, self.state.nu_r.r],
            "nu": [nu.u, nu.v, nu.r],
            "controls": list(self.controls),
        }

    def _scan(self, params):
        n_beams = int(params.get("n_beams", self.n_beams))
        max_range = _require_number(params, "max_range", self.sensor_range)
        return raycast_scan(self.world, self.state.pose, n_beams=n_beams,
                            max_range=max_range, timestamp=self.state.t)

    # -- method handlers -----------------------------------------------------

    def get_state(self, params):
        return self._state_doc()

    def get_scan(self, params):
        scan = self._scan(params)
        return {
            "timestamp": scan.timestamp,
            "origin": {"x": scan.origin.x, "y": scan.origin.y,
                       "psi": scan.origin.psi},
            "max_range": scan.max_range,
            "ranges": scan.ranges.tolist(),
            "points": scan.points.tolist(),
        }

    def get_radar(self, params):
        scan = self._scan(dict(params, n_beams=params.get("n_beams", 360)))
        config = RadarConfig(
            image_size=int(params.get("image_size", 256)),
            max_range=_require_number(params, "max_range", self.sensor_range),
            extent_mode="fixed",
        )
        frame = frame_from_scan(scan, config)
        return {
            "timestamp": frame.timestamp,
            "image_size": config.image_size,
            "extent": list(frame.extent),
            "radar_pixel": list(frame.radar_pixel),
            "axes": "xy",
            "pixels_b64": base64.b64encode(
                np.ascontiguousarray(frame.pixels, dtype=np.uint8).tobytes()
            ).decode("ascii"),
        }

    def set_vessel_controls(self, params):
        thrust = _require_number(params, "thrust")
        angle = _require_number(params, "angle")
        if not 0.0 <= thrust <= 1.0 or not 0.0 <= angle <= 1.0:
            raise ValueError(
                f"thrust and angle are normalized to [0, 1], got {thrust}, {angle}")
        self.controls = (thrust, angle)
        return {"thrust": thrust, "angle": angle}

    def set_current(self, params):
        new = CurrentSpec(_require_number(params, "speed"),
                          _require_number(params, "heading"))
        # the vessel keeps its ground velocity when the ambient flow changes
        self.state = with_current_changed(self.state, self.current, new)
        self.current = new
        return {"speed": new.speed, "heading": new.heading}

    def set_wind(self, params):
        self.wind = WindForce(_require_number(params, "tau_x", 0.0),
                              _require_number(params, "tau_y", 0.0),
                              _require_number(params, "tau_n", 0.0))
        return {"tau_x": self.wind.tau_x, "tau_y": self.wind.tau_y,
                "tau_n": self.wind.tau_n}

    def sim_step(self, params):
        if self.mode != "lockstep":
            raise ModeViolationError("sim_step is available in lockstep mode only")
        n = params.get("n", 1)
        if not isinstance(n, int) or isinstance(n, bool) or n < 0:
            raise ValueError(f"n must be a non-negative integer, got {n!r}")
        self._advance(n)
        return {"steps_run": n, "t": self.state.t}

    def env_reset(self, params):
        if self.mode != "lockstep":
            raise ModeViolationError("env_reset is available in lockstep mode only")
        seed = params.get("seed")
        if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
            raise ValueError(f"seed must be an integer, got {seed!r}")
        self.env = VesselEnv(self.world, self.params,
                             n_beams=self.n_beams,
                             sensor_range=self.sensor_range,
                             sim_dt=self.dt)
        obs = self.env.reset(seed=seed)
        self.state = self.env.state
        self._ep_reward = 0.0
        self._ep_index += 1
        return {"obs": obs.tolist(), "episode": self._ep_index}

    def env_step(self, params):
        if self.mode != "lockstep":
            raise ModeViolationError("env_step is available in lockstep mode only")
        if self.env is None:
            raise ValueError("env_step before env_reset")
        action = params.get("action")
        if not isinstance(action, (list, tuple)) or len(action) != 2:
            raise ValueError(f"action must be [thrust, angle], got {action!r}")
        obs, reward, done, info = self.env.step(np.asarray(action, dtype=float))
        self.state = self.env.state
        self._ep_reward += float(reward)
        if done:
            outcome = info["outcome"]
            if outcome == "goal":
                self._successes += 1
            n_done = len(self.episodes) + 1
            self.episodes.append({
                "episode_index": self._ep_index,
                "steps": info["steps"],
                "outcome": outcome,
                "cumulative_reward": self._ep_reward,
                # over completed episodes; abandoned resets are not counted
                "success_rate_running": self._successes / n_done,
            })
        return {"obs": obs.tolist(), "reward": float(reward), "done": bool(done),
                "info": info}

    def pcg_generate(self, params):
        doc = dict(params)
        moored = doc.pop("moored", None)
        try:
            pcg = PcgParams(**{k: (tuple(v) if isinstance(v, list) else v)
                               for k, v in doc.items()})
        except TypeError as err:
            raise ValueError(f"pcg: {err}")
        world = generate_channel(pcg)
        if moored:
            boats = moored_rectangles(world.channel,
                                      count=int(moored.get("count", 3)),
                                      seed=int(moored.get("seed", pcg.seed)))
            world = world.with_extra_polygons(boats)
        self.world = world
        self.current = world.current
        self.wind = world.wind
        self.state = state_at_rest(world.spawn, self.current)
        self.env = None
        return {
            "n_segments": pcg.n_segments,
            "seed": pcg.seed,
            "goal": world.goal.tolist(),
            "spawn": {"x": world.spawn.x, "y": world.spawn.y,
                      "psi": world.spawn.psi},
            "n_polygons": len(world.polygons),
            "n_polylines": len(world.polylines),
        }

    def get_episode_stats(self, params):
        return {"count": len(self.episodes), "episodes": list(self.episodes)}


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


_METHODS = {
    "get_state": SimSession.get_state,
    "get_scan": SimSession.get_scan,
    "get_radar": SimSession.get_radar,
    "set_vessel_controls": SimSession.set_vessel_controls,
    "set_current": SimSession.set_current,
    "set_wind": SimSession.set_wind,
    "sim_step": SimSession.sim_step,
    "env_reset": SimSession.env_reset,
    "env_step": SimSession.env_step,
    "pcg_generate": SimSession.pcg_generate,
    "get_episode_stats": SimSession.get_episode_stats,
}


def _error(rid, code, message):
    return {"id": rid, "ok": False, "error": {"code": code, "message": message}}


def banner(session):
    return {
        "server": "fairwaysim",
        "protocol": PROTOCOL_VERSION,
        "mode": session.mode,
        "dt": session.dt,
        "methods": sorted(_METHODS),
        # space descriptors so remote clients need no local env knowledge
        "env": {
            "n_beams": session.n_beams,
            "obs_length": 10 + session.n_beams,
            "action_low": [THRUST_BOUNDS[0], ANGLE_BOUNDS[0]],
            "action_high": [THRUST_BOUNDS[1], ANGLE_BOUNDS[1]],
        },
    }


def dispatch_line(session, line):
    """One request line in, one response document out. Never raises."""
    try:
        req = json.loads(line)
    except json.JSONDecodeError as err:
        return _error(None, "parse-error", str(err))
    if not isinstance(req, dict):
        return _error(None, "bad-request", "request must be a JSON object")
    rid = req.get("id")
    method = req.get("method")
    if not isinstance(method, str):
        return _error(rid, "bad-request", "missing method name")
    params = req.get("params", {})
    if params is None:
        params = {}
    if not isinstance(params, dict):
        return _error(rid, "bad-request", "params must be an object")
    handler = _METHODS.get(method)
    if handler is None:
        return _error(rid, "unknown-method", f"unknown method: {method}")
    try:
        with session.lock:
            result = _json_safe(handler(session, params))
    except ModeViolationError as err:
        return _error(rid, "mode-violation", str(err))
    except EpisodeFinishedError as err:
        return _error(rid, "episode-finished", str(err))
    except (ValueError, KeyError, TypeError) as err:
        return _error(rid, "bad-params", str(err))
    except Exception as err:  # keep the session alive no matter what
        logger.exception("unhandled error in method %s", method)
        return _error(rid, "internal", f"{type(err).__name__}: {err}")
    return {"id": rid, "ok": True, "result": result}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        session = self.server.rpc_session
        try:
            self._send(banner(session))
            for raw in self.rfile:
                line = raw.decode("utf-8", errors="replace").strip()
                if not line:
                    continue
                self._send(dispatch_line(session, line))
        except (BrokenPipeError, ConnectionResetError):
            pass  # client went away; the session persists

    def _send(self, doc):
        self.wfile.write(json.dumps(doc).encode("utf-8") + b"\n")


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class VesselService:
    """TCP server wrapper; use port 0 to bind an ephemeral port."""

    def __init__(self, session, host="127.0.0.1", port=DEFAULT_PORT):
        self.session = session
        self._server = _Server((host, port), _Handler)
        self._server.rpc_session = session
        self._thread = None

    @property
    def address(self):
        return self._server.server_address

    def start(self):
        """Serve on a background thread (for tests and embedding)."""
        self.session.start_clock()
        self._thread = threading.Thread(
            target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def run(self):
        """Serve on the caller's thread until KeyboardInterrupt."""
        self.session.start_clock()
        try:
            self._server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            self._server.server_close()
            self.session.stop_clock()

    def close(self):
        self._server.shutdown()
        self._server.server_close()
        self.session.stop_clock()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None


def serve(host="127.0.0.1", port=DEFAULT_PORT, session=None, **session_kwargs):
    """Bind and run until interrupted; returns only after shutdown."""
    if session is None:
        session = SimSession(**session_kwargs)
    service = VesselService(session, host=host, port=port)
    logger.info("listening on %s:%d (%s mode)", *service.address, session.mode)
    service.run()
