"""Gym-style environment facade over a remote fairwaysim session.

reset/step are transparent pass-throughs of env_reset/env_step; the space
descriptors come straight from the server's banner, so the client never
hardcodes what the server simulates. Requires a lockstep-mode server
(realtime sessions refuse episode stepping).
"""

from dataclasses import dataclass

import numpy as np

from .wire import JsonLineConnection


@dataclass(frozen=True)
class BoxSpace:
    """Axis-aligned box: per-dimension closed bounds."""

    low: np.ndarray
    high: np.ndarray

    @property
    def shape(self):
        return self.low.shape

    def contains(self, value):
        v = np.asarray(value, dtype=float)
        return v.shape == self.low.shape and bool(
            np.all(v >= self.low) and np.all(v <= self.high))

    def sample(self, rng):
        return rng.uniform(self.low, self.high)


class RemoteEnv:
    """Episodic environment whose physics run in a fairwaysim server."""

    def __init__(self, host="127.0.0.1", port=7332, timeout=30.0):
        self._conn = JsonLineConnection(host, port, timeout=timeout)
        meta = self._conn.banner["env"]
        n = int(meta["obs_length"])
        self.observation_space = BoxSpace(
            low=np.full(n, -np.inf), high=np.full(n, np.inf))
        self.action_space = BoxSpace(
            low=np.asarray(meta["action_low"], dtype=float),
            high=np.asarray(meta["action_high"], dtype=float))
        self.mode = self._conn.banner["mode"]
        self.dt = float(self._conn.banner["dt"])

    def reset(self, seed=None):
        result = self._conn.call("env_reset", {"seed": seed})
        return np.asarray(result["obs"], dtype=float)

    def step(self, action):
        result = self._conn.call(
            "env_step", {"action": [float(a) for a in action]})
        obs = np.asarray(result["obs"], dtype=float)
        return obs, float(result["reward"]), bool(result["done"]), result["info"]

    def episode_stats(self):
        return self._conn.call("get_episode_stats", {})

    def close(self):
        self._conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
