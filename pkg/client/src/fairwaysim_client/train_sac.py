"""Train soft actor-critic against a remote fairwaysim server.

The environment is the server's goal-seeking task; the action is the
two-float (thrust, steering) box. stable-baselines3 and gymnasium are
required for the SAC path but deliberately not dependencies of this
package; install them with:

    pip install stable-baselines3 gymnasium

`--baseline random` needs neither library and provides the comparison
floor. Either mode appends one CSV row per finished episode and flushes
it immediately, so an interrupted run keeps everything it completed:

    episode,steps,outcome,cumulative_reward,success_rate_running

Hyperparameters load from sac_config.yaml next to this file (library
defaults); point --config elsewhere to override.
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .env import RemoteEnv
from .wire import ClientError

CSV_HEADER = "episode,steps,outcome,cumulative_reward,success_rate_running"
EXIT_CONNECT = 1
EXIT_MISSING_DEP = 4
DEFAULT_CONFIG = Path(__file__).parent / "sac_config.yaml"


class EpisodeLog:
    """Append-only per-episode CSV, flushed row by row."""

    def __init__(self, path):
        self._fh = open(path, "w")
        self._fh.write(CSV_HEADER + "\n")
        self._fh.flush()
        self.episodes = 0
        self._successes = 0

    def row(self, steps, outcome, cumulative_reward):
        if outcome == "goal":
            self._successes += 1
        self.episodes += 1
        rate = self._successes / self.episodes
        self._fh.write(f"{self.episodes - 1},{steps},{outcome},"
                       f"{cumulative_reward!r},{rate!r}\n")
        self._fh.flush()
        return rate

    def close(self):
        self._fh.close()


def run_random_baseline(env, episodes, log, seed):
    rng = np.random.default_rng(seed)
    for ep in range(episodes):
        obs = env.reset(seed=seed + ep)
        total = 0.0
        steps = 0
        done = False
        while not done:
            obs, reward, done, info = env.step(env.action_space.sample(rng))
            total += reward
            steps += 1
        log.row(steps, info["outcome"], total)
    return 0


def run_sac(env, episodes, log, seed, config_path):
    try:
        import gymnasium
        from stable_baselines3 import SAC
        from stable_baselines3.common.callbacks import BaseCallback
    except ImportError as err:
        print(f"error: the SAC path needs stable-baselines3 and gymnasium "
              f"({err}); pip install stable-baselines3 gymnasium, or use "
              f"--baseline random", file=sys.stderr)
        return EXIT_MISSING_DEP

    hyper = yaml.safe_load(Path(config_path).read_text()) or {}

    class GymAdapter(gymnasium.Env):
        """5-tuple wrapper logging a CSV row at each episode end."""

        def __init__(self):
            n = env.observation_space.shape[0]
            self.observation_space = gymnasium.spaces.Box(
                low=-np.inf, high=np.inf, shape=(n,), dtype=np.float64)
            self.action_space = gymnasium.spaces.Box(
                low=env.action_space.low, high=env.action_space.high,
                dtype=np.float64)
            self._episode = 0
            self._steps = 0
            self._total = 0.0

        def reset(self, *, seed=None, options=None):
            obs = env.reset(seed=self._episode if seed is None else seed)
            self._episode += 1
            self._steps = 0
            self._total = 0.0
            return obs, {}

        def step(self, action):
            obs, reward, done, info = env.step(action)
            self._steps += 1
            self._total += reward
            if done:
                log.row(self._steps, info["outcome"], self._total)
            truncated = done and info["outcome"] == "timeout"
            return obs, reward, done and not truncated, truncated, info

    class StopAfterEpisodes(BaseCallback):
        def _on_step(self):
            return log.episodes < episodes

    model = SAC("MlpPolicy", GymAdapter(), seed=seed, verbose=0, **hyper)
    model.learn(total_timesteps=10**9, callback=StopAfterEpisodes())
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="SAC training (or a random baseline) on a remote session",
        epilog="exit codes: 0 ok, 1 connection failure, "
               "4 missing RL dependency, 130 interrupted")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int,
                        default=int(os.environ.get("FAIRWAYSIM_PORT", 7332)))
    parser.add_argument("--episodes", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="training.csv",
                        help="per-episode CSV (default %(default)s)")
    parser.add_argument("--baseline", choices=("none", "random"), default="none",
                        help="'random' rolls uniform actions instead of SAC")
    parser.add_argument("--config", default=str(DEFAULT_CONFIG),
                        help="SAC hyperparameter YAML")
    args = parser.parse_args(argv)

    try:
        env = RemoteEnv(args.host, args.port)
    except ClientError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONNECT
    log = EpisodeLog(args.out)
    try:
        if args.baseline == "random":
            code = run_random_baseline(env, args.episodes, log, args.seed)
        else:
            code = run_sac(env, args.episodes, log, args.seed, args.config)
    except KeyboardInterrupt:
        print(f"interrupted after {log.episodes} episode(s); "
              f"partial results kept in {args.out}", file=sys.stderr)
        return 130
    finally:
        log.close()
        env.close()
    if code == 0:
        print(f"{log.episodes} episode(s) written to {args.out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
