"""One scripted episode in the goal-seeking environment, step log included.

The proportional helmsman steers the bow toward the goal at cruise thrust.
Useful as a sanity floor for learned policies: anything trained should at
least beat this when it works at all.
"""

from pathlib import Path

from fairwaysim.dynamics import load_model
from fairwaysim.rlenv import (
    ScriptedPolicy,
    VesselEnv,
    bundled_goal_world,
    run_policy,
    write_step_log_csv,
    write_summary_csv,
)

OUT = Path(__file__).parent / "out"


def main():
    OUT.mkdir(exist_ok=True)
    env = VesselEnv(bundled_goal_world(), load_model("harbor-ferry-5m"))
    policy = ScriptedPolicy(env)

    step_log = []
    stats = run_policy(env, policy, n_episodes=1, step_log=step_log)

    ep = stats[0]
    print(f"outcome {ep.outcome!r} after {ep.steps} steps, "
          f"return {ep.cumulative_reward:.2f}")

    write_step_log_csv(step_log, OUT / "scripted_steps.csv")
    write_summary_csv(stats, OUT / "scripted_summary.csv")
    print(f"wrote {OUT / 'scripted_steps.csv'} and {OUT / 'scripted_summary.csv'}")


if __name__ == "__main__":
    main()
