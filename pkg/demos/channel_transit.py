"""Generate a winding channel, park some moored boats in it, drive through.

The local planner gets its obstacle view from the world geometry and a
carrot point on the centerline; the run either reaches the channel end or
reports why it stopped. An SVG preview of the world lands in demos/out.
"""

from pathlib import Path

from fairwaysim.control import ThrustSpeedTable, default_driver_config, navigate
from fairwaysim.dynamics import load_model
from fairwaysim.world import (
    PcgParams,
    generate_channel,
    moored_rectangles,
    write_preview_svg,
)

SEED = 6
OUT = Path(__file__).parent / "out"


def main():
    OUT.mkdir(exist_ok=True)
    world = generate_channel(PcgParams(n_segments=6, seed=SEED))
    world = world.with_extra_polygons(
        moored_rectangles(world.channel, count=4, seed=SEED))
    svg = OUT / f"channel_seed{SEED}.svg"
    write_preview_svg(world, svg)
    print(f"channel seed {SEED}: goal at ({world.goal[0]:.0f}, {world.goal[1]:.0f}), "
          f"{len(world.polygons)} moored boats, preview {svg}")

    params = load_model("harbor-ferry-5m")
    table = ThrustSpeedTable.calibrate(params)
    result = navigate(world, params, table, config=default_driver_config(table),
                      t_max=600.0)

    if result.reached_goal:
        print(f"reached the goal in {result.sim_time:.0f} s, "
              f"min clearance {result.min_clearance:.1f} m")
    elif result.collided:
        print(f"collided after {result.sim_time:.0f} s")
    else:
        print(f"stopped: {result.aborted}")


if __name__ == "__main__":
    main()
