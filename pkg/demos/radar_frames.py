"""Radar frames of a moving vessel passing two boulders.

Casts a 360-beam scan from the vessel pose every antenna rotation and
rasterizes the hits with the beam-spread point spread function. Frames go
to demos/out as PGM plus a YAML sidecar with the metric extent.
"""

from pathlib import Path

from fairwaysim.dynamics import Pose
from fairwaysim.radar import RadarConfig, frame_from_scan, frame_period, write_metadata, write_pgm
from fairwaysim.rlenv import bundled_goal_world
from fairwaysim.world import raycast_scan

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

world = bundled_goal_world()
config = RadarConfig(image_size=256, max_range=80.0, extent_mode="fixed")
period = frame_period(config)

# fly the sensor along a straight line toward the goal; one frame per turn
for k in range(6):
    t = k * period
    pose = Pose(1.2 * t, 0.0, 0.0)
    scan = raycast_scan(world, pose, n_beams=360, max_range=config.max_range,
                        timestamp=t)
    frame = frame_from_scan(scan, config)
    stem = OUT / f"radar_{k:02d}"
    write_pgm(frame, stem.with_suffix(".pgm"))
    write_metadata(frame, config, stem.with_suffix(".yaml"))
    print(f"t={t:6.2f} s  pose x={pose.x:6.2f}  echo pixels {int(frame.pixels.sum()):5d}"
          f"  -> {stem}.pgm")
