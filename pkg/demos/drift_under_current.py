"""Straight-ahead thrust under three ambient currents.

Runs the bundled drift scenarios and prints how far the hull gets pushed
sideways, how much it rotates, and what the current costs in final speed.
Writes one trajectory CSV per run next to this script.
"""

import math
from pathlib import Path

import numpy as np

from fairwaysim.scenario import load_scenario, run_scenario, write_trajectory_csv

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

for name in ("drift-current-none", "drift-current-low", "drift-current-moderate"):
    doc = load_scenario(name)
    result = run_scenario(doc)
    tr = result.trajectory

    cur = doc.get("current", {})
    speed = float(cur.get("speed", 0.0))
    heading = math.radians(float(cur.get("heading_deg", 0.0)))

    # ground velocity at the last sample: rotate nu_r to earth, add current
    _, _, _, psi, u, v = tr[-1, :6]
    vx = math.cos(psi) * u - math.sin(psi) * v + speed * math.cos(heading)
    vy = math.sin(psi) * u + math.cos(psi) * v + speed * math.sin(heading)

    print(f"{name}: current {speed} m/s")
    print(f"  max |y| {np.abs(tr[:, 2]).max():8.3f} m")
    print(f"  final heading {tr[-1, 3]:+.4f} rad")
    print(f"  final ground speed {math.hypot(vx, vy):.4f} m/s")

    csv_path = OUT / f"{name}.csv"
    write_trajectory_csv(tr, csv_path)
    print(f"  wrote {csv_path}")
