"""Scene geometry: procedural channels, ray-cast scans, collision queries.

The world is planar. Obstacles are closed polygons and open polylines whose
segments are what every query (ray cast, collision, distance) works against.
Worlds are immutable after construction; all queries are pure reads.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .angles import wrap_angle
from .dynamics import CurrentSpec, Pose, WindForce, ZERO_WIND


class WorldFormatError(ValueError):
    """World/scenario geometry document failed validation."""


class PcgParamsError(ValueError):
    """Channel generator parameters out of range."""


# ---------------------------------------------------------------------------
# deterministic PRNG
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 pseudo-random generator.

    The 64-bit state advances by the golden-gamma constant and is mixed by
    two xor-shift-multiply rounds (Steele, Lea & Flood's published algorithm).
    Chosen because it is tiny, fast, and trivially portable: any language
    reproduces the stream from the same seed with pure integer ops.

    uniform() maps the top 53 bits onto [0, 1): (x >> 11) * 2**-53.
    """

    def __init__(self, seed):
        self._state = int(seed) & _MASK64

    def next_u64(self):
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def uniform(self, lo=0.0, hi=1.0):
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0**-53)

    def randint(self, n):
        """Integer in [0, n) by rejection-free scaling (n small here)."""
        return int(self.uniform(0.0, float(n)))


# ---------------------------------------------------------------------------
# world container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelLayout:
    """Construction record of a generated channel, kept for placement helpers."""

    centerline: np.ndarray        # (n+1, 2) joint positions
    halfwidths: np.ndarray        # (n+1,) vertex half-widths, miter-uncorrected
    headings: np.ndarray          # (n,) per-segment headings


@dataclass(frozen=True)
class ObstacleWorld:
    """Immutable planar scene: obstacle geometry plus spawn/goal/ambient."""

    polygons: tuple = ()
    polylines: tuple = ()
    goal: np.ndarray = None
    spawn: Pose = Pose(0.0, 0.0, 0.0)
    current: CurrentSpec = CurrentSpec()
    wind: WindForce = ZERO_WIND
    channel: ChannelLayout = None
    _segments: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        polygons = tuple(_check_chain(p, "polygon", closed=True) for p in self.polygons)
        polylines = tuple(_check_chain(p, "polyline", closed=False) for p in self.polylines)
        object.__setattr__(self, "polygons", polygons)
        object.__setattr__(self, "polylines", polylines)
        if self.goal is not None:
            g = np.asarray(self.goal, dtype=float)
            if g.shape != (2,) or not np.all(np.isfinite(g)):
                raise WorldFormatError(f"goal must be a finite 2-vector, got {self.goal}")
            object.__setattr__(self, "goal", g)
        object.__setattr__(self, "_segments", _collect_segments(polygons, polylines))

    def segments(self):
        """All obstacle edges as an (S, 4) array of (x1, y1, x2, y2)."""
        return self._segments

    def with_extra_polygons(self, polygons):
        """New world sharing everything but with polygons appended."""
        return ObstacleWorld(
            polygons=tuple(self.polygons) + tuple(polygons),
            polylines=self.polylines,
            goal=self.goal,
            spawn=self.spawn,
            current=self.current,
            wind=self.wind,
            channel=self.channel,
        )


def _check_chain(vertices, label, closed):
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 2:
        raise WorldFormatError(f"{label} needs shape (n>=2, 2), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise WorldFormatError(f"{label} contains non-finite vertices")
    if closed and v.shape[0] < 3:
        raise WorldFormatError(f"{label} needs at least 3 vertices")
    if closed and _self_intersects(v):
        raise WorldFormatError(f"{label} is self-intersecting")
    return v


def _self_intersects(poly):
    n = len(poly)
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            # adjacent edges share a vertex; skip them (and the wrap pair)
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return True
    return False


def _segments_cross(p1, p2, q1, q2):
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    return False


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _collect_segments(polygons, polylines):
    rows = []
    for poly in polygons:
        closed = np.vstack([poly, poly[:1]])
        rows.append(np.hstack([closed[:-1], closed[1:]]))
    for line in polylines:
        rows.append(np.hstack([line[:-1], line[1:]]))
    if not rows:
        return np.empty((0, 4))
    return np.vstack(rows)


# ---------------------------------------------------------------------------
# procedural channel generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PcgParams:
    """Channel generator knobs: segment count, seed, and draw ranges."""

    n_segments: int
    seed: int
    width_range: tuple = (40.0, 60.0)
    angle_range: tuple = (-0.5, 0.5)
    segment_length_range: tuple = (40.0, 80.0)

    def __post_init__(self):
        if self.n_segments < 1:
            raise PcgParamsError(f"n_segments must be >= 1, got {self.n_segments}")
        w0, w1 = self.width_range
        if not (0.0 < w0 <= w1):
            raise PcgParamsError(f"width_range must satisfy 0 < w_min <= w_max, got {self.width_range}")
        a0, a1 = self.angle_range
        if a0 > a1 or max(abs(a0), abs(a1)) >= math.pi / 2:
            raise PcgParamsError(
                f"angle_range must be well-ordered with |angle| < pi/2, got {self.angle_range}"
            )
        l0, l1 = self.segment_length_range
        if not (0.0 < l0 <= l1):
            raise PcgParamsError(
                f"segment_length_range must satisfy 0 < min <= max, got {self.segment_length_range}"
            )


def generate_channel(params):
    """Deterministic channel world from a seed: a chain of trapezoid sections.

    Per segment the generator draws, in this order: width, turn angle, length.
    The first segment always runs along +x (its drawn turn angle is consumed
    but not applied; turns act between segments). Segment i's exit width is
    its drawn width, its entry width is the previous segment's. Bank joints
    are miter-compensated so the centerline keeps roughly half a width of
    clearance through turns. Banks become two open polylines; the channel
    ends stay open.
    """
    rng = SplitMix64(params.seed)
    widths, turns, lengths = [], [], []
    for _ in range(params.n_segments):
        widths.append(rng.uniform(*params.width_range))
        turns.append(rng.uniform(*params.angle_range))
        lengths.append(rng.uniform(*params.segment_length_range))

    headings = np.empty(params.n_segments)
    h = 0.0
    for i in range(params.n_segments):
        if i > 0:
            h = float(wrap_angle(h + turns[i]))
        headings[i] = h

    n = params.n_segments
    center = np.zeros((n + 1, 2))
    for i in range(n):
        d = np.array([math.cos(headings[i]), math.sin(headings[i])])
        center[i + 1] = center[i] + lengths[i] * d

    halfw = np.empty(n + 1)
    halfw[0] = widths[0] / 2.0
    for i in range(n):
        halfw[i + 1] = widths[i] / 2.0

    left = np.empty((n + 1, 2))
    right = np.empty((n + 1, 2))
    for j in range(n + 1):
        if j == 0:
            mean_h, delta = headings[0], 0.0
        elif j == n:
            mean_h, delta = headings[n - 1], 0.0
        else:
            delta = float(wrap_angle(headings[j] - headings[j - 1]))
            mean_h = headings[j - 1] + delta / 2.0
        # miter join: push the joint out so both adjacent sections keep
        # their clearance through the turn
        offset = halfw[j] / math.cos(delta / 2.0)
        normal = np.array([-math.sin(mean_h), math.cos(mean_h)])
        left[j] = center[j] + offset * normal
        right[j] = center[j] - offset * normal

    layout = ChannelLayout(centerline=center, halfwidths=halfw, headings=headings)
    return ObstacleWorld(
        polylines=(left, right),
        goal=center[-1].copy(),
        spawn=Pose(center[0, 0], center[0, 1], float(headings[0])),
        channel=layout,
    )


def halfwidth_at(layout, seg_index, frac):
    """Channel half-width at fractional position frac along segment seg_index."""
    return float(
        layout.halfwidths[seg_index] * (1.0 - frac) + layout.halfwidths[seg_index + 1] * frac
    )


def moored_rectangles(
    layout, count, seed, boat_length=8.0, boat_width=2.0, bank_margin=2.0
):
    """Deterministic moored-vessel rectangles hugging the channel banks.

    Each rectangle sits parallel to its segment, offset from the centerline
    toward a drawn side so that bank_margin of water stays between hull and
    bank. Scenario files invoke this with a seed to furnish transit runs.
    Rectangles are only placed where they leave at least half the local
    channel width clear for passage.
    """
    rng = SplitMix64(seed)
    n = len(layout.headings)
    rects = []
    attempts = 0
    while len(rects) < count and attempts < count * 20:
        attempts += 1
        seg = rng.randint(n)
        side = 1.0 if rng.uniform() < 0.5 else -1.0
        frac = rng.uniform(0.3, 0.7)
        hw = halfwidth_at(layout, seg, frac)
        offset = hw - bank_margin - boat_width / 2.0
        # must leave the centerline side of the channel passable
        if offset - boat_width / 2.0 < hw * 0.45:
            continue
        h = layout.headings[seg]
        d = np.array([math.cos(h), math.sin(h)])
        normal = np.array([-math.sin(h), math.cos(h)])
        p0 = layout.centerline[seg]
        p1 = layout.centerline[seg + 1]
        anchor = p0 + frac * (p1 - p0) + side * offset * normal
        along = d * (boat_length / 2.0)
        across = normal * (boat_width / 2.0)
        rects.append(
            np.array(
                [
                    anchor - along - across,
                    anchor + along - across,
                    anchor + along + across,
                    anchor - along + across,
                ]
            )
        )
    return rects


# ---------------------------------------------------------------------------
# ray casting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScanFrame:
    """One planar 360-degree range scan."""

    origin: Pose
    ranges: np.ndarray          # (n_beams,), max_range where no hit
    points: np.ndarray          # (n_hits, 2) earth-frame hit coordinates
    hit_mask: np.ndarray        # (n_beams,) bool, True where ranges < max_range
    max_range: float
    timestamp: float = 0.0


def beam_azimuths(pose, n_beams):
    """Earth-frame beam directions: uniform over [0, 2pi) in the sensor frame."""
    return pose.psi + 2.0 * np.pi * np.arange(n_beams) / n_beams


def raycast_scan(world, pose, n_beams=360, max_range=200.0, timestamp=0.0):
    """Cast n_beams rays and return nearest obstacle-segment intersections.

    Ranges clamp to max_range; a beam records a hit point iff its range is
    strictly below max_range. Grazing (parallel) passes never count as hits.
    """
    if n_beams < 1:
        raise ValueError(f"n_beams must be >= 1, got {n_beams}")
    if max_range <= 0.0:
        raise ValueError(f"max_range must be positive, got {max_range}")
    az = beam_azimuths(pose, n_beams)
    dirs = np.stack([np.cos(az), np.sin(az)], axis=1)            # (B, 2)
    segs = world.segments()
    origin = np.array([pose.x, pose.y])
    if len(segs) == 0:
        ranges = np.full(n_beams, float(max_range))
        return ScanFrame(
            origin=pose,
            ranges=ranges,
            points=np.empty((0, 2)),
            hit_mask=np.zeros(n_beams, dtype=bool),
            max_range=float(max_range),
            timestamp=timestamp,
        )

    p = segs[:, 0:2]                                             # (S, 2)
    e = segs[:, 2:4] - segs[:, 0:2]                              # (S, 2)
    w = p - origin                                               # (S, 2)

    # ray o + t d against segment p + s e; cross with e and d in turn:
    #   t (d x e) = w x e,  s (d x e) = w x d
    denom = dirs[:, 0:1] * e[:, 1] - dirs[:, 1:2] * e[:, 0]      # (B, S)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]) / denom      # (B, S)
        s = (w[:, 0] * dirs[:, 1:2] - w[:, 1] * dirs[:, 0:1]) / denom

    valid = np.isfinite(t) & (t > 1e-12) & (s >= 0.0) & (s <= 1.0)
    t = np.where(valid, t, np.inf)
    best = t.min(axis=1)
    ranges = np.minimum(best, max_range)
    hit = best < max_range
    points = origin + ranges[hit, None] * dirs[hit]
    return ScanFrame(
        origin=pose,
        ranges=ranges,
        points=points,
        hit_mask=hit,
        max_range=float(max_range),
        timestamp=timestamp,
    )


def subsample(scan, keep_fraction, seed):
    """Random sparsification: keep each hit independently with keep_fraction.

    Dropped beams report max_range like misses. Deterministic per seed; the
    Bernoulli draws consume the PRNG in beam order.
    """
    if not 0.0 <= keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must be in [0, 1], got {keep_fraction}")
    rng = SplitMix64(seed)
    ranges = scan.ranges.copy()
    hit = scan.hit_mask.copy()
    keep_pts = []
    pt_idx = 0
    for i in np.nonzero(scan.hit_mask)[0]:
        if rng.uniform() < keep_fraction:
            keep_pts.append(scan.points[pt_idx])
        else:
            ranges[i] = scan.max_range
            hit[i] = False
        pt_idx += 1
    points = np.array(keep_pts) if keep_pts else np.empty((0, 2))
    return ScanFrame(
        origin=scan.origin,
        ranges=ranges,
        points=points,
        hit_mask=hit,
        max_range=scan.max_range,
        timestamp=scan.timestamp,
    )


# ---------------------------------------------------------------------------
# distance / collision queries
# ---------------------------------------------------------------------------


def segment_distances(segs, point):
    """Distance from one point to each segment row of an (S, 4) array."""
    if len(segs) == 0:
        return np.empty(0)
    p = np.asarray(point, dtype=float)
    a = segs[:, 0:2]
    b = segs[:, 2:4]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.einsum("ij,ij->i", p - a, ab) / denom
    t = np.where(denom == 0.0, 0.0, np.clip(t, 0.0, 1.0))
    closest = a + t[:, None] * ab
    return np.hypot(*(p - closest).T)


def min_obstacle_distance(world, point):
    """Smallest distance from a point to any obstacle segment (inf if none)."""
    d = segment_distances(world.segments(), point)
    return float(d.min()) if len(d) else math.inf


def collision_check(world, pose, footprint_radius):
    """True iff the vessel footprint disc touches any obstacle segment."""
    if footprint_radius <= 0.0:
        raise ValueError(f"footprint_radius must be positive, got {footprint_radius}")
    return min_obstacle_distance(world, (pose.x, pose.y)) <= footprint_radius


# ---------------------------------------------------------------------------
# world documents and previews
# ---------------------------------------------------------------------------


def world_to_dict(world):
    d = {
        "spawn": {"x": world.spawn.x, "y": world.spawn.y, "psi": world.spawn.psi},
        "current": {"speed": float(world.current.speed), "heading": world.current.heading},
        "wind": [float(world.wind.tau_x), float(world.wind.tau_y), float(world.wind.tau_n)],
        "polygons": [np.asarray(p, dtype=float).tolist() for p in world.polygons],
        "polylines": [np.asarray(p, dtype=float).tolist() for p in world.polylines],
    }
    if world.goal is not None:
        d["goal"] = [float(world.goal[0]), float(world.goal[1])]
    return d


def save_world(world, path):
    Path(path).write_text(yaml.safe_dump(world_to_dict(world), sort_keys=True))


def world_from_dict(doc):
    if not isinstance(doc, dict):
        raise WorldFormatError("world document must be a mapping")
    spawn = doc.get("spawn", {})
    cur = doc.get("current", {})
    wind = doc.get("wind", [0.0, 0.0, 0.0])
    try:
        return ObstacleWorld(
            polygons=tuple(np.asarray(p, dtype=float) for p in doc.get("polygons", [])),
            polylines=tuple(np.asarray(p, dtype=float) for p in doc.get("polylines", [])),
            goal=doc.get("goal"),
            spawn=Pose(
                float(spawn.get("x", 0.0)), float(spawn.get("y", 0.0)), float(spawn.get("psi", 0.0))
            ),
            current=CurrentSpec(float(cur.get("speed", 0.0)), float(cur.get("heading", 0.0))),
            wind=WindForce(*(float(v) for v in wind)),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, WorldFormatError):
            raise
        raise WorldFormatError(f"bad world document: {e}")


def load_world(path):
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as e:
        raise WorldFormatError(f"{path}: YAML parse failure: {e}")
    return world_from_dict(doc)


def write_preview_csv(world, path):
    """Bank/obstacle vertices as long-form CSV for external plotting."""
    lines = ["feature,index,x,y"]
    for k, poly in enumerate(world.polygons):
        for i, (x, y) in enumerate(poly):
            lines.append(f"polygon_{k},{i},{x!r},{y!r}")
    for k, line in enumerate(world.polylines):
        for i, (x, y) in enumerate(line):
            lines.append(f"polyline_{k},{i},{x!r},{y!r}")
    if world.channel is not None:
        for i, (x, y) in enumerate(world.channel.centerline):
            lines.append(f"centerline,{i},{x!r},{y!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_preview_svg(world, path, size=800):
    """Minimal standalone SVG of the world for visual inspection."""
    pts = [np.asarray(p) for p in world.polygons + world.polylines]
    if world.goal is not None:
        pts.append(world.goal[None, :])
    pts.append(np.array([[world.spawn.x, world.spawn.y]]))
    allp = np.vstack(pts) if pts else np.zeros((1, 2))
    lo = allp.min(axis=0) - 10.0
    hi = allp.max(axis=0) + 10.0
    span = float(max(hi[0] - lo[0], hi[1] - lo[1]))
    scale = size / span

    def sx(x):
        return (x - lo[0]) * scale

    def sy(y):
        # +y up in world coordinates, down in SVG
        return size - (y - lo[1]) * scale

    def path_of(chain, close):
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in chain)
        tag = "polygon" if close else "polyline"
        fill = "#c8b89a" if close else "none"
        return f'<{tag} points="{coords}" fill="{fill}" stroke="#555" stroke-width="1.5"/>'

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="#eef6fb"/>',
    ]
    parts += [path_of(p, True) for p in world.polygons]
    parts += [path_of(p, False) for p in world.polylines]
    parts.append(
        f'<circle cx="{sx(world.spawn.x):.2f}" cy="{sy(world.spawn.y):.2f}" r="5" fill="#2a7"/>'
    )
    if world.goal is not None:
        parts.append(
            f'<circle cx="{sx(world.goal[0]):.2f}" cy="{sy(world.goal[1]):.2f}" r="5" fill="#d43"/>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
