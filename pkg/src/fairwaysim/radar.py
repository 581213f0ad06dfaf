"""Marine-radar-style PPI rasterization of planar point detections.

Each detected point is painted as a binary ellipse whose semi-major axis
follows the horizontal beam width and whose semi-minor axis follows a range
resolution scalar, both growing linearly with the point's pixel-space range
from the radar. The frame is the pixelwise union of all ellipses.

Two extent modes exist. "adaptive" normalizes the raster to the point
cloud's bounding box (the formula-faithful mode; raster geometry then
depends on the scene). "fixed" maps a radar-centered square of side
2*max_range, which keeps geometry stable frame to frame and is the default.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from PIL import Image


class EmptyPointSetError(ValueError):
    """Adaptive-extent rasterization needs at least one point."""


# beta default makes the minor axis about 2 pixels at half max range with
# G = 512 in fixed mode; alpha is a typical open-array horizontal beam width.
DEFAULT_ALPHA = 0.035
DEFAULT_BETA = 0.593


@dataclass(frozen=True)
class RadarConfig:
    """Raster geometry and PSF shape parameters."""

    image_size: int = 512
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    max_range: float = 5000.0
    rotation_rpm: float = 36.0
    extent_mode: str = "fixed"

    def __post_init__(self):
        if self.image_size < 2:
            raise ValueError(f"image_size must be >= 2, got {self.image_size}")
        if not (0.0 < self.alpha < math.pi and 0.0 < self.beta < math.pi):
            raise ValueError("alpha and beta must lie in (0, pi)")
        if self.max_range <= 0.0:
            raise ValueError(f"max_range must be positive, got {self.max_range}")
        if self.rotation_rpm <= 0.0:
            raise ValueError(f"rotation_rpm must be positive, got {self.rotation_rpm}")
        if self.extent_mode not in ("adaptive", "fixed"):
            raise ValueError(f"extent_mode must be 'adaptive' or 'fixed', got {self.extent_mode}")


@dataclass(frozen=True)
class RadarFrame:
    """One binary PPI raster plus the metric mapping that produced it.

    pixels is indexed [x, y] (first axis = x pixel); exporters flip into
    image row order. extent is (x_min, x_max, y_min, y_max) in meters.
    """

    pixels: np.ndarray
    extent: tuple
    radar_pixel: tuple
    timestamp: float = 0.0


def frame_period(config):
    """Seconds per antenna rotation; one raster frame per rotation."""
    return 60.0 / config.rotation_rpm


MIN_EXTENT = 1.0  # meters; floor that guards degenerate bounding boxes


def normalize_points(points, config, radar_pos):
    """Map metric points to integer pixel coordinates.

    Adaptive mode: p' = floor((p - p_min) / delta_p * G) against the point
    cloud's own bounding box, clamped into [0, G-1]. Axes whose extent falls
    below 1 m are widened to 1 m about their midpoint so coincident points
    stay mappable. Fixed mode uses a radar-centered square of side
    2*max_range instead of the bounding box.

    Returns (pixels, p_min, delta_p).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    g = config.image_size
    if config.extent_mode == "adaptive":
        if len(pts) == 0:
            raise EmptyPointSetError("adaptive extent needs at least one point")
        p_min = pts.min(axis=0)
        p_max = pts.max(axis=0)
        delta = p_max - p_min
        for ax in range(2):
            if delta[ax] < MIN_EXTENT:
                center = (p_min[ax] + p_max[ax]) / 2.0
                p_min[ax] = center - MIN_EXTENT / 2.0
                delta[ax] = MIN_EXTENT
    else:
        p_min = np.asarray(radar_pos, dtype=float) - config.max_range
        delta = np.array([2.0 * config.max_range, 2.0 * config.max_range])
    if len(pts) == 0:
        pixels = np.empty((0, 2), dtype=int)
    else:
        pixels = np.floor((pts - p_min) / delta * g).astype(int)
        np.clip(pixels, 0, g - 1, out=pixels)
    return pixels, p_min, delta


def radar_pixel_position(config, radar_pos, p_min, delta):
    """The radar's own pixel through the same affine map, kept in-raster."""
    g = config.image_size
    px = np.floor((np.asarray(radar_pos, dtype=float) - p_min) / delta * g).astype(int)
    return tuple(np.clip(px, 0, g - 1))


def point_geometry(pixels, radar_pixel):
    """Per-point direction, range, and angle in pixel space.

    theta = atan2(d_y, d_x); a point on the radar (r = 0) gets theta = 0,
    which atan2 already yields.
    """
    d = np.asarray(pixels, dtype=float) - np.asarray(radar_pixel, dtype=float)
    r = np.hypot(d[:, 0], d[:, 1])
    theta = np.arctan2(d[:, 1], d[:, 0])
    return d, r, theta


def psf_axes(r, config, delta):
    """Ellipse semi-axes in pixels: a = r tan(alpha/2) G/dp_x, b likewise."""
    g = config.image_size
    a = r * math.tan(config.alpha / 2.0) * g / delta[0]
    b = r * math.tan(config.beta / 2.0) * g / delta[1]
    return a, b


MIN_AXIS = 0.5  # pixels; below this the ellipse degenerates to its own pixel


def rasterize(points, config, radar_pos=(0.0, 0.0), timestamp=0.0):
    """Paint every point's PSF ellipse and union them into one binary frame.

    Painting loops only over each ellipse's axis-aligned bounding box, which
    is pixel-identical to evaluating the indicator over the full raster
    (the ellipse lies inside the max(a, b) disc). A point whose axes fall
    below half a pixel (including r = 0) sets exactly its own pixel; every
    point always sets its own pixel.
    """
    g = config.image_size
    pixels, p_min, delta = normalize_points(points, config, radar_pos)
    raster = np.zeros((g, g), dtype=bool)
    rp = radar_pixel_position(config, radar_pos, p_min, delta)

    if len(pixels):
        _, rs, thetas = point_geometry(pixels, rp)
        for (px, py), r, theta in zip(pixels, rs, thetas):
            a, b = psf_axes(r, config, delta)
            raster[px, py] = True
            if a < MIN_AXIS or b < MIN_AXIS:
                continue
            m = int(math.ceil(max(a, b)))
            x_lo, x_hi = max(0, px - m), min(g - 1, px + m)
            y_lo, y_hi = max(0, py - m), min(g - 1, py + m)
            xs = np.arange(x_lo, x_hi + 1)[:, None] - px
            ys = np.arange(y_lo, y_hi + 1)[None, :] - py
            ct, st = math.cos(theta), math.sin(theta)
            xr = xs * ct + ys * st
            yr = -xs * st + ys * ct
            inside = (xr * xr) / (a * a) + (yr * yr) / (b * b) <= 1.0
            raster[x_lo : x_hi + 1, y_lo : y_hi + 1] |= inside

    extent = (
        float(p_min[0]),
        float(p_min[0] + delta[0]),
        float(p_min[1]),
        float(p_min[1] + delta[1]),
    )
    return RadarFrame(
        pixels=raster.astype(np.uint8),
        extent=extent,
        radar_pixel=(int(rp[0]), int(rp[1])),
        timestamp=timestamp,
    )


def frame_from_scan(scan, config):
    """Rasterize a ScanFrame's hit points around its sensor pose."""
    return rasterize(
        scan.points,
        config,
        radar_pos=(scan.origin.x, scan.origin.y),
        timestamp=scan.timestamp,
    )


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def _image_array(frame):
    # image rows run top-down: row 0 is the largest y
    return (frame.pixels.T[::-1, :] * 255).astype(np.uint8)


def write_pgm(frame, path):
    """Binary portable graymap, 0 background / 255 set pixels."""
    img = _image_array(frame)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def write_png(frame, path):
    Image.fromarray(_image_array(frame), mode="L").save(Path(path), format="PNG")


def write_metadata(frame, config, path):
    """Sidecar document echoing the config and metric mapping of a frame."""
    doc = {
        "image_size": config.image_size,
        "alpha": config.alpha,
        "beta": config.beta,
        "max_range": config.max_range,
        "rotation_rpm": config.rotation_rpm,
        "extent_mode": config.extent_mode,
        "extent": [float(v) for v in frame.extent],
        "radar_pixel": [int(v) for v in frame.radar_pixel],
        "timestamp": float(frame.timestamp),
        "set_pixels": int(frame.pixels.sum()),
    }
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=True))
