"""Unified binary marker-image representation.

Heterogeneous raw signals (grayscale marker renders, taxel arrays) are
converted to strictly binary 640x480 marker images, right-finger frames are
horizontally mirrored into the left-finger coordinate convention, and
storage-size observations are resized to the model input size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .sensors import SensorProfile, reference_render

STORAGE_SIZE = (640, 480)   # (W, H)
MODEL_SIZE = 224            # default square model input edge
FOREGROUND = 255
BACKGROUND = 0


@dataclass
class MarkerImage:
    """Strictly binary single-channel marker image."""

    pixels: np.ndarray  # (H, W) uint8, values in {0, 255}
    sensor_id: str = ""

    def __post_init__(self) -> None:
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def is_binary(self) -> bool:
        return bool(np.isin(self.pixels, (BACKGROUND, FOREGROUND)).all())


@dataclass
class TactileObservation:
    """Reference/contact marker-image pair, the model input."""

    ref: MarkerImage   # undeformed, t = 0
    cur: MarkerImage   # contacted, t = T
    mirrored: bool = False  # True when the source was the right finger

    def __post_init__(self) -> None:
        if self.ref.pixels.shape != self.cur.pixels.shape:
            raise ValueError("reference and contact frames must share dimensions")
        if self.ref.sensor_id != self.cur.sensor_id:
            raise ValueError("reference and contact frames must share sensor_id")

    @property
    def sensor_id(self) -> str:
        return self.ref.sensor_id

    def stacked(self) -> np.ndarray:
        """(2, 1, H, W) float32 tensor view with values in {0, 1}."""
        frames = np.stack([self.ref.pixels, self.cur.pixels]).astype(np.float32) / 255.0
        return frames[:, None, :, :]


def segment_markers(raw: np.ndarray, sensor_id: str = "") -> MarkerImage:
    """Threshold a grayscale frame into a binary marker image.

    Markers are the minority intensity class at the mid-gray threshold, so
    dark-disc renders and already-binary white-on-black images both map to
    foreground 255. A uniform frame segments to all background.
    """
    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise ValueError(f"expected single-channel image, got shape {raw.shape}")
    if raw.size == 0:
        return MarkerImage(np.zeros((0, 0), dtype=np.uint8), sensor_id)
    dark = raw < 128
    n_dark = int(dark.sum())
    # Minority class is the markers: dark discs on a light render, or the
    # white foreground of an already-binary image. Uniform frames have an
    # empty minority either way.
    fg = dark if n_dark * 2 <= raw.size else ~dark
    return MarkerImage(np.where(fg, FOREGROUND, BACKGROUND).astype(np.uint8), sensor_id)


def marker_count(img: MarkerImage) -> int:
    """Number of 8-connected foreground blobs."""
    structure = np.ones((3, 3), dtype=int)
    _, n = ndimage.label(img.pixels == FOREGROUND, structure=structure)
    return int(n)


def taxels_to_markers(signal: np.ndarray, profile: SensorProfile, *,
                      k_xy: float = 20.0, k_z: float = 4.0,
                      r_min: float = 2.0, r_max: float = 24.0) -> MarkerImage:
    """Render a (16, 3) taxel signal as a binary marker image at 640x480.

    Taxel k draws a disc at its rest pixel position shifted by
    k_xy * (dx_k, dy_k), with radius clamp(r0 + k_z * dz_k, r_min, r_max).
    """
    signal = np.asarray(signal, dtype=float)
    if profile.kind != "taxel_array":
        raise ValueError(f"profile kind must be taxel_array, got {profile.kind}")
    if signal.shape != (profile.n_markers, 3):
        raise ValueError(f"expected {profile.n_markers}x3 signal, got {signal.shape}")
    w, h = STORAGE_SIZE
    canvas = np.zeros((h, w), dtype=np.uint8)
    rest_px = profile.marker_pixels()
    centers = rest_px + k_xy * signal[:, :2]
    radii = np.clip(profile.marker_radius + k_z * signal[:, 2], r_min, r_max)
    for (cx, cy), radius in zip(centers, radii):
        # hard (binary) disc; no anti-aliasing so output stays in {0, 255}
        y0 = max(int(np.floor(cy - radius)) - 1, 0)
        y1 = min(int(np.ceil(cy + radius)) + 2, h)
        x0 = max(int(np.floor(cx - radius)) - 1, 0)
        x1 = min(int(np.ceil(cx + radius)) + 2, w)
        if x0 >= x1 or y0 >= y1:
            continue
        yy = np.arange(y0, y1, dtype=float)[:, None]
        xx = np.arange(x0, x1, dtype=float)[None, :]
        inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2
        canvas[y0:y1, x0:x1][inside] = FOREGROUND
    return MarkerImage(canvas, profile.sensor_id)


def mirror_horizontal(img: MarkerImage) -> MarkerImage:
    """Flip pixel (x, y) to (W-1-x, y); dimensions unchanged."""
    return MarkerImage(np.ascontiguousarray(img.pixels[:, ::-1]), img.sensor_id)


def resize_nearest(pixels: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize to (W, H); preserves the input value set."""
    out_w, out_h = size
    in_h, in_w = pixels.shape
    rows = np.minimum((np.arange(out_h) + 0.5) * in_h / out_h, in_h - 1).astype(int)
    cols = np.minimum((np.arange(out_w) + 0.5) * in_w / out_w, in_w - 1).astype(int)
    return np.ascontiguousarray(pixels[rows[:, None], cols[None, :]])


def to_model_input(obs: TactileObservation, size: int = MODEL_SIZE) -> TactileObservation:
    """Resize a storage-size observation to the square model input size."""
    ref = MarkerImage(resize_nearest(obs.ref.pixels, (size, size)), obs.ref.sensor_id)
    cur = MarkerImage(resize_nearest(obs.cur.pixels, (size, size)), obs.cur.sensor_id)
    return TactileObservation(ref=ref, cur=cur, mirrored=obs.mirrored)


def canonicalize_raw(raw, profile: SensorProfile, *, mirror: bool = False,
                     canon_params: dict | None = None) -> MarkerImage:
    """Raw signal -> binary marker image, mirroring right-finger frames."""
    params = canon_params or {}
    if raw.kind == "taxel_array":
        img = taxels_to_markers(raw.taxels, profile, **params)
    else:
        img = segment_markers(raw.image, profile.sensor_id)
    return mirror_horizontal(img) if mirror else img


def save_png(img: MarkerImage, path: str | Path) -> None:
    Image.fromarray(img.pixels, mode="L").save(Path(path), format="PNG")


def load_png(path: str | Path, sensor_id: str = "") -> MarkerImage:
    with Image.open(Path(path)) as im:
        pixels = np.asarray(im.convert("L"))
    return MarkerImage(pixels, sensor_id)


def save_taxel_signals(path: str | Path, signals: np.ndarray) -> None:
    """Write taxel frames as JSONL rows of 48 numbers (16x3, row-major)."""
    signals = np.asarray(signals, dtype=float)
    if signals.ndim != 3 or signals.shape[1:] != (16, 3):
        raise ValueError(f"expected (n, 16, 3) signals, got {signals.shape}")
    with open(path, "w") as fh:
        for frame in signals:
            fh.write(json.dumps(frame.reshape(-1).tolist()) + "\n")


def load_taxel_signals(path: str | Path) -> np.ndarray:
    """Read JSONL taxel rows back as an (n, 16, 3) array."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            values = json.loads(line)
            if len(values) != 48:
                raise ValueError(f"taxel row must hold 48 numbers, got {len(values)}")
            rows.append(np.asarray(values, dtype=float).reshape(16, 3))
    return np.stack(rows) if rows else np.zeros((0, 16, 3))


def reference_marker_image(profile: SensorProfile, *, mirror: bool = False,
                           canon_params: dict | None = None) -> MarkerImage:
    """Canonicalized undeformed frame (rest positions, radius r0)."""
    return canonicalize_raw(reference_render(profile), profile, mirror=mirror,
                            canon_params=canon_params)
