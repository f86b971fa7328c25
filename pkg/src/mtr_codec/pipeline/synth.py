"""Synthetic surveillance clips: a stick figure walking over a static texture.

The skeleton track is emitted from the same joint coordinates used to draw
the figure, so clues are exact by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from ..numerics import DTYPE, Rng
from ..skeleton import BONES, NUM_NODES, Skeleton


@dataclass
class Sequence:
    frames: np.ndarray  # T x 1 x H x W, on the 8-bit grid mapped to [-1, 1]
    track: list[Skeleton]


# joint offsets in figure heights, (x, y), y down; limbs filled in per frame
_HEAD = {0: (0.0, -0.40), 1: (0.0, -0.30), 14: (-0.03, -0.43), 15: (0.03, -0.43),
         16: (-0.06, -0.41), 17: (0.06, -0.41)}
_SHOULDER = {2: -0.10, 5: 0.10}
_HIP = {8: -0.06, 11: 0.06}


def _pose(cx: float, cy: float, size: float, phase: float, swing: float) -> np.ndarray:
    pts = np.zeros((NUM_NODES, 2))
    for j, (dx, dy) in _HEAD.items():
        pts[j] = (cx + dx * size, cy + dy * size)
    for (sh, el, wr), sign in (((2, 3, 4), 1.0), ((5, 6, 7), -1.0)):
        a = sign * swing * np.sin(phase)
        sx, sy = cx + _SHOULDER[sh] * size, cy - 0.28 * size
        pts[sh] = (sx, sy)
        pts[el] = (sx + 0.14 * size * np.sin(a), sy + 0.14 * size * np.cos(a))
        pts[wr] = (pts[el][0] + 0.13 * size * np.sin(1.3 * a), pts[el][1] + 0.13 * size * np.cos(1.3 * a))
    for (hp, kn, an), sign in (((8, 9, 10), -1.0), ((11, 12, 13), 1.0)):
        a = sign * swing * np.sin(phase)
        hx, hy = cx + _HIP[hp] * size, cy
        pts[hp] = (hx, hy)
        pts[kn] = (hx + 0.22 * size * np.sin(a), hy + 0.22 * size * np.cos(a))
        pts[an] = (pts[kn][0] + 0.22 * size * np.sin(0.5 * a), pts[kn][1] + 0.22 * size * np.cos(0.5 * a))
    return pts


def _texture(rng: Rng, height: int, width: int) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    img = np.full((height, width), -0.3)
    for _ in range(3):
        fy, fx = rng.random(2) * 0.6 + 0.1
        ph = rng.random() * 2 * np.pi
        img += 0.15 * np.sin(fx * xx + fy * yy + ph)
    return img


def _draw(img: np.ndarray, pts: np.ndarray, value: float) -> None:
    h, w = img.shape
    for a, b in BONES:
        n = int(np.ceil(np.abs(pts[a] - pts[b]).max())) + 1
        for s in np.linspace(0.0, 1.0, n + 1):
            x, y = np.rint(pts[a] + s * (pts[b] - pts[a])).astype(int)
            if 0 <= x < w and 0 <= y < h:
                img[y, x] = value


def _to_grid(img: np.ndarray) -> np.ndarray:
    # snap to the 8-bit levels so frames survive a PGM round trip unchanged
    q = np.clip(np.rint((img + 1.0) * 127.5), 0, 255)
    return (q / 127.5 - 1.0).astype(DTYPE)


def synth_sequence(rng: Rng, height: int, width: int, frames: int, max_step: int = 3,
                   drop_prob: float = 0.0) -> Sequence:
    size = 0.8 * height
    direction = 1.0 if rng.random() < 0.5 else -1.0
    speed = direction * (0.3 + 0.4 * rng.random()) * max_step
    cx = width * (0.3 + 0.4 * rng.random())
    cy = height * 0.55
    phase = rng.random() * 2 * np.pi
    swing = 0.4 + 0.4 * rng.random()
    bg = _texture(rng, height, width)
    bounds = np.array([width - 1, height - 1])

    prev = None
    out_frames, track = [], []
    for t in range(frames):
        target = np.rint(_pose(cx + speed * t, cy, size, phase + 0.8 * t, swing)).astype(np.int64)
        target = np.clip(target, 0, bounds)
        pts = target if prev is None else prev + np.clip(target - prev, -max_step, max_step)
        pts = np.clip(pts, 0, bounds)
        prev = pts
        img = bg.copy()
        _draw(img, pts.astype(np.float64), 0.9)
        out_frames.append(_to_grid(img)[None])
        vis = [True] * NUM_NODES
        if drop_prob > 0:
            vis = [bool(rng.random() >= drop_prob) for _ in range(NUM_NODES)]
        track.append(Skeleton.from_array(pts, vis))
    return Sequence(np.stack(out_frames), track)


def synth_dataset(seed: int, count: int, height: int, width: int, frames: int,
                  max_step: int = 3, drop_prob: float = 0.0) -> list[Sequence]:
    if height % 4 or width % 4:
        raise ConfigurationError(f"frame size {height}x{width} must be divisible by 4")
    root = Rng(seed)
    return [synth_sequence(root.split("seq", i), height, width, frames, max_step, drop_prob)
            for i in range(count)]
