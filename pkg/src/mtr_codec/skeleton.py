"""18-node skeleton clues: lossless predictive coding and heatmap rendering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coder import AdaptiveModel, RangeDecoder, RangeEncoder
from .errors import ContractError, DecodeError
from .numerics import DTYPE

NUM_NODES = 18
RESIDUAL_BOUND = 31
COORD_MAX = (1 << 16) - 1

# OpenPose/COCO-18 ordering
NODE_NAMES = (
    "nose", "neck", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "r_eye", "l_eye", "r_ear", "l_ear",
)
BONES = (
    (1, 2), (1, 5), (2, 3), (3, 4), (5, 6), (6, 7), (1, 8), (8, 9), (9, 10),
    (1, 11), (11, 12), (12, 13), (1, 0), (0, 14), (14, 16), (0, 15), (15, 17),
)


@dataclass(frozen=True)
class Skeleton:
    """Node coordinates in source pixels.  Invisible nodes are stored at (0, 0)."""

    x: tuple[int, ...]
    y: tuple[int, ...]
    visible: tuple[bool, ...]

    def __post_init__(self):
        if not (len(self.x) == len(self.y) == len(self.visible) == NUM_NODES):
            raise ContractError(f"a skeleton has exactly {NUM_NODES} nodes")
        vis = tuple(bool(v) for v in self.visible)
        x = tuple(int(a) if v else 0 for a, v in zip(self.x, vis))
        y = tuple(int(b) if v else 0 for b, v in zip(self.y, vis))
        if any(not 0 <= c <= COORD_MAX for c in x + y):
            raise ContractError("skeleton coordinates must fit in 16 bits")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "visible", vis)

    @classmethod
    def from_array(cls, xy, visible=None) -> "Skeleton":
        xy = np.asarray(xy)
        vis = [True] * NUM_NODES if visible is None else list(visible)
        return cls(tuple(xy[:, 0].tolist()), tuple(xy[:, 1].tolist()), tuple(vis))

    @classmethod
    def zero(cls) -> "Skeleton":
        return cls((0,) * NUM_NODES, (0,) * NUM_NODES, (True,) * NUM_NODES)

    def inside(self, width: int, height: int) -> bool:
        return all(
            0 <= x < width and 0 <= y < height
            for x, y, v in zip(self.x, self.y, self.visible) if v
        )


SkeletonTrack = Sequence[Skeleton]


def predict_residual(s_t: Skeleton, s_prev: Skeleton | None) -> tuple[np.ndarray, np.ndarray]:
    """Per-node ``(dx, dy)`` against the previous skeleton; zero predictor when ``s_prev`` is None.

    Invisible nodes get a zero residual.
    """
    prev = Skeleton.zero() if s_prev is None else s_prev
    res = np.stack([np.subtract(s_t.x, prev.x), np.subtract(s_t.y, prev.y)], axis=1)
    vis = np.asarray(s_t.visible)
    res[~vis] = 0
    return res.astype(np.int64), vis


def _models():
    return (
        AdaptiveModel(0, 1, overflow=False),
        AdaptiveModel(-RESIDUAL_BOUND, RESIDUAL_BOUND),
        AdaptiveModel(-RESIDUAL_BOUND, RESIDUAL_BOUND),
    )


def encode_track(track: SkeletonTrack) -> bytes:
    """Visibility flag per node, then x/y residuals for visible nodes.

    The predictor for a node is its position in the previous frame, held
    over frames where the node is invisible (zero before first sighting).
    """
    vis_model, x_model, y_model = _models()
    ref_x = [0] * NUM_NODES
    ref_y = [0] * NUM_NODES
    enc = RangeEncoder()
    for s in track:
        for i in range(NUM_NODES):
            enc.encode_symbol(int(s.visible[i]), vis_model)
            if not s.visible[i]:
                continue
            enc.encode_symbol(s.x[i] - ref_x[i], x_model)
            enc.encode_symbol(s.y[i] - ref_y[i], y_model)
            ref_x[i], ref_y[i] = s.x[i], s.y[i]
    return enc.finish()


def decode_track(data: bytes, length: int) -> list[Skeleton]:
    vis_model, x_model, y_model = _models()
    ref_x = [0] * NUM_NODES
    ref_y = [0] * NUM_NODES
    dec = RangeDecoder(data)
    track = []
    for _ in range(length):
        xs, ys, vis = [0] * NUM_NODES, [0] * NUM_NODES, [False] * NUM_NODES
        for i in range(NUM_NODES):
            vis[i] = bool(dec.decode_symbol(vis_model))
            if not vis[i]:
                continue
            xs[i] = ref_x[i] + dec.decode_symbol(x_model)
            ys[i] = ref_y[i] + dec.decode_symbol(y_model)
            if not (0 <= xs[i] <= COORD_MAX and 0 <= ys[i] <= COORD_MAX):
                raise DecodeError("skeleton payload decodes to an out-of-range coordinate")
            ref_x[i], ref_y[i] = xs[i], ys[i]
        track.append(Skeleton(tuple(xs), tuple(ys), tuple(vis)))
    return track


def absolute_bits(track: SkeletonTrack) -> int:
    """Size of plain 16-bit coding of every coordinate."""
    return 2 * 16 * NUM_NODES * len(track)


def rasterize(s: Skeleton, height: int, width: int, sigma: float = 1.0, stride: int = 4) -> np.ndarray:
    """``18 x height x width`` Gaussian bumps; node ``(x, y)`` lands on cell ``(y // stride, x // stride)``."""
    if sigma <= 0:
        raise ContractError("heatmap sigma must be positive")
    gy = np.arange(height, dtype=np.float64)[:, None]
    gx = np.arange(width, dtype=np.float64)[None, :]
    out = np.zeros((NUM_NODES, height, width), DTYPE)
    for i in range(NUM_NODES):
        if not s.visible[i]:
            continue
        cy, cx = s.y[i] // stride, s.x[i] // stride
        d2 = (gy - cy) ** 2 + (gx - cx) ** 2
        out[i] = np.exp(-d2 / (2.0 * sigma * sigma))
    return out


def rasterize_track(track: SkeletonTrack, height: int, width: int, sigma: float = 1.0, stride: int = 4) -> np.ndarray:
    return np.stack([rasterize(s, height, width, sigma, stride) for s in track])


def format_track(track: SkeletonTrack) -> str:
    lines = []
    for s in track:
        lines.append(" ".join(f"{x} {y} {int(v)}" for x, y, v in zip(s.x, s.y, s.visible)))
    return "\n".join(lines) + "\n"


def parse_track(text: str) -> list[Skeleton]:
    """One frame per non-blank line: 18 whitespace-separated ``x y v`` triples."""
    track = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3 * NUM_NODES:
            raise DecodeError(f"line {lineno}: expected {3 * NUM_NODES} values, got {len(fields)}")
        try:
            vals = [int(f) for f in fields]
        except ValueError:
            raise DecodeError(f"line {lineno}: non-integer value") from None
        xs, ys, vs = vals[0::3], vals[1::3], vals[2::3]
        if any(v not in (0, 1) for v in vs):
            raise DecodeError(f"line {lineno}: visibility flags must be 0 or 1")
        if any(not 0 <= c <= COORD_MAX for c in xs + ys):
            raise DecodeError(f"line {lineno}: coordinate outside 0..{COORD_MAX}")
        track.append(Skeleton(tuple(xs), tuple(ys), tuple(bool(v) for v in vs)))
    return track
