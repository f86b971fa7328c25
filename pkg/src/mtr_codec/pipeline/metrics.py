"""Quality and rate figures reported for a decoded GoP."""

from __future__ import annotations

import numpy as np

FPS = 25
PSNR_CAP = 99.0


def to_uint8(x) -> np.ndarray:
    """[-1, 1] to 8-bit levels via ``(x + 1) * 127.5``."""
    return np.clip(np.rint((np.asarray(x, np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def psnr(a, b) -> float:
    a8, b8 = to_uint8(a).astype(np.float64), to_uint8(b).astype(np.float64)
    if a8.shape != b8.shape:
        raise ValueError(f"psnr: shape mismatch {a8.shape} vs {b8.shape}")
    mse = float(np.mean((a8 - b8) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(255.0 ** 2 / mse))


def mean_psnr(ref, rec) -> float:
    """Average of per-frame PSNR over a GoP."""
    return float(np.mean([psnr(a, b) for a, b in zip(ref, rec)]))


def bitrate_kbps(bits: float, frames: int, fps: int = FPS) -> float:
    return bits * fps / frames / 1000.0
