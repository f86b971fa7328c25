"""GoP encode/decode: memory + hyperprior + skeleton clues in one container."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import entropy
from ..coder import build_cdf_gaussian, build_cdf_logistic, decode_symbols, encode_symbols
from ..container import Container
from ..errors import ConfigurationError, DecodeError
from ..numerics import DTYPE, conv_out_size
from ..skeleton import Skeleton, SkeletonTrack, decode_track, encode_track
from .forward import heatmaps, memory_of, reconstruct, scales
from .model import ModelConfig, ModelWeights


class WeightsMismatchError(ConfigurationError):
    """The stream was produced with different weights."""


@dataclass
class GopState:
    memory: np.ndarray
    m_hat: np.ndarray  # int64, Cm x h x w
    z_hat: np.ndarray  # int64, Cz x hz x wz
    sigma: np.ndarray


@dataclass
class DecodedGop:
    frames: np.ndarray  # T x 1 x H x W in [-1, 1]
    m_hat: np.ndarray
    z_hat: np.ndarray
    track: list[Skeleton]


@lru_cache(maxsize=65536)
def _gaussian_table(sigma: float, bound: int):
    return build_cdf_gaussian(sigma, bound)


def memory_tables(sigma: np.ndarray, bound: int):
    return [_gaussian_table(float(s), bound) for s in np.asarray(sigma, DTYPE).ravel()]


def hyper_tables(w: ModelWeights, z_shape: tuple[int, ...]):
    zp = w.group("zprior")
    per_channel = [
        build_cdf_logistic(float(loc), float(ls), w.config.bound) for loc, ls in zip(zp["loc"], zp["log_scale"])
    ]
    n = int(np.prod(z_shape[1:]))
    return [t for t in per_channel for _ in range(n)]


def latent_shape(cfg: ModelConfig) -> tuple[int, int, int]:
    h, w = cfg.grid
    for _ in range(2):
        h, w = conv_out_size(h, 3, 2, 1), conv_out_size(w, 3, 2, 1)
    return cfg.cz, h, w


def _check_frames(frames, cfg: ModelConfig) -> np.ndarray:
    frames = np.asarray(frames, DTYPE)
    if frames.ndim == 3:
        frames = frames[:, None]
    if frames.shape != (cfg.gop_size, 1, cfg.height, cfg.width):
        raise ConfigurationError(
            f"GoP of shape {frames.shape} does not match weights "
            f"({cfg.gop_size} frames of {cfg.height}x{cfg.width})"
        )
    return frames


def quantize_gop(frames, w: ModelWeights) -> GopState:
    """Testing branch of the encoder: memory, rounded hyperprior, scales, rounded memory."""
    cfg = w.config
    frames = _check_frames(frames, cfg)
    m = memory_of(w.tensors, cfg, frames)
    z_hat = entropy.hard_quantize(entropy.hyper_encode(m, w.group("hyper")))
    sigma = scales(w.tensors, cfg, z_hat)
    return GopState(m, entropy.hard_quantize(m), z_hat, sigma)


def encode_gop(frames, track: SkeletonTrack, w: ModelWeights, weights_hash: int | None = None) -> Container:
    cfg = w.config
    if len(track) != cfg.gop_size:
        raise ConfigurationError(f"skeleton track has {len(track)} frames, GoP size is {cfg.gop_size}")
    if any(not s.inside(cfg.width, cfg.height) for s in track):
        raise ConfigurationError("skeleton node outside the frame")
    actual = w.hash
    if weights_hash is not None and weights_hash != actual:
        raise WeightsMismatchError("weights hash does not match the supplied weights")
    st = quantize_gop(frames, w)
    z_payload = encode_symbols(st.z_hat, hyper_tables(w, st.z_hat.shape))
    m_payload = encode_symbols(st.m_hat, memory_tables(st.sigma, cfg.bound))
    return Container(cfg.width, cfg.height, cfg.gop_size, actual, z_payload, m_payload, encode_track(track))


def decode_gop(c: Container, w: ModelWeights) -> DecodedGop:
    cfg = w.config
    if c.weights_hash != w.hash:
        raise WeightsMismatchError(
            f"stream was encoded with weights {c.weights_hash:016x}, got {w.hash:016x}"
        )
    if (c.width, c.height, c.gop_size) != (cfg.width, cfg.height, cfg.gop_size):
        raise ConfigurationError("stream geometry does not match the weights configuration")
    zs = latent_shape(cfg)
    z_hat = np.array(decode_symbols(c.z_payload, hyper_tables(w, zs), int(np.prod(zs))), np.int64).reshape(zs)
    sigma = scales(w.tensors, cfg, z_hat)
    ms = cfg.memory_shape
    m_hat = np.array(
        decode_symbols(c.m_payload, memory_tables(sigma, cfg.bound), int(np.prod(ms))), np.int64
    ).reshape(ms)
    track = decode_track(c.skeleton_payload, cfg.gop_size)
    if any(not s.inside(cfg.width, cfg.height) for s in track):
        raise DecodeError("skeleton payload places a node outside the frame")
    heat = heatmaps(track, cfg)
    frames = reconstruct(w.tensors, cfg, m_hat.astype(DTYPE), heat.grid)
    return DecodedGop(frames, m_hat, z_hat, track)


def estimated_bits(st: GopState, w: ModelWeights) -> float:
    return float(entropy.rate_bits(st.m_hat, st.z_hat, st.sigma, w.group("zprior")))

