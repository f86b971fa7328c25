"""Frame generator, spatial/temporal discriminators and the training losses.

All losses are minimisation objectives.  Probabilities are clamped to
``[1e-7, 1 - 1e-7]`` before any log, so every loss is finite.  Frame
sequences carry the frame index on axis 0; any axes between it and the
channel axis (a parameter batch) are preserved in the returned loss.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import ContractError
from .numerics import DTYPE, Rng, conv2d, sigmoid, tanh, upsample2x

Params = Mapping[str, np.ndarray]

PROB_CLAMP = 1e-7
LAMBDA_RATE = 1.0
LAMBDA_FM = 10.0
LAMBDA_VGG = 10.0


def _he(rng: Rng, shape, scale: float = 1.0) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    return rng.normal(shape, scale / np.sqrt(fan_in))


def init_generator(rng: Rng, d: int, widths=(16, 8), scale: float = 1.0) -> dict[str, np.ndarray]:
    g1, g2 = widths
    return {
        "w1": _he(rng, (g1, 2 * d, 3, 3), scale), "b1": np.zeros(g1, DTYPE),
        "w2": _he(rng, (g2, g1, 3, 3), scale), "b2": np.zeros(g2, DTYPE),
        "w3": _he(rng, (1, g2, 3, 3), scale), "b3": np.zeros(1, DTYPE),
    }


def init_discriminator(rng: Rng, in_channels: int, widths=(8, 8), scale: float = 1.0) -> dict[str, np.ndarray]:
    c1, c2 = widths
    return {
        "w1": _he(rng, (c1, in_channels, 3, 3), scale), "b1": np.zeros(c1, DTYPE),
        "w2": _he(rng, (c2, c1, 3, 3), scale), "b2": np.zeros(c2, DTYPE),
        "w3": _he(rng, (1, c2, 1, 1), scale), "b3": np.zeros(1, DTYPE),
    }


def init_proxy(rng: Rng, widths=(4, 8)) -> dict[str, np.ndarray]:
    c1, c2 = widths
    return {
        "w1": _he(rng, (c1, 1, 3, 3)), "b1": np.zeros(c1, DTYPE),
        "w2": _he(rng, (c2, c1, 3, 3)), "b2": np.zeros(c2, DTYPE),
    }


def generate(feature, p: Params) -> np.ndarray:
    """``2d x h x w`` joint feature to a ``1 x 4h x 4w`` frame in [-1, 1]."""
    feature = np.asarray(feature, DTYPE)
    if feature.ndim < 3 or feature.shape[-3] != np.asarray(p["w1"]).shape[-3]:
        raise ContractError(f"generate: feature {feature.shape} vs weights {np.asarray(p['w1']).shape}")
    y = tanh(conv2d(feature, p["w1"], p["b1"], pad=1))
    y = tanh(conv2d(upsample2x(y), p["w2"], p["b2"], pad=1))
    return tanh(conv2d(upsample2x(y), p["w3"], p["b3"], pad=1))


def discriminate(frames, cond, p: Params) -> tuple[np.ndarray, np.ndarray]:
    """Realness probability and first-layer feature map for ``concat(frames, cond)``.

    The first conv is split by input channel (it is linear), so a
    conditioning map shared by many frame batches is convolved only once.
    """
    frames, cond = np.asarray(frames, DTYPE), np.asarray(cond, DTYPE)
    w1 = np.asarray(p["w1"])
    nf = frames.shape[-3]
    if w1.shape[-3] != nf + cond.shape[-3]:
        raise ContractError(f"discriminator expects {w1.shape[-3]} input channels, got {nf}+{cond.shape[-3]}")
    pre = conv2d(frames, w1[..., :nf, :, :], p["b1"], stride=2, pad=1)
    pre = pre + conv2d(cond, w1[..., nf:, :, :], np.zeros(w1.shape[:-3], DTYPE), stride=2, pad=1)
    feat = tanh(pre)
    y = tanh(conv2d(feat, p["w2"], p["b2"], stride=2, pad=1))
    logit = conv2d(y, p["w3"], p["b3"]).mean(axis=(-3, -2, -1), dtype=np.float64)
    return sigmoid(logit.astype(DTYPE)), feat


def _cat(*xs) -> np.ndarray:
    lead = np.broadcast_shapes(*(x.shape[:-3] for x in xs))
    return np.concatenate([np.broadcast_to(x, lead + x.shape[-3:]) for x in xs], axis=-3)


def spatial_scores(frames, heat_full, p: Params):
    return discriminate(frames, heat_full, p)


def temporal_scores(frames, heat_full, p: Params) -> np.ndarray:
    frames, heat_full = np.asarray(frames, DTYPE), np.asarray(heat_full, DTYPE)
    if frames.shape[0] < 2:
        raise ContractError("temporal discriminator needs at least two frames")
    return discriminate(_cat(frames[:-1], frames[1:]), _cat(heat_full[:-1], heat_full[1:]), p)[0]


def _log(p) -> np.ndarray:
    return np.log(np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP))


def dis_loss_from_probs(p_real, p_fake) -> np.ndarray:
    """``-[sum log D(real) + sum log(1 - D(fake))]`` over axis 0."""
    return -(_log(p_real).sum(axis=0) + _log(1.0 - np.asarray(p_fake, np.float64)).sum(axis=0))


def gen_adv_from_probs(*fake_probs) -> np.ndarray:
    """Non-saturating generator objective ``-sum log D(fake)`` over each critic."""
    return sum(-_log(p).sum(axis=0) for p in fake_probs)


def loss_dis_spatial(real, fake, heat_full, p: Params) -> np.ndarray:
    return dis_loss_from_probs(spatial_scores(real, heat_full, p)[0], spatial_scores(fake, heat_full, p)[0])


def loss_dis_temporal(real, fake, heat_full, p: Params) -> np.ndarray:
    return dis_loss_from_probs(temporal_scores(real, heat_full, p), temporal_scores(fake, heat_full, p))


def loss_dis_total(real, fake, heat_full, ps: Params, pt: Params) -> np.ndarray:
    return loss_dis_spatial(real, fake, heat_full, ps) + loss_dis_temporal(real, fake, heat_full, pt)


def loss_gen_adv(fake, heat_full, ps: Params, pt: Params) -> np.ndarray:
    return gen_adv_from_probs(spatial_scores(fake, heat_full, ps)[0], temporal_scores(fake, heat_full, pt))


def _mean_abs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = np.abs(a.astype(np.float64) - b.astype(np.float64))
    return diff.mean(axis=(0, -3, -2, -1))


def loss_fm(real, fake, heat_full, ps: Params) -> np.ndarray:
    """Mean absolute gap between first-layer spatial-critic features."""
    return _mean_abs(spatial_scores(real, heat_full, ps)[1], spatial_scores(fake, heat_full, ps)[1])


def proxy_features(x, p: Params) -> np.ndarray:
    y = tanh(conv2d(x, p["w1"], p["b1"], pad=1))
    return tanh(conv2d(y, p["w2"], p["b2"], stride=2, pad=1))


def loss_perceptual(real, fake, p: Params) -> np.ndarray:
    """Feature-space L1 under a fixed random conv net (stands in for a pretrained VGG)."""
    return _mean_abs(proxy_features(np.asarray(real, DTYPE), p), proxy_features(np.asarray(fake, DTYPE), p))


def loss_total(rate, adv, fm, perceptual, lambda_rate: float = LAMBDA_RATE,
               lambda_fm: float = LAMBDA_FM, lambda_vgg: float = LAMBDA_VGG):
    return lambda_rate * rate + adv + lambda_vgg * perceptual + lambda_fm * fm
