"""Quantization, hyperprior transforms and the likelihoods behind the rate.

Memory elements are modelled as a zero-mean Gaussian convolved with a unit
uniform, with the per-element scale predicted from the quantized hyperprior.
The hyperprior itself uses a per-channel logistic convolved with a unit
uniform.  Both likelihoods accept non-integer points, which is how the
training-time (noisy) rate is evaluated.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
from scipy.special import expit, ndtr

from .errors import ContractError
from .numerics import DTYPE, Rng, conv2d, tanh, upsample2x

SIGMA_MIN = 1e-4
SIGMA_MAX = 1e4
LOG_SCALE_MIN = float(np.log(1e-4))
LOG_SCALE_MAX = float(np.log(1e4))
# keeps -log2 p finite for points far in the tails
RATE_PROB_FLOOR = 1e-30

Params = Mapping[str, np.ndarray]


def relax_quantize(x, rng: Rng) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    return x + rng.uniform_centered(x.shape)


def hard_quantize(x) -> np.ndarray:
    """Round half away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def init_hyper(rng: Rng, cm: int, cz: int, scale: float = 1.0) -> dict[str, np.ndarray]:
    return {
        "e_w1": rng.normal((cz, cm, 3, 3), scale / np.sqrt(9 * cm)),
        "e_b1": np.zeros(cz, DTYPE),
        "e_w2": rng.normal((cz, cz, 3, 3), scale / np.sqrt(9 * cz)),
        "e_b2": np.zeros(cz, DTYPE),
        "d_w1": rng.normal((cm, cz, 3, 3), 0.5 * scale / np.sqrt(9 * cz)),
        "d_b1": np.zeros(cm, DTYPE),
        "d_w2": rng.normal((cm, cm, 3, 3), 0.5 * scale / np.sqrt(9 * cm)),
        "d_b2": np.zeros(cm, DTYPE),
    }


def init_factorized(cz: int) -> dict[str, np.ndarray]:
    return {"loc": np.zeros(cz, DTYPE), "log_scale": np.zeros(cz, DTYPE)}


def hyper_encode(m, p: Params) -> np.ndarray:
    """Two stride-2 convs, ``Cm x h x w -> Cz x ceil(h/4) x ceil(w/4)``."""
    m = np.asarray(m, dtype=DTYPE)
    if m.shape[-3] != np.asarray(p["e_w1"]).shape[-3]:
        raise ContractError(f"hyper_encode: memory {m.shape} vs weights {np.asarray(p['e_w1']).shape}")
    y = tanh(conv2d(m, p["e_w1"], p["e_b1"], stride=2, pad=1))
    return conv2d(y, p["e_w2"], p["e_b2"], stride=2, pad=1)


def hyper_decode_raw(z_hat, p: Params, out_hw: tuple[int, int]) -> np.ndarray:
    """Log-scale map: (upsample, conv, tanh), (upsample, conv), cropped to ``out_hw``."""
    z_hat = np.asarray(z_hat, dtype=DTYPE)
    if z_hat.shape[-3] != np.asarray(p["d_w1"]).shape[-3]:
        raise ContractError(f"hyper_decode: latent {z_hat.shape} vs weights {np.asarray(p['d_w1']).shape}")
    y = tanh(conv2d(upsample2x(z_hat), p["d_w1"], p["d_b1"], pad=1))
    y = conv2d(upsample2x(y), p["d_w2"], p["d_b2"], pad=1)
    h, w = out_hw
    if y.shape[-2] < h or y.shape[-1] < w:
        raise ContractError(f"hyper_decode: output {y.shape} smaller than memory grid {out_hw}")
    return y[..., :h, :w]


def scales_from_raw(raw) -> np.ndarray:
    raw = np.clip(np.asarray(raw, dtype=DTYPE), LOG_SCALE_MIN - 1.0, LOG_SCALE_MAX + 1.0)
    return np.clip(np.exp(raw), SIGMA_MIN, SIGMA_MAX).astype(DTYPE)


def hyper_decode(z_hat, p: Params, out_hw: tuple[int, int]) -> np.ndarray:
    return scales_from_raw(hyper_decode_raw(z_hat, p, out_hw))


def prob_memory(m, sigma) -> np.ndarray:
    """P(M = m) under N(0, sigma^2) convolved with U(-1/2, 1/2).

    Evaluated on ``|m|`` with upper-tail CDFs, so the result is exactly
    symmetric and keeps precision far from the mode.
    """
    a = np.abs(np.asarray(m, dtype=np.float64))
    s = np.asarray(sigma, dtype=np.float64)
    return ndtr((0.5 - a) / s) - ndtr((-0.5 - a) / s)


def prob_hyper(z, loc, log_scale) -> np.ndarray:
    """P(z) under a logistic(loc, exp(log_scale)) convolved with U(-1/2, 1/2)."""
    u = np.abs(np.asarray(z, dtype=np.float64) - np.asarray(loc, dtype=np.float64))
    s = np.exp(np.clip(np.asarray(log_scale, dtype=np.float64), LOG_SCALE_MIN, LOG_SCALE_MAX))
    return expit((0.5 - u) / s) - expit((-0.5 - u) / s)


def _channel_params(d: Params, z: np.ndarray):
    # broadcast per-channel parameters over the trailing spatial axes
    loc = np.asarray(d["loc"])[..., :, None, None]
    log_scale = np.asarray(d["log_scale"])[..., :, None, None]
    if loc.shape[-3] != z.shape[-3]:
        raise ContractError(f"factorized density has {loc.shape[-3]} channels, latent {z.shape}")
    return loc, log_scale


def memory_bits(m, sigma) -> np.ndarray:
    p = np.maximum(prob_memory(m, sigma), RATE_PROB_FLOOR)
    return -np.log2(p).sum(axis=(-3, -2, -1))


def hyper_bits(z, d: Params) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    loc, log_scale = _channel_params(d, z)
    p = np.maximum(prob_hyper(z, loc, log_scale), RATE_PROB_FLOOR)
    return -np.log2(p).sum(axis=(-3, -2, -1))


def rate_bits(m, z, sigma, d: Params):
    """Estimated bits for the memory (given scales) plus the hyperprior.

    Works for hard-quantized integers and noisy reals alike.  Extra leading
    axes are kept, so a batch of parameter sets yields a batch of rates.
    """
    return memory_bits(m, sigma) + hyper_bits(z, d)
