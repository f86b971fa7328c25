"""Forward passes shared by the codec, the trainer and the ablations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import entropy, genadv, memorizer, recaller
from ..numerics import DTYPE
from ..skeleton import SkeletonTrack, rasterize
from .model import ModelConfig, group


@dataclass
class Heatmaps:
    grid: np.ndarray  # T x 18 x h x w, recaller queries
    full: np.ndarray  # T x 18 x H x W, critic conditioning


def heatmaps(track: SkeletonTrack, cfg: ModelConfig) -> Heatmaps:
    h, w = cfg.grid
    grid = np.stack([rasterize(s, h, w, cfg.sigma_heat, stride=4) for s in track])
    full = np.stack([rasterize(s, cfg.height, cfg.width, 4.0 * cfg.sigma_heat, stride=1) for s in track])
    return Heatmaps(grid, full)


def memory_of(t: dict, cfg: ModelConfig, frames) -> np.ndarray:
    """Frames ``(T, ..., 1, H, W)`` to the GoP memory."""
    if cfg.memorize == "first_frame":
        return memorizer.embed_frame(frames[0], group(t, "embed"))
    return memorizer.memorize(group(t, "lstm"), group(t, "embed"), frames)


def reconstruct(t: dict, cfg: ModelConfig, memory_hat, heat_grid) -> np.ndarray:
    """Every frame of the GoP from the (quantized) memory and its clue heatmaps."""
    feature = recaller.joint_feature(
        cfg.attention, np.asarray(memory_hat, DTYPE), heat_grid, group(t, "attn"), cfg.normalize
    )
    return genadv.generate(feature, group(t, "gen"))


def scales(t: dict, cfg: ModelConfig, z_hat) -> np.ndarray:
    return entropy.hyper_decode(np.asarray(z_hat, DTYPE), group(t, "hyper"), cfg.grid)


@dataclass
class Losses:
    rate: np.ndarray
    adv: np.ndarray
    fm: np.ndarray
    perceptual: np.ndarray
    total: np.ndarray
    fake: np.ndarray


def relaxed_rate_and_fakes(t: dict, cfg: ModelConfig, frames, heat_grid, noise_m, noise_z):
    """Training branch: noisy memory/hyperprior, their rate, and the generated frames."""
    m = memory_of(t, cfg, frames)
    m_tilde = m + noise_m
    z_tilde = entropy.hyper_encode(m, group(t, "hyper")) + noise_z
    sigma = scales(t, cfg, z_tilde)
    rate = entropy.rate_bits(m_tilde, z_tilde, sigma, group(t, "zprior"))
    return rate, reconstruct(t, cfg, m_tilde, heat_grid)


def generator_losses(t: dict, cfg: ModelConfig, frames, heat: Heatmaps, noise_m, noise_z,
                     lambda_rate=genadv.LAMBDA_RATE, lambda_fm=genadv.LAMBDA_FM,
                     lambda_vgg=genadv.LAMBDA_VGG) -> Losses:
    rate, fake = relaxed_rate_and_fakes(t, cfg, frames, heat.grid, noise_m, noise_z)
    ps, pt = group(t, "disc_s"), group(t, "disc_t")
    adv = genadv.loss_gen_adv(fake, heat.full, ps, pt)
    fm = genadv.loss_fm(frames, fake, heat.full, ps)
    perc = genadv.loss_perceptual(frames, fake, group(t, "proxy"))
    total = genadv.loss_total(rate, adv, fm, perc, lambda_rate, lambda_fm, lambda_vgg)
    return Losses(rate, adv, fm, perc, total, fake)


def critic_loss(t: dict, frames, fake, heat: Heatmaps) -> np.ndarray:
    return genadv.loss_dis_total(frames, fake, heat.full, group(t, "disc_s"), group(t, "disc_t"))
