"""Alternating adversarial training with central finite-difference gradients.

Each step first updates the critics on ``loss_dis_total`` and then every
generator-side tensor (embedder, ConvLSTM, hyperprior, factorized prior,
attention, generator) on the full weighted objective.  Perturbed parameter
sets are evaluated together: the flat parameter vector is expanded into a
``(2k, P)`` batch of +h / -h copies, unflattened to tensors with a leading
batch axis, and pushed through the broadcasting forward pass in one call.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence as Seq

import numpy as np

from ..errors import ConfigurationError
from ..genadv import LAMBDA_FM, LAMBDA_RATE, LAMBDA_VGG
from ..numerics import DTYPE, Rng
from .forward import Heatmaps, critic_loss, generator_losses, heatmaps, relaxed_rate_and_fakes
from .model import CRITICS, GENERATOR_SIDE, ModelConfig, ModelWeights, init_weights, parse_key_values
from .synth import Sequence

log = logging.getLogger(__name__)

MAX_PARAMS = 5000


@dataclass
class TrainConfig:
    seed: int = 0
    steps: int = 200
    lr_gen: float = 0.01
    lr_dis: float = 0.01
    fd_rel: float = 1e-4
    fd_min: float = 1e-3
    grad_clip: float = 1.0  # global-norm clipping; 0 disables
    lambda_rate: float = LAMBDA_RATE
    lambda_fm: float = LAMBDA_FM
    lambda_vgg: float = LAMBDA_VGG
    gop_size: int = 10
    chunk: int = 2048
    # model shape
    cm: int = 2
    cz: int = 1
    d: int = 2
    gen_widths: tuple[int, int] = (4, 4)
    disc_widths: tuple[int, int] = (2, 2)
    proxy_widths: tuple[int, int] = (4, 4)
    attention: str = "conm"
    memorize: str = "recurrent"
    normalize: bool = False
    sigma_heat: float = 1.0

    def __post_init__(self):
        if self.gop_size < 2:
            raise ConfigurationError("training needs gop_size >= 2 (the temporal critic works on pairs)")

    def model_config(self, height: int, width: int) -> ModelConfig:
        return ModelConfig(
            height=height, width=width, gop_size=self.gop_size, cm=self.cm, cz=self.cz, d=self.d,
            gen_widths=self.gen_widths, disc_widths=self.disc_widths, proxy_widths=self.proxy_widths,
            attention=self.attention, memorize=self.memorize, normalize=self.normalize,
            sigma_heat=self.sigma_heat,
        )

    def replace(self, **changes) -> "TrainConfig":
        d = asdict(self)
        d.update(changes)
        return TrainConfig(**d)

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        items = parse_key_values(text)
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(items) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for name, raw in items.items():
            default = getattr(cls, name)
            try:
                if isinstance(default, bool):
                    kwargs[name] = raw.lower() in ("1", "true", "yes")
                elif isinstance(default, tuple):
                    kwargs[name] = tuple(int(x) for x in raw.split(","))
                else:
                    kwargs[name] = type(default)(raw)
            except ValueError:
                raise ConfigurationError(f"bad value for {name}: {raw!r}") from None
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls.from_text(Path(path).read_text())


class ParamVector:
    """Flat view over a fixed, sorted set of named tensors."""

    def __init__(self, tensors: dict[str, np.ndarray], names: Seq[str]):
        self.names = list(names)
        self.shapes = [tensors[n].shape for n in self.names]
        sizes = [int(np.prod(s)) for s in self.shapes]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def flatten(self, tensors: dict[str, np.ndarray]) -> np.ndarray:
        if not self.names:
            return np.zeros(0, DTYPE)
        return np.concatenate([tensors[n].ravel() for n in self.names]).astype(DTYPE)

    def unflatten(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        """Works on a single vector ``(P,)`` or a batch ``(B, P)``."""
        lead = theta.shape[:-1]
        return {
            n: theta[..., a:b].reshape(lead + s)
            for n, s, a, b in zip(self.names, self.shapes, self.offsets[:-1], self.offsets[1:])
        }


def fd_steps(theta: np.ndarray, rel: float = 1e-4, floor: float = 1e-3) -> np.ndarray:
    return np.maximum(floor, rel * np.abs(np.asarray(theta, np.float64)))


def central_difference(fn_batch: Callable[[np.ndarray], np.ndarray], theta: np.ndarray,
                       rel: float = 1e-4, floor: float = 1e-3, chunk: int = 2048) -> np.ndarray:
    """Gradient of a scalar function by central differences, coordinate by coordinate.

    ``fn_batch`` maps a ``(B, P)`` stack of parameter vectors to ``B`` values.
    The step actually applied is recovered after rounding to the parameter
    dtype, so the quotient uses the true spacing.  Coordinates are processed
    in canonical order regardless of ``chunk``.
    """
    theta = np.asarray(theta)
    p = theta.size
    h = fd_steps(theta, rel, floor)
    grad = np.zeros(p, np.float64)
    for start in range(0, p, max(1, chunk // 2)):
        idx = np.arange(start, min(p, start + max(1, chunk // 2)))
        k = idx.size
        batch = np.repeat(theta[None, :], 2 * k, axis=0)
        rows = np.arange(k)
        batch[rows, idx] = (theta[idx] + h[idx]).astype(theta.dtype)
        batch[k + rows, idx] = (theta[idx] - h[idx]).astype(theta.dtype)
        vals = np.asarray(fn_batch(batch), np.float64)
        spacing = batch[rows, idx].astype(np.float64) - batch[k + rows, idx].astype(np.float64)
        grad[idx] = (vals[:k] - vals[k:]) / spacing
    return grad


@dataclass
class TrainResult:
    weights: ModelWeights
    trace: list[float] = field(default_factory=list)  # loss_total per step, before the update
    dis_trace: list[float] = field(default_factory=list)


@dataclass
class _Batch:
    frames: np.ndarray  # T x 1 x 1 x H x W
    heat: Heatmaps  # with a singleton batch axis after the frame axis
    noise_m: np.ndarray
    noise_z: np.ndarray


def _prepare(seq: Sequence, index: int, cfg: ModelConfig, z_shape, rng: Rng) -> _Batch:
    hm = heatmaps(seq.track, cfg)
    noise = rng.split("noise", index)
    return _Batch(
        np.asarray(seq.frames, DTYPE)[:, None],
        Heatmaps(hm.grid[:, None], hm.full[:, None]),
        noise.uniform_centered(cfg.memory_shape),
        noise.uniform_centered(z_shape),
    )


def _clip(g: np.ndarray, limit: float) -> np.ndarray:
    if limit <= 0:
        return g
    n = float(np.linalg.norm(g))
    return g * (limit / n) if n > limit else g


def train_toy(cfg: TrainConfig, data: Seq[Sequence], init: ModelWeights | None = None,
              progress: Callable[[int, float, float], None] | None = None) -> TrainResult:
    if not data:
        raise ConfigurationError("no training data")
    h, w = data[0].frames.shape[-2:]
    for s in data:
        if s.frames.shape != (cfg.gop_size, 1, h, w) or len(s.track) != cfg.gop_size:
            raise ConfigurationError(
                f"training clip of shape {s.frames.shape} does not match gop_size {cfg.gop_size} at {h}x{w}"
            )
    model_cfg = cfg.model_config(h, w)
    weights = init.copy() if init is not None else init_weights(model_cfg, cfg.seed)
    total = weights.count(GENERATOR_SIDE + CRITICS)
    if total > MAX_PARAMS:
        raise ConfigurationError(f"{total} trainable parameters exceed the finite-difference budget of {MAX_PARAMS}")

    from .codec import latent_shape

    z_shape = latent_shape(weights.config)
    gen_vec = ParamVector(weights.tensors, weights.names(GENERATOR_SIDE))
    dis_vec = ParamVector(weights.tensors, weights.names(CRITICS))
    rng = Rng(cfg.seed)
    batches = [_prepare(s, i, weights.config, z_shape, rng) for i, s in enumerate(data)]
    result = TrainResult(weights)
    t = weights.tensors
    mcfg = weights.config

    def gen_objective(b: _Batch):
        def fn(theta_batch):
            tensors = dict(t)
            tensors.update(gen_vec.unflatten(theta_batch))
            return generator_losses(tensors, mcfg, b.frames, b.heat, b.noise_m, b.noise_z,
                                    cfg.lambda_rate, cfg.lambda_fm, cfg.lambda_vgg).total
        return fn

    for step in range(cfg.steps):
        b = batches[step % len(batches)]
        # critic step against the current generator's fakes
        _, fake = relaxed_rate_and_fakes(t, mcfg, b.frames, b.heat.grid, b.noise_m, b.noise_z)

        def dis_fn(theta_batch, fake=fake, b=b):
            tensors = dict(t)
            tensors.update(dis_vec.unflatten(theta_batch))
            return critic_loss(tensors, b.frames, fake, b.heat)

        theta_d = dis_vec.flatten(t)
        dis_loss = float(np.asarray(dis_fn(theta_d[None]))[0])
        if cfg.lr_dis:
            g = _clip(central_difference(dis_fn, theta_d, cfg.fd_rel, cfg.fd_min, cfg.chunk), cfg.grad_clip)
            t.update(dis_vec.unflatten((theta_d - cfg.lr_dis * g).astype(DTYPE)))

        fn = gen_objective(b)
        theta_g = gen_vec.flatten(t)
        loss = float(np.asarray(fn(theta_g[None]))[0])
        if cfg.lr_gen:
            g = _clip(central_difference(fn, theta_g, cfg.fd_rel, cfg.fd_min, cfg.chunk), cfg.grad_clip)
            t.update(gen_vec.unflatten((theta_g - cfg.lr_gen * g).astype(DTYPE)))

        result.trace.append(loss)
        result.dis_trace.append(dis_loss)
        if progress is not None:
            progress(step, loss, dis_loss)
        log.debug("step %d loss_total %.4f loss_dis %.4f", step, loss, dis_loss)

    # detach from the batched views
    weights.tensors = {k: np.ascontiguousarray(v, DTYPE) for k, v in t.items()}
    return result
