"""Model configuration, weight containers and the ``MTRW`` weights file.

Weights file layout (little-endian)::

    magic "MTRW", version u8
    config: u32 byte length + UTF-8 ``key=value`` lines
    tensor count u32
    per tensor, names in sorted order:
        u16 name length, name bytes, u8 rank, rank x u32 dims, float32 values
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable

import numpy as np

from .. import entropy, genadv, memorizer, recaller
from ..container import fnv1a64
from ..errors import ConfigurationError, DecodeError
from ..numerics import DTYPE, Rng
from ..skeleton import NUM_NODES

WEIGHTS_MAGIC = b"MTRW"
WEIGHTS_VERSION = 1

GENERATOR_SIDE = ("embed", "lstm", "hyper", "zprior", "attn", "gen")
CRITICS = ("disc_s", "disc_t")
FIXED = ("proxy",)

ABLATIONS = {
    "full": ("recurrent", "conm"),
    "no_memorize": ("first_frame", "conm"),
    "no_recall": ("recurrent", "concat"),
    "monc": ("recurrent", "monc"),
}


@dataclass(frozen=True)
class ModelConfig:
    height: int = 32
    width: int = 32
    gop_size: int = 10
    cm: int = 8
    cz: int = 4
    d: int = 8
    gen_widths: tuple[int, int] = (16, 8)
    disc_widths: tuple[int, int] = (8, 8)
    proxy_widths: tuple[int, int] = (4, 8)
    attention: str = "conm"
    memorize: str = "recurrent"
    normalize: bool = False
    sigma_heat: float = 1.0
    bound: int = 64

    def __post_init__(self):
        if self.height % 4 or self.width % 4 or self.height < 4 or self.width < 4:
            raise ConfigurationError(f"frame size {self.height}x{self.width} must be a positive multiple of 4")
        if self.attention not in recaller.VARIANTS:
            raise ConfigurationError(f"unknown attention variant {self.attention!r}")
        if self.memorize not in ("recurrent", "first_frame"):
            raise ConfigurationError(f"unknown memorize mode {self.memorize!r}")
        if self.gop_size < 1 or self.gop_size > 255:
            raise ConfigurationError("gop_size must be in 1..255")

    @property
    def grid(self) -> tuple[int, int]:
        return self.height // 4, self.width // 4

    @property
    def memory_shape(self) -> tuple[int, int, int]:
        return (self.cm,) + self.grid

    @property
    def variant(self) -> str:
        for name, combo in ABLATIONS.items():
            if combo == (self.memorize, self.attention):
                return name
        return f"{self.memorize}/{self.attention}"

    def with_variant(self, name: str) -> "ModelConfig":
        if name not in ABLATIONS:
            raise ConfigurationError(f"unknown variant {name!r}; choose from {sorted(ABLATIONS)}")
        mem, att = ABLATIONS[name]
        return _replace(self, memorize=mem, attention=att)

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, items: dict[str, str]) -> "ModelConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name in items:
                kwargs[f.name] = _coerce(f.name, items[f.name], getattr(cls, f.name))
        return cls(**kwargs)


def _replace(cfg: ModelConfig, **changes) -> ModelConfig:
    d = asdict(cfg)
    d.update(changes)
    return ModelConfig(**d)


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.split(","))
        return type(default)(raw)
    except ValueError:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from None


def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


@dataclass
class ModelWeights:
    config: ModelConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        return group(self.tensors, prefix)

    def names(self, prefixes: Iterable[str]) -> list[str]:
        prefixes = tuple(prefixes)
        return sorted(n for n in self.tensors if n.split(".", 1)[0] in prefixes)

    def count(self, prefixes: Iterable[str]) -> int:
        return sum(self.tensors[n].size for n in self.names(prefixes))

    def copy(self) -> "ModelWeights":
        return ModelWeights(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def to_bytes(self) -> bytes:
        return weights_to_bytes(self)

    @property
    def hash(self) -> int:
        return fnv1a64(self.to_bytes())

    def save(self, path) -> int:
        data = self.to_bytes()
        Path(path).write_bytes(data)
        return fnv1a64(data)

    @classmethod
    def load(cls, path) -> "ModelWeights":
        return weights_from_bytes(Path(path).read_bytes())


def group(tensors: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    cut = len(prefix) + 1
    return {k[cut:]: v for k, v in tensors.items() if k.startswith(prefix + ".")}


def init_weights(config: ModelConfig, seed: int = 0) -> ModelWeights:
    rng = Rng(seed)
    h, w = config.grid
    groups = {
        "embed": memorizer.init_embed(rng.split("embed"), config.cm),
        "hyper": entropy.init_hyper(rng.split("hyper"), config.cm, config.cz),
        "zprior": entropy.init_factorized(config.cz),
        "attn": recaller.init_attention(rng.split("attn"), config.cm, NUM_NODES, config.d, config.attention),
        "gen": genadv.init_generator(rng.split("gen"), config.d, config.gen_widths),
        "disc_s": genadv.init_discriminator(rng.split("disc_s"), 1 + NUM_NODES, config.disc_widths),
        "disc_t": genadv.init_discriminator(rng.split("disc_t"), 2 + 2 * NUM_NODES, config.disc_widths),
        "proxy": genadv.init_proxy(rng.split("proxy"), config.proxy_widths),
    }
    if config.memorize == "recurrent":
        groups["lstm"] = memorizer.init_conv_lstm(rng.split("lstm"), config.cm, h, w)
    tensors = {
        f"{g}.{k}": np.ascontiguousarray(v, dtype=DTYPE) for g, p in groups.items() for k, v in p.items()
    }
    return ModelWeights(config, tensors)


def weights_to_bytes(w: ModelWeights) -> bytes:
    cfg = w.config.to_text().encode()
    out = [WEIGHTS_MAGIC, struct.pack("<BI", WEIGHTS_VERSION, len(cfg)), cfg,
           struct.pack("<I", len(w.tensors))]
    for name in sorted(w.tensors):
        arr = np.ascontiguousarray(w.tensors[name], dtype="<f4")
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def weights_from_bytes(data: bytes) -> ModelWeights:
    view = memoryview(data)
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(view):
            raise DecodeError(f"weights file truncated in {what}")
        chunk = bytes(view[pos:pos + n])
        pos += n
        return chunk

    if take(4, "magic") != WEIGHTS_MAGIC:
        raise DecodeError("not an MTRW weights file")
    version, cfg_len = struct.unpack("<BI", take(5, "header"))
    if version != WEIGHTS_VERSION:
        raise DecodeError(f"unsupported weights version {version}")
    try:
        config = ModelConfig.from_mapping(parse_key_values(take(cfg_len, "config").decode()))
    except (ConfigurationError, UnicodeDecodeError) as exc:
        raise DecodeError(f"weights file config block: {exc}") from None
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "tensor name"))
        name = take(nlen, "tensor name").decode()
        (rank,) = struct.unpack("<B", take(1, name))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, name))
        n = int(np.prod(shape)) if rank else 1
        tensors[name] = np.frombuffer(take(4 * n, name), dtype="<f4").astype(DTYPE).reshape(shape)
    if pos != len(view):
        raise DecodeError("trailing bytes after the last tensor")
    _check_layout(config, tensors)
    return ModelWeights(config, tensors)


def _check_layout(config: ModelConfig, tensors: dict[str, np.ndarray]) -> None:
    want = {k: v.shape for k, v in init_weights(config).tensors.items()}
    got = {k: v.shape for k, v in tensors.items()}
    if want != got:
        missing = sorted(set(want) - set(got))
        extra = sorted(set(got) - set(want))
        bad = sorted(k for k in set(want) & set(got) if want[k] != got[k])
        raise DecodeError(f"weights do not fit their config: missing {missing}, unexpected {extra}, reshaped {bad}")
