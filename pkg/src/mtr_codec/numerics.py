"""Small dense-tensor kernels shared by every network in the codec.

Tensors are plain ``numpy.float32`` arrays laid out channels-first
(``C x H x W``).  Every op also accepts extra *leading* axes and broadcasts
them numpy-style, which is how the trainer evaluates many perturbed copies of
the parameters in one call: data carries ``(frames, 1, C, H, W)`` and
parameters carry ``(batch, ...)``.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ContractError

DTYPE = np.float32


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=DTYPE)


def _check_same(a: np.ndarray, b: np.ndarray, op: str) -> None:
    # trailing extents must agree exactly; only extra leading axes broadcast
    n = min(a.ndim, b.ndim)
    ok = n == 0 or a.shape[a.ndim - n:] == b.shape[b.ndim - n:]
    if ok:
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            ok = False
    if not ok:
        raise ContractError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def conv_out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def conv2d(x, weights, bias, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Zero-padded 2-D cross-correlation.

    ``x`` is ``(..., Cin, H, W)``, ``weights`` ``(..., Cout, Cin, k, k)`` and
    ``bias`` ``(..., Cout)``.  The window is unrolled into columns and the
    products are accumulated in float64, then rounded to float32 once.
    """
    x = np.asarray(x)
    weights = np.asarray(weights)
    bias = np.asarray(bias)
    if x.ndim < 3 or weights.ndim < 4 or bias.ndim < 1:
        raise ContractError(
            f"conv2d: bad ranks input {x.shape} weights {weights.shape} bias {bias.shape}"
        )
    cout, cin, kh, kw = weights.shape[-4:]
    if kh != kw or kh % 2 == 0:
        raise ContractError(f"conv2d: kernel must be odd and square, got weights {weights.shape}")
    if x.shape[-3] != cin or bias.shape[-1] != cout:
        raise ContractError(
            f"conv2d: shape mismatch input {x.shape} vs weights {weights.shape} (bias {bias.shape})"
        )
    if stride < 1 or pad < 0:
        raise ContractError(f"conv2d: invalid stride={stride} pad={pad}")
    h, w = x.shape[-2:]
    ho, wo = conv_out_size(h, kh, stride, pad), conv_out_size(w, kw, stride, pad)
    if ho < 1 or wo < 1:
        raise ContractError(f"conv2d: input {x.shape} too small for weights {weights.shape}")

    x = x.astype(np.float64)
    if pad:
        widths = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (pad, pad)]
        x = np.pad(x, widths)
    # patches (..., Cin*k*k, Ho*Wo), ordered channel-major then row-major over the window
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(-2, -1))
    win = win[..., ::stride, ::stride, :, :][..., :ho, :wo, :, :]
    cols = np.moveaxis(win, (-2, -1), (-4, -3))
    cols = cols.reshape(cols.shape[:-5] + (cin * kh * kw, ho * wo))
    w64 = weights.astype(np.float64).reshape(weights.shape[:-3] + (cin * kh * kw,))
    acc = np.matmul(w64, cols)
    acc += bias.astype(np.float64)[..., None]
    lead = acc.shape[:-2]
    return acc.reshape(lead + (cout, ho, wo)).astype(DTYPE)


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    # split on sign so exp never overflows; sigmoid(0) is exactly 0.5
    out = np.empty_like(x)
    pos = x >= 0
    e = np.exp(-np.abs(x))
    out[pos] = 1.0 / (1.0 + e[pos])
    out[~pos] = e[~pos] / (1.0 + e[~pos])
    return out


def tanh(x) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=DTYPE))


def hadamard(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=DTYPE), np.asarray(b, dtype=DTYPE)
    _check_same(a, b, "hadamard")
    return a * b


def add(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=DTYPE), np.asarray(b, dtype=DTYPE)
    _check_same(a, b, "add")
    return a + b


def concat_channels(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=DTYPE), np.asarray(b, dtype=DTYPE)
    if a.shape[-2:] != b.shape[-2:]:
        raise ContractError(f"concat_channels: spatial mismatch {a.shape} vs {b.shape}")
    lead = np.broadcast_shapes(a.shape[:-3], b.shape[:-3])
    a = np.broadcast_to(a, lead + a.shape[-3:])
    b = np.broadcast_to(b, lead + b.shape[-3:])
    return np.concatenate([a, b], axis=-3)


def matmul(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ContractError(f"matmul: inner dimension mismatch {a.shape} @ {b.shape}")
    return np.matmul(a.astype(np.float64), b.astype(np.float64)).astype(DTYPE)


def upsample2x(x) -> np.ndarray:
    """Nearest-neighbour x2 upsampling of the last two axes."""
    x = np.asarray(x)
    return np.repeat(np.repeat(x, 2, axis=-2), 2, axis=-1)


class Rng:
    """Counter-based generator (numpy's Philox-4x64) keyed by a 64-bit seed.

    ``split(*tags)`` derives an independent stream so that, e.g., the
    quantization noise of one tensor does not depend on how many draws other
    tensors consumed.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def split(self, *tags) -> "Rng":
        text = ":".join([str(self.seed)] + [str(t) for t in tags]).encode()
        return Rng(int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little"))

    def uniform_centered(self, shape) -> np.ndarray:
        """Draws on the open interval (-1/2, 1/2), exactly representable in float32."""
        k = self._gen.integers(0, 1 << 24, size=shape, dtype=np.int64)
        return ((k.astype(np.float64) + 0.5) * 2.0 ** -24 - 0.5).astype(DTYPE)

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        return (self._gen.standard_normal(size=shape) * scale).astype(DTYPE)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        """Integers on [low, high)."""
        return self._gen.integers(low, high, size=size)

    def random(self, size=None):
        return self._gen.random(size=size)
