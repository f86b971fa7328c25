"""Recalling attention between the quantized memory and a skeleton heatmap.

Tokens are spatial positions.  With queries ``Q`` (N x d), keys ``K`` and
values ``V`` the block computes ``W = Q K^T`` and returns ``[W V + Q, V]``
reshaped back to ``2d x h x w``.  Row-softmax on ``W`` is optional and off by
default.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import ContractError
from .numerics import DTYPE, Rng, conv2d

Params = Mapping[str, np.ndarray]

VARIANTS = ("conm", "monc", "concat")


def init_attention(rng: Rng, cm: int, heat_channels: int, d: int, variant: str = "conm",
                   scale: float = 1.0) -> dict[str, np.ndarray]:
    if variant not in VARIANTS:
        raise ValueError(f"unknown attention variant {variant!r}")
    q_in, kv_in = (cm, heat_channels) if variant == "monc" else (heat_channels, cm)
    p = {
        "q_w": rng.normal((d, q_in, 1, 1), scale / np.sqrt(q_in)),
        "q_b": np.zeros(d, DTYPE),
        "v_w": rng.normal((d, kv_in, 1, 1), scale / np.sqrt(kv_in)),
        "v_b": np.zeros(d, DTYPE),
    }
    if variant != "concat":
        p["k_w"] = rng.normal((d, kv_in, 1, 1), scale / np.sqrt(kv_in))
        p["k_b"] = np.zeros(d, DTYPE)
    return p


def _tokens(x: np.ndarray) -> np.ndarray:
    # (..., d, h, w) -> (..., N, d) in float64
    return np.swapaxes(x.reshape(x.shape[:-2] + (-1,)), -1, -2).astype(np.float64)


def _untokens(t: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    return np.swapaxes(t, -1, -2).reshape(t.shape[:-2] + (t.shape[-1],) + hw)


def _softmax_rows(w: np.ndarray) -> np.ndarray:
    w = w - w.max(axis=-1, keepdims=True)
    e = np.exp(w)
    return e / e.sum(axis=-1, keepdims=True)


def _check(memory: np.ndarray, heat: np.ndarray) -> None:
    if memory.ndim < 3 or heat.ndim < 3 or memory.shape[-2:] != heat.shape[-2:]:
        raise ContractError(f"recall: memory {memory.shape} and heatmap {heat.shape} grids differ")


def attend(query_src, kv_src, p: Params, normalize: bool = False) -> np.ndarray:
    """``[Q K^T V + Q, V]`` with Q projected from ``query_src`` and K, V from ``kv_src``."""
    q = conv2d(query_src, p["q_w"], p["q_b"])
    k = conv2d(kv_src, p["k_w"], p["k_b"])
    v = conv2d(kv_src, p["v_w"], p["v_b"])
    hw = q.shape[-2:]
    qt, kt, vt = _tokens(q), _tokens(k), _tokens(v)
    w = np.matmul(qt, np.swapaxes(kt, -1, -2))
    if normalize:
        w = _softmax_rows(w)
    recalled = np.matmul(w, vt) + qt
    lead = np.broadcast_shapes(recalled.shape[:-2], vt.shape[:-2])
    vt = np.broadcast_to(vt, lead + vt.shape[-2:])
    recalled = np.broadcast_to(recalled, lead + recalled.shape[-2:])
    return np.concatenate([_untokens(recalled, hw), _untokens(vt, hw)], axis=-3).astype(DTYPE)


def recall(memory, heat, p: Params, normalize: bool = False) -> np.ndarray:
    """Clues attend on memory: the heatmap queries, the memory supplies keys and values."""
    memory, heat = np.asarray(memory, DTYPE), np.asarray(heat, DTYPE)
    _check(memory, heat)
    return attend(heat, memory, p, normalize)


def recall_monc(memory, heat, p: Params, normalize: bool = False) -> np.ndarray:
    """Memory attends on clues: roles of the two inputs swapped."""
    memory, heat = np.asarray(memory, DTYPE), np.asarray(heat, DTYPE)
    _check(memory, heat)
    return attend(memory, heat, p, normalize)


def concat_baseline(memory, heat, p: Params) -> np.ndarray:
    """``[Q, V]`` without attention: projected heatmap next to projected memory."""
    memory, heat = np.asarray(memory, DTYPE), np.asarray(heat, DTYPE)
    _check(memory, heat)
    q = conv2d(heat, p["q_w"], p["q_b"])
    v = conv2d(memory, p["v_w"], p["v_b"])
    lead = np.broadcast_shapes(q.shape[:-3], v.shape[:-3])
    return np.concatenate(
        [np.broadcast_to(q, lead + q.shape[-3:]), np.broadcast_to(v, lead + v.shape[-3:])], axis=-3
    )


def joint_feature(variant: str, memory, heat, p: Params, normalize: bool = False) -> np.ndarray:
    if variant == "conm":
        return recall(memory, heat, p, normalize)
    if variant == "monc":
        return recall_monc(memory, heat, p, normalize)
    if variant == "concat":
        return concat_baseline(memory, heat, p)
    raise ValueError(f"unknown attention variant {variant!r}")
