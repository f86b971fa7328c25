"""Encoder transform: strided frame embedder + peephole ConvLSTM.

The GoP memory is the final *cell* state ``C_T`` of the recurrence, not the
hidden state.
"""

from __future__ import annotations

from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError
from .numerics import DTYPE, Rng, conv2d, hadamard, sigmoid, tanh

GATES = ("i", "f", "c", "o")
PEEPHOLES = ("ci", "cf", "co")

Params = Mapping[str, np.ndarray]


class CellState(NamedTuple):
    C: np.ndarray
    H: np.ndarray


def init_embed(rng: Rng, cm: int, scale: float = 1.0) -> dict[str, np.ndarray]:
    return {
        "w1": rng.normal((cm, 1, 3, 3), scale / 3.0),
        "b1": np.zeros(cm, DTYPE),
        "w2": rng.normal((cm, cm, 3, 3), scale / np.sqrt(9 * cm)),
        "b2": np.zeros(cm, DTYPE),
    }


def init_conv_lstm(rng: Rng, cm: int, h: int, w: int, scale: float = 1.0) -> dict[str, np.ndarray]:
    s = scale / np.sqrt(9 * cm)
    p: dict[str, np.ndarray] = {}
    for g in GATES:
        p[f"W_x{g}"] = rng.normal((cm, cm, 3, 3), s)
        p[f"W_h{g}"] = rng.normal((cm, cm, 3, 3), s)
        p[f"b_{g}"] = np.zeros(cm, DTYPE)
    for g in PEEPHOLES:
        p[f"W_{g}"] = rng.normal((cm, h, w), 0.1 * scale)
    # forget-gate bias starts open so early frames are not washed out
    p["b_f"] = np.ones(cm, DTYPE)
    return p


def zero_state(p: Params) -> CellState:
    shape = np.asarray(p["W_ci"]).shape[-3:]
    z = np.zeros(shape, DTYPE)
    return CellState(z, z)


def embed_frame(frame, e: Params) -> np.ndarray:
    """conv(s2) -> tanh -> conv(s2) -> tanh; maps ``1 x H x W`` to ``Cm x H/4 x W/4``."""
    frame = np.asarray(frame, dtype=DTYPE)
    h, w = frame.shape[-2:]
    if h % 4 or w % 4:
        raise ConfigurationError(f"frame size {h}x{w} is not divisible by 4")
    x = tanh(conv2d(frame, e["w1"], e["b1"], stride=2, pad=1))
    return tanh(conv2d(x, e["w2"], e["b2"], stride=2, pad=1))


def _gate(p: Params, name: str, x, h) -> np.ndarray:
    return conv2d(x, p[f"W_x{name}"], p[f"b_{name}"], pad=1) + conv2d(
        h, p[f"W_h{name}"], np.zeros(np.asarray(p[f"b_{name}"]).shape, DTYPE), pad=1
    )


def cell_step(p: Params, x_feat, prev: CellState) -> CellState:
    x_feat = np.asarray(x_feat, dtype=DTYPE)
    cell_shape = np.asarray(p["W_ci"]).shape[-3:]
    if x_feat.shape[-2:] != cell_shape[-2:] or prev.C.shape[-3:] != cell_shape:
        raise ContractError(
            f"cell_step: shape mismatch input {x_feat.shape} / state {prev.C.shape} vs cell {cell_shape}"
        )
    c_prev, h_prev = prev
    i = sigmoid(_gate(p, "i", x_feat, h_prev) + hadamard(p["W_ci"], c_prev))
    f = sigmoid(_gate(p, "f", x_feat, h_prev) + hadamard(p["W_cf"], c_prev))
    c = hadamard(f, c_prev) + hadamard(i, tanh(_gate(p, "c", x_feat, h_prev)))
    o = sigmoid(_gate(p, "o", x_feat, h_prev) + hadamard(p["W_co"], c))
    return CellState(c, hadamard(o, tanh(c)))


def memorize_states(p: Params, e: Params, gop: Sequence) -> list[CellState]:
    """All intermediate states ``[S_1, ..., S_T]`` from a zero initial state."""
    if len(gop) == 0:
        raise ContractError("memorize: empty GoP")
    shape = np.asarray(gop[0]).shape
    state = zero_state(p)
    states = []
    for t, frame in enumerate(gop):
        if np.asarray(frame).shape != shape:
            raise ContractError(f"memorize: frame {t} has shape {np.asarray(frame).shape}, expected {shape}")
        state = cell_step(p, embed_frame(frame, e), state)
        states.append(state)
    return states


def memorize(p: Params, e: Params, gop: Sequence) -> np.ndarray:
    return memorize_states(p, e, gop)[-1].C
