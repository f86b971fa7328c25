"""Byte-oriented range coder with static CDF tables and an adaptive model.

The coder is the carry-propagating 32-bit design popularised by LZMA: a
64-bit ``low`` with a one-byte cache, byte-wise renormalisation whenever the
range drops below 2**24, and a five-byte flush.  The first output byte of
that design is always zero and is not written.

Symbols outside a table's alphabet are coded as the table's overflow symbol
followed by a 16-bit raw magnitude and a sign bit.
"""

from __future__ import annotations

import copy
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Sequence, Union

import numpy as np
from scipy.special import expit, ndtr

from .errors import ContractError, DecodeError

PRECISION = 16
TOTAL = 1 << PRECISION
PROB_FLOOR = 2.0 ** -PRECISION
MAX_ESCAPE = (1 << 16) - 1

_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


@dataclass(frozen=True)
class CdfTable:
    """Cumulative counts summing to 2**16.

    Index ``i`` stands for symbol ``offset + i``; when ``overflow`` is set
    the last index is the escape symbol instead.
    """

    cum: tuple[int, ...]
    offset: int = 0
    overflow: bool = False

    @property
    def size(self) -> int:
        return len(self.cum) - 1

    @property
    def counts(self) -> list[int]:
        return [b - a for a, b in zip(self.cum, self.cum[1:])]

    @property
    def bound(self) -> tuple[int, int]:
        n = self.size - (1 if self.overflow else 0)
        return self.offset, self.offset + n - 1


def quantize_pmf(probs) -> list[int]:
    """Integer counts summing to 2**16, each at least 1.

    Probabilities are floored at 2**-16, scaled, and floored to integers.
    Missing counts go out by largest remainder, one whole group of equal
    remainders at a time (equal remainders are never split, which keeps
    symmetric densities symmetric); a leftover smaller than the next group
    goes to the most probable symbol.  Excess counts caused by the minimum of
    one are taken from the most probable symbol.
    """
    q = np.maximum(np.asarray(probs, dtype=np.float64), PROB_FLOOR)
    n = q.size
    if n == 0 or n > TOTAL:
        raise ContractError(f"cannot build a table over {n} symbols")
    raw = q / q.sum() * TOTAL
    floors = np.floor(raw)
    base = np.maximum(floors, 1).astype(np.int64)
    diff = TOTAL - int(base.sum())
    if diff > 0:
        rem = np.where(floors >= 1, raw - floors, -1.0)
        for r in sorted(set(rem[rem >= 0].tolist()), reverse=True):
            group = np.flatnonzero(rem == r)
            if group.size > diff:
                break
            base[group] += 1
            diff -= group.size
        base[int(np.argmax(base))] += diff
    while diff < 0:
        i = int(np.argmax(base))
        take = min(-diff, int(base[i]) - 1)
        base[i] -= take
        diff += take
    return [int(c) for c in base]


def table_from_counts(counts, offset: int = 0, overflow: bool = False) -> CdfTable:
    counts = list(counts)
    if any(c < 1 for c in counts) or sum(counts) != TOTAL:
        raise ContractError("counts must be >= 1 and sum to 2**16")
    return CdfTable(tuple(accumulate(counts, initial=0)), offset, overflow)


def gaussian_pmf(sigma: float, bound: int) -> np.ndarray:
    """Bin masses for symbols ``-bound..bound`` plus the two-sided tail."""
    k = np.arange(-bound, bound + 1, dtype=np.float64)
    s = float(sigma)
    a = np.abs(k)
    core = ndtr((0.5 - a) / s) - ndtr((-0.5 - a) / s)
    tail = 2.0 * ndtr(-(bound + 0.5) / s)
    return np.append(core, tail)


def logistic_pmf(loc: float, log_scale: float, bound: int) -> np.ndarray:
    k = np.arange(-bound, bound + 1, dtype=np.float64)
    s = float(np.exp(np.clip(log_scale, np.log(1e-4), np.log(1e4))))
    u = np.abs(k - float(loc))
    core = expit((0.5 - u) / s) - expit((-0.5 - u) / s)
    tail = expit((-bound - 0.5 - loc) / s) + expit((loc - bound - 0.5) / s)
    return np.append(core, tail)


def build_cdf_gaussian(sigma: float, bound: int) -> CdfTable:
    if bound < 1:
        raise ContractError("alphabet bound must be >= 1")
    return table_from_counts(quantize_pmf(gaussian_pmf(sigma, bound)), -bound, True)


def build_cdf_logistic(loc: float, log_scale: float, bound: int) -> CdfTable:
    if bound < 1:
        raise ContractError("alphabet bound must be >= 1")
    return table_from_counts(quantize_pmf(logistic_pmf(loc, log_scale, bound)), -bound, True)


@dataclass
class AdaptiveModel:
    """Frequency counts over ``low..high`` (plus an optional escape symbol).

    Every coded symbol adds ``increment`` to its count; once the total
    exceeds ``cap`` all counts are halved, rounding up.
    """

    low: int
    high: int
    overflow: bool = True
    increment: int = 32
    cap: int = 1 << 14
    freq: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.freq:
            self.freq = [1] * (self.high - self.low + 1 + (1 if self.overflow else 0))
        if sum(self.freq) + self.increment > TOTAL:
            raise ContractError("adaptive model total would exceed coder precision")

    @property
    def total(self) -> int:
        return sum(self.freq)

    @property
    def bound(self) -> tuple[int, int]:
        return self.low, self.high

    def interval(self, index: int) -> tuple[int, int, int]:
        cum = sum(self.freq[:index])
        return cum, self.freq[index], self.total

    def lookup(self, target: int) -> int:
        cum = 0
        for i, f in enumerate(self.freq):
            if target < cum + f:
                return i
            cum += f
        raise DecodeError("adaptive model target out of range")

    def update(self, index: int) -> None:
        self.freq[index] += self.increment
        if self.total > self.cap:
            self.freq = [(f + 1) // 2 for f in self.freq]


Model = Union[CdfTable, AdaptiveModel]


def _index_of(symbol: int, model: Model) -> int | None:
    lo, hi = model.bound
    if lo <= symbol <= hi:
        return symbol - lo
    if not model.overflow:
        raise ContractError(f"symbol {symbol} outside alphabet [{lo}, {hi}] with no escape")
    if abs(symbol) > MAX_ESCAPE:
        raise ContractError(f"symbol {symbol} exceeds the 16-bit escape range")
    return None


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()

    def encode(self, cum: int, freq: int, total: int) -> None:
        r = self.range // total
        self.low += r * cum
        self.range = r * freq
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def _shift_low(self) -> None:
        if self.low < 0xFF000000 or self.low > _MASK32:
            carry = self.low >> 32
            temp = self._cache
            while True:
                self._out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self._cache_size -= 1
                if self._cache_size == 0:
                    break
            self._cache = (self.low >> 24) & 0xFF
        self._cache_size += 1
        self.low = (self.low & 0x00FFFFFF) << 8

    def encode_symbol(self, symbol: int, model: Model) -> None:
        symbol = int(symbol)
        idx = _index_of(symbol, model)
        esc = model.size - 1 if isinstance(model, CdfTable) else len(model.freq) - 1
        code = esc if idx is None else idx
        if isinstance(model, CdfTable):
            self.encode(model.cum[code], model.cum[code + 1] - model.cum[code], TOTAL)
        else:
            self.encode(*model.interval(code))
            model.update(code)
        if idx is None:
            self.encode(abs(symbol), 1, TOTAL)
            self.encode(1 if symbol < 0 else 0, 1, 2)

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self._out[1:])


class RangeDecoder:
    # flush bytes the decoder may legitimately look past
    _SLACK = 4

    def __init__(self, data: bytes):
        self._data = bytes(data)
        self._pos = 0
        self._overrun = 0
        self.range = _MASK32
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next()
        self._r = 0

    def _next(self) -> int:
        if self._pos < len(self._data):
            b = self._data[self._pos]
            self._pos += 1
            return b
        self._overrun += 1
        if self._overrun > self._SLACK:
            raise DecodeError("range decoder ran past the end of the payload")
        return 0

    def target(self, total: int) -> int:
        self._r = self.range // total
        v = self.code // self._r
        if v >= total:
            raise DecodeError("corrupt range-coded payload")
        return v

    def consume(self, cum: int, freq: int) -> None:
        self.code -= cum * self._r
        self.range = self._r * freq
        while self.range < _TOP:
            self.code = ((self.code << 8) | self._next()) & _MASK32
            self.range <<= 8

    def decode_symbol(self, model: Model) -> int:
        if isinstance(model, CdfTable):
            v = self.target(TOTAL)
            idx = bisect_right(model.cum, v) - 1
            self.consume(model.cum[idx], model.cum[idx + 1] - model.cum[idx])
            esc = model.size - 1
        else:
            v = self.target(model.total)
            idx = model.lookup(v)
            cum, f, _ = model.interval(idx)
            self.consume(cum, f)
            model.update(idx)
            esc = len(model.freq) - 1
        if model.overflow and idx == esc:
            mag = self.target(TOTAL)
            self.consume(mag, 1)
            neg = self.target(2)
            self.consume(neg, 1)
            return -mag if neg else mag
        return model.bound[0] + idx


Tables = Union[Sequence[CdfTable], CdfTable, AdaptiveModel]


def _models(tables: Tables, n: int):
    if isinstance(tables, AdaptiveModel):
        model = copy.deepcopy(tables)
        return [model] * n
    if isinstance(tables, CdfTable):
        return [tables] * n
    if len(tables) != n:
        raise ContractError(f"{len(tables)} tables for {n} symbols")
    return tables


def encode_symbols(symbols, tables: Tables) -> bytes:
    symbols = [int(s) for s in np.asarray(symbols).ravel()]
    enc = RangeEncoder()
    for s, m in zip(symbols, _models(tables, len(symbols))):
        enc.encode_symbol(s, m)
    return enc.finish()


def decode_symbols(data: bytes, tables: Tables, count: int) -> list[int]:
    dec = RangeDecoder(data)
    return [dec.decode_symbol(m) for m in _models(tables, count)]
