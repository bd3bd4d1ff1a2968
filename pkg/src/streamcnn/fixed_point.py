"""Bit-exact fixed-point and binary arithmetic.

Raw codes are plain Python ints. A format with ``total_bits == 1`` is binary:
code 1 stands for +1 and code 0 for -1. Every conversion between precisions
truncates toward -inf (arithmetic shift) and then saturates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import AccumulatorOverflowError

MAX_BITS = 32
ACC_BITS = 48
# AvgPool divides by multiplying with floor(2**16 / n)
RECIP_FRAC = 16


class Activation(str, Enum):
    NONE = "None"
    RELU = "ReLU"
    BINARY_SIGN = "BinarySign"


@dataclass(frozen=True)
class FxFormat:
    total_bits: int
    frac_bits: int = 0

    def __post_init__(self):
        if not 1 <= self.total_bits <= MAX_BITS:
            raise ValueError(f"total_bits must be in 1..{MAX_BITS}, got {self.total_bits}")
        if self.total_bits == 1:
            if self.frac_bits != 0:
                raise ValueError("binary format has no fractional bits")
        elif not 0 <= self.frac_bits <= self.total_bits - 1:
            raise ValueError(
                f"frac_bits must be in 0..{self.total_bits - 1}, got {self.frac_bits}")

    @property
    def is_binary(self) -> bool:
        return self.total_bits == 1

    @property
    def min_raw(self) -> int:
        return 0 if self.is_binary else -(1 << (self.total_bits - 1))

    @property
    def max_raw(self) -> int:
        return 1 if self.is_binary else (1 << (self.total_bits - 1)) - 1

    @property
    def step(self) -> float:
        return 2.0 ** -self.frac_bits

    def contains(self, raw: int) -> bool:
        return self.min_raw <= raw <= self.max_raw

    def signed_int(self, raw):
        """Integer operand used in products: +-1 for binary codes, the raw code otherwise."""
        if self.is_binary:
            return 2 * raw - 1
        return raw

    def decode(self, raw):
        if self.is_binary:
            return float(2 * raw - 1)
        return raw * self.step

    def __str__(self):
        return "bin" if self.is_binary else f"Q{self.total_bits}.{self.frac_bits}"


BINARY = FxFormat(1, 0)


@dataclass(frozen=True)
class FxValue:
    raw: int
    fmt: FxFormat

    def __post_init__(self):
        if not self.fmt.contains(self.raw):
            raise ValueError(f"raw code {self.raw} outside {self.fmt}")

    @property
    def value(self) -> float:
        return self.fmt.decode(self.raw)


@dataclass(frozen=True)
class Accumulator:
    """Wide integer accumulator; the real value is ``value * 2**-frac``."""
    value: int = 0
    frac: int = 0

    @property
    def real(self) -> float:
        return self.value * 2.0 ** -self.frac


def saturate(raw: int, fmt: FxFormat) -> int:
    return min(max(raw, fmt.min_raw), fmt.max_raw)


def shift_to(raw: int, src_frac: int, dst_frac: int) -> int:
    """Align the binary point; right shifts floor toward -inf."""
    if dst_frac >= src_frac:
        return raw << (dst_frac - src_frac)
    return raw >> (src_frac - dst_frac)


def quantize_real(x: float, fmt: FxFormat) -> FxValue:
    if fmt.is_binary:
        raise ValueError("quantize_real needs a fixed-point format")
    raw = math.floor(x * (1 << fmt.frac_bits))
    return FxValue(saturate(raw, fmt), fmt)


def quantize_array(x, fmt: FxFormat) -> np.ndarray:
    """Vectorised quantize_real, returning raw codes as int64.

    For a binary format the sign decides the code (x >= 0 maps to +1).
    """
    x = np.asarray(x, dtype=np.float64)
    if fmt.is_binary:
        return (x >= 0).astype(np.int64)
    raw = np.floor(x * float(1 << fmt.frac_bits))
    return np.clip(raw, fmt.min_raw, fmt.max_raw).astype(np.int64)


def rescale(v, src_frac: int | None, dst: FxFormat) -> FxValue:
    """Convert an accumulator, FxValue or raw int to ``dst`` (truncate, then saturate).

    ``src_frac`` may be omitted when ``v`` carries its own scale.
    """
    if isinstance(v, Accumulator):
        raw, frac = v.value, v.frac
    elif isinstance(v, FxValue):
        raw, frac = v.fmt.signed_int(v.raw), v.fmt.frac_bits
    else:
        raw, frac = int(v), src_frac
    if src_frac is not None:
        frac = src_frac
    if frac is None:
        raise ValueError("source scale unknown")
    if dst.is_binary:
        raise ValueError("rescale targets fixed-point formats; use apply_activation for binary")
    return FxValue(saturate(shift_to(raw, frac, dst.frac_bits), dst), dst)


def mac(acc: Accumulator, a: FxValue, w: FxValue) -> Accumulator:
    """acc + a*w in exact integer arithmetic.

    Binary operands enter as +-1, so a binary weight turns the product into a
    sign-controlled add/subtract of the activation code.
    """
    if acc.frac != a.fmt.frac_bits + w.fmt.frac_bits:
        raise ValueError("accumulator scale does not match operand formats")
    value = acc.value + a.fmt.signed_int(a.raw) * w.fmt.signed_int(w.raw)
    if not -(1 << (ACC_BITS - 1)) <= value < (1 << (ACC_BITS - 1)):
        raise AccumulatorOverflowError(f"accumulator exceeds {ACC_BITS} bits: {value}")
    return Accumulator(value, acc.frac)


def accumulator_bits(kernel_elems: int, w_bits: int, a_bits: int) -> int:
    """Worst-case accumulator width for a dot product of ``kernel_elems`` terms."""
    return (kernel_elems - 1).bit_length() + w_bits + a_bits


def popcount(x: int) -> int:
    return x.bit_count()


def pack_bits(codes) -> int:
    """Pack a sequence of {0,1} codes LSB-first into an int."""
    out = 0
    for i, c in enumerate(codes):
        if c:
            out |= 1 << i
    return out


def unpack_bits(packed: int, n: int) -> list[int]:
    return [(packed >> i) & 1 for i in range(n)]


def xnor_popcount_dot(a: int, w: int, n: int, mask: int | None = None) -> int:
    """+-1 dot product of two packed bit vectors.

    ``mask`` selects the valid positions (default: the low ``n`` bits); masked-out
    positions contribute nothing, which is how zero padding is expressed.
    """
    full = (1 << n) - 1
    m = full if mask is None else mask & full
    return 2 * popcount(~(a ^ w) & m) - popcount(m)


def apply_activation(acc: Accumulator, fn: Activation | str, dst: FxFormat,
                     threshold: int = 0):
    """Finish one output: BinarySign returns a code bit, the others an FxValue."""
    fn = Activation(fn)
    if fn is Activation.BINARY_SIGN:
        return 1 if acc.value >= threshold else 0
    value = acc.value
    if fn is Activation.RELU and value < 0:
        value = 0
    return rescale(Accumulator(value, acc.frac), None, dst)


def rescale_array(raw: np.ndarray, src_frac: int, dst: FxFormat) -> np.ndarray:
    """Vectorised rescale for int64 arrays whose shifted values fit in 63 bits."""
    raw = np.asarray(raw, dtype=np.int64)
    d = dst.frac_bits - src_frac
    out = raw << d if d >= 0 else raw >> -d
    return np.clip(out, dst.min_raw, dst.max_raw)


def avgpool_reciprocal(n: int) -> int:
    return (1 << RECIP_FRAC) // n


@dataclass
class QTensor:
    """Raw codes laid out (y, x, c); C order is the channel-first stream order."""
    data: np.ndarray
    fmt: FxFormat

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.int64)
        if self.data.ndim != 3:
            raise ValueError("QTensor data must be (y, x, c)")
        if self.data.size and not (self.fmt.contains(int(self.data.min()))
                                   and self.fmt.contains(int(self.data.max()))):
            raise ValueError(f"tensor codes outside {self.fmt}")

    @property
    def shape(self):
        return self.data.shape

    def decode(self) -> np.ndarray:
        if self.fmt.is_binary:
            return (2 * self.data - 1).astype(np.float64)
        return self.data.astype(np.float64) * self.fmt.step

    def __eq__(self, other):
        return (isinstance(other, QTensor) and self.fmt == other.fmt
                and self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data)))
