"""Binary containers: NN2C parameter files and NNTF tensor files (little-endian)."""
from __future__ import annotations

import struct

import numpy as np

from .errors import ContainerError
from .fixed_point import BINARY, FxFormat, QTensor
from .model_ir import LayerParams, ModelGraph, ParamSet

PARAM_MAGIC = b"NN2C"
TENSOR_MAGIC = b"NNTF"
VERSION = 1

FLAG_BINARY = 0x1
FLAG_BIAS = 0x2


def code_bytes(bits: int) -> int:
    """Smallest of 1, 2 or 4 bytes holding a signed code of ``bits`` bits."""
    for n in (1, 2, 4):
        if bits <= 8 * n:
            return n
    raise ValueError(f"{bits}-bit codes are not supported")


_DTYPES = {1: "<i1", 2: "<i2", 4: "<i4"}


def pack_codes(codes: np.ndarray, fmt: FxFormat) -> bytes:
    codes = np.asarray(codes, dtype=np.int64).ravel()
    if fmt.is_binary:
        return np.packbits(codes.astype(np.uint8), bitorder="little").tobytes()
    return codes.astype(_DTYPES[code_bytes(fmt.total_bits)]).tobytes()


def payload_size(count: int, fmt: FxFormat) -> int:
    if fmt.is_binary:
        return (count + 7) // 8
    return count * code_bytes(fmt.total_bits)


def unpack_codes(buf: bytes, count: int, fmt: FxFormat) -> np.ndarray:
    if fmt.is_binary:
        bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), bitorder="little")
        return bits[:count].astype(np.int64)
    return np.frombuffer(buf, dtype=_DTYPES[code_bytes(fmt.total_bits)], count=count).astype(np.int64)


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = memoryview(bytes(data))
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerError(
                f"{self.what}: truncated (need {n} bytes at offset {self.pos}, "
                f"{len(self.data) - self.pos} left)")
        out = self.data[self.pos:self.pos + n].tobytes()
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def finish(self):
        if self.pos != len(self.data):
            raise ContainerError(f"{self.what}: {len(self.data) - self.pos} trailing bytes")


def _header(r: _Reader, magic: bytes):
    got = r.take(4)
    if got != magic:
        raise ContainerError(f"{r.what}: bad magic {got!r}, expected {magic!r}")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise ContainerError(f"{r.what}: unsupported version {version}")


def dump_params(params: ParamSet, graph: ModelGraph) -> bytes:
    out = [PARAM_MAGIC, struct.pack("<II", VERSION, len(graph.layers))]
    for layer, p in zip(graph.layers, params.layers):
        flags = (FLAG_BINARY if layer.binary_weights else 0) | (FLAG_BIAS if layer.has_bias else 0)
        w = np.asarray(p.weights).ravel()
        out.append(struct.pack("<BQ", flags, w.size))
        if w.size:
            out.append(pack_codes(w, layer.w_fmt))
        b = np.asarray(p.bias, dtype=np.int64).ravel()
        out.append(struct.pack("<Q", b.size))
        out.append(b.astype("<i4").tobytes())
    return b"".join(out)


def load_params(data: bytes, graph: ModelGraph) -> ParamSet:
    r = _Reader(data, "parameter container")
    _header(r, PARAM_MAGIC)
    (n_layers,) = r.unpack("<I")
    if n_layers != len(graph.layers):
        raise ContainerError(
            f"parameter container: {n_layers} layers, architecture has {len(graph.layers)}")
    layers = []
    for i, layer in enumerate(graph.layers):
        where = f"parameter container, layer {i + 1}"
        flags, count = r.unpack("<BQ")
        if bool(flags & FLAG_BINARY) != layer.binary_weights:
            raise ContainerError(f"{where}: binary-weight flag disagrees with architecture")
        if bool(flags & FLAG_BIAS) != layer.has_bias:
            raise ContainerError(f"{where}: bias flag disagrees with architecture")
        if count != layer.weight_count:
            raise ContainerError(f"{where}: {count} weights, expected {layer.weight_count}")
        fmt = layer.w_fmt if layer.has_weights else BINARY
        weights = unpack_codes(r.take(payload_size(count, fmt)), count, fmt) if count else \
            np.zeros(0, dtype=np.int64)
        if count and not fmt.is_binary:
            if weights.min() < fmt.min_raw or weights.max() > fmt.max_raw:
                raise ContainerError(f"{where}: weight code outside {fmt}")
        (n_bias,) = r.unpack("<Q")
        if n_bias != layer.bias_count:
            raise ContainerError(f"{where}: {n_bias} bias values, expected {layer.bias_count}")
        bias = np.frombuffer(r.take(4 * n_bias), dtype="<i4").astype(np.int64)
        layers.append(LayerParams(weights.reshape(layer.weight_shape), bias))
    r.finish()
    return ParamSet(layers).check(graph)


def dump_tensor(t: QTensor) -> bytes:
    y, x, c = t.data.shape
    head = TENSOR_MAGIC + struct.pack("<IIIIBB", VERSION, y, x, c,
                                      t.fmt.total_bits, t.fmt.frac_bits)
    return head + pack_codes(t.data, t.fmt)


def load_tensor(data: bytes) -> QTensor:
    r = _Reader(data, "tensor container")
    _header(r, TENSOR_MAGIC)
    y, x, c, bits, frac = r.unpack("<IIIBB")
    try:
        fmt = BINARY if bits == 1 else FxFormat(bits, frac)
    except ValueError as exc:
        raise ContainerError(f"tensor container: {exc}") from None
    count = y * x * c
    codes = unpack_codes(r.take(payload_size(count, fmt)), count, fmt)
    r.finish()
    if not fmt.is_binary and count and (codes.min() < fmt.min_raw or codes.max() > fmt.max_raw):
        raise ContainerError(f"tensor container: code outside {fmt}")
    return QTensor(codes.reshape(y, x, c), fmt)
