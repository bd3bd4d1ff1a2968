"""Network IR: layer specs, the model graph, parameters and the architecture document.

The architecture document is JSON::

    {"name": "...", "input_bits": 8, "input_frac": 0,
     "layers": [{"kind": "Conv", "x_in": 28, ..., "has_bias": true}, ...]}

Every layer object carries exactly the keys in ``LAYER_KEYS``. A bit width of 1
marks a binary operand.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ArchitectureError, ContainerError
from .fixed_point import ACC_BITS, BINARY, Activation, FxFormat, accumulator_bits


class LayerKind(str, Enum):
    CONV = "Conv"
    FC = "FC"
    AVGPOOL = "AvgPool"


LAYER_KEYS = ("kind", "x_in", "y_in", "c_in", "k_x", "k_y", "s_x", "s_y", "p_x", "p_y",
              "c_out", "w_bits", "w_frac", "a_bits", "a_frac", "act_fn", "has_bias")
TOP_KEYS = ("name", "input_bits", "input_frac", "layers")
_INT_KEYS = LAYER_KEYS[1:11] + ("w_bits", "w_frac", "a_bits", "a_frac")


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    x_in: int
    y_in: int
    c_in: int
    k_x: int
    k_y: int
    s_x: int
    s_y: int
    p_x: int
    p_y: int
    c_out: int
    w_fmt: FxFormat
    a_fmt: FxFormat
    act_fn: Activation = Activation.NONE
    has_bias: bool = False

    @property
    def x_out(self) -> int:
        return (self.x_in + 2 * self.p_x - self.k_x) // self.s_x + 1

    @property
    def y_out(self) -> int:
        return (self.y_in + 2 * self.p_y - self.k_y) // self.s_y + 1

    @property
    def kernel_elems(self) -> int:
        return self.k_x * self.k_y * self.c_in

    @property
    def positions(self) -> int:
        return self.x_out * self.y_out

    @property
    def in_elems(self) -> int:
        return self.x_in * self.y_in * self.c_in

    @property
    def out_elems(self) -> int:
        return self.x_out * self.y_out * self.c_out

    @property
    def has_weights(self) -> bool:
        return self.kind is not LayerKind.AVGPOOL

    @property
    def binary_weights(self) -> bool:
        return self.has_weights and self.w_fmt.is_binary

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        if not self.has_weights:
            return (0, 0, 0, 0)
        return (self.c_out, self.k_y, self.k_x, self.c_in)

    @property
    def weight_count(self) -> int:
        return int(np.prod(self.weight_shape))

    @property
    def bias_count(self) -> int:
        return self.c_out if self.has_bias else 0

    def validate(self, where: str = "layer") -> None:
        for name in ("x_in", "y_in", "c_in", "k_x", "k_y", "s_x", "s_y", "c_out"):
            if getattr(self, name) < 1:
                raise ArchitectureError(f"{where}: {name} must be positive")
        if self.p_x < 0 or self.p_y < 0:
            raise ArchitectureError(f"{where}: padding must be non-negative")
        for axis, n, k, s, p in (("x", self.x_in, self.k_x, self.s_x, self.p_x),
                                 ("y", self.y_in, self.k_y, self.s_y, self.p_y)):
            span = n + 2 * p - k
            if span < 0:
                raise ArchitectureError(f"{where}: kernel larger than padded input along {axis}")
            if span % s:
                raise ArchitectureError(
                    f"{where}: non-integral output dimension along {axis} "
                    f"(({n} + 2*{p} - {k}) not divisible by stride {s})")
            if p >= k:
                raise ArchitectureError(f"{where}: padding along {axis} must be smaller than the kernel")
        if self.kind is LayerKind.FC:
            if (self.k_x, self.k_y) != (self.x_in, self.y_in):
                raise ArchitectureError(f"{where}: FC kernel must span input")
            if (self.s_x, self.s_y, self.p_x, self.p_y) != (1, 1, 0, 0):
                raise ArchitectureError(f"{where}: FC layers take stride 1 and no padding")
        if self.kind is LayerKind.AVGPOOL:
            if self.c_out != self.c_in:
                raise ArchitectureError(f"{where}: AvgPool needs c_out == c_in")
            if self.has_bias:
                raise ArchitectureError(f"{where}: AvgPool has no bias")
        if (self.act_fn is Activation.BINARY_SIGN) != self.a_fmt.is_binary:
            raise ArchitectureError(f"{where}: BinarySign activation and binary output go together")


@dataclass(frozen=True)
class ModelGraph:
    name: str
    input_fmt: FxFormat
    layers: tuple[LayerSpec, ...]

    def input_format(self, i: int) -> FxFormat:
        """Activation format entering layer ``i``."""
        return self.input_fmt if i == 0 else self.layers[i - 1].a_fmt

    @property
    def input_shape(self) -> tuple[int, int, int]:
        first = self.layers[0]
        return (first.y_in, first.x_in, first.c_in)

    @property
    def output_shape(self) -> tuple[int, int, int]:
        last = self.layers[-1]
        return (last.y_out, last.x_out, last.c_out)

    @property
    def output_fmt(self) -> FxFormat:
        return self.layers[-1].a_fmt

    def __len__(self):
        return len(self.layers)

    def validate(self) -> "ModelGraph":
        if not self.layers:
            raise ArchitectureError("network has no layers")
        for i, layer in enumerate(self.layers):
            layer.validate(f"layer {i + 1}")
            if i:
                prev = self.layers[i - 1]
                got = (layer.x_in, layer.y_in, layer.c_in)
                want = (prev.x_out, prev.y_out, prev.c_out)
                if got != want:
                    raise ArchitectureError(
                        f"chain mismatch: layer {i + 1} declares (x_in, y_in, c_in)={got} "
                        f"but layer {i} produces {want}")
            in_fmt = self.input_format(i)
            w_bits = layer.w_fmt.total_bits if layer.has_weights else 1
            need = accumulator_bits(layer.kernel_elems, w_bits, in_fmt.total_bits)
            if need > ACC_BITS:
                raise ArchitectureError(
                    f"layer {i + 1}: dot product needs {need} accumulator bits (limit {ACC_BITS})")
        return self


@dataclass
class LayerParams:
    """Raw weight codes [c_out][k_y][k_x][c_in] and bias (or threshold) codes."""
    weights: np.ndarray
    bias: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


@dataclass
class ParamSet:
    layers: list[LayerParams]

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i) -> LayerParams:
        return self.layers[i]

    def check(self, graph: ModelGraph) -> "ParamSet":
        if len(self.layers) != len(graph.layers):
            raise ContainerError(
                f"parameter set has {len(self.layers)} layers, graph has {len(graph.layers)}")
        for i, (layer, p) in enumerate(zip(graph.layers, self.layers)):
            if p.weights.size != layer.weight_count:
                raise ContainerError(
                    f"layer {i + 1}: {p.weights.size} weights, expected {layer.weight_count}")
            if p.bias.size != layer.bias_count:
                raise ContainerError(
                    f"layer {i + 1}: {p.bias.size} bias values, expected {layer.bias_count}")
            if layer.has_weights and p.weights.size:
                lo, hi = int(p.weights.min()), int(p.weights.max())
                if not (layer.w_fmt.contains(lo) and layer.w_fmt.contains(hi)):
                    raise ContainerError(f"layer {i + 1}: weight code outside {layer.w_fmt}")
            if p.bias.size and not (-(1 << 31) <= int(p.bias.min()) and int(p.bias.max()) < (1 << 31)):
                raise ContainerError(f"layer {i + 1}: bias code outside 32 bits")
            p.weights = p.weights.reshape(layer.weight_shape).astype(np.int64)
            p.bias = p.bias.astype(np.int64)
        return self


def derive_output_dims(layer: LayerSpec) -> tuple[int, int, int]:
    return layer.x_out, layer.y_out, layer.c_out


def op_count(graph: ModelGraph) -> dict:
    """MACs of Conv/FC layers, additions of AvgPool layers, and ops = 2*macs + adds."""
    macs = adds = 0
    for layer in graph.layers:
        if layer.kind is LayerKind.AVGPOOL:
            adds += layer.positions * layer.k_x * layer.k_y * layer.c_in
        else:
            macs += layer.out_elems * layer.kernel_elems
    return {"macs": macs, "adds": adds, "ops": 2 * macs + adds}


def _fmt(bits: int, frac: int, where: str) -> FxFormat:
    try:
        return BINARY if bits == 1 and frac == 0 else FxFormat(bits, frac)
    except ValueError as exc:
        raise ArchitectureError(f"{where}: {exc}") from None


def _layer_from_dict(d: dict, where: str) -> LayerSpec:
    if not isinstance(d, dict):
        raise ArchitectureError(f"{where}: expected an object")
    keys = set(d)
    missing = [k for k in LAYER_KEYS if k not in keys]
    extra = sorted(keys - set(LAYER_KEYS))
    if missing:
        raise ArchitectureError(f"{where}: missing keys {missing}")
    if extra:
        raise ArchitectureError(f"{where}: unknown keys {extra}")
    for k in _INT_KEYS:
        if type(d[k]) is not int:
            raise ArchitectureError(f"{where}: {k} must be an integer")
    if type(d["has_bias"]) is not bool:
        raise ArchitectureError(f"{where}: has_bias must be true or false")
    try:
        kind = LayerKind(d["kind"])
    except ValueError:
        raise ArchitectureError(f"{where}: unsupported layer kind {d['kind']!r}") from None
    try:
        act = Activation(d["act_fn"])
    except ValueError:
        raise ArchitectureError(f"{where}: unsupported act_fn {d['act_fn']!r}") from None
    return LayerSpec(
        kind=kind, x_in=d["x_in"], y_in=d["y_in"], c_in=d["c_in"],
        k_x=d["k_x"], k_y=d["k_y"], s_x=d["s_x"], s_y=d["s_y"], p_x=d["p_x"], p_y=d["p_y"],
        c_out=d["c_out"],
        w_fmt=_fmt(d["w_bits"], d["w_frac"], where),
        a_fmt=_fmt(d["a_bits"], d["a_frac"], where),
        act_fn=act, has_bias=d["has_bias"])


def parse_architecture(text: str) -> ModelGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArchitectureError(f"syntax error: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise ArchitectureError("top level must be an object")
    missing = [k for k in TOP_KEYS if k not in doc]
    extra = sorted(set(doc) - set(TOP_KEYS))
    if missing:
        raise ArchitectureError(f"missing top-level keys {missing}")
    if extra:
        raise ArchitectureError(f"unknown top-level keys {extra}")
    if not isinstance(doc["name"], str):
        raise ArchitectureError("name must be a string")
    if type(doc["input_bits"]) is not int or type(doc["input_frac"]) is not int:
        raise ArchitectureError("input_bits/input_frac must be integers")
    if not isinstance(doc["layers"], list):
        raise ArchitectureError("layers must be an array")
    layers = tuple(_layer_from_dict(d, f"layer {i + 1}") for i, d in enumerate(doc["layers"]))
    graph = ModelGraph(doc["name"], _fmt(doc["input_bits"], doc["input_frac"], "input"), layers)
    return graph.validate()


def layer_to_dict(layer: LayerSpec) -> dict:
    return {
        "kind": layer.kind.value,
        "x_in": layer.x_in, "y_in": layer.y_in, "c_in": layer.c_in,
        "k_x": layer.k_x, "k_y": layer.k_y, "s_x": layer.s_x, "s_y": layer.s_y,
        "p_x": layer.p_x, "p_y": layer.p_y, "c_out": layer.c_out,
        "w_bits": layer.w_fmt.total_bits, "w_frac": layer.w_fmt.frac_bits,
        "a_bits": layer.a_fmt.total_bits, "a_frac": layer.a_fmt.frac_bits,
        "act_fn": layer.act_fn.value, "has_bias": layer.has_bias,
    }


def serialize_architecture(graph: ModelGraph) -> str:
    doc = {
        "name": graph.name,
        "input_bits": graph.input_fmt.total_bits,
        "input_frac": graph.input_fmt.frac_bits,
        "layers": [layer_to_dict(layer) for layer in graph.layers],
    }
    return json.dumps(doc, indent=2) + "\n"


def make_layer(kind="Conv", *, x_in, y_in=None, c_in, c_out, k=1, s=1, p=0,
               w_fmt=FxFormat(8, 4), a_fmt=FxFormat(8, 4), act_fn=Activation.NONE,
               has_bias=False) -> LayerSpec:
    """Shorthand for square kernels; FC layers get their kernel from the input extent."""
    kind = LayerKind(kind)
    y_in = x_in if y_in is None else y_in
    if kind is LayerKind.FC:
        kx, ky, s, p = x_in, y_in, 1, 0
    else:
        kx = ky = k
    return LayerSpec(kind, x_in, y_in, c_in, kx, ky, s, s, p, p, c_out,
                     w_fmt, a_fmt, Activation(act_fn), has_bias)
