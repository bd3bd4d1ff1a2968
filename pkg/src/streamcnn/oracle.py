"""Reference execution: the plain six-loop layer computation, layer after layer.

Deliberately slow. Quantized mode defines the bit-exact result that the
streaming simulator has to reproduce; Real mode runs the same loops on decoded
floats to measure what quantization costs.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .fixed_point import (RECIP_FRAC, Accumulator, Activation, QTensor, apply_activation,
                          avgpool_reciprocal)
from .model_ir import LayerKind, LayerSpec, ModelGraph, ParamSet


class Mode(str, Enum):
    REAL = "real"
    QUANTIZED = "quantized"


@dataclass
class RealLayerParams:
    weights: np.ndarray      # float [c_out][k_y][k_x][c_in]
    bias: np.ndarray         # float per c_out (threshold for BinarySign layers)


def acc_frac(layer: LayerSpec, in_fmt) -> int:
    """Binary point position of the layer accumulator (before AvgPool scaling)."""
    w_frac = layer.w_fmt.frac_bits if layer.has_weights else 0
    return in_fmt.frac_bits + w_frac


def real_params(graph: ModelGraph, params: ParamSet) -> list[RealLayerParams]:
    out = []
    for i, (layer, p) in enumerate(zip(graph.layers, params.layers)):
        if layer.has_weights:
            w = p.weights.astype(np.float64)
            w = 2 * w - 1 if layer.w_fmt.is_binary else w * layer.w_fmt.step
        else:
            w = np.zeros(0)
        b = p.bias.astype(np.float64) * 2.0 ** -acc_frac(layer, graph.input_format(i))
        out.append(RealLayerParams(w, b))
    return out


def _check_input(layer: LayerSpec, shape):
    if tuple(shape) != (layer.y_in, layer.x_in, layer.c_in):
        raise ValueError(f"input shape {tuple(shape)} does not match layer "
                         f"({layer.y_in}, {layer.x_in}, {layer.c_in})")


def run_layer_quantized(layer: LayerSpec, params, x: QTensor) -> QTensor:
    _check_input(layer, x.data.shape)
    in_fmt = x.fmt
    a = x.data.tolist()
    if in_fmt.is_binary:
        a = [[[2 * v - 1 for v in row] for row in plane] for plane in a]
    avg = layer.kind is LayerKind.AVGPOOL
    if not avg:
        w = params.weights.tolist()
        if layer.w_fmt.is_binary:
            w = [[[[2 * v - 1 for v in r] for r in kx] for kx in ky] for ky in w]
    bias = params.bias.tolist() if layer.has_bias else None
    frac = acc_frac(layer, in_fmt)
    recip = avgpool_reciprocal(layer.k_x * layer.k_y) if avg else 0
    binary_out = layer.act_fn is Activation.BINARY_SIGN

    out = np.zeros((layer.y_out, layer.x_out, layer.c_out), dtype=np.int64)
    for y_out in range(layer.y_out):
        for x_out in range(layer.x_out):
            for c_out in range(layer.c_out):
                acc = 0
                for k_y in range(layer.k_y):
                    for k_x in range(layer.k_x):
                        for c_in in range(layer.c_in):
                            y_in = y_out * layer.s_y - layer.p_y
                            x_in = x_out * layer.s_x - layer.p_x
                            yy, xx = y_in + k_y, x_in + k_x
                            if not (0 <= yy < layer.y_in and 0 <= xx < layer.x_in):
                                continue  # zero padding
                            if avg:
                                if c_in == c_out:
                                    acc += a[yy][xx][c_in]
                            else:
                                acc += a[yy][xx][c_in] * w[c_out][k_y][k_x][c_in]
                # end of the c_out iteration: scale, bias, activation
                if avg:
                    out_acc = Accumulator(acc * recip, frac + RECIP_FRAC)
                else:
                    out_acc = Accumulator(acc, frac)
                if binary_out:
                    out[y_out, x_out, c_out] = apply_activation(
                        out_acc, layer.act_fn, layer.a_fmt, bias[c_out] if bias else 0)
                else:
                    if bias:
                        out_acc = Accumulator(out_acc.value + bias[c_out], out_acc.frac)
                    out[y_out, x_out, c_out] = apply_activation(out_acc, layer.act_fn, layer.a_fmt).raw
    return QTensor(out, layer.a_fmt)


def run_layer_real(layer: LayerSpec, params: RealLayerParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    _check_input(layer, x.shape)
    avg = layer.kind is LayerKind.AVGPOOL
    out = np.zeros((layer.y_out, layer.x_out, layer.c_out))
    for y_out in range(layer.y_out):
        for x_out in range(layer.x_out):
            for c_out in range(layer.c_out):
                acc = 0.0
                for k_y in range(layer.k_y):
                    for k_x in range(layer.k_x):
                        for c_in in range(layer.c_in):
                            yy = y_out * layer.s_y - layer.p_y + k_y
                            xx = x_out * layer.s_x - layer.p_x + k_x
                            if not (0 <= yy < layer.y_in and 0 <= xx < layer.x_in):
                                continue
                            if avg:
                                if c_in == c_out:
                                    acc += x[yy, xx, c_in]
                            else:
                                acc += x[yy, xx, c_in] * params.weights[c_out, k_y, k_x, c_in]
                if avg:
                    acc /= layer.k_x * layer.k_y
                if layer.act_fn is Activation.BINARY_SIGN:
                    thr = params.bias[c_out] if layer.has_bias else 0.0
                    out[y_out, x_out, c_out] = 1.0 if acc >= thr else -1.0
                    continue
                if layer.has_bias:
                    acc += params.bias[c_out]
                if layer.act_fn is Activation.RELU:
                    acc = max(0.0, acc)
                out[y_out, x_out, c_out] = acc
    return out


def run_layer_ref(layer: LayerSpec, params, x, mode: Mode | str = Mode.QUANTIZED):
    """One layer. Quantized mode takes and returns QTensor; Real mode float arrays."""
    if Mode(mode) is Mode.QUANTIZED:
        return run_layer_quantized(layer, params, x)
    return run_layer_real(layer, params, x)


def run_network_ref(graph: ModelGraph, params, x, mode: Mode | str = Mode.QUANTIZED,
                    return_all: bool = False):
    """Layer-wise execution, each layer completed before the next starts.

    In Real mode ``params`` may be a ParamSet (decoded with the graph formats)
    or a list of RealLayerParams, and ``x`` a QTensor or float array.
    """
    mode = Mode(mode)
    if mode is Mode.QUANTIZED:
        if x.fmt != graph.input_fmt:
            raise ValueError(f"input format {x.fmt} does not match network input {graph.input_fmt}")
        layer_params = params.layers
    else:
        layer_params = real_params(graph, params) if isinstance(params, ParamSet) else params
        if isinstance(x, QTensor):
            x = x.decode()
    outs = []
    for layer, p in zip(graph.layers, layer_params):
        x = run_layer_ref(layer, p, x, mode)
        outs.append(x)
    return outs if return_all else x


def quantization_divergence(graph: ModelGraph, params_real, params_quant: ParamSet,
                            inputs) -> list[float]:
    """Per-layer max |real - decoded quantized| over the sample inputs.

    ``params_real`` is a ParamSet or a list of RealLayerParams (e.g. the float
    weights before quantization). An empty sample set yields an empty report.
    """
    inputs = list(inputs)
    if not inputs:
        return []
    worst = [0.0] * len(graph.layers)
    for x in inputs:
        real = run_network_ref(graph, params_real, x.decode(), Mode.REAL, return_all=True)
        quant = run_network_ref(graph, params_quant, x, Mode.QUANTIZED, return_all=True)
        for i, (r, q) in enumerate(zip(real, quant)):
            worst[i] = max(worst[i], float(np.max(np.abs(r - q.decode()))) if r.size else 0.0)
    return worst
