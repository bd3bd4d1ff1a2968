"""Random networks, parameters and plans for the equivalence and timing tests."""
from __future__ import annotations

import numpy as np

from streamcnn.balancer import AllocationPlan, divisors
from streamcnn.errors import ArchitectureError
from streamcnn.fixed_point import BINARY, Activation, FxFormat, QTensor
from streamcnn.model_ir import LayerKind, LayerParams, LayerSpec, ModelGraph, ParamSet

BITS = (1, 4, 8, 16)


def random_format(rng, bits=None) -> FxFormat:
    bits = int(rng.choice(BITS)) if bits is None else bits
    if bits == 1:
        return BINARY
    return FxFormat(bits, int(rng.integers(0, bits)))


def _random_layer(rng, x, y, c, last: bool, max_c: int) -> LayerSpec | None:
    kind = rng.choice(["Conv", "Conv", "Conv", "AvgPool", "FC"], p=[.3, .2, .2, .15, .15])
    a_fmt = random_format(rng)
    act = Activation.BINARY_SIGN if a_fmt.is_binary else Activation(rng.choice(["None", "ReLU"]))
    if kind == "FC":
        c_out = int(rng.integers(1, max_c + 1))
        return LayerSpec(LayerKind.FC, x, y, c, x, y, 1, 1, 0, 0, c_out, random_format(rng),
                         a_fmt, act, bool(rng.integers(0, 2)))
    k = int(rng.integers(1, 4)) if kind == "Conv" else int(rng.integers(2, 4))
    s = int(rng.integers(1, 3))
    p = int(rng.integers(0, 2)) if k > 1 else 0
    if kind == "AvgPool":
        if act is Activation.RELU:
            act = Activation.NONE
        layer = LayerSpec(LayerKind.AVGPOOL, x, y, c, k, k, s, s, p, p, c, FxFormat(8, 0),
                          a_fmt, act, False)
    else:
        c_out = int(rng.integers(1, max_c + 1))
        layer = LayerSpec(LayerKind.CONV, x, y, c, k, k, s, s, p, p, c_out, random_format(rng),
                          a_fmt, act, bool(rng.integers(0, 2)))
    try:
        layer.validate()
    except ArchitectureError:
        return None
    return layer


def random_graph(rng, max_layers=4, max_dim=16, max_c=8) -> ModelGraph:
    while True:
        x = int(rng.integers(1, max_dim + 1))
        y = int(rng.integers(1, max_dim + 1))
        c = int(rng.integers(1, max_c + 1))
        in_fmt = random_format(rng)
        n = int(rng.integers(1, max_layers + 1))
        layers = []
        cx, cy, cc = x, y, c
        for i in range(n):
            layer = None
            for _ in range(20):
                layer = _random_layer(rng, cx, cy, cc, i == n - 1, max_c)
                if layer is not None:
                    break
            if layer is None:
                break
            layers.append(layer)
            cx, cy, cc = layer.x_out, layer.y_out, layer.c_out
        if len(layers) != n:
            continue
        graph = ModelGraph("random", in_fmt, tuple(layers))
        try:
            return graph.validate()
        except ArchitectureError:
            continue


def random_params(rng, graph: ModelGraph) -> ParamSet:
    out = []
    for i, layer in enumerate(graph.layers):
        if layer.has_weights:
            f = layer.w_fmt
            w = rng.integers(f.min_raw, f.max_raw + 1, size=layer.weight_shape)
        else:
            w = np.zeros(0, dtype=np.int64)
        in_fmt = graph.input_format(i)
        w_frac = layer.w_fmt.frac_bits if layer.has_weights else 0
        span = 1 << (in_fmt.frac_bits + w_frac + 2)
        if layer.act_fn is Activation.BINARY_SIGN:
            span = max(2, layer.kernel_elems)
        b = rng.integers(-span, span + 1, size=layer.bias_count)
        out.append(LayerParams(np.asarray(w, dtype=np.int64), np.asarray(b, dtype=np.int64)))
    return ParamSet(out).check(graph)


def random_input(rng, graph: ModelGraph) -> QTensor:
    f = graph.input_fmt
    return QTensor(rng.integers(f.min_raw, f.max_raw + 1, size=graph.input_shape), f)


def random_plan(rng, graph: ModelGraph) -> AllocationPlan:
    pairs = []
    for layer in graph.layers:
        pe = int(rng.integers(1, layer.c_out + 1))
        simd = int(rng.choice(divisors(layer.kernel_elems)))
        pairs.append((pe, simd))
    return AllocationPlan.from_pairs(graph, pairs)


def balanced_network(rng, fmt=FxFormat(8, 4)):
    """Small conv chain plus a plan whose snapped lane counts hit their shares exactly.

    Layer 1 is kept at or below half an element per cycle so the single-element
    input stream is never what limits it.
    """
    from fractions import Fraction
    import math

    from streamcnn.balancer import compute_ratio, mac_shares, snap_allocation

    while True:
        x = int(rng.choice([8, 12, 16]))
        c = int(rng.integers(1, 5))
        layers = []
        for _ in range(int(rng.integers(2, 4))):
            k, s = int(rng.choice([1, 3])), 1
            if rng.random() < 0.25 and x % 2 == 0 and x > 4:
                k, s = 2, 2
            p = (k - 1) // 2 if s == 1 else 0
            c_out = int(rng.choice([2, 4, 8, 16]))
            layers.append(LayerSpec(LayerKind.CONV, x, x, c, k, k, s, s, p, p, c_out, fmt, fmt,
                                    Activation.RELU, True))
            x, c = layers[-1].x_out, c_out
        graph = ModelGraph("balanced", fmt, tuple(layers)).validate()
        shares = mac_shares(graph)
        den = math.lcm(*[f.denominator for f in shares])
        for mult in range(1, 20):
            targets = [int(den * mult * f) for f in shares]
            pairs = [snap_allocation(l, t) for l, t in zip(layers, targets)]
            if not all(pe * sd == t and l.c_out % pe == 0
                       for (pe, sd), t, l in zip(pairs, targets, layers)):
                continue
            plan = AllocationPlan.from_pairs(graph, pairs)
            first = layers[0]
            rate = Fraction(plan.layers[0].mac_units, first.kernel_elems) / compute_ratio(first)
            if rate <= Fraction(1, 2):
                return graph, plan
            break
