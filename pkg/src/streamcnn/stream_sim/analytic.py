"""Analytic timing: a row-level recurrence over the same cycle rules as the simulator.

For every layer the start S(y) and end F(y) of output line y follow

    S(y) = max(F(y-1), A(last input row of the window) + 1)
    F(y) = S(y) + x_out * ceil(c_out/pe) * K/simd

where A(r) is the cycle in which input row r was fully accepted. Rows are
accepted only once the line buffer has room, which depends on the layer's own
F, and a producer whose output FIFO cannot absorb a line waits for the
consumer to admit it. Backpressure bounds are refined in passes until they
stop moving. Single-layer networks come out exact; with
several layers the element-level interleaving inside a row is approximated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .. import sizing
from ..balancer import AllocationPlan
from ..model_ir import LayerKind, ModelGraph, op_count

MAX_PASSES = 200


def _ceil(a: int, b: int) -> int:
    return -(-a // b)


@dataclass
class AnalyticReport:
    total_cycles: int
    clock_mhz: float
    ops: int
    cycles_per_position: list[int] = field(default_factory=list)
    layer_cycles: list[int] = field(default_factory=list)
    bottleneck: int = 0
    fill_cycles: float = 0.0
    steady_state_cycles: float = 0.0

    @property
    def latency_s(self) -> float:
        return self.total_cycles / (self.clock_mhz * 1e6)

    @property
    def latency_ms(self) -> float:
        return self.latency_s * 1e3

    @property
    def throughput_gops(self) -> float:
        return self.ops / self.latency_s / 1e9

    def to_dict(self) -> dict:
        return {"total_cycles": self.total_cycles, "clock_mhz": self.clock_mhz, "ops": self.ops,
                "latency_ms": self.latency_ms, "throughput_gops": self.throughput_gops,
                "cycles_per_position": self.cycles_per_position,
                "layer_cycles": self.layer_cycles, "bottleneck_layer": self.bottleneck + 1,
                "fill_cycles": self.fill_cycles, "steady_state_cycles": self.steady_state_cycles}


def _last_row(layer, y):
    return min(y * layer.s_y - layer.p_y + layer.k_y - 1, layer.y_in - 1)


def _admission(layer, F):
    """First cycle each input row may enter the line buffer, given the line ends F."""
    rows = sizing.window_rows(layer)
    out, y = [], 0
    for r in range(layer.y_in):
        while max(0, y * layer.s_y - layer.p_y) + rows <= r:
            y += 1
        out.append(0 if y == 0 else F[y - 1])
    return out


def _conv_lines(layer, alloc, width, ready, end_floor):
    """S and F of every output line of a windowed layer.

    ``ready[r]`` is the first cycle the upstream FIFO holds all of input row r
    (None for the injector, which always has data). ``end_floor[y]`` is a lower
    bound on F(y) from output backpressure. A row is admitted to the line
    buffer when an earlier line ends, and that line always precedes the first
    line needing the row, so a single pass in line order suffices.
    """
    E = layer.x_in * layer.c_in
    rows = sizing.window_rows(layer)
    per_line = layer.x_out * _ceil(layer.c_out, alloc.pe) * (layer.kernel_elems // alloc.simd)
    A, S, F = [], [], []
    t_reset = n_since = 0
    admit = 0                       # first line whose buffer allowance admits the next row
    for y in range(layer.y_out):
        need = _last_row(layer, y)
        while len(A) <= need:
            r = len(A)
            while max(0, admit * layer.s_y - layer.p_y) + rows <= r:
                admit += 1
            g = 0 if admit == 0 else F[admit - 1]
            if ready is None:
                if not A or g > A[-1]:
                    t_reset, n_since = g, 0
                n_since += E
                A.append(t_reset + _ceil(n_since, width) - 1)
            else:
                prev = A[-1] + 1 if A else 0
                A.append(max(ready[r], max(g, prev) + _ceil(E, width) - 1))
        s = max(F[-1] if F else 0, A[need] + 1, end_floor[y] - per_line)
        S.append(s)
        F.append(s + per_line)
    return S, F


def _fc_lines(layer, alloc, elem_time):
    groups = _ceil(layer.c_out, alloc.pe)
    kc = layer.kernel_elems // alloc.simd
    t = 0
    for w in range(kc):
        t = max(t, elem_time((w + 1) * alloc.simd - 1) + 1) + 1
    return [t - kc], [t + (groups - 1) * kc]


def throughput_model(graph: ModelGraph, plan: AllocationPlan, clock_mhz: float = 100.0,
                     input_width: int = 1, fifo_depth: int | None = None) -> AnalyticReport:
    plan.check(graph)
    layers = graph.layers
    n = len(layers)
    floors = [[0] * l.y_out for l in layers]
    for _ in range(MAX_PASSES):
        ready = up_S = up_F = None
        lines = []
        for i, (layer, alloc) in enumerate(zip(layers, plan.layers)):
            width = input_width if i == 0 else plan.layers[i - 1].pe
            if layer.kind is LayerKind.FC:
                if i == 0:
                    def elem_time(e, W=input_width):
                        return e // W
                else:
                    def elem_time(e, S=up_S, F=up_F, E=layer.x_in * layer.c_in):
                        r, j = divmod(e, E)
                        return S[r] + _ceil((j + 1) * (F[r] - S[r]), E) + 1
                S, F = _fc_lines(layer, alloc, elem_time)
            else:
                S, F = _conv_lines(layer, alloc, width, ready, floors[i])
            lines.append((S, F))
            ready, up_S, up_F = F, S, F
        # backpressure: the part of a line that exceeds the FIFO depth can only
        # leave once the consumer admits that row into its line buffer
        new_floors = [[0] * l.y_out for l in layers]
        for i in range(n - 1):
            nxt = layers[i + 1]
            excess = max(0, layers[i].x_out * layers[i].c_out - sizing.fifo_depth(graph, i, fifo_depth))
            if nxt.kind is LayerKind.FC or not excess:
                continue
            admit = _admission(nxt, lines[i + 1][1])
            new_floors[i] = [a + _ceil(excess, plan.layers[i].pe) for a in admit]
        if new_floors == floors:
            break
        floors = new_floors
    F_all = [F for _, F in lines]
    total = F_all[-1][-1] + 1

    cpp, lc = [], []
    for layer, alloc in zip(layers, plan.layers):
        c = _ceil(layer.c_out, alloc.pe) * (layer.kernel_elems // alloc.simd)
        cpp.append(c)
        lc.append(c * layer.positions)
    fill = Fraction(0)
    for i, (layer, alloc) in enumerate(zip(layers, plan.layers)):
        if layer.kind is LayerKind.FC:
            first = alloc.simd
        else:
            first = (_last_row(layer, 0) + 1) * layer.x_in * layer.c_in
        if i == 0:
            rate = Fraction(input_width)
        else:
            up, ua = layers[i - 1], plan.layers[i - 1]
            rate = Fraction(ua.pe * ua.simd, up.kernel_elems)
        fill += first / rate
    bottleneck = max(range(n), key=lambda i: lc[i])
    return AnalyticReport(total, clock_mhz, op_count(graph)["ops"], cpp, lc, bottleneck,
                          float(fill), float(fill) + lc[bottleneck])
