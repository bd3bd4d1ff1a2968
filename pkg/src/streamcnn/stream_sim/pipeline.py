"""Cycle-stepped simulation of the layer pipeline.

Cycle rules:
  * the injector offers up to ``input_width`` input elements to layer 1;
  * every block accepts up to its link width from the upstream FIFO (the
    producer's pe count, since a group of pe outputs leaves in one cycle);
  * every PE group performs one pe x simd MAC step when its operands are
    resident; bias, activation and emission happen in the cycle of the last
    MAC of a kernel, which needs FIFO space for the whole group;
  * the collector drains up to pe_last outputs per cycle.
Each cycle first snapshots occupancies and received counts and all decisions
use the snapshot, so block evaluation order cannot change results or timing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import sizing
from ..balancer import AllocationPlan
from ..errors import DeadlockError, PlanMismatchError
from ..fixed_point import QTensor
from ..model_ir import LayerKind, LayerSpec, ModelGraph, ParamSet, op_count
from .fifo import StreamFifo
from .pe import PEGroup
from .window import VectorBuffer, WindowBuffer


@dataclass
class LayerTiming:
    busy: int = 0
    stall_in: int = 0
    stall_out: int = 0
    first_mac: int | None = None
    last_mac: int | None = None

    @property
    def active(self) -> int:
        return self.busy + self.stall_in + self.stall_out

    @property
    def input_stall_fraction(self) -> float:
        return self.stall_in / self.active if self.active else 0.0

    def to_dict(self) -> dict:
        return {"busy": self.busy, "stall_in": self.stall_in, "stall_out": self.stall_out,
                "first_mac": self.first_mac, "last_mac": self.last_mac}


@dataclass
class TimingReport:
    total_cycles: int
    clock_mhz: float
    ops: int
    layers: list[LayerTiming] = field(default_factory=list)

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
                "layers": [t.to_dict() for t in self.layers]}


@dataclass
class LayerBlock:
    layer: LayerSpec
    window: WindowBuffer | VectorBuffer
    pe: PEGroup
    out_fifo: StreamFifo


@dataclass
class PipelineSim:
    graph: ModelGraph
    plan: AllocationPlan
    blocks: list[LayerBlock]
    input_width: int = 1
    clock_mhz: float = 100.0

    def reset(self):
        for b in self.blocks:
            b.window.reset()
            b.pe.reset()
            b.out_fifo = StreamFifo(b.out_fifo.capacity, b.out_fifo.name,
                                    record=b.out_fifo.trace is not None)


def build_pipeline(graph: ModelGraph, plan: AllocationPlan, params: ParamSet, *,
                   fifo_depth: int | None = None, input_width: int = 1,
                   binary_path: str = "xnor", clock_mhz: float = 100.0,
                   record: bool = False) -> PipelineSim:
    plan.check(graph)
    if len(params) != len(graph.layers):
        raise PlanMismatchError("parameter set does not match the graph")
    if input_width < 1:
        raise ValueError("input_width must be positive")
    blocks = []
    for i, (layer, alloc, p) in enumerate(zip(graph.layers, plan.layers, params.layers)):
        in_fmt = graph.input_format(i)
        buf_cls = VectorBuffer if layer.kind is LayerKind.FC else WindowBuffer
        fifo = StreamFifo(sizing.fifo_depth(graph, i, fifo_depth), f"L{i + 1}.out", record)
        blocks.append(LayerBlock(layer, buf_cls(layer, in_fmt),
                                 PEGroup(layer, alloc, p, in_fmt, binary_path), fifo))
    return PipelineSim(graph, plan, blocks, input_width, clock_mhz)


def window_sequence(layer: LayerSpec):
    """Input coordinates (x, y, c, padded) read by each window, output positions row-major."""
    for y_out in range(layer.y_out):
        for x_out in range(layer.x_out):
            for ky in range(layer.k_y):
                for kx in range(layer.k_x):
                    for c in range(layer.c_in):
                        x = x_out * layer.s_x - layer.p_x + kx
                        y = y_out * layer.s_y - layer.p_y + ky
                        padded = not (0 <= x < layer.x_in and 0 <= y < layer.y_in)
                        yield (x, y, c, padded)


def run(sim: PipelineSim, x: QTensor, max_cycles: int | None = None):
    graph = sim.graph
    if tuple(x.data.shape) != graph.input_shape or x.fmt != graph.input_fmt:
        raise ValueError(f"input {x.data.shape} {x.fmt} does not match network input "
                         f"{graph.input_shape} {graph.input_fmt}")
    sim.reset()
    blocks = sim.blocks
    n_layers = len(blocks)
    timing = [LayerTiming() for _ in blocks]
    data = x.data.ravel().tolist()
    n_in = len(data)
    last = graph.layers[-1]
    n_out = last.out_elems
    out = np.zeros(n_out, dtype=np.int64)
    width = [sim.input_width] + [b.pe.pe for b in blocks]
    patience = (max(b.out_fifo.capacity for b in blocks) + max(l.kernel_elems for l in graph.layers)
                + 16)

    injected = collected = cycle = idle = 0
    total_cycles = 0
    while collected < n_out:
        recv0 = [b.window.received for b in blocks]
        accept0 = [b.window.acceptable() for b in blocks]
        occ0 = [len(b.out_fifo) for b in blocks]
        progress = False

        n = min(width[0], n_in - injected, accept0[0])
        if n > 0:
            blocks[0].window.write([(injected + k, data[injected + k]) for k in range(n)])
            injected += n
            progress = True
        for i in range(1, n_layers):
            n = min(width[i], occ0[i - 1], accept0[i])
            if n > 0:
                blocks[i].window.write(blocks[i - 1].out_fifo.pop(n))
                progress = True

        for i, b in enumerate(blocks):
            pe, t = b.pe, timing[i]
            if pe.done:
                continue
            started = t.first_mac is not None
            if not b.window.ready(pe.y_out, (pe.word + 1) * pe.simd, recv0[i]):
                if started:
                    t.stall_in += 1
                continue
            final = pe.word == pe.kc - 1
            if final and b.out_fifo.capacity - occ0[i] < pe.group_size():
                if started:
                    t.stall_out += 1
                continue
            if pe._codes is None:
                pe.load_window(*b.window.gather(pe.y_out, pe.x_out))
            pe.mac_step()
            t.busy += 1
            if not started:
                t.first_mac = cycle
            if final:
                c0 = pe.group * pe.pe
                codes = pe.finish_group()
                b.out_fifo.push([(pe.out_index(c0 + p), code) for p, code in enumerate(codes)])
            if pe.advance():
                b.window.release(pe.y_out)
            if pe.done:
                t.last_mac = cycle
            progress = True

        n = min(width[-1], occ0[-1])
        if n > 0:
            for idx, code in blocks[-1].out_fifo.pop(n):
                if idx != collected:
                    raise AssertionError(f"output order violated: got {idx}, expected {collected}")
                out[idx] = code
                collected += 1
            progress = True
            total_cycles = cycle + 1

        idle = 0 if progress else idle + 1
        if idle > patience:
            state = "; ".join(
                f"{b.out_fifo.name} {len(b.out_fifo)}/{b.out_fifo.capacity}"
                + ("" if b.pe.done else f" (group of {b.pe.group_size()} waiting)")
                for b in blocks)
            raise DeadlockError(f"no progress for {idle} cycles at cycle {cycle}: {state}")
        cycle += 1
        if max_cycles is not None and cycle > max_cycles:
            raise DeadlockError(f"simulation exceeded {max_cycles} cycles")

    result = QTensor(out.reshape(last.y_out, last.x_out, last.c_out), last.a_fmt)
    report = TimingReport(total_cycles, sim.clock_mhz, op_count(graph)["ops"], timing)
    return result, report
