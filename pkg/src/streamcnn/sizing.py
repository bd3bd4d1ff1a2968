"""Buffer sizes shared by the resource model and the simulator."""
from __future__ import annotations

from .model_ir import LayerKind, LayerSpec, ModelGraph


def window_rows(layer: LayerSpec) -> int:
    # k_y rows for the current output line plus s_y rows filling for the next one
    return layer.k_y + layer.s_y


def window_buffer_elems(layer: LayerSpec) -> int:
    """Line-buffer capacity; FC layers hold one full input vector instead."""
    if layer.kind is LayerKind.FC:
        return layer.kernel_elems
    return window_rows(layer) * layer.x_in * layer.c_in


def fifo_depth(graph: ModelGraph, i: int, depth: int | None = None) -> int:
    """Depth of the FIFO behind layer ``i``: twice the consumer's c_in by default."""
    if depth is not None:
        if depth < 1:
            raise ValueError("FIFO depth must be positive")
        return depth
    return 2 * graph.layers[i].c_out


def fifo_bits(graph: ModelGraph, i: int, depth: int | None = None) -> int:
    return fifo_depth(graph, i, depth) * graph.layers[i].a_fmt.total_bits


def window_buffer_bits(graph: ModelGraph, i: int) -> int:
    return window_buffer_elems(graph.layers[i]) * graph.input_format(i).total_bits
