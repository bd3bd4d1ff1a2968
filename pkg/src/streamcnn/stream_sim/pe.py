"""PE group: pe parallel output channels, each multiplying simd window elements per cycle."""
from __future__ import annotations

import numpy as np

from ..balancer import LayerAlloc
from ..fixed_point import (RECIP_FRAC, Accumulator, Activation, FxFormat, apply_activation,
                           avgpool_reciprocal, pack_bits, xnor_popcount_dot)
from ..model_ir import LayerKind, LayerParams, LayerSpec

BINARY_PATHS = ("xnor", "arith")


def weight_memory(layer: LayerSpec, alloc: LayerAlloc, weights: np.ndarray) -> np.ndarray:
    """Per-PE weight memories, shape (pe, groups * kernel_cycles, simd).

    PE p serves output channels p, p + pe, p + 2 pe, ...; address g * kc + w
    holds the simd weights of kernel word w for channel g * pe + p. Slots of
    channels past c_out stay zero and are never emitted.
    """
    pe, simd, K = alloc.pe, alloc.simd, layer.kernel_elems
    kc = K // simd
    groups = -(-layer.c_out // pe)
    flat = weights.reshape(layer.c_out, K)
    mem = np.zeros((pe, groups * kc, simd), dtype=np.int64)
    for c in range(layer.c_out):
        g, p = divmod(c, pe)
        mem[p, g * kc:(g + 1) * kc, :] = flat[c].reshape(kc, simd)
    return mem


def avgpool_weights(layer: LayerSpec) -> np.ndarray:
    """Unit weights on the matching channel, zero elsewhere."""
    w = np.zeros((layer.c_out, layer.k_y, layer.k_x, layer.c_in), dtype=np.int64)
    for c in range(layer.c_out):
        w[c, :, :, c] = 1
    return w


class PEGroup:
    def __init__(self, layer: LayerSpec, alloc: LayerAlloc, params: LayerParams,
                 in_fmt: FxFormat, binary_path: str = "xnor"):
        if binary_path not in BINARY_PATHS:
            raise ValueError(f"binary_path must be one of {BINARY_PATHS}")
        self.layer = layer
        self.in_fmt = in_fmt
        self.pe, self.simd = alloc.pe, alloc.simd
        self.kc = layer.kernel_elems // alloc.simd
        self.groups = -(-layer.c_out // alloc.pe)
        self.avg = layer.kind is LayerKind.AVGPOOL
        raw_w = avgpool_weights(layer) if self.avg else params.weights
        self.mem = weight_memory(layer, alloc, raw_w)
        self.bias = params.bias.tolist() if layer.has_bias else None
        self.w_binary = layer.binary_weights
        self.a_binary = in_fmt.is_binary
        w_frac = layer.w_fmt.frac_bits if layer.has_weights else 0
        self.frac = in_fmt.frac_bits + w_frac
        self.recip = avgpool_reciprocal(layer.k_x * layer.k_y) if self.avg else 0
        if self.w_binary and self.a_binary and binary_path == "xnor":
            self.mode = "xnor"
            self.packed = [[pack_bits(self.mem[p, a]) for a in range(self.mem.shape[1])]
                           for p in range(self.pe)]
        elif self.w_binary and binary_path == "xnor":
            self.mode = "signadd"
            self.wsign = self.mem.astype(bool)
        else:
            self.mode = "matmul"
            self.signed_mem = 2 * self.mem - 1 if self.w_binary else self.mem
        self.reset()

    def reset(self):
        self.y_out = self.x_out = self.group = self.word = 0
        self.acc = [0] * self.pe
        self.done = False
        self.first_mac = None
        self.last_mac = None
        self._codes = self._valid = None

    def group_size(self) -> int:
        return min(self.pe, self.layer.c_out - self.group * self.pe)

    def load_window(self, codes, valid):
        self._codes, self._valid = codes, valid

    def mac_step(self) -> None:
        """One cycle: every PE multiplies one simd word and accumulates."""
        s0 = self.word * self.simd
        s1 = s0 + self.simd
        addr = self.group * self.kc + self.word
        if self.mode == "xnor":
            a = pack_bits(self._codes[s0:s1].tolist())
            m = pack_bits(self._valid[s0:s1].tolist())
            for p in range(self.pe):
                self.acc[p] += xnor_popcount_dot(a, self.packed[p][addr], self.simd, m)
            return
        if self.a_binary:
            x = np.where(self._valid[s0:s1], 2 * self._codes[s0:s1] - 1, 0)
        else:
            x = self._codes[s0:s1]
        if self.mode == "signadd":
            part = np.where(self.wsign[:, addr, :], x, -x).sum(axis=1)
        else:
            part = self.signed_mem[:, addr, :] @ x
        for p in range(self.pe):
            self.acc[p] += int(part[p])

    def finish_group(self) -> list[int]:
        """Bias, activation and rescale for the channels of the current group."""
        lay = self.layer
        codes = []
        for p in range(self.group_size()):
            c = self.group * self.pe + p
            if self.avg:
                acc = Accumulator(self.acc[p] * self.recip, self.frac + RECIP_FRAC)
            else:
                acc = Accumulator(self.acc[p], self.frac)
            if lay.act_fn is Activation.BINARY_SIGN:
                codes.append(apply_activation(acc, lay.act_fn, lay.a_fmt,
                                              self.bias[c] if self.bias else 0))
            else:
                if self.bias:
                    acc = Accumulator(acc.value + self.bias[c], acc.frac)
                codes.append(apply_activation(acc, lay.act_fn, lay.a_fmt).raw)
        self.acc = [0] * self.pe
        return codes

    def out_index(self, c: int) -> int:
        lay = self.layer
        return (self.y_out * lay.x_out + self.x_out) * lay.c_out + c

    def advance(self) -> bool:
        """Move to the next word/group/position. Returns True when an output line ended."""
        self.word += 1
        if self.word < self.kc:
            return False
        self.word = 0
        self.group += 1
        if self.group < self.groups:
            return False
        self.group = 0
        self._codes = None
        self.x_out += 1
        if self.x_out < self.layer.x_out:
            return False
        self.x_out = 0
        self.y_out += 1
        if self.y_out >= self.layer.y_out:
            self.done = True
        return True
