"""Sliding-window generators: the line buffer for Conv/AvgPool and the FC vector buffer."""
from __future__ import annotations

import numpy as np

from ..fixed_point import FxFormat
from ..model_ir import LayerSpec
from ..sizing import window_rows


def kernel_offsets(layer: LayerSpec):
    """Per kernel element (channel fastest, then k_x, then k_y): row offset, column offset, channel."""
    ky, kx, c = np.meshgrid(np.arange(layer.k_y), np.arange(layer.k_x), np.arange(layer.c_in),
                            indexing="ij")
    return ky.ravel(), kx.ravel(), c.ravel()


class WindowBuffer:
    """Circular storage of k_y + s_y input rows.

    An element is accepted only while its row fits behind the oldest row the
    current output line still needs, so the storage never exceeds the
    configured rows. Windows are read once every row they touch is complete.
    """

    def __init__(self, layer: LayerSpec, in_fmt: FxFormat):
        self.layer = layer
        self.in_fmt = in_fmt
        self.rows = window_rows(layer)
        self.row_len = layer.x_in * layer.c_in
        self.capacity = self.rows * self.row_len
        dy, dx, c = kernel_offsets(layer)
        self._dy = dy
        # per output column: flat column index inside a row and x validity
        self._cols, self._xvalid = [], []
        for x_out in range(layer.x_out):
            xx = x_out * layer.s_x - layer.p_x + dx
            valid = (xx >= 0) & (xx < layer.x_in)
            self._cols.append(np.where(valid, xx, 0) * layer.c_in + c)
            self._xvalid.append(valid)
        self.reset()

    def reset(self):
        self.store = np.zeros((self.rows, self.row_len), dtype=np.int64)
        self.received = 0
        self.base = 0          # oldest input row still needed
        self.done = False

    def acceptable(self) -> int:
        total = self.layer.in_elems
        if self.done:
            return total - self.received
        return min(total, (self.base + self.rows) * self.row_len) - self.received

    def write(self, items) -> None:
        for idx, code in items:
            if idx != self.received:
                raise AssertionError(f"stream order violated: got {idx}, expected {self.received}")
            row, col = divmod(idx, self.row_len)
            self.store[row % self.rows, col] = code
            self.received += 1

    def last_row(self, y_out: int) -> int:
        lay = self.layer
        return min(y_out * lay.s_y - lay.p_y + lay.k_y - 1, lay.y_in - 1)

    def ready(self, y_out: int, word_end: int, received: int) -> bool:
        """Whole window resident (every touched row complete)."""
        return received // self.row_len > self.last_row(y_out)

    def release(self, y_out: int) -> None:
        """Output line ``y_out`` is next; rows above its window may be overwritten."""
        lay = self.layer
        if y_out >= lay.y_out:
            self.done = True
        else:
            self.base = max(self.base, y_out * lay.s_y - lay.p_y)

    def gather(self, y_out: int, x_out: int):
        """Window codes in kernel order plus the validity mask (False = padding)."""
        lay = self.layer
        yy = y_out * lay.s_y - lay.p_y + self._dy
        valid = self._xvalid[x_out] & (yy >= 0) & (yy < lay.y_in)
        lo = int(yy[valid].min()) if valid.any() else self.base
        if lo < self.base or lo <= (self.received - 1) // self.row_len - self.rows:
            raise AssertionError("window read touches an overwritten row")
        codes = self.store[np.where(valid, yy, 0) % self.rows, self._cols[x_out]]
        return np.where(valid, codes, 0), valid


class VectorBuffer:
    """FC input: the whole input vector, usable element by element as it arrives."""

    def __init__(self, layer: LayerSpec, in_fmt: FxFormat):
        self.layer = layer
        self.in_fmt = in_fmt
        self.capacity = layer.kernel_elems
        self.reset()

    def reset(self):
        self.store = np.zeros(self.capacity, dtype=np.int64)
        self.received = 0
        self.done = False

    def acceptable(self) -> int:
        return self.capacity - self.received

    def write(self, items) -> None:
        for idx, code in items:
            if idx != self.received:
                raise AssertionError(f"stream order violated: got {idx}, expected {self.received}")
            self.store[idx] = code
            self.received += 1

    def ready(self, y_out: int, word_end: int, received: int) -> bool:
        """The elements of the current SIMD word have arrived."""
        return received >= word_end

    def release(self, y_out: int) -> None:
        if y_out >= 1:
            self.done = True

    def gather(self, y_out: int, x_out: int):
        # the live store: words are read as they arrive
        return self.store, np.ones(self.capacity, dtype=bool)
