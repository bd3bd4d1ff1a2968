from __future__ import annotations

from collections import deque


class StreamFifo:
    """Bounded FIFO of (stream index, code) pairs between two blocks."""

    def __init__(self, capacity: int, name: str = "", record: bool = False):
        if capacity < 1:
            raise ValueError("FIFO capacity must be positive")
        self.capacity = capacity
        self.name = name
        self._q: deque = deque()
        self.pushed = 0
        self.popped = 0
        self.max_occupancy = 0
        self.trace: list[int] | None = [] if record else None

    def __len__(self):
        return len(self._q)

    @property
    def occupancy(self) -> int:
        return len(self._q)

    def space(self) -> int:
        return self.capacity - len(self._q)

    def push(self, items) -> None:
        if len(self._q) + len(items) > self.capacity:
            raise OverflowError(f"FIFO {self.name} overflow")
        self._q.extend(items)
        self.pushed += len(items)
        self.max_occupancy = max(self.max_occupancy, len(self._q))
        if self.trace is not None:
            self.trace.extend(idx for idx, _ in items)

    def pop(self, n: int) -> list:
        q = self._q
        out = [q.popleft() for _ in range(n)]
        self.popped += n
        return out
