"""Global multiply-add accounting for the numeric kernels.

Counting is off by default; wrap a region in `FlopCounter.scope(...)` (or call
`enable()`) and the heavy ops (matmul, conv, pixel-dependent filtering) report
2 * MAC floating point operations under the innermost active scope.
"""

from __future__ import annotations

from collections import defaultdict
from contextlib import contextmanager


class FlopCounter:
    """Accumulates FLOPs per operation kind and per named scope."""

    def __init__(self):
        self.enabled = False
        self.totals = defaultdict(int)
        self.by_scope = defaultdict(lambda: defaultdict(int))
        self._stack = []

    def reset(self):
        self.totals.clear()
        self.by_scope.clear()
        self._stack.clear()

    def add(self, kind: str, flops: int):
        if not self.enabled:
            return
        self.totals[kind] += flops
        for name in self._stack:
            self.by_scope[name][kind] += flops

    @contextmanager
    def scope(self, name: str):
        prev = self.enabled
        self.enabled = True
        self._stack.append(name)
        try:
            yield self
        finally:
            self._stack.pop()
            self.enabled = prev

    def scope_total(self, name: str) -> int:
        return sum(self.by_scope[name].values())


#: process-wide counter used by the ops; tests may swap it out
counter = FlopCounter()
