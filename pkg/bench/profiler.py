"""
Per-operator wall-clock attribution.

A Profiler is passed to `Model.forward`; every tagged operator runs inside
`profiler.section(operator, layer)`. Time spent in the same (operator,
layer) pair during one run is summed, and each finished run becomes one
sample per pair.
"""

import time
from contextlib import contextmanager
from typing import Dict, Iterator, List, Tuple

Key = Tuple[str, str]


class Profiler:
    def __init__(self):
        self.samples: Dict[Key, List[int]] = {}
        self._current: Dict[Key, int] = {}
        self._depth = 0

    @contextmanager
    def section(self, operator: str, layer: str) -> Iterator[None]:
        # only the outermost section is attributed
        self._depth += 1
        start = time.perf_counter_ns()
        try:
            yield
        finally:
            elapsed = time.perf_counter_ns() - start
            self._depth -= 1
            if self._depth == 0:
                key = (operator, layer)
                self._current[key] = self._current.get(key, 0) + elapsed

    def finish_run(self) -> None:
        """Close the current run, recording one sample per operator seen in it."""
        for key, elapsed in self._current.items():
            self.samples.setdefault(key, []).append(elapsed)
        self._current = {}

    def discard_run(self) -> None:
        self._current = {}

    def keys(self) -> List[Key]:
        """Operators in first-seen order, which follows the forward pass."""
        return list(self.samples)
