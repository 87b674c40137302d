"""Striped, quiescently consistent counter for the root's update count."""

import os
import threading

MAX_STRIPES = 128


def default_stripes():
    n = min(2 * (os.cpu_count() or 1), MAX_STRIPES)
    return 1 << max(0, (n - 1).bit_length())


class MultiCounter:
    """Sum of ``stripes`` independently incremented cells.

    ``read()`` is exact when no increment is in flight and otherwise lies
    between the increments completed before it started and those issued before
    it returned.
    """

    __slots__ = ("_cells", "_locks", "_mask", "_local")

    def __init__(self, stripes=None):
        if stripes is None:
            stripes = default_stripes()
        if stripes < 1:
            raise ValueError("stripes must be >= 1")
        stripes = 1 << (stripes - 1).bit_length()
        self._cells = [0] * stripes
        self._locks = [threading.Lock() for _ in range(stripes)]
        self._mask = stripes - 1
        self._local = threading.local()

    @property
    def stripes(self):
        return len(self._cells)

    def _stripe(self):
        try:
            return self._local.stripe
        except AttributeError:
            # Fibonacci hash of the thread id spreads sequential idents.
            h = (threading.get_ident() * 0x9E3779B97F4A7C15) & (2**64 - 1)
            s = self._local.stripe = (h >> 32) & self._mask
            return s

    def increment(self):
        i = self._stripe()
        with self._locks[i]:
            self._cells[i] += 1

    def read(self):
        return sum(self._cells)

    def cells(self):
        return list(self._cells)
