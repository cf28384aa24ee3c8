"""Sparse-table range minimum/maximum over a static float array."""

from __future__ import annotations

import numpy as np


class SparseTable:
    """O(1) range queries after O(n log n) preprocessing.

    ``query(lo, hi)`` is inclusive on both ends and vectorized; callers must
    pass ``lo <= hi``.
    """

    def __init__(self, values, op: str = "min"):
        values = np.asarray(values, dtype=float)
        if op not in ("min", "max"):
            raise ValueError("op must be 'min' or 'max'")
        self._fn = np.minimum if op == "min" else np.maximum
        self.levels = [values]
        k = 1
        while 2 * k <= values.size:
            prev = self.levels[-1]
            self.levels.append(self._fn(prev[: prev.size - k], prev[k:]))
            k *= 2

    def query(self, lo, hi):
        scalar = np.ndim(lo) == 0 and np.ndim(hi) == 0
        lo, hi = np.broadcast_arrays(
            np.atleast_1d(np.asarray(lo, dtype=np.int64)),
            np.atleast_1d(np.asarray(hi, dtype=np.int64)),
        )
        length = np.maximum(hi - lo + 1, 1)
        j = np.floor(np.log2(length)).astype(np.int64)
        # guard against log2 rounding at exact powers of two
        j = np.where((np.int64(1) << (j + 1)) <= length, j + 1, j)
        j = np.where((np.int64(1) << j) > length, j - 1, j)
        out = np.empty(lo.shape, dtype=float)
        for level in np.unique(j).tolist():
            sel = j == level
            arr = self.levels[level]
            out[sel] = self._fn(arr[lo[sel]], arr[hi[sel] - (1 << level) + 1])
        return float(out[0]) if scalar else out


class RangeMinMax:
    def __init__(self, values):
        self.min = SparseTable(values, "min")
        self.max = SparseTable(values, "max")
        self.size = len(values)
