"""Linear sketches: CountSketch, a dyadic CountSketch hierarchy, and AMS.

All tables hold signed 64-bit counters. Every hash function is derived from
the master seed, so two sketches with equal seeds and dimensions can be
merged by adding tables, and the result equals the sketch of the
concatenated stream bit for bit.
"""

from __future__ import annotations

import math
import struct
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, InvalidParams, SeedMismatch
from .hashing import HashBank, derive_seed
from .stream import Stream

EXHAUSTIVE_LIMIT = 1 << 16
MAGIC = b"GSKT"
VERSION = 1
_KINDS = {"countsketch": 1, "ams": 2}
_HEADER = struct.Struct("<4sBBIIQQ")


def net_updates(items, deltas) -> tuple[np.ndarray, np.ndarray]:
    """Collapse updates to per-item net deltas (exact int64 sums)."""
    items = np.asarray(items, dtype=np.int64)
    deltas = np.asarray(deltas, dtype=np.int64)
    if items.size == 0:
        return items, deltas
    order = np.argsort(items, kind="stable")
    si = items[order]
    starts = np.flatnonzero(np.r_[True, si[1:] != si[:-1]])
    sums = np.add.reduceat(deltas[order], starts)
    keep = sums != 0
    return si[starts][keep], sums[keep]


def _odd(k: int) -> int:
    return k if k % 2 else k + 1


def countsketch_dims(n: int, lam: float, eps: float, delta: float,
                     bucket_cap: int | None = None) -> tuple[int, int]:
    """Rows ``ceil(4 ln(n/delta))`` (made odd) and buckets ``ceil(8/(lam eps^2))``."""
    if not (0 < lam <= 1 and eps > 0 and 0 < delta < 1):
        raise InvalidParams("CountSketch needs 0 < lam <= 1, eps > 0, 0 < delta < 1")
    rows = _odd(max(1, math.ceil(4 * math.log(max(n, 2) / delta))))
    buckets = max(1, math.ceil(8.0 / (lam * eps * eps)))
    if bucket_cap is not None:
        buckets = min(buckets, max(1, int(bucket_cap)))
    return rows, buckets


@lru_cache(maxsize=16)
def _row_hashes(seed: int, rows: int, buckets: int) -> tuple[HashBank, HashBank]:
    """Per-row bucket (pairwise) and sign (4-wise) hashes."""
    return (
        HashBank("pairwise", [derive_seed(seed, "cs", r, "bucket") for r in range(rows)], buckets),
        HashBank("fourwise", [derive_seed(seed, "cs", r, "sign") for r in range(rows)], 2),
    )


@lru_cache(maxsize=8)
def _item_table(seed: int, rows: int, buckets: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Bucket and sign of every item 0..n for every row (column 0 unused)."""
    xs = np.arange(n + 1, dtype=np.int64)
    hb, hs = _row_hashes(seed, rows, buckets)
    bk = hb(xs)
    sg = hs.signs(xs).astype(np.int8)
    bk.setflags(write=False)
    sg.setflags(write=False)
    return bk, sg


class CountSketch:
    """CountSketch with ``rows`` x ``buckets`` signed counters."""

    kind = "countsketch"

    def __init__(self, n: int, rows: int, buckets: int, seed: int):
        if n < 1 or rows < 1 or buckets < 1:
            raise InvalidParams("CountSketch dimensions must be positive")
        self.n = int(n)
        self.rows = int(rows)
        self.buckets = int(buckets)
        self.seed = int(seed)
        self.table = np.zeros((self.rows, self.buckets), dtype=np.int64)

    @classmethod
    def for_accuracy(cls, n: int, lam: float, eps: float, delta: float, seed: int,
                     bucket_cap: int | None = None) -> "CountSketch":
        rows, buckets = countsketch_dims(n, lam, eps, delta, bucket_cap)
        return cls(n, rows, buckets, seed)

    @property
    def counters(self) -> int:
        return self.rows * self.buckets

    def _hashes(self, items: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.n <= EXHAUSTIVE_LIMIT:
            bk, sg = _item_table(self.seed, self.rows, self.buckets, self.n)
            return bk[:, items], sg[:, items].astype(np.int64)
        hb, hs = _row_hashes(self.seed, self.rows, self.buckets)
        return hb(items), hs.signs(items)

    def update(self, item: int, delta: int) -> "CountSketch":
        return self.update_many([item], [delta])

    def update_many(self, items, deltas) -> "CountSketch":
        items, deltas = net_updates(items, deltas)
        if items.size:
            if items.min() < 1 or items.max() > self.n:
                raise InvalidParams(f"items must lie in [1, {self.n}]")
            bk, sg = self._hashes(items)
            flat = (bk + (np.arange(self.rows, dtype=np.int64) * self.buckets)[:, None]).ravel()
            np.add.at(self.table.reshape(-1), flat, (sg * deltas[None, :]).ravel())
        return self

    def update_stream(self, stream: Stream) -> "CountSketch":
        return self.update_many(stream.items, stream.deltas)

    def estimate(self, item):
        """Median over rows of ``sign * bucket``; vectorized over items."""
        arr = np.atleast_1d(np.asarray(item, dtype=np.int64))
        if arr.size == 0:
            return np.zeros(0, dtype=np.int64)
        bk, sg = self._hashes(arr)
        vals = sg * np.take_along_axis(self.table, bk, axis=1)
        mid = self.rows // 2
        if self.rows % 2:
            est = np.partition(vals, mid, axis=0)[mid]
        else:
            part = np.partition(vals, (mid - 1, mid), axis=0)
            est = (part[mid - 1] + part[mid]) // 2
        return int(est[0]) if np.ndim(item) == 0 else est

    def top(self, k: int, candidates=None) -> list[tuple[int, int]]:
        """The k largest ``|estimate|`` items, ties by smaller index.

        Candidates default to the whole domain; callers may restrict them
        (for example to the items a subsampling level can contain).
        """
        if k < 1:
            raise InvalidParams("k must be at least 1")
        if candidates is None:
            if self.n > EXHAUSTIVE_LIMIT:
                raise InvalidParams("use DyadicCountSketch for candidate recovery when n > 2^16")
            candidates = np.arange(1, self.n + 1, dtype=np.int64)
        cand = np.asarray(candidates, dtype=np.int64)
        est = self.estimate(cand) if cand.size else np.zeros(0, dtype=np.int64)
        order = np.lexsort((cand, -np.abs(est)))[:k]
        return list(zip(cand[order].tolist(), est[order].tolist()))

    def _check_compatible(self, other) -> None:
        if type(other) is not type(self):
            raise DimensionMismatch("cannot merge sketches of different kinds")
        if (self.n, self.rows, self.buckets) != (other.n, other.rows, other.buckets):
            raise DimensionMismatch("sketch dimensions differ")
        if self.seed != other.seed:
            raise SeedMismatch("sketch seeds differ")

    def merge(self, other: "CountSketch") -> "CountSketch":
        self._check_compatible(other)
        out = CountSketch(self.n, self.rows, self.buckets, self.seed)
        out.table = self.table + other.table
        return out

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CountSketch)
            and (self.n, self.rows, self.buckets, self.seed) == (other.n, other.rows, other.buckets, other.seed)
            and np.array_equal(self.table, other.table)
        )

    def to_bytes(self) -> bytes:
        return _pack(self.kind, self.rows, self.buckets, self.seed, self.n, self.table)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CountSketch":
        return load_sketch(blob, expect=cls.kind)


class DyadicCountSketch:
    """One CountSketch per dyadic level for candidate recovery on large domains.

    Level ``l`` sketches the prefix ``(item - 1) >> l``; recovery descends from
    the coarsest level keeping a beam of the heaviest nodes.
    """

    def __init__(self, n: int, rows: int, buckets: int, seed: int):
        self.n = int(n)
        self.depth = max(1, math.ceil(math.log2(max(n, 2))))
        self.levels = [
            CountSketch(((self.n - 1) >> l) + 1, rows, buckets, derive_seed(seed, "dyadic", l))
            for l in range(self.depth + 1)
        ]
        self.seed = seed

    @property
    def counters(self) -> int:
        return sum(s.counters for s in self.levels)

    def update_many(self, items, deltas) -> "DyadicCountSketch":
        items, deltas = net_updates(items, deltas)
        for l, sk in enumerate(self.levels):
            sk.update_many(((items - 1) >> l) + 1, deltas)
        return self

    def update_stream(self, stream: Stream) -> "DyadicCountSketch":
        return self.update_many(stream.items, stream.deltas)

    def estimate(self, item):
        return self.levels[0].estimate(item)

    def top(self, k: int, beam: int | None = None) -> list[tuple[int, int]]:
        beam = max(beam or 4 * k, k)
        top_level = self.levels[-1]
        nodes = np.arange(top_level.n, dtype=np.int64)  # zero-based prefixes
        for l in range(self.depth, 0, -1):
            est = np.abs(self.levels[l].estimate(nodes + 1))
            keep = nodes[np.lexsort((nodes, -est))[:beam]]
            children = np.concatenate([2 * keep, 2 * keep + 1])
            nodes = np.unique(children[children < self.levels[l - 1].n])
        return self.levels[0].top(k, candidates=nodes + 1)

    def merge(self, other: "DyadicCountSketch") -> "DyadicCountSketch":
        if self.n != other.n or len(self.levels) != len(other.levels):
            raise DimensionMismatch("dyadic sketches differ in shape")
        out = DyadicCountSketch.__new__(DyadicCountSketch)
        out.n, out.depth, out.seed = self.n, self.depth, self.seed
        out.levels = [a.merge(b) for a, b in zip(self.levels, other.levels)]
        return out


def ams_dims(eps: float, delta: float) -> tuple[int, int]:
    """Groups ``ceil(2 ln(1/delta))`` (odd) of ``ceil(6/eps^2)`` accumulators."""
    if not (0 < eps and 0 < delta < 1):
        raise InvalidParams("AMS needs eps > 0 and 0 < delta < 1")
    return _odd(max(1, math.ceil(2 * math.log(1 / delta)))), max(1, math.ceil(6 / (eps * eps)))


class AmsSketch:
    """Median of means of squared random-sign sums ``Z_t = sum_i xi_t(i) v_i``."""

    kind = "ams"

    def __init__(self, n: int, groups: int, per_group: int, seed: int):
        if n < 1 or groups < 1 or per_group < 1:
            raise InvalidParams("AMS dimensions must be positive")
        self.n = int(n)
        self.groups = int(groups)
        self.per_group = int(per_group)
        self.seed = int(seed)
        self.table = np.zeros((self.groups, self.per_group), dtype=np.int64)

    @classmethod
    def for_accuracy(cls, n: int, eps: float, delta: float, seed: int) -> "AmsSketch":
        return cls(n, *ams_dims(eps, delta), seed)

    @property
    def counters(self) -> int:
        return self.groups * self.per_group

    def _signs(self, items: np.ndarray) -> np.ndarray:
        return _ams_bank(self.seed, self.groups * self.per_group).signs(items)

    def update(self, item: int, delta: int) -> "AmsSketch":
        return self.update_many([item], [delta])

    def update_many(self, items, deltas) -> "AmsSketch":
        items, deltas = net_updates(items, deltas)
        if items.size:
            if items.min() < 1 or items.max() > self.n:
                raise InvalidParams(f"items must lie in [1, {self.n}]")
            z = self._signs(items) @ deltas
            self.table += z.reshape(self.groups, self.per_group)
        return self

    def update_stream(self, stream: Stream) -> "AmsSketch":
        return self.update_many(stream.items, stream.deltas)

    def estimate_f2(self) -> float:
        sq = self.table.astype(float) ** 2
        return float(np.median(sq.mean(axis=1)))

    def merge(self, other: "AmsSketch") -> "AmsSketch":
        if type(other) is not AmsSketch:
            raise DimensionMismatch("cannot merge sketches of different kinds")
        if (self.n, self.groups, self.per_group) != (other.n, other.groups, other.per_group):
            raise DimensionMismatch("sketch dimensions differ")
        if self.seed != other.seed:
            raise SeedMismatch("sketch seeds differ")
        out = AmsSketch(self.n, self.groups, self.per_group, self.seed)
        out.table = self.table + other.table
        return out

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, AmsSketch)
            and (self.n, self.groups, self.per_group, self.seed)
            == (other.n, other.groups, other.per_group, other.seed)
            and np.array_equal(self.table, other.table)
        )

    def to_bytes(self) -> bytes:
        return _pack(self.kind, self.groups, self.per_group, self.seed, self.n, self.table)


@lru_cache(maxsize=8)
def _ams_bank(seed: int, k: int) -> HashBank:
    return HashBank("fourwise", [derive_seed(seed, "ams", t) for t in range(k)], 2)


def ams_estimate_f2(state: AmsSketch) -> float:
    return state.estimate_f2()


def merge(a, b):
    return a.merge(b)


def _pack(kind: str, r: int, b: int, seed: int, n: int, table: np.ndarray) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, _KINDS[kind], r, b, seed & ((1 << 64) - 1), n)
    return header + table.astype("<i8").tobytes()


def load_sketch(blob: bytes, expect: str | None = None):
    """Inverse of ``to_bytes`` for CountSketch and AMS states."""
    if len(blob) < _HEADER.size:
        raise InvalidParams("sketch blob too short")
    magic, version, kind, r, b, seed, n = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise InvalidParams("not a sketch file (bad magic)")
    if version != VERSION:
        raise InvalidParams(f"unsupported sketch version {version}")
    names = {v: k for k, v in _KINDS.items()}
    if kind not in names:
        raise InvalidParams(f"unknown sketch kind {kind}")
    name = names[kind]
    if expect and name != expect:
        raise DimensionMismatch(f"expected a {expect} sketch, found {name}")
    body = blob[_HEADER.size :]
    if len(body) != 8 * r * b:
        raise InvalidParams("sketch blob has the wrong counter count")
    table = np.frombuffer(body, dtype="<i8").astype(np.int64).reshape(r, b)
    out = CountSketch(n, r, b, seed) if name == "countsketch" else AmsSketch(n, r, b, seed)
    out.table = table.copy()
    return out
