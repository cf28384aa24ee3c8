"""Special-purpose sketches: single heavy hitter recovery for the lowest-set-bit
function, and the residue-counter protocol for (u, d)-DIST."""

from __future__ import annotations

import math
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import ConfigError, DimensionMismatch, DomainError, Infeasible, InvalidParams, SeedMismatch
from .hashing import HashBank, HashFamily, derive_seed
from .stream import Stream


def lowest_set_bit_index(x: int) -> int:
    if x <= 0:
        raise DomainError(f"lowest set bit needs x >= 1, got {x}")
    return (x & -x).bit_length() - 1


def lowest_set_bit_weight(x: int) -> float:
    """``2^(-i)`` where i is the position of the least significant 1 bit of x."""
    return 2.0 ** -lowest_set_bit_index(x)


def _lsb_index_array(m: np.ndarray) -> np.ndarray:
    """Lowest set bit of ``|m|`` elementwise; -1 where m == 0."""
    a = np.abs(m.astype(np.int64))
    low = a & -a
    out = np.full(a.shape, -1, dtype=np.int64)
    nz = low > 0
    out[nz] = np.log2(low[nz].astype(float)).round().astype(np.int64)
    return out


# --------------------------------------------------------------- NpSketch


@dataclass
class NpSketch:
    """Linear sketch for one lowest-set-bit heavy hitter per substream.

    An outer pairwise hash splits items into ``C`` substreams. Within each
    substream, trial l keeps ``m_l = sum_j X_{j,l} v_j`` with pairwise
    independent bits X, plus one extra counter per item-index bit b that
    only sums items whose bit b is set. Those extra counters let the
    recovery read off the identity of the item that owns the lowest bit.
    """

    n: int
    lam: float
    seed: int
    C: int = field(init=False)
    D: int = field(init=False)
    B: int = field(init=False)
    table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0 < self.lam < 1:
            raise InvalidParams("lambda must lie in (0, 1)")
        self.C = math.ceil(1.0 / self.lam**2)
        self.D = math.ceil(32 * max(math.log2(max(self.n, 2)), 1.0))
        self.B = max(1, int(self.n).bit_length())
        self.table = np.zeros((self.C, self.D, self.B + 1), dtype=np.int64)
        self._outer = HashFamily("pairwise", derive_seed(self.seed, "np-outer"), self.C)
        self._trials = HashBank("pairwise", [derive_seed(self.seed, "np-trial", l) for l in range(self.D)], 2)
        self._bitmask = (1 << np.arange(self.B, dtype=np.int64))

    @property
    def counters(self) -> int:
        return int(self.table.size)

    def trial_bits(self, items) -> np.ndarray:
        """``X[l, k]`` for item ``items[k]``."""
        return self._trials(np.asarray(items, dtype=np.int64))

    def update_many(self, items, deltas) -> None:
        items = np.asarray(items, dtype=np.int64)
        deltas = np.asarray(deltas, dtype=np.int64)
        if items.size == 0:
            return
        uniq, inv = np.unique(items, return_inverse=True)
        net = np.bincount(inv, weights=deltas.astype(float)).round().astype(np.int64)
        live = net != 0
        uniq, net = uniq[live], net[live]
        if uniq.size == 0:
            return
        sub = self._outer(uniq)
        X = self.trial_bits(uniq)  # (D, k)
        bits = ((uniq[:, None] & self._bitmask[None, :]) != 0).astype(np.int64)  # (k, B)
        colw = np.concatenate([np.ones((uniq.size, 1), dtype=np.int64), bits], axis=1) * net[:, None]
        # per substream: table[c] += X[:, items in c] @ colw[items in c]
        order = np.argsort(sub, kind="stable")
        sub = sub[order]
        X, colw = X[:, order], colw[order]
        bounds = np.flatnonzero(np.r_[True, sub[1:] != sub[:-1], True])
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            self.table[sub[lo]] += X[:, lo:hi] @ colw[lo:hi]

    def update_stream(self, stream: Stream) -> "NpSketch":
        self.update_many(stream.items, stream.deltas)
        return self

    def merge(self, other: "NpSketch") -> "NpSketch":
        if (self.n, self.lam) != (other.n, other.lam):
            raise DimensionMismatch("np sketches differ in shape")
        if self.seed != other.seed:
            raise SeedMismatch("np sketches use different seeds")
        out = NpSketch(self.n, self.lam, self.seed)
        out.table = self.table + other.table
        return out

    def __eq__(self, other) -> bool:
        return (isinstance(other, NpSketch) and self.seed == other.seed
                and self.table.shape == other.table.shape and np.array_equal(self.table, other.table))

    def recover_substream(self, c: int) -> tuple[int, float] | None:
        D = self.D
        m = self.table[c, :, 0]
        idx = _lsb_index_array(m)
        live = idx >= 0
        if not np.any(live):
            return None
        istar = int(idx[live].min())
        mset = np.flatnonzero(idx == istar)
        if not (D / 2 - D / 8 <= mset.size <= D / 2 + D / 8):
            return None
        # bit b of the owner is set iff the bit-b counter keeps lowest bit istar
        sub = self.table[c, mset, 1:]  # (|mset|, B)
        votes = _lsb_index_array(sub) == istar
        ones = votes.all(axis=0)
        zeros = (~votes).all(axis=0)
        if not np.all(ones | zeros):
            return None
        j = int(np.sum(self._bitmask[ones]))
        if not 1 <= j <= self.n or int(self._outer(np.array([j]))[0]) != c:
            return None
        Xj = self.trial_bits(np.array([j]))[:, 0]
        if not np.all(Xj[mset] == 1):
            return None
        return j, 2.0**-istar

    def recover(self) -> tuple[int, float] | None:
        """The recovered pair of largest weight; None when nothing is found
        or two different items tie for the largest weight."""
        found = [r for c in range(self.C) if (r := self.recover_substream(c)) is not None]
        if not found:
            return None
        top = max(w for _, w in found)
        best = {j for j, w in found if w == top}
        if len(best) != 1:
            return None
        return best.pop(), top


def np_recover_single(stream: Stream, lam: float, seed: int = 0) -> tuple[int, float] | None:
    """Sketch the stream and try to recover its (g_np, lam)-heavy item."""
    sk = NpSketch(stream.n, lam, seed)
    sk.update_stream(stream)
    return sk.recover()


# ------------------------------------------------------------ (u, d)-DIST


def min_l1_combination(u, d: int) -> tuple[tuple[int, ...], int]:
    """Integers q minimizing ``sum |q_i|`` subject to ``sum q_i u_i = d``.

    Breadth-first search over partial sums in ``[-B, B]``, each step adding
    or subtracting one ``u_i``; the first visit of d has minimum cost.
    """
    u = tuple(int(x) for x in u)
    if not u or any(x <= 0 for x in u):
        raise InvalidParams("u must be a nonempty tuple of positive integers")
    if d <= 0:
        raise InvalidParams("d must be positive")
    if d % reduce(math.gcd, u) != 0:
        raise Infeasible(f"gcd{u} does not divide {d}")
    B = d + max(u) * d
    parent: dict[int, tuple[int, int]] = {0: (0, -1)}
    queue = deque([0])
    while queue:
        s = queue.popleft()
        if s == d:
            break
        for i, x in enumerate(u):
            for sign in (1, -1):
                t = s + sign * x
                if -B <= t <= B and t not in parent:
                    parent[t] = (s, i if sign > 0 else -(i + 1))
                    queue.append(t)
    if d not in parent:
        raise Infeasible(f"{d} not reachable from {u} within [-{B}, {B}]")
    q = [0] * len(u)
    s = d
    while s != 0:
        prev, step = parent[s]
        if step >= 0:
            q[step] += 1
        else:
            q[-step - 1] -= 1
        s = prev
    return tuple(q), sum(abs(v) for v in q)


def _bounded_sums(values: tuple[int, ...], budget: int) -> set[int]:
    """All ``sum z_x x`` with ``sum |z_x| <= budget``."""
    reach = {0}
    frontier = {0}
    for _ in range(budget):
        nxt = {s + sgn * x for s in frontier for x in values for sgn in (1, -1)}
        frontier = nxt - reach
        reach |= nxt
        if not frontier:
            break
    return reach


@dataclass
class DistConfig:
    """Parameters of the residue-counter protocol.

    ``mode="exact"`` compares counter values with the set S0 of short
    combinations of all allowed magnitudes (budget ``floor((q-1)/2)``);
    ``mode="mod"`` compares counters mod ``a = u[0]`` with short
    combinations of the other magnitudes (budget ``floor(q/4)``).
    """

    u: tuple[int, ...]
    d: int
    n: int
    c3: float = 1.0
    t: int | None = None
    mode: str = "exact"
    q: int = field(init=False)
    coeffs: tuple[int, ...] = field(init=False)
    S0: frozenset = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.u = tuple(int(x) for x in self.u)
        if self.d in {abs(x) for x in self.u}:
            raise ConfigError(f"d={self.d} must differ from every allowed magnitude")
        if self.mode not in ("exact", "mod"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        self.coeffs, self.q = min_l1_combination(self.u, self.d)
        if self.t is None:
            ln = max(math.log2(max(self.n, 2)), 1.0)
            self.t = int(min(self.n, math.ceil(self.c3 * self.n * ln / self.q**2)))
        if self.t < 1:
            raise ConfigError("need at least one piece")
        if self.mode == "exact":
            self.S0 = frozenset(_bounded_sums(self.u, (self.q - 1) // 2))
        else:
            a = self.u[0]
            rest = tuple(x for x in self.u[1:])
            self.S0 = frozenset(s % a for s in _bounded_sums(rest, self.q // 4))

    @property
    def a(self) -> int:
        return self.u[0]

    def as_dict(self) -> dict:
        return OrderedDict(u=list(self.u), d=self.d, n=self.n, t=self.t, q=self.q,
                           coeffs=list(self.coeffs), mode=self.mode, s0_size=len(self.S0))


@dataclass
class DistDecision:
    decision: str
    flagged: int
    pieces: int
    config: DistConfig

    def as_dict(self) -> dict:
        return OrderedDict(decision=self.decision, flagged_pieces=self.flagged,
                           pieces=self.pieces, config=self.config.as_dict())


def _dist_hashes(config: DistConfig, seed: int):
    piece = HashFamily("pairwise", derive_seed(seed, "dist-piece"), config.t)
    sign = HashFamily("fourwise", derive_seed(seed, "dist-sign"), 2)
    return piece, sign


def dist_counters(stream: Stream, config: DistConfig, seed: int = 0) -> np.ndarray:
    """``C_i = sum_{j in piece i} sigma_j v_j`` for every piece i."""
    piece, sign = _dist_hashes(config, seed)
    C = np.zeros(config.t, dtype=np.int64)
    if len(stream):
        np.add.at(C, piece(stream.items), sign.signs(stream.items) * stream.deltas)
    return C


def piece_loads(stream: Stream, config: DistConfig, seed: int = 0) -> np.ndarray:
    """``z[i, k]``: signed count of magnitude ``u[k]`` in piece i, i.e. the
    coefficients with ``C_i = sum_k z[i, k] u[k]`` on promise-0 inputs."""
    from .stream import materialize

    vec = materialize(stream)
    piece, sign = _dist_hashes(config, seed)
    z = np.zeros((config.t, len(config.u)), dtype=np.int64)
    if len(vec):
        p = piece(vec.items)
        s = sign.signs(vec.items) * np.sign(vec.values)
        for k, x in enumerate(config.u):
            sel = np.abs(vec.values) == x
            np.add.at(z[:, k], p[sel], s[sel])
    return z


def dist_decide(stream: Stream, config: DistConfig, seed: int = 0) -> DistDecision:
    """Declare ``present`` iff some piece counter falls outside S0."""
    C = dist_counters(stream, config, seed)
    vals = C % config.a if config.mode == "mod" else C
    s0 = np.fromiter(config.S0, dtype=np.int64)
    flagged = int(np.count_nonzero(~np.isin(vals, s0)))
    return DistDecision("present" if flagged else "absent", flagged, config.t, config)


def gen_dist_instance(n: int, u, d: int, noise: int, present: bool, seed: int) -> Stream:
    """A promise instance: ``noise`` items with magnitudes drawn from u and
    random signs, plus one item of magnitude d when ``present``."""
    u = tuple(int(x) for x in u)
    rng = np.random.default_rng(derive_seed(seed, "dist-gen"))
    k = noise + (1 if present else 0)
    if k > n:
        raise InvalidParams("more planted items than the universe holds")
    items = rng.choice(np.arange(1, n + 1), size=k, replace=False)
    mags = rng.choice(np.array(u), size=k)
    if present:
        mags[0] = d
    vals = mags * rng.choice(np.array([-1, 1]), size=k)
    M = max(max(u), d)
    order = np.argsort(items)
    return Stream(n, M, items[order], vals[order])


def gen_np_instance(n: int, noise: int, seed: int, heavy_value: int | None = None,
                    M: int = 1024) -> tuple[Stream, int, int]:
    """One item with an odd frequency among ``noise`` items whose frequencies
    are multiples of 4; returns ``(stream, heavy_item, heavy_value)``."""
    rng = np.random.default_rng(derive_seed(seed, "np-gen"))
    if noise + 1 > n:
        raise InvalidParams("more planted items than the universe holds")
    items = rng.choice(np.arange(1, n + 1), size=noise + 1, replace=False)
    if heavy_value is None:
        heavy_value = int(rng.integers(0, M // 2)) * 2 + 1
    vals = 4 * rng.integers(1, M // 4 + 1, size=noise + 1)
    vals[0] = heavy_value
    vals *= rng.choice(np.array([-1, 1]), size=noise + 1)
    order = rng.permutation(noise + 1)
    return Stream(n, M, items[order], vals[order]), int(items[0]), int(heavy_value)
