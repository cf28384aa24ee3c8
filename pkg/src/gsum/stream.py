"""Turnstile streams, the exact oracle, and stream generators."""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import InvalidParams, InvalidProfile, StreamFormatError, TurnstileViolation
from .hashing import derive_seed

M_MAX = 1 << 31


@dataclass(frozen=True)
class StreamUpdate:
    item: int
    delta: int


class Stream:
    """An ordered list of turnstile updates over items ``1..n``.

    Updates are held as two parallel int64 arrays so that sketches can ingest
    them in bulk. Construction validates item ranges and ``M``; the prefix
    promise is checked lazily by :func:`materialize`.
    """

    __slots__ = ("n", "M", "items", "deltas")

    def __init__(self, n: int, M: int, items=(), deltas=()):
        if n < 1:
            raise InvalidParams("domain size n must be at least 1")
        if not 0 <= M <= M_MAX:
            raise InvalidParams(f"frequency bound M must lie in [0, 2^31], got {M}")
        self.n = int(n)
        self.M = int(M)
        self.items = np.asarray(items, dtype=np.int64).reshape(-1)
        self.deltas = np.asarray(deltas, dtype=np.int64).reshape(-1)
        if self.items.shape != self.deltas.shape:
            raise InvalidParams("items and deltas must have equal length")
        if self.items.size and (self.items.min() < 1 or self.items.max() > self.n):
            raise InvalidParams(f"items must lie in [1, {self.n}]")

    @classmethod
    def from_updates(cls, n: int, M: int, updates: Iterable) -> "Stream":
        pairs = [(u.item, u.delta) if isinstance(u, StreamUpdate) else tuple(u) for u in updates]
        if not pairs:
            return cls(n, M)
        items, deltas = zip(*pairs)
        return cls(n, M, items, deltas)

    def __len__(self) -> int:
        return int(self.items.size)

    def __iter__(self) -> Iterator[StreamUpdate]:
        for i, d in zip(self.items.tolist(), self.deltas.tolist()):
            yield StreamUpdate(i, d)

    @property
    def updates(self) -> list[StreamUpdate]:
        return list(self)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Stream)
            and self.n == other.n
            and self.M == other.M
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.deltas, other.deltas)
        )

    def __repr__(self) -> str:
        return f"Stream(n={self.n}, M={self.M}, updates={len(self)})"

    def split(self, cut: int) -> tuple["Stream", "Stream"]:
        return (
            Stream(self.n, self.M, self.items[:cut], self.deltas[:cut]),
            Stream(self.n, self.M, self.items[cut:], self.deltas[cut:]),
        )

    def concat(self, other: "Stream") -> "Stream":
        if self.n != other.n:
            raise InvalidParams("cannot concatenate streams over different domains")
        return Stream(
            self.n,
            max(self.M, other.M),
            np.concatenate([self.items, other.items]),
            np.concatenate([self.deltas, other.deltas]),
        )

    def negated(self) -> "Stream":
        return Stream(self.n, self.M, self.items, -self.deltas)


@dataclass(frozen=True)
class FrequencyVector:
    """Nonzero frequencies, items ascending."""

    n: int
    items: np.ndarray
    values: np.ndarray

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.items.tolist(), self.values.tolist()))

    def get(self, item: int) -> int:
        k = np.searchsorted(self.items, item)
        if k < self.items.size and self.items[k] == item:
            return int(self.values[k])
        return 0

    def __len__(self) -> int:
        return int(self.items.size)

    @classmethod
    def from_dict(cls, n: int, values: Mapping[int, int]) -> "FrequencyVector":
        pairs = sorted((int(i), int(v)) for i, v in values.items() if v != 0)
        items = np.array([p[0] for p in pairs], dtype=np.int64)
        vals = np.array([p[1] for p in pairs], dtype=np.int64)
        return cls(n, items, vals)

    def f2(self) -> int:
        return int(sum(v * v for v in self.values.tolist()))


def materialize(stream: Stream) -> FrequencyVector:
    """Replay ``stream`` and return its frequency vector.

    Every prefix is checked against the turnstile promise ``|v_i| <= M``.
    """
    if len(stream) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return FrequencyVector(stream.n, empty, empty.copy())
    M = stream.M
    # two admissible prefix values differ by at most 2M, so larger deltas
    # are violations and the cumulative sums below cannot overflow
    bad = np.flatnonzero(np.abs(stream.deltas) > 2 * M)
    order = np.argsort(stream.items, kind="stable")
    items = stream.items[order]
    deltas = stream.deltas[order]
    if bad.size:
        pos = int(bad[0])
        raise TurnstileViolation(
            f"update {pos} (item {int(stream.items[pos])}) breaches |v| <= {M}"
        )
    running = np.cumsum(deltas)
    starts = np.flatnonzero(np.r_[True, items[1:] != items[:-1]])
    base = np.r_[0, running[starts[1:] - 1]]
    group = np.cumsum(np.r_[True, items[1:] != items[:-1]]) - 1
    prefix = running - base[group]
    over = np.flatnonzero(np.abs(prefix) > M)
    if over.size:
        pos = int(order[over].min())
        raise TurnstileViolation(
            f"update {pos} (item {int(stream.items[pos])}) breaches |v| <= {M}"
        )
    ends = np.r_[starts[1:] - 1, items.size - 1]
    final = prefix[ends]
    keep = final != 0
    return FrequencyVector(stream.n, items[starts][keep], final[keep])


def exact_gsum(data, g) -> float:
    """Exact ``sum_i g(|v_i|)`` from a stream or a frequency vector."""
    vec = data if isinstance(data, FrequencyVector) else materialize(data)
    if len(vec) == 0:
        return 0.0
    return math.fsum(g.values(np.abs(vec.values)).tolist())


# ---------------------------------------------------------------- text format


def parse_stream(text: str | io.TextIOBase) -> Stream:
    """Parse the ``n M`` / ``item delta`` text format."""
    lines = text.splitlines() if isinstance(text, str) else text.read().splitlines()
    header = None
    items: list[int] = []
    deltas: list[int] = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise StreamFormatError(f"line {lineno}: expected two integers")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise StreamFormatError(f"line {lineno}: expected two integers") from None
        if header is None:
            header = (a, b)
        else:
            items.append(a)
            deltas.append(b)
    if header is None:
        raise StreamFormatError("missing 'n M' header")
    try:
        return Stream(header[0], header[1], items, deltas)
    except InvalidParams as exc:
        raise StreamFormatError(str(exc)) from None
    except OverflowError:
        raise StreamFormatError("delta outside the signed 64-bit range") from None


def read_stream(path: str) -> Stream:
    import sys

    if path == "-":
        return parse_stream(sys.stdin.read())
    with open(path, encoding="utf-8") as fh:
        return parse_stream(fh.read())


def format_stream(stream: Stream) -> str:
    out = [f"{stream.n} {stream.M}"]
    out.extend(f"{i} {d}" for i, d in zip(stream.items.tolist(), stream.deltas.tolist()))
    return "\n".join(out) + "\n"


# ----------------------------------------------------------- random streams


@dataclass(frozen=True)
class Profile:
    kind: str
    params: tuple = ()

    def __str__(self) -> str:
        if not self.params:
            return self.kind
        return self.kind + ":" + ",".join(f"{p:g}" if isinstance(p, float) else str(p) for p in self.params)


_PROFILE_ARITY = {"uniform": (0, 0), "zipf": (1, 1), "single-heavy": (1, 1), "planted-hh": (3, 4)}


def parse_profile(spec) -> Profile:
    """Accept ``Profile`` objects or strings such as ``zipf:1.1`` or
    ``planted-hh:3,500,2`` (optionally ``planted-hh:k,heavy,noise,count``)."""
    if isinstance(spec, Profile):
        prof = spec
    else:
        m = re.fullmatch(r"\s*([a-z-]+)\s*(?:[:(]\s*([^)]*?)\s*\)?)?\s*", str(spec))
        if not m:
            raise InvalidProfile(f"cannot parse profile {spec!r}")
        kind, args = m.group(1), m.group(2)
        values: list = []
        if args:
            for tok in args.split(","):
                tok = tok.strip()
                if "=" in tok:
                    tok = tok.split("=", 1)[1]
                try:
                    values.append(int(tok))
                except ValueError:
                    try:
                        values.append(float(tok))
                    except ValueError:
                        raise InvalidProfile(f"bad profile argument {tok!r}") from None
        prof = Profile(kind, tuple(values))
    if prof.kind not in _PROFILE_ARITY:
        raise InvalidProfile(f"unknown profile {prof.kind!r}")
    lo, hi = _PROFILE_ARITY[prof.kind]
    if not lo <= len(prof.params) <= hi:
        raise InvalidProfile(f"profile {prof.kind!r} takes {lo}..{hi} arguments")
    return prof


def _target_vector(rng: np.random.Generator, n: int, M: int, prof: Profile) -> np.ndarray:
    v = np.zeros(n + 1, dtype=np.int64)
    if prof.kind == "uniform":
        v[1:] = rng.integers(1, M + 1, size=n) if M >= 1 else 0
    elif prof.kind == "zipf":
        s = float(prof.params[0])
        if s <= 0:
            raise InvalidProfile("zipf exponent must be positive")
        weights = np.arange(1, n + 1, dtype=float) ** -s
        total = weights.sum()
        # draws chosen so the top rank lands near M/2 in expectation
        draws = max(1, int(round(0.5 * M * total)))
        counts = rng.multinomial(draws, weights / total)
        ranks = rng.permutation(n) + 1
        v[ranks] = np.minimum(counts, M)
    elif prof.kind == "single-heavy":
        val = int(prof.params[0])
        if not 0 < val <= M:
            raise InvalidProfile("single-heavy value must lie in [1, M]")
        v[int(rng.integers(1, n + 1))] = val
    else:
        k, heavy, noise = (int(p) for p in prof.params[:3])
        count = int(prof.params[3]) if len(prof.params) > 3 else n - k
        if k < 0 or k > n or count < 0 or k + count > n:
            raise InvalidProfile("planted-hh sizes exceed the domain")
        if not (0 < heavy <= M and 0 <= noise <= M):
            raise InvalidProfile("planted-hh values must lie in [0, M]")
        chosen = rng.permutation(n)[: k + count] + 1
        v[chosen[:k]] = heavy
        v[chosen[k:]] = noise
    signs = rng.integers(0, 2, size=n + 1) * 2 - 1
    return v * signs


def _updates_for(rng: np.random.Generator, v: np.ndarray, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Turn a target vector into a shuffled turnstile update list with churn.

    Each item's target is split into same-signed chunks plus an optional
    cancelling pair of opposite sign; any interleaving of these keeps every
    prefix inside ``[-M, M]``.
    """
    active = np.flatnonzero(v)
    items: list[np.ndarray] = []
    deltas: list[np.ndarray] = []
    if active.size:
        vals = v[active]
        mags = np.abs(vals)
        # split into two chunks when possible
        cut = (rng.random(active.size) * mags).astype(np.int64)
        first = np.where(mags > 1, cut, 0)
        second = mags - first
        sgn = np.sign(vals)
        for part in (first, second):
            nz = part != 0
            items.append(active[nz])
            deltas.append((part * sgn)[nz])
        room = M - mags
        churn = np.where(rng.random(active.size) < 0.3, (rng.random(active.size) * (room + 1)).astype(np.int64), 0)
        nz = churn != 0
        for sign in (-1, 1):
            items.append(active[nz])
            deltas.append(sign * churn[nz] * -sgn[nz])
    it = np.concatenate(items) if items else np.zeros(0, dtype=np.int64)
    de = np.concatenate(deltas) if deltas else np.zeros(0, dtype=np.int64)
    perm = rng.permutation(it.size)
    return it[perm], de[perm]


def gen_random_stream(seed: int, n: int, M: int, profile) -> Stream:
    """Deterministic random stream for ``seed`` under the given profile."""
    prof = parse_profile(profile)
    if n < 1 or not 1 <= M <= M_MAX:
        raise InvalidParams("need n >= 1 and 1 <= M <= 2^31")
    rng = np.random.default_rng(derive_seed(seed, "stream", str(prof)))
    v = _target_vector(rng, n, M, prof)
    items, deltas = _updates_for(rng, v, M)
    return Stream(n, M, items, deltas)


# -------------------------------------------------- adversarial instances

LOWERBOUND_KINDS = (
    "slowdrop-index",
    "slowjump-disjind",
    "predict-index",
    "slowdrop-disj2",
    "slowjump-disjt",
)


@dataclass(frozen=True)
class LowerBoundLayout:
    """Resolved parameters of one reduction instance.

    ``groups`` lists (count, frequency) pairs describing the frequency
    multiset in each case; the closed forms a1/a2 are sums over them.
    """

    kind: str
    n: int
    M: int
    x: int
    y: int
    sizes: tuple[int, ...]
    t: int
    intersect_groups: tuple[tuple[int, int], ...]
    disjoint_groups: tuple[tuple[int, int], ...]
    extra: tuple = ()

    def value(self, g, intersecting: bool) -> float:
        groups = self.intersect_groups if intersecting else self.disjoint_groups
        return math.fsum(c * float(g(f)) for c, f in groups if c and f)


def _int_param(params: Mapping, key: str, default=None) -> int:
    if key not in params:
        if default is None:
            raise InvalidParams(f"missing parameter {key!r}")
        return default
    try:
        return int(params[key])
    except (TypeError, ValueError):
        raise InvalidParams(f"parameter {key!r} must be an integer") from None


def resolve_lowerbound(kind: str, params: Mapping) -> LowerBoundLayout:
    """Fill in defaults and compute the frequency multisets of both cases."""
    if kind not in LOWERBOUND_KINDS:
        raise InvalidParams(f"unknown lower-bound kind {kind!r}")
    x = _int_param(params, "x")
    y = _int_param(params, "y")
    if x < 1 or y < 1:
        raise InvalidParams("x and y must be positive")
    if kind == "predict-index":
        if y >= x:
            raise InvalidParams("predict-index needs y < x")
    elif x >= y:
        raise InvalidParams("need x < y")

    if kind in ("slowdrop-index", "predict-index"):
        size = _int_param(params, "size", 1)
        n = _int_param(params, "n", size + 1)
        if size < 1 or size + 1 > n:
            raise InvalidParams("set size must satisfy 1 <= |A| < n")
        # slowdrop-index: Alice y copies, Bob x copies; predict-index the same
        # set members carry y, the probe item carries x
        a, b = y, x
        inter = ((size - 1, a), (1, a + b))
        disj = ((size, a), (1, b))
        return LowerBoundLayout(kind, n, a + b, x, y, (size,), 1, inter, disj)

    if kind == "slowjump-disjind":
        s = y // x
        r = y - s * x
        t = s
        if "n" in params:
            n = _int_param(params, "n")
        else:
            alpha = float(params.get("alpha", 0.5))
            if alpha <= 0:
                raise InvalidParams("alpha must be positive")
            n = int(math.ceil(s ** (2 + alpha) * x**alpha))
        sizes = _sizes(params, t, n)
        n_prime = sum(sizes)
        inter = ((n_prime - t, x), (1, y))
        disj = ((n_prime, x), (1, r))
        return LowerBoundLayout(kind, n, y, x, y, sizes, t, inter, disj, (("s", s), ("r", r)))

    if kind == "slowdrop-disj2":
        n = _int_param(params, "n")
        s1 = _int_param(params, "size1", max(1, n // 4))
        s2 = _int_param(params, "size2", max(1, n // 4))
        complement = bool(params.get("complement", True))
        if s1 < 1 or s2 < 1 or s1 + s2 > n:
            raise InvalidParams("set sizes exceed the domain")
        if complement:
            rest = n - s1 - s2
            inter = ((s1 - 1, x + y), (rest + 1, y), (1, x))
            disj = ((s1, x + y), (rest, y))
        else:
            inter = ((s1 - 1, x), (s2 - 1, y), (1, x + y))
            disj = ((s1, x), (s2, y))
        return LowerBoundLayout(
            kind, n, x + y, x, y, (s1, s2), 2, inter, disj, (("complement", complement),)
        )

    # slowjump-disjt
    t = -(-y // x)
    last = y - (t - 1) * x
    n = _int_param(params, "n")
    sizes = _sizes(params, t, n)
    head = sum(sizes[:-1])
    inter = ((head - (t - 1), x), (sizes[-1] - 1, last), (1, y))
    disj = ((head, x), (sizes[-1], last))
    return LowerBoundLayout(kind, n, y, x, y, sizes, t, inter, disj, (("last", last),))


def _sizes(params: Mapping, t: int, n: int) -> tuple[int, ...]:
    if "sizes" in params:
        sizes = tuple(int(s) for s in params["sizes"])
        if len(sizes) != t:
            raise InvalidParams(f"expected {t} set sizes")
    else:
        each = _int_param(params, "size", max(1, (n - 1) // t))
        sizes = (each,) * t
    if min(sizes) < 1 or sum(sizes) + 1 > n:
        raise InvalidParams("set sizes exceed the domain")
    return sizes


def gen_lowerbound_instance(kind: str, params: Mapping, intersecting: bool) -> Stream:
    """Single-party stream realizing one case of a reduction.

    Sets are drawn from ``params['seed']`` (default 0) so that calls differing
    only in ``intersecting`` share all other randomness.
    """
    lay = resolve_lowerbound(kind, params)
    rng = np.random.default_rng(derive_seed(int(params.get("seed", 0)), "lowerbound", kind))
    perm = rng.permutation(lay.n) + 1
    items: list[int] = []
    deltas: list[int] = []

    def emit(elems, count):
        for e in np.asarray(elems).tolist():
            items.append(e)
            deltas.append(count)

    if kind in ("slowdrop-index", "predict-index"):
        size = lay.sizes[0]
        A = perm[:size]
        idx = int(params.get("index", 0)) % size
        b = A[idx] if intersecting else perm[size]
        big, small = (lay.y, lay.x)
        emit(A, big)
        emit([b], small)
    elif kind in ("slowjump-disjind", "slowjump-disjt"):
        t = lay.t
        # pairwise disjoint sets; perm[0] is reserved as the shared element
        common = perm[0]
        sets = []
        pos = 1
        for sz in lay.sizes:
            sets.append(perm[pos : pos + sz].copy())
            pos += sz
        if intersecting:
            for k in range(t):
                sets[k][0] = common
        if kind == "slowjump-disjind":
            for k in range(t):
                emit(sets[k], lay.x)
            r = dict(lay.extra)["r"]
            if r:
                emit([common], r)  # the index player's b
        else:
            last = dict(lay.extra)["last"]
            for k in range(t - 1):
                emit(sets[k], lay.x)
            emit(sets[-1], last)
    else:  # slowdrop-disj2
        s1, s2 = lay.sizes
        S2 = perm[:s2]
        S1 = perm[s2 : s2 + s1].copy()
        if intersecting:
            S1[0] = S2[0]
        emit(S1, lay.x)
        complement = dict(lay.extra)["complement"]
        if complement:
            mask = np.ones(lay.n + 1, dtype=bool)
            mask[0] = False
            mask[S2] = False
            emit(np.flatnonzero(mask), lay.y)
        else:
            emit(S2, lay.y)
    return Stream(lay.n, lay.M, items, deltas)


def lowerbound_values(kind: str, params: Mapping, g) -> tuple[float, float]:
    """Closed-form g-SUM of the intersecting (a1) and disjoint (a2) cases."""
    lay = resolve_lowerbound(kind, params)
    return lay.value(g, True), lay.value(g, False)
