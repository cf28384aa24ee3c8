"""Two-pass and one-pass (g, lambda, eps)-heavy-hitter algorithms."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CandidateOverflow, EnvelopeMissing, InvalidParams
from .gfunc import Envelope, GFunction
from .hashing import derive_seed
from .rangeq import RangeMinMax
from .sketch import AmsSketch, CountSketch, DyadicCountSketch, EXHAUSTIVE_LIMIT, net_updates
from .stream import FrequencyVector, Stream, exact_gsum


@dataclass
class Cover:
    """Item/weight pairs, items ascending."""

    pairs: list[tuple[int, float]]
    lam: float
    eps: float
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        self.pairs = sorted((int(i), float(w)) for i, w in self.pairs)

    @property
    def items(self) -> list[int]:
        return [i for i, _ in self.pairs]

    def weight(self, item: int) -> float | None:
        for i, w in self.pairs:
            if i == item:
                return w
        return None

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "eps": self.eps,
            "pairs": [{"item": i, "weight": w} for i, w in self.pairs],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict())

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class HHConfig:
    lam: float
    eps: float
    delta: float
    g: GFunction
    envelope: Envelope | None
    passes: int = 2
    bucket_cap: int | None = None

    def __post_init__(self) -> None:
        for name in ("lam", "eps", "delta"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise InvalidParams(f"{name} must lie in (0, 1), got {v}")
        if self.passes not in (1, 2):
            raise InvalidParams("passes must be 1 or 2")

    @property
    def H(self) -> float:
        if self.envelope is None:
            raise EnvelopeMissing("heavy-hitter config has no certified envelope")
        if self.passes == 2:
            # the second pass needs only the drop and jump inequalities
            return float(self.envelope.base[self.envelope.M])
        return self.envelope.at_max

    def buckets_for(self, n: int) -> int:
        """Bucket cap; defaults to the next power of two at or above n."""
        if self.bucket_cap is not None:
            return self.bucket_cap
        return 1 << max(0, math.ceil(math.log2(max(n, 1))))

    def candidate_budget(self, n: int) -> int:
        """Counters for exact second-pass counting: ``2H/lam`` capped at n."""
        return int(min(n, math.floor(2 * self.H / self.lam)))

    def sketch_dims(self, n: int) -> tuple[float, float, float]:
        """(lambda, eps, delta) handed to the CountSketch."""
        H = self.H
        if self.passes == 2:
            return self.lam / (2 * H), 1.0 / 3.0, self.delta
        return self.lam / (3 * H), self.eps / (2 * H), self.delta / 2


def is_heavy(vector: FrequencyVector, g: GFunction, lam: float, item: int) -> bool:
    """``g(|v_item|) >= lam * sum_{i != item} g(|v_i|)``."""
    gi = g(abs(vector.get(item)))
    rest = exact_gsum(vector, g) - gi
    return gi >= lam * max(rest, 0.0)


def heavy_items(vector: FrequencyVector, g: GFunction, lam: float) -> list[int]:
    """All (g, lam)-heavy items of a vector."""
    if len(vector) == 0:
        return []
    w = g.values(np.abs(vector.values))
    total = math.fsum(w.tolist())
    heavy = w >= lam * np.maximum(total - w, 0.0)
    return vector.items[heavy].tolist()


def _restrict(stream: Stream, domain) -> tuple[np.ndarray, np.ndarray]:
    if domain is None:
        return stream.items, stream.deltas
    mask = np.zeros(stream.n + 1, dtype=bool)
    mask[np.asarray(domain, dtype=np.int64)] = True
    keep = mask[stream.items]
    return stream.items[keep], stream.deltas[keep]


def _first_pass(stream, n, lam_cs, eps_cs, delta_cs, seed, bucket_cap, k, domain):
    items, deltas = _restrict(stream, domain)
    cs = CountSketch.for_accuracy(n, lam_cs, eps_cs, delta_cs, derive_seed(seed, "hh-cs"), bucket_cap)
    if domain is None and n > EXHAUSTIVE_LIMIT:
        dy = DyadicCountSketch(n, cs.rows, cs.buckets, derive_seed(seed, "hh-cs"))
        dy.update_many(items, deltas)
        return dy.levels[0], dy.top(k), dy.counters
    cs.update_many(items, deltas)
    return cs, cs.top(k, candidates=domain), cs.counters


def hh_two_pass(stream: Stream, config: HHConfig, seed: int = 0, domain=None) -> Cover:
    """Pass one keeps the ``2H/lam`` largest CountSketch estimates; pass two
    counts those candidates exactly.

    ``domain`` optionally restricts both the substream and the candidate
    universe (used by subsampling levels).
    """
    if config.passes != 2:
        raise InvalidParams("hh_two_pass needs a passes=2 config")
    n = stream.n
    budget = max(1, config.candidate_budget(n))
    lam_cs, eps_cs, delta_cs = config.sketch_dims(n)
    if len(stream) == 0:
        return Cover([], config.lam, 0.0, {"candidates": 0, "budget": budget, "counters": 0})
    cs, top, counters = _first_pass(stream, n, lam_cs, eps_cs, delta_cs, seed, config.buckets_for(n), budget, domain)
    cand = np.array(sorted(i for i, _ in top), dtype=np.int64)
    if cand.size > budget:
        raise CandidateOverflow(f"{cand.size} candidates exceed the budget of {budget}")
    # second pass: exact counters for the candidate set only
    items, deltas = _restrict(stream, cand)
    it, net = net_updates(items, deltas)
    weights = config.g.values(np.abs(net))
    pairs = list(zip(it.tolist(), weights.tolist()))
    info = {"candidates": int(cand.size), "budget": budget, "counters": counters + budget,
            "rows": cs.rows, "buckets": cs.buckets}
    return Cover(pairs, config.lam, 0.0, info)


def prune_mask(g: GFunction, vhat: np.ndarray, width: int, eps: float) -> np.ndarray:
    """Keep ``a = |vhat|`` iff ``|g(a) - g(a+y)| <= eps g(a+y)`` for every
    integer ``|y| <= width``; windows reaching 0 fail since g(0) = 0."""
    a = np.abs(np.asarray(vhat, dtype=np.int64))
    keep = a > width
    if not np.any(keep) or width == 0:
        return keep
    top = int(a[keep].max()) + width
    t = g.table(min(top, g.domain_bound))
    if top > g.domain_bound:
        t = np.r_[t, g.values(np.arange(t.size, top + 1))]
    rm = RangeMinMax(t)
    sel = np.flatnonzero(keep)
    lo, hi = a[sel] - width, a[sel] + width
    ga = t[a[sel]]
    mn = rm.min.query(lo, hi)
    mx = rm.max.query(lo, hi)
    # |ga - z| <= eps z  <=>  ga/(1+eps) <= z <= ga/(1-eps)
    slack = 1e-12
    ok = (mn * (1 + eps) >= ga * (1 - slack)) & (mx * (1 - eps) <= ga * (1 + slack))
    keep[sel] = ok
    return keep


def hh_one_pass(stream: Stream, config: HHConfig, seed: int = 0, domain=None) -> Cover:
    """CountSketch candidates and estimates, an AMS estimate of F2, and the
    pruning rule that drops estimates sitting in a locally unstable region."""
    if config.passes != 1:
        raise InvalidParams("hh_one_pass needs a passes=1 config")
    n = stream.n
    H = config.H
    k = max(1, int(min(n, math.floor(3 * H / config.lam))))
    lam_cs, eps_cs, delta_cs = config.sketch_dims(n)
    if len(stream) == 0:
        return Cover([], config.lam, config.eps, {"candidates": 0, "width": 0, "f2_hat": 0.0})
    cs, top, counters = _first_pass(stream, n, lam_cs, eps_cs, delta_cs, seed, config.buckets_for(n), k, domain)
    ams = AmsSketch.for_accuracy(n, config.eps, config.delta / 2, derive_seed(seed, "hh-ams"))
    items, deltas = _restrict(stream, domain)
    ams.update_many(items, deltas)
    f2_hat = ams.estimate_f2()
    width = int(math.floor(config.eps / (2 * H) * math.sqrt(f2_hat)))
    cand = np.array([i for i, v in top if v != 0], dtype=np.int64)
    vhat = np.array([v for _, v in top if v != 0], dtype=np.int64)
    keep = prune_mask(config.g, vhat, width, config.eps) if cand.size else np.zeros(0, bool)
    weights = config.g.values(np.abs(vhat[keep]))
    pairs = list(zip(cand[keep].tolist(), weights.tolist()))
    info = {"candidates": int(cand.size), "width": width, "f2_hat": f2_hat,
            "counters": counters + ams.counters, "rows": cs.rows, "buckets": cs.buckets,
            "pruned": int(cand.size - int(keep.sum()))}
    return Cover(pairs, config.lam, config.eps, info)


def run_heavy_hitters(stream: Stream, config: HHConfig, seed: int = 0, domain=None) -> Cover:
    if config.passes == 2:
        return hh_two_pass(stream, config, seed, domain)
    return hh_one_pass(stream, config, seed, domain)
