"""g-SUM estimation from heavy hitters on nested subsampled substreams.

Level 0 is the whole stream; an item survives to level j when its first j
pairwise-independent level bits are all zero, so each level keeps about half
of the previous one. Every level runs a heavy-hitter algorithm and the
discovered weights are combined either by geometric layering (default) or
by the recursive doubling estimator.
"""

from __future__ import annotations

import json
import math
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import EnvelopeMissing, InvalidParams
from .gfunc import Envelope, GFunction, compute_envelope
from .hashing import HashBank, derive_seed
from .heavy import HHConfig, run_heavy_hitters
from .sketch import ams_dims, countsketch_dims
from .stream import Stream


def log_n(n: int) -> float:
    """``log2 n`` floored at 1 so the parameter formulas stay finite for tiny n."""
    return max(math.log2(max(n, 1)), 1.0)


@dataclass
class EstimatorConfig:
    n: int
    M: int
    eps: float
    passes: int = 2
    seed: int = 0
    method: str = "layered"
    beta: float | None = None
    cap_factor: float = 4.0
    bucket_cap: int | None = None
    envelope: Envelope | None = None
    lam: float = field(init=False)
    delta: float = field(init=False)
    levels: int = field(init=False)

    def __post_init__(self) -> None:
        if not 0 < self.eps < 0.5:
            raise InvalidParams("eps must lie in (0, 1/2)")
        if self.passes not in (1, 2):
            raise InvalidParams("passes must be 1 or 2")
        if self.method not in ("layered", "recursive"):
            raise InvalidParams(f"unknown method {self.method!r}")
        if self.n < 1 or self.M < 1:
            raise InvalidParams("n and M must be positive")
        self.levels = math.ceil(math.log2(self.n)) if self.n > 1 else 0
        ln = log_n(self.n)
        self.lam = self.eps**2 / ln**3
        self.delta = 1.0 / ((self.levels + 1) * ln)
        if self.beta is None:
            self.beta = 1.0 + self.eps / 3.0
        if self.bucket_cap is None:
            # a level never holds more than n items, so more buckets than
            # the next power of two buy nothing at desk scale
            self.bucket_cap = 1 << max(0, math.ceil(math.log2(self.n)))

    def hh_config(self, g: GFunction) -> HHConfig:
        if self.envelope is None:
            raise EnvelopeMissing("estimator needs a certified envelope")
        return HHConfig(self.lam, self.eps, min(self.delta, 0.5), g, self.envelope,
                        self.passes, self.bucket_cap)


@dataclass
class EstimateReport:
    estimate: float
    passes: int
    method: str
    eps: float
    lam: float
    delta: float
    levels: int
    H: float
    cover_sizes: list[int]
    layers: list[dict]
    warnings: list[str]
    space: dict
    wall_time: float | None

    FIELDS = ("estimate", "passes", "method", "eps", "lambda", "delta", "levels", "H",
              "cover_sizes", "layers", "warnings", "space", "wall_time")

    def as_dict(self) -> "OrderedDict[str, object]":
        vals = (self.estimate, self.passes, self.method, self.eps, self.lam, self.delta,
                self.levels, self.H, self.cover_sizes, self.layers, self.warnings,
                self.space, self.wall_time)
        return OrderedDict(zip(self.FIELDS, vals))

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.as_dict(), indent=indent)


def level_depths(n: int, levels: int, seed: int) -> np.ndarray:
    """``depth[i]`` = deepest level containing item i (index 0 unused)."""
    depth = np.full(n + 1, levels, dtype=np.int64)
    if levels == 0:
        return depth
    bank = HashBank("pairwise", [derive_seed(seed, "level", j) for j in range(1, levels + 1)], 2)
    bits = bank(np.arange(n + 1, dtype=np.int64))  # (levels, n+1)
    nonzero = bits != 0
    first = np.where(nonzero.any(axis=0), nonzero.argmax(axis=0), levels)
    return first.astype(np.int64)


def _space(config: EstimatorConfig, H2: float, H1: float) -> dict:
    """Counter totals over all levels.

    ``total_counters`` counts the tables actually allocated (buckets capped);
    ``nominal_counters`` is the same total with the uncapped bucket formula.
    """
    n = config.n
    L = config.levels
    hh_delta = min(config.delta, 0.5)

    def dims(cap):
        if config.passes == 2:
            return countsketch_dims(n, config.lam / (2 * H2), 1 / 3, hh_delta, cap)
        return countsketch_dims(n, config.lam / (3 * H1), config.eps / (2 * H1), hh_delta / 2, cap)

    rows, buckets = dims(config.bucket_cap)
    nominal_buckets = dims(None)[1]
    if config.passes == 2:
        ams = 0
        budget = int(min(n, math.floor(2 * H2 / config.lam)))
    else:
        g_, k_ = ams_dims(config.eps, hh_delta / 2)
        ams = g_ * k_
        budget = 0
    sketch = rows * buckets * (L + 1)
    extra = ams * (L + 1) + budget * (L + 1)
    total = sketch + extra
    return OrderedDict(
        levels=L + 1,
        rows=rows,
        buckets=buckets,
        sketch_counters=sketch,
        ams_counters=ams * (L + 1),
        candidate_counters=budget * (L + 1),
        total_counters=total,
        bits=total * 64,
        nominal_counters=rows * nominal_buckets * (L + 1) + extra,
    )


def space_report(config: EstimatorConfig) -> dict:
    """Counter totals over all levels for ``config``."""
    if config.envelope is None:
        raise EnvelopeMissing("space accounting needs the envelope")
    env = config.envelope
    return _space(config, float(env.base[env.M]), env.at_max)


def _layered(discovered: list[dict[int, float]], config: EstimatorConfig):
    """Combine per-level covers by geometric weight layers.

    A level is eligible for a layer only if it saw every item of that layer
    that some deeper level saw; the designated level is the shallowest
    eligible one whose layer count is within the cap.
    """
    allw = [w for d in discovered for w in d.values()]
    if not allw:
        return 0.0, [], []
    W = max(allw)
    beta = config.beta
    cap = config.cap_factor / config.lam

    def layer_of(w):
        if w >= W:
            return 0
        return int(math.floor(math.log(W / w) / math.log(beta) + 1e-12))

    per_level: list[dict[int, dict[int, float]]] = []
    for d in discovered:
        layers: dict[int, dict[int, float]] = {}
        for item, w in d.items():
            layers.setdefault(layer_of(w), {})[item] = w
        per_level.append(layers)
    all_layers = sorted({k for lv in per_level for k in lv})
    rows = []
    warnings = []
    total = 0.0
    for k in all_layers:
        sets = [lv.get(k, {}) for lv in per_level]
        deeper: set[int] = set()
        eligible = [False] * len(sets)
        for j in range(len(sets) - 1, -1, -1):
            eligible[j] = deeper.issubset(sets[j].keys())
            deeper |= set(sets[j].keys())
        chosen = None
        for j, s in enumerate(sets):
            if eligible[j] and len(s) <= cap and s:
                chosen = j
                break
        fallback = False
        if chosen is None:
            nonempty = [j for j, s in enumerate(sets) if s]
            chosen = nonempty[-1]
            fallback = True
            warnings.append(f"layer {k}: no eligible level within the count cap; used level {chosen}")
        s = sets[chosen]
        contrib = (2.0**chosen) * math.fsum(s.values())
        total += contrib
        rows.append(OrderedDict(layer=k, level=chosen, count=len(s),
                                mean_weight=math.fsum(s.values()) / len(s),
                                contribution=contrib, fallback=fallback))
    return total, rows, warnings


def _recursive(discovered: list[dict[int, float]], depths: np.ndarray):
    """Bottom-up doubling: ``Y_j = 2 Y_{j+1} + sum_{i in Q_j} (1 - 2 [i at j+1]) w_i``."""
    L = len(discovered) - 1
    Y = math.fsum(discovered[L].values())
    for j in range(L - 1, -1, -1):
        corr = math.fsum(w * (1 - 2 * (depths[i] >= j + 1)) for i, w in discovered[j].items())
        Y = 2 * Y + corr
    return max(Y, 0.0), [], []


def estimate_gsum(stream: Stream, g: GFunction, eps: float, passes: int = 2, seed: int = 0,
                  method: str = "layered", envelope: Envelope | None = None,
                  config: EstimatorConfig | None = None, timing: bool = True) -> EstimateReport:
    """Estimate ``sum_i g(|v_i|)`` within ``1 +- eps`` (probability >= 2/3 for
    tractable g)."""
    t0 = time.perf_counter()
    if config is None:
        if envelope is None:
            envelope = compute_envelope(g, max(stream.M, 1), min(eps, 0.49))
        config = EstimatorConfig(stream.n, max(stream.M, 1), eps, passes, seed, method,
                                 envelope=envelope)
    hh = config.hh_config(g)
    depths = level_depths(config.n, config.levels, config.seed)
    discovered: list[dict[int, float]] = []
    sizes = []
    item_depth = depths[stream.items] if len(stream) else np.zeros(0, dtype=np.int64)
    for j in range(config.levels + 1):
        keep = item_depth >= j
        sub = Stream(stream.n, stream.M, stream.items[keep], stream.deltas[keep])
        domain = np.flatnonzero(depths >= j)
        domain = domain[domain >= 1]
        # level sketches share hash functions; each level's guarantee is marginal
        cover = run_heavy_hitters(sub, hh, derive_seed(config.seed, "hh"), domain)
        discovered.append({i: w for i, w in cover.pairs if w > 0})
        sizes.append(len(cover))
    if config.method == "layered":
        est, layers, warnings = _layered(discovered, config)
    else:
        est, layers, warnings = _recursive(discovered, depths)
    space = space_report(config)
    return EstimateReport(
        estimate=float(est),
        passes=config.passes,
        method=config.method,
        eps=config.eps,
        lam=config.lam,
        delta=config.delta,
        levels=config.levels,
        H=hh.H,
        cover_sizes=sizes,
        layers=layers,
        warnings=warnings,
        space=space,
        wall_time=(time.perf_counter() - t0) if timing else None,
    )
