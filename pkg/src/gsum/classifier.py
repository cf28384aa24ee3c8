"""Finite-scale witness search for the growth and variability conditions.

Each condition is asymptotic, so a single violating pair at finite scale does
not settle anything: sub-polynomial factors such as ``lg x`` exceed small
powers of x for a long while. Every check therefore computes an excess
profile (how badly the defining inequality fails, as a ratio; above 1 means
violated) and summarizes it over the top dyadic windows of the scan range.
A witness counts as *persistent* when the top window still violates and the
window maxima do not decay faster than ``x^(-param/4)``. Verdicts use
persistent witnesses only; raw witnesses are reported alongside.
"""

from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidParams, NotInClassG
from .gfunc import BRUTE_LIMIT, GFunction
from .rangeq import SparseTable

TOP_WINDOWS = 4
RTOL = 1e-9  # an excess must clear 1 by this much to count as a violation


@dataclass
class Witness:
    x: int
    y: int
    values: dict

    def as_dict(self) -> dict:
        return OrderedDict(x=self.x, y=self.y, values=self.values)


@dataclass
class ConditionResult:
    condition: str
    params: dict
    scan: tuple[int, int]
    witness: Witness | None
    tail_witness: Witness | None
    persistent: bool
    window_max: list[tuple[int, float]] = field(default_factory=list)
    slope: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        """The condition holds at this scale (no persistent witness)."""
        return not self.persistent

    @property
    def status(self) -> str:
        return "no-witness-in-range" if self.witness is None else "witness"

    def as_dict(self) -> dict:
        out = OrderedDict(
            condition=self.condition,
            params=self.params,
            scan=list(self.scan),
            status=self.status,
            witness=self.witness.as_dict() if self.witness else None,
            tail_witness=self.tail_witness.as_dict() if self.tail_witness else None,
            persistent=self.persistent,
            holds=self.holds,
            window_max=[[a, b] for a, b in self.window_max],
            slope=self.slope,
        )
        out.update(self.extra)
        return out


def _windows(N: int, M: int) -> list[tuple[int, int]]:
    """Dyadic windows ``[2^k, 2^(k+1))`` clipped to ``[N, M]``, top first."""
    out = []
    hi = M
    while hi >= N and len(out) < TOP_WINDOWS:
        lo = max(N, 1 << (hi.bit_length() - 1))
        if lo == hi and hi > N and (hi & (hi - 1)) == 0:
            lo = max(N, hi // 2)
        out.append((lo, hi))
        hi = lo - 1
    return out


def _persistence(excess: np.ndarray, N: int, M: int, param: float):
    """Summarize an excess profile indexed by position (``excess[p]``)."""
    wins = _windows(N, M)
    stats = []
    for lo, hi in wins:
        seg = excess[lo : hi + 1]
        stats.append((lo, hi, float(seg.max()) if seg.size else 0.0, int(lo + np.argmax(seg)) if seg.size else lo))
    if not stats:
        return False, [], None, None
    top_val = stats[0][2]
    slope = None
    usable = [(math.sqrt(lo * hi), v) for lo, hi, v, _ in stats if v > 0]
    if len(usable) >= 2:
        xs = np.log([u[0] for u in usable])
        ys = np.log([u[1] for u in usable])
        slope = float(np.polyfit(xs, ys, 1)[0])
    if top_val <= 1.0 + RTOL:
        persistent = False
    elif slope is None:
        persistent = True
    else:
        persistent = slope >= -param / 4
    window_max = [(lo, v) for lo, hi, v, _ in stats]
    return persistent, window_max, slope, stats[0][3] if top_val > 1.0 + RTOL else None


# --------------------------------------------------------------- dropping


def _drop_profile(g: GFunction, alpha: float, M: int):
    t = g.table(M)
    ys = np.arange(M + 1, dtype=float)
    pm = np.zeros(M + 1)
    if M >= 2:
        pm[2:] = np.maximum.accumulate(t[1:M])  # max over x < y
    with np.errstate(divide="ignore", invalid="ignore"):
        excess = np.where(ys >= 2, pm / (t * ys**alpha), 0.0)
    excess[:2] = 0.0
    return excess


def _latest_prefix_argmax(t: np.ndarray, y: int) -> int:
    seg = t[1:y]
    m = seg.max()
    return int(np.flatnonzero(seg == m)[-1]) + 1


def check_slow_dropping(g: GFunction, alpha: float, N: int, M: int) -> ConditionResult:
    """Witness: x < y, ``N <= y <= M`` with ``g(y) < g(x) / y^alpha``."""
    _check_range(alpha, N, M, hi=2.0)
    t = g.table(M)
    excess = _drop_profile(g, alpha, M)
    start = max(N, 2)
    viol = np.flatnonzero(excess[start:] > 1.0 + RTOL)
    witness = None
    if viol.size:
        y = int(viol[0]) + start
        witness = _drop_witness(g, t, alpha, _latest_prefix_argmax(t, y), y)
    persistent, wmax, slope, tail_y = _persistence(excess, start, M, alpha)
    tail = None
    if tail_y is not None:
        tail = _drop_witness(g, t, alpha, _latest_prefix_argmax(t, tail_y), tail_y)
    return ConditionResult("slow-dropping", {"alpha": alpha, "N": N, "M": M}, (N, M),
                           witness, tail, persistent, wmax, slope)


def _drop_witness(g, t, alpha, x, y) -> Witness:
    return Witness(x, y, OrderedDict(gx=float(t[x]), gy=float(t[y]), bound=float(t[x] / y**alpha)))


def verify_drop_witness(g: GFunction, alpha: float, w: Witness) -> bool:
    return w.x < w.y and g(w.y) < g(w.x) / w.y**alpha


# ---------------------------------------------------------------- jumping


def _jump_excess_brute(t: np.ndarray, alpha: float, M: int) -> np.ndarray:
    out = np.zeros(M + 1)
    for y in range(2, M + 1):
        x = np.arange(1, y)
        q = (y // x).astype(float)
        out[y] = float(np.max(t[y] / (q ** (2 + alpha) * x**alpha * t[1:y])))
    return out


def _jump_excess_blocks(t: np.ndarray, alpha: float, M: int) -> np.ndarray:
    xs = np.arange(M + 1, dtype=float)
    w = xs**alpha * t  # x^alpha g(x)
    best = np.zeros(M + 1)
    ys = np.arange(M + 1)
    root = math.isqrt(M)
    for x in range(1, root + 1):
        sel = ys[x + 1 :]
        q = (sel // x).astype(float)
        best[sel] = np.maximum(best[sel], 1.0 / (q ** (2 + alpha) * w[x]))
    st = SparseTable(w[1:], "min")
    sel = ys[2:]
    for q in range(1, root + 1):
        lo = np.maximum(sel // (q + 1) + 1, root + 1)
        hi = np.minimum(sel // q, sel - 1)
        ok = lo <= hi
        if not np.any(ok):
            continue
        mins = st.query(lo[ok] - 1, hi[ok] - 1)
        yv = sel[ok]
        best[yv] = np.maximum(best[yv], 1.0 / (float(q) ** (2 + alpha) * mins))
    out = t * best
    out[:2] = 0.0
    return out


def jump_excess(g: GFunction, alpha: float, M: int, method: str = "auto") -> np.ndarray:
    """``max_{x<y} g(y) / (floor(y/x)^(2+alpha) x^alpha g(x))`` for each y."""
    t = g.table(M)
    if method == "brute" or (method == "auto" and M <= BRUTE_LIMIT):
        return _jump_excess_brute(t, alpha, M)
    return _jump_excess_blocks(t, alpha, M)


def _jump_witness(g, t, alpha, y) -> Witness:
    x = np.arange(1, y)
    q = (y // x).astype(float)
    ratio = t[y] / (q ** (2 + alpha) * x**alpha * t[1:y])
    xb = int(np.argmax(ratio)) + 1
    qb = y // xb
    return Witness(xb, y, OrderedDict(gx=float(t[xb]), gy=float(t[y]),
                                      bound=float(qb ** (2 + alpha) * xb**alpha * t[xb])))


def check_slow_jumping(g: GFunction, alpha: float, N: int, M: int, method: str = "auto") -> ConditionResult:
    """Witness: x < y, y >= N with ``g(y) > floor(y/x)^(2+alpha) x^alpha g(x)``."""
    _check_range(alpha, N, M, hi=2.0)
    t = g.table(M)
    excess = jump_excess(g, alpha, M, method)
    start = max(N, 2)
    viol = np.flatnonzero(excess[start:] > 1.0 + RTOL)
    witness = _jump_witness(g, t, alpha, int(viol[0]) + start) if viol.size else None
    persistent, wmax, slope, tail_y = _persistence(excess, start, M, alpha)
    tail = _jump_witness(g, t, alpha, tail_y) if tail_y is not None else None
    return ConditionResult("slow-jumping", {"alpha": alpha, "N": N, "M": M}, (N, M),
                           witness, tail, persistent, wmax, slope)


def verify_jump_witness(g: GFunction, alpha: float, w: Witness) -> bool:
    q = w.y // w.x
    return w.x < w.y and g(w.y) > q ** (2 + alpha) * w.x**alpha * g(w.x)


# ----------------------------------------------------------- predictable


def _eps_values(eps_fn, xs: np.ndarray) -> np.ndarray:
    if callable(eps_fn):
        return np.asarray(eps_fn(xs), dtype=float) * np.ones(xs.shape)
    return np.full(xs.shape, float(eps_fn))


def check_predictable(g: GFunction, gamma: float, eps_fn, N: int, M: int) -> ConditionResult:
    """Witness: ``x >= N``, ``y in [1, x^(1-gamma))`` with ``x+y`` outside the
    eps(x)-delta set of x and ``g(y) < x^(-gamma) g(x)``.

    The excess at x is the largest ``|g(x+y) - g(x)| / (eps(x) g(x))`` over
    the y that satisfy the small-value clause.
    """
    if not 0 < gamma < 1:
        raise InvalidParams("gamma must lie in (0, 1)")
    if N < 1 or N > M:
        raise InvalidParams("need 1 <= N <= M")
    top = 2 * M
    t = g.table(min(top, g.domain_bound))
    if t.size < top + 1:
        t = np.r_[t, g.values(np.arange(t.size, top + 1))]
    xs = np.arange(N, M + 1)
    gx = t[xs]
    eps = _eps_values(eps_fn, xs.astype(float))
    thresh = gx / xs.astype(float) ** gamma  # g(y) must fall below this
    ylim = xs.astype(float) ** (1 - gamma)  # y < ylim
    excess = np.zeros(M + 1)
    first_y = np.zeros(xs.size, dtype=np.int64)
    ymax = int(math.ceil(ylim.max())) if xs.size else 0
    for y in range(1, ymax + 1):
        # xs is ascending, so the x with y < x^(1-gamma) form a suffix
        k0 = int(np.searchsorted(ylim, y, side="right"))
        if k0 >= xs.size:
            break
        if t[y] >= thresh[k0:].max():
            continue
        sub = slice(k0, None)
        small = t[y] < thresh[sub]
        dev = np.abs(t[xs[sub] + y] - gx[sub]) / (eps[sub] * gx[sub])
        dev = np.where(small, dev, 0.0)
        cur = excess[xs[sub]]
        excess[xs[sub]] = np.maximum(cur, dev)
        newly = (dev > 1.0 + RTOL) & (first_y[sub] == 0)
        first_y[sub] = np.where(newly, y, first_y[sub])
    witness = None
    hit = np.flatnonzero(first_y)
    if hit.size:
        k = int(hit[0])
        witness = _pred_witness(t, gamma, eps[k], int(xs[k]), int(first_y[k]))
    persistent, wmax, slope, tail_x = _persistence(excess, N, M, gamma)
    tail = None
    if tail_x is not None:
        k = tail_x - N
        ylist = np.arange(1, int(math.ceil(ylim[k])))
        ylist = ylist[ylist < ylim[k]]
        small = t[ylist] < thresh[k]
        dev = np.where(small, np.abs(t[tail_x + ylist] - gx[k]) / (eps[k] * gx[k]), 0.0)
        tail = _pred_witness(t, gamma, eps[k], tail_x, int(ylist[np.argmax(dev)]))
    params = {"gamma": gamma, "eps": eps_fn if not callable(eps_fn) else getattr(eps_fn, "__name__", "fn"),
              "N": N, "M": M}
    return ConditionResult("predictable", params, (N, M), witness, tail, persistent, wmax, slope)


def _pred_witness(t, gamma, eps, x, y) -> Witness:
    return Witness(x, y, OrderedDict(gx=float(t[x]), gy=float(t[y]), gxy=float(t[x + y]),
                                     eps=float(eps), bound=float(t[x] / x**gamma)))


def verify_pred_witness(g: GFunction, gamma: float, eps: float, w: Witness) -> bool:
    x, y = w.x, w.y
    gx = g(x)
    return (1 <= y < x ** (1 - gamma) and abs(g(x + y) - gx) > eps * gx
            and g(y) < gx / x**gamma)


# -------------------------------------------------------- nearly periodic


def h_const(c: float) -> Callable[[np.ndarray], np.ndarray]:
    """A member of the sub-polynomial, non-increasing family: constant c."""
    def h(y):
        return np.full(np.shape(y), float(c))
    h.__name__ = f"const:{c:g}"
    return h


def h_poly(c: float) -> Callable[[np.ndarray], np.ndarray]:
    """A member of the polynomial family: ``y^c``."""
    def h(y):
        return np.asarray(y, dtype=float) ** c
    h.__name__ = f"poly:{c:g}"
    return h


def alpha_periods(g: GFunction, alpha: float, N: int, M: int) -> np.ndarray:
    """All y in [N..M] with ``g(y) y^alpha <= max_{x<y} g(x)``."""
    t = g.table(M)
    pm = np.zeros(M + 1)
    if M >= 2:
        pm[2:] = np.maximum.accumulate(t[1:M])
    ys = np.arange(M + 1, dtype=float)
    ok = (t * ys**alpha <= pm) & (np.arange(M + 1) >= max(N, 2))
    return np.flatnonzero(ok)


def check_nearly_periodic(g: GFunction, alpha: float, h_fn, N: int, M: int) -> ConditionResult:
    """Find the alpha-periods in [N..M] and test the second condition: every
    ``x < y`` with ``g(y) y^alpha <= g(x)`` and ``x + y <= M`` must satisfy
    ``|g(x+y) - g(x)| <= min(g(x), g(x+y)) h(y)``.

    Only periods in the top two dyadic windows of ``[N, M/2]`` decide the
    verdict; violations at smaller periods are reported but not counted.
    """
    _check_range(alpha, N, M, hi=2.0)
    if not callable(h_fn):
        h_fn = h_const(float(h_fn))
    t = g.table(M)
    periods = alpha_periods(g, alpha, N, M)
    in_scope = periods[periods <= M // 2]
    first = None
    tail = None
    decide_lo = max(N, (M // 2) >> 2)
    violations = 0
    for y in in_scope.tolist():
        thr = t[y] * y**alpha
        xs = np.arange(1, min(y, M - y + 1))
        if xs.size == 0:
            continue
        xs = xs[t[xs] >= thr]
        if xs.size == 0:
            continue
        gx, gxy = t[xs], t[xs + y]
        hy = float(np.asarray(h_fn(np.array([y])), dtype=float).reshape(-1)[0])
        bad = np.abs(gxy - gx) > np.minimum(gx, gxy) * hy * (1 + RTOL)
        if np.any(bad):
            violations += 1
            xb = int(xs[np.argmax(bad)])
            w = Witness(xb, y, OrderedDict(gx=float(t[xb]), gy=float(t[y]), gxy=float(t[xb + y]), h=hy))
            if first is None:
                first = w
            if y >= decide_lo:
                tail = w
    if periods.size == 0:
        status = "no-periods"
    elif tail is None:
        status = "periods-with-condition2-holding"
    else:
        status = "condition2-violated"
    name = getattr(h_fn, "__name__", "h")
    res = ConditionResult("nearly-periodic", {"alpha": alpha, "h": name, "N": N, "M": M}, (N, M),
                          first, tail, tail is not None)
    res.extra = OrderedDict(np_status=status, periods=int(periods.size),
                            first_periods=periods[:8].tolist(), condition2_violations=violations)
    return res


def nearly_periodic_holds(res: ConditionResult) -> bool:
    return res.extra.get("np_status") == "periods-with-condition2-holding"


def verify_np_witness(g: GFunction, alpha: float, h_fn, w: Witness) -> bool:
    hy = float(np.asarray(h_fn(np.array([w.y])), dtype=float).reshape(-1)[0])
    gx, gy, gxy = g(w.x), g(w.y), g(w.x + w.y)
    return w.x < w.y and gy * w.y**alpha <= gx and abs(gxy - gx) > min(gx, gxy) * hy


# ------------------------------------------------------------- classify


@dataclass
class ClassifierParams:
    alphas: tuple[float, ...] = (0.25, 0.5, 1.0)
    gammas: tuple[float, ...] = (0.25, 0.5)
    eps: float = 0.05
    N: int = 16
    M: int = 1 << 14
    h_s: float = 0.1
    h_p: float = 0.25


@dataclass
class ClassifierVerdict:
    predicted: str
    drop: list[ConditionResult]
    jump: list[ConditionResult]
    predictable: list[ConditionResult]
    nearly_periodic: list[ConditionResult]
    params: ClassifierParams
    name: str = ""

    finite_scale = True

    @property
    def slow_dropping(self) -> bool:
        return all(r.holds for r in self.drop)

    @property
    def slow_jumping(self) -> bool:
        return all(r.holds for r in self.jump)

    @property
    def is_predictable(self) -> bool:
        return all(r.holds for r in self.predictable)

    def as_dict(self) -> dict:
        p = self.params
        return OrderedDict(
            function=self.name,
            predicted_class=self.predicted,
            finite_scale=True,
            scan=[p.N, p.M],
            slow_dropping=OrderedDict(holds=self.slow_dropping, results=[r.as_dict() for r in self.drop]),
            slow_jumping=OrderedDict(holds=self.slow_jumping, results=[r.as_dict() for r in self.jump]),
            predictable=OrderedDict(holds=self.is_predictable, results=[r.as_dict() for r in self.predictable]),
            nearly_periodic=[r.as_dict() for r in self.nearly_periodic],
            note="asymptotic conditions checked on a finite range; verdicts are candidates only",
        )

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.as_dict(), indent=indent)


def classify(g: GFunction, params: ClassifierParams | None = None, M: int | None = None) -> ClassifierVerdict:
    """Sweep the condition checks and assemble the predicted class."""
    p = params or ClassifierParams()
    if M is not None:
        p = ClassifierParams(p.alphas, p.gammas, p.eps, p.N, int(M), p.h_s, p.h_p)
    if p.N >= p.M:
        raise InvalidParams("scan needs N < M")
    drop = [check_slow_dropping(g, a, p.N, p.M) for a in p.alphas]
    jump = [check_slow_jumping(g, a, p.N, p.M) for a in p.alphas]
    pred = [check_predictable(g, gm, p.eps, p.N, p.M) for gm in p.gammas]
    drop_ok = all(r.holds for r in drop)
    jump_ok = all(r.holds for r in jump)
    pred_ok = all(r.holds for r in pred)
    npr: list[ConditionResult] = []
    np_ok = False
    if not drop_ok:
        failing = [r.params["alpha"] for r in drop if not r.holds]
        for a in failing:
            npr.append(check_nearly_periodic(g, a, h_const(p.h_s), p.N, p.M))
            npr.append(check_nearly_periodic(g, a, h_poly(p.h_p), p.N, p.M))
        s_results = [r for r in npr if r.params["h"].startswith("const")]
        np_ok = bool(s_results) and all(nearly_periodic_holds(r) for r in s_results)
    if drop_ok and jump_ok and pred_ok:
        cls = "1-pass-tractable"
    elif drop_ok and jump_ok:
        cls = "2-pass-tractable"
    elif not drop_ok and np_ok:
        cls = "nearly-periodic-candidate"
    else:
        cls = "intractable-candidate"
    return ClassifierVerdict(cls, drop, jump, pred, npr, p, g.name)


# ------------------------------------------------------- transforms, metric


def transform_L_eta(g: GFunction, eta: float) -> GFunction:
    """``g(x) log^eta(1 + x)``, renormalized so the value at 1 is 1."""
    if eta < 0:
        raise InvalidParams("eta must be nonnegative")
    base = g

    def raw(x):
        return base.values(np.asarray(x).astype(np.int64)) * np.log1p(x) ** eta

    try:
        return GFunction(f"L{eta:g}({g.name})", raw, g.domain_bound)
    except NotInClassG:
        raise


def theta_distance(g: GFunction, h: GFunction, M: int) -> float:
    """``max_{1<=x<=M} |log g(x) - log h(x)|``; ``inf`` if some value is not
    positive (the metric is extended)."""
    a = g.values(np.arange(1, M + 1))
    b = h.values(np.arange(1, M + 1))
    if np.any(a <= 0) or np.any(b <= 0):
        return math.inf
    return float(np.max(np.abs(np.log(a) - np.log(b))))


def _check_range(alpha: float, N: int, M: int, hi: float) -> None:
    if not 0 < alpha <= hi:
        raise InvalidParams(f"alpha must lie in (0, {hi:g}]")
    if N < 1 or N >= M:
        raise InvalidParams("need 1 <= N < M")
