"""Functions g in the class G and exact finite-domain envelopes.

A :class:`GFunction` maps nonnegative integers to positive reals with
``g(0) = 0`` and ``g(1) = 1``. All envelope routines work on a cached value
table over ``[0..M]`` so they cost O(M polylog M) numpy work rather than
Python loops.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .errors import InvalidParams, NotInClassG
from .rangeq import RangeMinMax, SparseTable

DEFAULT_DOMAIN = 1 << 20
CERT_RTOL = 1e-9
BRUTE_LIMIT = 1 << 12


class GFunction:
    """A validated member of the class G.

    ``raw`` is a vectorized callable on float arrays of x >= 1; the wrapper
    rescales by ``raw(1)`` and pins ``g(0) = 0``.
    """

    def __init__(
        self,
        name: str,
        raw: Callable[[np.ndarray], np.ndarray],
        domain_bound: int = DEFAULT_DOMAIN,
        normalize: bool = True,
        validate: bool = True,
        validate_limit: int = DEFAULT_DOMAIN,
    ):
        self.name = name
        self.domain_bound = int(domain_bound)
        self._raw = raw
        with np.errstate(all="ignore"):
            one = float(np.asarray(raw(np.array([1.0])), dtype=float)[0])
        if normalize:
            if not math.isfinite(one) or one == 0.0:
                raise NotInClassG(f"{name}: cannot normalize, g(1) = {one}")
            self._scale = 1.0 / one
        else:
            self._scale = 1.0
        self._table = np.zeros(1)
        if validate:
            self.validate(min(self.domain_bound, validate_limit))

    def values(self, xs) -> np.ndarray:
        """Vectorized evaluation on integer inputs (0 maps to 0)."""
        xs = np.asarray(xs)
        if xs.size and int(xs.max(initial=0)) < self._table.size and int(xs.min(initial=0)) >= 0:
            return self._table[xs.astype(np.int64)]
        xf = xs.astype(float)
        out = np.zeros(xf.shape, dtype=float)
        pos = xf > 0
        if np.any(pos):
            with np.errstate(all="ignore"):
                out[pos] = np.asarray(self._raw(xf[pos]), dtype=float) * self._scale
        return out

    def __call__(self, x):
        if np.ndim(x) == 0:
            return float(self.values(np.array([int(x)]))[0])
        return self.values(x)

    def table(self, M: int) -> np.ndarray:
        """Values on ``[0..M]``; cached and grown on demand."""
        if M >= self._table.size:
            xs = np.arange(M + 1, dtype=np.int64)
            old = self._table
            self._table = np.zeros(0)
            fresh = self.values(xs)
            fresh[0] = 0.0
            self._table = fresh if fresh.size > old.size else old
        return self._table[: M + 1]

    def validate(self, bound: int) -> None:
        vals = self.table(bound)[1:]
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0]) + 1
            raise NotInClassG(f"{self.name}: g({bad}) is not finite")
        if np.any(vals <= 0):
            bad = int(np.flatnonzero(vals <= 0)[0]) + 1
            raise NotInClassG(f"{self.name}: g({bad}) = {vals[bad - 1]} is not positive")
        if abs(vals[0] - 1.0) > 1e-12:
            raise NotInClassG(f"{self.name}: g(1) = {vals[0]} after normalization")

    def scaled(self, factor: float, name: str | None = None) -> "GFunction":
        """``factor * g`` without renormalization (used for metric checks)."""
        raw, s = self._raw, self._scale * factor
        return GFunction(name or f"{factor:g}*{self.name}", lambda x: raw(x) * s,
                         self.domain_bound, normalize=False, validate=False)

    def __repr__(self) -> str:
        return f"GFunction({self.name!r})"


# ------------------------------------------------------------------ catalog


def _lowest_bit_weight(x: np.ndarray) -> np.ndarray:
    xi = x.astype(np.int64)
    return 1.0 / (xi & -xi).astype(float)


def _poisson_mix_nll(lam: float, a: float, b: float):
    if not (0 < lam < 1 and a > 0 and b > 0):
        raise InvalidParams("poisson mixture needs 0 < lambda < 1 and positive rates")

    def raw(x):
        lg = gammaln(x + 1.0)
        t1 = math.log(lam) + x * math.log(a) - a - lg
        t2 = math.log1p(-lam) + x * math.log(b) - b - lg
        return -np.logaddexp(t1, t2)

    return raw


_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "log": np.log,
    "ln": np.log,
    "log2": np.log2,
    "lg": np.log2,
    "log10": np.log10,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "floor": np.floor,
    "ceil": np.ceil,
    "abs": np.abs,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
    ast.Mod: np.mod,
}
_CMPOPS = {
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Eq: np.equal,
    ast.NotEq: np.not_equal,
}


def compile_expr(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an arithmetic expression in ``x`` to a numpy callable.

    Supports ``+ - * / ^ %``, comparisons (yielding 0/1), the functions in
    ``_FUNCS`` and the constants ``pi`` and ``e``. Anything else is rejected.
    """
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise InvalidParams(f"cannot parse expression {text!r}: {exc.msg}") from None

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return check(node.left) and check(node.right)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            return check(node.operand)
        if isinstance(node, ast.Compare) and all(type(o) in _CMPOPS for o in node.ops):
            return check(node.left) and all(check(c) for c in node.comparators)
        if isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
                raise InvalidParams(f"unknown function in {text!r}")
            if len(node.args) != 1 or node.keywords:
                raise InvalidParams("functions take exactly one argument")
            return check(node.args[0])
        if isinstance(node, ast.Name):
            if node.id != "x" and node.id not in _CONSTS:
                raise InvalidParams(f"unknown name {node.id!r} in {text!r}")
            return True
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return True
        raise InvalidParams(f"unsupported syntax in {text!r}")

    check(tree)

    def ev(node, x):
        if isinstance(node, ast.Expression):
            return ev(node.body, x)
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, x), ev(node.right, x))
        if isinstance(node, ast.UnaryOp):
            v = ev(node.operand, x)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Compare):
            left = ev(node.left, x)
            result = True
            for op, comp in zip(node.ops, node.comparators):
                right = ev(comp, x)
                result = np.logical_and(result, _CMPOPS[type(op)](left, right))
                left = right
            return np.asarray(result, dtype=float)
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](ev(node.args[0], x))
        if isinstance(node, ast.Name):
            return x if node.id == "x" else _CONSTS[node.id]
        return float(node.value)

    def raw(x):
        return np.broadcast_to(np.asarray(ev(tree, x), dtype=float), np.shape(x)).copy()

    return raw


BUILTINS = (
    "power", "f2", "recip", "sin-sqrt-sq", "sin-x-sq", "log-poly",
    "gnp", "poisson-mix-nll", "expr",
)
_ALIASES = {"poisson": "poisson-mix-nll", "pow": "power", "np": "gnp"}


def make_builtin(name: str, params=(), domain_bound: int = DEFAULT_DOMAIN) -> GFunction:
    """Construct a catalog function; all are rescaled so that g(1) = 1."""
    name = _ALIASES.get(name, name)
    if isinstance(params, (int, float, str)):
        params = (params,)
    params = tuple(params)

    def need(k):
        if len(params) != k:
            raise InvalidParams(f"{name} takes {k} parameter(s), got {len(params)}")

    if name == "power":
        need(1)
        p = float(params[0])
        return GFunction(f"power:{p:g}", lambda x: x**p, domain_bound)
    if name == "f2":
        need(0)
        return GFunction("f2", lambda x: x**2, domain_bound)
    if name == "recip":
        need(0)
        return GFunction("recip", lambda x: 1.0 / x, domain_bound)
    if name == "sin-sqrt-sq":
        need(0)
        return GFunction("sin-sqrt-sq", lambda x: (2 + np.sin(np.sqrt(x))) * x**2, domain_bound)
    if name == "sin-x-sq":
        need(0)
        return GFunction("sin-x-sq", lambda x: (2 + np.sin(x)) * x**2, domain_bound)
    if name == "log-poly":
        need(0)
        return GFunction("log-poly", lambda x: x**2 * np.log2(1 + x), domain_bound)
    if name == "gnp":
        need(0)
        return GFunction("gnp", _lowest_bit_weight, domain_bound)
    if name == "poisson-mix-nll":
        need(3)
        lam, a, b = (float(v) for v in params)
        return GFunction(f"poisson:{lam:g},{a:g},{b:g}", _poisson_mix_nll(lam, a, b), domain_bound)
    if name == "expr":
        need(1)
        text = str(params[0])
        return GFunction(f"expr:{text}", compile_expr(text), domain_bound)
    raise InvalidParams(f"unknown builtin {name!r}")


def parse_gspec(spec: str, domain_bound: int = DEFAULT_DOMAIN) -> GFunction:
    """Parse a CLI function spec such as ``power:2``, ``gnp``,
    ``expr:(2+sin(sqrt(x)))*x^2`` or ``poisson:0.5,2,7``."""
    spec = spec.strip()
    name, _, rest = spec.partition(":")
    name = _ALIASES.get(name, name)
    if name == "expr":
        if not rest:
            raise InvalidParams("expr needs an expression")
        return make_builtin("expr", (rest,), domain_bound)
    params: tuple = ()
    if rest:
        try:
            params = tuple(float(t) for t in rest.split(","))
        except ValueError:
            raise InvalidParams(f"bad parameters in {spec!r}") from None
    return make_builtin(name, params, domain_bound)


# ---------------------------------------------------------------- envelopes


def compute_drop_envelope(g: GFunction, M: int) -> np.ndarray:
    """``Hd[y] = max_{x <= y} g(x) / g(y)`` for y in [1..M] (index 0 unused)."""
    t = g.table(M)
    out = np.ones(M + 1)
    if M >= 1:
        out[1:] = np.maximum.accumulate(t[1:]) / t[1:]
    return out


def _jump_brute(t: np.ndarray, M: int) -> np.ndarray:
    out = np.ones(M + 1)
    for y in range(2, M + 1):
        x = np.arange(1, y)
        q = y // x
        out[y] = max(1.0, float(np.max(t[y] / (q * q * t[1:y]))))
    return out


def _jump_blocks(t: np.ndarray, M: int) -> np.ndarray:
    """Same maxima as the brute force, grouping x by the quotient ``y // x``."""
    best = np.zeros(M + 1)  # best[y] = max over x<y of 1/(q^2 g(x))
    ys = np.arange(M + 1)
    st = SparseTable(t[1:], "min")  # index i <-> x = i + 1
    root = math.isqrt(M)
    # small x handled one at a time
    for x in range(1, root + 1):
        sel = ys[x + 1 :]
        q = sel // x
        best[sel] = np.maximum(best[sel], 1.0 / (q * q * t[x]))
    # larger x have quotient q <= root; each q covers a contiguous x block
    for q in range(1, root + 1):
        sel = ys[2:]
        lo = np.maximum(sel // (q + 1) + 1, root + 1)
        hi = np.minimum(sel // q, sel - 1)
        ok = lo <= hi
        if not np.any(ok):
            continue
        yv = sel[ok]
        mins = st.query(lo[ok] - 1, hi[ok] - 1)
        best[yv] = np.maximum(best[yv], 1.0 / (q * q * mins))
    out = np.maximum(1.0, t * best)
    out[:2] = 1.0
    return out


def compute_jump_envelope(g: GFunction, M: int, method: str = "auto") -> np.ndarray:
    """``Hj[y] = max_{x < y} g(y) / (floor(y/x)^2 g(x))``, floored at 1."""
    t = g.table(M)
    if method == "brute" or (method == "auto" and M <= BRUTE_LIMIT):
        return _jump_brute(t, M)
    return _jump_blocks(t, M)


def delta_set_contains(g: GFunction, x: int, eps: float, y: int) -> bool:
    """Whether y lies in ``{y : |g(y) - g(x)| <= eps g(x)}``."""
    gx = g(x)
    return abs(g(y) - gx) <= eps * gx * (1 + 1e-12)


def compute_radius(g: GFunction, x: int, eps: float) -> int:
    """Largest r with every ``x + y'`` (``|y'| <= r``, ``x + y' >= 0``) in the
    delta set of x; found by outward scan."""
    if x < 1:
        raise InvalidParams("radius needs x >= 1")
    gx = g(x)
    lo, hi = gx - eps * gx * (1 + 1e-12), gx + eps * gx * (1 + 1e-12)
    r = 0
    while True:
        nxt = r + 1
        up = x + nxt
        if up > g.domain_bound:
            return r
        vu = g(up)
        if not lo <= vu <= hi:
            return r
        down = x - nxt
        if down >= 0:
            vd = g(down)
            if not lo <= vd <= hi:
                return r
        r = nxt


def compute_radii(g: GFunction, M: int, eps: float) -> np.ndarray:
    """``r_eps(x)`` for every x in [1..M] (index 0 unused), by vectorized
    binary search on range min/max; upward scans are capped at the domain."""
    top = min(g.domain_bound, 2 * M + 1)
    t = g.table(top)
    rm = RangeMinMax(t)
    x = np.arange(1, M + 1)
    gx = t[1 : M + 1]
    lo_v = gx - eps * gx * (1 + 1e-12)
    hi_v = gx + eps * gx * (1 + 1e-12)

    def ok(r):
        a = np.maximum(x - r, 0)
        b = np.minimum(x + r, top)
        mn = rm.min.query(a, b)
        mx = rm.max.query(a, b)
        return (mn >= lo_v) & (mx <= hi_v)

    lo = np.zeros(M, dtype=np.int64)  # always feasible
    hi = np.full(M, top, dtype=np.int64)
    while np.any(lo < hi):
        mid = (lo + hi + 1) // 2
        good = ok(mid)
        lo = np.where(good, mid, lo)
        hi = np.where(good, hi, mid - 1)
    out = np.zeros(M + 1, dtype=np.int64)
    out[1:] = lo
    return out


def _booster_tight(t: np.ndarray, radii: np.ndarray, M: int) -> np.ndarray:
    """Smallest H(x) with g(y) >= g(x)/H(x) on ``[r+1, x/H(x))``.

    For a cutoff Y the requirement is H >= g(x)/min g[r+1..Y] and
    H >= x/(Y+1); the first term grows with Y and the second shrinks, so the
    optimum is found by binary search on Y.
    """
    st = SparseTable(t, "min")
    x = np.arange(1, M + 1)
    gx = t[1 : M + 1]
    r = radii[1 : M + 1]
    lo_Y = np.minimum(r, x - 1)  # Y = r means an empty range
    hi_Y = x - 1

    def cost_parts(Y):
        empty = Y <= r
        a = np.where(empty, 0, r + 1)
        b = np.where(empty, 0, Y)
        mins = st.query(a, np.maximum(a, b))
        with np.errstate(divide="ignore"):
            drop = np.where(empty, 0.0, gx / mins)
        return drop, x / (Y + 1.0)

    # find the smallest Y where drop(Y) >= x/(Y+1); the optimum is there or one below
    lo, hi = lo_Y.copy(), hi_Y.copy()
    while np.any(lo < hi):
        mid = (lo + hi) // 2
        d, s = cost_parts(mid)
        cross = d >= s
        hi = np.where(cross, mid, hi)
        lo = np.where(cross, lo, mid + 1)
    d1, s1 = cost_parts(lo)
    best = np.maximum(d1, s1)
    prev = np.maximum(lo - 1, lo_Y)
    d0, s0 = cost_parts(prev)
    best = np.minimum(best, np.maximum(d0, s0))
    out = np.ones(M + 1)
    out[1:] = best
    return out


def _booster_single(t: np.ndarray, radii: np.ndarray, base: np.ndarray, M: int) -> np.ndarray:
    """One pass of ``max g(x)/g(y)`` over ``y in [r+1, ceil(x/H0(x)))``."""
    st = SparseTable(t, "min")
    x = np.arange(1, M + 1)
    gx = t[1 : M + 1]
    a = radii[1 : M + 1] + 1
    b = np.ceil(x / base[1 : M + 1]).astype(np.int64) - 1
    ok = a <= b
    out = np.ones(M + 1)
    if np.any(ok):
        mins = st.query(a[ok], b[ok])
        out[1:][ok] = np.maximum(1.0, gx[ok] / mins)
    return out


@dataclass(frozen=True)
class Envelope:
    """Non-decreasing certified bound H on [1..M]; ``values[0]`` mirrors H(1)."""

    values: np.ndarray
    epsilon: float
    M: int
    base: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)
    booster: str = "tight"
    floor: float = 2.0

    def __call__(self, y: int) -> float:
        return float(self.values[min(max(int(y), 1), self.M)])

    @property
    def at_max(self) -> float:
        return float(self.values[self.M])


def compute_envelope(g: GFunction, M: int, eps: float, booster: str = "tight",
                     floor: float = 2.0) -> Envelope:
    """Pointwise max of drop, jump and booster terms, floored and made
    non-decreasing. ``booster='single'`` uses one literal iteration of the
    booster maximum instead of the tight fixed point."""
    if not 0 < eps < 0.5:
        raise InvalidParams("envelope eps must lie in (0, 1/2)")
    if M < 1:
        raise InvalidParams("envelope needs M >= 1")
    t = g.table(M)
    base = np.maximum(compute_drop_envelope(g, M), compute_jump_envelope(g, M))
    base = np.maximum.accumulate(base)
    radii = compute_radii(g, M, eps / 2)
    if booster == "tight":
        hb = _booster_tight(t, radii, M)
    elif booster == "single":
        hb = _booster_single(t, radii, base, M)
    else:
        raise InvalidParams(f"unknown booster mode {booster!r}")
    H = np.maximum(np.maximum(base, hb), floor)
    H[0] = H[1]
    H = np.maximum.accumulate(H)
    base = base.copy()
    base[0] = base[1]
    return Envelope(H, eps, M, base, radii, booster, floor)


@dataclass
class CertificationReport:
    ok: bool
    checked_up_to: int
    failures: list = field(default_factory=list)


def certify_envelope(g: GFunction, env: Envelope, limit: int = 2048,
                     rtol: float = CERT_RTOL) -> CertificationReport:
    """Exhaustively check the three envelope inequalities for x < y <= limit."""
    M = min(env.M, limit)
    t = g.table(M)
    H = env.values
    failures = []
    for y in range(2, M + 1):
        x = np.arange(1, y)
        gx = t[1:y]
        gy = t[y]
        q = (y // x).astype(float)
        drop_bad = gy * H[y] < gx * (1 - rtol)
        jump_bad = gy > q * q * H[y] * gx * (1 + rtol)
        for name, bad in (("drop", drop_bad), ("jump", jump_bad)):
            if np.any(bad):
                failures.append((name, int(x[np.argmax(bad)]), y))
    # booster: for each x, every y in [r+1, x/H(x)) must satisfy g(y) H(x) >= g(x)
    for xv in range(1, M + 1):
        a = int(env.radii[xv]) + 1
        b = math.ceil(xv / H[xv] * (1 - rtol)) - 1
        if a <= b:
            ys = np.arange(a, b + 1)
            bad = t[ys] * H[xv] < t[xv] * (1 - rtol)
            if np.any(bad):
                failures.append(("booster", xv, int(ys[np.argmax(bad)])))
    return CertificationReport(not failures, M, failures)
