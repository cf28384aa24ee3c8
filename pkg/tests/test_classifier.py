import itertools
import json
import math

import numpy as np
import pytest

from gsum.classifier import (RTOL, ClassifierParams, alpha_periods, check_nearly_periodic, check_predictable,
                             check_slow_dropping, check_slow_jumping, classify, h_const, h_poly,
                             jump_excess, nearly_periodic_holds, theta_distance, transform_L_eta,
                             verify_drop_witness, verify_jump_witness, verify_np_witness,
                             verify_pred_witness)
from gsum.errors import InvalidParams
from gsum.gfunc import make_builtin, parse_gspec

P = parse_gspec


def brute_drop_exists(g, alpha, N, M):
    return any(g(y) * y**alpha * (1 + RTOL) < g(x) for y in range(max(N, 2), M + 1) for x in range(1, y))


def brute_jump_exists(g, alpha, N, M):
    return any(g(y) > (y // x) ** (2 + alpha) * x**alpha * g(x) * (1 + RTOL)
               for y in range(max(N, 2), M + 1) for x in range(1, y))


def test_slow_dropping_examples():
    r = check_slow_dropping(P("recip"), 0.5, 8, 64)
    # the first violating y is 8 itself (1/8 < 1/sqrt(8)); (1, 16) is another valid witness
    assert (r.witness.x, r.witness.y) == (1, 8)
    assert verify_drop_witness(P("recip"), 0.5, r.witness)
    assert P("recip")(16) < 1 / 16**0.5
    for a in (0.1, 0.5, 2.0):
        assert check_slow_dropping(P("power:2"), a, 2, 500).witness is None
    w = check_slow_dropping(P("gnp"), 0.5, 4, 64).witness
    assert (w.x, w.y) == (3, 4) and w.values["gy"] == 0.25


def test_slow_jumping_examples():
    w = check_slow_jumping(P("power:3"), 0.5, 4, 64).witness
    assert (w.x, w.y) == (1, 4) and w.values["gy"] == 64 and w.values["bound"] == 32
    assert check_slow_jumping(P("power:2"), 1.0, 16, 256).witness is None
    # g(x) = x has small-range raw witnesses such as (2, 3), but none persist
    lin = check_slow_jumping(P("power:1"), 0.25, 2, 4096)
    assert (lin.witness.x, lin.witness.y) == (2, 3) and lin.holds
    for a in (0.25, 0.5, 1.0):
        assert check_slow_jumping(P("power:1"), a, 64, 4096).witness is None


def test_predictable_examples():
    r = check_predictable(P("sin-sqrt-sq"), 0.25, 0.05, 100, 1 << 14)
    assert r.witness is not None and verify_pred_witness(P("sin-sqrt-sq"), 0.25, 0.05, r.witness)
    sq = check_predictable(P("power:2"), 0.5, 0.1, 100, 1 << 14)
    # (100, 5): 105^2 is 10.25% above 100^2, a genuine raw witness that does not persist
    assert (sq.witness.x, sq.witness.y) == (100, 5) and not sq.persistent
    assert check_predictable(P("expr:2+sin(x)"), 0.25, 0.05, 100, 1 << 14).witness is None
    with pytest.raises(InvalidParams):
        check_predictable(P("power:2"), 1.0, 0.1, 10, 100)


def test_predictable_accepts_eps_function():
    r = check_predictable(P("power:2"), 0.5, lambda x: 1.0 / np.log2(x), 100, 4096)
    assert r.params["eps"] == "<lambda>"


def test_nearly_periodic_examples():
    r = check_nearly_periodic(P("gnp"), 0.9, h_const(0.1), 8, 1 << 12)
    assert nearly_periodic_holds(r)
    powers = [1 << k for k in range(3, 13)]
    assert alpha_periods(P("gnp"), 0.9, 8, 1 << 12).tolist() == powers
    assert check_nearly_periodic(P("power:2"), 0.5, 0.1, 8, 1 << 12).extra["np_status"] == "no-periods"
    rr = check_nearly_periodic(P("recip"), 0.5, h_const(0.1), 8, 1 << 12)
    assert rr.extra["np_status"] == "condition2-violated"
    assert verify_np_witness(P("recip"), 0.5, h_const(0.1), rr.witness)


@pytest.mark.parametrize("spec", ["recip", "gnp", "power:3", "sin-sqrt-sq", "log-poly", "power:1", "expr:2+sin(x)"])
@pytest.mark.parametrize("alpha", [0.25, 1.0])
def test_scans_agree_with_brute_force(spec, alpha):
    g = P(spec)
    assert (check_slow_dropping(g, alpha, 2, 120).witness is not None) == brute_drop_exists(g, alpha, 2, 120)
    assert (check_slow_jumping(g, alpha, 2, 120).witness is not None) == brute_jump_exists(g, alpha, 2, 120)
    # the full 2^10 range, brute force vectorized over x
    M = 1024
    t = g.table(M)
    tol = 1 + RTOL
    drop = jump = False
    for y in range(16, M + 1):
        x = np.arange(1, y)
        drop |= bool((t[y] * y**alpha * tol < t[1:y]).any())
        jump |= bool((t[y] > (y // x) ** (2 + alpha) * x**alpha * t[1:y] * tol).any())
    assert (check_slow_dropping(g, alpha, 16, M).witness is not None) == drop
    assert (check_slow_jumping(g, alpha, 16, M).witness is not None) == jump


@pytest.mark.parametrize("spec", ["power:3", "sin-sqrt-sq", "gnp", "log-poly"])
def test_jump_excess_blocks_match_brute(spec):
    g = P(spec)
    a = jump_excess(g, 0.5, 3000, "brute")
    b = jump_excess(g, 0.5, 3000, "blocks")
    assert np.allclose(a, b, rtol=1e-12)


def test_reported_witnesses_reverify():
    for spec in ("recip", "gnp", "power:3", "sin-sqrt-sq", "expr:x^2*(2+sin(x))"):
        g = P(spec)
        v = classify(g, ClassifierParams(M=4096))
        for r in v.drop:
            for w in (r.witness, r.tail_witness):
                if w:
                    assert verify_drop_witness(g, r.params["alpha"], w)
        for r in v.jump:
            for w in (r.witness, r.tail_witness):
                if w:
                    assert verify_jump_witness(g, r.params["alpha"], w)
        for r in v.predictable:
            for w in (r.witness, r.tail_witness):
                if w:
                    assert verify_pred_witness(g, r.params["gamma"], 0.05, w)


REGRESSION = [
    ("log-poly", "1-pass-tractable"),
    ("expr:(2+sin(log(1+x)))*x^2", "1-pass-tractable"),
    ("expr:exp(sqrt(log(1+x)))", "1-pass-tractable"),
    ("recip", "intractable-candidate"),
    ("power:3", "intractable-candidate"),
    ("sin-sqrt-sq", "2-pass-tractable"),
    ("expr:2+sin(x)", "1-pass-tractable"),
    ("gnp", "nearly-periodic-candidate"),
]


@pytest.mark.parametrize("spec,verdict", REGRESSION)
def test_regression_table(spec, verdict):
    v = classify(P(spec))
    assert v.predicted == verdict
    d = v.as_dict()
    assert d["finite_scale"] is True and d["scan"] == [16, 1 << 14]


def test_cubes_fail_by_jumping():
    v = classify(P("power:3"))
    assert v.slow_dropping and not v.slow_jumping
    w = [r.witness for r in v.jump if not r.holds][0]
    assert verify_jump_witness(P("power:3"), 0.25, w)
    json.loads(v.to_json())


def test_transform_L_eta():
    g = P("log-poly")
    same = transform_L_eta(g, 0)
    xs = np.arange(1, 500)
    assert np.allclose(same.values(xs), g.values(xs))
    gl = transform_L_eta(P("gnp"), 1)
    assert gl(1) == 1.0
    assert gl(4) == pytest.approx(0.25 * math.log(5) / math.log(2))
    v = classify(gl)
    assert not v.slow_dropping and v.predicted == "intractable-candidate"
    assert classify(transform_L_eta(P("power:2"), 1)).predicted == "1-pass-tractable"
    with pytest.raises(InvalidParams):
        transform_L_eta(g, -1)


CATALOG = ["power:1", "power:2", "power:3", "recip", "gnp", "sin-sqrt-sq", "sin-x-sq", "log-poly",
           "poisson:0.5,2,7"]


def test_theta_metric_axioms():
    M = 1 << 10
    fs = [P(s) for s in CATALOG]
    g = fs[1]
    assert theta_distance(g, g, M) == 0.0
    assert theta_distance(g, g.scaled(2.0), M) == pytest.approx(math.log(2))
    D = [[theta_distance(a, b, M) for b in fs] for a in fs]
    for i, j in itertools.product(range(len(fs)), repeat=2):
        assert D[i][j] == D[j][i]
        assert (D[i][j] == 0) == (i == j)
    for i, j, k in itertools.product(range(len(fs)), repeat=3):
        assert D[i][k] <= D[i][j] + D[j][k] + 1e-9


def test_s_periodic_implies_p_periodic():
    for spec in ("gnp", "recip", "expr:x^2*(2+sin(x))"):
        g = P(spec)
        for alpha in (0.25, 0.5, 0.9):
            s = check_nearly_periodic(g, alpha, h_const(0.1), 8, 1 << 12)
            p = check_nearly_periodic(g, alpha, h_poly(0.25), 8, 1 << 12)
            if nearly_periodic_holds(s):
                assert nearly_periodic_holds(p)


def test_parameter_validation():
    with pytest.raises(InvalidParams):
        check_slow_dropping(P("power:2"), 0.0, 2, 10)
    with pytest.raises(InvalidParams):
        check_slow_jumping(P("power:2"), 0.5, 10, 10)
    with pytest.raises(InvalidParams):
        classify(P("power:2"), ClassifierParams(N=100, M=50))
