from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gsum.errors import InvalidParams, InvalidProfile, StreamFormatError, TurnstileViolation
from gsum.gfunc import make_builtin
from gsum.stream import (LOWERBOUND_KINDS, FrequencyVector, Stream, StreamUpdate, exact_gsum, format_stream,
                         gen_lowerbound_instance, gen_random_stream, lowerbound_values, materialize,
                         parse_profile, parse_stream, resolve_lowerbound)


def naive_vector(stream):
    acc = defaultdict(int)
    for u in stream:
        acc[u.item] += u.delta
    return {k: v for k, v in acc.items() if v}


def test_materialize_examples():
    assert len(materialize(Stream(8, 10))) == 0
    s = Stream.from_updates(8, 10, [(3, 2), (7, -5), (3, -2)])
    assert materialize(s).as_dict() == {7: -5}
    with pytest.raises(TurnstileViolation):
        materialize(Stream.from_updates(8, 10, [(1, 11)]))


def test_prefix_violation_detected_even_if_final_is_fine():
    s = Stream.from_updates(4, 5, [(2, 4), (2, 4), (2, -6)])
    with pytest.raises(TurnstileViolation):
        materialize(s)
    ok = Stream.from_updates(4, 5, [(2, 4), (2, -6), (2, 4)])
    assert materialize(ok).as_dict() == {2: 2}


def test_exact_gsum_examples():
    sq = make_builtin("power", 2)
    assert exact_gsum(Stream(8, 10), sq) == 0.0
    assert exact_gsum(Stream.from_updates(8, 10, [(7, -5)]), sq) == 25.0
    assert exact_gsum(Stream.from_updates(4, 10, [(1, 2), (2, 2)]), make_builtin("gnp")) == 1.0
    vec = FrequencyVector.from_dict(8, {7: -5})
    assert exact_gsum(vec, sq) == 25.0


@given(st.integers(1, 40), st.lists(st.tuples(st.integers(1, 40), st.integers(-3, 3)), max_size=60))
def test_materialize_matches_dict_replay(n, ups):
    ups = [(min(i, n), d) for i, d in ups]
    s = Stream.from_updates(n, 200, ups)
    assert materialize(s).as_dict() == naive_vector(s)


def test_stream_validation():
    with pytest.raises(InvalidParams):
        Stream(4, 10, [5], [1])
    with pytest.raises(InvalidParams):
        Stream(4, 2**31 + 1)
    with pytest.raises(InvalidParams):
        Stream(0, 10)


def test_text_round_trip_and_format_errors():
    s = gen_random_stream(4, 50, 30, "zipf:1.1")
    text = format_stream(s)
    assert parse_stream(text) == s
    assert parse_stream("# c\n4 10\n\n1 3\n# x\n2 -1\n") == Stream.from_updates(4, 10, [(1, 3), (2, -1)])
    for bad in ("", "4\n", "4 10\n1 2 3\n", "4 10\nx 1\n", "4 10\n9 1\n"):
        with pytest.raises(StreamFormatError):
            parse_stream(bad)


def test_split_concat_negate():
    s = gen_random_stream(1, 30, 20, "uniform")
    a, b = s.split(len(s) // 3)
    assert a.concat(b) == s
    both = s.concat(s.negated())
    assert len(materialize(both)) == 0
    assert list(s)[0] == StreamUpdate(int(s.items[0]), int(s.deltas[0]))


def test_generator_examples():
    s = gen_random_stream(1, 16, 100, "single-heavy:50")
    vec = materialize(s)
    assert len(vec) == 1 and abs(int(vec.values[0])) == 50
    assert format_stream(gen_random_stream(1, 16, 100, "single-heavy:50")) == format_stream(s)
    z = materialize(gen_random_stream(2, 1000, 1000, "zipf:1.1"))
    assert np.abs(z.values).max() <= 1000


@pytest.mark.parametrize("profile", ["uniform", "zipf:1.3", "single-heavy:7", "planted-hh:3,90,4", "planted-hh:2,50,1,20"])
def test_generated_streams_keep_promise(profile):
    for seed in range(5):
        s = gen_random_stream(seed, 64, 100, profile)
        vec = materialize(s)
        assert np.abs(vec.values).max(initial=0) <= 100


def test_planted_profile_shape():
    vec = materialize(gen_random_stream(3, 100, 100, "planted-hh:3,90,4,20"))
    mags = sorted(np.abs(vec.values).tolist())
    assert mags == [4] * 20 + [90] * 3


def test_profile_parsing():
    assert parse_profile("zipf(1.1)").params == (1.1,)
    assert parse_profile("planted-hh(k=3, heavy=500, noise=2)").params == (3, 500, 2)
    for bad in ("nope", "zipf", "uniform:1", "zipf:x"):
        with pytest.raises(InvalidProfile):
            parse_profile(bad)
    with pytest.raises(InvalidProfile):
        gen_random_stream(1, 10, 10, "single-heavy:50")


def multiset(stream):
    return sorted(np.abs(materialize(stream).values).tolist())


def test_slowdrop_index_examples():
    p = {"x": 3, "y": 16, "size": 3}
    assert multiset(gen_lowerbound_instance("slowdrop-index", p, True)) == [16, 16, 19]
    assert multiset(gen_lowerbound_instance("slowdrop-index", p, False)) == [3, 16, 16, 16]


LB_PARAMS = {
    "slowdrop-index": {"x": 3, "y": 16, "size": 5, "n": 20},
    "slowjump-disjind": {"x": 2, "y": 11, "alpha": 0.5},
    "predict-index": {"x": 40, "y": 3, "size": 4, "n": 9},
    "slowdrop-disj2": {"x": 2, "y": 7, "n": 30, "size1": 6, "size2": 9},
    "slowjump-disjt": {"x": 3, "y": 11, "n": 40, "size": 5},
}


@pytest.mark.parametrize("kind", LOWERBOUND_KINDS)
@pytest.mark.parametrize("gname", [("power", 3), ("power", 1.5), ("gnp",), ("recip",)])
def test_lowerbound_closed_forms(kind, gname):
    g = make_builtin(gname[0], gname[1:])
    for seed in range(3):
        p = dict(LB_PARAMS[kind], seed=seed)
        a1, a2 = lowerbound_values(kind, p, g)
        assert exact_gsum(gen_lowerbound_instance(kind, p, True), g) == pytest.approx(a1, rel=1e-12)
        assert exact_gsum(gen_lowerbound_instance(kind, p, False), g) == pytest.approx(a2, rel=1e-12)


def test_disj2_without_complement():
    g = make_builtin("power", 2)
    p = {"x": 2, "y": 7, "n": 30, "size1": 6, "size2": 9, "complement": False}
    a1, a2 = lowerbound_values("slowdrop-disj2", p, g)
    assert exact_gsum(gen_lowerbound_instance("slowdrop-disj2", p, True), g) == pytest.approx(a1)
    assert exact_gsum(gen_lowerbound_instance("slowdrop-disj2", p, False), g) == pytest.approx(a2)


def test_paired_instances_share_randomness():
    p = {"x": 2, "y": 9, "n": 60, "size": 6, "seed": 4}
    a = gen_lowerbound_instance("slowjump-disjt", p, True)
    b = gen_lowerbound_instance("slowjump-disjt", p, False)
    # the two cases differ only in the shared element of each set
    da, db = materialize(a).as_dict(), materialize(b).as_dict()
    assert len(set(da) ^ set(db)) <= 2 * resolve_lowerbound("slowjump-disjt", p).t


def test_lowerbound_param_errors():
    with pytest.raises(InvalidParams):
        resolve_lowerbound("slowdrop-index", {"x": 5, "y": 3})
    with pytest.raises(InvalidParams):
        resolve_lowerbound("predict-index", {"x": 3, "y": 5})
    with pytest.raises(InvalidParams):
        resolve_lowerbound("slowjump-disjt", {"x": 2, "y": 9, "n": 5, "size": 6})
    with pytest.raises(InvalidParams):
        resolve_lowerbound("bogus", {"x": 1, "y": 2})
    with pytest.raises(InvalidParams):
        resolve_lowerbound("slowdrop-index", {"y": 3})


def test_disjind_gap_for_cubes():
    g = make_builtin("power", 3)
    for x in (1, 2, 3):
        for s in (8, 12, 20):
            y = s * x + 1
            p = {"x": x, "y": y, "alpha": 0.5}
            lay = resolve_lowerbound("slowjump-disjind", p)
            a1, a2 = lowerbound_values("slowjump-disjind", p, g)
            n_prime = sum(lay.sizes)
            assert a1 - a2 >= (n_prime * g(x) + g(y)) / 6
