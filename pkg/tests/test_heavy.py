import math

import numpy as np
import pytest

from gsum.errors import EnvelopeMissing, InvalidParams
from gsum.gfunc import compute_envelope, make_builtin, parse_gspec
from gsum.heavy import Cover, HHConfig, heavy_items, hh_one_pass, hh_two_pass, is_heavy, prune_mask, run_heavy_hitters
from gsum.stream import FrequencyVector, Stream, gen_random_stream, materialize


def vec_100_ones():
    return FrequencyVector.from_dict(60, {1: 100, **{i: 1 for i in range(2, 52)}})


def stream_of(vec, M):
    return Stream(vec.n, M, vec.items, vec.values)


def test_is_heavy_examples():
    sq = make_builtin("power", 2)
    single = FrequencyVector.from_dict(5, {3: 4})
    assert is_heavy(single, sq, 1.0, 3)
    assert is_heavy(vec_100_ones(), sq, 0.5, 1)
    flat = FrequencyVector.from_dict(5, {1: 3, 2: 3, 3: 3})
    assert not any(is_heavy(flat, sq, 1.0, i) for i in (1, 2, 3))
    assert heavy_items(vec_100_ones(), sq, 0.5) == [1]


def config(spec, M, lam=0.01, eps=0.2, delta=0.1, passes=2):
    g = parse_gspec(spec)
    return HHConfig(lam, eps, delta, g, compute_envelope(g, M, eps), passes)


def test_config_validation():
    g = make_builtin("power", 2)
    with pytest.raises(InvalidParams):
        HHConfig(0.0, 0.1, 0.1, g, None)
    with pytest.raises(InvalidParams):
        HHConfig(0.1, 0.1, 0.1, g, None, passes=3)
    with pytest.raises(EnvelopeMissing):
        HHConfig(0.1, 0.1, 0.1, g, None).H


def test_two_pass_examples():
    cfg = config("power:2", 100, lam=0.5)
    assert len(hh_two_pass(Stream(60, 100), cfg)) == 0
    cover = hh_two_pass(stream_of(vec_100_ones(), 100), cfg, seed=3)
    assert cover.weight(1) == 10000.0
    assert cover.as_dict()["pairs"][0] == {"item": 1, "weight": 10000.0}
    assert cover.items == sorted(cover.items)


def test_two_pass_finds_planted_item_exactly():
    cfg = config("power:1.5", 1000, lam=0.05)
    hits = 0
    for seed in range(100):
        s = gen_random_stream(seed, 1000, 1000, "planted-hh:1,900,3,200")
        vec = materialize(s)
        hh = heavy_items(vec, cfg.g, cfg.lam)
        cover = hh_two_pass(s, cfg, seed)
        assert len(cover) <= cfg.candidate_budget(s.n)
        hits += all(cover.weight(i) == cfg.g(abs(vec.get(i))) for i in hh)
    assert hits >= 90


def test_two_pass_weights_are_exact():
    cfg = config("log-poly", 1000, lam=0.02)
    s = gen_random_stream(1, 2000, 1000, "zipf:1.2")
    vec = materialize(s)
    for item, w in hh_two_pass(s, cfg, 1).pairs:
        assert w == cfg.g(abs(vec.get(item)))


def test_candidate_budget():
    cfg = config("power:2", 100, lam=0.5)
    H = cfg.envelope.base[100]
    assert cfg.H == H
    assert cfg.candidate_budget(60) == min(60, math.floor(2 * H / 0.5))
    assert cfg.candidate_budget(2) == 2
    cover = hh_two_pass(stream_of(vec_100_ones(), 100), cfg, seed=1)
    assert cover.info["candidates"] <= cover.info["budget"]


def test_one_pass_single_item():
    cfg = config("power:2", 100, lam=0.1, eps=0.1, passes=1)
    cover = hh_one_pass(Stream.from_updates(40, 100, [(7, 30), (7, 20)]), cfg, seed=2)
    assert cover.items == [7]
    assert abs(cover.weight(7) - 2500) <= 0.1 * 2500


def test_one_pass_gnp_heavy_among_even_noise():
    eps = 0.2
    g = make_builtin("gnp")
    env = compute_envelope(g, 512, eps)
    cfg = HHConfig(0.05, eps, 0.1, g, env, 1)
    rng = np.random.default_rng(0)
    hits = 0
    for seed in range(100):
        items = rng.choice(np.arange(1, 1001), size=41, replace=False)
        vals = np.r_[2 * rng.integers(0, 200) + 1, 4 * rng.integers(1, 100, size=40)]
        s = Stream(1000, 512, items, vals)
        hits += int(items[0]) in hh_one_pass(s, cfg, seed).items
    assert hits >= 90


def test_one_pass_weights_within_eps():
    cfg = config("power:2", 1000, lam=0.01, eps=0.2, passes=1)
    bad = 0
    trials = 200
    s = gen_random_stream(9, 1000, 1000, "planted-hh:3,700,5,300")
    vec = materialize(s)
    for seed in range(trials):
        cover = hh_one_pass(s, cfg, seed)
        bad += any(abs(w - cfg.g(abs(vec.get(i)))) > cfg.eps * cfg.g(abs(vec.get(i))) for i, w in cover.pairs)
    assert bad / trials <= cfg.delta + 3 * math.sqrt(cfg.delta * (1 - cfg.delta) / trials)


def test_prune_mask_rule():
    g = make_builtin("power", 2)
    assert prune_mask(g, np.array([0, 5, -9]), 0, 0.1).tolist() == [False, True, True]
    keep = prune_mask(g, np.array([100, 3]), 4, 0.1)
    # 104^2 stays within 10% of 100^2 but a window around 3 reaches g(0) = 0
    assert keep.tolist() == [True, False]
    assert prune_mask(g, np.array([100]), 5, 0.1).tolist() == [False]


def test_heavy_hitter_f2_inequality_on_corpus():
    # v_i^2 >= (lam / H(|v_i|)) * sum of v_j^2 over smaller |v_j|, for heavy i
    for spec in ("power:1.5", "power:2", "log-poly", "sin-sqrt-sq"):
        g = parse_gspec(spec)
        env = compute_envelope(g, 1000, 0.2)
        for seed in range(5):
            vec = materialize(gen_random_stream(seed, 3000, 1000, "zipf:1.1"))
            mags = np.abs(vec.values).astype(float)
            for lam in (0.01, 0.1):
                for i in heavy_items(vec, g, lam):
                    vi = abs(vec.get(i))
                    smaller = mags[mags < vi]
                    assert vi**2 >= lam / env.base[vi] * float(np.sum(smaller**2)) * (1 - 1e-12)
                    # at most H(M)/lam items are at least as large as a heavy item
                    assert int(np.sum(mags >= vi)) <= env.base[1000] / lam + 1


def test_run_dispatch_and_json():
    cfg1 = config("power:2", 100, lam=0.2, passes=1)
    cfg2 = config("power:2", 100, lam=0.2, passes=2)
    s = stream_of(vec_100_ones(), 100)
    assert run_heavy_hitters(s, cfg1, 1).eps == 0.2
    assert run_heavy_hitters(s, cfg2, 1).eps == 0.0
    assert Cover([(3, 1.0), (1, 2.0)], 0.1, 0.0).to_json() == (
        '{"lambda": 0.1, "eps": 0.0, "pairs": [{"item": 1, "weight": 2.0}, {"item": 3, "weight": 1.0}]}')
    with pytest.raises(InvalidParams):
        hh_two_pass(s, cfg1)
    with pytest.raises(InvalidParams):
        hh_one_pass(s, cfg2)
