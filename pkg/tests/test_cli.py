import json

import pytest

from gsum.cli import run
from gsum.exotic import gen_dist_instance, gen_np_instance
from gsum.gfunc import parse_gspec
from gsum.stream import exact_gsum, format_stream, parse_stream


def call(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def small_stream(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("4 2\n1 2\n2 1\n2 1\n")
    return str(p)


@pytest.fixture
def gen_stream(tmp_path, capsys):
    code, out, _ = call(capsys, "gen", "--n", "256", "--M", "100", "--seed", "3")
    assert code == 0
    p = tmp_path / "g.txt"
    p.write_text(out)
    return str(p)


def test_exact_gnp(capsys, small_stream):
    code, out, err = call(capsys, "exact", "--g", "gnp", "--in", small_stream)
    assert code == 0 and err == ""
    assert json.loads(out) == {"gsum": 1.0}


def test_exact_stdin(capsys, monkeypatch):
    import io

    monkeypatch.setattr("sys.stdin", io.StringIO("4 5\n3 5\n"))
    code, out, _ = call(capsys, "exact", "--g", "power:2")
    assert code == 0 and json.loads(out)["gsum"] == 25.0


def test_gen_round_trip(capsys, gen_stream):
    with open(gen_stream) as fh:
        text = fh.read()
    s = parse_stream(text)
    assert format_stream(s) == text
    code, out, err = call(capsys, "exact", "--g", "power:1.5", "--in", gen_stream)
    assert code == 0 and err == ""
    assert json.loads(out)["gsum"] == pytest.approx(exact_gsum(s, parse_gspec("power:1.5")))


def test_gen_deterministic(capsys):
    a = call(capsys, "gen", "--n", "64", "--seed", "5")[1]
    b = call(capsys, "gen", "--n", "64", "--seed", "5")[1]
    c = call(capsys, "gen", "--n", "64", "--seed", "6")[1]
    assert a == b and a != c


def test_gen_lowerbound(capsys, tmp_path):
    code, out, _ = call(capsys, "gen", "--lowerbound", "predict-index", "--param", "x=4", "--param", "y=1",
                        "--intersecting")
    assert code == 0
    assert parse_stream(out).n >= 1


def test_estimate_deterministic(capsys, gen_stream):
    argv = ("estimate", "--g", "power:2", "--eps", "0.2", "--passes", "2", "--seed", "7", "--in", gen_stream)
    code, out1, _ = call(capsys, *argv)
    assert code == 0
    out2 = call(capsys, *argv)[1]
    assert out1 == out2
    rep = json.loads(out1)
    assert list(rep)[:4] == ["estimate", "passes", "method", "eps"]
    assert rep["wall_time"] is None
    s = parse_stream(open(gen_stream).read())
    truth = exact_gsum(s, parse_gspec("power:2"))
    assert abs(rep["estimate"] / truth - 1) < 0.5


def test_estimate_timing(capsys, gen_stream):
    code, out, _ = call(capsys, "estimate", "--g", "power:1", "--passes", "1", "--timing", "--in", gen_stream)
    assert code == 0 and json.loads(out)["wall_time"] >= 0


def test_estimate_tsv(capsys, gen_stream):
    code, out, _ = call(capsys, "estimate", "--g", "power:1", "--format", "tsv", "--in", gen_stream)
    assert code == 0
    keys = [line.split("\t")[0] for line in out.strip().splitlines()]
    assert keys[0] == "estimate" and "space" in keys


def test_classify_power3(capsys):
    code, out, _ = call(capsys, "classify", "--g", "power:3", "--M", "16384")
    assert code == 0
    v = json.loads(out)
    assert v["predicted_class"] == "intractable-candidate"
    assert v["slow_jumping"]["holds"] is False
    assert any(r["witness"] for r in v["slow_jumping"]["results"] if not r["holds"])


def test_classify_small_scan(capsys):
    code, out, _ = call(capsys, "classify", "--g", "power:2", "--M", "1024", "--alpha", "0.5", "--gamma", "0.5")
    assert code == 0
    assert json.loads(out)["predicted_class"] == "1-pass-tractable"


def test_hh_and_merge(capsys, tmp_path, gen_stream):
    blob = tmp_path / "whole.sk"
    code, out, _ = call(capsys, "hh", "--g", "power:2", "--lam", "0.05", "--in", gen_stream,
                        "--save-sketch", str(blob))
    assert code == 0
    cover = json.loads(out)
    assert isinstance(cover, dict)
    merged = tmp_path / "m.sk"
    code, out, _ = call(capsys, "merge", str(blob), str(blob), "--out", str(merged))
    assert code == 0
    info = json.loads(out)
    assert info["inputs"] == 2 and merged.exists()

    from gsum.sketch import load_sketch

    whole = load_sketch(blob.read_bytes())
    twice = load_sketch(merged.read_bytes())
    assert (twice.table == 2 * whole.table).all()


def test_merge_mismatch_is_data_error(capsys, tmp_path, gen_stream):
    a, b = tmp_path / "a.sk", tmp_path / "b.sk"
    assert call(capsys, "hh", "--g", "power:2", "--in", gen_stream, "--seed", "1", "--save-sketch", str(a))[0] == 0
    assert call(capsys, "hh", "--g", "power:2", "--in", gen_stream, "--seed", "2", "--save-sketch", str(b))[0] == 0
    code, _, err = call(capsys, "merge", str(a), str(b), "--out", str(tmp_path / "c.sk"))
    assert code == 3
    assert "error" in json.loads(err)


def test_np_recover(capsys, tmp_path):
    s, item, val = gen_np_instance(1024, 20, 4)
    p = tmp_path / "np.txt"
    p.write_text(format_stream(s))
    code, out, _ = call(capsys, "np-recover", "--in", str(p), "--lam", "0.1", "--seed", "4")
    assert code == 0
    r = json.loads(out)
    assert set(r) == {"found", "item", "weight", "config"}
    if r["found"]:
        assert r["item"] == item


def test_dist(capsys, tmp_path):
    s = gen_dist_instance(4096, (3, 5), 1, 30, True, 0)
    p = tmp_path / "d.txt"
    p.write_text(format_stream(s))
    code, out, _ = call(capsys, "dist", "--u", "3,5", "--d", "1", "--in", str(p))
    assert code == 0
    r = json.loads(out)
    assert r["decision"] == "present"
    assert r["config"]["q"] == 3


def test_dist_config_error(capsys, small_stream):
    code, _, err = call(capsys, "dist", "--u", "3,5", "--d", "5", "--in", small_stream)
    assert code == 2
    assert json.loads(err)["error"]


def test_bench_tsv(capsys):
    code, out, _ = call(capsys, "bench", "--g", "power:2", "--n", "256", "--M", "50", "--trials", "2")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].split("\t")[:3] == ["seed", "exact", "estimate"]
    assert any(line.startswith("# success") for line in lines)


@pytest.mark.parametrize("argv", [
    ("estimate", "--g", "power:2", "--passes", "3"),
    ("estimate", "--g", "power:2", "--bogus", "1"),
    ("frobnicate",),
    ("exact",),
    ("exact", "--g", "nosuchfunction", "--in", "x"),
])
def test_usage_errors(capsys, argv):
    code, out, err = call(capsys, *argv)
    assert code == 2
    assert out == ""
    assert len(err.strip().splitlines()) == 1
    assert "error" in json.loads(err)


def test_missing_file(capsys):
    code, _, err = call(capsys, "exact", "--g", "power:2", "--in", "/nonexistent/stream.txt")
    assert code == 2 and json.loads(err)["error"] == "io"


@pytest.mark.parametrize("text", ["4 2\n1 99999999999999999999\n", "4 2\n9 1\n", "garbage\n", "4 2\n1 3\n"])
def test_data_errors(capsys, tmp_path, text):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    code, out, err = call(capsys, "estimate", "--g", "power:2", "--in", str(p))
    assert code == 3
    assert out == ""
    assert "error" in json.loads(err)


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
