"""Command line entry point: ``gsum <subcommand> [flags]``.

Reports go to stdout as JSON (or flat TSV with ``--format tsv``). Errors go
to stderr as one JSON object. Exit status is 0 on success, 2 on a usage
error and 3 on a data error such as a turnstile violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from collections import OrderedDict

import numpy as np

from .errors import GsumError, InvalidParams
from .stream import (LOWERBOUND_KINDS, exact_gsum, format_stream, gen_lowerbound_instance,
                     gen_random_stream, materialize, read_stream)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def _kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gsum", description="g-SUM estimation and function classification on turnstile streams.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, g=True, stream=True, fmt=True):
        if g:
            sp.add_argument("--g", required=True, help="function spec, e.g. power:2, gnp, expr:x^2*log(1+x)")
        if stream:
            sp.add_argument("--in", dest="input", default="-", help="stream file or '-' for stdin")
        sp.add_argument("--seed", type=int, default=0)
        if fmt:
            sp.add_argument("--format", choices=("json", "tsv"), default="json")

    sp = sub.add_parser("estimate", help="estimate the g-sum of a stream")
    common(sp)
    sp.add_argument("--eps", type=float, default=0.2)
    sp.add_argument("--passes", type=int, choices=(1, 2), default=2)
    sp.add_argument("--method", choices=("layered", "recursive"), default="layered")
    sp.add_argument("--timing", action="store_true", help="report wall time (output is then not reproducible)")

    sp = sub.add_parser("exact", help="exact g-sum of a stream")
    common(sp)

    sp = sub.add_parser("classify", help="finite-scale witness search for the tractability conditions")
    common(sp, stream=False)
    sp.add_argument("--alpha", type=_floats, default=(0.25, 0.5, 1.0))
    sp.add_argument("--gamma", type=_floats, default=(0.25, 0.5))
    sp.add_argument("--eps", type=float, default=0.05)
    sp.add_argument("--N", type=int, default=16)
    sp.add_argument("--M", type=int, default=1 << 14)
    sp.add_argument("--h-s", type=float, default=0.1, help="constant for the sub-polynomial h family")
    sp.add_argument("--h-p", type=float, default=0.25, help="exponent for the polynomial h family")
    sp.add_argument("--eta", type=float, default=None, help="classify g(x) log^eta(1+x) instead")

    sp = sub.add_parser("hh", help="heavy hitter cover of a stream")
    common(sp)
    sp.add_argument("--lam", type=float, default=0.01)
    sp.add_argument("--eps", type=float, default=0.2)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--passes", type=int, choices=(1, 2), default=2)
    sp.add_argument("--save-sketch", default=None, help="write the first-pass CountSketch to this file")

    sp = sub.add_parser("gen", help="generate a stream in the text format")
    sp.add_argument("--n", type=int, default=1024)
    sp.add_argument("--M", type=int, default=1000)
    sp.add_argument("--profile", default="zipf:1.1")
    sp.add_argument("--lowerbound", choices=LOWERBOUND_KINDS, default=None)
    sp.add_argument("--param", type=_kv, action="append", default=[], help="lower-bound parameter key=value")
    sp.add_argument("--intersecting", action="store_true")
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("np-recover", help="recover a single lowest-set-bit heavy hitter")
    common(sp, g=False)
    sp.add_argument("--lam", type=float, default=0.05)

    sp = sub.add_parser("dist", help="decide (u,d)-DIST with residue counters")
    common(sp, g=False)
    sp.add_argument("--u", type=_ints, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--t", type=int, default=None, help="number of pieces")
    sp.add_argument("--c3", type=float, default=1.0)
    sp.add_argument("--mode", choices=("exact", "mod"), default="exact")

    sp = sub.add_parser("merge", help="merge serialized sketches")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", choices=("json", "tsv"), default="json")

    sp = sub.add_parser("bench", help="accuracy and space table over generated streams")
    sp.add_argument("--g", required=True)
    sp.add_argument("--n", type=int, default=1 << 12)
    sp.add_argument("--M", type=int, default=1000)
    sp.add_argument("--profile", default="zipf:1.2")
    sp.add_argument("--eps", type=float, default=0.2)
    sp.add_argument("--passes", type=int, choices=(1, 2), default=2)
    sp.add_argument("--trials", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=("json", "tsv"), default="tsv")
    return p


# ------------------------------------------------------------ commands


def _gfun(spec: str):
    from .gfunc import parse_gspec

    return parse_gspec(spec)


def cmd_estimate(a) -> dict:
    from .estimator import estimate_gsum

    g = _gfun(a.g)
    stream = read_stream(a.input)
    materialize(stream)  # reject promise violations before sketching
    rep = estimate_gsum(stream, g, a.eps, a.passes, a.seed, a.method, timing=a.timing)
    return rep.as_dict()


def cmd_exact(a) -> dict:
    g = _gfun(a.g)
    return OrderedDict(gsum=exact_gsum(read_stream(a.input), g))


def cmd_classify(a) -> dict:
    from .classifier import ClassifierParams, classify, transform_L_eta

    g = _gfun(a.g)
    if a.eta is not None:
        g = transform_L_eta(g, a.eta)
    params = ClassifierParams(tuple(a.alpha), tuple(a.gamma), a.eps, a.N, a.M, a.h_s, a.h_p)
    if g.domain_bound < 2 * a.M:
        raise InvalidParams("scan range exceeds the function's domain bound")
    return classify(g, params).as_dict()


def cmd_hh(a) -> dict:
    from .gfunc import compute_envelope
    from .hashing import derive_seed
    from .heavy import HHConfig, run_heavy_hitters
    from .sketch import CountSketch

    g = _gfun(a.g)
    stream = read_stream(a.input)
    materialize(stream)
    env = compute_envelope(g, max(stream.M, 1), min(a.eps, 0.49))
    cfg = HHConfig(a.lam, a.eps, a.delta, g, env, a.passes)
    cover = run_heavy_hitters(stream, cfg, a.seed)
    out = cover.as_dict()
    if a.save_sketch:
        lam_cs, eps_cs, delta_cs = cfg.sketch_dims(stream.n)
        cs = CountSketch.for_accuracy(stream.n, lam_cs, eps_cs, delta_cs, derive_seed(a.seed, "hh-cs"),
                                      cfg.buckets_for(stream.n))
        cs.update_stream(stream)
        with open(a.save_sketch, "wb") as fh:
            fh.write(cs.to_bytes())
    return out


def cmd_gen(a) -> str:
    if a.lowerbound:
        params = {}
        for k, v in a.param:
            try:
                params[k] = int(v)
            except ValueError:
                try:
                    params[k] = float(v)
                except ValueError:
                    params[k] = v.lower() in ("1", "true", "yes")
        stream = gen_lowerbound_instance(a.lowerbound, params, a.intersecting)
    else:
        stream = gen_random_stream(a.seed, a.n, a.M, a.profile)
    return format_stream(stream)


def cmd_np_recover(a) -> dict:
    from .exotic import NpSketch

    stream = read_stream(a.input)
    materialize(stream)
    sk = NpSketch(stream.n, a.lam, a.seed)
    sk.update_stream(stream)
    found = sk.recover()
    return OrderedDict(
        found=found is not None,
        item=found[0] if found else None,
        weight=found[1] if found else None,
        config=OrderedDict(n=stream.n, lam=a.lam, C=sk.C, D=sk.D, bits=sk.B, counters=sk.counters, seed=a.seed),
    )


def cmd_dist(a) -> dict:
    from .exotic import DistConfig, dist_decide

    stream = read_stream(a.input)
    cfg = DistConfig(tuple(a.u), a.d, stream.n, a.c3, a.t, a.mode)
    out = dist_decide(stream, cfg, a.seed).as_dict()
    out["seed"] = a.seed
    return out


def cmd_merge(a) -> dict:
    from .sketch import load_sketch

    states = []
    for path in a.inputs:
        with open(path, "rb") as fh:
            states.append(load_sketch(fh.read()))
    acc = states[0]
    for s in states[1:]:
        acc = acc.merge(s)
    blob = acc.to_bytes()
    with open(a.out, "wb") as fh:
        fh.write(blob)
    return OrderedDict(kind=acc.kind, inputs=len(states), n=acc.n, seed=acc.seed,
                       shape=list(acc.table.shape), sha256=hashlib.sha256(blob).hexdigest(), out=a.out)


def cmd_bench(a) -> dict:
    from .estimator import estimate_gsum
    from .gfunc import compute_envelope

    g = _gfun(a.g)
    env = compute_envelope(g, a.M, min(a.eps, 0.49))
    rows = []
    for t in range(a.trials):
        seed = a.seed + t
        stream = gen_random_stream(seed, a.n, a.M, a.profile)
        truth = exact_gsum(stream, g)
        rep = estimate_gsum(stream, g, a.eps, a.passes, seed, envelope=env, timing=False)
        err = abs(rep.estimate / truth - 1) if truth else (0.0 if rep.estimate == 0 else math.inf)
        rows.append(OrderedDict(seed=seed, exact=truth, estimate=rep.estimate, rel_error=err,
                                ok=err <= a.eps, counters=rep.space["total_counters"]))
    errs = np.array([r["rel_error"] for r in rows])
    summary = OrderedDict(g=g.name, n=a.n, M=a.M, profile=a.profile, eps=a.eps, passes=a.passes,
                          trials=a.trials, success=float(np.mean(errs <= a.eps)) if rows else 0.0,
                          median_rel_error=float(np.median(errs)) if rows else 0.0)
    return OrderedDict(summary=summary, rows=rows)


COMMANDS = {
    "estimate": cmd_estimate,
    "exact": cmd_exact,
    "classify": cmd_classify,
    "hh": cmd_hh,
    "gen": cmd_gen,
    "np-recover": cmd_np_recover,
    "dist": cmd_dist,
    "merge": cmd_merge,
    "bench": cmd_bench,
}


# ------------------------------------------------------------- output


def _tsv(report) -> str:
    if isinstance(report, dict) and "rows" in report and isinstance(report["rows"], list):
        rows = report["rows"]
        lines = []
        if rows:
            keys = list(rows[0].keys())
            lines.append("\t".join(keys))
            lines.extend("\t".join(_cell(r[k]) for k in keys) for r in rows)
        lines.extend(f"# {k}\t{_cell(v)}" for k, v in report.get("summary", {}).items())
        return "\n".join(lines) + "\n"
    return "".join(f"{k}\t{_cell(v)}\n" for k, v in report.items())


def _cell(v) -> str:
    if isinstance(v, (dict, list)):
        return json.dumps(v, separators=(",", ":"))
    if v is None:
        return ""
    return str(v)


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        report = COMMANDS[args.command](args)
    except GsumError as exc:
        _emit_error(exc.code, str(exc))
        return EXIT_DATA if exc.data_error else EXIT_USAGE
    except OSError as exc:
        _emit_error("io", str(exc))
        return EXIT_USAGE
    if isinstance(report, str):
        sys.stdout.write(report)
    elif getattr(args, "format", "json") == "tsv":
        sys.stdout.write(_tsv(report))
    else:
        sys.stdout.write(json.dumps(report) + "\n")
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
