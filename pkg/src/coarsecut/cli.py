"""Command-line entry point.

Exit codes: 0 success, 1 invariant violation, 2 usage or input error.
Relative output paths resolve under ``$COARSECUT_OUT_DIR`` when it is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from . import __version__
from .analysis import DistortionProfile, certificate_check, exhaust, profile_from_matrix
from .decomposition import annulus_decompose, kpr_decompose, parameter_search
from .embedding import default_i_max, multiscale_embed, padding_from_block
from .formats import (
    dumps_json,
    graph_to_text,
    read_embedding,
    read_graph,
    read_measure,
    write_embedding_bin,
    write_embedding_csv,
)
from .graphcore import FAMILIES, FamilySpec, GraphError, VertexMeasure, generate, metric_of

OUT_ENV = "COARSECUT_OUT_DIR"

log = logging.getLogger("coarsecut")


class UsageError(Exception):
    pass


def _out_path(p: str | None) -> Path | None:
    if p is None:
        return None
    path = Path(p)
    base = os.environ.get(OUT_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    return path


def _emit(text: str, out: str | None) -> None:
    path = _out_path(out)
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _config(args, drop=("out", "func")) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in drop}
    cfg["version"] = __version__
    return cfg


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    spec = FamilySpec(
        args.family,
        n=args.n,
        rows=args.rows,
        cols=args.cols,
        dim=args.dim,
        degree=args.degree,
        seed=args.seed,
    )
    g = generate(spec)
    _emit(graph_to_text(g), args.out)
    return 0


def cmd_decompose(args) -> int:
    g = read_graph(args.graph)
    if args.variant == "annulus":
        if args.s is None or args.t is None:
            raise UsageError("annulus variant requires --s and --t")
        nu = read_measure(args.measure) if args.measure else VertexMeasure.uniform(g.n)
        if not isinstance(nu, VertexMeasure):
            raise UsageError("annulus variant needs a vertex measure")
        dec = annulus_decompose(g, nu, args.s, args.t, args.rounds)
    else:
        if args.delta is None:
            raise UsageError("residue variant requires --delta")
        if args.offsets:
            offsets = [int(x) for x in args.offsets.split(",")]
        elif args.seed is not None:
            rng = np.random.default_rng([args.seed, args.delta, 0])
            offsets = [int(x) for x in rng.integers(1, args.delta + 1, size=args.rounds)]
        else:
            raise UsageError("residue variant requires --offsets or --seed")
        dec = kpr_decompose(g, args.delta, args.rounds, offsets, not args.exclude_leader)
    body = dec.to_json()
    body["partition_ok"] = dec.check_partition(g)
    body["config"] = _config(args)
    _emit(dumps_json(body), args.out)
    return 0 if body["partition_ok"] else 1


def cmd_embed(args) -> int:
    g = read_graph(args.graph)
    m = metric_of(g)
    i_max = args.i_max or default_i_max(m.diameter)
    p = multiscale_embed(
        g, args.rounds, i_max, args.samples, args.seed, args.base, not args.exclude_leader, args.clamp
    )
    outdir = _out_path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    scales = [(b.index, b.delta, p.centred(b)) for b in p.blocks]
    dump = outdir / ("embedding.bin" if args.format == "bin" else "embedding.csv")
    if args.format == "bin":
        write_embedding_bin(dump, scales)
    else:
        write_embedding_csv(dump, scales)
    report = {
        "config": _config(args),
        "graph": {"n": g.n, "m": g.m, "diameter": m.diameter},
        "i_max": i_max,
        "samples": args.samples,
        "rounds": args.rounds,
        "seed": args.seed,
        "base": args.base,
        "clamp": args.clamp,
        "include_leader": not args.exclude_leader,
        "dump": dump.name,
        "scales": [],
    }
    for b in p.blocks:
        pad = padding_from_block(b, args.rounds)
        report["scales"].append(
            {
                "index": b.index,
                "delta": b.delta,
                "weight": b.weight,
                "epsilon": pad.epsilon,
                "half_width": pad.half_width,
                "magnitude_violations": len(b.magnitude_violations()),
                "max_edge_jump": b.max_edge_jump(g),
                "base_row": b.values[args.base].tolist(),
                "offsets": b.offsets.tolist(),
            }
        )
    (outdir / "report.json").write_text(dumps_json(report))
    return 0


def _locate_dump(path: Path) -> tuple[Path, Path | None]:
    if path.is_dir():
        for name in ("embedding.csv", "embedding.bin"):
            if (path / name).exists():
                rep = path / "report.json"
                return path / name, rep if rep.exists() else None
        raise UsageError(f"no embedding dump in {path}")
    rep = path.parent / "report.json"
    return path, rep if rep.exists() else None


def verify_embedding(g, scales: dict[int, np.ndarray], report: dict | None) -> dict:
    """Check the exact invariants of a centred embedding dump; returns a JSON-ready result."""
    m = metric_of(g)
    d = m.dist.astype(np.float64)
    by_index = {s["index"]: s for s in report["scales"]} if report else {}
    checks = {"lipschitz": True, "upper_bound": True, "magnitude": True, "centred": True, "partition": True}
    details: dict[str, list] = {k: [] for k in checks}
    e = np.asarray(g.edges) if g.edges else np.zeros((0, 2), dtype=int)
    total = np.zeros_like(d)
    for index in sorted(scales):
        vals = scales[index]
        if vals.shape[0] != g.n:
            raise UsageError(f"dump has {vals.shape[0]} vertices, graph has {g.n}")
        delta = by_index.get(index, {}).get("delta", 2**index)
        if len(e):
            jump = float(np.abs(vals[e[:, 0]] - vals[e[:, 1]]).max())
            if jump > 1:
                checks["lipschitz"] = False
                details["lipschitz"].append({"scale": index, "max_edge_jump": jump})
        bd = cdist(vals, vals, metric="cityblock") / vals.shape[1]
        if np.any(bd > d):
            checks["upper_bound"] = False
            details["upper_bound"].append({"scale": index, "block_excess": float((bd - d).max())})
        total += (2.0 / 3.0) ** index * bd
        if report:
            base = report["base"]
            if np.any(vals[base] != 0):
                checks["centred"] = False
                details["centred"].append({"scale": index})
            info = by_index.get(index)
            if info is not None:
                raw = vals + np.asarray(info["base_row"], dtype=np.float64)[None, :]
                over = int(np.count_nonzero(2 * np.abs(raw) > delta))
                if over:
                    checks["magnitude"] = False
                    details["magnitude"].append({"scale": index, "delta": delta, "violations": over})
                seen = set()
                for lam in info["offsets"]:
                    key = tuple(lam)
                    if key in seen:
                        continue
                    seen.add(key)
                    dec = kpr_decompose(g, delta, len(key), key, report.get("include_leader", True))
                    if not dec.check_partition(g):
                        checks["partition"] = False
                        details["partition"].append({"scale": index, "offsets": list(key)})
    if np.any(total > 3 * d):
        checks["upper_bound"] = False
        details["upper_bound"].append({"total_excess": float((total - 3 * d).max())})
    profile = profile_from_matrix(total, m, {"n": g.n, "diameter": m.diameter})
    return {
        "ok": all(checks.values()),
        "checks": checks,
        "details": {k: v for k, v in details.items() if v},
        "profile": profile.to_json(),
        "report_used": report is not None,
    }


def cmd_verify(args) -> int:
    dump, rep = _locate_dump(Path(args.embedding))
    if args.report:
        rep = Path(args.report)
    g = read_graph(args.graph)
    scales = read_embedding(dump)
    report = json.loads(rep.read_text()) if rep else None
    result = verify_embedding(g, scales, report)
    _emit(dumps_json(result), args.out)
    if args.csv:
        prof = result["profile"]["buckets"]
        dp = DistortionProfile([b["t"] for b in prof], [b["rho1"] for b in prof], [b["rho2"] for b in prof], True)
        _emit(dp.to_csv(), args.csv)
    return 0 if result["ok"] else 1


def cmd_certify(args) -> int:
    g = read_graph(args.graph)
    m = metric_of(g)
    if not Path(args.measure).exists():
        raise UsageError(f"measure file {args.measure} not found")
    nu = read_measure(args.measure, m)
    if not isinstance(nu, VertexMeasure):
        nu = nu.marginal()
    T = Fraction(args.T)
    phi = Fraction(args.phi)
    res = exhaust(m, nu, args.s, T, phi, args.strategy)
    body = res.to_json()
    if res.status == "certificate":
        body["rechecked"] = certificate_check(res, m, nu, args.s, T)
    body["config"] = _config(args)
    _emit(dumps_json(body), args.out)
    if res.status == "certificate" and not body["rechecked"]:
        return 1
    return 0


def cmd_params(args) -> int:
    try:
        D = Fraction(args.D)
    except ValueError:
        raise UsageError(f"D must be a number, got {args.D!r}") from None
    if D <= 0:
        raise UsageError("D must be positive")
    if args.r < 2:
        raise UsageError("r must be >= 2")
    params = parameter_search(D, args.r)
    body = params.to_json()
    body["config"] = _config(args)
    _emit(dumps_json(body), args.out)
    return 0 if body["verified"] else 1


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coarsecut", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a graph from a named family")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--n", type=int)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("decompose", help="cut a graph into low-diameter pieces")
    p.add_argument("--graph", required=True)
    p.add_argument("--variant", choices=("residue", "annulus"), default="residue")
    p.add_argument("--delta", type=int)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--offsets", help="comma-separated offsets in [1, delta]")
    p.add_argument("--seed", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--measure")
    p.add_argument("--exclude-leader", action="store_true", help="never delete distance-0 vertices")
    p.add_argument("--out")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("embed", help="multi-scale random-sign embedding into L1")
    p.add_argument("--graph", required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--i-max", type=int)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--base", type=int, default=0)
    p.add_argument("--clamp", action="store_true", help="cap |f| at delta // 2")
    p.add_argument("--exclude-leader", action="store_true")
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("verify", help="check the exact invariants of an embedding dump")
    p.add_argument("--embedding", required=True, help="dump file or embed output directory")
    p.add_argument("--graph", required=True)
    p.add_argument("--report")
    p.add_argument("--csv", help="also write (t, rho1, rho2) as CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("certify", help="run the exhaustion process on a proximity graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--T", required=True)
    p.add_argument("--phi", required=True)
    p.add_argument("--strategy", choices=("exhaustive", "balls", "sweep", "candidates"), default="candidates")
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("params", help="search cut parameters (s, t, n) for given D and r")
    p.add_argument("--D", required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_params)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"coarsecut {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
