"""``qmc-uq`` command line entry point.

Exit status: 0 on success, 2 for usage errors, 3 when a method's
hypotheses are violated (undeclared property, too few replicates, ...).
"""

from __future__ import annotations

import argparse
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, certify, discrepancy, harness, pointgen, uq
from .errors import BudgetExceededError, PreconditionError, QmcUqError
from .integrands import FIXED_DIMENSION, FIXTURES, fixture
from .randomize import ALIASES, KINDS, canonical_kind, randomize_batch

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

EXIT_USAGE = 2
EXIT_PRECONDITION = 3

GUARANTEE_HELP = {
    "points": "guarantee classes: certain (deterministic constructions, no randomness)",
    "randomize": "guarantee classes: exact_finite_sample (each randomized point is uniform on [0,1)^d)",
    "discrepancy": "guarantee classes: certain (exact enumeration over the corner grid)",
    "certify": "guarantee classes: certain (brackets hold whenever the declared property holds)",
    "estimate": (
        "guarantee classes: asymptotic (student, normal, percentile, boot-t); "
        "exact_finite_sample (median: covers the replicate median; chebyshev with known sigma; "
        "hoeffding for [0,1]-valued integrands under plain Monte Carlo)"
    ),
    "integrands": "guarantee classes: certain (closed-form exact means)",
    "coverage": "guarantee classes: evaluates asymptotic and exact_finite_sample intervals empirically",
}


class UsageError(Exception):
    """Contradictory or malformed flags."""


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=harness._json_default)


def _emit(text: str, out: str | None) -> None:
    if out and out != "-":
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _manifest(args, subcommand: str, started: float) -> dict:
    flags = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return harness.manifest(subcommand, flags, getattr(args, "seed", None), time.time() - started)


# -- point CSV schema ---------------------------------------------------------------------


def write_points_csv(points: np.ndarray, manifest: dict) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(manifest, default=harness._json_default) + "\n")
    buf.write(",".join(f"x{j + 1}" for j in range(points.shape[1])) + "\n")
    for row in points:
        buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
    return buf.getvalue()


def read_points_csv(source: str | None) -> tuple[pointgen.PointSet, dict]:
    text = sys.stdin.read() if source in (None, "-") else Path(source).read_text()
    manifest, rows = {}, []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            try:
                manifest = json.loads(line[1:])
            except json.JSONDecodeError:
                pass
            continue
        if line[0].isalpha():
            continue
        rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise UsageError("no points found in input")
    pts = np.array(rows)
    ps = pointgen.PointSet(pts, "explicit", None, {"input": manifest}, closed=bool(pts.max() >= 1.0))
    return ps, manifest


def _rebuild(manifest: dict) -> pointgen.PointSet | None:
    """Recreate the generating net from a points manifest (needed for matrix scrambles)."""
    flags = manifest.get("flags", {})
    kind = flags.get("kind")
    if kind == "sobol":
        return pointgen.sobol_net(flags["d"], flags["m"])
    if kind == "hammersley" and flags.get("d", 2) == 2:
        return pointgen.digital_net(pointgen.hammersley_generators(flags["m"]))
    return None


# -- subcommands ---------------------------------------------------------------------------


def cmd_points(args, started) -> int:
    if args.n is not None and args.m is not None and args.n != 2**args.m:
        raise UsageError(f"--n {args.n} contradicts --m {args.m}")
    if args.kind in ("sobol", "hammersley"):
        if args.m is None:
            if args.n is None:
                raise UsageError(f"--{args.kind} needs --m or --n")
            args.m = uq._log2(args.n)
        if args.kind == "sobol":
            ps = pointgen.sobol_net(args.d, args.m)
        else:
            if args.d != 2:
                raise UsageError("hammersley points are two-dimensional (--d 2)")
            ps = pointgen.hammersley_2d(args.m, 2)
    else:
        n = args.n if args.n is not None else (2**args.m if args.m is not None else None)
        if n is None:
            raise UsageError(f"--{args.kind} needs --n or --m")
        if args.kind == "halton":
            ps = pointgen.halton(n, args.d)
        else:
            z = tuple(args.z) if args.z else pointgen.korobov_vector(n, args.d)
            ps = pointgen.rank1_lattice(pointgen.LatticeSpec(n, z), args.d)
    _emit(write_points_csv(ps.points, _manifest(args, "points", started)), args.out)
    return 0


def cmd_randomize(args, started) -> int:
    ps, source = read_points_csv(args.input)
    kind = canonical_kind(args.kind)
    if kind == "matrix_scramble_shift":
        net = _rebuild(source)
        if net is None or net.n != ps.n or not np.array_equal(net.points, ps.points):
            raise PreconditionError("matrix scrambles need generator matrices; pipe in Sobol' or Hammersley points")
        ps = net
    pts = randomize_batch(ps, kind, args.seed, [args.replicate])[0]
    man = _manifest(args, "randomize", started)
    man["source"] = source
    _emit(write_points_csv(pts, man), args.out)
    return 0


def cmd_discrepancy(args, started) -> int:
    ps, _ = read_points_csv(args.input)
    if args.check == "star":
        out = discrepancy.star_discrepancy_exact(ps, args.budget).to_dict()
    else:
        find = discrepancy.nnld_witness if args.check == "nnld" else discrepancy.npld_witness
        bad = find(ps, args.budget)
        out = {"check": args.check, "passed": bad is None,
               "witness": None if bad is None else {"corner": list(bad[0]), "delta": bad[1]}}
    out["n"], out["d"] = ps.n, ps.d
    out["manifest"] = _manifest(args, "discrepancy", started)
    _emit(_dumps(out) + "\n", None)
    return 0


_ONE_D = ("endpoint", "mid-trap", "simpson")


def _params(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--param expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        vals = [float(v) for v in value.split(";")]
        out[key] = vals[0] if len(vals) == 1 else vals
    return out


def _integrand(name: str, d: int | None, params):
    if name not in FIXTURES:
        raise UsageError(f"unknown integrand {name!r}; known: {', '.join(sorted(FIXTURES))}")
    if name in FIXED_DIMENSION and d not in (None, FIXED_DIMENSION[name]):
        raise UsageError(f"{name} has fixed dimension {FIXED_DIMENSION[name]}")
    return fixture(name, d, **_params(params))


def cmd_certify(args, started) -> int:
    d = args.d if args.d is not None else (1 if args.method in _ONE_D else None)
    f = _integrand(args.integrand, d, args.param)
    if args.method == "endpoint":
        cert = certify.bracket_endpoint(f, args.n)
    elif args.method in ("mid-trap", "simpson"):
        cert = certify.bracket_mid_trap(f, args.n)
    elif args.method == "product-convex":
        cert = certify.bracket_product_convex(f, args.m if args.m is not None else args.n)
    elif args.method == "simplex":
        cert = certify.bracket_kuhn(f)
    else:
        m = args.m if args.m is not None else 3
        cert = certify.bracket_completely_monotone(
            f, certify.nnld_construction(f.d, m), certify.npld_construction(f.d, m), verify=not args.no_verify
        )
    out = cert.to_dict()
    out["integrand"] = f.summary()
    out["manifest"] = _manifest(args, "certify", started)
    _emit(_dumps(out) + "\n", None)
    return 0


CI_METHODS = ("student", "normal", "percentile", "boot-t", "median", "chebyshev", "hoeffding", "hoeffding-sharp")


def cmd_estimate(args, started) -> int:
    f = _integrand(args.integrand, args.d, args.param)
    methods = [m.strip() for m in args.ci.split(",") if m.strip()]
    for m in methods:
        if m not in CI_METHODS:
            raise UsageError(f"unknown --ci method {m!r}; choose from {', '.join(CI_METHODS)}")
    if args.R < 2 and any(m in ("student", "normal", "percentile") for m in methods):
        raise PreconditionError(f"the {methods[0]} interval requires R >= 2 replicates, got R = {args.R}")
    pool = uq.rqmc_replicates(f, args.points, args.randomizer, args.n, args.R, args.seed)
    intervals = {}
    for m in methods:
        if m == "student":
            iv = uq.ci_student(pool, args.alpha)
        elif m == "normal":
            iv = uq.ci_normal(pool, args.alpha)
        elif m == "percentile":
            iv = uq.bootstrap_percentile(pool, args.alpha, args.B, args.seed)
        elif m == "boot-t":
            iv = uq.bootstrap_t(pool, args.alpha, args.B, args.seed)
        elif m == "median":
            iv = uq.ci_median_order_stat(pool, args.alpha)
        elif m == "chebyshev":
            if f.sigma is None:
                raise PreconditionError(f"{f.name} has no known sigma for the Chebyshev interval")
            iv = uq.ci_chebyshev(pool.mean, f.sigma, args.n * args.R, args.alpha)
        else:
            iv = uq.ci_hoeffding(pool.mean, args.n * args.R, args.alpha, f, sharp=m == "hoeffding-sharp")
        intervals[m] = iv.to_dict()
    out = {
        "pool": pool.summary(),
        "exact_mean": f.exact_mean,
        "intervals": intervals,
        "moments": uq.moments(pool).to_dict() if pool.R >= 3 else None,
        "manifest": _manifest(args, "estimate", started),
    }
    _emit(_dumps(out) + "\n", args.out)
    return 0


def cmd_integrands(args, started) -> int:
    rows = []
    for name in sorted(FIXTURES):
        d = FIXED_DIMENSION.get(name, args.d)
        rows.append(fixture(name, d).summary())
    if args.json:
        _emit(_dumps(rows) + "\n", None)
        return 0
    width = max(len(r["name"]) for r in rows)
    lines = [f"{'name':<{width}}  {'d':>2}  {'exact_mean':>20}  properties"]
    for r in rows:
        lines.append(f"{r['name']:<{width}}  {r['d']:>2}  {r['exact_mean']:>20.17g}  {', '.join(r['properties'])}")
    _emit("\n".join(lines) + "\n", None)
    return 0


def load_config(path: str) -> dict:
    p = Path(path)
    if p.suffix == ".json":
        return json.loads(p.read_text())
    with p.open("rb") as fh:
        return tomllib.load(fh)


def cmd_coverage(args, started) -> int:
    cfg = load_config(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise UsageError("coverage needs a master seed (--seed or 'seed' in the config)")
    if args.seed is not None and "seed" in cfg and cfg["seed"] != args.seed:
        raise UsageError(f"--seed {args.seed} contradicts config seed {cfg['seed']}")
    T = args.T if args.T is not None else cfg.get("T", 1000)
    threads = args.threads if args.threads is not None else cfg.get("threads", 1)
    grid = harness.StudyGrid.from_config(cfg)
    rows, skipped = harness.coverage_study(grid, T, seed, threads)
    flags = {"config": cfg, "T": T, "threads": threads, "out": args.out}
    summary = harness.write_study(args.out, rows, skipped, seed, flags, started)
    sys.stdout.write(_dumps({"out": args.out, "cells": summary["cells"],
                             "confirmed_failures": summary["confirmed_failures"]}) + "\n")
    return 0


# -- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmc-uq", description="Quasi-Monte Carlo point sets, brackets and intervals.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text, epilog=GUARANTEE_HELP[name])
        sp.set_defaults(func=func)
        return sp

    sp = add("points", cmd_points, "Generate an unrandomized point set as CSV.")
    sp.add_argument("--kind", choices=["sobol", "halton", "hammersley", "lattice"], required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--m", type=int, help="log2 of the number of points")
    sp.add_argument("--n", type=int, help="number of points")
    sp.add_argument("--z", type=int, nargs="+", help="lattice generating vector (default: Korobov search)")
    sp.add_argument("--out", help="output file (default stdout)")

    kinds = sorted(set(KINDS) | set(ALIASES) | {"iid"})
    sp = add("randomize", cmd_randomize, "Randomize a point-set CSV (file or stdin).")
    sp.add_argument("--in", dest="input", help="input CSV (default stdin)")
    sp.add_argument("--kind", choices=kinds, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--replicate", type=int, default=0)
    sp.add_argument("--out")

    sp = add("discrepancy", cmd_discrepancy, "Exact star discrepancy or NNLD / NPLD check of a point-set CSV.")
    sp.add_argument("--in", dest="input", help="input CSV (default stdin)")
    sp.add_argument("--check", choices=["star", "nnld", "npld"], default="star")
    sp.add_argument("--budget", type=int, default=discrepancy.DEFAULT_BUDGET)

    sp = add("certify", cmd_certify, "Guaranteed bracket for the integral of a fixture.")
    sp.add_argument("--integrand", required=True)
    sp.add_argument("--d", type=int, help="dimension (default 1 for one-dimensional methods)")
    sp.add_argument("--method", choices=["endpoint", "mid-trap", "simpson", "product-convex", "simplex",
                                         "completely-monotone"], required=True)
    sp.add_argument("--n", type=int, default=64)
    sp.add_argument("--m", type=int, help="boxes per axis (product-convex) or log2 points per 2-D factor")
    sp.add_argument("--no-verify", action="store_true", help="trust the NNLD / NPLD property")
    sp.add_argument("--param", action="append", help="fixture parameter key=value (repeatable)")

    sp = add("estimate", cmd_estimate, "Replicated RQMC estimate with confidence intervals.")
    sp.add_argument("--integrand", required=True)
    sp.add_argument("--d", type=int)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--R", type=int, required=True)
    sp.add_argument("--randomizer", choices=kinds, required=True)
    sp.add_argument("--points", choices=["auto", "sobol", "lattice"], default="auto")
    sp.add_argument("--ci", default="student", help=f"comma-separated subset of {','.join(CI_METHODS)}")
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--B", type=int, default=uq.DEFAULT_B, help="bootstrap resamples")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--param", action="append")
    sp.add_argument("--out")

    sp = add("integrands", cmd_integrands, "List fixture integrands with properties and exact means.")
    sp.add_argument("--list", action="store_true", help="print the table (default action)")
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--json", action="store_true")

    sp = add("coverage", cmd_coverage, "Coverage study over a grid described by a TOML or JSON config.")
    sp.add_argument("--config")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--T", type=int, help="trials per cell (default 1000)")
    sp.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.time()
    try:
        return args.func(args, started)
    except (PreconditionError, BudgetExceededError) as exc:
        print(f"qmc-uq {args.command}: precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (UsageError, QmcUqError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"qmc-uq {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
